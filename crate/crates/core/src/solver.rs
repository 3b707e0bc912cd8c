//! First-order IMEX finite-volume scheme for
//!
//! ```text
//! u_t = Δu - χ ∇·((u/v) ∇v),   v_t = Δv - v + u,   zero flux on the walls.
//! ```
//!
//! Each step first solves `((1+dt) I - dt Δ) v' = v + dt u`, then
//! `(I - dt Δ) u' = u - dt ∇·J` with the chemotactic face flux
//! `J = χ ū (∂v') / v̂` built from the arithmetic mean `ū` of `u` and the
//! harmonic mean `v̂` of `v'`. Boundary fluxes vanish, so `Σu` is preserved up
//! to the linear-solver tolerance; the constant mode of each implicit solve is
//! then set exactly, which removes that residual as well.

use crate::admissibility::AdmissibilityParams;
use crate::error::{Error, Result};
use crate::field::{Grid, Manufactured, ScalarField};
use crate::functionals::{record, FunctionalRecord};
use crate::linsolve::ShiftedLaplacian;

pub use crate::quadrature::{eta_lower_bound, EtaInputs};

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: ScalarField,
    pub v: ScalarField,
    pub t: f64,
}

impl State {
    pub fn new(u: ScalarField, v: ScalarField, t: f64) -> Result<Self> {
        u.check_same_grid(&v)?;
        if u.min() < 0.0 {
            return Err(Error::Positivity {
                field: "u",
                min: u.min(),
            });
        }
        v.require_positive("v")?;
        Ok(Self { u, v, t })
    }

    /// `u = v = c`, a steady state of the system.
    pub fn homogeneous(grid: Grid, c: f64) -> Self {
        Self {
            u: ScalarField::constant(grid, c),
            v: ScalarField::constant(grid, c),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn mass(&self) -> f64 {
        crate::field::integrate(&self.u)
    }
}

/// Spatial profile added on top of a constant level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Flat,
    Shape(Manufactured),
}

impl Profile {
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        match s {
            "flat" => Ok(Profile::Flat),
            other => Ok(Profile::Shape(Manufactured::parse(other, seed)?)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Profile::Flat => "flat",
            Profile::Shape(m) => m.name(),
        }
    }

    /// Zero-based profile: `cos·cos` in `[-1, 1]`, the bump in `(0, 1]`,
    /// random modes in `[-1, 1]`.
    pub fn sample(&self, grid: Grid) -> ScalarField {
        match self {
            Profile::Flat => ScalarField::constant(grid, 0.0),
            Profile::Shape(m) => {
                let base = match m {
                    Manufactured::GaussBump => 1.0,
                    _ => 2.0,
                };
                m.sample(grid).map(|w| w - base)
            }
        }
    }
}

/// `u0 ∝ 1 + A_u p_u` scaled to total mass `mass`; `v0 = v_base + A_v p_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialData {
    pub mass: f64,
    pub u_profile: Profile,
    pub u_amplitude: f64,
    pub v_base: f64,
    pub v_profile: Profile,
    pub v_amplitude: f64,
}

impl Default for InitialData {
    fn default() -> Self {
        Self {
            mass: 1.0,
            u_profile: Profile::Shape(Manufactured::GaussBump),
            u_amplitude: 1.0,
            v_base: 1.0,
            v_profile: Profile::Shape(Manufactured::GaussBump),
            v_amplitude: 0.5,
        }
    }
}

impl InitialData {
    pub fn homogeneous(level: f64, area: f64) -> Self {
        Self {
            mass: level * area,
            u_profile: Profile::Flat,
            u_amplitude: 0.0,
            v_base: level,
            v_profile: Profile::Flat,
            v_amplitude: 0.0,
        }
    }

    pub fn build(&self, grid: Grid) -> Result<State> {
        if !(self.mass >= 0.0) {
            return Err(Error::Domain(format!("mass must be >= 0, got {}", self.mass)));
        }
        let shape_u = self
            .u_profile
            .sample(grid)
            .map(|p| 1.0 + self.u_amplitude * p);
        if shape_u.min() <= 0.0 {
            return Err(Error::Domain(format!(
                "u amplitude {} makes the initial density nonpositive",
                self.u_amplitude
            )));
        }
        let scale = self.mass / crate::field::integrate(&shape_u);
        let u = shape_u.map(|s| scale * s);
        let v = self
            .v_profile
            .sample(grid)
            .map(|p| self.v_base + self.v_amplitude * p);
        State::new(u, v, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: Grid,
    pub dt: f64,
    pub t_end: f64,
    pub chi: f64,
    pub init: InitialData,
    /// Abort threshold for `min v`.
    pub v_floor: f64,
    /// Steps between recorded samples.
    pub record_every: usize,
    pub linsolve_tol: f64,
    pub max_linsolve_iter: usize,
    /// Upwind instead of arithmetic-mean face values of `u` in the chemotactic flux.
    pub upwind: bool,
    /// Weights `(a, b)` of the monitored functional.
    pub a: f64,
    pub b: f64,
    /// Stability re-check interval, in steps.
    pub stability_check_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid: Grid::unit(64).expect("valid grid"),
            dt: 1e-3,
            t_end: 1.0,
            chi: 1.0,
            init: InitialData::default(),
            v_floor: 1e-8,
            record_every: 10,
            linsolve_tol: 1e-10,
            max_linsolve_iter: 10_000,
            upwind: false,
            a: 0.49,
            b: 0.001,
            stability_check_every: 100,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Error::Config {
            key: key.to_string(),
            msg,
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(bad("t_end", format!("must be >= dt, got {}", self.t_end)));
        }
        if !(self.chi >= 0.0 && self.chi.is_finite()) {
            return Err(bad("chi", format!("must be >= 0, got {}", self.chi)));
        }
        if !(self.v_floor > 0.0) {
            return Err(bad("v_floor", format!("must be > 0, got {}", self.v_floor)));
        }
        if self.record_every == 0 {
            return Err(bad("record_every", "must be >= 1".into()));
        }
        if !(self.linsolve_tol > 0.0) {
            return Err(bad(
                "linsolve_tol",
                format!("must be > 0, got {}", self.linsolve_tol),
            ));
        }
        if !(self.a > 0.0) || !(self.b >= 0.0) {
            return Err(bad("a", format!("need a > 0, b >= 0, got ({}, {})", self.a, self.b)));
        }
        Ok(())
    }

    /// Parameters used for the functional records; `c0` and `delta` are unused there.
    pub fn weights(&self) -> AdmissibilityParams {
        AdmissibilityParams::new(self.a, self.b, self.chi.max(f64::MIN_POSITIVE))
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Largest stable step for the explicit chemotactic transport:
/// `min(h_min / V, 2 / V²)` with `V = χ max |∂v| / v̂` over interior faces.
/// With implicit diffusion, von Neumann analysis of the frozen-coefficient
/// scheme gives `dt V² ≤ 2`; the CFL term caps the transport per step at one cell.
pub fn stable_dt(v: &ScalarField, chi: f64) -> f64 {
    let g = *v.grid();
    let (hx, hy) = (g.hx(), g.hy());
    let vals = v.values();
    let mut vmax = 0.0f64;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            if i + 1 < g.nx {
                let (a, b) = (vals[k], vals[k + 1]);
                vmax = vmax.max(((b - a) / hx).abs() * (a + b) / (2.0 * a * b));
            }
            if j + 1 < g.ny {
                let (a, b) = (vals[k], vals[k + g.nx]);
                vmax = vmax.max(((b - a) / hy).abs() * (a + b) / (2.0 * a * b));
            }
        }
    }
    let speed = chi * vmax;
    if speed == 0.0 {
        return f64::INFINITY;
    }
    (hx.min(hy) / speed).min(2.0 / (speed * speed))
}

/// `∇·J` for the chemotactic face flux `J = χ u_f ∂v / v̂`.
pub fn chemotactic_divergence(u: &[f64], v: &[f64], grid: &Grid, chi: f64, upwind: bool) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut div = vec![0.0; grid.len()];
    let face_flux = |ul: f64, ur: f64, vl: f64, vr: f64, h: f64| {
        let vel = chi * (vr - vl) / h * (vl + vr) / (2.0 * vl * vr);
        let uf = if upwind {
            if vel > 0.0 {
                ul
            } else {
                ur
            }
        } else {
            0.5 * (ul + ur)
        };
        uf * vel
    };
    for j in 0..ny {
        for i in 1..nx {
            let (l, r) = (j * nx + i - 1, j * nx + i);
            let f = face_flux(u[l], u[r], v[l], v[r], hx) / hx;
            div[l] += f;
            div[r] -= f;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (l, r) = ((j - 1) * nx + i, j * nx + i);
            let f = face_flux(u[l], u[r], v[l], v[r], hy) / hy;
            div[l] += f;
            div[r] -= f;
        }
    }
    div
}

/// Sets the mean of `x` so that `Σx = target`.
fn fix_total(x: &mut [f64], target: f64) {
    let shift = (target - x.iter().sum::<f64>()) / x.len() as f64;
    x.iter_mut().for_each(|v| *v += shift);
}

fn advance(state: &State, cfg: &SimConfig, dt: f64) -> Result<State> {
    let grid = *state.grid();
    let u = state.u.values();
    let v = state.v.values();

    let v_op = ShiftedLaplacian {
        grid,
        alpha: 1.0 + dt,
        beta: dt,
    };
    let v_rhs: Vec<f64> = v.iter().zip(u).map(|(&vi, &ui)| vi + dt * ui).collect();
    let mut v_new = v.to_vec();
    v_op.solve(&v_rhs, &mut v_new, cfg.linsolve_tol, cfg.max_linsolve_iter)?;
    fix_total(&mut v_new, v_rhs.iter().sum::<f64>() / (1.0 + dt));
    let min_v = v_new.iter().copied().fold(f64::INFINITY, f64::min);
    let t_new = state.t + dt;
    if !(min_v >= cfg.v_floor) {
        return Err(Error::VFloor {
            t: t_new,
            min_v,
            floor: cfg.v_floor,
        });
    }

    let div = chemotactic_divergence(u, &v_new, &grid, cfg.chi, cfg.upwind);
    let u_rhs: Vec<f64> = u.iter().zip(&div).map(|(&ui, &d)| ui - dt * d).collect();
    let u_op = ShiftedLaplacian {
        grid,
        alpha: 1.0,
        beta: dt,
    };
    let mut u_new = u.to_vec();
    u_op.solve(&u_rhs, &mut u_new, cfg.linsolve_tol, cfg.max_linsolve_iter)?;
    fix_total(&mut u_new, u_rhs.iter().sum());
    if u_new.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite density at t={t_new}")));
    }

    Ok(State {
        u: ScalarField::from_vec_unchecked(grid, u_new),
        v: ScalarField::from_vec_unchecked(grid, v_new),
        t: t_new,
    })
}

/// One IMEX step of size `cfg.dt`.
pub fn step(state: &State, cfg: &SimConfig) -> Result<State> {
    advance(state, cfg, cfg.dt)
}

/// Stepper that keeps the state and the effective step size. When the
/// stability bound drops below the current step, the step is halved.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    state: State,
    substeps: usize,
    steps_taken: usize,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let state = cfg.init.build(cfg.grid)?;
        Self::from_state(cfg, state)
    }

    pub fn from_state(cfg: SimConfig, state: State) -> Result<Self> {
        cfg.validate()?;
        if *state.grid() != cfg.grid {
            return Err(Error::GridMismatch("state and config grids differ".into()));
        }
        let mut sim = Self {
            cfg,
            state,
            substeps: 1,
            steps_taken: 0,
        };
        sim.enforce_stability();
        Ok(sim)
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Current effective step.
    pub fn dt(&self) -> f64 {
        self.cfg.dt / self.substeps as f64
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    fn enforce_stability(&mut self) {
        let limit = stable_dt(&self.state.v, self.cfg.chi);
        while self.dt() > limit {
            self.substeps *= 2;
            log::warn!(
                "t={}: chemotactic stability bound {limit:e} below dt; halving to {:e}",
                self.state.t,
                self.dt()
            );
        }
    }

    /// Advances by one nominal step `cfg.dt` (possibly as several substeps).
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt();
        let mut s = self.state.clone();
        for _ in 0..self.substeps {
            s = advance(&s, &self.cfg, dt)?;
        }
        self.steps_taken += 1;
        s.t = self.steps_taken as f64 * self.cfg.dt;
        self.state = s;
        if self.steps_taken.is_multiple_of(self.cfg.stability_check_every.max(1)) {
            self.enforce_stability();
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub series: Vec<FunctionalRecord>,
    pub final_state: State,
    /// Set when the run stopped early; `series` and `final_state` then hold
    /// everything up to the last successful step.
    pub aborted: Option<Error>,
}

/// Runs to `t_end`, recording at `t = 0`, every `record_every` steps and at the end.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    let sim = Simulation::new(cfg.clone())?;
    run_from(sim)
}

pub fn run_from(sim: Simulation) -> Result<RunOutput> {
    run_observed(sim, |_, _| Ok(()))
}

/// Like [`run_from`], calling `observe(step, state)` on the initial state and
/// after every step. An observer error aborts the run.
pub fn run_observed(
    mut sim: Simulation,
    mut observe: impl FnMut(usize, &State) -> Result<()>,
) -> Result<RunOutput> {
    let cfg = sim.config().clone();
    let weights = cfg.weights();
    let n = cfg.steps();
    let mut series = vec![record(sim.state(), &weights)?];
    observe(0, sim.state())?;
    let mut aborted = None;
    for k in 1..=n {
        if let Err(e) = sim.step().and_then(|_| observe(k, sim.state())) {
            log::error!("run aborted at step {k}: {e}");
            aborted = Some(e);
            break;
        }
        if k % cfg.record_every == 0 || k == n {
            match record(sim.state(), &weights) {
                Ok(r) => series.push(r),
                Err(e) => {
                    aborted = Some(e);
                    break;
                }
            }
        }
    }
    Ok(RunOutput {
        series,
        final_state: sim.state().clone(),
        aborted,
    })
}

/// `min v ≥ η (1 - 10⁻²)` at every sample.
pub fn check_v_floor(series: &[FunctionalRecord], eta: f64) -> bool {
    const SLACK: f64 = 1e-2;
    series.iter().all(|r| r.min_v >= eta * (1.0 - SLACK))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::integrate;
    use proptest::prelude::*;

    fn small_cfg(n: usize) -> SimConfig {
        SimConfig {
            grid: Grid::unit(n).unwrap(),
            dt: 1e-3,
            t_end: 0.05,
            chi: 1.0,
            record_every: 5,
            ..SimConfig::default()
        }
    }

    #[test]
    fn homogeneous_state_is_fixed() {
        let cfg = small_cfg(16);
        let s0 = State::homogeneous(cfg.grid, 1.0);
        let s1 = step(&s0, &cfg).unwrap();
        assert!(s1.u.max_abs_diff(&s0.u) < 1e-12);
        assert!(s1.v.max_abs_diff(&s0.v) < 1e-12);
        assert!((s1.t - cfg.dt).abs() < 1e-15);
    }

    #[test]
    fn pure_decay_without_cells() {
        let cfg = SimConfig {
            linsolve_tol: 1e-14,
            ..small_cfg(8)
        };
        let s0 = State::new(
            ScalarField::constant(cfg.grid, 0.0),
            ScalarField::constant(cfg.grid, 1.0),
            0.0,
        )
        .unwrap();
        let mut s = s0;
        for _ in 0..10 {
            s = step(&s, &cfg).unwrap();
        }
        let expect = (1.0 + cfg.dt).powi(-10);
        assert!(s.u.values().iter().all(|&x| x == 0.0));
        assert!(s.v.values().iter().all(|&x| (x - expect).abs() < 1e-12));
        assert!((expect - (-0.01f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn one_step_conserves_mass() {
        let cfg = SimConfig {
            dt: 1e-4,
            ..small_cfg(64)
        };
        let s0 = cfg.init.build(cfg.grid).unwrap();
        let m0 = integrate(&s0.u);
        let s1 = step(&s0, &cfg).unwrap();
        assert!(((integrate(&s1.u) - m0) / m0).abs() <= 1e-10);
    }

    #[test]
    fn v_floor_abort_is_reported() {
        let cfg = SimConfig {
            v_floor: 0.9995,
            ..small_cfg(8)
        };
        let s0 = State::new(
            ScalarField::constant(cfg.grid, 0.0),
            ScalarField::constant(cfg.grid, 1.0),
            0.0,
        )
        .unwrap();
        assert!(matches!(step(&s0, &cfg), Err(Error::VFloor { .. })));

        let out = run_from(Simulation::from_state(cfg, s0).unwrap()).unwrap();
        assert!(matches!(out.aborted, Some(Error::VFloor { .. })));
        assert_eq!(out.series.len(), 1);
    }

    #[test]
    fn run_records_endpoints() {
        let cfg = SimConfig {
            t_end: 0.012,
            record_every: 5,
            ..small_cfg(8)
        };
        let out = run(&cfg).unwrap();
        assert!(out.aborted.is_none());
        let ts: Vec<f64> = out.series.iter().map(|r| r.t).collect();
        assert_eq!(ts.len(), 4);
        assert_eq!(ts[0], 0.0);
        assert!((ts[3] - 0.012).abs() < 1e-15);
    }

    #[test]
    fn stability_halving_keeps_time_grid() {
        let cfg = SimConfig {
            dt: 0.05,
            t_end: 0.1,
            chi: 5.0,
            record_every: 1,
            ..small_cfg(32)
        };
        let sim = Simulation::new(cfg).unwrap();
        assert!(sim.dt() < 0.05);
        let out = run_from(sim).unwrap();
        assert!(out.aborted.is_none());
        assert!((out.final_state.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn initial_data_mass_and_positivity() {
        let g = Grid::unit(32).unwrap();
        let s = InitialData::default().build(g).unwrap();
        assert!((integrate(&s.u) - 1.0).abs() < 1e-13);
        assert!(s.v.min() > 0.0);
        let bad = InitialData {
            u_profile: Profile::Shape(Manufactured::ConstPlusCos),
            u_amplitude: 1.5,
            ..InitialData::default()
        };
        assert!(bad.build(g).is_err());
    }

    #[test]
    fn upwind_option_conserves() {
        let cfg = SimConfig {
            upwind: true,
            t_end: 0.01,
            ..small_cfg(16)
        };
        let out = run(&cfg).unwrap();
        let m0 = out.series[0].mass;
        assert!(out.series.iter().all(|r| ((r.mass - m0) / m0).abs() < 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn mass_conserved_and_v_positive(seed in 0u64..1000, amp in 0.0f64..0.9, chi in 0.0f64..1.5) {
            let cfg = SimConfig {
                chi,
                t_end: 5e-3,
                record_every: 1,
                init: InitialData {
                    u_profile: Profile::Shape(Manufactured::RandomPositive { seed }),
                    u_amplitude: amp,
                    ..InitialData::default()
                },
                ..small_cfg(16)
            };
            let out = run(&cfg).unwrap();
            prop_assert!(out.aborted.is_none());
            let m0 = out.series[0].mass;
            for r in &out.series {
                prop_assert!(((r.mass - m0) / m0).abs() <= 1e-10);
                prop_assert!(r.min_v > 0.0);
            }
        }

        #[test]
        fn constants_are_fixed_points(c in 0.01f64..10.0, chi in 0.0f64..3.0) {
            let cfg = SimConfig { chi, ..small_cfg(8) };
            let s0 = State::homogeneous(cfg.grid, c);
            let s1 = step(&s0, &cfg).unwrap();
            prop_assert!(s1.u.max_abs_diff(&s0.u) <= 1e-12 * c);
            prop_assert!(s1.v.max_abs_diff(&s0.v) <= 1e-12 * c);
        }
    }

    #[test]
    fn v_floor_check() {
        let cfg = small_cfg(8);
        let out = run(&SimConfig {
            init: InitialData::homogeneous(1.0, 1.0),
            t_end: 0.01,
            ..cfg
        })
        .unwrap();
        assert!(check_v_floor(&out.series, 0.3));
        assert!(check_v_floor(&out.series, 0.0));
        assert!(!check_v_floor(&out.series, 2.0));
    }
}
