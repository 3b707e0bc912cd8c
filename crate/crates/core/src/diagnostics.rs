//! Checks of the energy identities and inequalities along simulated
//! trajectories, either on saved state triples or on recorded series.

use serde::Serialize;

use crate::admissibility::{dissipation_premise, phi_delta, premise_margin, AdmissibilityParams, C0_DEFAULT};
use crate::error::{Error, Result};
use crate::field::{CellDerivatives, Grid};
use crate::functionals::{jensen_lower_bound, running_max_v_pow, FunctionalRecord, IdentityReport};
use crate::solver::State;

/// Relative tolerance on equal sample spacing.
const SPACING_TOL: f64 = 1e-9;

fn uniform_step(t: &[f64]) -> Result<f64> {
    if t.len() < 2 {
        return Err(Error::Precondition("need at least two samples".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::NonUniformSpacing("times are not increasing".into()));
    }
    for w in t.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > SPACING_TOL * dt.max(w[1].abs()) {
            return Err(Error::NonUniformSpacing(format!(
                "step {} between t={} and t={}, expected {dt}",
                w[1] - w[0],
                w[0],
                w[1]
            )));
        }
    }
    Ok(dt)
}

fn triple_step(states: &[State; 3]) -> Result<f64> {
    for s in &states[1..] {
        states[0].u.check_same_grid(&s.u)?;
        states[0].u.check_same_grid(&s.v)?;
    }
    uniform_step(&[states[0].t, states[1].t, states[2].t])
}

fn energy_a0(s: &State, a: f64) -> Result<f64> {
    s.v.require_positive("v")?;
    let mut acc = 0.0;
    for (&u, &v) in s.u.values().iter().zip(s.v.values()) {
        if u < 0.0 {
            return Err(Error::Positivity { field: "u", min: u });
        }
        if u > 0.0 {
            acc += u * (u.ln() - a * v.ln());
        }
    }
    Ok(acc * s.grid().cell_area())
}

/// Visits each interior face once with `(left, right, h)`.
fn for_each_face(g: &Grid, mut f: impl FnMut(usize, usize, f64)) {
    let (hx, hy) = (g.hx(), g.hy());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            if i + 1 < g.nx {
                f(k, k + 1, hx);
            }
            if j + 1 < g.ny {
                f(k, k + g.nx, hy);
            }
        }
    }
}

/// Rate of `F_{a,0}` along the semi-discrete flow of the scheme:
///
/// ```text
/// -Σ D ln u · D u + χ Σ D ln u · (ū/v̂) D v + a Σ D ln v · D u
///   - aχ Σ D ln v · (ū/v̂) D v + a Σ D(u/v) · D v + a∫u - a∫u²/v
/// ```
///
/// with face differences `D` and face sums weighted by the cell area. It is
/// the continuous right-hand side written on the scheme's own faces, so the
/// centered difference of a computed trajectory matches it up to `O(dt)`.
pub fn energy_rate_a0(s: &State, chi: f64, a: f64) -> Result<f64> {
    let (u, v) = (s.u.values(), s.v.values());
    s.v.require_positive("v")?;
    if u.iter().all(|&x| x == 0.0) {
        return Err(Error::Precondition("u vanishes identically; F is undefined".into()));
    }
    s.u.require_positive("u")?;
    let g = *s.grid();
    let mut faces = 0.0;
    for_each_face(&g, |l, r, h| {
        let du = (u[r] - u[l]) / h;
        let dv = (v[r] - v[l]) / h;
        let dlnu = (u[r].ln() - u[l].ln()) / h;
        let dlnv = (v[r].ln() - v[l].ln()) / h;
        let drift = chi * 0.5 * (u[l] + u[r]) * dv * (v[l] + v[r]) / (2.0 * v[l] * v[r]);
        let duv = (u[r] / v[r] - u[l] / v[l]) / h;
        faces += -dlnu * du + dlnu * drift + a * dlnv * du - a * dlnv * drift + a * duv * dv;
    });
    let reaction: f64 = u.iter().zip(v).map(|(&ui, &vi)| ui - ui * ui / vi).sum();
    Ok((faces + a * reaction) * g.cell_area())
}

/// Centered difference of `F_{a,0}` over three consecutive states against
/// its rate at the middle state.
pub fn check_ddt_identity(states: &[State; 3], p: &AdmissibilityParams) -> Result<IdentityReport> {
    let dt = triple_step(states)?;
    let rhs = energy_rate_a0(&states[1], p.chi, p.a)?;
    let lhs = (energy_a0(&states[2], p.a)? - energy_a0(&states[0], p.a)?) / (2.0 * dt);
    Ok(IdentityReport::new("ddt_f_a0", states[1].grid().h(), lhs, rhs))
}

fn grad_sqrt_v_sq(s: &State) -> f64 {
    let d = CellDerivatives::of(&s.v);
    let g = s.grid();
    let sum: f64 = (0..g.len()).map(|k| d.grad_sq(k) / s.v.values()[k]).sum();
    0.25 * sum * g.cell_area()
}

/// `-2c₀∫|∇v|⁴/v³ - ∫|∇v|²/v + 2∫∇u·∇v/v - ∫|∇v|²u/v² ≥ 4 d/dt ∫|∇√v|²`
/// with the default `c₀`; `residual` is the slack.
pub fn check_sqrtv_inequality(states: &[State; 3]) -> Result<IdentityReport> {
    check_sqrtv_inequality_with(states, C0_DEFAULT)
}

pub fn check_sqrtv_inequality_with(states: &[State; 3], c0: f64) -> Result<IdentityReport> {
    let dt = triple_step(states)?;
    for s in states {
        s.v.require_positive("v")?;
    }
    let mid = &states[1];
    let g = *mid.grid();
    let du = CellDerivatives::of(&mid.u);
    let dv = CellDerivatives::of(&mid.v);
    let mut acc = 0.0;
    for k in 0..g.len() {
        let (u, v) = (mid.u.values()[k], mid.v.values()[k]);
        let gv2 = dv.grad_sq(k);
        let gugv = du.dx[k] * dv.dx[k] + du.dy[k] * dv.dy[k];
        acc += -2.0 * c0 * gv2 * gv2 / (v * v * v) - gv2 / v + 2.0 * gugv / v - gv2 * u / (v * v);
    }
    let rhs_paper = acc * g.cell_area();
    let ddt = 4.0 * (grad_sqrt_v_sq(&states[2]) - grad_sqrt_v_sq(&states[0])) / (2.0 * dt);
    Ok(IdentityReport::new("sqrt_v_inequality", g.h(), rhs_paper, ddt))
}

/// Settings of [`check_dissipation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationConfig {
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub kappa_points: usize,
    /// `c = (1 + c_margin) a m`.
    pub c_margin: f64,
    /// Fixed `δ`; by default half of the largest `δ` satisfying the premise.
    pub delta: Option<f64>,
    pub tol: f64,
}

impl Default for DissipationConfig {
    fn default() -> Self {
        Self {
            kappa_min: 1e-3,
            kappa_max: 10.0,
            kappa_points: 41,
            c_margin: 0.1,
            delta: None,
            tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipationVerdict {
    pub kappa: f64,
    pub delta: f64,
    pub c: f64,
    /// Largest `dF/dt + κF + δ∫|∇u|²/u - c` over the sampled intervals.
    pub max_violation: f64,
    pub n_samples: usize,
    pub pass: bool,
    /// Start time of the interval attaining `max_violation`.
    pub worst_t: f64,
}

fn kappa_grid(cfg: &DissipationConfig) -> Result<Vec<f64>> {
    if !(cfg.kappa_min > 0.0 && cfg.kappa_max >= cfg.kappa_min) || cfg.kappa_points == 0 {
        return Err(Error::Domain(format!("bad kappa grid {cfg:?}")));
    }
    let n = cfg.kappa_points;
    let (lo, hi) = (cfg.kappa_min.ln(), cfg.kappa_max.ln());
    Ok((0..n)
        .map(|i| {
            if n == 1 {
                cfg.kappa_min
            } else {
                (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

/// `dF_{a,b}/dt + κF_{a,b} + δ∫|∇u|²/u ≤ c` on a recorded series, with
/// forward differences and trapezoidal averages on each interval. Returns the
/// `κ` of the grid with the smallest worst-case violation.
pub fn check_dissipation(
    series: &[FunctionalRecord],
    p: &AdmissibilityParams,
    cfg: &DissipationConfig,
) -> Result<DissipationVerdict> {
    p.validate()?;
    let delta = match cfg.delta {
        Some(d) => d,
        None => premise_margin(p, 1e-12)?.map_or(0.0, |d| 0.5 * d),
    };
    let pd = p.with_delta(delta);
    if !dissipation_premise(&pd)? {
        return Err(Error::Precondition(format!(
            "phi_delta(a={}, b={}; chi={}, delta={delta}) = {:e} is not negative",
            p.a,
            p.b,
            p.chi,
            phi_delta(&pd)?
        )));
    }
    if series.len() < 2 {
        return Err(Error::Precondition("need at least two samples".into()));
    }
    let m = series[0].mass;
    let c = (1.0 + cfg.c_margin) * p.a * m;

    let intervals: Vec<(f64, f64, f64, f64)> = series
        .windows(2)
        .map(|w| {
            let (f0, f1) = (w[0].energy(p.a, p.b), w[1].energy(p.a, p.b));
            let dt = w[1].t - w[0].t;
            let g = 0.5 * (w[0].int_gradu_sq_over_u + w[1].int_gradu_sq_over_u);
            ((f1 - f0) / dt, 0.5 * (f0 + f1), g, w[0].t)
        })
        .collect();
    if intervals.iter().any(|iv| !iv.0.is_finite()) {
        return Err(Error::NonUniformSpacing("repeated or unordered sample times".into()));
    }

    let mut best: Option<DissipationVerdict> = None;
    for kappa in kappa_grid(cfg)? {
        let (worst, worst_t) = intervals
            .iter()
            .map(|&(df, f, g, t)| (df + kappa * f + delta * g - c, t))
            .fold((f64::NEG_INFINITY, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc });
        if best.is_none_or(|b| worst < b.max_violation) {
            best = Some(DissipationVerdict {
                kappa,
                delta,
                c,
                max_violation: worst,
                n_samples: intervals.len(),
                pass: worst <= cfg.tol,
                worst_t,
            });
        }
    }
    let verdict = best.expect("nonempty kappa grid");
    if !verdict.pass {
        let r = series
            .iter()
            .find(|r| r.t == verdict.worst_t)
            .expect("worst_t is a sample time");
        log::warn!("dissipation inequality violated by {:e} at {r:?}", verdict.max_violation);
    }
    Ok(verdict)
}

/// Result of [`check_lower_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundCheck {
    pub n_samples: usize,
    pub violations: usize,
    /// Smallest `F_{a,b} - (½∫u ln u - γ)` over the series.
    pub min_slack: f64,
    /// `γ` built from the largest `∫v^{2a}` of the series.
    pub gamma: f64,
    /// `max ∫u ln u ≤ 2 (max F_{a,b} + γ)`.
    pub transfer_holds: bool,
}

/// `F_{a,b} ≥ ½∫u ln u - γ` at every sample, with `γ` from the running
/// maximum of `∫v^{2a}`, plus the resulting bound on `max ∫u ln u`.
/// The series must have been recorded with exponent `2a` for this `a`.
pub fn check_lower_bound(series: &[FunctionalRecord], p: &AdmissibilityParams) -> Result<LowerBoundCheck> {
    if series.is_empty() {
        return Err(Error::Precondition("empty series".into()));
    }
    let sup = running_max_v_pow(series);
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for (r, &c) in series.iter().zip(&sup) {
        let gamma = jensen_lower_bound(r, p, c)?;
        let f = r.energy(p.a, p.b);
        let slack = f - (0.5 * r.int_u_ln_u - gamma);
        let tol = 1e-12 * (1.0 + f.abs() + r.int_u_ln_u.abs() + gamma.abs());
        if slack < -tol {
            violations += 1;
        }
        min_slack = min_slack.min(slack);
    }
    let last = series.last().expect("nonempty");
    let gamma = jensen_lower_bound(last, p, *sup.last().expect("nonempty"))?;
    let max_f = series.iter().map(|r| r.energy(p.a, p.b)).fold(f64::NEG_INFINITY, f64::max);
    let max_uln = series.iter().map(|r| r.int_u_ln_u).fold(f64::NEG_INFINITY, f64::max);
    let transfer_holds =
        max_uln <= 2.0 * (max_f + gamma) + 1e-12 * (1.0 + max_uln.abs() + gamma.abs());
    Ok(LowerBoundCheck {
        n_samples: series.len(),
        violations,
        min_slack,
        gamma,
        transfer_holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeBound {
    /// Largest integral of `f` over a window of length `τ`.
    pub c: f64,
    /// `C (1 + 1/(1 - e^{-τ}))`.
    pub bound: f64,
}

/// Bound for `z' + z ≤ f`: `z(t) ≤ e^{-t} z₀ + C(1 + 1/(1 - e^{-τ}))` where
/// `C` is the largest trapezoidal integral of `f` over a window of length `τ`.
pub fn ode_comparison(t: &[f64], f: &[f64], tau: f64) -> Result<OdeBound> {
    if t.len() != f.len() {
        return Err(Error::Precondition("time and value series differ in length".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be > 0, got {tau}")));
    }
    let dt = uniform_step(t)?;
    let window = (tau / dt).round() as usize;
    if window == 0 || window > t.len() - 1 {
        return Err(Error::Precondition(format!(
            "window tau={tau} does not fit in a series of length {}",
            t[t.len() - 1] - t[0]
        )));
    }
    let c = (0..t.len() - window)
        .map(|k| {
            let inner: f64 = f[k + 1..k + window].iter().sum();
            dt * (0.5 * (f[k] + f[k + window]) + inner)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(OdeBound {
        c,
        bound: c * (1.0 + 1.0 / (1.0 - (-tau).exp())),
    })
}

/// [`ode_comparison`] applied to `z = ∫|∇v|²`, for which `z' + z ≤ ½∫u²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientBoundCheck {
    pub z0: f64,
    pub c: f64,
    pub bound: f64,
    pub max_measured: f64,
    pub holds: bool,
}

pub fn check_gradient_bound(series: &[FunctionalRecord], tau: f64) -> Result<GradientBoundCheck> {
    let t: Vec<f64> = series.iter().map(|r| r.t).collect();
    let f: Vec<f64> = series.iter().map(|r| 0.5 * r.int_u_sq).collect();
    let ob = ode_comparison(&t, &f, tau)?;
    let z0 = series[0].int_gradv_sq;
    let max_measured = series.iter().map(|r| r.int_gradv_sq).fold(f64::NEG_INFINITY, f64::max);
    Ok(GradientBoundCheck {
        z0,
        c: ob.c,
        bound: ob.bound,
        max_measured,
        holds: max_measured <= z0 + ob.bound,
    })
}

/// Largest sample time `τ` with `min v ≥ ½ min v(0)` at every sample up to
/// `τ`, or the first sample interval when that already fails.
pub fn estimate_tau(series: &[FunctionalRecord]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Precondition("need at least two samples".into()));
    }
    let half = 0.5 * series[0].min_v;
    let tau = series
        .iter()
        .take_while(|r| r.min_v >= half)
        .last()
        .map_or(0.0, |r| r.t - series[0].t);
    Ok(if tau > 0.0 { tau } else { series[1].t - series[0].t })
}

/// `|∫u(t) - ∫u(0)| / ∫u(0)` maximized over the series.
pub fn max_mass_drift(series: &[FunctionalRecord]) -> f64 {
    let m0 = series.first().map_or(0.0, |r| r.mass);
    series
        .iter()
        .map(|r| ((r.mass - m0) / m0).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use proptest::prelude::*;
    use crate::solver::{step, SimConfig};

    fn homogeneous_triple(n: usize, dt: f64) -> [State; 3] {
        let g = Grid::unit(n).unwrap();
        let mut s = [State::homogeneous(g, 1.0), State::homogeneous(g, 1.0), State::homogeneous(g, 1.0)];
        for (k, st) in s.iter_mut().enumerate() {
            st.t = k as f64 * dt;
        }
        s
    }

    #[test]
    fn ddt_identity_at_fixed_point() {
        let p = AdmissibilityParams::new(0.49, 0.001, 1.01);
        let r = check_ddt_identity(&homogeneous_triple(8, 1e-3), &p).unwrap();
        assert!(r.lhs.abs() < 1e-14 && r.rhs.abs() < 1e-14);
    }

    #[test]
    fn ddt_identity_rejects_zero_density() {
        let g = Grid::unit(8).unwrap();
        let s = |t| State::new(ScalarField::constant(g, 0.0), ScalarField::constant(g, 1.0), t).unwrap();
        let p = AdmissibilityParams::new(0.5, 0.0, 1.0);
        assert!(matches!(
            check_ddt_identity(&[s(0.0), s(0.1), s(0.2)], &p),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn nonuniform_triple_rejected() {
        let mut s = homogeneous_triple(8, 1e-3);
        s[2].t = 3e-3;
        let p = AdmissibilityParams::new(0.5, 0.0, 1.0);
        assert!(matches!(check_ddt_identity(&s, &p), Err(Error::NonUniformSpacing(_))));
        assert!(matches!(check_sqrtv_inequality(&s), Err(Error::NonUniformSpacing(_))));
    }

    #[test]
    fn sqrtv_inequality_at_fixed_point() {
        let r = check_sqrtv_inequality(&homogeneous_triple(8, 1e-3)).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
    }

    #[test]
    fn sqrtv_inequality_pure_diffusion() {
        let cfg = SimConfig {
            grid: Grid::unit(32).unwrap(),
            chi: 0.0,
            dt: 1e-4,
            ..SimConfig::default()
        };
        let g = cfg.grid;
        let v = crate::field::manufactured(crate::field::Manufactured::ConstPlusCos, g);
        let s0 = State::new(ScalarField::constant(g, 0.0), v, 0.0).unwrap();
        let s1 = step(&s0, &cfg).unwrap();
        let s2 = step(&s1, &cfg).unwrap();
        let r = check_sqrtv_inequality(&[s0, s1, s2]).unwrap();
        assert!(r.residual >= 0.0, "{r:?}");
    }

    #[test]
    fn ode_constant_forcing() {
        let t: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
        let k = 3.0;
        let ob = ode_comparison(&t, &vec![k; t.len()], 1.0).unwrap();
        assert!((ob.c - k).abs() < 1e-12);
        let expect = k * (1.0 + 1.0 / (1.0 - (-1.0f64).exp()));
        assert!((ob.bound - expect).abs() < 1e-12);

        let zero = ode_comparison(&t, &vec![0.0; t.len()], 1.0).unwrap();
        assert_eq!(zero.bound, 0.0);
    }

    #[test]
    fn ode_window_too_long() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        assert!(matches!(
            ode_comparison(&t, &vec![1.0; t.len()], 2.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn ode_window_picks_largest() {
        let t: Vec<f64> = (0..=4).map(|k| k as f64).collect();
        let ob = ode_comparison(&t, &[0.0, 0.0, 2.0, 0.0, 0.0], 2.0).unwrap();
        assert!((ob.c - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dissipation_infeasible_is_precondition() {
        let rec = crate::functionals::record(
            &State::homogeneous(Grid::unit(8).unwrap(), 1.0),
            &AdmissibilityParams::new(0.5, 0.0, 2.0),
        )
        .unwrap();
        let mut r2 = rec;
        r2.t = 0.1;
        let p = AdmissibilityParams::new(0.5, 0.0, 2.0);
        assert!(matches!(
            check_dissipation(&[rec, r2], &p, &DissipationConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn dissipation_at_fixed_point_passes() {
        let p = AdmissibilityParams::new(0.5, 0.0, 0.9);
        let s = State::homogeneous(Grid::unit(8).unwrap(), 1.0);
        let series: Vec<FunctionalRecord> = (0..5)
            .map(|k| {
                let mut r = crate::functionals::record(&s, &p).unwrap();
                r.t = k as f64 * 0.1;
                r
            })
            .collect();
        let v = check_dissipation(&series, &p, &DissipationConfig::default()).unwrap();
        assert!(v.pass);
        assert_eq!(v.n_samples, 4);
        assert!((v.c - 1.1 * 0.5).abs() < 1e-15);
        assert!(v.delta > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Jensen's inequality holds for any positive state, so the bound
        // can never fail on a record, whatever the data.
        #[test]
        fn lower_bound_never_violated(
            su in 0u64..500, sv in 0u64..500,
            au in 0.0f64..0.99, av in 0.0f64..0.99,
            mass in 0.01f64..50.0, a in 0.05f64..2.0, b in 0.0f64..2.0,
        ) {
            let g = Grid::unit(12).unwrap();
            let u = crate::field::manufactured(crate::field::Manufactured::RandomPositive { seed: su }, g)
                .map(|w| 1.0 + au * (w - 2.0));
            let scale = mass / crate::field::integrate(&u);
            let u = u.map(|x| x * scale);
            let v = crate::field::manufactured(crate::field::Manufactured::RandomPositive { seed: sv }, g)
                .map(|w| 1.0 + av * (w - 2.0));
            let p = AdmissibilityParams::new(a, b, 1.0);
            let r = crate::functionals::record(&State::new(u, v, 0.0).unwrap(), &p).unwrap();
            let chk = check_lower_bound(&[r], &p).unwrap();
            prop_assert_eq!(chk.violations, 0);
            prop_assert!(chk.transfer_holds);
        }
    }

    #[test]
    fn kappa_grid_endpoints() {
        let k = kappa_grid(&DissipationConfig::default()).unwrap();
        assert_eq!(k.len(), 41);
        assert!((k[0] - 1e-3).abs() < 1e-15);
        assert!((k[40] - 10.0).abs() < 1e-12);
    }
}
