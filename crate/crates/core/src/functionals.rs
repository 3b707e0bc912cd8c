//! Integral quantities of a discrete state, the weighted energy
//! `F_{a,b}(u,v) = ∫u ln u - a∫u ln v + b∫|∇√v|²`, and checks of the
//! Hessian identities and inequalities on Neumann test fields.
//!
//! All quadratures are midpoint sums of cell-centered integrands; derivatives
//! come from [`CellDerivatives`] (centered differences with mirror ghosts).

use serde::{Deserialize, Serialize};

use crate::admissibility::AdmissibilityParams;
use crate::error::{Error, Result};
use crate::field::{CellDerivatives, ScalarField};
use crate::solver::State;

/// Cells with `u` below this are rejected as a sign error rather than clamped.
pub const U_NEGATIVE_TOL: f64 = 1e-12;

/// One time sample of every monitored integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRecord {
    pub t: f64,
    pub mass: f64,
    pub f_ab: f64,
    pub int_u_ln_u: f64,
    pub int_u_ln_v: f64,
    /// `∫|∇√v|² = ¼∫|∇v|²/v`.
    pub int_grad_sqrt_v_sq: f64,
    pub int_gradu_sq_over_u: f64,
    pub int_u2_over_v: f64,
    pub int_gradv4_over_v3: f64,
    pub int_u_gradv2_over_v2: f64,
    pub int_gradv2_over_v: f64,
    pub int_gradu_gradv_over_v: f64,
    pub int_gradv_sq: f64,
    /// `∫v^{2a}` for the `a` the record was taken with.
    pub int_v_pow: f64,
    pub int_u_sq: f64,
    pub min_v: f64,
    pub min_u: f64,
    pub max_u: f64,
}

impl FunctionalRecord {
    /// `F_{a,b}` rebuilt from the stored components.
    pub fn energy(&self, a: f64, b: f64) -> f64 {
        self.int_u_ln_u - a * self.int_u_ln_v + b * self.int_grad_sqrt_v_sq
    }

    /// `F_{a,0}`.
    pub fn energy_a0(&self, a: f64) -> f64 {
        self.int_u_ln_u - a * self.int_u_ln_v
    }
}

#[inline]
fn x_ln_x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `g / u` with the limits used at cells where `u` vanishes.
#[inline]
fn over_u(g: f64, u: f64) -> f64 {
    if u > 0.0 {
        g / u
    } else if g == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Rejects `u < -U_NEGATIVE_TOL` and clamps the remaining round-off negatives.
pub(crate) fn clamp_density(u: &ScalarField) -> Result<ScalarField> {
    let min = u.min();
    if min < -U_NEGATIVE_TOL {
        return Err(Error::Positivity { field: "u", min });
    }
    Ok(u.map(|x| x.max(0.0)))
}

/// Evaluates every integral of [`FunctionalRecord`] on `state`.
pub fn record(state: &State, p: &AdmissibilityParams) -> Result<FunctionalRecord> {
    let u = clamp_density(&state.u)?;
    state.v.require_positive("v")?;
    u.check_same_grid(&state.v)?;
    let v = &state.v;
    let g = *u.grid();
    let du = CellDerivatives::of(&u);
    let dv = CellDerivatives::of(v);

    let mut acc = [0.0f64; 12];
    for k in 0..g.len() {
        let (uk, vk) = (u.values()[k], v.values()[k]);
        let gu2 = du.grad_sq(k);
        let gv2 = dv.grad_sq(k);
        let gugv = du.dx[k] * dv.dx[k] + du.dy[k] * dv.dy[k];
        acc[0] += uk;
        acc[1] += x_ln_x(uk);
        acc[2] += uk * vk.ln();
        acc[3] += gv2 / vk;
        acc[4] += over_u(gu2, uk);
        acc[5] += uk * uk / vk;
        acc[6] += gv2 * gv2 / (vk * vk * vk);
        acc[7] += uk * gv2 / (vk * vk);
        acc[8] += gugv / vk;
        acc[9] += gv2;
        acc[10] += vk.powf(2.0 * p.a);
        acc[11] += uk * uk;
    }
    let da = g.cell_area();
    let [mass, uln_u, uln_v, gv2_v, gu2_u, u2_v, gv4_v3, ugv2_v2, gugv_v, gv2, vpow, u2] =
        acc.map(|s| s * da);
    let int_grad_sqrt_v_sq = 0.25 * gv2_v;
    Ok(FunctionalRecord {
        t: state.t,
        mass,
        f_ab: uln_u - p.a * uln_v + p.b * int_grad_sqrt_v_sq,
        int_u_ln_u: uln_u,
        int_u_ln_v: uln_v,
        int_grad_sqrt_v_sq,
        int_gradu_sq_over_u: gu2_u,
        int_u2_over_v: u2_v,
        int_gradv4_over_v3: gv4_v3,
        int_u_gradv2_over_v2: ugv2_v2,
        int_gradv2_over_v: gv2_v,
        int_gradu_gradv_over_v: gugv_v,
        int_gradv_sq: gv2,
        int_v_pow: vpow,
        int_u_sq: u2,
        min_v: v.min(),
        min_u: u.min(),
        max_u: u.max(),
    })
}

/// Two sides of an identity, or of an inequality written as `lhs ≥ rhs`
/// (then `residual` is the slack and should be nonnegative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    #[serde(rename = "h")]
    pub grid_h: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl IdentityReport {
    pub fn new(name: impl Into<String>, grid_h: f64, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            grid_h,
            lhs,
            rhs,
            residual: lhs - rhs,
        }
    }
}

/// Cell-wise ingredients of the Hessian identities for a positive field.
struct HessianTerms {
    /// `∫ w |D² ln w|²`
    w_hess_log: f64,
    /// `∫ |D²w|² / w`
    hess_over_w: f64,
    /// `∫ |∇w|² Δw / w²`
    grad2_lap_over_w2: f64,
    /// `∫ |∇w|⁴ / w³`
    grad4_over_w3: f64,
    /// `∫ |Δw|² / w`
    lap2_over_w: f64,
}

fn hessian_terms(w: &ScalarField) -> Result<HessianTerms> {
    w.require_positive("w")?;
    let g = *w.grid();
    let d = CellDerivatives::of(w);
    let dl = CellDerivatives::of(&w.map(f64::ln));
    let mut t = [0.0f64; 5];
    for k in 0..g.len() {
        let wk = w.values()[k];
        let g2 = d.grad_sq(k);
        let lap = d.laplacian(k);
        t[0] += wk * dl.hessian_sq(k);
        t[1] += d.hessian_sq(k) / wk;
        t[2] += g2 * lap / (wk * wk);
        t[3] += g2 * g2 / (wk * wk * wk);
        t[4] += lap * lap / wk;
    }
    let da = g.cell_area();
    let [w_hess_log, hess_over_w, grad2_lap_over_w2, grad4_over_w3, lap2_over_w] =
        t.map(|s| s * da);
    Ok(HessianTerms {
        w_hess_log,
        hess_over_w,
        grad2_lap_over_w2,
        grad4_over_w3,
        lap2_over_w,
    })
}

/// `∫w|D² ln w|² = ∫|D²w|²/w + ∫|∇w|²Δw/w² - ∫|∇w|⁴/w³`.
pub fn check_pointwise_identity(w: &ScalarField) -> Result<IdentityReport> {
    let t = hessian_terms(w)?;
    Ok(IdentityReport::new(
        "pointwise_identity",
        w.grid().h(),
        t.w_hess_log,
        t.hess_over_w + t.grad2_lap_over_w2 - t.grad4_over_w3,
    ))
}

/// Result of [`check_laplace_identity`].
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceCheck {
    /// `-∫|Δw|²/w = -∫|D²w|²/w - 3/2 ∫|∇w|²Δw/w² + ∫|∇w|⁴/w³`, boundary term omitted.
    pub identity: IdentityReport,
    /// `-∫w|D² ln w|² - ½∫|∇w|²Δw/w² ≥ -∫|Δw|²/w`, written as `lhs ≥ rhs`.
    pub inequality: IdentityReport,
}

/// Laplacian identity and its convex-domain inequality.
///
/// The boundary integral `½∮(1/w)∂_ν|∇w|²` is omitted: on fields with
/// `∂_ν w ≡ 0` built from even reflections it vanishes identically.
/// The `|∇w|⁴/w³` coefficient is 1; it follows from combining the pointwise
/// identity with `-∫|Δw|²/w = -∫w|D² ln w|² - ½∫|∇w|²Δw/w² + ½∮…`.
pub fn check_laplace_identity(w: &ScalarField) -> Result<LaplaceCheck> {
    let t = hessian_terms(w)?;
    let h = w.grid().h();
    let identity = IdentityReport::new(
        "laplace_identity_no_boundary_term",
        h,
        -t.lap2_over_w,
        -t.hess_over_w - 1.5 * t.grad2_lap_over_w2 + t.grad4_over_w3,
    );
    let inequality = IdentityReport::new(
        "laplace_inequality_convex",
        h,
        -t.w_hess_log - 0.5 * t.grad2_lap_over_w2,
        -t.lap2_over_w,
    );
    Ok(LaplaceCheck {
        identity,
        inequality,
    })
}

/// `∫w|D² ln w|² ≥ c0 ∫|∇w|⁴/w³`; `residual` is the slack.
pub fn check_c0_inequality(w: &ScalarField, c0: f64) -> Result<IdentityReport> {
    let t = hessian_terms(w)?;
    Ok(IdentityReport::new(
        "c0_inequality",
        w.grid().h(),
        t.w_hess_log,
        c0 * t.grad4_over_w3,
    ))
}

/// `γ = -(m/2) ln m + (m/2) ln C_{2a}`, so that `F_{a,b} ≥ ½∫u ln u - γ`
/// whenever `C_{2a} ≥ ∫v^{2a}`.
pub fn jensen_lower_bound(
    rec: &FunctionalRecord,
    p: &AdmissibilityParams,
    sup_int_v2a: f64,
) -> Result<f64> {
    let m = rec.mass;
    if !(m > 0.0) {
        return Err(Error::Domain(format!("mass must be > 0, got {m}")));
    }
    if !(sup_int_v2a > 0.0) || sup_int_v2a < rec.int_v_pow * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "C_2a = {sup_int_v2a} must dominate the measured ∫v^(2a) = {} (a = {})",
            rec.int_v_pow, p.a
        )));
    }
    Ok(-0.5 * m * m.ln() + 0.5 * m * sup_int_v2a.ln())
}

/// Outcome of [`check_uln_domination`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominationCheck {
    pub holds: bool,
    /// `δ∫u²/v + c_δ - (∫u ln u - a∫u ln v)`.
    pub slack: f64,
}

/// `∫u ln u - a∫u ln v ≤ δ∫u²/v + c_δ` with a caller-supplied `c_δ`.
pub fn check_uln_domination(
    rec: &FunctionalRecord,
    a: f64,
    delta: f64,
    c_delta: f64,
) -> DominationCheck {
    let slack = delta * rec.int_u2_over_v + c_delta - rec.energy_a0(a);
    DominationCheck {
        holds: slack >= 0.0,
        slack,
    }
}

/// Smallest `c_δ` for which the domination bound holds at every sample.
pub fn minimal_c_delta(series: &[FunctionalRecord], a: f64, delta: f64) -> f64 {
    series
        .iter()
        .map(|r| r.energy_a0(a) - delta * r.int_u2_over_v)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest `∫v^{2a}` seen at or before each sample.
pub fn running_max_v_pow(series: &[FunctionalRecord]) -> Vec<f64> {
    series
        .iter()
        .scan(f64::NEG_INFINITY, |m, r| {
            *m = m.max(r.int_v_pow);
            Some(*m)
        })
        .collect()
}

pub fn write_series_csv<W: std::io::Write>(series: &[FunctionalRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in series {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv<R: std::io::Read>(input: R) -> Result<Vec<FunctionalRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_reports_csv<W: std::io::Write>(reports: &[IdentityReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
