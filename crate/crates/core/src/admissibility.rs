//! Closed-form admissibility function `phi(a, b; chi)` and the search for the
//! largest sensitivity `chi` that still admits weights `(a, b)` with `phi < 0`.
//!
//! ```text
//! phi(a,b;chi) = 1/(4a) * ((chi + 2a + b/2)^2 / 4 - a*chi - a - b/4)_+^2 - b*c0/2
//! ```
//!
//! `phi_delta` deflates both the prefactor and the inner square by `1 - delta`.
//! Negativity of `phi` for some `(a, b)` is what makes the weighted energy
//! functional dissipative; the set of such `chi` is an interval `(0, chi0)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// `1/(2+sqrt 2)^2`, equal to `3/2 - sqrt 2`.
pub const C0_DEFAULT: f64 = 1.5 - std::f64::consts::SQRT_2;

/// Weights and constants entering `phi` and `phi_delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityParams {
    /// Weight on `∫u ln v`.
    pub a: f64,
    /// Weight on `∫|∇√v|²`.
    pub b: f64,
    pub chi: f64,
    pub c0: f64,
    /// Portion of `∫|∇u|²/u` retained when applying Young's inequality.
    pub delta: f64,
}

impl AdmissibilityParams {
    pub fn new(a: f64, b: f64, chi: f64) -> Self {
        Self {
            a,
            b,
            chi,
            c0: C0_DEFAULT,
            delta: 0.0,
        }
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.chi, self.c0, self.delta]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain(format!("non-finite parameter in {self:?}")));
        }
        if self.a <= 0.0 {
            return Err(Error::Domain(format!("a must be > 0, got {}", self.a)));
        }
        if self.b < 0.0 {
            return Err(Error::Domain(format!("b must be >= 0, got {}", self.b)));
        }
        if self.chi <= 0.0 {
            return Err(Error::Domain(format!("chi must be > 0, got {}", self.chi)));
        }
        if self.c0 < 0.0 {
            return Err(Error::Domain(format!("c0 must be >= 0, got {}", self.c0)));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Domain(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

#[inline]
fn positive_part(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Shared evaluation of `phi_delta`; `one_minus_delta == 1.0` gives `phi`
/// with an identical sequence of floating point operations.
#[inline]
fn phi_core(a: f64, b: f64, chi: f64, c0: f64, one_minus_delta: f64) -> f64 {
    let s = chi + 2.0 * a + 0.5 * b;
    let inner = s * s / (4.0 * one_minus_delta) - a * chi - a - 0.25 * b;
    let p = positive_part(inner);
    p * p / (4.0 * a * one_minus_delta) - 0.5 * b * c0
}

#[inline]
fn phi_unchecked(a: f64, b: f64, chi: f64, c0: f64) -> f64 {
    phi_core(a, b, chi, c0, 1.0)
}

/// `phi(a,b;chi)` in the form with the squared inner bracket. `delta` is ignored.
pub fn phi(p: &AdmissibilityParams) -> Result<f64> {
    p.with_delta(0.0).validate()?;
    Ok(phi_unchecked(p.a, p.b, p.chi, p.c0))
}

/// The same function written as a polynomial in `chi`:
/// `((chi² + 4a² + b²/4 + b chi + 2ab - 4a - b)_+² - 32 a b c0) / (64 a)`.
pub fn phi_expanded(p: &AdmissibilityParams) -> Result<f64> {
    p.with_delta(0.0).validate()?;
    let (a, b, chi) = (p.a, p.b, p.chi);
    let poly = chi * chi + 4.0 * a * a + 0.25 * b * b + b * chi + 2.0 * a * b - 4.0 * a - b;
    let q = positive_part(poly);
    Ok((q * q - 32.0 * a * b * p.c0) / (64.0 * a))
}

/// `phi_delta(a,b;chi)`; equals `phi` bit for bit at `delta == 0`.
pub fn phi_delta(p: &AdmissibilityParams) -> Result<f64> {
    p.validate()?;
    Ok(phi_core(p.a, p.b, p.chi, p.c0, 1.0 - p.delta))
}

/// One-sided derivative `d/db phi(a, b; chi)` at `b = 0+`.
///
/// With `B(b)` the inner bracket, `B(0) = chi²/4 + a² - a` and
/// `B'(0) = (chi + 2a - 1)/4`, so the derivative is `B(0)_+ B'(0) / (2a) - c0/2`.
pub fn phi_db_at_zero(a: f64, chi: f64, c0: f64) -> Result<f64> {
    AdmissibilityParams::new(a, 0.0, chi).with_c0(c0).validate()?;
    let inner0 = positive_part(0.25 * chi * chi + a * a - a);
    let slope = 0.25 * (chi + 2.0 * a - 1.0);
    Ok(inner0 * slope / (2.0 * a) - 0.5 * c0)
}

/// Largest `delta` (to within `tol`) for which `phi_delta < 0`, or `None` when
/// `phi` itself is not negative. `phi_delta` is nondecreasing in `delta`.
pub fn delta_margin(p: &AdmissibilityParams, tol: f64) -> Result<Option<f64>> {
    let base = p.with_delta(0.0);
    if phi(&base)? >= 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if phi_delta(&base.with_delta(mid))? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Bracket inside the positive part of `phi_delta`.
pub fn inner_bracket(p: &AdmissibilityParams) -> Result<f64> {
    p.validate()?;
    let s = p.chi + 2.0 * p.a + 0.5 * p.b;
    Ok(s * s / (4.0 * (1.0 - p.delta)) - p.a * p.chi - p.a - 0.25 * p.b)
}

/// Premise of the dissipation estimate: `phi_delta < 0`, or, for `b = 0`
/// where `phi_delta` vanishes identically below threshold, a strictly
/// negative inner bracket.
pub fn dissipation_premise(p: &AdmissibilityParams) -> Result<bool> {
    if phi_delta(p)? < 0.0 {
        return Ok(true);
    }
    Ok(p.b == 0.0 && inner_bracket(p)? < 0.0)
}

/// Largest `delta` (to within `tol`) satisfying [`dissipation_premise`], or
/// `None` when it fails at `delta = 0`. The premise is monotone in `delta`.
pub fn premise_margin(p: &AdmissibilityParams, tol: f64) -> Result<Option<f64>> {
    let base = p.with_delta(0.0);
    if !dissipation_premise(&base)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if dissipation_premise(&base.with_delta(mid))? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Window and resolution of the `(a, b)` search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    /// Spacing of the coarse grid in both directions.
    pub resolution: f64,
    pub refine_rounds: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            a_min: 0.01,
            a_max: 2.0,
            b_min: 0.0,
            b_max: 2.0,
            resolution: 1e-3,
            refine_rounds: 3,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.a_min, self.a_max, self.b_min, self.b_max, self.resolution];
        if vals.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSearch("non-finite bound".into()));
        }
        if !(self.a_min > 0.0 && self.a_min < self.a_max) {
            return Err(Error::InvalidSearch(format!(
                "need 0 < a_min < a_max, got [{}, {}]",
                self.a_min, self.a_max
            )));
        }
        if !(self.b_min >= 0.0 && self.b_min < self.b_max) {
            return Err(Error::InvalidSearch(format!(
                "need 0 <= b_min < b_max, got [{}, {}]",
                self.b_min, self.b_max
            )));
        }
        if self.resolution <= 0.0 {
            return Err(Error::InvalidSearch(format!(
                "resolution must be > 0, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect()
    }

    pub fn a_axis(&self) -> Vec<f64> {
        Self::axis(self.a_min, self.a_max, self.resolution)
    }

    pub fn b_axis(&self) -> Vec<f64> {
        Self::axis(self.b_min, self.b_max, self.resolution)
    }
}

/// Outcome of the `(a, b)` search for one `chi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub chi: f64,
    pub feasible: bool,
    pub best_a: f64,
    pub best_b: f64,
    pub best_phi: f64,
    #[serde(skip)]
    pub search_resolution: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    a: f64,
    b: f64,
    phi: f64,
}

impl Candidate {
    /// Strict improvement only, so earlier candidates win ties.
    fn better(self, other: Candidate) -> Candidate {
        if other.phi < self.phi {
            other
        } else {
            self
        }
    }
}

/// Full grid scan. Rows over `a` are evaluated in parallel; the reduction runs
/// in row order so the result does not depend on the number of workers.
fn grid_min(chi: f64, c0: f64, search: &SearchConfig) -> Candidate {
    let b_axis = search.b_axis();
    let rows: Vec<Candidate> = search
        .a_axis()
        .into_par_iter()
        .map(|a| {
            b_axis
                .iter()
                .map(|&b| Candidate {
                    a,
                    b,
                    phi: phi_unchecked(a, b, chi, c0),
                })
                .reduce(Candidate::better)
                .expect("nonempty b axis")
        })
        .collect();
    rows.into_iter()
        .reduce(Candidate::better)
        .expect("nonempty a axis")
}

fn refine(mut best: Candidate, chi: f64, c0: f64, search: &SearchConfig) -> Candidate {
    const HALF_POINTS: i32 = 10;
    let mut half_width = search.resolution;
    for _ in 0..search.refine_rounds {
        let step = half_width / HALF_POINTS as f64;
        for _sweep in 0..2 {
            for k in -HALF_POINTS..=HALF_POINTS {
                let a = (best.a + k as f64 * step).clamp(search.a_min, search.a_max);
                let cand = Candidate {
                    a,
                    b: best.b,
                    phi: phi_unchecked(a, best.b, chi, c0),
                };
                best = best.better(cand);
            }
            for k in -HALF_POINTS..=HALF_POINTS {
                let b = (best.b + k as f64 * step).clamp(search.b_min, search.b_max);
                let cand = Candidate {
                    a: best.a,
                    b,
                    phi: phi_unchecked(best.a, b, chi, c0),
                };
                best = best.better(cand);
            }
        }
        half_width = step;
    }
    best
}

/// Searches the window for `(a, b)` minimizing `phi(a, b; chi)`: a coarse grid
/// scan followed by coordinate-descent refinement around the best grid point.
pub fn feasible_ab(chi: f64, c0: f64, search: &SearchConfig) -> Result<AdmissibilityReport> {
    search.validate()?;
    AdmissibilityParams::new(search.a_min, 0.0, chi)
        .with_c0(c0)
        .validate()?;
    let coarse = grid_min(chi, c0, search);
    let best = refine(coarse, chi, c0, search);
    Ok(AdmissibilityReport {
        chi,
        feasible: best.phi < 0.0,
        best_a: best.a,
        best_b: best.b,
        best_phi: best.phi,
        search_resolution: search.resolution,
    })
}

/// `phi` on every point of the search grid, in row-major `(a, b)` order.
pub fn phi_map(chi: f64, c0: f64, search: &SearchConfig) -> Result<Vec<(f64, f64, f64)>> {
    search.validate()?;
    AdmissibilityParams::new(search.a_min, 0.0, chi)
        .with_c0(c0)
        .validate()?;
    let b_axis = search.b_axis();
    let rows: Vec<Vec<(f64, f64, f64)>> = search
        .a_axis()
        .into_par_iter()
        .map(|a| {
            b_axis
                .iter()
                .map(|&b| (a, b, phi_unchecked(a, b, chi, c0)))
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Bisection result for `chi0 = sup { chi : exists (a,b) with phi < 0 }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiZero {
    /// Largest `chi` verified feasible.
    pub lower: f64,
    /// Smallest `chi` verified infeasible.
    pub upper: f64,
    /// Witness at `lower`.
    pub witness: AdmissibilityReport,
    pub bisections: usize,
}

impl ChiZero {
    pub fn estimate(&self) -> f64 {
        self.lower
    }

    pub fn bracket_width(&self) -> f64 {
        self.upper - self.lower
    }
}

const CHI_BRACKET: (f64, f64) = (0.5, 4.0);
const CHI_CEILING: f64 = 1e6;

/// Bisection on `chi` over the feasibility predicate of [`feasible_ab`].
pub fn chi_zero(c0: f64, tol: f64, search: &SearchConfig) -> Result<ChiZero> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Domain(format!("tol must be > 0, got {tol}")));
    }
    if !(c0 >= 0.0 && c0.is_finite()) {
        return Err(Error::Domain(format!("c0 must be >= 0, got {c0}")));
    }
    search.validate()?;

    let (mut lo, mut hi) = CHI_BRACKET;
    let mut witness = feasible_ab(lo, c0, search)?;
    if !witness.feasible {
        return Err(Error::NoFeasibleChi { lo, hi });
    }
    loop {
        let top = feasible_ab(hi, c0, search)?;
        if !top.feasible {
            break;
        }
        lo = hi;
        witness = top;
        hi *= 2.0;
        if hi > CHI_CEILING {
            return Err(Error::Domain(format!(
                "feasible chi exceeds {CHI_CEILING}; search window does not bound the region"
            )));
        }
    }
    let mut bisections = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let rep = feasible_ab(mid, c0, search)?;
        if rep.feasible {
            lo = mid;
            witness = rep;
        } else {
            hi = mid;
        }
        bisections += 1;
    }
    Ok(ChiZero {
        lower: lo,
        upper: hi,
        witness,
        bisections,
    })
}
