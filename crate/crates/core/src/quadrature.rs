//! Adaptive Gauss-Kronrod (7/15) quadrature and the heat-kernel lower bound
//! for the signal concentration.

use std::f64::consts::PI;

use crate::error::{Error, Result};

// Kronrod abscissae on [0, 1]; odd indices are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub segments: usize,
}

/// Globally adaptive bisection: the segment with the largest error estimate
/// is split until the summed estimate drops below `max(abs_tol, rel_tol |I|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<QuadResult> {
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::Domain(format!("bad interval [{lo}, {hi}]")));
    }
    if hi == lo {
        return Ok(QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            segments: 0,
        });
    }
    let mut segs = vec![gk15(&f, lo, hi)];
    loop {
        let value: f64 = segs.iter().map(|s| s.value).sum();
        let error: f64 = segs.iter().map(|s| s.error).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || segs.len() >= max_segments {
            if error > abs_tol.max(rel_tol * value.abs()) {
                log::warn!("quadrature stopped at {} segments, error {error:e}", segs.len());
            }
            return Ok(QuadResult {
                value,
                error_estimate: error,
                segments: segs.len(),
            });
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .map(|(k, _)| k)
            .expect("nonempty");
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.lo + s.hi);
        segs.push(gk15(&f, s.lo, mid));
        segs.push(gk15(&f, mid, s.hi));
    }
}

/// Inputs of the lower bound `η = min{inf v0 / 2, ζ ∫_0^τ (4πr)^{-1} e^{-(r + d²/(4r))} dr}`
/// in two dimensions, with `ζ = m` (the total mass feeds the signal equation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaInputs {
    pub m: f64,
    pub inf_v0: f64,
    pub tau: f64,
    pub diam: f64,
}

impl EtaInputs {
    pub fn validate(&self) -> Result<()> {
        let ok = self.m >= 0.0
            && self.inf_v0 > 0.0
            && self.tau > 0.0
            && self.diam > 0.0
            && [self.m, self.inf_v0, self.tau, self.diam]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid eta inputs {self:?}")))
        }
    }
}

/// Below `e^{-700}` the integrand is treated as zero.
const EXP_CUTOFF: f64 = 700.0;

/// Two-dimensional Neumann heat-kernel floor integrand `(4πr)^{-1} e^{-(r + d²/(4r))}`.
pub fn heat_kernel_integrand(r: f64, diam: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    (-(r + diam * diam / (4.0 * r))).exp() / (4.0 * PI * r)
}

/// `∫_0^τ (4πr)^{-1} e^{-(r + d²/(4r))} dr`.
pub fn heat_kernel_integral(tau: f64, diam: f64) -> Result<f64> {
    let lo = f64::EPSILON.max(diam * diam / (4.0 * EXP_CUTOFF));
    if lo >= tau {
        return Ok(0.0);
    }
    let q = integrate_adaptive(
        |r| heat_kernel_integrand(r, diam),
        lo,
        tau,
        1e-300,
        1e-13,
        10_000,
    )?;
    Ok(q.value)
}

pub fn eta_lower_bound(inp: &EtaInputs) -> Result<f64> {
    inp.validate()?;
    let integral = heat_kernel_integral(inp.tau, inp.diam)?;
    Ok((0.5 * inp.inf_v0).min(inp.m * integral))
}
