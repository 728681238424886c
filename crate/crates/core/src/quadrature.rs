//! Globally adaptive Gauss–Kronrod (7, 15) integration on finite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (k, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += w * pair;
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

/// Integrates `f` over `[lo, hi]` until the summed error estimate drops below
/// `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, abs_tol: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::QuadratureFailure(format!(
            "non-finite interval [{lo}, {hi}]"
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if lo < hi { (lo, hi, 1.0) } else { (hi, lo, -1.0) };
    let mut segments = vec![gk15(&f, lo, hi)];
    const MAX_SEGMENTS: usize = 4000;
    loop {
        let total_err: f64 = segments.iter().map(|s| s.error).sum();
        if total_err <= abs_tol {
            let value: f64 = segments.iter().map(|s| s.value).sum();
            if !value.is_finite() {
                return Err(Error::QuadratureFailure("non-finite integral".into()));
            }
            return Ok(sign * value);
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::QuadratureFailure(format!(
                "error estimate {total_err:.3e} above tolerance {abs_tol:.1e} after {MAX_SEGMENTS} segments"
            )));
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .expect("nonempty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.lo + seg.hi);
        if mid <= seg.lo || mid >= seg.hi {
            return Err(Error::QuadratureFailure(
                "interval cannot be subdivided further".into(),
            ));
        }
        segments.push(gk15(&f, seg.lo, mid));
        segments.push(gk15(&f, mid, seg.hi));
    }
}
