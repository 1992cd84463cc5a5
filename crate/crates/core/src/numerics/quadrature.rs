//! Globally adaptive Gauss–Kronrod 7/15 quadrature.

use crate::error::{Error, Result};
use crate::scalar::Real;

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
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

/// Kronrod estimate and |Kronrod − Gauss| on `[a, b]`.
pub fn gk15<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let c = (a + b) * T::half();
    let hl = (b - a) * T::half();
    let fc = f(c);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for i in 0..7 {
        let dx = hl * T::lit(XGK[i]);
        let s = f(c - dx) + f(c + dx);
        kron = kron + s * T::lit(WGK[i]);
        if i % 2 == 1 {
            gauss = gauss + s * T::lit(WG[i / 2]);
        }
    }
    (kron * hl, ((kron - gauss) * hl).abs())
}

/// `∫_a^b f` with estimated error ≤ `tol · max(1, |result|)`.
pub fn quadrature<T: Real>(f: impl Fn(T) -> T, a: T, b: T, tol: T) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    loop {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::NonConvergence { iterations: parts.len() });
        }
        if err <= tol * T::one().max(total.abs()) {
            break;
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::NonConvergence { iterations: parts.len() });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, pv, pe) = parts.swap_remove(idx);
        let mid = (lo + hi) * T::half();
        if mid <= lo || mid >= hi {
            return Err(Error::NonConvergence { iterations: parts.len() });
        }
        let left = gk15(&f, lo, mid);
        let right = gk15(&f, mid, hi);
        total = total - pv + left.0 + right.0;
        err = err - pe + left.1 + right.1;
        parts.push((lo, mid, left.0, left.1));
        parts.push((mid, hi, right.0, right.1));
    }
    // re-sum to shed accumulated update round-off
    Ok(parts.iter().fold(T::zero(), |acc, p| acc + p.2))
}
