//! Multivariate gamma function and adaptive Gauss–Kronrod quadrature.

use std::collections::BinaryHeap;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// `log Γ_r(p) = r(r−1)/4·log π + Σ_{k=1..r} log Γ(p − (k−1)/2)`, for `p > (r−1)/2`.
pub fn ln_multigamma(r: usize, p: f64) -> f64 {
    let rf = r as f64;
    rf * (rf - 1.0) / 4.0 * std::f64::consts::PI.ln() + (0..r).map(|k| ln_gamma(p - k as f64 / 2.0)).sum::<f64>()
}

// Gauss–Kronrod 7/15 nodes and weights.
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
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub abs_err: f64,
    pub intervals: usize,
}

const MAX_INTERVALS: usize = 4000;

/// Globally adaptive GK15 on a finite interval. Converges when the estimated
/// error is below `max(abs_tol, rel_tol·|value|)`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, abs_err: 0.0, intervals: 0 });
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, err: e });
    let (mut total, mut total_err) = (v, e);
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if !total.is_finite() {
            return Err(Error::Numeric(format!("non-finite integrand on [{a}, {b}]")));
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::Numeric(format!(
                "quadrature did not converge on [{a}, {b}]: value {total:e}, error estimate {total_err:e} after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2 });
    }
    // re-sum to shed the running-update rounding
    let value = heap.iter().map(|p| p.value).sum();
    let abs_err = heap.iter().map(|p| p.err).sum();
    Ok(Integral { value, abs_err, intervals: heap.len() })
}

/// `∫_{-∞}^{∞} f` through the substitution `s = t/(1 − t²)`, `t ∈ (−1, 1)`.
pub fn integrate_real_line(f: impl Fn(f64) -> f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    let g = |t: f64| {
        let d = 1.0 - t * t;
        let s = t / d;
        let v = f(s) * (1.0 + t * t) / (d * d);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, -1.0, 1.0, abs_tol, rel_tol)
}

/// `∫_{a}^{∞} f` through `s = a + t/(1 − t)`.
pub fn integrate_upper_tail(f: impl Fn(f64) -> f64, a: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    let g = |t: f64| {
        let d = 1.0 - t;
        let v = f(a + t / d) / (d * d);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}

/// `∫_{-∞}^{b} f` through `s = b − t/(1 − t)`.
pub fn integrate_lower_tail(f: impl Fn(f64) -> f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    integrate_upper_tail(|s| f(-s), -b, abs_tol, rel_tol)
}
