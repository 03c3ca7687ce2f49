//! Kolmogorov–Smirnov tests and a distance-correlation permutation test.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::SeedSpec;

pub const MIN_INDEPENDENCE_N: usize = 100;
pub const MIN_PERMUTATIONS: usize = 199;
pub const DEFAULT_PERMUTATIONS: usize = 499;

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small λ
        let y = -PI * PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            s += (j * j * y).exp();
        }
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let t = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
            s += sign * t;
            if t < 1e-300 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic KS p-value with Stephens' finite-sample correction.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample KS from the model CDF evaluated at the ascending sample.
pub fn ks_from_sorted_cdf(name: &str, cdf: &[f64]) -> Result<KsResult> {
    let n = cdf.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if cdf.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Numeric("CDF value outside [0, 1]".into()));
    }
    let nf = n as f64;
    let d = cdf.iter().enumerate().map(|(i, &f)| ((i + 1) as f64 / nf - f).max(f - i as f64 / nf)).fold(0.0, f64::max);
    Ok(KsResult { test_name: name.into(), statistic: d, p_value: ks_p_value(d, nf), n })
}

/// One-sample KS of `samples` against `cdf`.
pub fn ks_one_sample(name: &str, samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let sorted = sorted_finite(samples)?;
    let f: Vec<f64> = sorted.iter().map(|&x| cdf(x)).collect();
    ks_from_sorted_cdf(name, &f)
}

pub(crate) fn sorted_finite(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("sample contains non-finite values".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample KS test.
pub fn ks_two_sample(name: &str, a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let (a, b) = (sorted_finite(a)?, sorted_finite(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsResult { test_name: name.into(), statistic: d, p_value: ks_p_value(d, n_eff), n: a.len().min(b.len()) })
}

/// Binary indexed tree over `[count, x, y, xy]`.
struct Fenwick(Vec<[f64; 4]>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![[0.0; 4]; n + 1])
    }

    fn add(&mut self, pos: usize, v: [f64; 4]) {
        let mut i = pos + 1;
        while i < self.0.len() {
            for (a, b) in self.0[i].iter_mut().zip(v) {
                *a += b;
            }
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `< pos`.
    fn prefix(&self, pos: usize) -> [f64; 4] {
        let mut s = [0.0; 4];
        let mut i = pos;
        while i > 0 {
            for (a, b) in s.iter_mut().zip(self.0[i]) {
                *a += b;
            }
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Precomputed pieces of the univariate distance covariance that do not
/// change when `y` is permuted.
struct UnivariateDcov {
    x: Vec<f64>,
    y: Vec<f64>,
    x_order: Vec<usize>,
    y_rank: Vec<usize>,
    row_x: Vec<f64>,
    row_y: Vec<f64>,
    mean_x: f64,
    mean_y: f64,
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}

/// `Σ_j |v_i − v_j|` for every `i`, via sorting and prefix sums.
fn distance_row_sums(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let total: f64 = v.iter().sum();
    let mut out = vec![0.0; n];
    let mut before = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        let after = total - before - v[i];
        out[i] = v[i] * k as f64 - before + after - v[i] * (n - k - 1) as f64;
        before += v[i];
    }
    out
}

impl UnivariateDcov {
    fn new(x: &[f64], y: &[f64]) -> Self {
        let (x, y) = (centered(x), centered(y));
        let n = x.len();
        let mut x_order: Vec<usize> = (0..n).collect();
        x_order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut y_order: Vec<usize> = (0..n).collect();
        y_order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        let mut y_rank = vec![0; n];
        for (k, &i) in y_order.iter().enumerate() {
            y_rank[i] = k;
        }
        let row_x = distance_row_sums(&x);
        let row_y = distance_row_sums(&y);
        let nf = n as f64;
        let mean_x = row_x.iter().sum::<f64>() / (nf * nf);
        let mean_y = row_y.iter().sum::<f64>() / (nf * nf);
        Self { x, y, x_order, y_rank, row_x, row_y, mean_x, mean_y }
    }

    /// V-statistic `dCov²(x, y∘π)`; `perm = None` is the identity.
    fn dcov2(&self, perm: Option<&[usize]>) -> f64 {
        let n = self.x.len();
        let nf = n as f64;
        let py = |i: usize| perm.map_or(i, |p| p[i]);
        // Σ_{i<j} |x_i − x_j||y_i − y_j|, sweeping in x order
        let mut tree = Fenwick::new(n);
        let mut tot = [0.0; 4];
        let mut s1 = 0.0;
        for &j in &self.x_order {
            let (xj, yj) = (self.x[j], self.y[py(j)]);
            let rank = self.y_rank[py(j)];
            let lo = tree.prefix(rank);
            let hi = [tot[0] - lo[0], tot[1] - lo[1], tot[2] - lo[2], tot[3] - lo[3]];
            let part = |s: [f64; 4]| xj * yj * s[0] - xj * s[2] - yj * s[1] + s[3];
            s1 += part(lo) - part(hi);
            let v = [1.0, xj, yj, xj * yj];
            tree.add(rank, v);
            for k in 0..4 {
                tot[k] += v[k];
            }
        }
        let s1 = 2.0 * s1 / (nf * nf);
        let s3: f64 = (0..n).map(|i| self.row_x[i] * self.row_y[py(i)]).sum::<f64>() / (nf * nf * nf);
        s1 + self.mean_x * self.mean_y - 2.0 * s3
    }

    fn dvar2(v: &[f64]) -> f64 {
        let d = UnivariateDcov::new(v, v);
        d.dcov2(None)
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Multivariate distance covariance, `O(n²)` time and `O(n)` memory.
struct MultivariateDcov<'a> {
    x: &'a [Vec<f64>],
    y: &'a [Vec<f64>],
    row_x: Vec<f64>,
    row_y: Vec<f64>,
    mean_x: f64,
    mean_y: f64,
}

impl<'a> MultivariateDcov<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [Vec<f64>]) -> Self {
        let rows =
            |v: &[Vec<f64>]| -> Vec<f64> { v.par_iter().map(|a| v.iter().map(|b| euclid(a, b)).sum()).collect() };
        let (row_x, row_y) = (rows(x), rows(y));
        let nf = x.len() as f64;
        let mean_x = row_x.iter().sum::<f64>() / (nf * nf);
        let mean_y = row_y.iter().sum::<f64>() / (nf * nf);
        Self { x, y, row_x, row_y, mean_x, mean_y }
    }

    fn dcov2(&self, perm: Option<&[usize]>) -> f64 {
        let n = self.x.len();
        let nf = n as f64;
        let py = |i: usize| perm.map_or(i, |p| p[i]);
        let s: f64 = (0..n)
            .map(|i| {
                let (yi, ri) = (py(i), self.row_x[i] / nf);
                let si = self.row_y[yi] / nf;
                (0..n)
                    .map(|j| {
                        let yj = py(j);
                        let a = euclid(&self.x[i], &self.x[j]) - ri - self.row_x[j] / nf + self.mean_x;
                        let b = euclid(&self.y[yi], &self.y[yj]) - si - self.row_y[yj] / nf + self.mean_y;
                        a * b
                    })
                    .sum::<f64>()
            })
            .sum();
        s / (nf * nf)
    }
}

/// Squared distance covariance (V-statistic) of paired scalars.
pub fn dcov2_scalar(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x.len(), y.len(), 2)?;
    Ok(UnivariateDcov::new(x, y).dcov2(None))
}

/// Distance correlation of paired scalars; 0 when either sample is constant.
pub fn dcor_scalar(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x.len(), y.len(), 2)?;
    let c = UnivariateDcov::new(x, y).dcov2(None);
    Ok(normalize_dcor(c, UnivariateDcov::dvar2(x), UnivariateDcov::dvar2(y)))
}

/// Distance correlation of paired vectors.
pub fn dcor(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    check_pairs(x.len(), y.len(), 2)?;
    check_vectors(x)?;
    check_vectors(y)?;
    let c = MultivariateDcov::new(x, y).dcov2(None);
    let vx = MultivariateDcov::new(x, x).dcov2(None);
    let vy = MultivariateDcov::new(y, y).dcov2(None);
    Ok(normalize_dcor(c, vx, vy))
}

fn normalize_dcor(c: f64, vx: f64, vy: f64) -> f64 {
    let den = (vx * vy).sqrt();
    if den > 0.0 {
        (c.max(0.0) / den).sqrt()
    } else {
        0.0
    }
}

fn check_pairs(nx: usize, ny: usize, min: usize) -> Result<()> {
    if nx != ny {
        return Err(Error::InvalidInput(format!("paired samples differ in length ({nx} vs {ny})")));
    }
    if nx < min {
        return Err(Error::InvalidInput(format!("need at least {min} pairs (got {nx})")));
    }
    Ok(())
}

fn check_vectors(v: &[Vec<f64>]) -> Result<usize> {
    let d = v.first().map_or(0, Vec::len);
    if d == 0 || v.iter().any(|row| row.len() != d) {
        return Err(Error::InvalidInput("vectors must be non-empty and of equal dimension".into()));
    }
    if v.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("sample contains non-finite values".into()));
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceResult {
    pub dcor_statistic: f64,
    pub permutation_p: f64,
    pub n_permutations: usize,
    pub n: usize,
}

fn permutation_p(observed: f64, n: usize, n_perm: usize, s: SeedSpec, stat: impl Fn(&[usize]) -> f64 + Sync) -> f64 {
    let exceed: usize = (0..n_perm as u64)
        .into_par_iter()
        .map(|k| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut s.rng(k));
            usize::from(stat(&perm) >= observed)
        })
        .sum();
    (exceed + 1) as f64 / (n_perm + 1) as f64
}

fn check_independence_args(nu: usize, nv: usize, n_perm: usize) -> Result<()> {
    check_pairs(nu, nv, MIN_INDEPENDENCE_N)?;
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::InvalidInput(format!("need at least {MIN_PERMUTATIONS} permutations (got {n_perm})")));
    }
    Ok(())
}

/// Permutation test of independence between paired vectors, using
/// distance correlation. Permutation `k` is drawn from `s.rng(k)`.
/// One-dimensional inputs take an `O(n log n)` path.
pub fn independence_test(
    u_stats: &[Vec<f64>],
    v_stats: &[Vec<f64>],
    n_perm: usize,
    s: SeedSpec,
) -> Result<IndependenceResult> {
    check_independence_args(u_stats.len(), v_stats.len(), n_perm)?;
    let du = check_vectors(u_stats)?;
    let dv = check_vectors(v_stats)?;
    if du == 1 && dv == 1 {
        let u: Vec<f64> = u_stats.iter().map(|r| r[0]).collect();
        let v: Vec<f64> = v_stats.iter().map(|r| r[0]).collect();
        return independence_test_scalar(&u, &v, n_perm, s);
    }
    let n = u_stats.len();
    let m = MultivariateDcov::new(u_stats, v_stats);
    let observed = m.dcov2(None);
    let p = permutation_p(observed, n, n_perm, s, |perm| m.dcov2(Some(perm)));
    let vx = MultivariateDcov::new(u_stats, u_stats).dcov2(None);
    let vy = MultivariateDcov::new(v_stats, v_stats).dcov2(None);
    Ok(IndependenceResult {
        dcor_statistic: normalize_dcor(observed, vx, vy),
        permutation_p: p,
        n_permutations: n_perm,
        n,
    })
}

/// [`independence_test`] for scalar functionals.
pub fn independence_test_scalar(u: &[f64], v: &[f64], n_perm: usize, s: SeedSpec) -> Result<IndependenceResult> {
    check_independence_args(u.len(), v.len(), n_perm)?;
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("sample contains non-finite values".into()));
    }
    let d = UnivariateDcov::new(u, v);
    let observed = d.dcov2(None);
    let p = permutation_p(observed, u.len(), n_perm, s, |perm| d.dcov2(Some(perm)));
    Ok(IndependenceResult {
        dcor_statistic: normalize_dcor(observed, UnivariateDcov::dvar2(u), UnivariateDcov::dvar2(v)),
        permutation_p: p,
        n_permutations: n_perm,
        n: u.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn brute_dcov2(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let nf = n as f64;
        let dist = |v: &[f64]| -> Vec<Vec<f64>> {
            let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (v[i] - v[j]).abs()).collect()).collect();
            let rm: Vec<f64> = d.iter().map(|r| r.iter().sum::<f64>() / nf).collect();
            let gm = rm.iter().sum::<f64>() / nf;
            (0..n).map(|i| (0..n).map(|j| d[i][j] - rm[i] - rm[j] + gm).collect()).collect()
        };
        let (a, b) = (dist(x), dist(y));
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[i][j] * b[i][j]).sum::<f64>() / (nf * nf)
    }

    #[test]
    fn kolmogorov_q_values() {
        // reference values of the Kolmogorov survival function
        assert!((kolmogorov_q(1.0) - 0.26999967167735456).abs() < 1e-12);
        assert!((kolmogorov_q(1.3581) - 0.0499996304316674).abs() < 1e-12);
        assert!((kolmogorov_q(1.6276) - 0.010001537333060776).abs() < 1e-12);
        assert!((kolmogorov_q(0.5) - 0.9639452436648751).abs() < 1e-12);
        assert_eq!(kolmogorov_q(0.0), 1.0);
        // both series agree where they switch
        let (lo, hi) = (kolmogorov_q(1.18 - 1e-12), kolmogorov_q(1.18));
        assert!((lo - hi).abs() < 1e-10);
    }

    #[test]
    fn ks_uniform_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let r = ks_one_sample("u", &xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.p_value > 0.01);
        let r = ks_one_sample("u", &xs, |x| x.clamp(0.0, 1.0).powf(1.2)).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn ks_statistic_by_hand() {
        let r = ks_from_sorted_cdf("t", &[0.1, 0.6]).unwrap();
        assert!((r.statistic - 0.4).abs() < 1e-15);
    }

    #[test]
    fn two_sample_identical_is_one() {
        let a: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let r = ks_two_sample("same", &a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        assert!(ks_two_sample("shift", &a, &b).unwrap().p_value < 1e-6);
    }

    #[test]
    fn two_sample_by_hand() {
        let r = ks_two_sample("t", &[1.0, 2.0, 3.0], &[2.5, 4.0]).unwrap();
        assert!((r.statistic - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn row_sums_match_brute_force() {
        let v = [3.0, -1.0, 2.0, 2.0, 0.5];
        let fast = distance_row_sums(&v);
        for i in 0..v.len() {
            let b: f64 = v.iter().map(|w| (v[i] - w).abs()).sum();
            assert!((fast[i] - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn fast_dcov_matches_brute_force(seed in 0u64..1000, n in 2usize..60, ties in proptest::bool::ANY) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = x.iter().map(|v: &f64| v * v + rng.sample::<f64, _>(StandardNormal)).collect();
            if ties {
                for v in x.iter_mut() { *v = v.round(); }
            }
            let fast = dcov2_scalar(&x, &y).unwrap();
            let slow = brute_dcov2(&x, &y);
            prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1e-3), "{fast} vs {slow}");
            let xv: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
            let yv: Vec<Vec<f64>> = y.iter().map(|v| vec![*v]).collect();
            let m = MultivariateDcov::new(&xv, &yv).dcov2(None);
            prop_assert!((m - slow).abs() <= 1e-10 * slow.abs().max(1e-3));
        }

        #[test]
        fn permuted_fast_dcov_matches(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            let fast = UnivariateDcov::new(&x, &y).dcov2(Some(&perm));
            let slow = brute_dcov2(&x, &yp);
            prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1e-3));
        }
    }

    #[test]
    fn dcor_extremes() {
        let x: Vec<f64> = (0..200).map(|i| i as f64).collect();
        assert!((dcor_scalar(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let c = vec![1.0; 200];
        assert_eq!(dcor_scalar(&x, &c).unwrap(), 0.0);
    }

    #[test]
    fn perfect_dependence_hits_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..300).map(|_| rng.sample(StandardNormal)).collect();
        let r = independence_test_scalar(&u, &u, 199, SeedSpec::new(1, 1)).unwrap();
        assert_eq!(r.permutation_p, 1.0 / 200.0);
        let uv: Vec<Vec<f64>> = u.iter().map(|x| vec![*x, x * x]).collect();
        let r = independence_test(&uv, &uv, 199, SeedSpec::new(1, 1)).unwrap();
        assert_eq!(r.permutation_p, 1.0 / 200.0);
    }

    #[test]
    fn argument_validation() {
        let u = vec![0.0; 150];
        assert!(matches!(
            independence_test_scalar(&u, &u[..120], 199, SeedSpec::new(0, 0)),
            Err(Error::InvalidInput(_))
        ));
        assert!(independence_test_scalar(&u[..50], &u[..50], 199, SeedSpec::new(0, 0)).is_err());
        assert!(independence_test_scalar(&u, &u, 100, SeedSpec::new(0, 0)).is_err());
    }

    #[test]
    fn calibration_under_independence() {
        // 100 independent repetitions at level 0.05: at most 5 + 3·sqrt(4.75) ≈ 11.5 rejections
        let base = SeedSpec::new(99, 0);
        let rejections = (0..100u64)
            .filter(|&k| {
                let mut ru = base.substream(2 * k).rng(0);
                let mut rv = base.substream(2 * k + 1).rng(0);
                let u: Vec<f64> = (0..200).map(|_| ru.sample(StandardNormal)).collect();
                let v: Vec<f64> = (0..200).map(|_| rv.sample::<f64, _>(StandardNormal).exp()).collect();
                independence_test_scalar(&u, &v, 199, base.substream(1000 + k)).unwrap().permutation_p <= 0.05
            })
            .count();
        assert!(rejections <= 11, "{rejections} rejections");
    }

    #[test]
    fn deterministic_p_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let a = independence_test_scalar(&u, &v, 199, SeedSpec::new(5, 6)).unwrap();
        let b = independence_test_scalar(&u, &v, 199, SeedSpec::new(5, 6)).unwrap();
        assert_eq!(a, b);
    }
}
