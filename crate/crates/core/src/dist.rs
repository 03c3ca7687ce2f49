//! Wishart `γ(p, σ)`, matrix Beta `Beta(p, q)` and matrix Kummer `K(a, b, σ)`.
//!
//! Kernels (unnormalized log densities):
//!
//! | law | kernel |
//! |-----|--------|
//! | `γ(p, σ)` | `det(x)^{p−(r+1)/2} exp(−⟨σ, x⟩)` on `V` |
//! | `Beta(p, q)` | `det(u)^{p−(r+1)/2} det(I−u)^{q−(r+1)/2}` on `D` |
//! | `K(a, b, σ)` | `det(x)^{a−(r+1)/2} det(I+x)^{−b} exp(−⟨σ, x⟩)` on `V` |
//!
//! Densities are taken with respect to Lebesgue measure on `Sym(r)` with the
//! trace inner product. That measure is `2^{r(r−1)/4}` times the entrywise
//! measure `∏_{i≤j} dx_ij`, which is why the classical multivariate-gamma
//! constants below carry an extra `−r(r−1)/4·log 2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::SeedSpec;
use crate::sampler;
use crate::special::{integrate, integrate_lower_tail, integrate_real_line, ln_multigamma};
use crate::symcone::{check_orders, ConePoint, DomainPoint};

fn half_r1(r: usize) -> f64 {
    (r as f64 + 1.0) / 2.0
}

fn shape_bound(r: usize) -> f64 {
    (r as f64 - 1.0) / 2.0
}

fn check_shape(name: &str, value: f64, r: usize) -> Result<()> {
    if !(value.is_finite() && value > shape_bound(r)) {
        return Err(Error::Domain(format!("{name} = {value} must exceed (r-1)/2 = {}", shape_bound(r))));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WishartParams {
    p: f64,
    sigma: ConePoint,
}

impl WishartParams {
    pub fn new(p: f64, sigma: ConePoint) -> Result<Self> {
        check_shape("p", p, sigma.order())?;
        Ok(Self { p, sigma })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sigma(&self) -> &ConePoint {
        &self.sigma
    }

    pub fn order(&self) -> usize {
        self.sigma.order()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaParams {
    p: f64,
    q: f64,
    r: usize,
}

impl BetaParams {
    pub fn new(p: f64, q: f64, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidInput("r must be at least 1".into()));
        }
        check_shape("p", p, r)?;
        check_shape("q", q, r)?;
        Ok(Self { p, q, r })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn order(&self) -> usize {
        self.r
    }
}

/// Parameters of `K(a, b, σ)`. Any finite `b` is accepted here; the rejection
/// sampler additionally needs `b > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KummerParams {
    a: f64,
    b: f64,
    sigma: ConePoint,
}

impl KummerParams {
    pub fn new(a: f64, b: f64, sigma: ConePoint) -> Result<Self> {
        check_shape("a", a, sigma.order())?;
        if !b.is_finite() {
            return Err(Error::Domain(format!("b = {b} must be finite")));
        }
        Ok(Self { a, b, sigma })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn sigma(&self) -> &ConePoint {
        &self.sigma
    }

    pub fn order(&self) -> usize {
        self.sigma.order()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum DistParams {
    Wishart(WishartParams),
    Beta(BetaParams),
    Kummer(KummerParams),
}

impl DistParams {
    pub fn order(&self) -> usize {
        match self {
            DistParams::Wishart(t) => t.order(),
            DistParams::Beta(t) => t.order(),
            DistParams::Kummer(t) => t.order(),
        }
    }
}

fn check_point_order(x: &ConePoint, r: usize) -> Result<()> {
    if x.order() != r {
        return Err(Error::InvalidInput(format!("point has order {}, parameters have order {r}", x.order())));
    }
    Ok(())
}

pub fn wishart_logkernel(x: &ConePoint, t: &WishartParams) -> Result<f64> {
    check_orders(x, &t.sigma)?;
    Ok((t.p - half_r1(x.order())) * x.logdet() - x.inner(t.sigma.matrix()))
}

pub fn beta_logkernel(u: &DomainPoint, t: &BetaParams) -> Result<f64> {
    check_point_order(u.point(), t.r)?;
    let m = half_r1(t.r);
    Ok((t.p - m) * u.logdet() + (t.q - m) * u.logdet_i_minus())
}

pub fn kummer_logkernel(x: &ConePoint, t: &KummerParams) -> Result<f64> {
    check_orders(x, &t.sigma)?;
    Ok((t.a - half_r1(x.order())) * x.logdet() - t.b * x.logdet_i_plus() - x.inner(t.sigma.matrix()))
}

/// `log` of the ratio between the trace-inner-product Lebesgue measure and
/// the entrywise one: `r(r−1)/4·log 2`.
pub fn log_measure_factor(r: usize) -> f64 {
    let rf = r as f64;
    rf * (rf - 1.0) / 4.0 * std::f64::consts::LN_2
}

/// `log c_{p,σ} = p·log det σ − log Γ_r(p) − r(r−1)/4·log 2`
pub fn wishart_lognorm(t: &WishartParams) -> f64 {
    let r = t.order();
    t.p * t.sigma.logdet() - ln_multigamma(r, t.p) - log_measure_factor(r)
}

/// `log c_{p,q} = log Γ_r(p+q) − log Γ_r(p) − log Γ_r(q) − r(r−1)/4·log 2`
pub fn beta_lognorm(t: &BetaParams) -> f64 {
    let r = t.r;
    ln_multigamma(r, t.p + t.q) - ln_multigamma(r, t.p) - ln_multigamma(r, t.q) - log_measure_factor(r)
}

/// A log normalizing constant, with a Monte Carlo standard error when it was
/// estimated by sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogNorm {
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Settings for the numeric Kummer normalizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormOptions {
    /// Random stream of the `r = 2` importance sampler.
    pub seed: SeedSpec,
    pub n_samples: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { seed: SeedSpec::new(0, 0), n_samples: 100_000 }
    }
}

pub fn lognorm(t: &DistParams, opts: &NormOptions) -> Result<LogNorm> {
    match t {
        DistParams::Wishart(w) => Ok(LogNorm { value: wishart_lognorm(w), stderr: None }),
        DistParams::Beta(b) => Ok(LogNorm { value: beta_lognorm(b), stderr: None }),
        DistParams::Kummer(k) => kummer_lognorm(k, opts),
    }
}

/// `−log Z` for `K(a, b, σ)`: adaptive quadrature for `r = 1`, importance
/// sampling with a `γ(a, σ)` proposal for `r = 2`.
pub fn kummer_lognorm(t: &KummerParams, opts: &NormOptions) -> Result<LogNorm> {
    match t.order() {
        1 => Ok(LogNorm { value: -ScalarKummer::new(t.a, t.b, t.sigma.get_scalar())?.log_z(), stderr: None }),
        2 => {
            if opts.n_samples < 2 {
                return Err(Error::InvalidInput("importance sampler needs at least 2 draws".into()));
            }
            // Z_K = Z_W · E_W[det(I+X)^{-b}], X ~ γ(a, σ)
            let w = WishartParams::new(t.a, t.sigma.clone())?;
            let prep = sampler::Bartlett::new(&w);
            let logw: Vec<f64> = (0..opts.n_samples as u64)
                .map(|i| {
                    let x = prep.draw(&mut opts.seed.rng(i));
                    -t.b * sampler::logdet_i_plus_raw(&x)
                })
                .collect();
            let shift = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ws: Vec<f64> = logw.iter().map(|l| (l - shift).exp()).collect();
            let n = ws.len() as f64;
            let mean = ws.iter().sum::<f64>() / n;
            let var = ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let log_z = -wishart_lognorm(&w) + shift + mean.ln();
            Ok(LogNorm { value: -log_z, stderr: Some((var / n).sqrt() / mean) })
        }
        r => {
            Err(Error::Unsupported(format!("normalized Kummer densities are only available for r <= 2 (got r = {r})")))
        }
    }
}

const QUAD_REL_TOL: f64 = 1e-12;

/// The scalar (`r = 1`) Kummer law, normalized by quadrature.
///
/// Integrals run over `s = log x`, where the integrand
/// `x·k(x) = exp(a·s − b·log(1+eˢ) − σ·eˢ)` is smooth and decays
/// exponentially at both ends.
#[derive(Debug, Clone, Copy)]
pub struct ScalarKummer {
    a: f64,
    b: f64,
    sigma: f64,
    shift: f64,
    z_shifted: f64,
}

impl ScalarKummer {
    pub fn new(a: f64, b: f64, sigma: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b.is_finite() && sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "scalar Kummer law needs a > 0, finite b, sigma > 0 (got a={a}, b={b}, sigma={sigma})"
            )));
        }
        let mut law = Self { a, b, sigma, shift: 0.0, z_shifted: 1.0 };
        // log-integrand maximum on a grid, to keep exp() in range
        law.shift = (-800..=800).map(|k| law.log_integrand(k as f64 * 0.05)).fold(f64::NEG_INFINITY, f64::max);
        let z = integrate_real_line(|s| law.integrand(s), 0.0, QUAD_REL_TOL)?;
        law.z_shifted = z.value;
        Ok(law)
    }

    fn log_integrand(&self, s: f64) -> f64 {
        let x = s.exp();
        self.a * s - self.b * x.ln_1p() - self.sigma * x
    }

    fn integrand(&self, s: f64) -> f64 {
        (self.log_integrand(s) - self.shift).exp()
    }

    /// `log ∫₀^∞ x^{a−1}(1+x)^{−b}e^{−σx} dx`
    pub fn log_z(&self) -> f64 {
        self.shift + self.z_shifted.ln()
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.a - 1.0) * x.ln() - self.b * x.ln_1p() - self.sigma * x - self.log_z()
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let i = integrate_lower_tail(|s| self.integrand(s), x.ln(), 0.0, QUAD_REL_TOL)?;
        Ok((i.value / self.z_shifted).clamp(0.0, 1.0))
    }

    /// CDF at each point of an ascending slice, integrating piecewise between
    /// consecutive points.
    pub fn cdf_sorted(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        let mut prev: Option<f64> = None;
        for &x in xs {
            if x <= 0.0 {
                out.push(0.0);
                continue;
            }
            let s = x.ln();
            acc += match prev {
                None => integrate_lower_tail(|t| self.integrand(t), s, 1e-16 * self.z_shifted, QUAD_REL_TOL)?.value,
                Some(p) if s < p => return Err(Error::InvalidInput("cdf_sorted needs ascending input".into())),
                Some(p) => integrate(|t| self.integrand(t), p, s, 1e-16 * self.z_shifted, QUAD_REL_TOL)?.value,
            };
            prev = Some(s);
            out.push((acc / self.z_shifted).clamp(0.0, 1.0));
        }
        Ok(out)
    }

    /// `E[X^k]`
    pub fn moment(&self, k: f64) -> Result<f64> {
        let i = integrate_real_line(|s| (self.log_integrand(s) + k * s - self.shift).exp(), 0.0, QUAD_REL_TOL)?;
        Ok(i.value / self.z_shifted)
    }

    /// Inverse CDF by bisection on `log x`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level {p} must lie in (0, 1)")));
        }
        let (mut lo, mut hi) = (-60.0f64, 10.0f64);
        while self.cdf(hi.exp())? < p {
            hi += 10.0;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid.exp())? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }
}
