//! Samplers for `γ(p, σ)`, `Beta(p, q)` and `K(a, b, σ)`, and batched
//! push-forward of Kummer ⊗ Wishart pairs through `ψ`.
//!
//! Every draw is addressed by `(SeedSpec, index)`, so batches are identical
//! whatever the size of the rayon pool.
//!
//! Convention: `σ` is a *rate* matrix. `γ(p, σ)` is the classical Wishart law
//! with `n = 2p` degrees of freedom and scale `Σ = (2σ)⁻¹`, so that
//! `E[X] = p·σ⁻¹`.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{BetaParams, KummerParams, WishartParams};
use crate::error::{Error, Result};
use crate::rng::SeedSpec;
use crate::symcone::{circ, ConePoint, DomainPoint, SymMat};
use crate::transform::psi;

/// A window of this many proposals without an acceptance aborts the
/// Kummer rejection sampler (acceptance rate below 1e-4).
pub const REJECTION_WINDOW: u64 = 10_000;

/// Bartlett-decomposition sampler prepared for one `γ(p, σ)`.
#[derive(Debug, Clone)]
pub struct Bartlett {
    r: usize,
    /// Lower Cholesky factor of `(2σ)⁻¹`.
    chol: DMatrix<f64>,
    /// `Gamma(p − k/2, 1)` for `k = 0..r`; `χ²(2p − k) = 2·Gamma(p − k/2)`.
    diag: Vec<Gamma<f64>>,
}

impl Bartlett {
    pub fn new(t: &WishartParams) -> Self {
        let r = t.order();
        let scale = t.sigma().spectral_map(|l| 1.0 / (2.0 * l));
        let chol =
            Cholesky::new(scale.as_matrix().clone()).expect("inverse of a cone point is positive definite").unpack();
        let diag = (0..r).map(|k| Gamma::new(t.p() - k as f64 / 2.0, 1.0).expect("shape exceeds (r-1)/2")).collect();
        Self { r, chol, diag }
    }

    /// One draw as a raw matrix, without cone validation.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.r, self.r);
        for i in 0..self.r {
            a[(i, i)] = (2.0 * self.diag[i].sample(rng)).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let la = &self.chol * a;
        &la * la.transpose()
    }
}

/// `log det(I + x)` of a raw PSD matrix through Cholesky.
pub(crate) fn logdet_i_plus_raw(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    match Cholesky::new(x + DMatrix::identity(n, n)) {
        Some(c) => 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::INFINITY,
    }
}

fn wishart_from_raw(m: DMatrix<f64>) -> Result<ConePoint> {
    ConePoint::expect_pd(SymMat::symmetrized(m), "Wishart draw")
}

/// One `γ(p, σ)` draw.
///
/// Shapes within a few tenths of `(r−1)/2` put visible mass on matrices that
/// are singular to working precision; such draws fail cone validation with
/// [`Error::InternalConsistency`] instead of being silently redrawn.
pub fn sample_wishart(t: &WishartParams, s: SeedSpec, i: u64) -> Result<ConePoint> {
    wishart_from_raw(Bartlett::new(t).draw(&mut s.rng(i)))
}

/// Two-Wishart construction: `A ~ γ(p, I)`, `B ~ γ(q, I)`, `u = (A+B)⁻¹ ∘ A`.
#[derive(Debug, Clone)]
pub struct BetaSampler {
    a: Bartlett,
    b: Bartlett,
}

impl BetaSampler {
    pub fn new(t: &BetaParams) -> Self {
        let id = ConePoint::identity(t.order());
        let wa = WishartParams::new(t.p(), id.clone()).expect("validated by BetaParams");
        let wb = WishartParams::new(t.q(), id).expect("validated by BetaParams");
        Self { a: Bartlett::new(&wa), b: Bartlett::new(&wb) }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DomainPoint> {
        let a = wishart_from_raw(self.a.draw(rng))?;
        let b = wishart_from_raw(self.b.draw(rng))?;
        let inv = a.add(&b)?.inverse();
        let u = circ(&inv, &a)?;
        let c = circ(&inv, &b)?;
        DomainPoint::with_complement(u, c).map_err(|e| Error::InternalConsistency(format!("Beta draw: {e}")))
    }
}

pub fn sample_beta(t: &BetaParams, s: SeedSpec, i: u64) -> Result<DomainPoint> {
    BetaSampler::new(t).draw(&mut s.rng(i))
}

/// Proposal counts of a rejection sampler. Merging is associative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AcceptanceStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl AcceptanceStats {
    pub fn merge(self, other: Self) -> Self {
        Self { proposals: self.proposals + other.proposals, accepted: self.accepted + other.accepted }
    }

    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.proposals as f64
    }
}

/// Rejection sampler for `K(a, b, σ)` with `b > 0`: propose `x ~ γ(a, σ)`
/// and accept with probability `det(I + x)^{−b} ≤ 1`.
#[derive(Debug, Clone)]
pub struct KummerSampler {
    proposal: Bartlett,
    b: f64,
    params: KummerParams,
}

impl KummerSampler {
    pub fn new(t: &KummerParams) -> Result<Self> {
        if !(t.b() > 0.0) {
            return Err(Error::Unsupported(format!("rejection sampler needs b > 0 (got b = {})", t.b())));
        }
        let w = WishartParams::new(t.a(), t.sigma().clone())?;
        Ok(Self { proposal: Bartlett::new(&w), b: t.b(), params: t.clone() })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(ConePoint, AcceptanceStats)> {
        let mut proposals = 0u64;
        loop {
            let x = self.proposal.draw(rng);
            proposals += 1;
            let log_accept = -self.b * logdet_i_plus_raw(&x);
            let u: f64 = rng.random();
            if u.ln() < log_accept {
                let x = wishart_from_raw(x)?;
                return Ok((x, AcceptanceStats { proposals, accepted: 1 }));
            }
            if proposals >= REJECTION_WINDOW {
                return Err(Error::PracticalFailure(format!(
                    "Kummer rejection sampler accepted nothing in {proposals} proposals \
                     (acceptance rate < 1e-4) for a = {}, b = {}, r = {}",
                    self.params.a(),
                    self.params.b(),
                    self.params.order()
                )));
            }
        }
    }
}

pub fn sample_kummer(t: &KummerParams, s: SeedSpec, i: u64) -> Result<(ConePoint, AcceptanceStats)> {
    KummerSampler::new(t)?.draw(&mut s.rng(i))
}

/// `n` Wishart draws at indices `0..n` of `s`.
pub fn sample_wishart_many(t: &WishartParams, n: usize, s: SeedSpec) -> Result<Vec<ConePoint>> {
    let b = Bartlett::new(t);
    (0..n as u64).into_par_iter().map(|i| wishart_from_raw(b.draw(&mut s.rng(i)))).collect()
}

pub fn sample_beta_many(t: &BetaParams, n: usize, s: SeedSpec) -> Result<Vec<DomainPoint>> {
    let b = BetaSampler::new(t);
    (0..n as u64).into_par_iter().map(|i| b.draw(&mut s.rng(i))).collect()
}

pub fn sample_kummer_many(t: &KummerParams, n: usize, s: SeedSpec) -> Result<(Vec<ConePoint>, AcceptanceStats)> {
    let k = KummerSampler::new(t)?;
    let draws: Vec<(ConePoint, AcceptanceStats)> =
        (0..n as u64).into_par_iter().map(|i| k.draw(&mut s.rng(i))).collect::<Result<_>>()?;
    let stats = draws.iter().fold(AcceptanceStats::default(), |acc, (_, st)| acc.merge(*st));
    Ok((draws.into_iter().map(|(x, _)| x).collect(), stats))
}

/// Law of the first coordinate `X` in a pair batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum XLaw {
    /// `X ~ K(a, b, σ)`: the independence property holds.
    Kummer,
    /// `X ~ γ(a, σ)`: negative control.
    Wishart,
}

/// Quadruples `(X_i, Y_i, U_i, V_i)` with `(U_i, V_i) = ψ(X_i, Y_i)`.
#[derive(Debug, Clone, Serialize)]
pub struct PairBatch {
    pub n: usize,
    pub x: Vec<ConePoint>,
    pub y: Vec<ConePoint>,
    pub u: Vec<DomainPoint>,
    pub v: Vec<ConePoint>,
    pub params: KummerParams,
    /// Shape `b − a` of the Wishart law of `Y`.
    pub y_shape: f64,
    pub x_law: XLaw,
    pub seed: SeedSpec,
    pub acceptance: AcceptanceStats,
}

/// Relative tolerance of the `(U, V) == ψ(X, Y)` revalidation.
const BATCH_CHECK_TOL: f64 = 1e-12;

impl PairBatch {
    /// Assembles a batch, rechecking `(U_i, V_i) == ψ(X_i, Y_i)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x: Vec<ConePoint>,
        y: Vec<ConePoint>,
        u: Vec<DomainPoint>,
        v: Vec<ConePoint>,
        params: KummerParams,
        x_law: XLaw,
        seed: SeedSpec,
        acceptance: AcceptanceStats,
    ) -> Result<Self> {
        let n = x.len();
        if y.len() != n || u.len() != n || v.len() != n {
            return Err(Error::InvalidInput("quadruple lists differ in length".into()));
        }
        for i in 0..n {
            let img = psi(&x[i], &y[i])?;
            let du = img.u.matrix().max_abs_diff(u[i].matrix());
            let dv = img.v.matrix().max_abs_diff(v[i].matrix()) / v[i].matrix().as_matrix().amax();
            if du > BATCH_CHECK_TOL || dv > BATCH_CHECK_TOL {
                return Err(Error::InternalConsistency(format!("quadruple {i} does not satisfy (U, V) = psi(X, Y)")));
            }
        }
        let y_shape = params.b() - params.a();
        Ok(Self { n, x, y, u, v, params, y_shape, x_law, seed, acceptance })
    }
}

fn check_pair_params(t: &KummerParams) -> Result<()> {
    let bound = (t.order() as f64 - 1.0) / 2.0;
    if !(t.b() - t.a() > bound) {
        return Err(Error::Domain(format!("b - a = {} must exceed (r-1)/2 = {bound}", t.b() - t.a())));
    }
    Ok(())
}

/// `X_i ~ K(a, b, σ)`, `Y_i ~ γ(b − a, σ)` independent, pushed through `ψ`.
pub fn sample_property_batch(t: &KummerParams, n: usize, s: SeedSpec) -> Result<PairBatch> {
    sample_pair_batch(t, XLaw::Kummer, n, s)
}

/// Like [`sample_property_batch`], with the law of `X` selectable.
/// The `Y` draws do not depend on `x_law`.
pub fn sample_pair_batch(t: &KummerParams, x_law: XLaw, n: usize, s: SeedSpec) -> Result<PairBatch> {
    check_pair_params(t)?;
    let (x, acceptance) = match x_law {
        XLaw::Kummer => sample_kummer_many(t, n, s.substream(1))?,
        XLaw::Wishart => {
            let w = WishartParams::new(t.a(), t.sigma().clone())?;
            let x = sample_wishart_many(&w, n, s.substream(3))?;
            let n64 = n as u64;
            (x, AcceptanceStats { proposals: n64, accepted: n64 })
        }
    };
    let wy = WishartParams::new(t.b() - t.a(), t.sigma().clone())?;
    let y = sample_wishart_many(&wy, n, s.substream(2))?;
    let images: Vec<_> = x.par_iter().zip(y.par_iter()).map(|(xi, yi)| psi(xi, yi)).collect::<Result<_>>()?;
    let (u, v) = images.into_iter().map(|img| (img.u, img.v)).unzip();
    PairBatch::new(x, y, u, v, t.clone(), x_law, s, acceptance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> ConePoint {
        ConePoint::scalar(x).unwrap()
    }

    #[test]
    fn deterministic_by_address() {
        let t = WishartParams::new(2.0, ConePoint::identity(3)).unwrap();
        let seed = SeedSpec::new(1, 2);
        assert_eq!(sample_wishart(&t, seed, 5).unwrap(), sample_wishart(&t, seed, 5).unwrap());
        assert_ne!(sample_wishart(&t, seed, 5).unwrap(), sample_wishart(&t, seed, 6).unwrap());
        let k = KummerParams::new(1.0, 2.0, s(1.0)).unwrap();
        assert_eq!(sample_kummer(&k, seed, 3).unwrap(), sample_kummer(&k, seed, 3).unwrap());
    }

    #[test]
    fn beta_draws_stay_in_domain() {
        let t = BetaParams::new(1.7, 2.2, 3).unwrap();
        let draws = sample_beta_many(&t, 10_000, SeedSpec::new(3, 0)).unwrap();
        for u in &draws {
            let e = u.matrix().eigen().eigenvalues;
            assert!(e.min() > 0.0 && e.max() < 1.0);
        }
    }

    #[test]
    fn kummer_needs_positive_b() {
        let k = KummerParams::new(1.0, 0.0, s(1.0)).unwrap();
        assert!(matches!(sample_kummer(&k, SeedSpec::new(0, 0), 0), Err(Error::Unsupported(_))));
        let k = KummerParams::new(1.0, -1.0, s(1.0)).unwrap();
        assert!(matches!(KummerSampler::new(&k), Err(Error::Unsupported(_))));
    }

    #[test]
    fn tiny_b_accepts_almost_everything() {
        let k = KummerParams::new(1.0, 1e-9, s(1.0)).unwrap();
        let (_, st) = sample_kummer_many(&k, 2000, SeedSpec::new(4, 0)).unwrap();
        assert!(st.rate() > 0.999);
    }

    #[test]
    fn hopeless_acceptance_fails_with_diagnostics() {
        let k = KummerParams::new(20.0, 40.0, s(0.01)).unwrap();
        let err = sample_kummer(&k, SeedSpec::new(0, 0), 0).unwrap_err();
        assert!(matches!(err, Error::PracticalFailure(_)), "{err}");
        assert!(err.to_string().contains("a = 20"));
    }

    #[test]
    fn batch_edge_cases() {
        let k = KummerParams::new(1.5, 3.5, s(1.0)).unwrap();
        let b = sample_property_batch(&k, 0, SeedSpec::new(0, 0)).unwrap();
        assert_eq!(b.n, 0);
        assert!(b.x.is_empty() && b.u.is_empty());
        let bad = KummerParams::new(1.5, 1.6, ConePoint::identity(2)).unwrap();
        assert!(matches!(sample_property_batch(&bad, 10, SeedSpec::new(0, 0)), Err(Error::Domain(_))));
    }

    #[test]
    fn batch_rejects_inconsistent_quadruple() {
        let k = KummerParams::new(1.5, 3.5, s(1.0)).unwrap();
        let b = sample_property_batch(&k, 3, SeedSpec::new(1, 0)).unwrap();
        let mut v = b.v.clone();
        v.swap(0, 1);
        let r = PairBatch::new(b.x, b.y, b.u, v, k, XLaw::Kummer, b.seed, b.acceptance);
        assert!(matches!(r, Err(Error::InternalConsistency(_))));
    }

    #[test]
    fn acceptance_stats_merge() {
        let a = AcceptanceStats { proposals: 10, accepted: 2 };
        let b = AcceptanceStats { proposals: 5, accepted: 1 };
        let c = AcceptanceStats { proposals: 7, accepted: 7 };
        assert_eq!(a.merge(b).merge(c), a.merge(b.merge(c)));
        assert!((a.merge(b).rate() - 0.2).abs() < 1e-15);
    }
}
