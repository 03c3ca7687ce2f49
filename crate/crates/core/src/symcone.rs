//! Algebra on symmetric matrices and the cone of positive-definite matrices.
//!
//! Every cone point caches its symmetric eigendecomposition, so square roots,
//! inverses and log-determinants are spectral maps of the cached eigenvalues.
//! Determinants are always carried as sums of log-eigenvalues.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

/// Relative threshold for strict positive definiteness: the smallest
/// eigenvalue must exceed `PD_REL_TOL` times the spectral norm.
pub const PD_REL_TOL: f64 = 1e-12;

/// Relative asymmetry accepted (and symmetrized away) on construction.
pub const SYMMETRY_REL_TOL: f64 = 1e-10;

/// Ridge added to `A·Aᵀ` by [`random_cone_point`].
pub const RANDOM_POINT_RIDGE: f64 = 1e-3;

/// A real symmetric `r×r` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    m: DMatrix<f64>,
}

impl SymMat {
    /// Builds a symmetric matrix, replacing `m` by `(m + mᵀ)/2`.
    ///
    /// Fails when `m` is not square, is empty, has non-finite entries, or its
    /// asymmetry exceeds [`SYMMETRY_REL_TOL`] times its Frobenius norm.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let asym = (&m - m.transpose()).amax() / 2.0;
        let norm = m.norm();
        if asym > SYMMETRY_REL_TOL * norm {
            return Err(Error::InvalidInput(format!("matrix is not symmetric (asymmetry {asym:e}, norm {norm:e})")));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without the asymmetry check; for products that are
    /// symmetric in exact arithmetic.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let m = (&m + m.transpose()) * 0.5;
        Self { m }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if rows.iter().any(|row| row.len() != r) {
            return Err(Error::InvalidInput("rows must all have length r".into()));
        }
        Self::from_matrix(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
    }

    /// Builds from the row-major upper triangle (`r(r+1)/2` values).
    pub fn from_upper(r: usize, upper: &[f64]) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidInput("matrix order must be at least 1".into()));
        }
        if upper.len() != r * (r + 1) / 2 {
            return Err(Error::InvalidInput(format!(
                "upper triangle of order {r} needs {} values, got {}",
                r * (r + 1) / 2,
                upper.len()
            )));
        }
        let mut m = DMatrix::zeros(r, r);
        let mut k = 0;
        for i in 0..r {
            for j in i..r {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        Self::from_matrix(m)
    }

    pub fn identity(r: usize) -> Self {
        Self { m: DMatrix::identity(r, r) }
    }

    pub fn scaled_identity(r: usize, s: f64) -> Self {
        Self { m: DMatrix::identity(r, r) * s }
    }

    pub fn zeros(r: usize) -> Self {
        Self { m: DMatrix::zeros(r, r) }
    }

    /// Matrix order `r`.
    pub fn order(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn upper(&self) -> Vec<f64> {
        let r = self.order();
        let mut out = Vec::with_capacity(r * (r + 1) / 2);
        for i in 0..r {
            for j in i..r {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.m.row_iter().map(|row| row.iter().copied().collect()).collect()
    }

    /// Trace inner product `⟨x, y⟩ = tr(x·y)`.
    pub fn inner(&self, other: &SymMat) -> f64 {
        self.m.dot(&other.m)
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        Self { m: &self.m + &other.m }
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        Self { m: &self.m - &other.m }
    }

    pub fn scale(&self, s: f64) -> SymMat {
        Self { m: &self.m * s }
    }

    /// `self + s·other`
    pub fn axpy(&self, s: f64, other: &SymMat) -> SymMat {
        Self { m: &self.m + &other.m * s }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn max_abs_diff(&self, other: &SymMat) -> f64 {
        (&self.m - &other.m).amax()
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.m.clone())
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.eigen().eigenvalues.amax()
    }

    /// Coordinates in the orthonormal basis of [`sym_basis`].
    pub fn coords(&self) -> Vec<f64> {
        sym_basis(self.order()).iter().map(|e| self.inner(e)).collect()
    }

    /// Inverse of [`SymMat::coords`].
    pub fn from_coords(r: usize, coords: &[f64]) -> Result<Self> {
        let basis = sym_basis(r);
        if coords.len() != basis.len() {
            return Err(Error::InvalidInput(format!("expected {} coordinates, got {}", basis.len(), coords.len())));
        }
        let mut m = SymMat::zeros(r);
        for (c, e) in coords.iter().zip(&basis) {
            m = m.axpy(*c, e);
        }
        Ok(m)
    }

    /// Parses either a full array-of-arrays matrix or the compact
    /// `{"r": r, "upper": [...]}` form. `path` prefixes error messages.
    pub fn from_json_value(v: &Value, path: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidInput(format!("{path}: {msg}"));
        match v {
            Value::Array(rows) => {
                let mut parsed = Vec::with_capacity(rows.len());
                for (i, row) in rows.iter().enumerate() {
                    let row = row.as_array().ok_or_else(|| bad(&format!("[{i}] must be an array of numbers")))?;
                    let vals = row
                        .iter()
                        .enumerate()
                        .map(|(j, x)| x.as_f64().ok_or_else(|| bad(&format!("[{i}][{j}] must be a number"))))
                        .collect::<Result<Vec<f64>>>()?;
                    parsed.push(vals);
                }
                Self::from_rows(&parsed).map_err(|e| bad(&e.to_string()))
            }
            Value::Object(obj) => {
                if let Some(k) = obj.keys().find(|k| *k != "r" && *k != "upper") {
                    return Err(bad(&format!("unknown key '{k}' in compact matrix")));
                }
                let r = obj.get("r").and_then(Value::as_u64).ok_or_else(|| bad(".r must be a positive integer"))?;
                let upper = obj
                    .get("upper")
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad(".upper must be an array of numbers"))?
                    .iter()
                    .enumerate()
                    .map(|(k, x)| x.as_f64().ok_or_else(|| bad(&format!(".upper[{k}] must be a number"))))
                    .collect::<Result<Vec<f64>>>()?;
                Self::from_upper(r as usize, &upper).map_err(|e| bad(&e.to_string()))
            }
            _ => Err(bad("expected a matrix: array of arrays or {\"r\": r, \"upper\": [...]}")),
        }
    }
}

#[derive(Serialize)]
struct CompactMatrix {
    r: usize,
    upper: Vec<f64>,
}

impl Serialize for SymMat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CompactMatrix { r: self.order(), upper: self.upper() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        SymMat::from_json_value(&v, "$").map_err(serde::de::Error::custom)
    }
}

/// Orthonormal basis of `Sym(r)` under the trace inner product:
/// `E_ii` followed by `(E_ij + E_ji)/√2` for `i < j`, in row-major order.
pub fn sym_basis(r: usize) -> Vec<SymMat> {
    let mut out = Vec::with_capacity(r * (r + 1) / 2);
    let w = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..r {
        for j in i..r {
            let mut m = DMatrix::zeros(r, r);
            if i == j {
                m[(i, i)] = 1.0;
            } else {
                m[(i, j)] = w;
                m[(j, i)] = w;
            }
            out.push(SymMat { m });
        }
    }
    out
}

/// Dimension `r(r+1)/2` of `Sym(r)`.
pub fn sym_dim(r: usize) -> usize {
    r * (r + 1) / 2
}

/// A strictly positive-definite symmetric matrix with its cached
/// eigendecomposition.
#[derive(Debug, Clone)]
pub struct ConePoint {
    m: SymMat,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

impl PartialEq for ConePoint {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
    }
}

impl ConePoint {
    /// Validates `m ∈ V` with the default relative tolerance.
    pub fn new(m: SymMat) -> Result<Self> {
        Self::with_tol(m, PD_REL_TOL)
    }

    /// Validates `m ∈ V`: smallest eigenvalue above `rel_tol` × spectral norm.
    pub fn with_tol(m: SymMat, rel_tol: f64) -> Result<Self> {
        let eig = m.eigen();
        let min = eig.eigenvalues.min();
        let norm = eig.eigenvalues.amax();
        if !(min > rel_tol * norm) {
            return Err(Error::Domain(format!(
                "matrix is not positive definite (smallest eigenvalue {min:e}, spectral norm {norm:e})"
            )));
        }
        Ok(Self { m, eigvals: eig.eigenvalues, eigvecs: eig.eigenvectors })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SymMat::from_rows(rows)?)
    }

    pub fn identity(r: usize) -> Self {
        Self::scaled_identity(r, 1.0)
    }

    /// `s·I`; panics unless `s > 0`.
    pub fn scaled_identity(r: usize, s: f64) -> Self {
        assert!(s > 0.0, "scaled identity needs a positive scale");
        Self {
            m: SymMat::scaled_identity(r, s),
            eigvals: DVector::from_element(r, s),
            eigvecs: DMatrix::identity(r, r),
        }
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(SymMat::from_rows(&[vec![x]])?)
    }

    /// Result of an operation that is PD in exact arithmetic; failure is an
    /// internal-consistency error.
    pub(crate) fn expect_pd(m: SymMat, what: &str) -> Result<Self> {
        Self::new(m).map_err(|e| Error::InternalConsistency(format!("{what}: {e}")))
    }

    pub fn matrix(&self) -> &SymMat {
        &self.m
    }

    pub fn into_matrix(self) -> SymMat {
        self.m
    }

    pub fn order(&self) -> usize {
        self.m.order()
    }

    pub fn eig_min(&self) -> f64 {
        self.eigvals.min()
    }

    pub fn eig_max(&self) -> f64 {
        self.eigvals.max()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigvals
    }

    /// `Q·diag(f(λ))·Qᵀ`
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let d = DVector::from_iterator(self.eigvals.len(), self.eigvals.iter().map(|&l| f(l)));
        let m = &self.eigvecs * DMatrix::from_diagonal(&d) * self.eigvecs.transpose();
        SymMat::symmetrized(m)
    }

    /// Spectral map whose result is known to be PD; reuses the eigenvectors.
    pub(crate) fn spectral_map_pd(&self, f: impl Fn(f64) -> f64) -> ConePoint {
        let vals = DVector::from_iterator(self.eigvals.len(), self.eigvals.iter().map(|&l| f(l)));
        let m = &self.eigvecs * DMatrix::from_diagonal(&vals) * self.eigvecs.transpose();
        ConePoint { m: SymMat::symmetrized(m), eigvals: vals, eigvecs: self.eigvecs.clone() }
    }

    pub fn sqrt(&self) -> ConePoint {
        self.spectral_map_pd(f64::sqrt)
    }

    pub fn inverse(&self) -> ConePoint {
        self.spectral_map_pd(|l| 1.0 / l)
    }

    pub fn inv_sqrt(&self) -> ConePoint {
        self.spectral_map_pd(|l| 1.0 / l.sqrt())
    }

    pub fn logdet(&self) -> f64 {
        self.eigvals.iter().map(|l| l.ln()).sum()
    }

    /// `log det(I + x)`
    pub fn logdet_i_plus(&self) -> f64 {
        self.eigvals.iter().map(|l| l.ln_1p()).sum()
    }

    /// `log det(I + x⁻¹)`
    pub fn logdet_i_plus_inv(&self) -> f64 {
        self.eigvals.iter().map(|l| (1.0 / l).ln_1p()).sum()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    /// The single entry of a `1×1` point.
    pub fn get_scalar(&self) -> f64 {
        self.m.get(0, 0)
    }

    pub fn inner(&self, other: &SymMat) -> f64 {
        self.m.inner(other)
    }

    /// Sum of two cone points (always in the cone).
    pub fn add(&self, other: &ConePoint) -> Result<ConePoint> {
        check_orders(self, other)?;
        ConePoint::expect_pd(self.m.add(&other.m), "sum of cone points")
    }
}

impl Serialize for ConePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.m.serialize(s)
    }
}

/// A point of `D = {u ∈ V : I − u ∈ V}`.
///
/// The complement `I − u` is stored alongside `u`. Constructors that know a
/// cancellation-free formula for it use that formula, so `log det(I − u)`
/// stays accurate near the boundary where `I − u` is nearly singular.
#[derive(Debug, Clone)]
pub struct DomainPoint {
    u: ConePoint,
    c: ConePoint,
}

/// Allowed `‖u + c − I‖_max` for an explicitly supplied complement.
const COMPLEMENT_TOL: f64 = 1e-10;

impl DomainPoint {
    pub fn new(u: ConePoint) -> Result<Self> {
        let lmax = u.eig_max();
        let lmin = u.eig_min();
        // spectrum of I − u is 1 − λ
        let norm = (1.0 - lmin).abs().max((1.0 - lmax).abs());
        if !(1.0 - lmax > PD_REL_TOL * norm) {
            return Err(Error::Domain(format!("I - u is not positive definite (largest eigenvalue of u is {lmax})")));
        }
        let c = u.spectral_map_pd(|l| 1.0 - l);
        Ok(Self { u, c })
    }

    /// `u` together with an independently computed `I − u`.
    pub(crate) fn with_complement(u: ConePoint, c: ConePoint) -> Result<Self> {
        check_orders(&u, &c)?;
        let r = u.order();
        let gap = (u.matrix().as_matrix() + c.matrix().as_matrix() - DMatrix::identity(r, r)).amax();
        if !(gap <= COMPLEMENT_TOL) {
            return Err(Error::InternalConsistency(format!("u + (I - u) differs from I by {gap:e}")));
        }
        Ok(Self { u, c })
    }

    pub fn from_matrix(m: SymMat) -> Result<Self> {
        Self::new(ConePoint::new(m)?)
    }

    pub fn point(&self) -> &ConePoint {
        &self.u
    }

    /// `I − u`
    pub fn complement(&self) -> &ConePoint {
        &self.c
    }

    pub fn matrix(&self) -> &SymMat {
        self.u.matrix()
    }

    pub fn order(&self) -> usize {
        self.u.order()
    }

    pub fn logdet(&self) -> f64 {
        self.u.logdet()
    }

    /// `log det(I − u)`
    pub fn logdet_i_minus(&self) -> f64 {
        self.c.logdet()
    }

    /// Smallest eigenvalue of `I − u`.
    pub fn complement_eig_min(&self) -> f64 {
        self.c.eig_min()
    }
}

impl PartialEq for DomainPoint {
    fn eq(&self, other: &Self) -> bool {
        self.u == other.u
    }
}

impl Serialize for DomainPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.u.serialize(s)
    }
}

pub(crate) fn check_orders(x: &ConePoint, y: &ConePoint) -> Result<()> {
    if x.order() != y.order() {
        return Err(Error::InvalidInput(format!("matrix orders differ: {} vs {}", x.order(), y.order())));
    }
    Ok(())
}

/// The unique positive-definite square root.
pub fn pd_sqrt(x: &ConePoint) -> ConePoint {
    x.sqrt()
}

/// `x ∘ y = x^{1/2}·y·x^{1/2}`
pub fn circ(x: &ConePoint, y: &ConePoint) -> Result<ConePoint> {
    check_orders(x, y)?;
    let s = x.sqrt();
    let m = s.matrix().as_matrix() * y.matrix().as_matrix() * s.matrix().as_matrix();
    ConePoint::expect_pd(SymMat::symmetrized(m), "x∘y")
}

/// `u = (I + (x+y)⁻¹) ∘ (I + x⁻¹)⁻¹`, which always lies in `D`.
pub fn kummer_u(x: &ConePoint, y: &ConePoint) -> Result<DomainPoint> {
    let s = x.add(y)?;
    kummer_u_with_sum(x, y, &s)
}

/// `s` must be `x + y`.
pub(crate) fn kummer_u_with_sum(x: &ConePoint, y: &ConePoint, s: &ConePoint) -> Result<DomainPoint> {
    let t = s.spectral_map(|l| (1.0 + 1.0 / l).sqrt());
    let t = t.as_matrix();
    // (I + x⁻¹)⁻¹ = x (I + x)⁻¹
    let w = x.spectral_map(|l| l / (1.0 + l));
    let u = ConePoint::expect_pd(SymMat::symmetrized(t * w.as_matrix() * t), "u")?;
    // I − u = T((I+x)⁻¹ − (I+s)⁻¹)T = T (I+x)⁻¹ y (I+s)⁻¹ T
    let left = t * x.spectral_map(|l| 1.0 / (1.0 + l)).as_matrix();
    let right = s.spectral_map(|l| 1.0 / (1.0 + l)).as_matrix() * t;
    let c = ConePoint::expect_pd(SymMat::symmetrized(left * y.matrix().as_matrix() * right), "I - u")?;
    DomainPoint::with_complement(u, c)
}

/// Log-space residuals of the two determinant identities satisfied by
/// [`kummer_u`]:
///
/// `det u = det(I+x+y)/det(x+y) · det x/det(I+x)` and
/// `det(I−u) = det y / (det(I+x)·det(x+y))`.
pub fn prok1_residual(x: &ConePoint, y: &ConePoint) -> Result<(f64, f64)> {
    let s = x.add(y)?;
    let u = kummer_u_with_sum(x, y, &s)?;
    let rhs_u = s.logdet_i_plus() - s.logdet() + x.logdet() - x.logdet_i_plus();
    let rhs_c = y.logdet() - x.logdet_i_plus() - s.logdet();
    Ok(((u.logdet() - rhs_u).abs(), (u.logdet_i_minus() - rhs_c).abs()))
}

/// Canonical random test point `A·Aᵀ + ε·I` with `A` standard normal and
/// `ε = RANDOM_POINT_RIDGE`.
pub fn random_cone_point<R: Rng + ?Sized>(r: usize, rng: &mut R) -> ConePoint {
    let a = DMatrix::<f64>::from_fn(r, r, |_, _| rng.sample(StandardNormal));
    let m = &a * a.transpose() + DMatrix::identity(r, r) * RANDOM_POINT_RIDGE;
    ConePoint::new(SymMat::symmetrized(m)).expect("A·Aᵀ + εI is positive definite")
}

/// A random point of `I + V`.
pub fn random_shifted_point<R: Rng + ?Sized>(r: usize, rng: &mut R) -> ConePoint {
    let x = random_cone_point(r, rng);
    x.spectral_map_pd(|l| l + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m2(a: f64, b: f64, c: f64) -> ConePoint {
        ConePoint::from_rows(&[vec![a, b], vec![b, c]]).unwrap()
    }

    #[test]
    fn sqrt_of_identity_and_scalar() {
        let s = pd_sqrt(&ConePoint::identity(3));
        assert!(s.matrix().max_abs_diff(&SymMat::identity(3)) < 1e-15);
        let s = pd_sqrt(&ConePoint::scalar(4.0).unwrap());
        assert!((s.matrix().get(0, 0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sqrt_squares_back() {
        let x = m2(2.0, 1.0, 2.0);
        let s = pd_sqrt(&x);
        let sq = s.matrix().as_matrix() * s.matrix().as_matrix();
        assert!((sq - x.matrix().as_matrix()).amax() < 1e-12);
        assert!(s.eig_min() > 0.0);
    }

    #[test]
    fn non_pd_rejected() {
        let m = SymMat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(ConePoint::new(m), Err(Error::Domain(_))));
        let z = SymMat::zeros(2);
        assert!(ConePoint::new(z).is_err());
        assert!(ConePoint::scalar(-1.0).is_err());
    }

    #[test]
    fn asymmetric_input_rejected_small_asymmetry_symmetrized() {
        assert!(SymMat::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        let m = SymMat::from_rows(&[vec![1.0, 0.5], vec![0.5 + 1e-14, 1.0]]).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn circ_identity_and_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_cone_point(3, &mut rng);
        let z = circ(&ConePoint::identity(3), &y).unwrap();
        assert!(z.matrix().max_abs_diff(y.matrix()) < 1e-12);
        let z = circ(&y, &ConePoint::identity(3)).unwrap();
        assert!(z.matrix().max_abs_diff(y.matrix()) < 1e-12 * y.eig_max());
        let z = circ(&ConePoint::scalar(4.0).unwrap(), &ConePoint::scalar(3.0).unwrap()).unwrap();
        assert!((z.matrix().get(0, 0) - 12.0).abs() < 1e-13);
    }

    #[test]
    fn circ_determinant_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for r in [1, 2, 3, 5] {
            for _ in 0..50 {
                let x = random_cone_point(r, &mut rng);
                let y = random_cone_point(r, &mut rng);
                let z = circ(&x, &y).unwrap();
                // fresh eigendecomposition of the product, in log space
                let log_z: f64 = z.matrix().eigen().eigenvalues.iter().map(|l| l.ln()).sum();
                let rel = (log_z - x.logdet() - y.logdet()).exp_m1().abs();
                // eigenvalue error floor is ~ε·κ(z); canonical points reach κ ~ 2e6
                let kz = z.eig_max() / z.eig_min();
                assert!(rel < 1e-10_f64.max(1e-15 * kz), "r={r} rel={rel:e} cond={kz:e}");
            }
        }
    }

    #[test]
    fn circ_is_noncommutative() {
        let x = m2(2.0, 0.0, 1.0);
        let y = m2(1.0, 0.5, 1.0);
        let xy = circ(&x, &y).unwrap();
        let yx = circ(&y, &x).unwrap();
        assert!(xy.matrix().max_abs_diff(yx.matrix()) > 1e-3);
    }

    #[test]
    fn kummer_u_scalar_and_identity() {
        let one = ConePoint::scalar(1.0).unwrap();
        let u = kummer_u(&one, &one).unwrap();
        assert!((u.matrix().get(0, 0) - 0.75).abs() < 1e-15);
        let i3 = ConePoint::identity(3);
        let u = kummer_u(&i3, &i3).unwrap();
        assert!(u.matrix().max_abs_diff(&SymMat::scaled_identity(3, 0.75)) < 1e-15);
    }

    #[test]
    fn kummer_u_lands_in_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = random_cone_point(3, &mut rng);
            let y = random_cone_point(3, &mut rng);
            let u = kummer_u(&x, &y).unwrap();
            // independent eigenvalue oracle on the raw matrices
            let eu = u.matrix().eigen().eigenvalues;
            assert!(eu.min() > 0.0 && eu.max() < 1.0);
        }
    }

    #[test]
    fn prok1_scalar_hand_values() {
        let one = ConePoint::scalar(1.0).unwrap();
        let u = kummer_u(&one, &one).unwrap();
        assert!((u.logdet() - 0.75f64.ln()).abs() < 1e-15);
        assert!((u.logdet_i_minus() - 0.25f64.ln()).abs() < 1e-15);
        let (a, b) = prok1_residual(&one, &one).unwrap();
        assert!(a < 1e-15 && b < 1e-15);
        for r in [1, 2, 4] {
            let i = ConePoint::identity(r);
            let (a, b) = prok1_residual(&i, &i).unwrap();
            assert!(a < 1e-12 && b < 1e-12);
        }
    }

    #[test]
    fn order_mismatch_is_input_error() {
        let a = ConePoint::identity(2);
        let b = ConePoint::identity(3);
        assert!(matches!(circ(&a, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn json_forms() {
        let full: Value = serde_json::from_str("[[2,1],[1,3]]").unwrap();
        let compact: Value = serde_json::from_str(r#"{"r":2,"upper":[2,1,3]}"#).unwrap();
        let a = SymMat::from_json_value(&full, "$").unwrap();
        let b = SymMat::from_json_value(&compact, "$").unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"{"r":2,"upper":[2.0,1.0,3.0]}"#);
        let bad: Value = serde_json::from_str("[[1,2],[3]]").unwrap();
        let err = SymMat::from_json_value(&bad, "$.sigma").unwrap_err().to_string();
        assert!(err.contains("$.sigma"), "{err}");
        let bad: Value = serde_json::from_str(r#"{"r":2,"upper":[1,2]}"#).unwrap();
        assert!(SymMat::from_json_value(&bad, "$").is_err());
    }

    #[test]
    fn basis_is_orthonormal_and_coords_roundtrip() {
        let b = sym_basis(3);
        for (i, e) in b.iter().enumerate() {
            for (j, f) in b.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e.inner(f) - want).abs() < 1e-15);
            }
        }
        let m = SymMat::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 5.0], vec![3.0, 5.0, 6.0]]).unwrap();
        let back = SymMat::from_coords(3, &m.coords()).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn domain_point_bounds() {
        assert!(DomainPoint::from_matrix(SymMat::scaled_identity(2, 0.5)).is_ok());
        assert!(DomainPoint::from_matrix(SymMat::scaled_identity(2, 1.0)).is_err());
        assert!(DomainPoint::from_matrix(SymMat::scaled_identity(2, 1.5)).is_err());
    }

    #[test]
    fn complement_accurate_near_boundary() {
        // I − u = y / ((x+y)(1+x)) for scalars; 1 − u would lose ~8 digits here
        let (x, y) = (1.0, 1e-8);
        let u = kummer_u(&ConePoint::scalar(x).unwrap(), &ConePoint::scalar(y).unwrap()).unwrap();
        let exact = (y / ((x + y) * (1.0 + x))).ln();
        assert!((u.logdet_i_minus() - exact).abs() < 1e-14);
        let c = u.complement().matrix().as_matrix() + u.matrix().as_matrix();
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
    }
}
