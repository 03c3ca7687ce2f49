//! Residual checks for the Kummer–Wishart functional equation
//!
//! `f(x) + g(y) = k(x+y) + h((I+(x+y)⁻¹) ∘ (I+x⁻¹)⁻¹)`
//!
//! and its solution family
//!
//! ```text
//! f(x) = −⟨c,x⟩ + p·log det x − q·log det(I+x) + C₁
//! g(x) = −⟨c,x⟩ + (q−p)·log det x + C₂
//! k(x) = −⟨c,x⟩ − p·log det(I+x) + q·log det x + C₃
//! h(u) = p·log det u + (q−p)·log det(I−u) + C₄,     C₁ + C₂ = C₃ + C₄
//! ```
//!
//! together with the Pexider and scalar lemmas it rests on, the
//! change-of-variables identity between the Kummer ⊗ Wishart and
//! Beta ⊗ Kummer kernels, and a least-squares fit that recovers
//! `(p, q, c, C₁, C₂)` from sampled values of `f` and `g`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dist::{beta_logkernel, kummer_logkernel, wishart_logkernel, BetaParams, KummerParams, WishartParams};
use crate::error::{Error, Result};
use crate::rng::SeedSpec;
use crate::symcone::{
    circ, kummer_u, random_cone_point, random_shifted_point, sym_dim, ConePoint, DomainPoint, SymMat, PD_REL_TOL,
};
use crate::transform::{log_jacobian, psi};

/// Tolerance for identities on matrices (accumulated eigendecomposition error).
pub const MATRIX_IDENTITY_TOL: f64 = 1e-9;
/// Tolerance for identities on scalars and commuting arguments.
pub const SCALAR_IDENTITY_TOL: f64 = 1e-12;

/// Parameters of the solution family. `C₄` is derived so that
/// `C₁ + C₂ = C₃ + C₄` holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionParams {
    pub p: f64,
    pub q: f64,
    pub c: SymMat,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl SolutionParams {
    pub fn new(p: f64, q: f64, c: SymMat, c1: f64, c2: f64, c3: f64) -> Self {
        Self { p, q, c, c1, c2, c3, c4: c1 + c2 - c3 }
    }

    pub fn order(&self) -> usize {
        self.c.order()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    F,
    G,
    K,
    H,
}

/// One line of the solution family. Role `h` needs `x ∈ D`.
pub fn sol_eval(role: Role, t: &SolutionParams, x: &ConePoint) -> Result<f64> {
    if x.order() != t.order() {
        return Err(Error::InvalidInput(format!("point has order {}, parameters have order {}", x.order(), t.order())));
    }
    let lin = -x.inner(&t.c);
    Ok(match role {
        Role::F => lin + t.p * x.logdet() - t.q * x.logdet_i_plus() + t.c1,
        Role::G => lin + (t.q - t.p) * x.logdet() + t.c2,
        Role::K => lin - t.p * x.logdet_i_plus() + t.q * x.logdet() + t.c3,
        Role::H => {
            let u =
                DomainPoint::new(x.clone()).map_err(|e| Error::Domain(format!("role h needs a point of D: {e}")))?;
            h_eval(t, &u)
        }
    })
}

fn h_eval(t: &SolutionParams, u: &DomainPoint) -> f64 {
    t.p * u.logdet() + (t.q - t.p) * u.logdet_i_minus() + t.c4
}

/// `f(x) + g(y) − k(x+y) − h(u(x, y))`; zero for every parameter choice.
pub fn maineq_residual(t: &SolutionParams, x: &ConePoint, y: &ConePoint) -> Result<f64> {
    let s = x.add(y)?;
    let u = kummer_u(x, y)?;
    Ok(sol_eval(Role::F, t, x)? + sol_eval(Role::G, t, y)? - sol_eval(Role::K, t, &s)? - h_eval(t, &u))
}

fn check_shifted(x: &ConePoint, name: &str) -> Result<()> {
    // x − I ∈ V
    let (lo, hi) = (x.eig_min() - 1.0, x.eig_max() - 1.0);
    if !(lo > PD_REL_TOL * hi.abs().max(lo.abs())) {
        return Err(Error::Domain(format!("{name} - I is not positive definite")));
    }
    Ok(())
}

/// `A(x) + B(y) − C(x ∘ y)` for `A = p·log det + α`, `B = p·log det + β`,
/// `C = p·log det + α + β` on `I + V`.
pub fn pexider_residual(p: f64, alpha: f64, beta: f64, x: &ConePoint, y: &ConePoint) -> Result<f64> {
    check_shifted(x, "x")?;
    check_shifted(y, "y")?;
    let z = circ(x, y)?;
    Ok((p * x.logdet() + alpha) + (p * y.logdet() + beta) - (p * z.logdet() + alpha + beta))
}

/// `H(x/(1+x)) + G(y) − H((1+x+y)/(x+y)·x/(1+x)) − G(x+y)` with
/// `H(t) = q·log(1−t) + C₂` and `G(t) = q·log t + C₁`.
pub fn scalar1dim_residual(q: f64, c1: f64, c2: f64, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
        return Err(Error::Domain(format!("x and y must be positive (got {x}, {y})")));
    }
    let h = |t: f64| q * (-t).ln_1p() + c2;
    let g = |t: f64| q * t.ln() + c1;
    let t1 = x / (1.0 + x);
    let t2 = (1.0 + x + y) / (x + y) * (x / (1.0 + x));
    Ok(h(t1) + g(y) - h(t2) - g(x + y))
}

/// Log of the Kummer ⊗ Wishart kernel at `(x, y)` minus the log of the
/// Beta ⊗ Kummer kernel at `ψ(x, y)` minus `log J(x, y)`, with
/// `(X, Y) ~ K(a, b, σ) ⊗ γ(b−a, σ)` and `(U, V) ~ Beta(a, b−a) ⊗ K(b, a, σ)`.
/// Unnormalized kernels make this identically zero.
pub fn density_consistency(a: f64, b: f64, sigma: &ConePoint, x: &ConePoint, y: &ConePoint) -> Result<f64> {
    let laws = PairLaws::new(a, b, sigma)?;
    laws.residual(x, y)
}

/// The four laws entering [`density_consistency`], validated once.
#[derive(Debug, Clone)]
pub struct PairLaws {
    x: KummerParams,
    y: WishartParams,
    u: BetaParams,
    v: KummerParams,
}

impl PairLaws {
    pub fn new(a: f64, b: f64, sigma: &ConePoint) -> Result<Self> {
        let r = sigma.order();
        Ok(Self {
            x: KummerParams::new(a, b, sigma.clone())?,
            y: WishartParams::new(b - a, sigma.clone())?,
            u: BetaParams::new(a, b - a, r)?,
            v: KummerParams::new(b, a, sigma.clone())?,
        })
    }

    pub fn residual(&self, x: &ConePoint, y: &ConePoint) -> Result<f64> {
        let img = psi(x, y)?;
        self.residual_with_image(x, y, &img.u, &img.v)
    }

    pub fn residual_with_image(&self, x: &ConePoint, y: &ConePoint, u: &DomainPoint, v: &ConePoint) -> Result<f64> {
        Ok(kummer_logkernel(x, &self.x)? + wishart_logkernel(y, &self.y)?
            - beta_logkernel(u, &self.u)?
            - kummer_logkernel(v, &self.v)?
            - log_jacobian(x, y)?)
    }
}

/// Tolerances of [`fit_params`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Ratio of smallest to largest singular value below which the design is
    /// declared rank deficient.
    pub rank_tol: f64,
    /// Relative residual norm above which the data are not of the family's form.
    pub residual_tol: f64,
    /// Allowed disagreement between the `f` and `g` estimates of `c` and `q − p`.
    pub cross_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { rank_tol: 1e-12, residual_tol: 1e-8, cross_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub f_residual_rel: f64,
    pub g_residual_rel: f64,
    pub f_condition: f64,
    pub g_condition: f64,
    /// `‖ĉ_f − ĉ_g‖_F`
    pub c_discrepancy: f64,
    /// `|(q−p)_g − (q̂ − p̂)_f|`
    pub shape_discrepancy: f64,
}

/// Output of [`fit_params`]. `C₃`/`C₄` are only identified through their sum,
/// so the fit reports `C₄ = 0`, `C₃ = C₁ + C₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: SolutionParams,
    /// `q − p` as estimated from `g` alone.
    pub g_shape: f64,
    pub diagnostics: FitDiagnostics,
    pub model_mismatch: bool,
    pub mismatch_reasons: Vec<String>,
}

struct LstsqFit {
    coef: DVector<f64>,
    residual_rel: f64,
    condition: f64,
}

fn lstsq(design: DMatrix<f64>, rhs: DVector<f64>, rank_tol: f64, what: &str) -> Result<LstsqFit> {
    // column scaling keeps the singular-value ratio meaningful
    let scales: Vec<f64> = design.column_iter().map(|c| c.norm().max(f64::MIN_POSITIVE)).collect();
    let mut scaled = design.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > rank_tol * smax) {
        return Err(Error::IllPosed(format!(
            "{what}: design matrix is rank deficient (singular values {smin:e} / {smax:e})"
        )));
    }
    let z = svd.solve(&rhs, 0.0).map_err(|e| Error::Numeric(format!("{what}: least squares failed: {e}")))?;
    let coef = DVector::from_iterator(z.len(), z.iter().zip(&scales).map(|(v, s)| v / s));
    let resid = &design * &coef - &rhs;
    Ok(LstsqFit { residual_rel: resid.norm() / rhs.norm().max(1.0), condition: smax / smin, coef })
}

/// Recovers `(p, q, c, C₁, C₂)` from values of `f` at `points` and of `g` at
/// `g_points` by linear least squares, and flags data that do not fit the
/// solution family.
pub fn fit_params(
    points: &[ConePoint],
    f_values: &[f64],
    g_points: &[ConePoint],
    g_values: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    if points.len() != f_values.len() || g_points.len() != g_values.len() {
        return Err(Error::InvalidInput("points and values differ in length".into()));
    }
    let r = points
        .first()
        .or(g_points.first())
        .map(ConePoint::order)
        .ok_or_else(|| Error::IllPosed("no points given".into()))?;
    if points.iter().chain(g_points).any(|x| x.order() != r) {
        return Err(Error::InvalidInput("points have different orders".into()));
    }
    let d = sym_dim(r);
    let need = d + 3;
    if points.len() < need || g_points.len() < need {
        return Err(Error::IllPosed(format!(
            "need at least {need} points for each of f and g (got {} and {})",
            points.len(),
            g_points.len()
        )));
    }
    let lin_features = |x: &ConePoint| -> Vec<f64> { x.matrix().coords().iter().map(|v| -v).collect() };

    let mut fd = DMatrix::zeros(points.len(), d + 3);
    for (i, x) in points.iter().enumerate() {
        for (j, v) in lin_features(x).into_iter().enumerate() {
            fd[(i, j)] = v;
        }
        fd[(i, d)] = x.logdet();
        fd[(i, d + 1)] = x.logdet_i_plus();
        fd[(i, d + 2)] = 1.0;
    }
    let mut gd = DMatrix::zeros(g_points.len(), d + 2);
    for (i, x) in g_points.iter().enumerate() {
        for (j, v) in lin_features(x).into_iter().enumerate() {
            gd[(i, j)] = v;
        }
        gd[(i, d)] = x.logdet();
        gd[(i, d + 1)] = 1.0;
    }
    let ff = lstsq(fd, DVector::from_column_slice(f_values), opts.rank_tol, "f fit")?;
    let gf = lstsq(gd, DVector::from_column_slice(g_values), opts.rank_tol, "g fit")?;

    let c_f = SymMat::from_coords(r, &ff.coef.as_slice()[..d])?;
    let c_g = SymMat::from_coords(r, &gf.coef.as_slice()[..d])?;
    let p = ff.coef[d];
    let q = -ff.coef[d + 1];
    let c1 = ff.coef[d + 2];
    let g_shape = gf.coef[d];
    let c2 = gf.coef[d + 1];

    let diagnostics = FitDiagnostics {
        f_residual_rel: ff.residual_rel,
        g_residual_rel: gf.residual_rel,
        f_condition: ff.condition,
        g_condition: gf.condition,
        c_discrepancy: c_f.sub(&c_g).frobenius_norm(),
        shape_discrepancy: (g_shape - (q - p)).abs(),
    };
    let mut reasons = Vec::new();
    if diagnostics.f_residual_rel > opts.residual_tol {
        reasons.push(format!("f residual {:e} exceeds {:e}", diagnostics.f_residual_rel, opts.residual_tol));
    }
    if diagnostics.g_residual_rel > opts.residual_tol {
        reasons.push(format!("g residual {:e} exceeds {:e}", diagnostics.g_residual_rel, opts.residual_tol));
    }
    let cross = opts.cross_tol * c_f.frobenius_norm().max(1.0);
    if diagnostics.c_discrepancy > cross {
        reasons.push(format!("c from f and g differ by {:e}", diagnostics.c_discrepancy));
    }
    if diagnostics.shape_discrepancy > opts.cross_tol * (q - p).abs().max(1.0) {
        reasons.push(format!("q - p from f and g differ by {:e}", diagnostics.shape_discrepancy));
    }
    Ok(FitResult {
        params: SolutionParams::new(p, q, c_f, c1, c2, c1 + c2),
        g_shape,
        diagnostics,
        model_mismatch: !reasons.is_empty(),
        mismatch_reasons: reasons,
    })
}

/// One observation of the `fit-params` JSON-lines input:
/// `{"role": "f" | "g", "x": <matrix>, "value": <number>}`.
#[derive(Debug, Clone)]
pub struct FitSample {
    pub role: Role,
    pub x: ConePoint,
    pub value: f64,
}

pub fn parse_fit_jsonl(text: &str) -> Result<Vec<FitSample>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let path = format!("line {}", ln + 1);
        let v: Value =
            serde_json::from_str(line).map_err(|e| Error::InvalidInput(format!("{path}: invalid JSON: {e}")))?;
        let obj = v.as_object().ok_or_else(|| Error::InvalidInput(format!("{path}: expected an object")))?;
        if let Some(k) = obj.keys().find(|k| !matches!(k.as_str(), "role" | "x" | "value")) {
            return Err(Error::InvalidInput(format!("{path}: unknown key '{k}'")));
        }
        let role = match obj.get("role").and_then(Value::as_str) {
            Some("f") => Role::F,
            Some("g") => Role::G,
            _ => return Err(Error::InvalidInput(format!("{path}.role: must be \"f\" or \"g\""))),
        };
        let x = obj.get("x").ok_or_else(|| Error::InvalidInput(format!("{path}.x: missing")))?;
        let x = ConePoint::new(SymMat::from_json_value(x, &format!("{path}.x"))?)?;
        let value = obj
            .get("value")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::InvalidInput(format!("{path}.value: must be a number")))?;
        out.push(FitSample { role, x, value });
    }
    Ok(out)
}

pub fn fit_samples(samples: &[FitSample], opts: &FitOptions) -> Result<FitResult> {
    let (f, g): (Vec<&FitSample>, Vec<&FitSample>) = samples.iter().partition(|s| s.role == Role::F);
    fit_params(
        &f.iter().map(|s| s.x.clone()).collect::<Vec<_>>(),
        &f.iter().map(|s| s.value).collect::<Vec<_>>(),
        &g.iter().map(|s| s.x.clone()).collect::<Vec<_>>(),
        &g.iter().map(|s| s.value).collect::<Vec<_>>(),
        opts,
    )
}

/// Max and standard deviation of a residual family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub count: usize,
    pub max_abs: f64,
    pub stddev: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualSummary {
    pub fn from_values(values: &[f64], tolerance: f64) -> Self {
        let n = values.len();
        let max_abs = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let stddev = if n > 1 {
            let mean = values.iter().sum::<f64>() / n as f64;
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let finite = values.iter().all(|v| v.is_finite());
        Self { count: n, max_abs, stddev, tolerance, pass: finite && max_abs < tolerance }
    }
}

/// Report of `verify-feq`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeqReport {
    pub r: usize,
    pub n: usize,
    pub seed: u64,
    pub prok1_det_u: ResidualSummary,
    pub prok1_det_i_minus_u: ResidualSummary,
    pub maineq: ResidualSummary,
    pub density_consistency: ResidualSummary,
    pub pexider: ResidualSummary,
    pub scalar1dim: ResidualSummary,
    pub pass: bool,
}

/// Random solution-family parameters for the residual suites.
pub fn random_solution_params<R: Rng + ?Sized>(r: usize, rng: &mut R) -> SolutionParams {
    let c = SymMat::symmetrized(DMatrix::from_fn(r, r, |_, _| rng.sample::<f64, _>(StandardNormal)));
    SolutionParams::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        c,
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
    )
}

/// Random `(a, b)` with `a > (r−1)/2` and `b − a > (r−1)/2`.
pub fn random_pair_shapes<R: Rng + ?Sized>(r: usize, rng: &mut R) -> (f64, f64) {
    let bound = (r as f64 - 1.0) / 2.0;
    let a = bound + rng.random_range(0.1..3.0);
    let b = a + bound + rng.random_range(0.1..3.0);
    (a, b)
}

/// Log-uniform scalar arguments in `[e⁻², e²]` for the scalar lemma.
pub fn random_scalar_args<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64, f64) {
    let q = rng.random_range(-2.0..2.0);
    let x = rng.random_range(-2.0f64..2.0).exp();
    let y = rng.random_range(-2.0f64..2.0).exp();
    (q, x, y)
}

struct FeqPoint {
    prok: (f64, f64),
    maineq: f64,
    density: f64,
    pexider: f64,
    scalar: f64,
}

fn feq_point(r: usize, spec: SeedSpec, i: u64) -> Result<FeqPoint> {
    let mut rng = spec.rng(i);
    let x = random_cone_point(r, &mut rng);
    let y = random_cone_point(r, &mut rng);
    let prok = crate::symcone::prok1_residual(&x, &y)?;
    let theta = random_solution_params(r, &mut rng);
    let maineq = maineq_residual(&theta, &x, &y)?;
    let (a, b) = random_pair_shapes(r, &mut rng);
    let sigma = random_cone_point(r, &mut rng);
    let density = density_consistency(a, b, &sigma, &x, &y)?;
    let xs = random_shifted_point(r, &mut rng);
    let ys = random_shifted_point(r, &mut rng);
    let p = rng.random_range(-3.0..3.0);
    let pexider = pexider_residual(p, rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), &xs, &ys)?;
    let (q, sx, sy) = random_scalar_args(&mut rng);
    let scalar = scalar1dim_residual(q, rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), sx, sy)?;
    Ok(FeqPoint { prok, maineq, density, pexider, scalar })
}

/// Runs every deterministic identity on `n` random points of order `r`.
pub fn verify_feq(r: usize, n: usize, seed: u64) -> Result<FeqReport> {
    if r == 0 {
        return Err(Error::InvalidInput("r must be at least 1".into()));
    }
    let spec = SeedSpec::new(seed, 0x0066_6571);
    let pts: Vec<FeqPoint> = (0..n as u64).into_par_iter().map(|i| feq_point(r, spec, i)).collect::<Result<_>>()?;
    let col = |f: fn(&FeqPoint) -> f64| pts.iter().map(f).collect::<Vec<f64>>();
    let report = |f: fn(&FeqPoint) -> f64, tol| ResidualSummary::from_values(&col(f), tol);
    let prok1_det_u = report(|p| p.prok.0, MATRIX_IDENTITY_TOL);
    let prok1_det_i_minus_u = report(|p| p.prok.1, MATRIX_IDENTITY_TOL);
    let maineq = report(|p| p.maineq, MATRIX_IDENTITY_TOL);
    let density_consistency = report(|p| p.density, MATRIX_IDENTITY_TOL);
    let pexider = report(|p| p.pexider, SCALAR_IDENTITY_TOL);
    let scalar1dim = report(|p| p.scalar, SCALAR_IDENTITY_TOL);
    let pass =
        [prok1_det_u, prok1_det_i_minus_u, maineq, density_consistency, pexider, scalar1dim].iter().all(|s| s.pass);
    Ok(FeqReport {
        r,
        n,
        seed,
        prok1_det_u,
        prok1_det_i_minus_u,
        maineq,
        density_consistency,
        pexider,
        scalar1dim,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(x: f64) -> ConePoint {
        ConePoint::scalar(x).unwrap()
    }

    #[test]
    fn constraint_enforced() {
        let t = SolutionParams::new(1.0, 2.0, SymMat::zeros(2), 0.3, -1.1, 4.0);
        assert!((t.c1 + t.c2 - t.c3 - t.c4).abs() < 1e-15);
    }

    #[test]
    fn sol_eval_examples() {
        let t = SolutionParams::new(1.3, 2.1, SymMat::zeros(3), 0.7, 0.0, 0.0);
        let f = sol_eval(Role::F, &t, &ConePoint::identity(3)).unwrap();
        assert!((f - (-2.1 * 3.0 * 2f64.ln() + 0.7)).abs() < 1e-14);

        let t = SolutionParams::new(1.0, 3.0, SymMat::scaled_identity(1, 2.0), 0.0, 0.0, 0.0);
        assert!((sol_eval(Role::G, &t, &s(1.0)).unwrap() + 2.0).abs() < 1e-15);

        let t = SolutionParams::new(2.0, 3.0, SymMat::zeros(1), 0.0, 0.0, 0.0);
        assert_eq!(t.c4, 0.0);
        let h = sol_eval(Role::H, &t, &s(0.5)).unwrap();
        assert!((h - 3.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn role_h_outside_domain_is_domain_error() {
        let t = SolutionParams::new(2.0, 3.0, SymMat::zeros(1), 0.0, 0.0, 0.0);
        assert!(matches!(sol_eval(Role::H, &t, &s(1.5)), Err(Error::Domain(_))));
    }

    #[test]
    fn maineq_examples() {
        let t = SolutionParams::new(0.0, 0.0, SymMat::zeros(2), 1.0, 2.0, 0.5);
        let x = ConePoint::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        assert!(maineq_residual(&t, &x, &ConePoint::identity(2)).unwrap().abs() < 1e-15);
        let t = SolutionParams::new(2.0, 3.0, SymMat::scaled_identity(1, 1.0), 0.0, 0.0, 0.0);
        assert!(maineq_residual(&t, &s(1.0), &s(1.0)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn broken_solution_is_detected() {
        // wrong exponent on h: the identity must fail
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_cone_point(2, &mut rng);
        let y = random_cone_point(2, &mut rng);
        let mut t = SolutionParams::new(1.5, 2.5, SymMat::zeros(2), 0.0, 0.0, 0.0);
        t.c4 += 0.1;
        assert!((maineq_residual(&t, &x, &y).unwrap() + 0.1).abs() < 1e-9);
    }

    #[test]
    fn pexider_examples() {
        let two = ConePoint::scaled_identity(2, 2.0);
        assert!(pexider_residual(1.7, 0.2, 0.3, &two, &two).unwrap().abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_shifted_point(2, &mut rng);
        let y = random_shifted_point(2, &mut rng);
        assert!(pexider_residual(1.7, 0.0, 0.0, &x, &y).unwrap().abs() < 1e-12);
        assert_eq!(pexider_residual(0.0, 0.4, -0.4, &x, &y).unwrap(), 0.0);
        assert!(matches!(pexider_residual(1.0, 0.0, 0.0, &ConePoint::identity(2), &two), Err(Error::Domain(_))));
    }

    #[test]
    fn scalar_lemma_examples() {
        assert!(scalar1dim_residual(1.0, 0.4, -0.2, 1.0, 2.0).unwrap().abs() < 1e-15);
        assert_eq!(scalar1dim_residual(0.0, 0.4, -0.2, 3.0, 0.1).unwrap(), 0.0);
        assert!(matches!(scalar1dim_residual(1.0, 0.0, 0.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(scalar1dim_residual(1.0, 0.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn density_consistency_examples() {
        assert!(density_consistency(1.5, 3.5, &s(1.0), &s(1.0), &s(1.0)).unwrap().abs() < 1e-12);
        let i = ConePoint::identity(2);
        assert!(density_consistency(1.5, 4.0, &i, &i, &i).unwrap().abs() < 1e-12);
        assert!(matches!(density_consistency(1.5, 1.8, &i, &i, &i), Err(Error::Domain(_))));
    }

    #[test]
    fn density_consistency_detects_wrong_jacobian_power() {
        // dropping J leaves exactly log J behind
        let laws = PairLaws::new(1.5, 3.5, &s(1.0)).unwrap();
        let (x, y) = (s(0.7), s(2.0));
        let img = psi(&x, &y).unwrap();
        let without_j = laws.residual_with_image(&x, &y, &img.u, &img.v).unwrap() + log_jacobian(&x, &y).unwrap();
        assert!((without_j - log_jacobian(&x, &y).unwrap()).abs() < 1e-14);
        assert!(without_j.abs() > 0.1);
    }

    fn generate(theta: &SolutionParams, n: usize, seed: u64) -> (Vec<ConePoint>, Vec<f64>, Vec<ConePoint>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = theta.order();
        let fx: Vec<ConePoint> = (0..n).map(|_| random_cone_point(r, &mut rng)).collect();
        let gx: Vec<ConePoint> = (0..n).map(|_| random_cone_point(r, &mut rng)).collect();
        let fv = fx.iter().map(|x| sol_eval(Role::F, theta, x).unwrap()).collect();
        let gv = gx.iter().map(|x| sol_eval(Role::G, theta, x).unwrap()).collect();
        (fx, fv, gx, gv)
    }

    #[test]
    fn fit_recovers_parameters() {
        let theta = SolutionParams::new(2.0, 3.0, SymMat::identity(2), 0.5, -0.2, 0.0);
        let (fx, fv, gx, gv) = generate(&theta, 50, 1);
        let fit = fit_params(&fx, &fv, &gx, &gv, &FitOptions::default()).unwrap();
        assert!(!fit.model_mismatch, "{:?}", fit.mismatch_reasons);
        assert!((fit.params.p - 2.0).abs() < 1e-8);
        assert!((fit.params.q - 3.0).abs() < 1e-8);
        assert!(fit.params.c.max_abs_diff(&SymMat::identity(2)) < 1e-8);
        assert!((fit.params.c1 - 0.5).abs() < 1e-8);
        assert!((fit.params.c2 + 0.2).abs() < 1e-8);
        assert!((fit.params.c3 + fit.params.c4 - 0.3).abs() < 1e-8);
    }

    #[test]
    fn fit_flags_non_members() {
        let theta = SolutionParams::new(2.0, 3.0, SymMat::identity(2), 0.5, -0.2, 0.0);
        let (fx, fv, gx, gv) = generate(&theta, 50, 2);
        let bent: Vec<f64> = fx.iter().zip(&fv).map(|(x, v)| v + 0.1 * x.logdet().powi(2)).collect();
        let fit = fit_params(&fx, &bent, &gx, &gv, &FitOptions::default()).unwrap();
        assert!(fit.model_mismatch);
        assert!(fit.diagnostics.f_residual_rel > 1e-4);
    }

    #[test]
    fn fit_flags_cross_equation_inconsistency() {
        let tf = SolutionParams::new(2.0, 3.0, SymMat::identity(2), 0.0, 0.0, 0.0);
        let tg = SolutionParams::new(2.0, 3.5, SymMat::identity(2), 0.0, 0.0, 0.0);
        let (fx, fv, _, _) = generate(&tf, 30, 3);
        let (_, _, gx, gv) = generate(&tg, 30, 4);
        let fit = fit_params(&fx, &fv, &gx, &gv, &FitOptions::default()).unwrap();
        assert!(fit.model_mismatch);
        assert!(fit.diagnostics.shape_discrepancy > 0.4);
    }

    #[test]
    fn fit_needs_enough_points() {
        let theta = SolutionParams::new(2.0, 3.0, SymMat::identity(2), 0.0, 0.0, 0.0);
        let (fx, fv, gx, gv) = generate(&theta, 5, 5);
        let r = fit_params(&fx, &fv, &gx, &gv, &FitOptions::default());
        assert!(matches!(r, Err(Error::IllPosed(_))));
        // enough points, but all multiples of I: linear features collapse
        let fx: Vec<ConePoint> = (1..20).map(|k| ConePoint::scaled_identity(2, k as f64)).collect();
        let fv: Vec<f64> = fx.iter().map(|x| sol_eval(Role::F, &theta, x).unwrap()).collect();
        let r = fit_params(&fx, &fv, &fx, &fv, &FitOptions::default());
        assert!(matches!(r, Err(Error::IllPosed(_))));
    }

    #[test]
    fn jsonl_input() {
        let text = r#"{"role":"f","x":[[2.0]],"value":1.5}

{"role":"g","x":{"r":1,"upper":[3.0]},"value":-0.5}"#;
        let samples = parse_fit_jsonl(text).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].role, Role::G);
        assert!(parse_fit_jsonl(r#"{"role":"k","x":[[1]],"value":0}"#).is_err());
        assert!(parse_fit_jsonl(r#"{"role":"f","x":[[1]],"value":0,"extra":1}"#).is_err());
        let err = parse_fit_jsonl(r#"{"role":"f","x":[[-1]],"value":0}"#).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn verify_feq_small_run_passes() {
        for r in [1, 2, 3] {
            let rep = verify_feq(r, 50, 7).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }
}
