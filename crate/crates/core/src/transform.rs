//! The transform `ψ(x, y) = ((I + (x+y)⁻¹) ∘ (I + x⁻¹)⁻¹, x + y)` from
//! `V × V` onto `D × V`, its inverse and its Jacobian.
//!
//! Component order is `(u, v)`: the Beta-like matrix first, the sum second.
//! Jacobians are taken with respect to Lebesgue measure on `Sym(r)` with the
//! trace inner product, i.e. in the orthonormal coordinates of
//! [`sym_basis`](crate::symcone::sym_basis).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::SeedSpec;
use crate::symcone::{check_orders, kummer_u_with_sum, random_cone_point, sym_basis, ConePoint, DomainPoint, SymMat};

/// Relative tolerance of the `psi(psi_inv(u, v)) == (u, v)` postcondition.
pub const INVERSE_CHECK_TOL: f64 = 1e-9;

/// Relative finite-difference step, scaled by the smallest eigenvalue of the
/// base point (capped at 1).
pub const DEFAULT_REL_STEP: f64 = 1e-4;

const MAX_STEP_HALVINGS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiImage {
    pub u: DomainPoint,
    pub v: ConePoint,
}

pub fn psi(x: &ConePoint, y: &ConePoint) -> Result<PsiImage> {
    let v = x.add(y)?;
    let u = kummer_u_with_sum(x, y, &v)?;
    Ok(PsiImage { u, v })
}

/// Inverse of [`psi`].
///
/// With `b = (I+v⁻¹)^{-1/2}·u·(I+v⁻¹)^{-1/2}` the preimage is
/// `x = (b⁻¹ − I)⁻¹`, `y = v − x`. Fails with [`Error::OutOfRange`] when
/// `(u, v)` is not in the image of `ψ`.
pub fn psi_inv(u: &DomainPoint, v: &ConePoint) -> Result<(ConePoint, ConePoint)> {
    check_orders(u.point(), v)?;
    let t = v.spectral_map(|l| (l / (1.0 + l)).sqrt());
    let b = SymMat::symmetrized(t.as_matrix() * u.matrix().as_matrix() * t.as_matrix());
    let b = ConePoint::new(b).map_err(|e| Error::OutOfRange(format!("b: {e}")))?;
    if !(b.eig_max() < 1.0) {
        return Err(Error::OutOfRange(format!(
            "b^-1 - I is not positive definite (largest eigenvalue of b is {})",
            b.eig_max()
        )));
    }
    // (b⁻¹ − I)⁻¹ has eigenvalues β/(1−β) on the eigenvectors of b
    let x =
        ConePoint::new(b.spectral_map(|beta| beta / (1.0 - beta))).map_err(|e| Error::OutOfRange(format!("x: {e}")))?;
    let y = ConePoint::new(v.matrix().sub(x.matrix())).map_err(|e| Error::OutOfRange(format!("y = v - x: {e}")))?;

    let back = psi(&x, &y)?;
    let du = back.u.matrix().max_abs_diff(u.matrix()) / u.matrix().as_matrix().amax().max(1.0);
    let dv = back.v.matrix().max_abs_diff(v.matrix()) / v.matrix().as_matrix().amax();
    if du > INVERSE_CHECK_TOL || dv > INVERSE_CHECK_TOL {
        return Err(Error::InternalConsistency(format!("psi(psi_inv(u, v)) deviates from (u, v) by {du:e} / {dv:e}")));
    }
    Ok((x, y))
}

/// `log J(x, y) = (r+1)/2·log det(I + (x+y)⁻¹) − (r+1)·log det(I + x)`.
pub fn log_jacobian(x: &ConePoint, y: &ConePoint) -> Result<f64> {
    let s = x.add(y)?;
    let r1 = (x.order() + 1) as f64;
    Ok(0.5 * r1 * s.logdet_i_plus_inv() - r1 * x.logdet_i_plus())
}

pub fn jacobian_analytic(x: &ConePoint, y: &ConePoint) -> Result<f64> {
    log_jacobian(x, y).map(f64::exp)
}

/// Default finite-difference step for the point `(x, y)`.
pub fn default_step(x: &ConePoint, y: &ConePoint) -> f64 {
    DEFAULT_REL_STEP * x.eig_min().min(y.eig_min()).min(1.0)
}

fn image_coords(img: &PsiImage) -> Vec<f64> {
    let mut c = img.u.matrix().coords();
    c.extend(img.v.matrix().coords());
    c
}

/// Central-difference derivative of `ψ` along `directions` (each applied to
/// `x` and then to `y`), with outputs in orthonormal coordinates.
pub(crate) fn fd_derivative(x: &ConePoint, y: &ConePoint, h: f64, directions: &[SymMat]) -> Result<DMatrix<f64>> {
    let d = directions.len();
    let rows = 2 * sym_basis(x.order()).len();
    let mut jac = DMatrix::zeros(rows, 2 * d);
    let eval = |dx: &SymMat, dy: &SymMat| -> Result<Vec<f64>> {
        let xp = ConePoint::new(x.matrix().add(dx))
            .map_err(|e| Error::StepSize(format!("perturbed x left the cone: {e}")))?;
        let yp = ConePoint::new(y.matrix().add(dy))
            .map_err(|e| Error::StepSize(format!("perturbed y left the cone: {e}")))?;
        Ok(image_coords(&psi(&xp, &yp)?))
    };
    let zero = SymMat::zeros(x.order());
    for (k, e) in directions.iter().enumerate() {
        for (col, on_x) in [(k, true), (k + d, false)] {
            let plus = e.scale(h);
            let minus = e.scale(-h);
            let (fp, fm) = if on_x {
                (eval(&plus, &zero)?, eval(&minus, &zero)?)
            } else {
                (eval(&zero, &plus)?, eval(&zero, &minus)?)
            };
            for i in 0..rows {
                jac[(i, col)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }
    Ok(jac)
}

/// `|det Dψ(x, y)|` by central differences along the orthonormal basis of
/// `Sym(r)`. `h = None` selects [`default_step`]. On a step that leaves the
/// cone the step is halved, at most six times, before failing with
/// [`Error::StepSize`].
pub fn jacobian_numeric(x: &ConePoint, y: &ConePoint, h: Option<f64>) -> Result<f64> {
    check_orders(x, y)?;
    let mut h = h.unwrap_or_else(|| default_step(x, y));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {h}")));
    }
    let basis = sym_basis(x.order());
    let mut last = None;
    for _ in 0..=MAX_STEP_HALVINGS {
        match fd_derivative(x, y, h, &basis) {
            Ok(jac) => return Ok(jac.determinant().abs()),
            Err(e @ Error::StepSize(_)) => {
                last = Some(e);
                h *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("loop ran at least once"))
}

/// Summary emitted by `verify-transform`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformReport {
    pub r: usize,
    pub n: usize,
    pub seed: u64,
    pub max_roundtrip_err: f64,
    pub max_jacobian_relerr: f64,
    pub n_failures: usize,
}

/// Per-point thresholds used by [`verify_transform`].
pub const ROUNDTRIP_TOL: f64 = 1e-9;
pub const JACOBIAN_TOL: f64 = 1e-5;

struct PointCheck {
    roundtrip: f64,
    jacobian: f64,
    failed: bool,
}

fn rel_err(a: &SymMat, b: &SymMat) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm()
}

fn check_point(x: &ConePoint, y: &ConePoint, with_jacobian: bool) -> PointCheck {
    let roundtrip = psi(x, y)
        .and_then(|img| psi_inv(&img.u, &img.v))
        .map(|(xr, yr)| rel_err(xr.matrix(), x.matrix()).max(rel_err(yr.matrix(), y.matrix())));
    let jacobian = if with_jacobian {
        jacobian_analytic(x, y).and_then(|ja| jacobian_numeric(x, y, None).map(|jn| ((ja - jn) / ja).abs()))
    } else {
        Ok(0.0)
    };
    match (roundtrip, jacobian) {
        (Ok(rt), Ok(jr)) => {
            PointCheck { roundtrip: rt, jacobian: jr, failed: !(rt < ROUNDTRIP_TOL && jr < JACOBIAN_TOL) }
        }
        (rt, jr) => {
            PointCheck { roundtrip: rt.unwrap_or(f64::INFINITY), jacobian: jr.unwrap_or(f64::INFINITY), failed: true }
        }
    }
}

/// Round-trip and Jacobian-oracle checks on `n` canonical random pairs.
/// The result does not depend on the size of the rayon pool.
pub fn verify_transform(r: usize, n: usize, seed: u64) -> Result<TransformReport> {
    if r == 0 {
        return Err(Error::InvalidInput("r must be at least 1".into()));
    }
    let spec = SeedSpec::new(seed, 0x7472_616e);
    let checks: Vec<PointCheck> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = spec.rng(i);
            let x = random_cone_point(r, &mut rng);
            let y = random_cone_point(r, &mut rng);
            check_point(&x, &y, true)
        })
        .collect();
    Ok(TransformReport {
        r,
        n,
        seed,
        max_roundtrip_err: checks.iter().map(|c| c.roundtrip).fold(0.0, f64::max),
        max_jacobian_relerr: checks.iter().map(|c| c.jacobian).fold(0.0, f64::max),
        n_failures: checks.iter().filter(|c| c.failed).count(),
    })
}
