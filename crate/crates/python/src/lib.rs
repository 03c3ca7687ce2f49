//! Python bindings. Matrices cross the boundary as lists of row lists;
//! reports come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use matkummer::dist::{
    beta_logkernel, kummer_logkernel, kummer_lognorm, wishart_logkernel, BetaParams, KummerParams, NormOptions,
    WishartParams,
};
use matkummer::fecheck::{self, FitOptions, SolutionParams};
use matkummer::rng::SeedSpec;
use matkummer::sampler::{self, XLaw};
use matkummer::stats;
use matkummer::statverify::{property_report as run_property_report, PropertyConfig};
use matkummer::symcone::{self, ConePoint, DomainPoint, SymMat};
use matkummer::transform;

type Rows = Vec<Vec<f64>>;

fn err(e: matkummer::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn cone(rows: &Rows) -> PyResult<ConePoint> {
    ConePoint::from_rows(rows).map_err(err)
}

fn domain(rows: &Rows) -> PyResult<DomainPoint> {
    DomainPoint::from_matrix(SymMat::from_rows(rows).map_err(err)?).map_err(err)
}

fn rows(x: &ConePoint) -> Rows {
    x.matrix().rows()
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// (u, v) = psi(x, y)
#[pyfunction]
fn psi(x: Rows, y: Rows) -> PyResult<(Rows, Rows)> {
    let img = transform::psi(&cone(&x)?, &cone(&y)?).map_err(err)?;
    Ok((rows(img.u.point()), rows(&img.v)))
}

/// (x, y) = psi^{-1}(u, v)
#[pyfunction]
fn psi_inv(u: Rows, v: Rows) -> PyResult<(Rows, Rows)> {
    let (x, y) = transform::psi_inv(&domain(&u)?, &cone(&v)?).map_err(err)?;
    Ok((rows(&x), rows(&y)))
}

#[pyfunction]
fn circ(x: Rows, y: Rows) -> PyResult<Rows> {
    Ok(rows(&symcone::circ(&cone(&x)?, &cone(&y)?).map_err(err)?))
}

#[pyfunction]
fn kummer_u(x: Rows, y: Rows) -> PyResult<Rows> {
    Ok(rows(symcone::kummer_u(&cone(&x)?, &cone(&y)?).map_err(err)?.point()))
}

#[pyfunction]
fn log_jacobian(x: Rows, y: Rows) -> PyResult<f64> {
    transform::log_jacobian(&cone(&x)?, &cone(&y)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, y, h=None))]
fn jacobian_numeric(x: Rows, y: Rows, h: Option<f64>) -> PyResult<f64> {
    transform::jacobian_numeric(&cone(&x)?, &cone(&y)?, h).map_err(err)
}

#[pyfunction]
fn wishart_logpdf_kernel(x: Rows, p: f64, sigma: Rows) -> PyResult<f64> {
    let t = WishartParams::new(p, cone(&sigma)?).map_err(err)?;
    wishart_logkernel(&cone(&x)?, &t).map_err(err)
}

#[pyfunction]
fn beta_logpdf_kernel(u: Rows, p: f64, q: f64) -> PyResult<f64> {
    let u = domain(&u)?;
    let t = BetaParams::new(p, q, u.order()).map_err(err)?;
    beta_logkernel(&u, &t).map_err(err)
}

#[pyfunction]
fn kummer_logpdf_kernel(x: Rows, a: f64, b: f64, sigma: Rows) -> PyResult<f64> {
    let t = KummerParams::new(a, b, cone(&sigma)?).map_err(err)?;
    kummer_logkernel(&cone(&x)?, &t).map_err(err)
}

/// Log normalizer of K(a, b, sigma) and its Monte Carlo standard error (None for r = 1).
#[pyfunction]
#[pyo3(signature = (a, b, sigma, seed=0, n_samples=100_000))]
fn kummer_log_normalizer(a: f64, b: f64, sigma: Rows, seed: u64, n_samples: usize) -> PyResult<(f64, Option<f64>)> {
    let t = KummerParams::new(a, b, cone(&sigma)?).map_err(err)?;
    let n = kummer_lognorm(&t, &NormOptions { seed: SeedSpec::new(seed, 0), n_samples }).map_err(err)?;
    Ok((n.value, n.stderr))
}

#[pyfunction]
#[pyo3(signature = (p, sigma, n, seed, stream_id=0))]
fn sample_wishart(p: f64, sigma: Rows, n: usize, seed: u64, stream_id: u64) -> PyResult<Vec<Rows>> {
    let t = WishartParams::new(p, cone(&sigma)?).map_err(err)?;
    let xs = sampler::sample_wishart_many(&t, n, SeedSpec::new(seed, stream_id)).map_err(err)?;
    Ok(xs.iter().map(rows).collect())
}

#[pyfunction]
#[pyo3(signature = (p, q, r, n, seed, stream_id=0))]
fn sample_beta(p: f64, q: f64, r: usize, n: usize, seed: u64, stream_id: u64) -> PyResult<Vec<Rows>> {
    let t = BetaParams::new(p, q, r).map_err(err)?;
    let us = sampler::sample_beta_many(&t, n, SeedSpec::new(seed, stream_id)).map_err(err)?;
    Ok(us.iter().map(|u| rows(u.point())).collect())
}

/// Returns (draws, acceptance rate of the rejection sampler).
#[pyfunction]
#[pyo3(signature = (a, b, sigma, n, seed, stream_id=0))]
fn sample_kummer(a: f64, b: f64, sigma: Rows, n: usize, seed: u64, stream_id: u64) -> PyResult<(Vec<Rows>, f64)> {
    let t = KummerParams::new(a, b, cone(&sigma)?).map_err(err)?;
    let (xs, st) = sampler::sample_kummer_many(&t, n, SeedSpec::new(seed, stream_id)).map_err(err)?;
    Ok((xs.iter().map(rows).collect(), st.rate()))
}

/// Dict with lists x, y, u, v, where (u, v) = psi(x, y).
#[pyfunction]
#[pyo3(signature = (a, b, sigma, n, seed, stream_id=0, negative_control=false))]
#[allow(clippy::too_many_arguments)]
fn sample_pair_batch<'py>(
    py: Python<'py>,
    a: f64,
    b: f64,
    sigma: Rows,
    n: usize,
    seed: u64,
    stream_id: u64,
    negative_control: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let t = KummerParams::new(a, b, cone(&sigma)?).map_err(err)?;
    let law = if negative_control { XLaw::Wishart } else { XLaw::Kummer };
    let batch = sampler::sample_pair_batch(&t, law, n, SeedSpec::new(seed, stream_id)).map_err(err)?;
    #[derive(Serialize)]
    struct Out {
        x: Vec<Rows>,
        y: Vec<Rows>,
        u: Vec<Rows>,
        v: Vec<Rows>,
        acceptance_rate: f64,
    }
    to_py(
        py,
        &Out {
            x: batch.x.iter().map(rows).collect(),
            y: batch.y.iter().map(rows).collect(),
            u: batch.u.iter().map(|u| rows(u.point())).collect(),
            v: batch.v.iter().map(rows).collect(),
            acceptance_rate: batch.acceptance.rate(),
        },
    )
}

#[pyfunction]
#[pyo3(signature = (p, q, c, c1, c2, c3, x, y))]
#[allow(clippy::too_many_arguments)]
fn maineq_residual(p: f64, q: f64, c: Rows, c1: f64, c2: f64, c3: f64, x: Rows, y: Rows) -> PyResult<f64> {
    let theta = SolutionParams::new(p, q, SymMat::from_rows(&c).map_err(err)?, c1, c2, c3);
    fecheck::maineq_residual(&theta, &cone(&x)?, &cone(&y)?).map_err(err)
}

#[pyfunction]
fn density_consistency(a: f64, b: f64, sigma: Rows, x: Rows, y: Rows) -> PyResult<f64> {
    fecheck::density_consistency(a, b, &cone(&sigma)?, &cone(&x)?, &cone(&y)?).map_err(err)
}

#[pyfunction]
fn fit_params<'py>(
    py: Python<'py>,
    points: Vec<Rows>,
    f_values: Vec<f64>,
    g_points: Vec<Rows>,
    g_values: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let fx = points.iter().map(cone).collect::<PyResult<Vec<_>>>()?;
    let gx = g_points.iter().map(cone).collect::<PyResult<Vec<_>>>()?;
    let fit = fecheck::fit_params(&fx, &f_values, &gx, &g_values, &FitOptions::default()).map_err(err)?;
    to_py(py, &fit)
}

/// Distance-correlation permutation test on paired scalars.
#[pyfunction]
#[pyo3(signature = (u, v, seed, n_perm=stats::DEFAULT_PERMUTATIONS))]
fn independence_test<'py>(
    py: Python<'py>,
    u: Vec<f64>,
    v: Vec<f64>,
    seed: u64,
    n_perm: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let res = py.detach(|| stats::independence_test_scalar(&u, &v, n_perm, SeedSpec::new(seed, 0))).map_err(err)?;
    to_py(py, &res)
}

#[pyfunction]
fn verify_transform<'py>(py: Python<'py>, r: usize, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let rep = py.detach(|| transform::verify_transform(r, n, seed)).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
fn verify_feq<'py>(py: Python<'py>, r: usize, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let rep = py.detach(|| fecheck::verify_feq(r, n, seed)).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (a, b, sigma, n, seed, negative_control=false, n_perm=stats::DEFAULT_PERMUTATIONS))]
#[allow(clippy::too_many_arguments)]
fn property_report<'py>(
    py: Python<'py>,
    a: f64,
    b: f64,
    sigma: Rows,
    n: usize,
    seed: u64,
    negative_control: bool,
    n_perm: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = PropertyConfig::new(a, b, cone(&sigma)?, n, SeedSpec::new(seed, 0))
        .negative_control(negative_control)
        .permutations(n_perm);
    let rep = py.detach(|| run_property_report(&cfg)).map_err(err)?;
    to_py(py, &rep)
}

#[pymodule]
fn pymatkummer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(psi_inv, m)?)?;
    m.add_function(wrap_pyfunction!(circ, m)?)?;
    m.add_function(wrap_pyfunction!(kummer_u, m)?)?;
    m.add_function(wrap_pyfunction!(log_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(jacobian_numeric, m)?)?;
    m.add_function(wrap_pyfunction!(wishart_logpdf_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(beta_logpdf_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(kummer_logpdf_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(kummer_log_normalizer, m)?)?;
    m.add_function(wrap_pyfunction!(sample_wishart, m)?)?;
    m.add_function(wrap_pyfunction!(sample_beta, m)?)?;
    m.add_function(wrap_pyfunction!(sample_kummer, m)?)?;
    m.add_function(wrap_pyfunction!(sample_pair_batch, m)?)?;
    m.add_function(wrap_pyfunction!(maineq_residual, m)?)?;
    m.add_function(wrap_pyfunction!(density_consistency, m)?)?;
    m.add_function(wrap_pyfunction!(fit_params, m)?)?;
    m.add_function(wrap_pyfunction!(independence_test, m)?)?;
    m.add_function(wrap_pyfunction!(verify_transform, m)?)?;
    m.add_function(wrap_pyfunction!(verify_feq, m)?)?;
    m.add_function(wrap_pyfunction!(property_report, m)?)?;
    Ok(())
}
