"""Smoke test for the pymatkummer extension module.

Build and install first:  maturin develop --release  (from crates/python)
"""

import math

import pymatkummer as mk


def close(a, b, tol):
    return all(abs(p - q) <= tol for ra, rb in zip(a, b) for p, q in zip(ra, rb))


def main():
    x = [[2.0, 0.3], [0.3, 1.0]]
    y = [[1.0, -0.2], [-0.2, 0.5]]

    u, v = mk.psi(x, y)
    xr, yr = mk.psi_inv(u, v)
    assert close(xr, x, 1e-12) and close(yr, y, 1e-12)

    assert abs(math.exp(mk.log_jacobian([[1.0]], [[1.0]])) - 0.375) < 1e-14
    assert abs(mk.jacobian_numeric(x, y) / math.exp(mk.log_jacobian(x, y)) - 1) < 1e-5

    sigma = [[1.0, 0.0], [0.0, 1.0]]
    assert abs(mk.density_consistency(1.5, 4.0, sigma, x, y)) < 1e-12
    assert abs(mk.maineq_residual(2.0, 3.0, sigma, 0.1, 0.2, 0.3, x, y)) < 1e-12

    lognorm, stderr = mk.kummer_log_normalizer(1.0, 2.0, [[1.0]])
    assert abs(math.exp(-lognorm) - 0.403653) < 1e-6 and stderr is None

    draws, rate = mk.sample_kummer(1.0, 2.0, [[1.0]], 2000, seed=3)
    assert len(draws) == 2000 and 0.37 < rate < 0.44
    assert mk.sample_wishart(2.0, sigma, 5, seed=1) == mk.sample_wishart(2.0, sigma, 5, seed=1)

    rep = mk.verify_transform(2, 50, 7)
    assert rep["n_failures"] == 0, rep

    rep = mk.property_report(1.5, 3.5, [[1.0]], 20000, seed=1, negative_control=True)
    assert rep["indep_result"]["permutation_p"] < 0.01 and rep["pass"], rep

    try:
        mk.psi([[1.0, 0.0], [0.0, -1.0]], y)
    except ValueError as e:
        assert "positive definite" in str(e), e
    else:
        raise AssertionError("expected ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
