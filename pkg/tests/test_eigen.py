import numpy as np
import pytest

from pulsefront.errors import ConvergenceError
from pulsefront.eigen import (EigenProblem, c_star, comparison_envelope, phi_c,
                              principal_eigenpair)
from pulsefront.geometry import FourierWall, GeometryConfig, build_period_cell, flat_cell


def test_flat_strip_constant_pair(flat_small):
    for sign in (1, -1):
        mu, psi, resid = principal_eigenpair(EigenProblem(flat_small, alpha=1.0,
                                                          drift_sign=sign))
        assert abs(mu) <= 1e-10
        assert np.allclose(psi, 1.0, atol=1e-10)
        assert resid <= 1e-8
        assert np.min(psi) > 0.0
        assert np.max(np.abs(psi)) == pytest.approx(1.0)


def _wavy(n):
    return build_period_cell(GeometryConfig(
        ell=1.0, a=2.0, n_s=5, n_x=2 * n, n_z=n + 1,
        wall_top=FourierWall(1.0, sin=(0.1,))))


def test_wavy_eigenvalue_self_convergence():
    # reference from a 4x-resolution run, Richardson-extrapolated at the
    # measured rate; the coarse-grid eigenvalue must sit within the
    # extrapolation-predicted error band, shrinking under refinement
    mus = [principal_eigenpair(EigenProblem(_wavy(n)))[0] for n in (8, 16, 32, 64)]
    d = np.diff(mus)
    rate = np.log2(abs(d[-2] / d[-1]))
    assert rate > 1.0  # converging
    mu_ref = mus[-1] + d[-1] / (2.0 ** rate - 1.0)
    errs = [abs(m - mu_ref) for m in mus[:-1]]
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] <= errs[0] / 2.0 and errs[2] <= errs[1] / 2.0
    assert mu_ref > 0.0  # wavy walls push the principal eigenvalue above 0


def test_wavy_pair_positive_and_converged():
    mu, psi, resid = principal_eigenpair(EigenProblem(_wavy(16)))
    assert resid <= 1e-8
    assert np.min(psi) > 0.0


def test_envelope_trivials(flat_small):
    psi = np.ones((flat_small.n_x, flat_small.n_z))
    gamma = comparison_envelope(1.0, 0.0, psi, 0.0, flat_small)
    assert np.allclose(gamma.values, 1.0, atol=0)

    psi2 = 0.5 + 0.25 * np.random.default_rng(0).random((flat_small.n_x, flat_small.n_z))
    R = flat_small.s[10]
    gamma = comparison_envelope(2.0, 0.7, psi2, R, flat_small)
    assert np.allclose(gamma.values[10], 2.0 * psi2, atol=1e-14)


def test_phi_c_boundary_values():
    for c in (-3.0, -0.4, 0.0, 0.4, 3.0, 40.0):
        assert phi_c(-5.0, c, 5.0, eps=0.1) == pytest.approx(1.0, abs=1e-12)
        assert phi_c(5.0, c, 5.0, eps=0.1) == pytest.approx(0.0, abs=1e-12)


def test_phi_c_midpoint_decreasing_in_c():
    c = np.linspace(-3, 3, 61)
    vals = np.array([phi_c(0.0, ci, 5.0) for ci in c])
    assert np.all(np.diff(vals) < 0.0)


def test_c_star_matches_newton_and_closed_form():
    theta0, a, eps = 0.5, 5.0, 0.0
    c_bis = c_star(theta0, a, eps)
    assert abs(c_bis) <= 1e-12  # phi_0(0) = 1/2 exactly

    theta0 = 0.25
    c_bis = c_star(theta0, a, eps, tol=1e-13)
    # Newton iteration on g(c) = phi_c(0) - theta0 as an independent check
    c_n = 0.2
    for _ in range(60):
        g = phi_c(0.0, c_n, a, eps) - theta0
        if abs(g) < 1e-15:
            break
        dg = (phi_c(0.0, c_n + 1e-6, a, eps) - phi_c(0.0, c_n - 1e-6, a, eps)) / 2e-6
        c_n -= g / dg
    assert c_bis == pytest.approx(c_n, abs=1e-11)
    # closed form: phi_c(0) = 1 / (exp(c a / (1+eps)) + 1)
    assert c_bis == pytest.approx((1 + eps) * np.log(1 / theta0 - 1) / a, abs=1e-12)

    c_eps = c_star(theta0, a, 0.25, tol=1e-13)
    assert c_eps == pytest.approx(1.25 * np.log(3.0) / a, abs=1e-12)


def test_c_star_rejects_empty_bracket():
    with pytest.raises(ConvergenceError, match="sign change"):
        c_star(0.25, 8.0, c_max=1e-6)
