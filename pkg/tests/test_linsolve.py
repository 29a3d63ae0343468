import numpy as np
import pytest
import scipy.sparse as sp

from pulsefront.errors import SolveError
from pulsefront.geometry import flat_cell
from pulsefront.linsolve import (BCSet, ILUPreconditioner, LinearSystem,
                                 OperatorSpec, _auto_upwind, assemble, solve,
                                 solve_field)


def _raw_system(A):
    n = A.shape[0]
    return LinearSystem(A=A.tocsr(), rhs_bc=np.zeros(n), active=np.arange(n),
                        index_map=np.arange(n), source_mask=np.ones(n, bool),
                        dirichlet_values=np.zeros(n), shape=(n,))


def test_identity_system_returns_rhs(rng):
    A = sp.eye(40, format="csr")
    b = rng.standard_normal(40)
    x, info = solve(_raw_system(A), b, method="direct")
    assert np.allclose(x, b, atol=1e-14)


def test_zero_rhs_gives_zero(flat_small):
    sys_ = assemble(OperatorSpec(eps=0.1), BCSet.dirichlet_zero(), flat_small)
    x, _ = solve(sys_, sys_.rhs_from_source(0.0))
    assert np.max(np.abs(x)) == 0.0


def test_1d_poisson_analytic_second_order():
    # -g'' = (pi/2a)^2 sin(pi (s+a)/(2a)), g(+-a) = 0, conormal walls keep
    # the solution s-only
    def err(n_s):
        cell = flat_cell(a=2.0, n_s=n_s, n_x=4, n_z=5)
        k = np.pi / (2 * cell.a)
        exact = np.sin(k * (cell.s + cell.a))
        src = (k ** 2 * exact)[:, None, None] * np.ones(cell.shape)
        spec = OperatorSpec(eps=0.0)
        bc = BCSet(("dirichlet", 0.0), ("dirichlet", 0.0), ("conormal", (0.0, 0.0)))
        sol, _ = solve_field(spec, bc, cell, src, method="direct")
        return np.max(np.abs(sol - exact[:, None, None]))

    e1, e2 = err(33), err(65)
    assert e1 / e2 > 3.5


def test_dense_elimination_oracle(rng):
    n = 50
    A = rng.standard_normal((n, n))
    A += np.diag(np.sum(np.abs(A), axis=1) + 1.0)
    b = rng.standard_normal(n)
    x, _ = solve(_raw_system(sp.csr_matrix(A)), b, method="direct")
    assert np.max(np.abs(x - np.linalg.solve(A, b))) <= 1e-10


def test_deterministic_bitwise(flat_small):
    spec = OperatorSpec(eps=0.2, c=0.4)
    src = np.sin(flat_small.s)[:, None, None] * np.ones(flat_small.shape)
    a1, _ = solve_field(spec, BCSet.temperature(), flat_small, src, method="direct")
    a2, _ = solve_field(spec, BCSet.temperature(), flat_small, src, method="direct")
    assert np.array_equal(a1, a2)
    s1 = assemble(spec, BCSet.temperature(), flat_small)
    b = s1.rhs_from_source(src)
    x1, _ = solve(s1, b, method="lgmres", tol=1e-11)
    x2, _ = solve(s1, b, method="lgmres", tol=1e-11)
    assert np.array_equal(x1, x2)


def test_cg_energy_monotone(flat_small, rng):
    import scipy.sparse.linalg as spla
    sys_ = assemble(OperatorSpec(eps=0.2), BCSet.dirichlet_zero(), flat_small)
    A = sys_.A
    b = rng.standard_normal(sys_.n)
    x_star = spla.spsolve(A.tocsc(), b)
    energies = []

    def cb(xk):
        d = xk - x_star
        energies.append(float(d @ (A @ d)))

    spla.cg(A, b, rtol=1e-12, atol=0.0, callback=cb, maxiter=400)
    e = np.array(energies)
    assert np.all(np.diff(e) <= 1e-12 * e[0])


def test_1d_reducible_acts_tridiagonally(flat_small):
    # with no x,z structure the T-row acts like the two-point operator
    # -c g' - (1+eps) g''
    eps, c = 0.3, 0.8
    cell = flat_small
    sys_ = assemble(OperatorSpec(eps=eps, c=c),
                    BCSet(("dirichlet", 0.0), ("dirichlet", 0.0),
                          ("conormal", (0.0, 0.0))), cell)
    g = np.sin(np.pi * (cell.s + cell.a) / (2 * cell.a))
    full = g[:, None, None] * np.ones(cell.shape)
    out = (sys_.A @ sys_.restrict(full))
    out_grid = np.zeros(cell.shape).ravel()
    out_grid[sys_.active] = out
    out_grid = out_grid.reshape(cell.shape)

    h = cell.h_s
    tri = np.zeros_like(g)
    tri[1:-1] = (-c * (g[2:] - g[:-2]) / (2 * h)
                 - (1 + eps) * (g[2:] - 2 * g[1:-1] + g[:-2]) / h ** 2)
    assert np.allclose(out_grid[1:-1, 2, 2], tri[1:-1], atol=1e-10)


def test_discrete_integration_by_parts(flat_small, rng):
    # <L_eps g, g> = -<grad g, grad g> - eps <g_s, g_s> exactly for zero
    # Dirichlet data, using the compatible staggered/centered split
    eps = 0.2
    cell = flat_small
    sys_ = assemble(OperatorSpec(eps=eps), BCSet.dirichlet_zero(), cell)
    v = rng.standard_normal(cell.shape)
    v[0] = v[-1] = 0.0
    v[:, :, 0] = v[:, :, -1] = 0.0
    g = sys_.restrict(v)
    lhs = -float(g @ (sys_.A @ g))  # A = -L_eps

    hs, hx, hq = cell.h_s, cell.h_x, cell.h_sigma
    d_s_stag = (v[1:] - v[:-1]) / hs
    d_x_stag = (np.roll(v, -1, axis=1) - v) / hx
    d_q_stag = (v[:, :, 1:] - v[:, :, :-1]) / hq
    d_s_cen = np.zeros_like(v)
    d_s_cen[1:-1] = (v[2:] - v[:-2]) / (2 * hs)
    d_x_cen = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * hx)
    energy = (np.sum(d_x_stag ** 2) + (1 + eps) * np.sum(d_s_stag ** 2)
              + np.sum(d_q_stag ** 2) + 2 * np.sum(d_s_cen * d_x_cen))
    assert abs(lhs - (-energy)) / energy <= 1e-10


def test_mms_flat_full_operator_second_order():
    # manufactured cos(w(x+s)) cos(pi z) with advection; analytic source
    def err(n):
        cell = flat_cell(a=2.0, n_s=4 * n + 1, n_x=n, n_z=n + 1)
        w = 2 * np.pi / cell.ell
        c = 0.7
        s = cell.s[:, None, None]
        x = cell.x[None, :, None]
        z = cell.sigma_map.z[None, :, :]
        T = np.cos(w * (x + s)) * np.cos(np.pi * z) * np.ones(cell.shape)
        T_s = -w * np.sin(w * (x + s)) * np.cos(np.pi * z) * np.ones(cell.shape)
        T_z = -np.pi * np.cos(w * (x + s)) * np.sin(np.pi * z) * np.ones(cell.shape)
        u1 = np.sin(w * x) * np.cos(0.5 * np.pi * z) * np.ones(cell.shape)
        u2 = np.cos(w * x) * np.sin(0.5 * np.pi * z) * np.ones(cell.shape)
        eps = 0.25
        L_T = -(4 * w ** 2 + np.pi ** 2 + eps * w ** 2) * T
        src = -c * T_s + u1 * 2.0 * T_s + u2 * T_z - L_T
        bc = BCSet(("dirichlet", T[0]), ("dirichlet", T[-1]), ("conormal", (0.0, 0.0)))
        sol, _ = solve_field(OperatorSpec(eps=eps, c=c, u=(u1, u2)), bc, cell, src,
                             method="direct")
        return np.max(np.abs(sol - T))

    e1, e2 = err(8), err(16)
    order = np.log2(e1 / e2)
    assert 1.8 <= order <= 2.2


def test_auto_upwind_engages_on_high_peclet(flat_small):
    quiet = OperatorSpec(eps=0.25, c=0.5)
    assert _auto_upwind(quiet, flat_small) == 0.0
    fast = OperatorSpec(eps=0.0, c=200.0)
    assert 0.0 < _auto_upwind(fast, flat_small) <= 1.0


def test_solver_failure_reports_residual(rng):
    # an indefinite ill-conditioned system with a tiny iteration budget
    n = 200
    diag = np.linspace(-1, 1, n)
    A = sp.diags(diag) + sp.random(n, n, density=0.02, random_state=1)
    b = rng.standard_normal(n)
    with pytest.raises(SolveError) as ei:
        solve(_raw_system(A.tocsr()), b, method="lgmres", tol=1e-14, max_iter=2)
    assert ei.value.residual is None or ei.value.residual >= 0.0


def test_nan_rhs_fails_fast(flat_small):
    sys_ = assemble(OperatorSpec(eps=0.1), BCSet.dirichlet_zero(), flat_small)
    rhs = sys_.rhs_from_source(0.0)
    rhs[0] = np.nan
    with pytest.raises(SolveError, match="non-finite"):
        solve(sys_, rhs)
