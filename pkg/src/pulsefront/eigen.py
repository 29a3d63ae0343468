"""Principal eigenpairs of the drifted comparison operators, and the
explicit zero-forcing profile with its speed root.

The comparison problems live on the 2D period cell (no s-dependence):

    -Lap psi + sign * 2 alpha d_x psi = mu psi     on Omega_p,
    -sign * alpha eta_1 psi + eta . grad psi = 0   on the walls,

periodic in x.  The principal pair (smallest real eigenvalue, positive
eigenfunction) feeds the sub/supersolution speed diagnostics.  On a flat
strip the wall condition degenerates to Neumann and the pair is exactly
(0, 1); the solver accepts mu >= 0 and reports it.

The zero-forcing slab profile phi_c(s) solves -c T' = (1+eps) T'' with
T(-a) = 1, T(a) = 0; its value at s = 0 is 1 / (exp(c a / (1+eps)) + 1),
strictly decreasing in c, and c_star is the root pinning phi_c(0) = theta0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError
from .fields_ops import GridField, TAG_TEMPERATURE, d1, d1_periodic
from .geometry import PeriodCell


@dataclass(frozen=True)
class EigenProblem:
    cell: PeriodCell
    alpha: float = 1.0
    drift_sign: int = 1      # +1: psi_e; -1: the adjoint variant psi'_e


def assemble_eigen_operator(problem: EigenProblem) -> sp.csr_matrix:
    """Sparse 2D operator with Robin wall rows and periodic x."""
    cell = problem.cell
    n_x, n_z = cell.n_x, cell.n_z
    hx, hq = cell.h_x, cell.h_sigma
    m = cell.sigma_map
    alpha, sign = problem.alpha, float(problem.drift_sign)

    X, Q = np.meshgrid(np.arange(n_x), np.arange(n_z), indexing="ij")
    flat = X * n_z + Q
    rows, cols, vals = [], [], []

    def add(row_mask, dx, dq, coef):
        X2 = (X[row_mask] + dx) % n_x
        Q2 = Q[row_mask] + dq
        rows.append(flat[row_mask])
        cols.append(X2 * n_z + Q2)
        coefs = (np.broadcast_to(coef, (n_x, n_z))[row_mask]
                 if np.ndim(coef) > 0 else np.full(row_mask.sum(), float(coef)))
        vals.append(coefs)

    interior = np.zeros((n_x, n_z), dtype=bool)
    interior[:, 1:-1] = True

    # -Lap + sign 2 alpha d_x  in mapped coordinates
    add(interior, 0, 0, 2.0 / hx ** 2 + 2.0 * m.a_zz / hq ** 2)
    add(interior, 1, 0, -1.0 / hx ** 2 + sign * 2.0 * alpha / (2.0 * hx))
    add(interior, -1, 0, -1.0 / hx ** 2 - sign * 2.0 * alpha / (2.0 * hx))
    beta_q = -m.drift + sign * 2.0 * alpha * m.J
    add(interior, 0, 1, -m.a_zz / hq ** 2 + beta_q / (2.0 * hq))
    add(interior, 0, -1, -m.a_zz / hq ** 2 - beta_q / (2.0 * hq))
    for sa, sb in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
        add(interior, sa, sb, sa * sb * (-2.0 * m.J) / (4.0 * hx * hq))

    bcl = problem.cell.boundary
    for qi, eta, one_sided in ((0, bcl.eta_bottom, ((0, -3.0), (1, 4.0), (2, -1.0))),
                               (n_z - 1, bcl.eta_top, ((0, 3.0), (-1, -4.0), (-2, 1.0)))):
        rm = np.zeros((n_x, n_z), dtype=bool)
        rm[:, qi] = True
        eta1 = np.broadcast_to(eta[:, 0][:, None], (n_x, n_z))
        eta2 = np.broadcast_to(eta[:, 1][:, None], (n_x, n_z))
        add(rm, 0, 0, -sign * alpha * eta1)
        add(rm, 1, 0, eta1 / (2.0 * hx))
        add(rm, -1, 0, -eta1 / (2.0 * hx))
        c_sigma = eta1 * m.J + eta2 / m.H[:, None]
        for dq, w in one_sided:
            add(rm, 0, dq, c_sigma * w / (2.0 * hq))

    N = n_x * n_z
    return sp.coo_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N, N)).tocsr()


def principal_eigenpair(problem: EigenProblem, tol=1e-11, max_iter=2000):
    """Inverse power iteration (shift -1) for the principal pair.

    Returns (mu, psi) with psi > 0 normalized to sup-norm 1.  The Robin rows
    carry eigenvalue zero weight, so the generalized structure is handled by
    embedding them in the mass term mask.
    """
    cell = problem.cell
    n_x, n_z = cell.n_x, cell.n_z
    A = assemble_eigen_operator(problem)
    # mass matrix: identity on PDE rows, zero on the Robin boundary rows
    mass = np.ones((n_x, n_z))
    mass[:, 0] = mass[:, -1] = 0.0
    B = sp.diags(mass.ravel())
    lu = spla.splu((A + B).tocsc())

    v = np.ones(n_x * n_z)
    v /= np.max(np.abs(v))
    mu = 0.0
    for _ in range(max_iter):
        w = lu.solve(B @ v)
        nrm = np.max(np.abs(w))
        if nrm == 0.0:
            raise ConvergenceError("inverse iteration collapsed to zero")
        w = w / nrm
        if w[np.argmax(np.abs(w))] < 0:
            w = -w
        delta = np.max(np.abs(w - v))
        v = w
        if delta <= tol:
            break
    else:
        raise ConvergenceError("inverse power iteration did not converge",
                               history=[delta])

    Av = A @ v
    Bv = B @ v
    mu = float((v @ Av) / (v @ Bv))
    psi = v.reshape(n_x, n_z)
    psi = psi / np.max(np.abs(psi))
    resid = np.max(np.abs(Av - mu * Bv))
    if np.min(psi) <= 0.0:
        raise ConvergenceError(
            f"principal eigenvector not positive (min {np.min(psi):.3e}); "
            "discretization bug")
    return mu, psi, resid


def grad_psi_over_psi_sup(cell: PeriodCell, psi) -> float:
    """sup |grad psi| / psi over the cell (stationary 2D gradient)."""
    m = cell.sigma_map
    px = d1_periodic(psi, cell.h_x, axis=0) + m.J * d1(psi, cell.h_sigma, axis=1)
    pz = d1(psi, cell.h_sigma, axis=1) / m.H[:, None]
    return float(np.max(np.hypot(px, pz) / psi))


def comparison_envelope(A: float, alpha: float, psi, R: float,
                        cell: PeriodCell) -> GridField:
    """Supersolution envelope A exp(-alpha (s - R)) psi(x, z) on the 3D grid."""
    decay = A * np.exp(-alpha * (cell.s - R))
    values = decay[:, None, None] * np.broadcast_to(psi[None, :, :], cell.shape)
    return GridField(values.copy(), TAG_TEMPERATURE, cell)


# ---------------------------------------------------------------------------
# zero-forcing profile and its speed root
# ---------------------------------------------------------------------------

def phi_c(s, c: float, a: float, eps: float = 0.0):
    """Profile of -c T' = (1+eps) T'' on [-a, a] with T(-a) = 1, T(a) = 0.

    Evaluated in overflow-safe form for either sign of c.
    """
    s = np.asarray(s, dtype=float)
    ct = c / (1.0 + eps)
    if abs(ct) * a <= 1e-6:
        # second-order expansion around c = 0 avoids catastrophic cancellation
        return (a - s) / (2.0 * a) - ct * (a * a - s * s) / (4.0 * a)
    if ct > 0:
        num = np.exp(-ct * (s + a)) - np.exp(-2.0 * ct * a)
        den = -np.expm1(-2.0 * ct * a)
    else:
        d = -ct
        num = -np.expm1(-d * (a - s))
        den = -np.expm1(-2.0 * d * a)
    return num / den


def c_star(theta0: float, a: float, eps: float = 0.0, c_max: float = 10.0,
           tol: float = 1e-12) -> float:
    """Root of phi_c(0) = theta0 by bisection on [-c_max, c_max].

    phi_c(0) is strictly decreasing in c, so the root is unique.
    """
    def g(c):
        return float(phi_c(0.0, c, a, eps)) - theta0

    lo, hi = -c_max, c_max
    g_lo, g_hi = g(lo), g(hi)
    if g_lo * g_hi > 0.0:
        raise ConvergenceError(
            f"no sign change for c_star in [-{c_max}, {c_max}] "
            f"(g({lo})={g_lo:.3e}, g({hi})={g_hi:.3e})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(lo) * g(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
