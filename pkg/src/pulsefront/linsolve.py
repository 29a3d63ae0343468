"""Sparse assembly and solution of the moving-frame operators.

Assembles  A g = -c g_s + u . tilde_grad g - L_eps g + q g  on the
(s, x, sigma) grid with any mix of Dirichlet (slab ends, walls), conormal
(walls, temperature only) and periodic (x) boundary conditions.  Dirichlet
nodes are eliminated; conormal wall nodes stay as unknowns whose row is the
discrete boundary condition  eta . tilde_grad g = r  closed with a
second-order one-sided sigma stencil.

Advection is centered by default; a first-order upwind component blends in
automatically when the cell Peclet number exceeds 2 (guards the early
homotopy sweeps; the converged fronts are smooth and stay centered).

The default solver is ILU-preconditioned LGMRES with a direct sparse-LU
fallback for small systems; both are deterministic given fixed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolveError
from .geometry import PeriodCell

DIRECT_THRESHOLD = 30_000  # unknowns; LU fill above this is slower than ILU+Krylov


@dataclass(frozen=True)
class OperatorSpec:
    """Coefficients of A = -c d_s + u . tilde_grad - L_eps + reaction."""

    eps: float
    c: float = 0.0
    u: tuple | None = None          # (u1, u2) arrays on the grid, or None
    reaction: np.ndarray | None = None
    upwind: float | None = None     # None = auto from the cell Peclet number


@dataclass(frozen=True)
class BCSet:
    """Boundary conditions: ("dirichlet", value) ends/walls, or ("conormal", rhs) walls.

    Wall entries hold (bottom, top) pairs; values broadcast from scalars.
    x is always periodic.
    """

    s_left: tuple
    s_right: tuple
    walls: tuple

    @staticmethod
    def temperature(left=1.0, right=0.0, wall_rhs=0.0):
        """T(-a) = 1, T(a) = 0, conormal eta . tilde_grad T = 0 on the walls."""
        return BCSet(("dirichlet", left), ("dirichlet", right),
                     ("conormal", (wall_rhs, wall_rhs)))

    @staticmethod
    def dirichlet_zero():
        """Vorticity / stream conditions: zero on the ends and the walls."""
        return BCSet(("dirichlet", 0.0), ("dirichlet", 0.0),
                     ("dirichlet", (0.0, 0.0)))


@dataclass
class SolveInfo:
    method: str
    iterations: int
    residual: float


@dataclass
class LinearSystem:
    """Assembled operator over the active unknowns plus BC bookkeeping."""

    A: sp.csr_matrix
    rhs_bc: np.ndarray           # Dirichlet lift + conormal right-hand sides
    active: np.ndarray           # flat grid indices of the unknowns
    index_map: np.ndarray        # flat grid index -> active index (-1 eliminated)
    source_mask: np.ndarray      # rows that accept the PDE source term
    dirichlet_values: np.ndarray  # full-grid array, Dirichlet data filled
    shape: tuple
    cell: PeriodCell = field(repr=False, default=None)
    spec: OperatorSpec = field(repr=False, default=None)
    wall_kind: str = "dirichlet"

    @property
    def n(self):
        return self.A.shape[0]

    def rhs_from_source(self, source):
        """Full right-hand side for a PDE source field (3D array or scalar)."""
        rhs = self.rhs_bc.copy()
        if np.ndim(source) == 0:
            rhs[self.source_mask] += float(source)
        else:
            rhs[self.source_mask] += np.asarray(source, dtype=float).ravel()[
                self.active[self.source_mask]]
        return rhs

    def scatter(self, x_active):
        """Embed an active-unknown vector into the full grid with BC data filled."""
        full = self.dirichlet_values.copy()
        full.ravel()[self.active] = x_active
        return full

    def restrict(self, full):
        return np.asarray(full, dtype=float).ravel()[self.active]


def _broadcast_end(value, n_x, n_z):
    return np.broadcast_to(np.asarray(value, dtype=float), (n_x, n_z)).copy()


def _broadcast_wall(value, n_s, n_x):
    return np.broadcast_to(np.asarray(value, dtype=float), (n_s, n_x)).copy()


def _auto_upwind(spec: OperatorSpec, cell: PeriodCell):
    """Global upwind blend from the worst cell Peclet number (0 below Pe=2)."""
    if spec.upwind is not None:
        return float(spec.upwind)
    u1 = spec.u[0] if spec.u is not None else 0.0
    u2 = spec.u[1] if spec.u is not None else 0.0
    m = cell.sigma_map
    beta_s = np.max(np.abs(u1 - spec.c))
    beta_x = np.max(np.abs(u1)) if spec.u is not None else 0.0
    beta_q = np.max(np.abs(u1 * m.J[None] + u2 / m.H[None, :, None] - m.drift[None]))
    pe = max(beta_s * cell.h_s / (1.0 + spec.eps),
             beta_x * cell.h_x,
             beta_q * cell.h_sigma / np.min(m.a_zz))
    return 0.0 if pe <= 2.0 else min(1.0, 1.0 - 2.0 / pe)


def assemble(spec: OperatorSpec, bc: BCSet, cell: PeriodCell) -> LinearSystem:
    """Assemble the sparse system for the given operator and boundary set."""
    n_s, n_x, n_z = cell.shape
    N = n_s * n_x * n_z
    hs, hx, hq = cell.h_s, cell.h_x, cell.h_sigma
    m = cell.sigma_map
    J = np.broadcast_to(m.J[None, :, :], cell.shape)
    H = np.broadcast_to(m.H[None, :, None], cell.shape)
    a_zz = np.broadcast_to(m.a_zz[None, :, :], cell.shape)
    drift = np.broadcast_to(m.drift[None, :, :], cell.shape)

    S, X, Q = np.meshgrid(np.arange(n_s), np.arange(n_x), np.arange(n_z),
                          indexing="ij")
    flat = (S * n_x + X) * n_z + Q

    # --- node classification -------------------------------------------------
    walls_kind, wall_data = bc.walls[0], bc.walls[1]
    dirichlet = np.zeros(cell.shape, dtype=bool)
    dirichlet[0], dirichlet[-1] = True, True
    dir_vals = np.zeros(cell.shape)
    dir_vals[0] = _broadcast_end(bc.s_left[1], n_x, n_z)
    dir_vals[-1] = _broadcast_end(bc.s_right[1], n_x, n_z)
    if walls_kind == "dirichlet":
        dirichlet[:, :, 0] = True
        dirichlet[:, :, -1] = True
        dir_vals[:, :, 0] = _broadcast_wall(wall_data[0], n_s, n_x)
        dir_vals[:, :, -1] = _broadcast_wall(wall_data[1], n_s, n_x)
        dir_vals[0] = _broadcast_end(bc.s_left[1], n_x, n_z)
        dir_vals[-1] = _broadcast_end(bc.s_right[1], n_x, n_z)
        conormal = np.zeros(cell.shape, dtype=bool)
    elif walls_kind == "conormal":
        conormal = np.zeros(cell.shape, dtype=bool)
        conormal[1:-1, :, 0] = True
        conormal[1:-1, :, -1] = True
    else:
        raise ValueError(f"unknown wall bc {walls_kind!r}")
    dir_vals[~dirichlet] = 0.0

    active_mask = ~dirichlet
    pde_rows = active_mask & ~conormal
    index_map = np.full(N, -1, dtype=np.int64)
    active = flat[active_mask]
    index_map[active] = np.arange(active.size)

    rows_list, cols_list, vals_list = [], [], []
    rhs_bc = np.zeros(active.size)

    def add_leg(row_mask, ds, dx, dq, coef):
        """Scatter one stencil leg; Dirichlet columns move to the RHS."""
        rm = row_mask
        S2 = S[rm] + ds
        X2 = (X[rm] + dx) % n_x
        Q2 = Q[rm] + dq
        ok = (S2 >= 0) & (S2 < n_s) & (Q2 >= 0) & (Q2 < n_z)
        if not np.all(ok):
            raise AssertionError("stencil leg left the grid; bad row classification")
        cols_flat = (S2 * n_x + X2) * n_z + Q2
        coefs = (np.broadcast_to(coef, cell.shape)[rm]
                 if np.ndim(coef) > 0 else np.full(rm.sum(), float(coef)))
        rows_act = index_map[flat[rm]]
        cols_act = index_map[cols_flat]
        free = cols_act >= 0
        rows_list.append(rows_act[free])
        cols_list.append(cols_act[free])
        vals_list.append(coefs[free])
        if np.any(~free):
            np.add.at(rhs_bc, rows_act[~free],
                      -coefs[~free] * dir_vals.ravel()[cols_flat[~free]])

    # --- PDE rows -------------------------------------------------------------
    u1 = spec.u[0] if spec.u is not None else np.zeros(cell.shape)
    u2 = spec.u[1] if spec.u is not None else np.zeros(cell.shape)
    gamma = _auto_upwind(spec, cell)

    c_ss = -(1.0 + spec.eps)
    c_xx = -1.0
    c_qq = -a_zz
    beta_s = u1 - spec.c
    beta_x = u1
    beta_q = u1 * J + u2 / H - drift
    diag = spec.reaction if spec.reaction is not None else 0.0

    center = np.broadcast_to(
        -2.0 * c_ss / hs**2 - 2.0 * c_xx / hx**2 - 2.0 * c_qq / hq**2 + diag,
        cell.shape).copy()

    def first_derivative_legs(beta, axis_h, axis):
        """Centered/upwind blend entries for beta * d/daxis."""
        off = [0, 0, 0]
        cen = (1.0 - gamma) * beta / (2.0 * axis_h)
        legs = []
        off_p, off_m = off.copy(), off.copy()
        off_p[axis], off_m[axis] = 1, -1
        legs.append((tuple(off_p), cen))
        legs.append((tuple(off_m), -cen))
        if gamma > 0.0:
            pos = np.maximum(beta, 0.0) * gamma / axis_h
            neg = np.minimum(beta, 0.0) * gamma / axis_h
            legs.append((tuple(off_m), -pos))
            legs.append((tuple(off_p), neg))
            legs.append(((0, 0, 0), pos - neg))
        return legs

    legs = [((0, 0, 0), center),
            ((1, 0, 0), c_ss / hs**2), ((-1, 0, 0), c_ss / hs**2),
            ((0, 1, 0), c_xx / hx**2), ((0, -1, 0), c_xx / hx**2),
            ((0, 0, 1), c_qq / hq**2), ((0, 0, -1), c_qq / hq**2)]
    # mixed second derivatives (4-point cross stencils)
    cross_terms = ((1, 0, hx, hs, -2.0 * np.ones(cell.shape)),   # d_x d_s
                   (1, 2, hx, hq, -2.0 * J),                     # d_x d_sigma
                   (0, 2, hs, hq, -2.0 * J))                     # d_s d_sigma
    for ax_a, ax_b, ha, hb, coef in cross_terms:
        for sa, sb in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
            off = [0, 0, 0]
            off[ax_a], off[ax_b] = sa, sb
            legs.append((tuple(off), sa * sb * coef / (4.0 * ha * hb)))
    legs += first_derivative_legs(beta_s, hs, 0)
    legs += first_derivative_legs(beta_x, hx, 1)
    legs += first_derivative_legs(beta_q, hq, 2)

    for off, coef in legs:
        add_leg(pde_rows, *off, coef)

    # --- conormal wall rows -----------------------------------------------
    if walls_kind == "conormal":
        bcl = cell.boundary
        for side, qi, eta, one_sided in (
                ("bottom", 0, bcl.eta_bottom, ((0, -3.0), (1, 4.0), (2, -1.0))),
                ("top", n_z - 1, bcl.eta_top, ((0, 3.0), (-1, -4.0), (-2, 1.0)))):
            rm = np.zeros(cell.shape, dtype=bool)
            rm[1:-1, :, qi] = True
            eta1 = np.broadcast_to(eta[:, 0][None, :, None], cell.shape)
            eta2 = np.broadcast_to(eta[:, 1][None, :, None], cell.shape)
            c_sigma = eta1 * J + eta2 / H
            if np.min(np.abs(c_sigma[rm])) < 1e-12:
                bad = np.argwhere(rm & (np.abs(c_sigma) < 1e-12))[0]
                raise SolveError(f"degenerate wall normal closure at node {tuple(bad)}")
            # eta1 * (g_x + g_s) with centered differences
            add_leg(rm, 0, 1, 0, eta1 / (2.0 * hx))
            add_leg(rm, 0, -1, 0, -eta1 / (2.0 * hx))
            add_leg(rm, 1, 0, 0, eta1 / (2.0 * hs))
            add_leg(rm, -1, 0, 0, -eta1 / (2.0 * hs))
            for dq, w in one_sided:
                add_leg(rm, 0, 0, dq, c_sigma * w / (2.0 * hq))
            rhs_wall = _broadcast_wall(wall_data[0 if side == "bottom" else 1],
                                       n_s, n_x)
            rhs_bc[index_map[flat[rm]]] += rhs_wall[1:-1, :].ravel()

    A = sp.coo_matrix(
        (np.concatenate(vals_list),
         (np.concatenate(rows_list), np.concatenate(cols_list))),
        shape=(active.size, active.size)).tocsr()
    return LinearSystem(A=A, rhs_bc=rhs_bc, active=active, index_map=index_map,
                        source_mask=pde_rows[active_mask],
                        dirichlet_values=dir_vals, shape=cell.shape,
                        cell=cell, spec=spec, wall_kind=walls_kind)


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------

class ILUPreconditioner:
    """Row-equilibrated incomplete-LU preconditioner.

    Equilibration keeps the PDE rows (~1/h^2) and the boundary closure rows
    (~1/h) on a common scale, which SuperLU's restricted ILU pivoting needs.
    """

    def __init__(self, system: LinearSystem, drop_tol=1e-5, fill_factor=12.0):
        A = system.A.tocsr()
        rmax = np.abs(A).max(axis=1).toarray().ravel()
        rmax[rmax == 0.0] = 1.0
        self.D = sp.diags(1.0 / rmax)
        self.ilu = spla.spilu((self.D @ A).tocsc(), drop_tol=drop_tol,
                              fill_factor=fill_factor)
        self.n = system.n

    @property
    def operator(self):
        return spla.LinearOperator((self.n, self.n),
                                   lambda r: self.ilu.solve(self.D @ r))


class FourierXPreconditioner:
    """Exact inverse of the x-averaged operator, applied mode by mode.

    The period cell is x-periodic, so the flat-metric part of
    -c d_s - L_eps diagonalizes over discrete x-Fourier modes into small
    complex 2D (s, sigma) blocks, each factorized exactly.  For a flat
    channel without advection this preconditioner IS the operator inverse;
    wavy metric terms and the u advection are left to the Krylov iteration.
    It captures the degenerate (d_x + d_s)^2 symbol exactly, which keeps
    iteration counts flat as eps shrinks, where incomplete factorizations
    of the full 3D stencil stall.
    """

    def __init__(self, system: LinearSystem, kind: str):
        cell = system.cell
        spec = system.spec
        n_s, n_x, n_z = cell.shape
        hs, hx, hq = cell.h_s, cell.h_x, cell.h_sigma
        eps, c = spec.eps, spec.c
        H_bar = float(np.mean(cell.sigma_map.H))
        self.kind = kind
        self.shape = cell.shape
        self.n_x = n_x
        self.active_mask = np.zeros(cell.shape, dtype=bool)
        if kind == "temperature":
            self.active_mask[1:-1, :, :] = True
            nq, q_off = n_z, 0
        elif kind == "dirichlet":
            self.active_mask[1:-1, :, 1:-1] = True
            nq, q_off = n_z - 2, 1
        else:
            raise ValueError(kind)
        ns_act = n_s - 2
        self.block_shape = (ns_act, nq)

        k = np.arange(n_x)
        kappa1 = np.sin(2.0 * np.pi * k / n_x) / hx
        kappa2 = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n_x)) / hx ** 2

        S, Q = np.meshgrid(np.arange(ns_act), np.arange(nq), indexing="ij")
        flat = S * nq + Q
        m = ns_act * nq
        self.lus = []
        for ki in range(n_x):
            rows, cols, vals = [], [], []

            def add(mask, ds, dq, coef):
                S2, Q2 = S[mask] + ds, Q[mask] + dq
                ok = (S2 >= 0) & (S2 < ns_act) & (Q2 >= 0) & (Q2 < nq)
                rows.append(flat[mask][ok])
                cols.append((S2 * nq + Q2)[ok])
                vals.append(np.full(ok.sum(), complex(coef)))

            pde = np.ones((ns_act, nq), dtype=bool)
            if kind == "temperature":
                pde[:, 0] = pde[:, -1] = False
            a_q = 1.0 / H_bar ** 2
            add(pde, 0, 0, kappa2[ki] + 2.0 * (1 + eps) / hs ** 2 + 2.0 * a_q / hq ** 2)
            b_s = -(c + 2.0j * kappa1[ki]) / (2.0 * hs)
            add(pde, 1, 0, -(1 + eps) / hs ** 2 + b_s)
            add(pde, -1, 0, -(1 + eps) / hs ** 2 - b_s)
            add(pde, 0, 1, -a_q / hq ** 2)
            add(pde, 0, -1, -a_q / hq ** 2)
            if kind == "temperature":
                for qi, sgn, offs in ((0, -1.0, (0, 1, 2)), (nq - 1, 1.0, (0, -1, -2))):
                    wm = np.zeros((ns_act, nq), dtype=bool)
                    wm[:, qi] = True
                    for dq, w in zip(offs, (3.0 * sgn, -4.0 * sgn, 1.0 * sgn)):
                        add(wm, 0, dq, (sgn / H_bar) * w / (2.0 * hq))
            A_k = sp.coo_matrix(
                (np.concatenate(vals),
                 (np.concatenate(rows), np.concatenate(cols))),
                shape=(m, m), dtype=complex).tocsc()
            self.lus.append(spla.splu(A_k))
        self.n = int(self.active_mask.sum())

    def _apply(self, r):
        # the active set is s-interior x all-x x a sigma range, so the active
        # vector reshapes directly into (s, x, sigma) blocks
        block = r.reshape(self.block_shape[0], self.n_x, self.block_shape[1])
        modes = np.fft.fft(block, axis=1)
        out = np.empty_like(modes)
        for ki in range(self.n_x):
            out[:, ki, :] = self.lus[ki].solve(
                modes[:, ki, :].ravel()).reshape(self.block_shape)
        z = np.real(np.fft.ifft(out, axis=1))
        return z.reshape(-1)

    @property
    def operator(self):
        return spla.LinearOperator((self.n, self.n), self._apply)


def solve(system: LinearSystem, rhs, tol=1e-10, max_iter=600, x0=None,
          method="auto", precond=None, direct_threshold=DIRECT_THRESHOLD):
    """Solve A x = rhs to a relative residual of `tol`.

    Deterministic: fixed iteration order, no threaded reductions.  Raises
    SolveError on non-convergence (with the final residual) and immediately
    on NaN.
    """
    rhs = np.asarray(rhs, dtype=float)
    b_norm = float(np.linalg.norm(rhs))
    if not np.isfinite(b_norm):
        raise SolveError("non-finite right-hand side")
    if b_norm == 0.0:
        return np.zeros(system.n), SolveInfo("trivial", 0, 0.0)
    if method == "auto":
        method = "direct" if system.n <= direct_threshold else "lgmres"

    if method == "direct":
        lu = spla.splu(system.A.tocsc())
        x = lu.solve(rhs)
    elif method in ("lgmres", "cg"):
        if precond is None:
            if system.cell is not None:
                kind = "temperature" if system.wall_kind == "conormal" \
                    else "dirichlet"
                precond = FourierXPreconditioner(system, kind)
            else:
                precond = ILUPreconditioner(system)
        matvecs = [0]
        A = system.A

        def mv(v):
            matvecs[0] += 1
            return A @ v

        A_op = spla.LinearOperator((system.n, system.n), mv)
        kr = spla.lgmres if method == "lgmres" else spla.cg
        x, info = kr(A_op, rhs, x0=x0, M=precond.operator, rtol=tol, atol=0.0,
                     maxiter=max_iter)
        if info != 0:
            res = float(np.linalg.norm(system.A @ x - rhs) / b_norm)
            raise SolveError(f"{method} failed to converge (info={info})",
                             residual=res, iterations=matvecs[0])
    else:
        raise ValueError(f"unknown method {method!r}")

    res = float(np.linalg.norm(system.A @ x - rhs) / b_norm)
    if np.isnan(res):
        raise SolveError("NaN residual", residual=res)
    if res > max(tol * 50.0, 1e-9) and method == "direct":
        raise SolveError(f"direct solve residual {res:.2e} above tolerance",
                         residual=res)
    if res > tol and method != "direct":
        raise SolveError(f"{method} residual {res:.2e} above tolerance {tol:.2e}",
                         residual=res)
    iters = matvecs[0] if method in ("lgmres", "cg") else 1
    return x, SolveInfo(method, iters, res)


def solve_field(spec: OperatorSpec, bc: BCSet, cell: PeriodCell, source,
                tol=1e-10, **kw):
    """Assemble + solve + scatter in one call; returns the full-grid array."""
    system = assemble(spec, bc, cell)
    x, info = solve(system, system.rhs_from_source(source), tol=tol, **kw)
    return system.scatter(x), info
