"""Stationary-frame time-dependent simulator: the front-speed oracle.

Solves the coupled system on a long 2D channel (several periods of the
wavy geometry):

    T_t + u . grad T = Lap T + f(x, z, T)
    w_t - Lap w      = sigma_b * e . (-T_z, T_x)
    Lap Psi          = w~            (w~ = mollified w, optional)
    u                = (Psi_z, -Psi_x)

with T = 1 / T = 0 at the left/right ends, Neumann walls for T, and
Psi = w = 0 on the whole boundary.  Diffusion is implicit (prefactorized),
advection / reaction / buoyancy explicit; the second-order mode combines
Crank-Nicolson diffusion with Adams-Bashforth transport and is the one
used for speed measurement.

This code path shares no operators with the moving-frame solver, so the
measured front speed and the pulsating-relation check are independent
cross-validations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import PulsefrontError
from .fields_ops import MollifierSpec, _pad_axis
from .geometry import PeriodCell
from .reaction import ReactionSpec, evaluate


class CFLError(PulsefrontError):
    """Advective CFL violated for the prefactorized time step."""


@dataclass(frozen=True)
class DnsConfig:
    n_periods: int = 16
    nx_per_period: int = 32
    n_z: int = 32
    cfl: float = 0.5
    eps_floor: float = 1.0        # velocity floor in the time-step rule
    scheme: str = "imex2"         # "imex1" or "imex2"
    delta: float = 0.0            # vorticity mollifier width (0 = off)
    sigma_b: float = 1.0
    front_x0: float = 4.0
    init_width: float = 0.5
    t_left: float = 1.0           # inflow clamp
    t_right: float = 0.0          # outflow clamp
    history_every: int = 5
    snapshot_every: int = 40
    t_max: float = 40.0
    max_steps: int = 400_000
    stop_margin_periods: float = 2.0

    def __post_init__(self):
        if self.n_periods < 8:
            raise PulsefrontError("DNS channel must span at least 8 periods")
        if self.scheme not in ("imex1", "imex2"):
            raise PulsefrontError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True)
class DnsGrid:
    """Long stationary-frame channel grid in terrain-following coordinates."""

    ell: float
    length: float
    x: np.ndarray           # (N_x,) including both Dirichlet ends
    sigma: np.ndarray       # (n_z,)
    H: np.ndarray           # (N_x,)
    J: np.ndarray           # (N_x, n_z)
    drift: np.ndarray
    a_zz: np.ndarray
    eta_bottom: np.ndarray  # (N_x, 2)
    eta_top: np.ndarray
    e_hat: np.ndarray

    @property
    def shape(self):
        return (self.x.size, self.sigma.size)

    @property
    def h_x(self):
        return self.x[1] - self.x[0]

    @property
    def h_sigma(self):
        return self.sigma[1] - self.sigma[0]

    def z_nodes(self):
        b = self.H * 0.0 + self._b
        return b[:, None] + self.sigma[None, :] * self.H[:, None]

    _b: np.ndarray = None

    def column_mean(self, T):
        """Cross-section mean of T at every x (sigma-trapezoid)."""
        w = np.full(self.sigma.size, self.h_sigma)
        w[0] = w[-1] = 0.5 * self.h_sigma
        return T @ w


def build_dns_grid(cell: PeriodCell, cfg: DnsConfig) -> DnsGrid:
    n_x = cfg.n_periods * cfg.nx_per_period + 1
    length = cfg.n_periods * cell.ell
    x = np.linspace(0.0, length, n_x)
    sigma = np.linspace(0.0, 1.0, cfg.n_z)
    b = cell.wall_bottom(x, cell.ell)
    t = cell.wall_top(x, cell.ell)
    bp = cell.wall_bottom.derivative(x, cell.ell)
    tp = cell.wall_top.derivative(x, cell.ell)
    bpp = cell.wall_bottom.derivative(x, cell.ell, order=2)
    tpp = cell.wall_top.derivative(x, cell.ell, order=2)
    H, Hp, Hpp = t - b, tp - bp, tpp - bpp
    J = -(bp[:, None] + sigma[None, :] * Hp[:, None]) / H[:, None]
    Jx = (-(bpp[:, None] + sigma[None, :] * Hpp[:, None]) / H[:, None]
          + (bp[:, None] + sigma[None, :] * Hp[:, None]) * Hp[:, None] / H[:, None] ** 2)
    drift = Jx + J * (-Hp[:, None] / H[:, None])
    a_zz = J ** 2 + 1.0 / H[:, None] ** 2
    nb, nt = np.hypot(bp, 1.0), np.hypot(tp, 1.0)
    grid = DnsGrid(ell=cell.ell, length=length, x=x, sigma=sigma, H=H, J=J,
                   drift=drift, a_zz=a_zz,
                   eta_bottom=np.stack([bp / nb, -1.0 / nb], axis=1),
                   eta_top=np.stack([-tp / nt, 1.0 / nt], axis=1),
                   e_hat=cell.e_hat)
    object.__setattr__(grid, "_b", b)
    return grid


# ---------------------------------------------------------------------------
# 2D operators (full-grid square matrices; boundary rows embedded)
# ---------------------------------------------------------------------------

def _laplacian_matrix(grid: DnsGrid):
    """Mapped 2D Laplacian; rows at boundary nodes are left zero."""
    n_x, n_z = grid.shape
    hx, hq = grid.h_x, grid.h_sigma
    X, Q = np.meshgrid(np.arange(n_x), np.arange(n_z), indexing="ij")
    flat = X * n_z + Q
    interior = np.zeros(grid.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    rows, cols, vals = [], [], []

    def add(dx, dq, coef):
        rows.append(flat[interior])
        cols.append((X[interior] + dx) * n_z + (Q[interior] + dq))
        coefs = (np.broadcast_to(coef, grid.shape)[interior]
                 if np.ndim(coef) > 0 else np.full(interior.sum(), float(coef)))
        vals.append(coefs)

    add(0, 0, -2.0 / hx ** 2 - 2.0 * grid.a_zz / hq ** 2)
    add(1, 0, 1.0 / hx ** 2)
    add(-1, 0, 1.0 / hx ** 2)
    add(0, 1, grid.a_zz / hq ** 2 + grid.drift / (2.0 * hq))
    add(0, -1, grid.a_zz / hq ** 2 - grid.drift / (2.0 * hq))
    for sa, sb in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
        add(sa, sb, sa * sb * 2.0 * grid.J / (4.0 * hx * hq))
    N = n_x * n_z
    return sp.coo_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N, N)).tocsr(), interior


def _boundary_rows(grid: DnsGrid, kind):
    """Closure rows: Dirichlet identity or Neumann-wall one-sided stencils.

    kind "temperature": Dirichlet x-ends, eta . grad = 0 on walls.
    kind "dirichlet": identity rows on the whole boundary.
    """
    n_x, n_z = grid.shape
    hx, hq = grid.h_x, grid.h_sigma
    X, Q = np.meshgrid(np.arange(n_x), np.arange(n_z), indexing="ij")
    flat = X * n_z + Q
    rows, cols, vals = [], [], []

    def add(mask, dx, dq, coef):
        rows.append(flat[mask])
        cols.append((X[mask] + dx) * n_z + (Q[mask] + dq))
        coefs = (np.broadcast_to(coef, grid.shape)[mask]
                 if np.ndim(coef) > 0 else np.full(mask.sum(), float(coef)))
        vals.append(coefs)

    ends = np.zeros(grid.shape, dtype=bool)
    ends[0, :] = ends[-1, :] = True
    add(ends, 0, 0, 1.0)

    walls_b = np.zeros(grid.shape, dtype=bool)
    walls_b[1:-1, 0] = True
    walls_t = np.zeros(grid.shape, dtype=bool)
    walls_t[1:-1, -1] = True
    if kind == "dirichlet":
        add(walls_b, 0, 0, 1.0)
        add(walls_t, 0, 0, 1.0)
    elif kind == "temperature":
        for mask, eta, one_sided in (
                (walls_b, grid.eta_bottom, ((0, -3.0), (1, 4.0), (2, -1.0))),
                (walls_t, grid.eta_top, ((0, 3.0), (-1, -4.0), (-2, 1.0)))):
            eta1 = np.broadcast_to(eta[:, 0][:, None], grid.shape)
            eta2 = np.broadcast_to(eta[:, 1][:, None], grid.shape)
            add(mask, 1, 0, eta1 / (2.0 * hx))
            add(mask, -1, 0, -eta1 / (2.0 * hx))
            c_sigma = eta1 * grid.J + eta2 / grid.H[:, None]
            for dq, w in one_sided:
                add(mask, 0, dq, c_sigma * w / (2.0 * hq))
    else:
        raise ValueError(kind)
    N = n_x * n_z
    return sp.coo_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N, N)).tocsr()


def _grad(grid: DnsGrid, T):
    """Stationary gradient (d_x + J d_sigma, d_sigma / H), centered interior."""
    from .fields_ops import d1
    tx = d1(T, grid.h_x, axis=0) + grid.J * d1(T, grid.h_sigma, axis=1)
    tz = d1(T, grid.h_sigma, axis=1) / grid.H[:, None]
    return tx, tz


class DnsWorkspace:
    """Prefactorized implicit operators for a fixed time step."""

    def __init__(self, grid: DnsGrid, cfg: DnsConfig, dt: float):
        self.grid, self.cfg, self.dt = grid, cfg, dt
        lap, interior = _laplacian_matrix(grid)
        self.lap = lap
        self.interior = interior
        n = lap.shape[0]
        eye_pde = sp.diags(interior.ravel().astype(float))
        theta = 0.5 if cfg.scheme == "imex2" else 1.0
        self.theta = theta
        bc_T = _boundary_rows(grid, "temperature")
        bc_D = _boundary_rows(grid, "dirichlet")
        self.M_T = spla.splu((eye_pde - theta * dt * lap + bc_T).tocsc())
        self.M_w = spla.splu((eye_pde - theta * dt * lap + bc_D).tocsc())
        self.M_psi = spla.splu((-lap + bc_D).tocsc())
        if cfg.delta > 0:
            self.mollifier = MollifierSpec(cfg.delta)
        else:
            self.mollifier = None

    def mollify2d(self, w):
        if self.mollifier is None:
            return w
        from scipy import ndimage
        g = self.grid
        k_x = self.mollifier.axis_kernel(g.h_x)
        k_q = self.mollifier.axis_kernel(float(np.mean(g.H)) * g.h_sigma)
        v = w
        for kernel, axis in ((k_x, 0), (k_q, 1)):
            if len(kernel) == 1:
                continue
            padded, n_pad = _pad_axis(v, len(kernel), axis, "odd_value")
            conv = ndimage.convolve1d(padded, kernel, axis=axis, mode="constant")
            sl = [slice(None)] * 2
            sl[axis] = slice(n_pad, padded.shape[axis] - n_pad)
            v = conv[tuple(sl)]
        return v


@dataclass
class DnsState:
    t: float
    step: int
    T: np.ndarray
    omega: np.ndarray
    Psi: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    ws: DnsWorkspace = field(repr=False)
    spec: ReactionSpec = field(repr=False)
    history: list = field(default_factory=list)       # (t, x_f, maxT, u_inf, minT)
    snapshots: list = field(default_factory=list)     # (t, T.copy())
    prev_explicit_T: np.ndarray | None = None
    prev_source_w: np.ndarray | None = None

    @property
    def grid(self):
        return self.ws.grid


def dns_init(cell: PeriodCell, cfg: DnsConfig, spec: ReactionSpec,
             dt: float | None = None) -> DnsState:
    """Smoothed-step temperature, quiescent flow."""
    grid = build_dns_grid(cell, cfg)
    if dt is None:
        dt = cfg.cfl * min(grid.h_x, float(np.min(grid.H)) * grid.h_sigma) \
            / cfg.eps_floor
    ws = DnsWorkspace(grid, cfg, dt)
    step_prof = 0.5 * (1.0 - np.tanh((grid.x - cfg.front_x0) / cfg.init_width))
    prof = cfg.t_right + (cfg.t_left - cfg.t_right) * step_prof
    T = np.broadcast_to(prof[:, None], grid.shape).copy()
    T[0, :], T[-1, :] = cfg.t_left, cfg.t_right
    zeros = np.zeros(grid.shape)
    return DnsState(t=0.0, step=0, T=T, omega=zeros.copy(), Psi=zeros.copy(),
                    u1=zeros.copy(), u2=zeros.copy(), ws=ws, spec=spec)


def _buoyancy_source(state: DnsState):
    g = state.grid
    tx, tz = _grad(g, state.T)
    e1, e2 = g.e_hat
    return state.ws.cfg.sigma_b * (-e1 * tz + e2 * tx)


def dns_step(state: DnsState, dt: float) -> DnsState:
    """One IMEX step; mutates and returns the state."""
    ws, g, cfg = state.ws, state.grid, state.ws.cfg
    if abs(dt - ws.dt) > 1e-15:
        raise CFLError("time step differs from the prefactorized one")
    u_inf = max(float(np.max(np.abs(state.u1))), float(np.max(np.abs(state.u2))))
    h_min = min(g.h_x, float(np.min(g.H)) * g.h_sigma)
    if dt > cfg.cfl * h_min / max(u_inf, cfg.eps_floor):
        raise CFLError(f"dt={dt:.3e} violates the advective CFL at |u|={u_inf:.3f}")

    n_x, n_z = g.shape
    second = cfg.scheme == "imex2" and state.prev_source_w is not None

    # vorticity row
    src = _buoyancy_source(state)
    rhs_w = state.omega + dt * (1.5 * src - 0.5 * state.prev_source_w) if second \
        else state.omega + dt * src
    if ws.theta != 1.0:
        rhs_w = rhs_w + ws.theta * dt * (ws.lap @ state.omega.ravel()).reshape(g.shape)
    rhs_w[~ws.interior] = 0.0
    omega = ws.M_w.solve(rhs_w.ravel()).reshape(g.shape)

    # stream function and velocity
    w_t = ws.mollify2d(omega)
    rhs_psi = -w_t.copy()
    rhs_psi[~ws.interior] = 0.0
    Psi = ws.M_psi.solve(rhs_psi.ravel()).reshape(g.shape)
    from .fields_ops import d1
    psi_q = d1(Psi, g.h_sigma, axis=1)
    u1 = psi_q / g.H[:, None]
    u2 = -(d1(Psi, g.h_x, axis=0) + g.J * psi_q)

    # temperature row
    tx, tz = _grad(g, state.T)
    adv = u1 * tx + u2 * tz
    f = evaluate(state.spec, g.x[:, None], None, state.T)
    expl = -adv + f
    rhs_T = state.T + dt * (1.5 * expl - 0.5 * state.prev_explicit_T) if second \
        else state.T + dt * expl
    if ws.theta != 1.0:
        rhs_T = rhs_T + ws.theta * dt * (ws.lap @ state.T.ravel()).reshape(g.shape)
    rhs_T[:, 0] = 0.0
    rhs_T[:, -1] = 0.0
    rhs_T[0, :] = cfg.t_left
    rhs_T[-1, :] = cfg.t_right
    T = ws.M_T.solve(rhs_T.ravel()).reshape(g.shape)
    if not np.all(np.isfinite(T)):
        raise PulsefrontError("NaN in the temperature update")

    state.T, state.omega, state.Psi, state.u1, state.u2 = T, omega, Psi, u1, u2
    state.prev_explicit_T = expl
    state.prev_source_w = src
    state.t += dt
    state.step += 1
    return state


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------

def front_position(state: DnsState, level: float | None = None):
    """Rightmost x where the cross-section mean of T crosses the level.

    level defaults to (1 + theta0)/2.  Returns NaN when no crossing exists
    (front gone or not present), which the driver treats as a stop signal.
    """
    g = state.grid
    if level is None:
        level = 0.5 * (1.0 + state.spec.theta0)
    m = g.column_mean(state.T)
    above = m >= level
    if not np.any(above):
        return float("nan")
    i = int(np.nonzero(above)[0][-1])
    if i == g.x.size - 1:
        return float("nan")
    frac = (m[i] - level) / (m[i] - m[i + 1])
    return float(g.x[i] + frac * (g.x[i + 1] - g.x[i]))


def measure_speed(history, window=None):
    """Least-squares front speed from the (t, x_f) history.

    window = (t_min, t_max) trims the transient.  Returns (speed, r2,
    warn_flag); requires at least 20 usable samples.
    """
    data = np.array([(t, xf) for t, xf, *_ in history if np.isfinite(xf)])
    if window is not None:
        lo = window[0] if window[0] is not None else -np.inf
        hi = window[1] if window[1] is not None else np.inf
        data = data[(data[:, 0] >= lo) & (data[:, 0] <= hi)]
    if len(data) < 20:
        raise PulsefrontError(f"speed fit under-sampled ({len(data)} points)")
    t, xf = data[:, 0], data[:, 1]
    slope, intercept = np.polyfit(t, xf, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((xf - fitted) ** 2))
    ss_tot = float(np.sum((xf - np.mean(xf)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    warn = not (r2 >= 0.95)
    return float(slope), r2, warn


def pulsating_check(snapshots, c: float, ell: float, grid: DnsGrid,
                    margin_periods: float = 2.0):
    """Relative L2 mismatch of  T(t + ell/c, x) vs T(t, x - ell).

    Snapshot pairs are matched by linear interpolation in time; the
    comparison window excludes margin_periods next to each end.  Returns
    the mean mismatch over all usable pairs.
    """
    if c <= 0:
        raise PulsefrontError("pulsating check needs c > 0")
    times = np.array([t for t, _ in snapshots])
    lag = ell / c
    n_shift = int(round(ell / grid.h_x))
    m = int(round(margin_periods * ell / grid.h_x))
    w = np.full(grid.sigma.size, grid.h_sigma)
    w[0] = w[-1] = 0.5 * grid.h_sigma
    mism = []
    for t0, T0 in snapshots:
        t1 = t0 + lag
        if t1 > times[-1] + 1e-12:
            break
        j = int(np.searchsorted(times, t1))
        j = min(max(j, 1), len(times) - 1)
        ta, Ta = snapshots[j - 1]
        tb, Tb = snapshots[j]
        frac = 0.0 if tb == ta else (t1 - ta) / (tb - ta)
        T1 = (1 - frac) * Ta + frac * Tb
        # T(t+lag, x) vs T(t0, x - ell) on the interior window
        sl = slice(m + n_shift, grid.x.size - m)
        diff = T1[sl] - T0[sl.start - n_shift:sl.stop - n_shift]
        num = np.sqrt(np.sum(diff ** 2 @ w))
        den = np.sqrt(np.sum(T0[sl] ** 2 @ w))
        if den > 0:
            mism.append(num / den)
    if not mism:
        raise PulsefrontError("insufficient snapshot coverage for the pulsating check")
    return float(np.mean(mism))


def run_dns(cell: PeriodCell, cfg: DnsConfig, spec: ReactionSpec,
            dt: float | None = None):
    """March until t_max or until the front nears the right end.

    Returns the final state; history and snapshots accumulate in place.
    """
    state = dns_init(cell, cfg, spec, dt=dt)
    dt = state.ws.dt
    stop_x = state.grid.length - cfg.stop_margin_periods * cell.ell
    while state.t < cfg.t_max and state.step < cfg.max_steps:
        try:
            dns_step(state, dt)
        except CFLError:
            # halve the step deterministically and refactor
            dt = 0.5 * dt
            state.ws = DnsWorkspace(state.grid, cfg, dt)
            continue
        if state.step % cfg.history_every == 0:
            xf = front_position(state)
            u_inf = max(float(np.max(np.abs(state.u1))),
                        float(np.max(np.abs(state.u2))))
            state.history.append((state.t, xf, float(np.max(state.T)),
                                  u_inf, float(np.min(state.T))))
            if np.isfinite(xf) and xf >= stop_x:
                break
        if state.step % cfg.snapshot_every == 0:
            state.snapshots.append((state.t, state.T.copy()))
    return state
