"""Moving-frame fixed-point solver with homotopy and continuation.

One sweep of the constructive map at homotopy level tau:

  (i)   solve  -c w_s - L_eps w = tau * sigma_b * e . perp_grad Z   for the
        vorticity w on the extended slab (Z = current temperature, extended
        by reflection), w = 0 on walls and slab ends, periodic in x;
  (ii)  mollify w with the compact bump kernel (width delta);
  (iii) solve  L_eps Psi = w_tilde  with the same homogeneous conditions;
  (iv)  u = (Psi_z, -(Psi_s + Psi_x));
  (v)   solve  -c T_s + u . tilde_grad T = L_eps T + tau f(Z)  with
        T(-a) = 1, T(a) = 0 and the conormal wall condition;
  (vi)  c <- c + rho (theta0 - max_{s>=0} Z).

A fixed point satisfies the translation normalization
max_{s>=0} T = theta0 by construction of the speed update.  The homotopy
walks tau from the explicitly solvable zero-forcing problem to the full
system; continuation then marches the regularization knobs (eps down,
delta down, slab length up) with warm starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (ConvergenceError, DivergenceError, PulsefrontError,
                     SolveError)
from .fields_ops import (GridField, MollifierSpec, TAG_STREAM, TAG_TEMPERATURE,
                         TAG_VORTICITY, TAG_VELOCITY, d_s, d_x_stationary, d_z,
                         extend_by_reflection, mollify, tilde_perp_dot_e)
from .geometry import GeometryConfig, PeriodCell, build_period_cell
from .linsolve import (BCSet, FourierXPreconditioner, OperatorSpec,
                       assemble, solve)
from .reaction import ReactionSpec, derivative, evaluate
from .eigen import c_star


@dataclass
class SolverConfig:
    """Fixed-point, homotopy, and continuation knobs."""

    eps: float = 0.25
    delta_factor: float = 3.0        # mollifier width in grid spacings (0 = off)
    homotopy_steps: int = 6
    rho: float = 0.5                 # damping of the speed update
    anderson_depth: int = 4          # iterate history mixed into each step
    mixing: float = 0.7              # damped-step / Anderson mixing weight
    tol: float = 1e-9                # final stage: |dT|_inf + |dc| threshold
    tol_intermediate: float = 1e-7
    max_sweeps: int = 250
    lin_tol: float = 1e-11
    sigma_b: float = 1.0             # buoyancy amplitude multiplier
    upwind: float | None = None
    normalization_tol: float = 1e-8
    eps_schedule: tuple = (0.25, 0.125, 0.0625)
    delta_factor_schedule: tuple = (3.0, 2.5, 2.0)
    a_doublings: int = 1
    direct_threshold: int = 30_000
    precond_refresh: float = 0.05    # rebuild ILU when c drifts by this much

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise PulsefrontError("speed-update damping must lie in (0, 1]")
        if self.tol <= 0 or self.tol_intermediate <= 0:
            raise PulsefrontError("tolerances must be positive")
        for sched in (self.eps_schedule, self.delta_factor_schedule):
            if any(b >= a for a, b in zip(sched, sched[1:])):
                raise PulsefrontError("continuation schedules must decrease strictly")


@dataclass
class FrontSolution:
    """Converged (or in-progress) moving-frame state."""

    c: float
    T: GridField                      # core slab
    omega: GridField                  # extended slab
    Psi: GridField                    # extended slab
    u1: GridField                     # extended slab
    u2: GridField                     # extended slab
    tau: float
    eps: float
    delta: float
    a: float
    theta_minus: float | None = None
    theta_plus: float | None = None
    residual_history: list = field(default_factory=list)
    converged: bool = False

    @property
    def cell(self):
        return self.T.cell

    @property
    def cell_ext(self):
        return self.omega.cell

    def u_core(self):
        """Velocity restricted to the core slab."""
        m = (self.cell_ext.n_s - self.cell.n_s) // 2
        sl = slice(m, self.cell_ext.n_s - m)
        return (GridField(self.u1.values[sl], TAG_VELOCITY, self.cell),
                GridField(self.u2.values[sl], TAG_VELOCITY, self.cell))

    def max_right_of_zero(self):
        """max of T over grid nodes with s >= 0 (normalization functional)."""
        mask = self.cell.s >= -1e-12
        return float(np.max(self.T.values[mask]))


class _FactorPreconditioner:
    """Exact sparse LU of a nearby operator, used as a Krylov preconditioner."""

    def __init__(self, system):
        import scipy.sparse.linalg as spla
        self.lu = spla.splu(system.A.tocsc())
        self.n = system.n

    @property
    def operator(self):
        import scipy.sparse.linalg as spla
        return spla.LinearOperator((self.n, self.n), self.lu.solve)


class _CachedOperator:
    """Assemble/solve with a factorization reused across nearby sweeps.

    Small systems carry an exact LU of a recent operator, large ones an ILU;
    either is refreshed once the speed coefficient drifts or a retry is
    forced by a failed solve.  The Krylov iteration always runs against the
    freshly assembled operator, so results are exact at the requested
    tolerance regardless of preconditioner staleness.
    """

    def __init__(self, bc, cell, eps, upwind, direct_threshold, lin_tol):
        self.bc, self.cell, self.eps = bc, cell, eps
        self.upwind = upwind
        self.direct_threshold = direct_threshold
        self.lin_tol = lin_tol
        self.pre = None
        self.pre_c = None
        self.solves_since_refresh = 0

    def _build_pre(self, system, c):
        if system.n <= self.direct_threshold:
            self.pre = _FactorPreconditioner(system)
        else:
            kind = "temperature" if self.bc.walls[0] == "conormal" else "dirichlet"
            self.pre = FourierXPreconditioner(system, kind)
        self.pre_c = c
        self.solves_since_refresh = 0

    def solve(self, source, c=0.0, u=None, x0_full=None, refresh=0.05,
              reaction=None):
        spec = OperatorSpec(eps=self.eps, c=c, u=u, upwind=self.upwind,
                            reaction=reaction)
        system = assemble(spec, self.bc, self.cell)
        rhs = system.rhs_from_source(source)
        stale = (self.pre is None
                 or abs(c - self.pre_c) > refresh * (1.0 + abs(c))
                 or self.solves_since_refresh >= 60)
        if stale:
            self._build_pre(system, c)
        x0 = system.restrict(x0_full) if x0_full is not None else None
        try:
            x, info = solve(system, rhs, tol=self.lin_tol, method="lgmres",
                            precond=self.pre, x0=x0)
        except SolveError:
            self._build_pre(system, c)
            x, info = solve(system, rhs, tol=self.lin_tol, method="lgmres",
                            precond=self.pre, x0=x0)
        self.solves_since_refresh += 1
        return system.scatter(x), info


class MovingFrameWorkspace:
    """Grids, boundary sets, and operator caches for one (cell, eps, delta)."""

    def __init__(self, cell: PeriodCell, cfg: SolverConfig):
        self.cell = cell
        self.cfg = cfg
        self.margin = math.ceil(2.0 * cell.ell / cell.h_s)
        self.cell_ext = cell.extended(self.margin)
        self.delta = cfg.delta_factor * cell.h_s
        self.mollifier = MollifierSpec(self.delta) if cfg.delta_factor > 0 else None
        kw = dict(upwind=cfg.upwind, direct_threshold=cfg.direct_threshold,
                  lin_tol=cfg.lin_tol)
        self.op_T = _CachedOperator(BCSet.temperature(), cell, cfg.eps, **kw)
        self.op_omega = _CachedOperator(BCSet.dirichlet_zero(), self.cell_ext,
                                        cfg.eps, **kw)
        self.op_psi = _CachedOperator(BCSet.dirichlet_zero(), self.cell_ext,
                                      cfg.eps, **kw)

    def zero_state(self, c, T: GridField, tau):
        zeros = np.zeros(self.cell_ext.shape)
        return FrontSolution(
            c=c, T=T,
            omega=GridField(zeros.copy(), TAG_VORTICITY, self.cell_ext),
            Psi=GridField(zeros.copy(), TAG_STREAM, self.cell_ext),
            u1=GridField(zeros.copy(), TAG_VELOCITY, self.cell_ext),
            u2=GridField(zeros.copy(), TAG_VELOCITY, self.cell_ext),
            tau=tau, eps=self.cfg.eps, delta=self.delta, a=self.cell.a)


def solve_T0c(c: float, cell: PeriodCell, eps: float,
              ws: MovingFrameWorkspace | None = None) -> GridField:
    """Temperature of the zero-forcing problem -c T_s = L_eps T on the slab."""
    if ws is None:
        cfg = SolverConfig(eps=eps)
        ws = MovingFrameWorkspace(cell, cfg)
    vals, _ = ws.op_T.solve(source=0.0, c=c)
    return GridField(vals, TAG_TEMPERATURE, cell, eps=eps)


def apply_S_tau(state: FrontSolution, spec: ReactionSpec, cfg: SolverConfig,
                ws: MovingFrameWorkspace) -> FrontSolution:
    """One full sweep of the constructive map at the state's homotopy level."""
    cell, cell_ext = ws.cell, ws.cell_ext
    Z = state.T
    tau, c = state.tau, state.c

    # (i) vorticity from the buoyancy torque of the extended temperature
    if tau * cfg.sigma_b != 0.0:
        Z_ext = extend_by_reflection(Z, ws.margin)
        src = tau * cfg.sigma_b * tilde_perp_dot_e(Z_ext, cell.e_hat).values
        omega_vals, _ = ws.op_omega.solve(src, c=c, x0_full=state.omega.values,
                                          refresh=cfg.precond_refresh)
    else:
        omega_vals = np.zeros(cell_ext.shape)
    omega = GridField(omega_vals, TAG_VORTICITY, cell_ext, eps=cfg.eps)

    # (ii) + (iii) mollified vorticity drives the stream function: L_eps Psi = w~
    if np.any(omega_vals):
        om_t = mollify(omega, ws.mollifier) if ws.mollifier else omega
        psi_vals, _ = ws.op_psi.solve(-om_t.values, x0_full=state.Psi.values)
    else:
        psi_vals = np.zeros(cell_ext.shape)
    Psi = GridField(psi_vals, TAG_STREAM, cell_ext, eps=cfg.eps)

    # (iv) velocity reconstruction (divergence-free under the moving gradient)
    u1_vals = d_z(Psi)
    u2_vals = -(d_s(Psi) + d_x_stationary(Psi))
    u1 = GridField(u1_vals, TAG_VELOCITY, cell_ext)
    u2 = GridField(u2_vals, TAG_VELOCITY, cell_ext)
    m = ws.margin
    sl = slice(m, cell_ext.n_s - m)
    u_core = (u1_vals[sl], u2_vals[sl])

    # (v) temperature with the frozen reaction source f(Z), damped by the
    # non-positive part of the linearization (same fixed points: at T = Z
    # the extra q T and q Z terms cancel, but the decaying branch of f no
    # longer drives transient overshoots past 1)
    x_grid = cell.x[None, :, None]
    z_grid = cell.sigma_map.z[None, :, :]
    f_Z = tau * evaluate(spec, x_grid, z_grid, Z.values)
    q = -np.minimum(tau * derivative(spec, x_grid, z_grid, Z.values), 0.0)
    T_vals, _ = ws.op_T.solve(f_Z + q * Z.values, c=c, u=u_core,
                              reaction=q, x0_full=Z.values,
                              refresh=cfg.precond_refresh)
    if np.min(T_vals) < -0.1 or np.max(T_vals) > 1.1:
        raise DivergenceError(
            f"temperature left [-0.1, 1.1]: range [{T_vals.min():.3f}, {T_vals.max():.3f}]")
    T_new = GridField(T_vals, TAG_TEMPERATURE, cell, eps=cfg.eps)

    # (vi) damped speed update pinning max_{s>=0} T at the ignition threshold.
    # Orientation matters for iteration: max_{s>=0} T decreases in c, so the
    # update must raise c when the profile runs hot (max Z > theta0) for the
    # Picard map to contract; the opposite orientation shares the same fixed
    # points but repels them.
    c_new = c + cfg.rho * (state.max_right_of_zero() - spec.theta0)

    return FrontSolution(c=c_new, T=T_new, omega=omega, Psi=Psi, u1=u1, u2=u2,
                         tau=tau, eps=cfg.eps, delta=state.delta, a=cell.a,
                         residual_history=state.residual_history)


def _pack(state):
    return np.concatenate([state.T.values.ravel(), [state.c]])


def _unpack(vec, donor, ws, tau):
    T = GridField(vec[:-1].reshape(ws.cell.shape), TAG_TEMPERATURE, ws.cell,
                  eps=ws.cfg.eps)
    new = ws.zero_state(float(vec[-1]), T, tau)
    new.omega, new.Psi, new.u1, new.u2 = donor.omega, donor.Psi, donor.u1, donor.u2
    new.residual_history = donor.residual_history
    return new


def _picard(state, spec, cfg, ws, tol, enforce_normalization):
    """Anderson-accelerated damped Picard on the (T, c) iterate.

    Each step evaluates exactly one sweep of the constructive map; Anderson
    mixing of the last few iterates removes the marginal oscillatory modes
    of the coupled temperature/speed recursion.  A safeguarded fallback to
    the plain damped step fires whenever the accelerated candidate
    misbehaves (residual blow-up or temperature out of range).
    """
    X, G = [], []
    res = float("inf")
    for sweep in range(cfg.max_sweeps):
        g_state = apply_S_tau(state, spec, cfg, ws)
        x, gx = _pack(state), _pack(g_state)
        f = gx - x
        d_T = float(np.max(np.abs(f[:-1])))
        d_c = abs(float(f[-1]))
        g_state.residual_history.append((state.tau, d_T, d_c))
        res = d_T + d_c
        if res <= tol:
            if not enforce_normalization:
                return g_state
            if abs(spec.theta0 - g_state.max_right_of_zero()) \
                    <= cfg.normalization_tol:
                return g_state
        X.append(x)
        G.append(gx)
        if len(X) > cfg.anderson_depth + 1:
            X.pop(0)
            G.pop(0)
        x_new = None
        if len(X) >= 2:
            F = np.stack([G[i] - X[i] for i in range(len(X))])
            dF = np.diff(F, axis=0)
            dG = np.diff(np.stack(G), axis=0)
            dX = np.diff(np.stack(X), axis=0)
            gamma, *_ = np.linalg.lstsq(dF.T, F[-1], rcond=None)
            cand = (cfg.mixing * (G[-1] - gamma @ dG)
                    + (1.0 - cfg.mixing) * (X[-1] - gamma @ dX))
            cand_T = cand[:-1]
            if np.all(np.isfinite(cand)) and cand_T.min() > -0.1 \
                    and cand_T.max() < 1.1:
                x_new = cand
        if x_new is None:
            x_new = x + cfg.mixing * f
            X, G = X[-1:], G[-1:]
        state = _unpack(x_new, g_state, ws, state.tau)
    raise ConvergenceError(
        f"fixed point not reached in {cfg.max_sweeps} sweeps at tau={state.tau} "
        f"(last residual {res:.3e})", history=state.residual_history)


def fixed_point_solve(cfg: SolverConfig, spec: ReactionSpec, cell: PeriodCell,
                      initial: FrontSolution | None = None) -> FrontSolution:
    """Homotopy from the zero-forcing fixed point to the full system.

    If a homotopy stage diverges (transient temperature excursion), the tau
    interval is bisected and the stage retried from the last converged
    state, up to a fixed budget of extra stages.
    """
    ws = MovingFrameWorkspace(cell, cfg)
    if initial is None:
        c0 = c_star(spec.theta0, cell.a, cfg.eps)
        state = ws.zero_state(c0, solve_T0c(c0, cell, cfg.eps, ws), tau=0.0)
        taus = list(np.linspace(0.0, 1.0, cfg.homotopy_steps + 1)[1:])
    else:
        state = replace(initial, residual_history=list(initial.residual_history))
        state.eps = cfg.eps
        state.delta = ws.delta
        taus = [1.0]

    tau_prev = float(state.tau)
    checkpoint = state
    splits_left = 6
    i = 0
    while i < len(taus):
        tau = float(taus[i])
        state.tau = tau
        last = i == len(taus) - 1
        tol = cfg.tol if last else cfg.tol_intermediate
        try:
            state = _picard(state, spec, cfg, ws, tol, enforce_normalization=last)
        except (DivergenceError, ConvergenceError):
            if splits_left == 0 or tau - tau_prev < 1e-3:
                raise
            splits_left -= 1
            taus.insert(i, 0.5 * (tau_prev + tau))
            state = checkpoint
            continue
        checkpoint = state
        tau_prev = tau
        i += 1

    from .diagnostics import theta_limits
    state.theta_minus, state.theta_plus = theta_limits(state)
    state.converged = True
    return state


# ---------------------------------------------------------------------------
# Continuation
# ---------------------------------------------------------------------------

@dataclass
class ContinuationResult:
    stages: list                      # dicts: kind, a, eps, delta, c, ...
    c_extrapolated: float | None
    eps_order: float | None
    solutions: list                   # FrontSolution per completed stage
    failed_stage: dict | None = None

    def table(self, kind):
        return [(st["eps"], st["delta"], st["a"], st["c"])
                for st in self.stages if st["kind"] == kind]

    def c2_over_eps(self):
        return [(st["eps"], st["c"] ** 2 / st["eps"])
                for st in self.stages if st["kind"] in ("base", "eps")]


def _embed_in_longer_slab(state: FrontSolution, cell_big: PeriodCell,
                          ws_big: MovingFrameWorkspace) -> FrontSolution:
    """Warm start on a doubled slab: pad the plateaus, keep the front."""
    cell = state.cell
    pad = (cell_big.n_s - cell.n_s) // 2
    T_big = np.empty(cell_big.shape)
    T_big[pad:pad + cell.n_s] = state.T.values
    T_big[:pad] = 1.0
    T_big[pad + cell.n_s:] = 0.0
    T = GridField(T_big, TAG_TEMPERATURE, cell_big, eps=state.eps)
    return ws_big.zero_state(state.c, T, tau=1.0)


def continuation_run(cfg: SolverConfig, spec: ReactionSpec,
                     cell: PeriodCell) -> ContinuationResult:
    """March eps down, then delta down, then double the slab, warm-starting.

    Reports the c tables, the Richardson-extrapolated eps -> 0 speed, and
    leaves partial results in place if a stage fails.
    """
    stages, solutions = [], []
    state = None
    failed = None

    def record(kind, sol):
        stages.append({"kind": kind, "a": sol.a, "eps": sol.eps,
                       "delta": sol.delta, "c": sol.c,
                       "theta_minus": sol.theta_minus, "theta_plus": sol.theta_plus})
        solutions.append(sol)

    try:
        for i, eps in enumerate(cfg.eps_schedule):
            stage_cfg = replace(cfg, eps=eps)
            state = fixed_point_solve(stage_cfg, spec, cell, initial=state)
            record("base" if i == 0 else "eps", state)
        eps_final = cfg.eps_schedule[-1]
        for df in cfg.delta_factor_schedule[1:]:
            stage_cfg = replace(cfg, eps=eps_final, delta_factor=df)
            state = fixed_point_solve(stage_cfg, spec, cell, initial=state)
            record("delta", state)
        big = cell
        for _ in range(cfg.a_doublings):
            big = build_period_cell(GeometryConfig(
                ell=big.ell, a=2 * big.a, n_s=2 * big.n_s - 1, n_x=big.n_x,
                n_z=big.n_z, wall_bottom=big.wall_bottom, wall_top=big.wall_top,
                gravity_angle=big.gravity_angle, half_width=big.half_width))
            stage_cfg = replace(cfg, eps=eps_final,
                                delta_factor=cfg.delta_factor_schedule[-1])
            ws_big = MovingFrameWorkspace(big, stage_cfg)
            warm = _embed_in_longer_slab(state, big, ws_big)
            state = fixed_point_solve(stage_cfg, spec, big, initial=warm)
            record("a", state)
    except PulsefrontError as exc:
        failed = {"error": str(exc), "after_stage": len(stages)}

    eps_c = [(st["eps"], st["c"]) for st in stages if st["kind"] in ("base", "eps")]
    c_extrap, order = _richardson_eps(eps_c)
    return ContinuationResult(stages=stages, c_extrapolated=c_extrap,
                              eps_order=order, solutions=solutions,
                              failed_stage=failed)


def _richardson_eps(eps_c):
    """Extrapolate c(eps -> 0) from a geometric eps schedule."""
    if len(eps_c) < 2:
        return (eps_c[0][1] if eps_c else None), None
    cs = [c for _, c in eps_c]
    if len(cs) >= 3:
        d1, d2 = cs[-2] - cs[-3], cs[-1] - cs[-2]
        if d1 * d2 > 0 and abs(d2) < abs(d1):
            p = math.log2(abs(d1 / d2))
            return cs[-1] + d2 / (2.0 ** p - 1.0), p
    # linear fallback in eps
    return 2.0 * cs[-1] - cs[-2], 1.0


# ---------------------------------------------------------------------------
# Change of variables back to the stationary frame
# ---------------------------------------------------------------------------

@dataclass
class StationaryFields:
    """Temperature and velocity sampled on the stationary frame at one time."""

    t: float
    x: np.ndarray          # (n_out,)
    z: np.ndarray          # (n_out, n_z) physical z per column
    T: np.ndarray          # (n_out, n_z)
    u1: np.ndarray
    u2: np.ndarray


def to_stationary_frame(sol: FrontSolution, t: float) -> StationaryFields:
    """Sample T(t, x, z) = T_m(x - c t, x, z) on the x-lattice (cubic in s)."""
    if sol.c <= 0.0:
        raise PulsefrontError(f"stationary-frame sampling needs c > 0 (c={sol.c})")
    cell = sol.cell
    h = cell.h_x
    shift = sol.c * t
    j_lo = math.ceil((-cell.a + shift) / h - 1e-12)
    j_hi = math.floor((cell.a + shift) / h + 1e-12)
    j = np.arange(j_lo, j_hi + 1)
    x_out = j * h
    s_eval = x_out - shift
    col = j % cell.n_x

    u1c, u2c = sol.u_core()
    out = {}
    for name, fld in (("T", sol.T), ("u1", u1c), ("u2", u2c)):
        spline = CubicSpline(cell.s, fld.values, axis=0)
        sampled = spline(s_eval)              # (n_out, n_x, n_z)
        out[name] = sampled[np.arange(j.size), col, :]
    z = cell.sigma_map.z[col, :]
    return StationaryFields(t=t, x=x_out, z=z, T=out["T"], u1=out["u1"],
                            u2=out["u2"])
