"""Numerical verification of every checkable identity and bound.

Each converged moving-frame solution is screened against the integral
identities the analysis guarantees, evaluated with the same quadrature the
solver uses.  The infinite-cylinder identities acquire boundary-flux
corrections on the finite slab; those corrections are measured from the
solution (derivative fluxes at the slab ends, wall line integrals), never
assumed, so each residual is a pure discretization error that must shrink
under refinement.

Unquantified constants from the analysis (the vorticity bound constant,
the burning-rate constant) are reported as measured ratios with stability
verdicts rather than asserted against invented numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .eigen import EigenProblem, grad_psi_over_psi_sup, principal_eigenpair
from .fields_ops import (cell_mean_height, d_s, d_x_stationary, d_z,
                         divergence_tilde, norm)
from .reaction import ReactionSpec, evaluate, lipschitz_slope

REPORT_SCHEMA_VERSION = 1


@dataclass
class Thresholds:
    """Pass/fail gates; values fixed by the verification plan."""

    reaction_rate: float = 1e-2
    energy: float = 2e-2
    profile_residual: float = 2e-2
    theta_plus: float = 1e-3
    decay_rate_factor: float = 1.0 / 16.0   # slope must be <= -c * factor
    decay_r2: float = 0.99
    normalization: float = 1e-8
    speed_bound_margin: float = 1.0          # c < margin * (1 + eps + M + ...)
    divergence_prefactor: float = 2.0        # |div u| <= pref * h^2 * |Psi|_X02
    burning_stability: float = 0.2           # +-20% across continuation stages
    smallness_theta_gap: float = 1e-2


# ---------------------------------------------------------------------------
# quadrature helpers on one solution
# ---------------------------------------------------------------------------

def _cs_integral(cell, values):
    """Integral over the cross-section at every s, shape (n_s,)."""
    return np.sum(values * cell.cross_section_weights()[None], axis=(1, 2))


def _wall_line_integral(cell, values):
    """int_B eta_1 (.) dl at every s: -int t' v_top dx + int b' v_bot dx."""
    tp = cell.wall_top.sample_nodes(cell.n_x, cell.ell, order=1)
    bp = cell.wall_bottom.sample_nodes(cell.n_x, cell.ell, order=1)
    top = -np.sum(tp[None, :] * values[:, :, -1], axis=1) * cell.h_x
    bot = np.sum(bp[None, :] * values[:, :, 0], axis=1) * cell.h_x
    return top + bot


def _volume_integral(cell, values):
    return float(np.sum(cell.volume_weights() * values))


def theta_limits(sol):
    """Plateau estimates: quadrature means over the outermost one-period slabs."""
    cell = sol.cell
    w = cell.volume_weights()
    left = cell.s <= -cell.a + cell.ell + 1e-12
    right = cell.s >= cell.a - cell.ell - 1e-12
    t_minus = float(np.sum((w * sol.T.values)[left]) / np.sum(w[left]))
    t_plus = float(np.sum((w * sol.T.values)[right]) / np.sum(w[right]))
    return t_minus, t_plus


def _reaction_source(sol, spec: ReactionSpec):
    cell = sol.cell
    x = cell.x[None, :, None]
    z = cell.sigma_map.z[None, :, :]
    return sol.tau * evaluate(spec, x, z, sol.T.values)


def _advection_integrand(sol, weight=None):
    """u . tilde_grad T, optionally weighted pointwise."""
    u1, u2 = sol.u_core()
    T = sol.T
    adv = u1.values * (d_x_stationary(T) + d_s(T)) + u2.values * d_z(T)
    return adv if weight is None else adv * weight


# ---------------------------------------------------------------------------
# identity residuals
# ---------------------------------------------------------------------------

def reaction_rate_residual(sol, spec: ReactionSpec) -> float:
    """Mismatch of  c |Omega_p| theta_minus = int f(T),  tail-corrected.

    The slab identity carries measured corrections: the end boundary-layer
    flux (1+eps) int T_s + the wall line integral, and the advection
    integral (zero in the limit, measured here).
    """
    cell = sol.cell
    area = float(np.sum(cell.cross_section_weights()))
    theta_minus, _ = theta_limits(sol)
    lhs = sol.c * area * theta_minus
    f_int = _volume_integral(cell, _reaction_source(sol, spec))
    if max(abs(lhs), abs(f_int)) < 1e-14:
        return 0.0
    if theta_minus <= 0.0:
        return float("inf")

    T_s = d_s(sol.T)
    flux = ((1.0 + sol.eps) * _cs_integral(cell, T_s)
            + _wall_line_integral(cell, sol.T.values))
    u_flux = _volume_integral(cell, _advection_integrand(sol))
    correction = (sol.c * area * (theta_minus - 1.0) - u_flux
                  + (flux[-1] - flux[0]))
    scale = max(abs(lhs), abs(f_int), 1e-300)
    if max(abs(lhs), abs(f_int)) < 1e-14:
        return 0.0
    return abs(lhs - f_int - correction) / scale


def energy_identity_residual(sol, spec: ReactionSpec) -> float:
    """Mismatch of  c |Omega_p| theta_-^2 / 2 + eps |T_s|^2 + |grad T|^2 = int T f."""
    cell = sol.cell
    area = float(np.sum(cell.cross_section_weights()))
    theta_minus, _ = theta_limits(sol)
    T = sol.T
    T_s = d_s(T)
    grad1 = d_x_stationary(T) + T_s
    grad2 = d_z(T)
    grad_sq = _volume_integral(cell, grad1 ** 2 + grad2 ** 2)
    ts_sq = _volume_integral(cell, T_s ** 2)
    tf = _volume_integral(cell, T.values * _reaction_source(sol, spec))
    lhs = sol.c * area * theta_minus ** 2 / 2.0 + sol.eps * ts_sq + grad_sq

    # measured slab corrections
    flux = (_wall_line_integral(cell, T.values ** 2 / 2.0)
            + (1.0 + sol.eps) * _cs_integral(cell, T.values * T_s))
    u_flux = _volume_integral(cell, _advection_integrand(sol, weight=T.values))
    correction = (sol.c * area * (theta_minus ** 2 - 1.0) / 2.0 - u_flux
                  + (flux[-1] - flux[0]))
    scale = max(abs(lhs), abs(tf), 1e-300)
    if max(abs(lhs), abs(tf)) < 1e-14:
        return 0.0
    return abs(lhs - tf - correction) / scale


def cross_section_profile(sol, spec: ReactionSpec):
    """I(s), its curvature, and the source-side reconstruction G(s).

    Returns (s, I, residual, I_s_left, I_s_right): the relative L2 mismatch
    of -I_ss = G over interior nodes and the end slopes (both must be <= 0).
    """
    cell = sol.cell
    area = float(np.sum(cell.cross_section_weights()))
    T = sol.T.values
    I = _cs_integral(cell, T) / area

    adv = _advection_integrand(sol)
    T_s_arr = d_s(sol.T)
    G = (_cs_integral(cell, _reaction_source(sol, spec) - adv + sol.c * T_s_arr)
         + _wall_line_integral(cell, T_s_arr)) / ((1.0 + sol.eps) * area)

    hs = cell.h_s
    I_ss = (I[2:] - 2 * I[1:-1] + I[:-2]) / hs ** 2
    resid = I_ss + G[1:-1]
    denom = float(np.sqrt(np.sum(G[1:-1] ** 2) * hs))
    rel = float(np.sqrt(np.sum(resid ** 2) * hs)) / max(denom, 1e-300)
    if denom < 1e-14:
        rel = 0.0
    I_s_left = (-3 * I[0] + 4 * I[1] - I[2]) / (2 * hs)
    I_s_right = (3 * I[-1] - 4 * I[-2] + I[-3]) / (2 * hs)
    return cell.s, I, rel, float(I_s_left), float(I_s_right)


def burning_product(sol, spec: ReactionSpec) -> float:
    """(int f(T)) * (int |T_s|^2): bounded below by a positive constant."""
    cell = sol.cell
    f_int = _volume_integral(cell, _reaction_source(sol, spec))
    ts_sq = _volume_integral(cell, d_s(sol.T) ** 2)
    return f_int * ts_sq


def speed_bound_report(sol, spec: ReactionSpec, psi_data=None):
    """c against the supersolution exclusion threshold.

    Returns (ratio, bound, M, mu_e, inf_psi): the converged speed must stay
    strictly below  1 + eps + M + |u|_inf (1 + sup |grad psi_e| / psi_e).
    """
    if psi_data is None:
        mu_e, psi, _ = principal_eigenpair(EigenProblem(sol.cell, alpha=1.0))
    else:
        mu_e, psi = psi_data
    grad_ratio = grad_psi_over_psi_sup(sol.cell, psi)
    u1, u2 = sol.u_core()
    u_inf = max(float(np.max(np.abs(u1.values))), float(np.max(np.abs(u2.values))))
    M = sol.tau * lipschitz_slope(spec)
    bound = 1.0 + sol.eps + M + u_inf * (1.0 + grad_ratio)
    ratio = sol.c / (1.0 + M + u_inf * (1.0 + grad_ratio) + (1.0 + sol.eps))
    return ratio, bound, M, mu_e, float(np.min(psi))


def vorticity_bound_ratio(sol) -> float:
    """|omega|_H1 over the extended slab / |tilde_grad T|_L2 (0 guarded)."""
    grad_T = norm(sol.T, "H1_tilde") ** 2 - norm(sol.T, "L2") ** 2
    grad_T = float(np.sqrt(max(grad_T, 0.0)))
    om_h1 = norm(sol.omega, "X_ij", i=1, j=1)
    if om_h1 < 1e-14 and grad_T < 1e-14:
        return 0.0
    return om_h1 / max(grad_T, 1e-300)


def decay_fit(sol):
    """Log-linear fit of the right tail of max_{x,z} T on the quiet window.

    The window starts where the measured flow has dropped below c/10 and
    ends one period before the slab end.  Returns (slope, r2, R_used) or
    (None, None, R) when the window is too short.
    """
    cell = sol.cell
    u1, u2 = sol.u_core()
    speed = np.maximum(np.max(np.abs(u1.values), axis=(1, 2)),
                       np.max(np.abs(u2.values), axis=(1, 2)))
    quiet = np.array([np.max(speed[i:]) <= max(sol.c / 10.0, 1e-12)
                      for i in range(cell.n_s)])
    candidates = np.nonzero(quiet & (cell.s >= 0.0))[0]
    if candidates.size == 0:
        return None, None, None
    i0 = int(candidates[0])
    R = float(cell.s[i0])
    window = (cell.s >= R) & (cell.s <= cell.a - cell.ell)
    y = np.max(sol.T.values, axis=(1, 2))
    ok = window & (y > 1e-14)
    if np.count_nonzero(ok) < 5:
        return None, None, R
    s_w, logy = cell.s[ok], np.log(y[ok])
    slope, intercept = np.polyfit(s_w, logy, 1)
    fitted = slope * s_w + intercept
    ss_res = float(np.sum((logy - fitted) ** 2))
    ss_tot = float(np.sum((logy - np.mean(logy)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
    return float(slope), r2, R


def divergence_norm(sol) -> tuple:
    """L2 norm of tilde_div u on the core slab and its h^2 |Psi|_X02 gauge."""
    u1, u2 = sol.u_core()
    div = divergence_tilde(u1, u2)
    val = norm(div, "L2")
    cell = sol.cell
    h_eff = max(cell.h_s, cell.h_x, cell_mean_height(cell) * cell.h_sigma)
    psi_x02 = norm(sol.Psi, "X_ij", i=0, j=2)
    return val, h_eff ** 2 * psi_x02


def c2_over_eps_monitor(continuation) -> list:
    """Series c_eps^2 / eps along the eps schedule (must stay away from 0)."""
    return continuation.c2_over_eps()


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    entries: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION
    config_hash: str = ""

    def add(self, name, value, verdict, threshold=None, detail=None):
        self.entries[name] = {"value": value, "verdict": verdict,
                              "threshold": threshold, "detail": detail}

    @property
    def failed(self):
        return [k for k, v in self.entries.items() if v["verdict"] == "fail"]

    def to_json(self) -> str:
        def clean(obj):
            if isinstance(obj, (np.floating, np.integer)):
                return obj.item()
            if isinstance(obj, np.ndarray):
                return obj.tolist()
            if isinstance(obj, dict):
                return {k: clean(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [clean(v) for v in obj]
            return obj

        return json.dumps({"schema_version": self.schema_version,
                           "config_hash": self.config_hash,
                           "entries": clean(self.entries)},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DiagnosticsReport":
        data = json.loads(text)
        return cls(entries=data["entries"], schema_version=data["schema_version"],
                   config_hash=data.get("config_hash", ""))

    def to_markdown(self) -> str:
        lines = ["# verification report", "",
                 f"schema {self.schema_version}, config {self.config_hash}", "",
                 "| check | value | threshold | verdict |",
                 "|---|---|---|---|"]
        for name, e in sorted(self.entries.items()):
            val = e["value"]
            if isinstance(val, float):
                val = f"{val:.6g}"
            lines.append(f"| {name} | {val} | {e['threshold']} | {e['verdict']} |")
        return "\n".join(lines) + "\n"


def run_diagnostics(sol, spec: ReactionSpec, thresholds: Thresholds | None = None,
                    continuation=None, dns_results=None,
                    config_hash="") -> DiagnosticsReport:
    """Evaluate the full identity suite on a converged solution."""
    th = thresholds or Thresholds()
    rep = DiagnosticsReport(config_hash=config_hash)

    rr = reaction_rate_residual(sol, spec)
    rep.add("reaction_rate_residual", rr,
            "pass" if rr <= th.reaction_rate else "fail", th.reaction_rate)

    er = energy_identity_residual(sol, spec)
    rep.add("energy_residual", er, "pass" if er <= th.energy else "fail", th.energy)

    s, I, prof_res, i_s_l, i_s_r = cross_section_profile(sol, spec)
    rep.add("profile_residual", prof_res,
            "pass" if prof_res <= th.profile_residual else "fail",
            th.profile_residual)
    slope_ok = i_s_l <= 1e-8 and i_s_r <= 1e-8
    rep.add("end_slopes", {"left": i_s_l, "right": i_s_r},
            "pass" if slope_ok else "fail", "<= 0")
    rep.add("I_profile", {"s": list(map(float, s)), "I": list(map(float, I))},
            "info")

    theta_minus, theta_plus = theta_limits(sol)
    rep.add("theta_minus", theta_minus,
            "pass" if 0.0 < theta_minus <= 1.0 + 1e-12 else "fail", "(0, 1]")
    rep.add("theta_plus", theta_plus,
            "pass" if theta_plus <= th.theta_plus else "fail", th.theta_plus)

    bp = burning_product(sol, spec)
    if spec.amplitude == 0.0:
        rep.add("burning_product", bp, "info", "> 0 (no reaction: informational)")
    else:
        rep.add("burning_product", bp, "pass" if bp > 0.0 else "fail", "> 0")

    ratio, bound, M, mu_e, inf_psi = speed_bound_report(sol, spec)
    rep.add("c_bounds_ratio", ratio,
            "pass" if sol.c < th.speed_bound_margin * bound else "fail",
            f"c < {bound:.4g}", {"M": M, "mu_e": mu_e, "inf_psi_e": inf_psi})

    vr = vorticity_bound_ratio(sol)
    rep.add("vorticity_bound_ratio", vr, "info" if np.isfinite(vr) else "fail",
            "finite; stability across refinements")

    slope, r2, R = decay_fit(sol)
    if slope is None:
        rep.add("decay_slope", None, "warn", "tail window too short",
                {"R_used": R})
    else:
        ok = slope <= -sol.c * th.decay_rate_factor and (r2 or 0.0) >= th.decay_r2
        rep.add("decay_slope", slope, "pass" if ok else "fail",
                f"<= {-sol.c * th.decay_rate_factor:.4g}",
                {"r2": r2, "R_used": R})
        rep.add("decay_r2", r2, "pass" if (r2 or 0.0) >= th.decay_r2 else "fail",
                th.decay_r2)

    nerr = abs(spec.theta0 - sol.max_right_of_zero())
    rep.add("normalization_error", nerr,
            "pass" if nerr <= th.normalization else "fail", th.normalization)

    dv, gauge = divergence_norm(sol)
    rep.add("divergence_norm", dv,
            "pass" if dv <= th.divergence_prefactor * gauge else "fail",
            th.divergence_prefactor * gauge)

    cpos = sol.c > 0.0
    rep.add("front_speed", sol.c, "pass" if cpos or spec.amplitude == 0.0
            else "fail", "> 0")

    # boundary conformance of the fluid quantities
    psi_wall = max(float(np.max(np.abs(sol.Psi.values[:, :, 0]))),
                   float(np.max(np.abs(sol.Psi.values[:, :, -1]))),
                   float(np.max(np.abs(sol.Psi.values[0]))),
                   float(np.max(np.abs(sol.Psi.values[-1]))))
    om_wall = max(float(np.max(np.abs(sol.omega.values[:, :, 0]))),
                  float(np.max(np.abs(sol.omega.values[:, :, -1]))),
                  float(np.max(np.abs(sol.omega.values[0]))),
                  float(np.max(np.abs(sol.omega.values[-1]))))
    rep.add("fluid_boundary_values", {"Psi": psi_wall, "omega": om_wall},
            "pass" if max(psi_wall, om_wall) <= 1e-10 else "fail", 1e-10)

    if continuation is not None:
        series = c2_over_eps_monitor(continuation)
        vals = [v for _, v in series]
        ok = len(vals) > 0 and min(vals) > 0.0 and vals[-1] >= 0.5 * vals[0]
        rep.add("c2_over_eps", series, "pass" if ok else "fail",
                "positive, non-vanishing")
        cs = [st["c"] for st in continuation.stages]
        rep.add("continuation_speeds", cs,
                "pass" if all(c > 0 for c in cs) else "fail", "> 0 along schedule",
                {"c_extrapolated": continuation.c_extrapolated})
        bps = [burning_product(s2, spec) for s2 in continuation.solutions[-2:]]
        if len(bps) == 2 and min(bps) > 0:
            drift = abs(bps[1] - bps[0]) / max(abs(bps[0]), 1e-300)
            rep.add("burning_product_stability", drift,
                    "pass" if drift <= th.burning_stability else "warn",
                    th.burning_stability)

    if dns_results is not None:
        rep.add("pulsating_mismatch", dns_results.get("pulsating_mismatch"),
                "pass" if dns_results.get("pulsating_mismatch", 1.0) <= 0.05
                else "fail", 0.05)
        if "c_dns" in dns_results:
            gap = abs(dns_results["c_dns"] - dns_results["c_moving_frame"]) \
                / abs(dns_results["c_moving_frame"])
            rep.add("dns_speed_gap", gap, "pass" if gap <= 0.05 else "fail", 0.05,
                    dns_results)
    return rep
