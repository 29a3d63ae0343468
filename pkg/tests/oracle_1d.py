"""Independent one-dimensional oracles for the x,z-independent regimes.

Dense banded solves on their own grids; deliberately separate from the
package's sparse machinery so the front solver can be checked against a
different code path (two-point boundary-value problems plus bisection on
the speed).
"""

import numpy as np
from scipy.linalg import solve_banded


def linear_profile(c, s, eps):
    """-c T' - (1+eps) T'' = 0 with T = 1, 0 at the ends (centered FD)."""
    n = len(s)
    h = s[1] - s[0]
    m = n - 2
    dpp = (1.0 + eps) / h ** 2
    adv = c / (2.0 * h)
    lower = -dpp + adv
    diag = 2.0 * dpp
    upper = -dpp - adv
    ab = np.zeros((3, m))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    rhs = np.zeros(m)
    rhs[0] -= lower * 1.0
    T = solve_banded((1, 1), ab, rhs)
    return np.concatenate([[1.0], T, [0.0]])


def c_star_discrete(theta0, s, eps, lo=-10.0, hi=10.0, tol=1e-12):
    """Speed at which the discrete linear profile passes theta0 at s = 0."""
    i0 = int(np.argmin(np.abs(s)))

    def g(c):
        return linear_profile(c, s, eps)[i0] - theta0

    g_lo = g(lo)
    assert g_lo * g(hi) <= 0.0, "bracket does not straddle the root"
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g_lo * g(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
            g_lo = g(lo)
    return 0.5 * (lo + hi)


def _newton_profile(c, s, eps, f, fp, T_init):
    """Damped Newton for -c T' - (1+eps) T'' - f(T) = 0, Dirichlet 1 / 0."""
    n = len(s)
    h = s[1] - s[0]
    dpp = (1.0 + eps) / h ** 2
    adv = c / (2.0 * h)
    T = T_init.copy()
    T[0], T[-1] = 1.0, 0.0

    def residual(T):
        F = (-dpp * (T[:-2] - 2 * T[1:-1] + T[2:])
             - adv * (T[2:] - T[:-2]) - f(T[1:-1]))
        return F

    for _ in range(80):
        F = residual(T)
        if np.max(np.abs(F)) < 1e-13:
            break
        m = n - 2
        ab = np.zeros((3, m))
        ab[0, 1:] = -dpp - adv
        ab[1, :] = 2.0 * dpp - fp(T[1:-1])
        ab[2, :-1] = -dpp + adv
        step = solve_banded((1, 1), ab, F)
        damp = 1.0
        base = np.max(np.abs(F))
        for _ in range(30):
            T_try = T.copy()
            T_try[1:-1] -= damp * step
            if np.max(np.abs(residual(T_try))) < base:
                T = T_try
                break
            damp *= 0.5
        else:
            T[1:-1] -= step
    return T


def ignition_front_speed(theta0, kappa, eps, a, n=4097, lo=0.01, hi=4.0,
                         tol=1e-11):
    """Front speed of the 1D ignition problem by BVP solves + bisection on c.

    -c T' = (1+eps) T'' + kappa (T - theta0)_+^3 (1 - T) on [-a, a] with
    T(-a) = 1, T(a) = 0, normalized by T(0) = theta0 (the profile is
    monotone in this regime).  Returns (c, s, T) on the oracle's own grid.
    """
    s = np.linspace(-a, a, n)

    def f(T):
        e = np.maximum(T - theta0, 0.0)
        return kappa * e ** 3 * (1.0 - T)

    def fp(T):
        e = np.maximum(T - theta0, 0.0)
        return kappa * (3.0 * e ** 2 * (1.0 - T) - e ** 3)

    i0 = int(np.argmin(np.abs(s)))
    warm = {"T": 0.5 * (1.0 - np.tanh(s))}

    def g(c):
        T = _newton_profile(c, s, eps, f, fp, warm["T"])
        warm["T"] = T
        return T[i0] - theta0, T

    g_lo, _ = g(lo)
    g_hi, _ = g(hi)
    assert g_lo > 0.0 > g_hi, (
        f"bisection bracket invalid: g({lo})={g_lo:.3e}, g({hi})={g_hi:.3e}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid, T = g(mid)
        if g_mid > 0.0:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    _, T = g(c)
    return c, s, T
