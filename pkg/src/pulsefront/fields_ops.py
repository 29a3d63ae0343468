"""Discrete moving-frame operators, mollifier, reflection extension, norms.

Fields live on the structured (s, x, sigma) grid of a PeriodCell (axis
order s=0, x=1, sigma=2).  The moving-frame gradient is

    tilde_grad g = ((d_x + d_s) g, d_z g),

where d_x is the stationary-frame x-derivative at fixed z.  In mapped
coordinates d_x|_z = d_x|_sigma + J d_sigma and d_z = d_sigma / H, with the
metric arrays precomputed on the cell.  All stencils are centered
second-order, with second-order one-sided closures at the slab ends and at
the walls; x wraps periodically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import PulsefrontError
from .geometry import PeriodCell

TAG_TEMPERATURE = "temperature"
TAG_VORTICITY = "vorticity"
TAG_STREAM = "stream"
TAG_VELOCITY = "velocity_component"

_TAGS = (TAG_TEMPERATURE, TAG_VORTICITY, TAG_STREAM, TAG_VELOCITY)


@dataclass
class GridField:
    """Scalar field on the moving-frame grid with a boundary-condition tag."""

    values: np.ndarray
    bc_tag: str
    cell: PeriodCell
    eps: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.bc_tag not in _TAGS:
            raise ValueError(f"unknown bc_tag {self.bc_tag!r}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.cell.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.cell.shape}")

    def validate_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise PulsefrontError(f"non-finite values in {self.bc_tag} field")

    def like(self, values, bc_tag=None):
        return GridField(values, bc_tag or self.bc_tag, self.cell,
                         eps=self.eps, delta=self.delta)


# ---------------------------------------------------------------------------
# One-dimensional difference stencils (centered; one-sided at ends)
# ---------------------------------------------------------------------------

def _roll_axis(v, shift, axis):
    return np.roll(v, shift, axis=axis)


def d1_periodic(v, h, axis):
    return (_roll_axis(v, -1, axis) - _roll_axis(v, 1, axis)) / (2.0 * h)


def d1(v, h, axis):
    out = np.empty_like(v)
    sl = [slice(None)] * v.ndim

    def at(i):
        s = sl.copy()
        s[axis] = i
        return tuple(s)

    out[at(slice(1, -1))] = (v[at(slice(2, None))] - v[at(slice(0, -2))]) / (2.0 * h)
    out[at(0)] = (-3.0 * v[at(0)] + 4.0 * v[at(1)] - v[at(2)]) / (2.0 * h)
    out[at(-1)] = (3.0 * v[at(-1)] - 4.0 * v[at(-2)] + v[at(-3)]) / (2.0 * h)
    return out


def d2_periodic(v, h, axis):
    return (_roll_axis(v, -1, axis) - 2.0 * v + _roll_axis(v, 1, axis)) / (h * h)


def d2(v, h, axis):
    out = np.empty_like(v)
    sl = [slice(None)] * v.ndim

    def at(i):
        s = sl.copy()
        s[axis] = i
        return tuple(s)

    out[at(slice(1, -1))] = (v[at(slice(2, None))] - 2.0 * v[at(slice(1, -1))]
                             + v[at(slice(0, -2))]) / (h * h)
    out[at(0)] = (2.0 * v[at(0)] - 5.0 * v[at(1)] + 4.0 * v[at(2)] - v[at(3)]) / (h * h)
    out[at(-1)] = (2.0 * v[at(-1)] - 5.0 * v[at(-2)] + 4.0 * v[at(-3)] - v[at(-4)]) / (h * h)
    return out


# ---------------------------------------------------------------------------
# Moving-frame operators
# ---------------------------------------------------------------------------

def _metric(cell):
    m = cell.sigma_map
    return m.J[None, :, :], m.H[None, :, None], m.a_zz[None, :, :], m.drift[None, :, :]


def d_s(g: GridField):
    return d1(g.values, g.cell.h_s, axis=0)


def d_x_stationary(g: GridField):
    """x-derivative at fixed z (includes the sigma-map term)."""
    J, _, _, _ = _metric(g.cell)
    return d1_periodic(g.values, g.cell.h_x, axis=1) + J * d1(g.values, g.cell.h_sigma, axis=2)


def d_z(g: GridField):
    _, H, _, _ = _metric(g.cell)
    return d1(g.values, g.cell.h_sigma, axis=2) / H


def tilde_gradient(g: GridField):
    """Moving-frame gradient ((d_x + d_s) g, d_z g) as two velocity-tagged fields."""
    first = d_x_stationary(g) + d_s(g)
    second = d_z(g)
    return g.like(first, TAG_VELOCITY), g.like(second, TAG_VELOCITY)


def tilde_perp_dot_e(g: GridField, e) -> GridField:
    """e . (-d_z g, (d_x + d_s) g): the rotated moving-frame gradient against e."""
    e = np.asarray(e, dtype=float)
    out = -e[0] * d_z(g) + e[1] * (d_x_stationary(g) + d_s(g))
    return g.like(out, TAG_VELOCITY)


def apply_L_epsilon(g: GridField, eps: float) -> GridField:
    """(d_x + d_s)^2 g + d_z^2 g + eps d_s^2 g, second order in the interior.

    Built as the composition tilde_div(tilde_grad g) plus the eps-weighted
    second s-difference, so it matches that composition identically.
    """
    if not 0.0 <= eps < 0.5:
        raise ValueError(f"eps={eps} outside [0, 1/2)")
    g1, g2 = tilde_gradient(g)
    out = divergence_tilde(g1, g2).values + eps * d2(g.values, g.cell.h_s, axis=0)
    return g.like(out)


def divergence_tilde(u1: GridField, u2: GridField) -> GridField:
    """tilde_grad . u = (d_x + d_s) u1 + d_z u2."""
    out = d_x_stationary(u1) + d_s(u1) + d_z(u2)
    return u1.like(out)


# ---------------------------------------------------------------------------
# Reflection extension and mollifier
# ---------------------------------------------------------------------------

def _reflect_about_value(v, n_pad, side, axis):
    """Odd reflection around the boundary value: g(b +/- k h) -> 2 g(b) - g(b -/+ k h)."""
    sl = [slice(None)] * v.ndim

    def at(i):
        s = sl.copy()
        s[axis] = i
        return tuple(s)

    if side == "left":
        mirror = v[at(slice(1, n_pad + 1))]
        edge = v[at(slice(0, 1))]
        return (2.0 * edge - mirror)[at(slice(None, None, -1))]
    mirror = v[at(slice(-n_pad - 1, -1))]
    edge = v[at(slice(-1, None))]
    return (2.0 * edge - mirror)[at(slice(None, None, -1))]


def extend_by_reflection(g: GridField, margin_nodes: int | None = None) -> GridField:
    """Extend along s by odd reflection around the end values.

    Matches the slab extension used by the vorticity source: values beyond
    s = +/- a are 2 g(+/-a) - g(mirrored); continuous across the ends at
    the nodes, and exact for fields linear in s.  Default margin covers
    three periods.
    """
    cell = g.cell
    if margin_nodes is None:
        margin_nodes = math.ceil(3.0 * cell.ell / cell.h_s)
    m = int(margin_nodes)
    if m >= cell.n_s:
        raise ValueError(f"margin {m} too large for n_s={cell.n_s}")
    left = _reflect_about_value(g.values, m, "left", axis=0)
    right = _reflect_about_value(g.values, m, "right", axis=0)
    ext = np.concatenate([left, g.values, right], axis=0)
    return GridField(ext, g.bc_tag, cell.extended(m), eps=g.eps, delta=g.delta)


@dataclass(frozen=True)
class MollifierSpec:
    """Compactly supported tensor-product bump kernel of unit discrete mass.

    The per-axis profile is (1 - (d/delta)^2)^3 sampled at node offsets and
    renormalized, so the product kernel sums to one exactly and mollification
    preserves constants and positivity.
    """

    delta: float

    def axis_kernel(self, h):
        r = int(np.floor(self.delta / h - 1e-12))
        if r <= 0:
            return np.array([1.0])
        d = np.arange(-r, r + 1) * h / self.delta
        k = (1.0 - d * d) ** 3
        return k / k.sum()


def _pad_axis(v, kernel_len, axis, rule):
    n_pad = kernel_len // 2
    if n_pad == 0:
        return v, 0
    if rule == "periodic":
        n = v.shape[axis]
        idx = np.arange(-n_pad, n + n_pad) % n
        return np.take(v, idx, axis=axis), n_pad
    if rule == "odd_value":
        left = _reflect_about_value(v, n_pad, "left", axis)
        right = _reflect_about_value(v, n_pad, "right", axis)
        return np.concatenate([left, v, right], axis=axis), n_pad
    if rule == "even":
        sl = [slice(None)] * v.ndim

        def at(i):
            s = sl.copy()
            s[axis] = i
            return tuple(s)

        left = v[at(slice(1, n_pad + 1))][at(slice(None, None, -1))]
        right = v[at(slice(-n_pad - 1, -1))][at(slice(None, None, -1))]
        return np.concatenate([left, v, right], axis=axis), n_pad
    raise ValueError(rule)


def mollify(g: GridField, m: MollifierSpec) -> GridField:
    """Discrete convolution with the unit-mass bump kernel.

    The field is extended beyond its box before convolving: odd reflection
    around the end values in s, periodic wrap in x, and across the walls an
    odd reflection for Dirichlet-tagged fields (vorticity, stream) or an
    even one otherwise.  Linear in g and positivity-preserving.
    """
    cell = g.cell
    if m.delta > cell.ell:
        raise ValueError(f"mollifier support {m.delta} exceeds one period {cell.ell}")
    mean_h = cell_mean_height(cell)
    k_s = m.axis_kernel(cell.h_s)
    k_x = m.axis_kernel(cell.h_x)
    k_q = m.axis_kernel(mean_h * cell.h_sigma)
    if len(k_s) // 2 >= cell.n_s:
        raise ValueError("mollifier support exceeds the slab length")

    wall_rule = "odd_value" if g.bc_tag in (TAG_VORTICITY, TAG_STREAM) else "even"
    v = g.values
    for kernel, axis, rule in ((k_s, 0, "odd_value"), (k_x, 1, "periodic"),
                               (k_q, 2, wall_rule)):
        if len(kernel) == 1:
            continue
        padded, n_pad = _pad_axis(v, len(kernel), axis, rule)
        conv = ndimage.convolve1d(padded, kernel, axis=axis, mode="constant")
        sl = [slice(None)] * v.ndim
        sl[axis] = slice(n_pad, padded.shape[axis] - n_pad)
        v = conv[tuple(sl)]
    out = g.like(v)
    out.delta = m.delta
    return out


def cell_mean_height(cell: PeriodCell) -> float:
    return float(np.mean(cell.sigma_map.H))


# ---------------------------------------------------------------------------
# Discrete norms
# ---------------------------------------------------------------------------

def integrate(g: GridField) -> float:
    """Quadrature of the field over the moving-frame box."""
    return float(np.sum(g.cell.volume_weights() * g.values))


def norm(g: GridField, kind: str, i: int | None = None, j: int | None = None) -> float:
    """Quadrature-weighted discrete norm: L2, H1_tilde, or partial-Sobolev X_ij.

    X_ij sums the L2 norms of all derivatives with s-order at most i and
    total order at most j (the field itself included).
    """
    w = g.cell.volume_weights()
    if kind == "L2":
        return math.sqrt(float(np.sum(w * g.values ** 2)))
    if kind == "H1_tilde":
        g1, g2 = tilde_gradient(g)
        total = np.sum(w * (g.values ** 2 + g1.values ** 2 + g2.values ** 2))
        return math.sqrt(float(total))
    if kind == "X_ij":
        if i is None or j is None:
            raise ValueError("X_ij norm needs derivative caps i and j")
        if i > j:
            raise ValueError(f"X_ij norm requires i <= j (got i={i}, j={j})")
        total = 0.0
        for b0 in range(i + 1):
            for b1 in range(j - b0 + 1):
                for b2 in range(j - b0 - b1 + 1):
                    v = g.values
                    for _ in range(b0):
                        v = d1(v, g.cell.h_s, axis=0)
                    fld = g.like(v)
                    for _ in range(b1):
                        fld = g.like(d_x_stationary(fld))
                    for _ in range(b2):
                        fld = g.like(d_z(fld))
                    total += float(np.sum(w * fld.values ** 2))
        return math.sqrt(total)
    raise ValueError(f"unknown norm kind {kind!r}")
