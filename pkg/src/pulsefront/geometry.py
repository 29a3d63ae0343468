"""Channel geometry: period cell, wavy walls, terrain-following coordinates.

The domain is a 2D channel ``{(x, z): wall_bottom(x) <= z <= wall_top(x)}``
that is ``ell``-periodic in x.  The moving-frame box ``[-a, a] x Omega_p``
is discretized on a structured (s, x, sigma) grid, where sigma in [0, 1]
flattens the walls:

    z(x, sigma) = wall_bottom(x) + sigma * (wall_top(x) - wall_bottom(x)).

Walls are truncated Fourier series, so periodicity is exact and wall
derivatives are analytic.  Every differential operator in the package picks
up metric terms from this map; they are precomputed here at grid nodes:

    dz      = H(x) dsigma                 (H = wall_top - wall_bottom)
    d/dz    = (1/H) d/dsigma
    d/dx|_z = d/dx|_sigma + J d/dsigma,   J = -(b'(x) + sigma H'(x)) / H(x).

For a flat channel the metric reduces exactly to J = 0, H = const.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import GeometryError

# boundary node classes
INTERIOR = 0
B_WALL = 1
P_PERIODIC = 2
S_LEFT = 3
S_RIGHT = 4

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FourierWall:
    """ell-periodic wall profile  const + sum_k a_k cos(2 pi k x / ell) + b_k sin(...)."""

    const: float
    cos: tuple = ()
    sin: tuple = ()

    def __call__(self, x, ell):
        """Evaluate the wall height at arbitrary x (vectorized)."""
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.const, dtype=float)
        frac = np.mod(x / ell, 1.0)
        for k, a in enumerate(self.cos, start=1):
            out = out + a * np.cos(_TWO_PI * k * frac)
        for k, b in enumerate(self.sin, start=1):
            out = out + b * np.sin(_TWO_PI * k * frac)
        return out

    def derivative(self, x, ell, order=1):
        """Analytic derivative of the given order at arbitrary x."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        frac = np.mod(x / ell, 1.0)
        for k, a in enumerate(self.cos, start=1):
            w = _TWO_PI * k / ell
            if order == 1:
                out = out - a * w * np.sin(_TWO_PI * k * frac)
            elif order == 2:
                out = out - a * w * w * np.cos(_TWO_PI * k * frac)
            else:
                raise ValueError("only first and second derivatives supported")
        for k, b in enumerate(self.sin, start=1):
            w = _TWO_PI * k / ell
            if order == 1:
                out = out + b * w * np.cos(_TWO_PI * k * frac)
            elif order == 2:
                out = out - b * w * w * np.sin(_TWO_PI * k * frac)
        return out

    def sample_nodes(self, n_x, ell, order=0):
        """Sample on the n_x periodic grid nodes x_i = i ell / n_x.

        Phase arguments are reduced with integer arithmetic, so translating
        the wall by a whole period reproduces bit-identical samples.
        """
        i = np.arange(n_x)
        out = np.full(n_x, self.const if order == 0 else 0.0, dtype=float)
        for k, a in enumerate(self.cos, start=1):
            theta = _TWO_PI * ((k * i) % n_x) / n_x
            w = _TWO_PI * k / ell
            if order == 0:
                out += a * np.cos(theta)
            elif order == 1:
                out += -a * w * np.sin(theta)
            else:
                out += -a * w * w * np.cos(theta)
        for k, b in enumerate(self.sin, start=1):
            theta = _TWO_PI * ((k * i) % n_x) / n_x
            w = _TWO_PI * k / ell
            if order == 0:
                out += b * np.sin(theta)
            elif order == 1:
                out += b * w * np.cos(theta)
            else:
                out += -b * w * w * np.sin(theta)
        return out

    @property
    def is_constant(self):
        return all(c == 0.0 for c in self.cos) and all(s == 0.0 for s in self.sin)


@dataclass(frozen=True)
class GeometryConfig:
    """Geometry section of a run configuration."""

    ell: float = 1.0
    a: float = 8.0
    n_s: int = 128
    n_x: int = 32
    n_z: int = 32
    wall_bottom: FourierWall = FourierWall(0.0)
    wall_top: FourierWall = FourierWall(1.0)
    gravity_angle: float = 0.0
    half_width: float | None = None


@dataclass(frozen=True)
class SigmaMap:
    """Terrain-following map (x, sigma) -> (x, z) and its metric terms.

    Node arrays have shape (n_x, n_z).  ``jac`` is dz/dsigma = H(x) > 0;
    ``J`` is dsigma/dx at fixed z; ``drift`` is the first-order sigma
    coefficient J_x + J * J_sigma appearing in mapped second derivatives;
    ``a_zz`` is J^2 + 1/H^2, the sigma-sigma diffusion coefficient.
    """

    z: np.ndarray
    H: np.ndarray          # (n_x,)
    J: np.ndarray
    drift: np.ndarray
    a_zz: np.ndarray

    @property
    def jac(self):
        return self.H


@dataclass(frozen=True)
class BoundaryClass:
    """Per-node boundary classification of the moving-frame grid.

    ``kind`` holds one class per node (interior / B_wall / P_periodic /
    S_left / S_right); corners resolve with precedence S > B > P so each
    boundary node has exactly one class.  Outward unit normals are stored
    for the wall rows.
    """

    kind: np.ndarray                 # (n_s, n_x, n_z) uint8
    eta_bottom: np.ndarray           # (n_x, 2) outward unit normal at sigma=0
    eta_top: np.ndarray              # (n_x, 2) outward unit normal at sigma=1

    def periodic_pairs(self, n_x):
        """Index pairing of the x=0 and x=ell columns (identified storage)."""
        j = np.arange(n_x)
        return j, (j + n_x) % n_x


@dataclass(frozen=True)
class PeriodCell:
    """Discretized period cell and moving-frame box.

    Immutable after construction; shares freely across workers.
    """

    ell: float
    half_width: float
    wall_bottom: FourierWall
    wall_top: FourierWall
    gravity_angle: float
    n_s: int
    n_x: int
    n_z: int
    a: float

    # derived grid data (filled by build_period_cell)
    s: np.ndarray = field(repr=False, default=None)
    x: np.ndarray = field(repr=False, default=None)
    sigma: np.ndarray = field(repr=False, default=None)
    sigma_map: SigmaMap = field(repr=False, default=None)
    boundary: BoundaryClass = field(repr=False, default=None)

    @property
    def h_s(self):
        return 2.0 * self.a / (self.n_s - 1)

    @property
    def h_x(self):
        return self.ell / self.n_x

    @property
    def h_sigma(self):
        return 1.0 / (self.n_z - 1)

    @property
    def e_hat(self):
        """Buoyancy direction (z rotated into the tilted frame)."""
        return np.array([np.sin(self.gravity_angle), np.cos(self.gravity_angle)])

    @property
    def is_flat(self):
        return self.wall_bottom.is_constant and self.wall_top.is_constant

    @property
    def shape(self):
        return (self.n_s, self.n_x, self.n_z)

    # quadrature -----------------------------------------------------------

    @property
    def w_s(self):
        """Trapezoid weights along s."""
        w = np.full(self.n_s, self.h_s)
        w[0] = w[-1] = 0.5 * self.h_s
        return w

    @property
    def w_sigma(self):
        w = np.full(self.n_z, self.h_sigma)
        w[0] = w[-1] = 0.5 * self.h_sigma
        return w

    def volume_weights(self):
        """Quadrature weights for integrals over [-a,a] x Omega_p (dV = ds dx dz)."""
        return (self.w_s[:, None, None]
                * self.h_x
                * self.w_sigma[None, None, :]
                * self.sigma_map.H[None, :, None])

    def cross_section_weights(self):
        """Quadrature weights for integrals over Omega_p at fixed s (dA = dx dz)."""
        return self.h_x * self.w_sigma[None, :] * self.sigma_map.H[:, None]

    def z_nodes(self):
        """Physical z coordinates, shape (n_x, n_z)."""
        return self.sigma_map.z

    def extended(self, margin_nodes):
        """A cell with the same (x, sigma) grid and `margin_nodes` extra s-nodes per side.

        Used for the enlarged slab carrying the vorticity / stream-function
        problem; node positions of the core grid are preserved exactly.
        """
        return build_period_cell(GeometryConfig(
            ell=self.ell, a=self.a + margin_nodes * self.h_s,
            n_s=self.n_s + 2 * margin_nodes, n_x=self.n_x, n_z=self.n_z,
            wall_bottom=self.wall_bottom, wall_top=self.wall_top,
            gravity_angle=self.gravity_angle, half_width=self.half_width))


def _build_sigma_map(cfg: GeometryConfig):
    n_x, n_z, ell = cfg.n_x, cfg.n_z, cfg.ell
    sigma = np.linspace(0.0, 1.0, n_z)
    b = cfg.wall_bottom.sample_nodes(n_x, ell)
    t = cfg.wall_top.sample_nodes(n_x, ell)
    bp = cfg.wall_bottom.sample_nodes(n_x, ell, order=1)
    tp = cfg.wall_top.sample_nodes(n_x, ell, order=1)
    bpp = cfg.wall_bottom.sample_nodes(n_x, ell, order=2)
    tpp = cfg.wall_top.sample_nodes(n_x, ell, order=2)
    H = t - b
    Hp = tp - bp
    Hpp = tpp - bpp

    z = b[:, None] + sigma[None, :] * H[:, None]
    J = -(bp[:, None] + sigma[None, :] * Hp[:, None]) / H[:, None]
    # J_x at fixed sigma, plus J * J_sigma with J_sigma = -H'/H
    Jx = (-(bpp[:, None] + sigma[None, :] * Hpp[:, None]) / H[:, None]
          + (bp[:, None] + sigma[None, :] * Hp[:, None]) * Hp[:, None] / H[:, None] ** 2)
    drift = Jx + J * (-Hp[:, None] / H[:, None])
    a_zz = J ** 2 + 1.0 / H[:, None] ** 2
    return SigmaMap(z=z, H=H, J=J, drift=drift, a_zz=a_zz), (b, t, bp, tp)


def _build_boundary(cfg: GeometryConfig, bp, tp):
    kind = np.zeros((cfg.n_s, cfg.n_x, cfg.n_z), dtype=np.uint8)
    kind[:, 0, :] = P_PERIODIC
    kind[:, :, 0] = B_WALL
    kind[:, :, -1] = B_WALL
    kind[0, :, :] = S_LEFT
    kind[-1, :, :] = S_RIGHT

    nb = np.hypot(bp, 1.0)
    nt = np.hypot(tp, 1.0)
    eta_bottom = np.stack([bp / nb, -1.0 / nb], axis=1)
    eta_top = np.stack([-tp / nt, 1.0 / nt], axis=1)
    return BoundaryClass(kind=kind, eta_bottom=eta_bottom, eta_top=eta_top)


def build_period_cell(cfg: GeometryConfig) -> PeriodCell:
    """Construct and validate a PeriodCell from geometry parameters.

    Rejects non-periodic walls (endpoint mismatch beyond 1e-10), crossing
    walls, undersized grids, and a moving-frame extent shorter than two
    periods.
    """
    if min(cfg.n_s, cfg.n_x, cfg.n_z) < 4:
        raise GeometryError("grid counts must be >= 4 in every direction")
    if cfg.a < 2.0 * cfg.ell:
        raise GeometryError(f"moving-frame half-extent a={cfg.a} must be >= 2*ell")

    for name, wall in (("bottom", cfg.wall_bottom), ("top", cfg.wall_top)):
        gap = abs(float(wall(0.0, cfg.ell)) - float(wall(cfg.ell, cfg.ell)))
        if gap > 1e-10:
            raise GeometryError(f"wall_{name} is not ell-periodic (endpoint gap {gap:.2e})")

    # crossing check on a fine sampling
    xf = np.linspace(0.0, cfg.ell, 8 * cfg.n_x, endpoint=False)
    bf = cfg.wall_bottom(xf, cfg.ell)
    tf = cfg.wall_top(xf, cfg.ell)
    if np.min(tf - bf) <= 0.0:
        i = int(np.argmin(tf - bf))
        raise GeometryError(f"walls cross near x={xf[i]:.4f}")

    zmax = float(max(np.max(np.abs(bf)), np.max(np.abs(tf))))
    half_width = cfg.half_width if cfg.half_width is not None else zmax
    if zmax > half_width + 1e-12:
        raise GeometryError(f"walls leave the band |z| <= {half_width} (max |z| = {zmax:.4f})")

    smap, (b, t, bp, tp) = _build_sigma_map(cfg)
    boundary = _build_boundary(cfg, bp, tp)
    return PeriodCell(
        ell=cfg.ell, half_width=half_width,
        wall_bottom=cfg.wall_bottom, wall_top=cfg.wall_top,
        gravity_angle=cfg.gravity_angle,
        n_s=cfg.n_s, n_x=cfg.n_x, n_z=cfg.n_z, a=cfg.a,
        s=np.linspace(-cfg.a, cfg.a, cfg.n_s),
        x=np.arange(cfg.n_x) * (cfg.ell / cfg.n_x),
        sigma=np.linspace(0.0, 1.0, cfg.n_z),
        sigma_map=smap, boundary=boundary)


def cell_measure(cell: PeriodCell) -> float:
    """Quadrature-consistent area |Omega_p| (same weights as field integrals)."""
    return float(cell.h_x * np.sum(cell.sigma_map.H))


def flat_cell(ell=1.0, height=1.0, a=8.0, n_s=65, n_x=8, n_z=9,
              gravity_angle=0.0) -> PeriodCell:
    """Convenience constructor for a flat channel of the given height."""
    return build_period_cell(GeometryConfig(
        ell=ell, a=a, n_s=n_s, n_x=n_x, n_z=n_z,
        wall_bottom=FourierWall(0.0), wall_top=FourierWall(height),
        gravity_angle=gravity_angle))
