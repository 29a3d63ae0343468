import numpy as np
import pytest

from pulsefront.errors import GeometryError
from pulsefront.geometry import (B_WALL, P_PERIODIC, S_LEFT, S_RIGHT, FourierWall,
                                 GeometryConfig, build_period_cell, cell_measure,
                                 flat_cell)


def test_flat_strip_normals_and_metric():
    cell = flat_cell()
    assert np.allclose(cell.boundary.eta_bottom, [0.0, -1.0], atol=0)
    assert np.allclose(cell.boundary.eta_top, [0.0, 1.0], atol=0)
    m = cell.sigma_map
    assert np.all(m.J == 0.0)
    assert np.all(m.drift == 0.0)
    assert np.all(m.a_zz == 1.0)
    assert np.all(m.H == 1.0)


def test_wavy_wall_construction(wavy_small):
    cell = wavy_small
    assert np.all(cell.sigma_map.jac > 0.0)
    norms = np.hypot(cell.boundary.eta_top[:, 0], cell.boundary.eta_top[:, 1])
    assert np.all(np.abs(norms - 1.0) <= 1e-12)
    # periodic pairing of the identified x=0 / x=ell columns is bijective
    j, pair = cell.boundary.periodic_pairs(cell.n_x)
    assert sorted(pair) == sorted(j)


def test_boundary_classes_unique(wavy_small):
    kind = wavy_small.boundary.kind
    # precedence: slab ends over walls over periodic
    assert np.all(kind[0] == S_LEFT)
    assert np.all(kind[-1] == S_RIGHT)
    assert np.all(kind[1:-1, :, 0] == B_WALL)
    assert np.all(kind[1:-1, :, -1] == B_WALL)
    assert np.all(kind[1:-1, 0, 1:-1] == P_PERIODIC)


def test_cell_measure_flat_rectangles():
    assert cell_measure(flat_cell(ell=1.0, height=1.0)) == pytest.approx(1.0, abs=1e-14)
    assert cell_measure(flat_cell(ell=2.0, height=1.0, a=4.0)) == pytest.approx(2.0, abs=1e-14)
    assert cell_measure(flat_cell(ell=2.0, height=0.5, a=4.0)) == pytest.approx(1.0, abs=1e-14)


def test_cell_measure_wavy_matches_analytic():
    # oscillatory wall terms integrate to zero over one period, so the
    # analytic area is ell * (mean top - mean bottom)
    cell = build_period_cell(GeometryConfig(
        ell=2.0, a=4.0, n_s=17, n_x=24, n_z=6,
        wall_bottom=FourierWall(-0.25, cos=(0.05,)),
        wall_top=FourierWall(0.75, sin=(0.1, 0.02))))
    assert cell_measure(cell) == pytest.approx(2.0, abs=1e-12)


def test_refinement_changes_measure_within_h2():
    coarse = build_period_cell(GeometryConfig(
        ell=1.0, a=2.0, n_s=17, n_x=8, n_z=6,
        wall_top=FourierWall(1.0, sin=(0.1,))))
    fine = build_period_cell(GeometryConfig(
        ell=1.0, a=2.0, n_s=33, n_x=16, n_z=11,
        wall_top=FourierWall(1.0, sin=(0.1,))))
    assert abs(cell_measure(fine) - cell_measure(coarse)) <= (1.0 / 8) ** 2


def test_stored_geometry_reproducible_bitwise():
    cfg = GeometryConfig(ell=1.0, a=2.0, n_s=17, n_x=12, n_z=7,
                         wall_top=FourierWall(1.0, sin=(0.1,), cos=(0.0, 0.03)))
    c1, c2 = build_period_cell(cfg), build_period_cell(cfg)
    assert np.array_equal(c1.sigma_map.z, c2.sigma_map.z)
    assert np.array_equal(c1.sigma_map.J, c2.sigma_map.J)
    # sampling one period later hits identical phases
    w = cfg.wall_top
    assert np.allclose(w.sample_nodes(12, 1.0), w(np.arange(12) / 12 + 5.0, 1.0),
                       rtol=0, atol=1e-12)


class _RampWall:
    """Deliberately non-periodic wall for the rejection test."""

    cos = ()
    sin = ()
    const = 0.0

    def __call__(self, x, ell):
        return np.asarray(x, dtype=float) * 0.1


def test_rejects_non_periodic_walls():
    with pytest.raises(GeometryError, match="periodic"):
        build_period_cell(GeometryConfig(wall_top=_RampWall(), n_s=17, n_x=8, n_z=6))


def test_rejects_crossing_walls():
    with pytest.raises(GeometryError, match="cross"):
        build_period_cell(GeometryConfig(
            n_s=17, n_x=8, n_z=6,
            wall_bottom=FourierWall(0.0), wall_top=FourierWall(0.05, sin=(0.2,))))


def test_rejects_bad_grid_and_extent():
    with pytest.raises(GeometryError, match="grid"):
        build_period_cell(GeometryConfig(n_s=3))
    with pytest.raises(GeometryError, match="extent"):
        build_period_cell(GeometryConfig(a=1.0))


def test_extended_cell_preserves_core_nodes(flat_small):
    ext = flat_small.extended(4)
    assert ext.n_s == flat_small.n_s + 8
    assert np.allclose(ext.s[4:-4], flat_small.s, atol=1e-13)
    assert ext.h_s == pytest.approx(flat_small.h_s)
