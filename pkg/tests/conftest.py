import numpy as np
import pytest

from pulsefront.geometry import FourierWall, GeometryConfig, build_period_cell


@pytest.fixture(scope="session")
def flat_small():
    """Flat 1x1 channel, short slab, coarse grid."""
    return build_period_cell(GeometryConfig(
        ell=1.0, a=2.0, n_s=33, n_x=8, n_z=9))


@pytest.fixture(scope="session")
def wavy_small():
    """Channel with a 0.1-amplitude sinusoidal top wall."""
    return build_period_cell(GeometryConfig(
        ell=1.0, a=2.0, n_s=33, n_x=16, n_z=9,
        wall_bottom=FourierWall(0.0, sin=(0.05,)),
        wall_top=FourierWall(1.0, sin=(0.1,))))


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
