"""Pulsating reaction fronts in a periodic Boussinesq channel.

A numpy/scipy library computing traveling-front solutions (speed c,
temperature, fluid flow) of a buoyancy-coupled ignition system in a wavy
periodic 2D strip, via a regularized moving-frame fixed-point scheme with
homotopy and continuation, plus an independent stationary-frame simulator
and a diagnostics suite checking every numerically testable identity.
"""

from .geometry import (FourierWall, GeometryConfig, PeriodCell, build_period_cell,
                       cell_measure, flat_cell)
from .fields_ops import (GridField, MollifierSpec, apply_L_epsilon, divergence_tilde,
                         extend_by_reflection, mollify, norm, tilde_gradient,
                         tilde_perp_dot_e)

__version__ = "0.1.0"
