"""Ignition nonlinearity family f(x, z, T) and its calibration.

Two profiles:

* ``cubic_ignition``: rho(x) * kappa * (T - theta0)_+^3 * (1 - T), where
  rho(x) = 1 + A sin(2 pi x / ell + phase) modulates the burning rate along
  the channel (A in [0, 1) keeps rho positive).

* ``smallness``: c_omega_p * (T - theta0)_+^p * (1 - T)_+ with p > 2, the
  weak-forcing family whose amplitude dial drives the left plateau to 1.
  Unmodulated, so f <= c_omega_p (T - theta0)_+^p holds pointwise with the
  stated constant.

Both vanish below the ignition threshold, are positive strictly between
threshold and 1, and are non-positive at and above 1; solver iterates may
transiently leave [0, 1], which both profiles tolerate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

PROFILES = ("cubic_ignition", "smallness")


@dataclass(frozen=True)
class ReactionSpec:
    theta0: float = 0.25
    r1: float = 0.45
    r2: float = 0.9
    profile: str = "cubic_ignition"
    kappa: float = 10.0
    c_omega_p: float = 1.0
    p: float = 3.0
    modulation_amplitude: float = 0.5
    modulation_phase: float = 0.0
    ell: float = 1.0
    c_floor: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not 0.0 < self.theta0 < self.r1 < self.r2 < 1.0:
            raise ConfigError(
                f"need 0 < theta0 < r1 < r2 < 1, got {self.theta0}, {self.r1}, {self.r2}")
        if not 0.0 <= self.modulation_amplitude < 1.0:
            raise ConfigError("modulation amplitude must lie in [0, 1)")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown reaction profile {self.profile!r}")
        if self.profile == "smallness" and self.p <= 2.0:
            raise ConfigError("smallness family requires exponent p > 2")
        if self.kappa < 0.0 or self.c_omega_p < 0.0:
            raise ConfigError("reaction amplitudes must be non-negative")
        r = np.linspace(self.r1, self.r2, 2001)
        excess = r - self.theta0
        if self.profile == "cubic_ignition":
            shape = self.kappa * excess ** 3 * (1.0 - r)
            floor = (1.0 - self.modulation_amplitude) * float(np.min(shape))
        else:
            floor = float(np.min(self.c_omega_p * excess ** self.p * (1.0 - r)))
        object.__setattr__(self, "c_floor", floor)

    @property
    def amplitude(self):
        return self.kappa if self.profile == "cubic_ignition" else self.c_omega_p


def _rho(spec: ReactionSpec, x):
    frac = np.mod(np.asarray(x, dtype=float), spec.ell) / spec.ell
    return 1.0 + spec.modulation_amplitude * np.sin(
        2.0 * np.pi * frac + spec.modulation_phase)


def evaluate(spec: ReactionSpec, x, z, T):
    """Reaction rate f(x, z, T); vectorized, tolerant of T outside [0, 1]."""
    T = np.asarray(T, dtype=float)
    excess = np.maximum(T - spec.theta0, 0.0)
    if spec.profile == "cubic_ignition":
        return _rho(spec, x) * spec.kappa * excess ** 3 * (1.0 - T)
    return spec.c_omega_p * excess ** spec.p * np.maximum(1.0 - T, 0.0)


def derivative(spec: ReactionSpec, x, z, T):
    """df/dT, used for the semi-implicit linearization of the solver sweep."""
    T = np.asarray(T, dtype=float)
    excess = np.maximum(T - spec.theta0, 0.0)
    if spec.profile == "cubic_ignition":
        return _rho(spec, x) * spec.kappa * (3.0 * excess ** 2 * (1.0 - T)
                                             - excess ** 3)
    pos = (T < 1.0).astype(float)
    return spec.c_omega_p * (spec.p * excess ** (spec.p - 1.0)
                             * np.maximum(1.0 - T, 0.0) - excess ** spec.p * pos)


def lipschitz_slope(spec: ReactionSpec, n_samples=100_001) -> float:
    """M = sup over T in (0,1) of f(T)/T, by dense sampling at the peak of rho."""
    T = np.linspace(1e-9, 1.0 - 1e-9, n_samples)
    # sin attains +1 on a dense sample of phases; the sup over x is at rho_max
    x_peak = spec.ell * np.mod((0.25 - spec.modulation_phase / (2 * np.pi)), 1.0)
    f = evaluate(spec, x_peak, 0.0, T)
    return float(np.max(f / T))
