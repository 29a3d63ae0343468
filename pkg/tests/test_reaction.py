import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsefront.errors import ConfigError
from pulsefront.reaction import ReactionSpec, evaluate, lipschitz_slope


def test_evaluate_trivials():
    spec = ReactionSpec(theta0=0.25, kappa=1.0, modulation_amplitude=0.0)
    assert evaluate(spec, 0.0, 0.0, 0.125) == 0.0
    assert evaluate(spec, 0.3, 0.0, 1.0) == 0.0
    assert evaluate(spec, 0.0, 0.0, 0.75) == pytest.approx(0.03125, abs=1e-15)


def test_sign_structure_sampled():
    spec = ReactionSpec()
    x = np.linspace(0, spec.ell, 17)[:, None]
    r = np.linspace(-0.5, 1.5, 801)[None, :]
    f = evaluate(spec, x, 0.0, r + 0 * x)
    assert np.all(f[:, r[0] <= spec.theta0] == 0.0)
    inside = (r[0] > spec.theta0 + 1e-3) & (r[0] < 1.0 - 1e-3)
    assert np.all(f[:, inside] > 0.0)
    assert np.all(f[:, r[0] >= 1.0] <= 0.0)


def test_floor_on_burning_window():
    spec = ReactionSpec()
    assert spec.c_floor > 0.0
    x = np.linspace(0, spec.ell, 33)[:, None]
    r = np.linspace(spec.r1, spec.r2, 201)[None, :]
    assert np.all(evaluate(spec, x, 0.0, r + 0 * x) >= spec.c_floor - 1e-12)


def test_periodic_in_x_exactly():
    spec = ReactionSpec(modulation_amplitude=0.7, modulation_phase=0.3)
    x = np.arange(32) / 32.0
    f0 = evaluate(spec, x, 0.0, 0.6)
    f1 = evaluate(spec, x + spec.ell, 0.0, 0.6)
    assert np.array_equal(f0, f1)


def test_smallness_pointwise_bound():
    spec = ReactionSpec(profile="smallness", p=3.0, c_omega_p=0.8)
    r = np.linspace(-0.2, 1.3, 601)
    f = evaluate(spec, 0.1, 0.0, r)
    bound = spec.c_omega_p * np.maximum(r - spec.theta0, 0.0) ** spec.p
    assert np.all(f <= bound + 1e-15)


def test_lipschitz_slope_oracle():
    assert lipschitz_slope(ReactionSpec(kappa=0.0, modulation_amplitude=0.0)) == 0.0

    spec = ReactionSpec(theta0=0.25, kappa=1.0, modulation_amplitude=0.0)
    # dense-sampling oracle, straight from the formula
    T = np.linspace(1e-9, 1 - 1e-9, 100_001)
    oracle = np.max(np.maximum(T - 0.25, 0.0) ** 3 * (1 - T) / T)
    assert lipschitz_slope(spec) == pytest.approx(oracle, rel=1e-12)

    double = ReactionSpec(theta0=0.25, kappa=2.0, modulation_amplitude=0.0)
    assert lipschitz_slope(double) == pytest.approx(2 * lipschitz_slope(spec), rel=1e-12)


def test_lipschitz_slope_includes_modulation_peak():
    flat = ReactionSpec(modulation_amplitude=0.0)
    mod = ReactionSpec(modulation_amplitude=0.5, modulation_phase=1.1)
    assert lipschitz_slope(mod) == pytest.approx(1.5 * lipschitz_slope(flat), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(T=st.floats(-0.5, 1.5), amp=st.floats(0.0, 0.9), phase=st.floats(0, 6.28),
       profile=st.sampled_from(["cubic_ignition", "smallness"]))
def test_T_minus_one_times_f_nonpositive(T, amp, phase, profile):
    spec = ReactionSpec(profile=profile, modulation_amplitude=amp,
                        modulation_phase=phase)
    x = np.linspace(0, 1, 7)
    f = evaluate(spec, x, 0.0, T)
    assert np.all((T - 1.0) * f <= 1e-15)


def test_spec_validation():
    with pytest.raises(ConfigError):
        ReactionSpec(theta0=0.5, r1=0.4)
    with pytest.raises(ConfigError):
        ReactionSpec(modulation_amplitude=1.0)
    with pytest.raises(ConfigError):
        ReactionSpec(profile="smallness", p=2.0)
    with pytest.raises(ConfigError):
        ReactionSpec(profile="kpp")
