import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from lerspin.core import (
    CouplingDistribution,
    EnvironmentConditions,
    FrequencyDistribution,
    ResonatorSpec,
    SpinEnsembleSpec,
    larmor_frequency,
    polarization_at,
    resonance_field,
)
from lerspin.dispersive import (
    SpinBox,
    chi_single,
    ensemble_shift,
    spectroscopy_scan,
    spin_boxes,
    thermal_shift_curve,
)

RES = ResonatorSpec(2.0e9, 20e3, 20e3)


@settings(max_examples=50)
@given(st.floats(1.0, 1e4), st.floats(1e5, 1e8), st.floats(1e-8, 1e-5))
def test_chi_single_is_odd_in_detuning(g, d, t2):
    assert chi_single(g, -d, t2) == pytest.approx(-chi_single(g, d, t2), rel=1e-14)


def test_chi_single_large_detuning_limit():
    assert chi_single(10.0, 50e6, 1.0) == pytest.approx(100.0 / 50e6, rel=1e-12)
    with pytest.raises(ValueError):
        chi_single(1.0, 1.0, 0.0)


def test_spin_box_validation():
    with pytest.raises(ValueError):
        SpinBox(1e9, 1.0, 1.0, sz=1.5)
    with pytest.raises(ValueError):
        SpinBox(1e9, -0.1, 1.0)


def test_box_sum_converges_to_line_integral():
    ens = SpinEnsembleSpec(1e12, FrequencyDistribution("gaussian", 5e6), CouplingDistribution.single(10.0),
                           t2=200e-9)
    b = resonance_field(RES.f_r0 + 50e6)
    env = EnvironmentConditions(0.01, b)
    shift = ensemble_shift(spin_boxes(ens, env, n_disc=401), RES, ens)
    fs = larmor_frequency(ens, env)
    dens = stats.norm(fs, 5e6).pdf
    ref = integrate.quad(lambda f: dens(f) * chi_single(10.0, f - RES.f_r0, 200e-9), fs - 10 * 5e6, fs + 10 * 5e6,
                         limit=400)[0]
    assert shift == pytest.approx(-1e12 * ref, rel=2e-3)


def test_ensemble_shift_rejects_unnormalized_boxes():
    ens = SpinEnsembleSpec(1.0)
    with pytest.raises(ValueError):
        ensemble_shift([SpinBox(2.1e9, 0.5, 1.0)], RES, ens)


def test_thermal_curve_scales_with_polarization():
    ens = SpinEnsembleSpec(1e12, FrequencyDistribution("gaussian", 5e6), CouplingDistribution.single(10.0))
    b = resonance_field(RES.f_r0 + 44e6)
    t = np.array([0.01, 0.1, 0.5, 2.0])
    tr = thermal_shift_curve(RES, ens, b, t, n_disc=51)
    ratio = np.asarray(tr["shift_Hz"]) / np.asarray(tr["polarization"])
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)
    assert np.all(np.diff(np.abs(tr["shift_Hz"])) < 0)
    assert tr["polarization"][0] == pytest.approx(polarization_at(larmor_frequency(ens, EnvironmentConditions(
        0.01, b)), 0.01))
    with pytest.raises(ValueError):
        thermal_shift_curve(RES, ens, b, [0.0, 1.0])


def test_spectroscopy_recovers_line_density():
    sigma = 10e6
    ens = SpinEnsembleSpec(1e12, FrequencyDistribution("gaussian", sigma), CouplingDistribution.single(10.0))
    b = resonance_field(RES.f_r0 + 40e6)
    env = EnvironmentConditions(0.01, b)
    fs = larmor_frequency(ens, env)
    fp = fs + np.linspace(-30e6, 30e6, 61)
    tr = spectroscopy_scan(RES, ens, env, fp, pulse_bandwidth=20e3)
    dens = np.asarray(tr["density_per_Hz"])
    np.testing.assert_allclose(dens, stats.norm(fs, sigma).pdf(fp), rtol=1e-4)
    with pytest.raises(ValueError):
        spectroscopy_scan(RES, ens, env, fp, pulse_bandwidth=0.0)
