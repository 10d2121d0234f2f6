import math
import warnings

import numpy as np
import pytest

from lerspin.core import (
    CouplingDistribution,
    EnvironmentConditions,
    FrequencyDistribution,
    ResonatorSpec,
    SpinEnsembleSpec,
    resonance_field,
)
from lerspin.dynamics import (
    DiscretizedEnsemble,
    dressed_amplitudes,
    dressed_resonator_frequency,
    discretize,
    integrate,
    mirror_subtract,
    readout_shift,
    shift_trace_vs_duration,
)
from lerspin.pulses import PulseSpec
from lerspin.traces import TraceSet

RES = ResonatorSpec(2.0e9, 100e3, 100e3)


def _small_ensemble():
    ens = SpinEnsembleSpec(1e10, FrequencyDistribution("gaussian", 2e6), CouplingDistribution.single(10.0),
                           t1=1.0, t2=200e-9)
    env = EnvironmentConditions(0.01, resonance_field(RES.f_r0 + 20e6))
    return discretize(ens, env, n_disc=7, n_coup=1)


def test_discretize_structure_and_collective_coupling():
    de = _small_ensemble()
    assert de.n_cells == 7
    assert de.n_equations == 15
    assert de.cell_count.sum() == pytest.approx(1e10)
    assert de.collective_coupling() == pytest.approx(10.0 * math.sqrt(1e10))
    np.testing.assert_array_equal(de.sz0, -1.0)
    with pytest.raises(ValueError):
        discretize(SpinEnsembleSpec(1.0), EnvironmentConditions(0.01, 0.07), n_disc=0)
    with pytest.raises(ValueError):
        discretize(SpinEnsembleSpec(1.0), EnvironmentConditions(0.01, 0.07), n_disc=100, max_cells=10)


def test_state_validation():
    with pytest.raises(ValueError):
        DiscretizedEnsemble([1e9], [0.5], [1.0], [1.0], 1.0, 1.0, 1e-7)
    with pytest.raises(ValueError):
        DiscretizedEnsemble([1e9], [1.0], [1.0], [1.0], 1.0, 1.0, 1e-7, s0=[0.6], sz0=[0.0])
    with pytest.raises(ValueError):
        DiscretizedEnsemble([1e9], [1.0], [1.0], [1.0], 1.0, 1.0, 1e-7, sz0=[0.0, 0.0])


def test_driven_evolution_stays_inside_bloch_sphere():
    de = _small_ensemble()
    p = PulseSpec("square_single", RES.f_r0 + 20e6, 5e6, 300e-9)
    tr = integrate(de, RES, p, 500e-9, t_eval=np.linspace(0, 500e-9, 51))
    assert tr.bloch_excess() <= 1e-9
    assert np.all(np.abs(tr.sz) <= 1 + 1e-9)
    assert np.max(tr.sz) > -0.9


def test_integrate_validation():
    de = _small_ensemble()
    with pytest.raises(ValueError):
        integrate(de, RES, None, 0.0)
    with pytest.raises(ValueError):
        integrate(de, RES, None, 1e-6, dt_max=1e-3)
    with pytest.raises(ValueError):
        integrate(de, RES, None, 1e-6, t_eval=[2e-6])
    with pytest.raises(ValueError):
        integrate(de, RES, None, 1e-6, method="euler")


def test_rk4_and_adaptive_agree():
    de = _small_ensemble()
    p = PulseSpec("square_single", RES.f_r0 + 20e6, 3e6, 200e-9)
    t = np.linspace(0, 200e-9, 5)
    a = integrate(de, RES, p, 200e-9, t_eval=t)
    b = integrate(de, RES, p, 200e-9, t_eval=t, method="rk4", dt_max=0.1e-9)
    np.testing.assert_allclose(a.sz, b.sz, atol=1e-7)


def test_readout_shift_of_saturated_ensemble():
    de = _small_ensemble()
    f0 = dressed_resonator_frequency(de, RES)
    # saturation removes the ground-state pull entirely
    sat = readout_shift(de, RES, np.zeros(de.n_cells))
    assert sat == pytest.approx(RES.f_r0 - f0, abs=1e-6)


def test_shift_trace_uniform_shortcut_matches_per_duration_runs():
    de = _small_ensemble()
    p = PulseSpec("square_single", RES.f_r0 + 20e6, 3e6, 50e-9)
    d = np.array([50e-9, 100e-9, 150e-9])
    fast = shift_trace_vs_duration(de, RES, p, d)
    slow = shift_trace_vs_duration(de, RES, p, d, readout_delay=1e-15)
    np.testing.assert_allclose(fast["shift_Hz"], slow["shift_Hz"], rtol=1e-5, atol=1e-6 * np.ptp(fast["shift_Hz"]))
    with pytest.raises(ValueError):
        shift_trace_vs_duration(de, RES, p, d[::-1])


def test_mirror_subtract():
    a = TraceSet("t", [1.0, 2.0], {"shift_Hz": [3.0, 5.0]})
    b = TraceSet("t", [1.0, 2.0], {"shift_Hz": [1.0, 1.0]})
    np.testing.assert_array_equal(mirror_subtract(a, b)["shift_Hz"], [2.0, 4.0])
    with pytest.raises(ValueError):
        mirror_subtract(a, TraceSet("t", [1.0, 3.0], {"shift_Hz": [1.0, 1.0]}))


def test_dressed_amplitudes():
    d = dressed_amplitudes(10.0, 1e6)
    assert d.chi == pytest.approx(1e-4)
    assert d.plus["1g"] == pytest.approx(1e-5)
    with pytest.raises(ValueError):
        dressed_amplitudes(1.0, 0.0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        dressed_amplitudes(1.0, 2.0)
    assert any(issubclass(x.category, RuntimeWarning) for x in w)
