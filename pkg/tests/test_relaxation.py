import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lerspin.core import CouplingDistribution, FrequencyDistribution, ResonatorSpec, SpinEnsembleSpec
from lerspin.fitlib import FitError
from lerspin.relaxation import (
    decay_cells,
    ensemble_decay_trace,
    infer_gmax,
    purcell_rate,
    stretched_exponential,
)

RES = ResonatorSpec(1.787e9, 25e3, 25e3)


@settings(max_examples=50)
@given(st.floats(0.0, 1e5), st.floats(-3e8, 3e8).filter(lambda d: abs(d) > 1.0))
def test_purcell_rate_never_below_intrinsic(g, det):
    r = purcell_rate(g, RES.f_r0, RES.f_r0 + det, RES.kappa, 100.0)
    assert r >= 1.0 / 100.0


def test_purcell_rate_on_resonance_is_four_g2_over_kappa():
    g = 1e3
    r = purcell_rate(g, RES.f_r0, RES.f_r0, RES.kappa, 1e30)
    assert r == pytest.approx(4 * (2 * np.pi * g) ** 2 / (2 * np.pi * RES.kappa), rel=1e-12)


def test_purcell_rate_validation():
    with pytest.raises(ValueError):
        purcell_rate(1.0, 0.0, 1e9, 1e3, 1.0)
    with pytest.raises(ValueError):
        purcell_rate(1.0, 1e9, 1e9, 0.0, 1.0)
    with pytest.raises(ValueError):
        purcell_rate(1.0, 1e9, 1e9, 1e3, -1.0)


def test_stretched_exponential_values():
    assert stretched_exponential(0.0, 2.0, 1.0, 0.5) == 2.0
    assert stretched_exponential(4.0, 1.0, 1.0, 0.5) == pytest.approx(math.exp(-2.0))
    with pytest.raises(ValueError):
        stretched_exponential(1.0, 1.0, 1.0, 1.5)


def test_single_cell_decays_exponentially():
    ens = SpinEnsembleSpec(1e10, t1=10.0)
    t = np.linspace(0, 50, 11)
    tr = ensemble_decay_trace(RES, ens, None, 50e6, t, n_disc=1, n_coup=1, purcell=False)
    np.testing.assert_allclose(tr.shift, np.exp(-t / 10.0), rtol=1e-14)


def test_distributed_trace_is_normalized_and_monotone():
    ens = SpinEnsembleSpec(1e12, FrequencyDistribution("gaussian", 10e6),
                           CouplingDistribution("powerlaw", 3.0, 6.0, 100e3), t1=200.0)
    t = np.concatenate([[0.0], np.geomspace(1e-4, 1e3, 50)])
    tr = ensemble_decay_trace(RES, ens, None, 44e6, t, n_disc=41, n_coup=16)
    assert tr.shift[0] == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.diff(tr.shift) <= 1e-15)
    amp, rate = decay_cells(RES, ens, 44e6, n_disc=41, n_coup=16)
    assert amp.shape == rate.shape == (41 * 16,)
    assert np.all(rate >= 1 / 200.0)


def test_decay_trace_validation():
    ens = SpinEnsembleSpec(1e10)
    with pytest.raises(ValueError):
        ensemble_decay_trace(RES, ens, None, 50e6, [1.0, 0.5])
    with pytest.raises(ValueError):
        ensemble_decay_trace(RES, ens, None, None, [0.0, 1.0])


def test_infer_gmax_rejects_bad_input():
    ens = SpinEnsembleSpec(1e12, coupling_dist=CouplingDistribution("powerlaw", 3.0, 6.0, 1e3))
    with pytest.raises(ValueError):
        infer_gmax([], ens, RES, 1.0)
    flat = ensemble_decay_trace(RES, SpinEnsembleSpec(1e10, t1=1e12), None, 50e6, np.linspace(0, 1, 5),
                                n_disc=1, purcell=False)
    with pytest.raises(ValueError):
        infer_gmax([flat], ens, RES, 1.0)
    with pytest.raises(ValueError):
        infer_gmax([flat], SpinEnsembleSpec(1e12), RES, 1.0)


def test_infer_gmax_without_purcell_signature_fails():
    # tiny couplings: the decay is purely intrinsic and g_max is unidentifiable
    ens = SpinEnsembleSpec(1e12, FrequencyDistribution("gaussian", 1e6),
                           CouplingDistribution("powerlaw", 3.0, 0.01, 0.1), t1=5.0)
    t = np.geomspace(1e-3, 50.0, 30)
    data = [ensemble_decay_trace(RES, ens, None, 100e6, t, n_disc=11, n_coup=4)]
    with pytest.raises(FitError):
        infer_gmax(data, ens, RES, 5.0, g_max_init=0.05, n_disc=11, n_coup=4)
