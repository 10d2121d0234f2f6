"""Why the readout shift vanishes at specific pulse lengths.

A square pump of length T placed a distance f_off from the dressed resonator
has no spectral weight there whenever f_off * T is an integer, so the
resonator is not excited and the spins stay put. This script runs the
dynamics for a 20 MHz offset and compares the minima of |shift| with the
predicted lattice of 50 ns.

    python3 demos/sinc_minima.py
"""

import numpy as np
from scipy.signal import argrelmin

from lerspin.core import CouplingDistribution, EnvironmentConditions, FrequencyDistribution, ResonatorSpec
from lerspin.core import SpinEnsembleSpec, resonance_field
from lerspin.dynamics import discretize, dressed_resonator_frequency, shift_trace_vs_duration
from lerspin.pulses import PulseSpec, pulse_spectral_weight, spectral_zero_durations

OFFSET = 20e6


def main():
    res = ResonatorSpec(2.734e9, 50e3, 200e3)
    ens = SpinEnsembleSpec(5.5e11, FrequencyDistribution("gaussian", 5e6), CouplingDistribution.single(2.7),
                           t1=200.0, t2=200e-9)
    env = EnvironmentConditions(0.01, resonance_field(res.f_r0 + 20e6))
    de = discretize(ens, env, n_disc=21)
    f_dressed = dressed_resonator_frequency(de, res)
    # pump on the far side of the resonator so it does not drive the spins directly
    pulse = PulseSpec("square_single", f_dressed - OFFSET, 0.0, 100e-9, cavity_drive=3e7)
    durations = np.arange(10e-9, 300e-9, 2e-9)
    trace = shift_trace_vs_duration(de, res, pulse, durations)
    y = np.abs(np.asarray(trace["shift_Hz"]))
    found = durations[argrelmin(y)[0]]
    expected = spectral_zero_durations(OFFSET, durations[-1])
    print(f"dressed resonator at {f_dressed / 1e9:.6f} GHz, pump offset {OFFSET / 1e6:.0f} MHz")
    print("minima of |shift| (ns):   ", np.round(found * 1e9, 1))
    print("zeros of the sinc (ns):   ", np.round(expected * 1e9, 1))
    w = [pulse_spectral_weight(pulse.with_duration(t), f_dressed) for t in expected]
    print("spectral weight at zeros: ", np.array2string(np.array(w), precision=1))


if __name__ == "__main__":
    main()
