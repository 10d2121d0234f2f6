"""Purcell-enhanced spin relaxation and ensemble-averaged decay traces.

A spin with coupling G detuned from the resonator relaxes at

    1/T1_eff = 1/T1 + 4 G**2 kappa w_r W / [(w_r**2 - W**2)**2 + (kappa W)**2]

(angular G, kappa, w_r, W; the result is a rate in 1/s). Far from resonance
this is G**2 kappa / Delta**2. Because the ensemble contains a broad
distribution of G, the resonator shift produced by a saturated ensemble
relaxes as a sum of exponentials, close to a stretched exponential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    EnvironmentConditions,
    ResonatorSpec,
    SpinEnsembleSpec,
    spin_center_frequency,
    to_angular,
)
from .dispersive import chi_single

DEFAULT_N_DISC = 51
DEFAULT_N_COUP = 40


def purcell_rate(g1, f_r0, f_spin, kappa, t1_intrinsic):
    """Total longitudinal relaxation rate (1/s) of a spin coupled to a resonator.

    Parameters
    ----------
    g1 : float or array_like
        Single-spin coupling (Hz).
    f_r0, f_spin : float or array_like
        Resonator and spin frequencies (Hz).
    kappa : float
        Total resonator loss rate (Hz).
    t1_intrinsic : float
        Spin-lattice relaxation time without the cavity channel (s).
    """
    if np.any(np.asarray(f_r0) <= 0) or np.any(np.asarray(f_spin) <= 0):
        raise ValueError("frequencies must be > 0")
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    if not t1_intrinsic > 0:
        raise ValueError("t1_intrinsic must be > 0")
    g = to_angular(g1)
    k = to_angular(kappa)
    wr = to_angular(f_r0)
    ws = to_angular(f_spin)
    purcell = 4.0 * g**2 * k * wr * ws / ((wr**2 - ws**2) ** 2 + (k * ws) ** 2)
    return 1.0 / t1_intrinsic + purcell


def stretched_exponential(t, amplitude, t1_eff, stretch):
    """``amplitude * exp(-(t/t1_eff)**stretch)`` for ``0 < stretch <= 1``."""
    if not (0 < stretch <= 1):
        raise ValueError("stretch must lie in (0, 1]")
    if not t1_eff > 0:
        raise ValueError("t1_eff must be > 0")
    t = np.asarray(t, dtype=float)
    return amplitude * np.exp(-((np.maximum(t, 0.0) / t1_eff) ** stretch))


@dataclass
class DecayTrace:
    """Normalized resonator shift after saturating the ensemble.

    ``shift[k]`` is the shift at ``t_axis[k]`` divided by its value at
    ``t = 0``; ``detuning_avg`` is the mean spin-resonator detuning (Hz).
    """

    t_axis: np.ndarray
    shift: np.ndarray
    detuning_avg: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_axis = np.asarray(self.t_axis, dtype=float)
        self.shift = np.asarray(self.shift, dtype=float)
        if self.t_axis.shape != self.shift.shape:
            raise ValueError("t_axis and shift lengths differ")


def decay_cells(res: ResonatorSpec, ens: SpinEnsembleSpec, delta_avg: float, *, n_disc=DEFAULT_N_DISC,
                n_coup=DEFAULT_N_COUP, purcell=True):
    """Per-cell shift weights and relaxation rates on the (box x bin) grid.

    Returns
    -------
    amp, rate : ndarray
        ``weight * chi`` (Hz) and the total relaxation rate (1/s) of each cell.
    """
    freqs, p = ens.freq_dist.discretize(n_disc, center=res.f_r0 + delta_avg)
    g, q = ens.coupling_dist.discretize(n_coup)
    if freqs.size == 0 or g.size == 0:
        raise ValueError("empty discretization")
    if np.any(freqs <= 0):
        raise ValueError("spin frequency boxes extend below zero")
    det = freqs[:, None] - res.f_r0
    amp = p[:, None] * q[None, :] * chi_single(g[None, :], det, ens.t2)
    if purcell:
        rate = purcell_rate(g[None, :], res.f_r0, freqs[:, None], res.kappa, ens.t1)
    else:
        rate = np.full(amp.shape, 1.0 / ens.t1)
    return amp.ravel(), np.broadcast_to(rate, amp.shape).ravel()


def ensemble_decay_trace(res: ResonatorSpec, ens: SpinEnsembleSpec, env: EnvironmentConditions | None,
                         delta_avg: float | None, t_grid, *, n_disc=DEFAULT_N_DISC, n_coup=DEFAULT_N_COUP,
                         purcell=True) -> DecayTrace:
    """Normalized shift recovery of an ensemble saturated at ``t = 0``.

    Each cell contributes ``weight * chi(G_J, Delta_I) * exp(-rate * t)``;
    the sum is divided by its ``t = 0`` value so the initial polarization
    drops out. ``delta_avg`` (Hz) places the mean of the spin line relative
    to the resonator; if None it follows from the field in ``env``.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be non-negative and strictly increasing")
    if delta_avg is None:
        if env is None:
            raise ValueError("need delta_avg or environment conditions")
        delta_avg = spin_center_frequency(ens, env) - res.f_r0
    amp, rate = decay_cells(res, ens, delta_avg, n_disc=n_disc, n_coup=n_coup, purcell=purcell)
    total = amp.sum()
    if total == 0:
        raise ValueError("the ensemble produces no shift; the trace cannot be normalized")
    order = np.argsort(rate)  # fixed summation order for reproducibility
    shift = np.exp(-np.outer(t, rate[order])) @ amp[order] / total
    meta = {"resonator": res, "ensemble": ens, "environment": env, "n_disc": n_disc, "n_coup": n_coup,
            "purcell": purcell}
    return DecayTrace(t, shift, float(delta_avg), meta)


def _with_gmax(ens: SpinEnsembleSpec, g_max: float) -> SpinEnsembleSpec:
    return replace(ens, coupling_dist=replace(ens.coupling_dist, g_max=g_max))


def infer_gmax(traces, ens_template: SpinEnsembleSpec, res: ResonatorSpec, known_t1: float, *,
               g_max_init=10e3, n_disc=DEFAULT_N_DISC, n_coup=DEFAULT_N_COUP, log_weighting=True,
               min_signal=1e-3):
    """Fit the upper cutoff of a power-law coupling distribution to decay data.

    All traces (one per mean detuning) are fitted simultaneously with
    ``g_max`` as the only free parameter; everything else comes from
    ``ens_template`` with ``t1 = known_t1``.

    Returns
    -------
    g_max : float
        Best estimate (Hz).
    report : FitReport
        Includes ``g_max`` plus ``g_max_ci_low`` / ``g_max_ci_high``, a 95%
        interval from the curvature in log(g_max).

    Raises
    ------
    ValueError
        Empty or flat input traces.
    FitError
        The fit failed to converge, or the best model deviates from pure
        intrinsic relaxation by less than ``min_signal`` (normalized units)
        everywhere, so the data carry no Purcell signature to fit.
    """
    from .fitlib import FitError, least_squares_fit, log_time_weights

    traces = list(traces)
    if not traces:
        raise ValueError("need at least one decay trace")
    if all(np.ptp(tr.shift) < 1e-9 for tr in traces):
        raise ValueError("all traces are flat; g_max is not identifiable")
    cd = ens_template.coupling_dist
    if cd.shape != "powerlaw":
        raise ValueError("infer_gmax needs a power-law coupling distribution template")
    base = replace(ens_template, t1=known_t1)
    weights = [np.sqrt(log_time_weights(tr.t_axis)) if log_weighting else np.ones_like(tr.t_axis)
               for tr in traces]
    lo = math.log10(cd.g_min) + 1e-6
    hi = math.log10(res.f_r0 / 10.0)

    def resid(x):
        ens = _with_gmax(base, 10.0 ** x[0])
        out = []
        for tr, w in zip(traces, weights):
            model = ensemble_decay_trace(res, ens, None, tr.detuning_avg, tr.t_axis, n_disc=n_disc,
                                         n_coup=n_coup).shift
            out.append(w * (model - tr.shift))
        return np.concatenate(out)

    x0 = float(np.clip(math.log10(g_max_init), lo, hi))
    report, x = least_squares_fit(resid, [[x0]], ["log10_g_max"], bounds=([lo], [hi]))
    g_max = 10.0 ** x[0]
    sd = report.uncertainties["log10_g_max"]
    report.params = {"g_max": g_max, "g_max_ci_low": 10.0 ** (x[0] - 1.96 * sd),
                     "g_max_ci_high": 10.0 ** (x[0] + 1.96 * sd)}
    dg = g_max * math.log(10.0) * sd
    report.uncertainties = {"g_max": dg, "g_max_ci_low": dg, "g_max_ci_high": dg}
    report.units = {k: "Hz" for k in report.params}
    # size of the Purcell signature: best model against pure 1/T1 decay
    best = _with_gmax(base, g_max)
    signal = max(np.max(np.abs(ensemble_decay_trace(res, best, None, tr.detuning_avg, tr.t_axis, n_disc=n_disc,
                                                    n_coup=n_coup).shift - np.exp(-tr.t_axis / known_t1)))
                 for tr in traces)
    at_bound = x[0] - lo < 1e-3 or hi - x[0] < 1e-3
    if signal < min_signal or at_bound or not np.isfinite(sd):
        report.converged = False
        report.message = (f"g_max is not identifiable (Purcell signature {signal:.3g}, residual norm "
                          f"{report.residual_norm:.3g}, at bound: {at_bound})")
        raise FitError(report.message, report)
    if not report.converged:
        raise FitError(f"fit did not converge: {report.message} (residual norm {report.residual_norm:.3g})",
                       report)
    return g_max, report
