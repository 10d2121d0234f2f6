"""Dispersive resonator pull of a polarized spin ensemble.

Each spin ``j`` shifts the resonator by ``chi_j * <sigma_z,j>`` with

    chi_j = G_j**2 * D_j / (D_j**2 + 1/T2**2),   D_j = W_j - w_r0,

so a fully polarized ensemble (``sigma_z = -1``) above the resonator pulls
it down. ``1/T2`` is the homogeneous rate; inhomogeneity enters only through
the spread of ``D_j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    EnvironmentConditions,
    ResonatorSpec,
    SpinEnsembleSpec,
    larmor_frequency,
    polarization_at,
    to_angular,
    to_linear,
)
from .traces import TraceSet

DEFAULT_PUMP_BANDWIDTH = 20e3


@dataclass(frozen=True)
class SpinBox:
    """A slice of the ensemble: frequency (Hz), weight, coupling (Hz), ``<sigma_z>``."""

    f_spin: float
    weight: float
    g1: float
    sz: float = -1.0

    def __post_init__(self):
        if abs(self.sz) > 1:
            raise ValueError("|sz| must be <= 1")
        if self.weight < 0:
            raise ValueError("weight must be >= 0")


def chi_single(g1, delta, t2):
    """Maximum dispersive shift (Hz) of one spin with coupling ``g1`` (Hz)
    detuned by ``delta`` (Hz) from the resonator."""
    if np.any(np.asarray(t2) <= 0):
        raise ValueError("t2 must be > 0")
    g = to_angular(g1)
    d = to_angular(delta)
    return to_linear(g**2 * d / (d**2 + (1.0 / np.asarray(t2)) ** 2))


def spin_boxes(ens: SpinEnsembleSpec, env: EnvironmentConditions, n_disc=101, n_coup=1, sz=-1.0):
    """Discretize an ensemble into (frequency box x coupling bin) SpinBoxes."""
    freqs, p = ens.freq_dist.discretize(n_disc, center=larmor_frequency(ens, env))
    g, q = ens.coupling_dist.discretize(n_coup)
    return [SpinBox(float(f), float(pi * qj), float(gj), sz) for f, pi in zip(freqs, p) for gj, qj in zip(g, q)]


def _box_arrays(boxes):
    arr = np.array([(b.f_spin, b.weight, b.g1, b.sz) for b in boxes], dtype=float)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]


def ensemble_shift(boxes, res: ResonatorSpec, ens: SpinEnsembleSpec) -> float:
    """Resonator shift (Hz) produced by the boxes' current polarizations."""
    f, w, g, sz = _box_arrays(boxes)
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"box weights sum to {w.sum()!r}, expected 1")
    return float(ens.n_spins * np.sum(w * chi_single(g, f - res.f_r0, ens.t2) * sz))


def thermal_shift_curve(res: ResonatorSpec, ens: SpinEnsembleSpec, b_field: float, t_grid, *,
                        n_disc=101, n_coup=1) -> TraceSet:
    """Resonator frequency versus temperature under thermal polarization.

    Every box gets the equilibrium polarization of the nominal Larmor
    frequency at ``b_field``, and the shift is summed box by box.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise ValueError("temperatures must be > 0")
    env0 = EnvironmentConditions(float(t_grid[0]), b_field)
    boxes = spin_boxes(ens, env0, n_disc, n_coup)
    f, w, g, _ = _box_arrays(boxes)
    chi = chi_single(g, f - res.f_r0, ens.t2)
    f_s = larmor_frequency(ens, env0)
    pol = np.array([polarization_at(f_s, t) for t in t_grid])
    shift = np.array([ens.n_spins * np.sum(w * chi * s) for s in pol])
    meta = {"resonator": res, "ensemble": ens, "b_field": b_field, "n_disc": n_disc, "n_coup": n_coup}
    return TraceSet("temperature_K", t_grid,
                    {"f_r_Hz": res.f_r0 + shift, "shift_Hz": shift, "polarization": pol}, meta)


def spectroscopy_scan(res: ResonatorSpec, ens: SpinEnsembleSpec, env: EnvironmentConditions, f_pump_grid,
                      pulse_bandwidth=DEFAULT_PUMP_BANDWIDTH, *, n_quad=16) -> TraceSet:
    """Resonator shift after saturating the spins within ``pulse_bandwidth``
    of each pump frequency.

    Addressed spins go from thermal polarization to ``sz = 0``. The slice
    integral uses Gauss-Legendre quadrature of the line density. Besides the
    raw shift the trace carries ``density_per_Hz``, the shift divided by the
    single-spin dispersive weight at the pump frequency, which recovers the
    frequency distribution itself.
    """
    if not pulse_bandwidth > 0:
        raise ValueError("pulse_bandwidth must be > 0")
    fp = np.asarray(f_pump_grid, dtype=float)
    f_s = larmor_frequency(ens, env)
    mean = f_s + ens.freq_dist.center_offset
    sz_eq = polarization_at(f_s, env.temperature)
    g2 = ens.coupling_dist.second_moment()
    scale = ens.n_spins * (0.0 - sz_eq)
    half = 0.5 * pulse_bandwidth
    if ens.freq_dist.shape == "delta":
        inside = np.abs(fp - mean) <= half
        shift = np.where(inside, scale * chi_single(np.sqrt(g2), mean - res.f_r0, ens.t2), 0.0)
    else:
        x, wq = np.polynomial.legendre.leggauss(n_quad)
        nodes = fp[:, None] + half * x[None, :]
        dens = ens.freq_dist.pdf(nodes - mean)
        chi = chi_single(np.sqrt(g2), nodes - res.f_r0, ens.t2)
        shift = scale * half * np.sum(wq[None, :] * dens * chi, axis=1)
    weight = scale * chi_single(np.sqrt(g2), fp - res.f_r0, ens.t2) * pulse_bandwidth
    with np.errstate(divide="ignore", invalid="ignore"):
        density = np.where(weight != 0, shift / weight, 0.0)
    meta = {"resonator": res, "ensemble": ens, "environment": env, "pulse_bandwidth": pulse_bandwidth}
    return TraceSet("f_pump_Hz", fp, {"shift_Hz": shift, "density_per_Hz": density}, meta)
