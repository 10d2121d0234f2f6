"""Input-output transmission of a notch-coupled resonator with a spin ensemble.

The readout line is side-coupled to the resonator, so

    S21(w) = 1 - (kappa_c/2) / [i(w_r0 - w) + kappa/2 + K(w)]

with the spin response entering through the ensemble susceptibility

    K(w) = G_N**2 * sum_k p_k / [i(W_k - w) + 1/T2]

summed over frequency boxes ``W_k`` with weights ``p_k``. A Lorentzian
line is summed in closed form (a single pole whose half width is the line
HWHM plus 1/T2). All rates inside are angular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core import (
    EnvironmentConditions,
    FrequencyDistribution,
    ResonatorSpec,
    SpinEnsembleSpec,
    effective_spin_count,
    spin_center_frequency,
    to_angular,
    to_linear,
)
from .traces import TraceSet

DEFAULT_BOXES = 101


@dataclass
class TransmissionMap:
    """Complex S21 on a (field, frequency) grid; ``s21[i, j]`` is at
    ``b_axis[i]``, ``f_axis[j]``."""

    b_axis: np.ndarray
    f_axis: np.ndarray
    s21: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.b_axis = np.asarray(self.b_axis, dtype=float)
        self.f_axis = np.asarray(self.f_axis, dtype=float)
        self.s21 = np.asarray(self.s21, dtype=complex)
        if self.s21.shape != (len(self.b_axis), len(self.f_axis)):
            raise ValueError("s21 shape does not match the axes")


def ensemble_collective_coupling(ens: SpinEnsembleSpec, env: EnvironmentConditions) -> float:
    """G_N (Hz) of an ensemble, using the rms single-spin coupling."""
    return math.sqrt(effective_spin_count(ens, env) * ens.coupling_dist.second_moment())


def spin_susceptibility(f, g_n, center, freq_dist: FrequencyDistribution, t2=math.inf, n_boxes=DEFAULT_BOXES):
    """Ensemble term K(w) (rad/s, complex) at probe frequencies ``f`` (Hz)."""
    w = to_angular(np.atleast_1d(np.asarray(f, dtype=float)))
    g2 = to_angular(g_n) ** 2
    homog = 1.0 / t2 if t2 > 0 else 0.0
    if freq_dist.shape == "lorentzian":
        wc = to_angular(center + freq_dist.center_offset)
        return g2 / (1j * (wc - w) + to_angular(freq_dist.hwhm) + homog)
    freqs, weights = freq_dist.discretize(n_boxes, center=center)
    ws = to_angular(freqs)
    denom = 1j * (ws[None, :] - w[:, None]) + homog
    return g2 * np.sum(weights[None, :] / denom, axis=1)


def notch_s21(f, f_r0, kappa_i, kappa_c, spin_term=0.0):
    """Bare notch-resonator S21 with an optional additive spin term (rad/s)."""
    w = to_angular(np.asarray(f, dtype=float))
    denom = 1j * (to_angular(f_r0) - w) + 0.5 * to_angular(kappa_i + kappa_c) + spin_term
    return 1.0 - 0.5 * to_angular(kappa_c) / denom


def s21_at(f_probe, res: ResonatorSpec, ens: SpinEnsembleSpec | None = None,
           env: EnvironmentConditions | None = None, *, g_n=None, n_boxes=DEFAULT_BOXES):
    """Complex transmission at one or more probe frequencies (Hz).

    ``g_n`` overrides the collective coupling that would otherwise follow
    from the ensemble population, polarization and coupling distribution.
    """
    f = np.asarray(f_probe, dtype=float)
    if np.any(f <= 0):
        raise ValueError("probe frequency must be > 0")
    spin = 0.0
    if ens is not None:
        if env is None:
            raise ValueError("an ensemble needs environment conditions")
        if g_n is None:
            g_n = ensemble_collective_coupling(ens, env)
        center = spin_center_frequency(ens, env) - ens.freq_dist.center_offset
        spin = spin_susceptibility(f.ravel(), g_n, center, ens.freq_dist, ens.t2, n_boxes).reshape(f.shape)
    out = notch_s21(f, res.f_r0, res.kappa_i, res.kappa_c, spin)
    return complex(out) if np.ndim(out) == 0 else out


def _check_grid(grid, name):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError(f"{name} must be a non-empty 1D grid")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return grid


def transmission_map(b_grid, f_grid, res: ResonatorSpec, ens: SpinEnsembleSpec,
                     env: EnvironmentConditions, *, g_n=None, n_boxes=DEFAULT_BOXES) -> TransmissionMap:
    """S21 over a field x frequency grid; each row re-centres the spin line
    at the Larmor frequency of that field (and re-evaluates the thermal
    population unless ``g_n`` is fixed)."""
    b_grid = _check_grid(b_grid, "b_grid")
    f_grid = _check_grid(f_grid, "f_grid")
    rows = []
    for b in b_grid:
        env_b = EnvironmentConditions(env.temperature, float(b)) if b > 0 else None
        if env_b is None:
            # zero field: no Zeeman splitting, the spins cannot respond
            rows.append(notch_s21(f_grid, res.f_r0, res.kappa_i, res.kappa_c))
            continue
        rows.append(s21_at(f_grid, res, ens, env_b, g_n=g_n, n_boxes=n_boxes))
    meta = {"resonator": res, "ensemble": ens, "environment": env, "g_n": g_n, "n_boxes": n_boxes}
    return TransmissionMap(b_grid, f_grid, np.array(rows), meta)


def polariton_frequencies(res: ResonatorSpec, g_n: float, delta: float):
    """Normal-mode frequencies (Hz) of the resonator coupled to a spin mode
    detuned by ``delta``; returns ``(f_minus, f_plus)``."""
    if g_n < 0:
        raise ValueError("g_n must be >= 0")
    wr = to_angular(res.f_r0)
    m = np.array([[wr, to_angular(g_n)], [to_angular(g_n), wr + to_angular(delta)]])
    lo, hi = np.linalg.eigvalsh(m)
    return to_linear(lo), to_linear(hi)


def _min_abs_s21(res, g_n, freq_dist, t2, n_boxes):
    half = g_n + 6.0 * max(freq_dist.hwhm, res.kappa, 1.0 / t2 if t2 < math.inf else 0.0)
    f = res.f_r0 + np.linspace(-half, half, 4001)

    def mag(x):
        return np.abs(notch_s21(x, res.f_r0, res.kappa_i, res.kappa_c,
                                spin_susceptibility(x, g_n, res.f_r0, freq_dist, t2, n_boxes)))

    m = mag(f)
    k = int(np.argmin(m))
    lo, hi = f[max(k - 1, 0)], f[min(k + 1, len(f) - 1)]
    r = optimize.minimize_scalar(lambda x: float(mag(np.array([x]))[0]), bounds=(lo, hi),
                                 method="bounded", options={"xatol": 1e-6 * (hi - lo)})
    if r.fun < m[k]:
        return float(r.fun), float(r.x)
    return float(m[k]), float(f[k])


def dip_visibility_curve(res_base: ResonatorSpec, kappa_c_values, g_n: float, gamma: float, *,
                         shape="lorentzian", t2=math.inf, n_boxes=DEFAULT_BOXES) -> TraceSet:
    """Polariton dip depth ``1 - min|S21|`` at zero spin-resonator detuning
    as the readout coupling is varied.

    ``gamma`` is the HWHM of the spin line (Hz); ``shape`` selects a
    Lorentzian (closed form) or Gaussian (discretized) line.
    """
    kc = np.asarray(kappa_c_values, dtype=float)
    if np.any(kc <= 0):
        raise ValueError("kappa_c values must be > 0")
    dist = FrequencyDistribution.from_hwhm(gamma, shape=shape)
    depth = np.empty_like(kc)
    f_dip = np.empty_like(kc)
    for i, k in enumerate(kc):
        res = ResonatorSpec(res_base.f_r0, res_base.kappa_i, float(k), res_base.inductance)
        m, x = _min_abs_s21(res, g_n, dist, t2, n_boxes)
        depth[i] = 1.0 - m
        f_dip[i] = x
    meta = {"resonator": res_base, "g_n": g_n, "gamma": gamma, "shape": shape}
    return TraceSet("kappa_c_Hz", kc, {"depth": depth, "f_dip_Hz": f_dip}, meta)
