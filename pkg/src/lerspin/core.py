"""Physical constants, parameter containers and the basic spin formulas.

Every public quantity in the package is expressed in linear units: Hz for
frequencies and rates, T for fields, s for times, K for temperatures.
Angular frequencies only appear inside the equation kernels, via
:func:`to_angular` / :func:`to_linear`.

The spin species is always S = 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import constants as _sc
from scipy import stats

__all__ = [
    "PhysicalConstants",
    "CONSTANTS",
    "to_angular",
    "to_linear",
    "ResonatorSpec",
    "FrequencyDistribution",
    "CouplingDistribution",
    "SpinEnsembleSpec",
    "EnvironmentConditions",
    "larmor_frequency",
    "resonance_field",
    "spin_center_frequency",
    "polarization_at",
    "thermal_polarization",
    "effective_spin_count",
    "collective_coupling",
    "HWHM_PER_SIGMA",
]

HWHM_PER_SIGMA = math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA values (SI) used throughout the package."""

    h: float = _sc.h
    hbar: float = _sc.hbar
    mu_B: float = _sc.physical_constants["Bohr magneton"][0]
    k_B: float = _sc.k
    mu_0: float = _sc.mu_0

    def __post_init__(self):
        for name in ("h", "hbar", "mu_B", "k_B", "mu_0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"constant {name} must be positive")


CONSTANTS = PhysicalConstants()


def to_angular(f):
    """Linear frequency (Hz) to angular frequency (rad/s)."""
    return 2.0 * np.pi * (np.asarray(f, dtype=float) if np.ndim(f) else f)


def to_linear(w):
    """Angular frequency (rad/s) to linear frequency (Hz)."""
    return (np.asarray(w, dtype=float) if np.ndim(w) else w) / (2.0 * np.pi)


@dataclass(frozen=True)
class ResonatorSpec:
    """One lumped-element resonator mode.

    Parameters
    ----------
    f_r0 : float
        Bare resonance frequency (Hz).
    kappa_i, kappa_c : float
        Internal and readout-line loss rates (Hz).
    inductance : float
        Total inductance (H).
    """

    f_r0: float
    kappa_i: float
    kappa_c: float
    inductance: float = 1e-9

    def __post_init__(self):
        if not self.f_r0 > 0:
            raise ValueError("f_r0 must be > 0")
        if self.kappa_i < 0:
            raise ValueError("kappa_i must be >= 0")
        if self.kappa_c < 0:
            raise ValueError("kappa_c must be >= 0")
        if not self.inductance > 0:
            raise ValueError("inductance must be > 0")

    @property
    def kappa(self) -> float:
        return self.kappa_i + self.kappa_c

    @property
    def q_internal(self) -> float:
        return self.f_r0 / self.kappa_i if self.kappa_i > 0 else math.inf

    @property
    def q_loaded(self) -> float:
        return self.f_r0 / self.kappa if self.kappa > 0 else math.inf


@dataclass(frozen=True)
class FrequencyDistribution:
    """Inhomogeneous distribution of spin transition frequencies.

    For ``shape="gaussian"`` ``sigma`` is the standard deviation; for
    ``shape="lorentzian"`` it is the half width at half maximum (a Lorentzian
    has no finite variance). ``center_offset`` shifts the mean away from the
    nominal Larmor frequency.
    """

    shape: Literal["gaussian", "lorentzian", "delta"] = "gaussian"
    sigma: float = 0.0
    center_offset: float = 0.0

    def __post_init__(self):
        if self.shape not in ("gaussian", "lorentzian", "delta"):
            raise ValueError(f"unknown frequency distribution shape {self.shape!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.sigma == 0 and self.shape != "delta":
            raise ValueError("sigma = 0 is only allowed for shape='delta'")

    @classmethod
    def from_hwhm(cls, hwhm: float, shape="gaussian", center_offset=0.0):
        sigma = hwhm / HWHM_PER_SIGMA if shape == "gaussian" else hwhm
        return cls(shape=shape, sigma=sigma, center_offset=center_offset)

    @property
    def hwhm(self) -> float:
        if self.shape == "gaussian":
            return HWHM_PER_SIGMA * self.sigma
        return self.sigma

    def pdf(self, x):
        """Density of the offset ``x`` from the distribution mean (1/Hz)."""
        x = np.asarray(x, dtype=float)
        if self.shape == "gaussian":
            return stats.norm.pdf(x, scale=self.sigma)
        if self.shape == "lorentzian":
            return stats.cauchy.pdf(x, scale=self.sigma)
        raise ValueError("a delta distribution has no density")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.shape == "gaussian":
            return stats.norm.cdf(x, scale=self.sigma)
        if self.shape == "lorentzian":
            return stats.cauchy.cdf(x, scale=self.sigma)
        return (x >= 0).astype(float)

    def discretize(self, n: int, center: float = 0.0, span: float = 5.0):
        """Split the distribution into ``n`` equal-width frequency boxes.

        Boxes tile ``mean +/- span*sigma``; each weight is the probability
        mass inside its box, renormalized so the weights sum to one.

        Returns
        -------
        freqs, weights : ndarray
            Box centres (Hz, absolute when ``center`` is the nominal Larmor
            frequency) and normalized weights.
        """
        mean = center + self.center_offset
        if self.shape == "delta" or n == 1:
            return np.array([mean], dtype=float), np.ones(1)
        if n < 1:
            raise ValueError("n must be >= 1")
        edges = np.linspace(-span * self.sigma, span * self.sigma, n + 1)
        mass = np.diff(self.cdf(edges))
        mids = 0.5 * (edges[1:] + edges[:-1])
        return mean + mids, mass / mass.sum()


def _power_integral(a, b, k):
    """Integral of x**k over [a, b] (vectorized over a, b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(k + 1.0) < 1e-12:
        return np.log(b / a)
    return (b ** (k + 1.0) - a ** (k + 1.0)) / (k + 1.0)


@dataclass(frozen=True)
class CouplingDistribution:
    """Distribution of single-spin couplings G1 (Hz).

    ``powerlaw`` has density proportional to ``G**-exponent`` on
    ``[g_min, g_max]``; ``delta`` puts every spin at ``g_max``;
    ``tabulated`` uses explicit ``(coupling, weight)`` pairs.
    """

    shape: Literal["powerlaw", "delta", "tabulated"] = "delta"
    exponent: float = 3.0
    g_min: float = 1.0
    g_max: float = 1.0
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.shape not in ("powerlaw", "delta", "tabulated"):
            raise ValueError(f"unknown coupling distribution shape {self.shape!r}")
        if self.shape == "tabulated":
            if not self.table:
                raise ValueError("tabulated coupling distribution needs a table")
            g = np.array([row[0] for row in self.table], dtype=float)
            w = np.array([row[1] for row in self.table], dtype=float)
            if np.any(g < 0) or np.any(w < 0) or w.sum() <= 0:
                raise ValueError("table couplings and weights must be non-negative")
            object.__setattr__(self, "table", tuple((float(a), float(b)) for a, b in self.table))
            return
        if not (0 < self.g_min <= self.g_max):
            raise ValueError("need 0 < g_min <= g_max")
        if self.shape == "powerlaw" and not self.exponent > 1:
            raise ValueError("power-law exponent must be > 1")

    @classmethod
    def single(cls, g1: float):
        return cls(shape="delta", g_min=g1, g_max=g1)

    def moment(self, k: float) -> float:
        """Exact ``E[G**k]``."""
        if self.shape == "delta":
            return self.g_max ** k
        if self.shape == "tabulated":
            g, w = self._table_arrays()
            return float(np.sum(w * g ** k))
        p = self.exponent
        return float(_power_integral(self.g_min, self.g_max, k - p) / _power_integral(self.g_min, self.g_max, -p))

    def mean(self) -> float:
        return self.moment(1.0)

    def second_moment(self) -> float:
        return self.moment(2.0)

    def _table_arrays(self):
        g = np.array([row[0] for row in self.table], dtype=float)
        w = np.array([row[1] for row in self.table], dtype=float)
        return g, w / w.sum()

    def discretize(self, n: int):
        """Logarithmic coupling bins with probability-mass weights.

        The representative coupling of each bin is its rms value, so the
        weighted sum of ``G**2`` (which is what every observable depends on)
        equals the exact second moment.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.shape == "delta":
            return np.array([self.g_max]), np.ones(1)
        if self.shape == "tabulated":
            g, w = self._table_arrays()
            if len(g) <= n:
                return g, w
            edges = np.geomspace(g[g > 0].min(), g.max() * (1 + 1e-12), n + 1)
            idx = np.clip(np.searchsorted(edges, g, side="right") - 1, 0, n - 1)
            q = np.bincount(idx, weights=w, minlength=n)
            g2 = np.bincount(idx, weights=w * g**2, minlength=n)
            keep = q > 0
            return np.sqrt(g2[keep] / q[keep]), q[keep]
        if n == 1 or self.g_min == self.g_max:
            return np.array([math.sqrt(self.second_moment())]), np.ones(1)
        p = self.exponent
        edges = np.geomspace(self.g_min, self.g_max, n + 1)
        mass = _power_integral(edges[:-1], edges[1:], -p)
        g2 = _power_integral(edges[:-1], edges[1:], 2.0 - p)
        return np.sqrt(g2 / mass), mass / mass.sum()


@dataclass(frozen=True)
class SpinEnsembleSpec:
    """An ensemble of S = 1/2 spins coupled to a resonator."""

    n_spins: float
    freq_dist: FrequencyDistribution = field(default_factory=lambda: FrequencyDistribution("delta"))
    coupling_dist: CouplingDistribution = field(default_factory=lambda: CouplingDistribution.single(1.0))
    t1: float = 1.0
    t2: float = 200e-9
    g_factor: float = 2.00

    def __post_init__(self):
        if not self.n_spins > 0:
            raise ValueError("n_spins must be > 0")
        if not self.t1 > 0 or not self.t2 > 0:
            raise ValueError("t1 and t2 must be > 0")
        if self.t2 > 2 * self.t1:
            raise ValueError("t2 cannot exceed 2*t1")
        if not self.g_factor > 0:
            raise ValueError("g_factor must be > 0")


@dataclass(frozen=True)
class EnvironmentConditions:
    temperature: float
    b_field: float

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.b_field < 0:
            raise ValueError("b_field must be >= 0")


def larmor_frequency(spec: SpinEnsembleSpec, env: EnvironmentConditions, constants=CONSTANTS) -> float:
    """Nominal spin transition frequency g*mu_B*B/h (Hz)."""
    return spec.g_factor * constants.mu_B * env.b_field / constants.h


def resonance_field(f_spin: float, g_factor: float = 2.0, constants=CONSTANTS) -> float:
    """Static field (T) that brings the spin transition to ``f_spin``."""
    return f_spin * constants.h / (g_factor * constants.mu_B)


def spin_center_frequency(spec: SpinEnsembleSpec, env: EnvironmentConditions) -> float:
    """Mean of the spin frequency distribution at the current field."""
    return larmor_frequency(spec, env) + spec.freq_dist.center_offset


def polarization_at(f_spin, temperature, constants=CONSTANTS):
    """Equilibrium ``<sigma_z>`` of a spin-1/2 with splitting ``f_spin``."""
    x = constants.h * np.asarray(f_spin, dtype=float) / (2.0 * constants.k_B * np.asarray(temperature, dtype=float))
    out = -np.tanh(x)
    return float(out) if out.ndim == 0 else out


def thermal_polarization(spec: SpinEnsembleSpec, env: EnvironmentConditions) -> float:
    """Equilibrium ``<sigma_z>`` in [-1, 0] at the nominal Larmor frequency."""
    return polarization_at(larmor_frequency(spec, env), env.temperature)


def effective_spin_count(spec: SpinEnsembleSpec, env: EnvironmentConditions) -> float:
    """Population difference N*tanh(h f_S / 2 k_B T)."""
    return spec.n_spins * abs(thermal_polarization(spec, env))


def collective_coupling(g1_avg: float, spec: SpinEnsembleSpec, env: EnvironmentConditions) -> float:
    """Collective coupling G_N = G_1 sqrt(N_eff) (Hz)."""
    if g1_avg < 0:
        raise ValueError("g1_avg must be >= 0")
    return g1_avg * math.sqrt(effective_spin_count(spec, env))
