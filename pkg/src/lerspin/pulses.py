"""Pump pulses: envelopes in the frame of the carrier and their spectra.

Envelopes are complex baseband functions of time starting at ``t = 0``.
``square_single`` lasts ``t_pump``; ``square_triple`` concatenates
segments of ``t_pump``, ``2 t_pump`` and ``t_pump`` (each with its own phase);
``gaussian`` uses ``sigma_t = t_pump / 2`` and is truncated at +/- 4 sigma_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import CONSTANTS

SHAPES = ("square_single", "square_triple", "gaussian")
GAUSS_TRUNCATION = 4.0


@dataclass(frozen=True)
class PulseSpec:
    """One pump pulse.

    Parameters
    ----------
    shape : str
        ``square_single``, ``square_triple`` or ``gaussian``.
    f_carrier : float
        Carrier frequency (Hz); the dynamics run in the frame rotating at it.
    amplitude : float
        Peak direct spin drive expressed as the Rabi frequency of a spin with
        unit line-coupling factor (Hz).
    t_pump : float
        Base duration (s).
    sigma_t : float, optional
        Gaussian width (s); defaults to ``t_pump / 2``.
    cavity_drive : float
        Peak input amplitude ``alpha_in`` reaching the resonator, in
        sqrt(photons/s). Zero means the pulse does not drive the resonator.
    phases : tuple of float
        Segment phases (rad) of a ``square_triple`` pulse.
    """

    shape: str
    f_carrier: float
    amplitude: float
    t_pump: float
    sigma_t: float | None = None
    cavity_drive: float = 0.0
    phases: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if not self.t_pump > 0:
            raise ValueError("t_pump must be > 0")
        if not self.f_carrier > 0:
            raise ValueError("f_carrier must be > 0")
        if self.amplitude < 0 or self.cavity_drive < 0:
            raise ValueError("drive amplitudes must be >= 0")
        if self.shape == "gaussian":
            if self.sigma_t is None:
                object.__setattr__(self, "sigma_t", self.t_pump / 2.0)
            elif not self.sigma_t > 0:
                raise ValueError("sigma_t must be > 0")
        if len(self.phases) != 3:
            raise ValueError("phases needs one value per square_triple segment")
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))

    @property
    def duration(self) -> float:
        """Total length (s) of the pulse."""
        if self.shape == "square_single":
            return self.t_pump
        if self.shape == "square_triple":
            return 4.0 * self.t_pump
        return 2.0 * GAUSS_TRUNCATION * self.sigma_t

    def with_duration(self, t_pump: float) -> "PulseSpec":
        """Same pulse with a new base duration (Gaussian width follows)."""
        sigma = t_pump / 2.0 if self.shape == "gaussian" else None
        return replace(self, t_pump=t_pump, sigma_t=sigma)

    def segments(self):
        """Piecewise-constant description ``[(t_start, t_end, complex_value)]``
        of square pulses (unit peak); None for a Gaussian."""
        t = self.t_pump
        if self.shape == "square_single":
            return [(0.0, t, 1.0 + 0j)]
        if self.shape == "square_triple":
            edges = (0.0, t, 3.0 * t, 4.0 * t)
            return [(edges[k], edges[k + 1], complex(np.exp(1j * self.phases[k]))) for k in range(3)]
        return None

    def breakpoints(self):
        """Times where the envelope is not smooth (always includes 0 and the end)."""
        segs = self.segments()
        if segs is None:
            return [0.0, self.duration]
        return [s[0] for s in segs] + [segs[-1][1]]

    def envelope(self, t):
        """Unit-peak complex envelope at times ``t`` (s); zero outside the pulse."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        if self.shape == "gaussian":
            tc = GAUSS_TRUNCATION * self.sigma_t
            inside = (t >= 0) & (t <= self.duration)
            out[inside] = np.exp(-0.5 * ((t[inside] - tc) / self.sigma_t) ** 2)
            return out
        for t0, t1, v in self.segments():
            out[(t >= t0) & (t < t1)] = v
        return out

    @classmethod
    def from_power(cls, shape, f_carrier, t_pump, power, *, line_distance=None, line_impedance=50.0,
                   g_factor=2.0, cavity_coupling=True, **kw):
        """Build a pulse from the microwave power ``power`` (W) in the pump line.

        The resonator input amplitude is ``sqrt(P / (hbar w))``. When
        ``line_distance`` (m) is given the direct spin drive follows from the
        rms field of a thin line carrying ``sqrt(P/Z0)`` at that distance.
        """
        from .fields import line_coupling

        if not power >= 0:
            raise ValueError("power must be >= 0")
        alpha = math.sqrt(power / (CONSTANTS.hbar * 2.0 * math.pi * f_carrier)) if cavity_coupling else 0.0
        rabi = 0.0
        if line_distance is not None:
            rabi = line_coupling(power, line_distance, impedance=line_impedance, g_factor=g_factor)
        return cls(shape, f_carrier, rabi, t_pump, cavity_drive=alpha, **kw)


def _segment_ft(t0, t1, w):
    """Integral of exp(-i w t) over [t0, t1], vectorized over w (rad/s)."""
    w = np.asarray(w, dtype=float)
    out = np.empty(w.shape, dtype=complex)
    small = np.abs(w) * (t1 - t0) < 1e-8
    out[small] = (t1 - t0) * np.exp(-1j * w[small] * 0.5 * (t0 + t1))
    ws = w[~small]
    out[~small] = (np.exp(-1j * ws * t0) - np.exp(-1j * ws * t1)) / (1j * ws)
    return out


def envelope_spectrum(pulse: PulseSpec, f_offset):
    """Complex Fourier amplitude of the unit-peak envelope at offsets (Hz)
    from the carrier. Square pulses are exact; the Gaussian uses the
    untruncated closed form."""
    w = 2.0 * np.pi * np.asarray(f_offset, dtype=float)
    if pulse.shape == "gaussian":
        s = pulse.sigma_t
        tc = GAUSS_TRUNCATION * s
        return s * math.sqrt(2.0 * math.pi) * np.exp(-0.5 * (w * s) ** 2) * np.exp(-1j * w * tc)
    return sum(v * _segment_ft(t0, t1, w) for t0, t1, v in pulse.segments())


def pulse_spectral_weight(pulse: PulseSpec, f_eval):
    """Normalized power spectrum ``|F(f_eval - f_carrier)|**2 / |F|max**2``.

    The normalization is the squared envelope area ``(int |E| dt)**2``, which
    equals the carrier value whenever all segments share one phase.
    """
    f_off = np.asarray(f_eval, dtype=float) - pulse.f_carrier
    spec = envelope_spectrum(pulse, f_off)
    if pulse.shape == "gaussian":
        norm = pulse.sigma_t * math.sqrt(2.0 * math.pi)
    else:
        norm = sum(t1 - t0 for t0, t1, _ in pulse.segments())
    out = np.abs(spec) ** 2 / norm**2
    return float(out) if np.ndim(out) == 0 else out


def spectral_zero_durations(f_offset: float, t_max: float, shape="square_single"):
    """Base durations at which a square pulse has no spectral weight at an
    offset ``f_offset`` (Hz) from its carrier, up to ``t_max`` (s).

    A single square of length T has zeros at ``f_offset * T = m``; a
    same-phase triple pulse has total length ``4 t_pump``.
    """
    if f_offset == 0:
        return np.array([])
    scale = 4.0 if shape == "square_triple" else 1.0
    period = 1.0 / (abs(f_offset) * scale)
    m = np.arange(1, int(math.floor(t_max / period)) + 1)
    return m * period
