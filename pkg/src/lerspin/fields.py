"""Quasi-static microwave field of inductor wires and single-spin couplings.

Each straight segment carries a uniform sheet current, modelled by parallel
filaments spread across its width. A finite filament from A to B gives

    B(P) = mu0 I / 4pi * (r1 x r2) (|r1| + |r2|) / (|r1||r2| (|r1||r2| + r1.r2))

with ``r1 = P - A`` and ``r2 = P - B``. The zero-point current of the mode
follows from ``(1/2) hbar w_r = (1/2) L I**2``; couplings use
``G1 = g mu_B b_perp / h`` (no spin-matrix-element factor).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CONSTANTS, CouplingDistribution, ResonatorSpec

DEFAULT_STATIC_DIR = (1.0, 0.0, 0.0)
MAX_FILAMENTS = 2048
CHUNK = 4096


@dataclass(frozen=True)
class WireSegment:
    """Straight conductor from ``start`` to ``end`` (m) with a rectangular
    cross-section ``width`` x ``thickness`` (m); the width lies in the chip
    (x, y) plane."""

    start: tuple[float, float, float]
    end: tuple[float, float, float]
    width: float
    thickness: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "end", tuple(float(v) for v in self.end))
        if len(self.start) != 3 or len(self.end) != 3:
            raise ValueError("segment endpoints need three coordinates")
        if not self.length > 0:
            raise ValueError("segment length must be > 0")
        if not self.width > 0:
            raise ValueError("segment width must be > 0")
        if self.thickness < 0:
            raise ValueError("segment thickness must be >= 0")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))

    def frame(self):
        """Unit vectors along the current and across the width."""
        l_hat = np.subtract(self.end, self.start) / self.length
        w = np.cross((0.0, 0.0, 1.0), l_hat)
        if np.linalg.norm(w) < 1e-12:
            w = np.array([1.0, 0.0, 0.0])
        return l_hat, w / np.linalg.norm(w)


@dataclass(frozen=True)
class WireGeometry:
    """Ordered segments of one inductor; ``series`` geometries must be
    connected end to start."""

    segments: tuple[WireSegment, ...]
    name: str = "wire"
    series: bool = True

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("geometry needs at least one segment")
        if self.series:
            for a, b in zip(self.segments[:-1], self.segments[1:]):
                if not np.allclose(a.end, b.start, rtol=0, atol=1e-12):
                    raise ValueError(f"segments are not connected: {a.end} != {b.start}")

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "series": self.series,
                           "segments": [{"start": list(s.start), "end": list(s.end), "width": s.width,
                                         "thickness": s.thickness} for s in self.segments]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "WireGeometry":
        data = json.loads(text)
        if isinstance(data, list):
            data = {"segments": data}
        segs = []
        for k, s in enumerate(data["segments"]):
            unknown = set(s) - {"start", "end", "width", "thickness"}
            if unknown:
                raise ValueError(f"segment {k}: unknown keys {sorted(unknown)}")
            segs.append(WireSegment(tuple(s["start"]), tuple(s["end"]), s["width"], s.get("thickness", 0.0)))
        return cls(tuple(segs), data.get("name", "wire"), data.get("series", True))


def load_geometry(path) -> WireGeometry:
    return WireGeometry.from_json(Path(path).read_text())


def save_geometry(geom: WireGeometry, path) -> None:
    Path(path).write_text(geom.to_json())


def straight_wire(length, width, thickness=0.0, name="straight"):
    """A single wire along x centred at the origin, top surface at z = 0."""
    z = -thickness / 2
    return WireGeometry((WireSegment((-length / 2, 0.0, z), (length / 2, 0.0, z), width, thickness),), name)


def constricted_wire(length, width, c_width, c_length, thickness=0.0, name="constriction"):
    """Straight wire with a narrow central section (as milled into an inductor)."""
    z = -thickness / 2
    x = (-length / 2, -c_length / 2, c_length / 2, length / 2)
    widths = (width, c_width, width)
    segs = [WireSegment((x[k], 0.0, z), (x[k + 1], 0.0, z), widths[k], thickness) for k in range(3)]
    return WireGeometry(tuple(segs), name)


def meander(n_legs, leg_length, pitch, width, thickness=0.0, name="meander"):
    """Serpentine inductor: ``n_legs`` parallel legs along x joined by
    connectors of length ``pitch`` along y."""
    z = -thickness / 2
    segs = []
    for k in range(n_legs):
        y = k * pitch
        xs = (0.0, leg_length) if k % 2 == 0 else (leg_length, 0.0)
        segs.append(WireSegment((xs[0], y, z), (xs[1], y, z), width, thickness))
        if k < n_legs - 1:
            segs.append(WireSegment((xs[1], y, z), (xs[1], y + pitch, z), width, thickness))
    return WireGeometry(tuple(segs), name)


def zero_point_current(res: ResonatorSpec, rms=False) -> float:
    """Inductor current (A) holding half a photon's energy, ``sqrt(hbar w_r / L)``;
    ``rms=True`` divides by sqrt(2)."""
    i = math.sqrt(CONSTANTS.hbar * 2.0 * math.pi * res.f_r0 / res.inductance)
    return i / math.sqrt(2.0) if rms else i


def current_ratio(l_a: float, l_b: float) -> float:
    """Zero-point current of inductor ``b`` relative to ``a`` at equal frequency,
    ``sqrt(l_a / l_b)``."""
    if not (l_a > 0 and l_b > 0):
        raise ValueError("inductances must be > 0")
    return math.sqrt(l_a / l_b)


def filament_field(a, b, points, current):
    """Field (T) of straight filaments ``a[k] -> b[k]`` at ``points`` (n, 3);
    ``current`` is per filament. Returns (n, 3)."""
    p = np.asarray(points, dtype=float)[:, None, :]
    r1 = p - np.asarray(a)[None, :, :]
    r2 = p - np.asarray(b)[None, :, :]
    n1 = np.linalg.norm(r1, axis=-1)
    n2 = np.linalg.norm(r2, axis=-1)
    cross = np.cross(r1, r2)
    den = n1 * n2 * (n1 * n2 + np.sum(r1 * r2, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(den > 0, (n1 + n2) / den, 0.0)
    return CONSTANTS.mu_0 * current / (4.0 * math.pi) * np.sum(cross * fac[..., None], axis=1)


def _inside(seg: WireSegment, pts):
    l_hat, w_hat = seg.frame()
    d = pts - np.asarray(seg.start)
    u = d @ l_hat
    v = d @ w_hat
    h = d @ np.cross(l_hat, w_hat)
    half_t = max(seg.thickness / 2, 0.0)
    return (u >= 0) & (u <= seg.length) & (np.abs(v) <= seg.width / 2) & (np.abs(h) <= half_t)


def _auto_filaments(seg: WireSegment, pts):
    l_hat, w_hat = seg.frame()
    d = pts - np.asarray(seg.start)
    h = np.abs(d @ np.cross(l_hat, w_hat))
    v = np.maximum(np.abs(d @ w_hat) - seg.width / 2, 0.0)
    dist = np.hypot(h, v)
    h_min = max(float(np.min(dist)) if dist.size else seg.width, seg.width / MAX_FILAMENTS)
    return int(np.clip(math.ceil(3.0 * seg.width / h_min), 8, MAX_FILAMENTS))


def segment_field(seg: WireSegment, points, current, n_sub=None):
    """Field (T) of one sheet-current segment at ``points`` (n, 3)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = _auto_filaments(seg, pts) if n_sub is None else int(n_sub)
    l_hat, w_hat = seg.frame()
    offs = ((np.arange(n) + 0.5) / n - 0.5) * seg.width
    a = np.asarray(seg.start)[None, :] + offs[:, None] * w_hat[None, :]
    b = np.asarray(seg.end)[None, :] + offs[:, None] * w_hat[None, :]
    out = np.empty_like(pts)
    step = max(1, CHUNK * 64 // n)
    for k in range(0, len(pts), step):
        out[k:k + step] = filament_field(a, b, pts[k:k + step], current / n)
    return out


@dataclass
class CouplingMap:
    """Field and single-spin coupling at sample points.

    ``mask`` marks points inside a conductor, where ``b``, ``b_perp`` and
    ``g1`` are NaN.
    """

    grid: np.ndarray
    b: np.ndarray
    b_perp: np.ndarray
    g1: np.ndarray
    current_used: float
    mask: np.ndarray
    metadata: dict = field(default_factory=dict)

    def as_table(self):
        """Rows ``(x, y, z, |b|, g1)``."""
        return np.column_stack([self.grid, np.linalg.norm(self.b, axis=1), self.g1])


def _perp(b, static_dir):
    n = np.asarray(static_dir, dtype=float)
    n = n / np.linalg.norm(n)
    return np.linalg.norm(b - np.outer(b @ n, n), axis=1)


def bfield_map(geom: WireGeometry, current: float, grid, *, static_dir=DEFAULT_STATIC_DIR, n_sub=None,
               g_factor=2.0) -> CouplingMap:
    """Biot-Savart field of ``geom`` carrying ``current`` (A) at ``grid`` (n, 3) points.

    Couplings are filled in with ``G1 = g mu_B b_perp / h`` for the given
    current; use :func:`coupling_map` for the zero-point normalization.
    """
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    if pts.shape[1] != 3:
        raise ValueError("grid must have shape (n, 3)")
    b = np.zeros_like(pts)
    mask = np.zeros(len(pts), dtype=bool)
    for seg in geom.segments:
        b += segment_field(seg, pts, current, n_sub)
        mask |= _inside(seg, pts)
    b[mask] = np.nan
    b_perp = _perp(b, static_dir)
    g1 = g_factor * CONSTANTS.mu_B * b_perp / CONSTANTS.h
    meta = {"geometry": geom.name, "static_dir": tuple(static_dir), "n_sub": n_sub, "g_factor": g_factor}
    return CouplingMap(pts, b, b_perp, g1, float(current), mask, meta)


def coupling_map(geom: WireGeometry, res: ResonatorSpec, grid, *, g_factor=2.0, static_dir=DEFAULT_STATIC_DIR,
                 n_sub=None, rms=True) -> CouplingMap:
    """Single-spin coupling map of the resonator mode, driven by its
    zero-point current (rms by default)."""
    current = zero_point_current(res, rms=rms)
    cmap = bfield_map(geom, current, grid, static_dir=static_dir, n_sub=n_sub, g_factor=g_factor)
    cmap.metadata.update({"inductance": res.inductance, "f_r0": res.f_r0, "rms": rms})
    return cmap


def coupling_histogram(cmap: CouplingMap, sample_region=None, n_bins: int = 40) -> CouplingDistribution:
    """Tabulated coupling distribution of spins uniformly spread over the map
    points selected by ``sample_region`` (boolean array or callable of the
    (n, 3) points; default all unmasked points). Bins are logarithmic."""
    sel = ~cmap.mask
    if sample_region is not None:
        region = sample_region(cmap.grid) if callable(sample_region) else np.asarray(sample_region, dtype=bool)
        sel &= region
    g = cmap.g1[sel]
    g = g[np.isfinite(g) & (g > 0)]
    if g.size == 0:
        raise ValueError("sample region contains no usable map points")
    if np.ptp(g) <= 1e-12 * g.max():
        return CouplingDistribution("tabulated", table=((float(g.mean()), 1.0),))
    edges = np.geomspace(g.min(), g.max() * (1 + 1e-12), n_bins + 1)
    counts, _ = np.histogram(g, edges)
    sums, _ = np.histogram(g, edges, weights=g**2)
    keep = counts > 0
    rms = np.sqrt(sums[keep] / counts[keep])
    w = counts[keep] / counts.sum()
    return CouplingDistribution("tabulated", table=tuple(zip(rms.tolist(), w.tolist())))


def histogram_tail_slope(g1, n_bins: int = 40, lo_factor=10.0, hi_factor=10.0) -> float:
    """Log-log slope of the coupling density between ``lo_factor * g_min`` and
    ``g_max / hi_factor``."""
    g = np.asarray(g1, dtype=float)
    g = g[np.isfinite(g) & (g > 0)]
    if g.size < 10:
        raise ValueError("need at least 10 couplings")
    lo, hi = lo_factor * g.min(), g.max() / hi_factor
    if not hi > lo:
        raise ValueError("coupling range is too narrow for a tail fit")
    edges = np.geomspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(g, edges)
    dens = counts / np.diff(edges)
    mid = np.sqrt(edges[1:] * edges[:-1])
    keep = counts > 0
    slope, _ = np.polyfit(np.log(mid[keep]), np.log(dens[keep]), 1, w=np.sqrt(counts[keep]))
    return float(slope)


def line_coupling(power: float, distance: float, *, impedance=50.0, g_factor=2.0) -> float:
    """Direct drive strength (Hz) of a spin at ``distance`` (m) from a thin
    feed line carrying microwave power ``power`` (W)."""
    if power < 0 or not distance > 0 or not impedance > 0:
        raise ValueError("need power >= 0, distance > 0, impedance > 0")
    i_rms = math.sqrt(power / impedance)
    b_rms = CONSTANTS.mu_0 * i_rms / (2.0 * math.pi * distance)
    return g_factor * CONSTANTS.mu_B * b_rms / CONSTANTS.h
