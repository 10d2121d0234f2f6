"""Semiclassical (mean-field) dynamics of a driven resonator and spin ensemble.

The ensemble is reduced to cells (frequency box I x coupling bin J) holding
``N_IJ = N p_I q_J`` identical spins. In the frame rotating at the pump
frequency, with ``s = <sigma^->`` and ``sz = <sigma_z>`` per cell (so
``|s|**2 <= (1 - sz**2)/4``) and ``g`` the Tavis-Cummings coupling:

    da/dt  = -i w_r' a - i sum_IJ N_IJ g_J s_IJ - i sqrt(kappa_d) alpha_in E(t)
    ds/dt  = -i W_I' s + i g_J sz a + i (G_line/2) sz E(t)
    dsz/dt = 4 g_J Im(a s*) + 2 G_line Im(E(t) s*) - gamma_par (sz - sz_target)

with ``w_r' = w_r - w_p - i kappa/2`` and ``W_I' = W_I - w_p - i/T2``.
``G_line`` is the Rabi angular frequency of the direct drive. Without drive
or losses, ``|a|**2 + sum N_IJ (1 + sz)/2`` is conserved.

``gamma_par`` is the Purcell-enhanced rate of each cell by default. With
``relaxation="literal"`` the population relaxes toward ``sz = 0``, with
``"ground"`` toward ``sz = -1``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core import EnvironmentConditions, ResonatorSpec, SpinEnsembleSpec, larmor_frequency, to_angular
from .dispersive import chi_single
from .pulses import PulseSpec
from .relaxation import purcell_rate
from .traces import TraceSet

logger = logging.getLogger(__name__)

MAX_CELLS = 100_000
DT_FRACTION = 20.0
RELAXATION_TARGETS = {"literal": 0.0, "ground": -1.0}


class DynamicsError(RuntimeError):
    """Integration failure (non-finite state or step-size underflow)."""


@dataclass
class DiscretizedEnsemble:
    """Spin ensemble on a (frequency box x coupling bin) grid.

    Cell ``k`` corresponds to box ``k // n_coup`` and bin ``k % n_coup``.
    ``line_factor`` scales the pulse amplitude per coupling bin.
    """

    f_box: np.ndarray
    p: np.ndarray
    g1: np.ndarray
    q: np.ndarray
    n_spins: float
    t1: float
    t2: float
    line_factor: np.ndarray | None = None
    a0: complex = 0j
    s0: np.ndarray | None = None
    sz0: np.ndarray | None = None

    def __post_init__(self):
        self.f_box = np.atleast_1d(np.asarray(self.f_box, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        self.g1 = np.atleast_1d(np.asarray(self.g1, dtype=float))
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if self.f_box.shape != self.p.shape or self.g1.shape != self.q.shape:
            raise ValueError("box/bin arrays and their weights must have equal lengths")
        for name, w in (("p", self.p), ("q", self.q)):
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"weights {name} must be non-negative and sum to 1")
        if self.line_factor is None:
            self.line_factor = np.ones_like(self.g1)
        self.line_factor = np.broadcast_to(np.asarray(self.line_factor, dtype=float), self.g1.shape).copy()
        m = self.n_cells
        self.s0 = np.zeros(m, dtype=complex) if self.s0 is None else np.asarray(self.s0, dtype=complex)
        self.sz0 = -np.ones(m) if self.sz0 is None else np.asarray(self.sz0, dtype=float)
        if self.s0.shape != (m,) or self.sz0.shape != (m,):
            raise ValueError("initial state arrays must have one entry per cell")
        if np.any(np.abs(self.s0) ** 2 > 0.25 * (1.0 - self.sz0**2) + 1e-12):
            raise ValueError("initial state violates the Bloch-sphere bound")

    @property
    def n_cells(self) -> int:
        return self.f_box.size * self.g1.size

    @property
    def n_equations(self) -> int:
        return 2 * self.n_cells + 1

    @property
    def cell_freq(self):
        return np.repeat(self.f_box, self.g1.size)

    @property
    def cell_g(self):
        return np.tile(self.g1, self.f_box.size)

    @property
    def cell_line(self):
        return np.tile(self.line_factor, self.f_box.size)

    @property
    def cell_count(self):
        return self.n_spins * np.outer(self.p, self.q).ravel()

    def collective_coupling(self) -> float:
        """sqrt(sum N_IJ g_J**2) (Hz)."""
        return math.sqrt(float(np.sum(self.cell_count * self.cell_g**2)))

    def with_state(self, a0=0j, s0=None, sz0=None) -> "DiscretizedEnsemble":
        return DiscretizedEnsemble(self.f_box, self.p, self.g1, self.q, self.n_spins, self.t1, self.t2,
                                   self.line_factor, a0, s0, sz0)


def discretize(ens: SpinEnsembleSpec, env: EnvironmentConditions, n_disc: int = 51, n_coup: int = 1,
               g1_line_model=None, *, max_cells=MAX_CELLS) -> DiscretizedEnsemble:
    """Reduce an ensemble to cells in the ground state.

    ``g1_line_model`` sets the per-bin drive factor: None (all ones), a
    number, an array of length ``n_coup`` or a callable of the bin couplings.
    """
    if n_disc < 1 or n_coup < 1:
        raise ValueError("n_disc and n_coup must be >= 1")
    if n_disc * n_coup > max_cells:
        raise ValueError(f"{n_disc * n_coup} cells exceed the cap of {max_cells}")
    f, p = ens.freq_dist.discretize(n_disc, center=larmor_frequency(ens, env))
    g, q = ens.coupling_dist.discretize(n_coup)
    if callable(g1_line_model):
        lf = g1_line_model(g)
    elif g1_line_model is None:
        lf = np.ones_like(g)
    else:
        lf = g1_line_model
    return DiscretizedEnsemble(f, p, g, q, ens.n_spins, ens.t1, ens.t2, lf)


@dataclass
class Trajectory:
    """Sampled solution: ``a[k]``, ``s[k, cell]``, ``sz[k, cell]`` at ``t[k]``."""

    t: np.ndarray
    a: np.ndarray
    s: np.ndarray
    sz: np.ndarray
    metadata: dict = field(default_factory=dict)

    def bloch_excess(self) -> float:
        """Largest violation of ``|s|**2 <= (1 - sz**2)/4`` (<= 0 when satisfied)."""
        return float(np.max(np.abs(self.s) ** 2 - 0.25 * (1.0 - self.sz**2)))

    def excitation(self, de: DiscretizedEnsemble):
        """``|a|**2 + sum N_IJ (1 + sz)/2`` at every sample."""
        return np.abs(self.a) ** 2 + 0.5 * (1.0 + self.sz) @ de.cell_count


class _Model:
    """Right-hand side in angular units, state packed as complex
    ``[a, s_1..s_M, sz_1..sz_M]``."""

    def __init__(self, de: DiscretizedEnsemble, res: ResonatorSpec, f_frame, rabi, alpha, kappa_drive,
                 relaxation, gamma_parallel):
        if relaxation not in RELAXATION_TARGETS:
            raise ValueError(f"relaxation must be one of {sorted(RELAXATION_TARGETS)}")
        self.m = de.n_cells
        self.wr = to_angular(res.f_r0 - f_frame) - 0.5j * to_angular(res.kappa)
        homog = 0.0 if math.isinf(de.t2) else 1.0 / de.t2
        self.ws = to_angular(de.cell_freq - f_frame) - 1j * homog
        self.g = to_angular(de.cell_g)
        self.ng = de.cell_count * self.g
        self.gl = to_angular(rabi) * de.cell_line
        self.drive_a = math.sqrt(to_angular(kappa_drive)) * alpha
        self.target = RELAXATION_TARGETS[relaxation]
        if gamma_parallel == "purcell" and res.kappa > 0:
            self.gpar = purcell_rate(de.cell_g, res.f_r0, np.maximum(de.cell_freq, 1e-300), res.kappa, de.t1)
        elif gamma_parallel in ("purcell", "t1"):
            self.gpar = np.full(self.m, 0.0 if math.isinf(de.t1) else 1.0 / de.t1)
        else:
            raise ValueError("gamma_parallel must be 'purcell' or 't1'")
        self.gpar = np.broadcast_to(self.gpar, (self.m,)).astype(float)

    def rhs(self, y, env):
        m = self.m
        a = y[0]
        s = y[1:m + 1]
        sz = y[m + 1:].real
        out = np.empty_like(y)
        out[0] = -1j * self.wr * a - 1j * np.dot(self.ng, s) - 1j * self.drive_a * env
        out[1:m + 1] = -1j * self.ws * s + 1j * sz * (self.g * a + 0.5 * self.gl * env)
        sc = np.conj(s)
        out[m + 1:] = (4.0 * self.g * (a * sc).imag + 2.0 * self.gl * (env * sc).imag
                       - self.gpar * (sz - self.target))
        return out

    def max_rate(self):
        """Fastest frame frequency or coupling rate (Hz)."""
        cands = [abs(self.wr), np.max(np.abs(self.ws)) if self.m else 0.0,
                 np.max(np.abs(self.gl)) if self.m else 0.0, math.sqrt(abs(np.dot(self.ng, self.g)))]
        return max(cands) / (2.0 * math.pi)


def _pack(a, s, sz):
    return np.concatenate([[complex(a)], np.asarray(s, dtype=complex), np.asarray(sz, dtype=float).astype(complex)])


def _rk4(fun, t0, t1, y0, dt, t_eval):
    """Fixed-step classical RK4 from t0 to t1, sampled at ``t_eval`` (which
    must fall on the step grid up to rounding)."""
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / n
    grid = t0 + h * np.arange(n + 1)
    idx = np.clip(np.rint((np.asarray(t_eval) - t0) / h).astype(int), 0, n)
    want = {int(k): [] for k in idx}
    for pos, k in enumerate(idx):
        want[int(k)].append(pos)
    out = np.empty((len(y0), len(idx)), dtype=complex)
    y = y0.copy()
    for k in range(n + 1):
        if k in want:
            for pos in want[k]:
                out[:, pos] = y
        if k == n:
            break
        t = grid[k]
        k1 = fun(t, y)
        k2 = fun(t + h / 2, y + h / 2 * k1)
        k3 = fun(t + h / 2, y + h / 2 * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return out, y


def integrate(de: DiscretizedEnsemble, res: ResonatorSpec, pulse: PulseSpec | None, t_end: float,
              dt_max: float | None = None, *, t_eval=None, method="DOP853", rtol=1e-9, atol=1e-12,
              relaxation="literal", gamma_parallel="purcell", kappa_drive=None, f_frame=None,
              envelope_override=None) -> Trajectory:
    """Integrate the equations of motion from ``t = 0`` to ``t_end``.

    Parameters
    ----------
    pulse : PulseSpec or None
        Drive; None leaves the system free (the frame then rotates at
        ``f_frame``, default the resonator frequency).
    dt_max : float, optional
        Largest step (s). Must be <= 1/(20 f_max) where f_max is the fastest
        frame frequency or coupling (Hz); defaults to that bound.
    method : str
        ``"DOP853"`` or ``"RK45"`` (adaptive, dense output) or ``"rk4"``
        (fixed step of exactly ``dt_max`` rounded to fit each segment).
    envelope_override : callable, optional
        Replaces the pulse envelope (unit peak, complex) for CW or custom drives.
    """
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    if pulse is None:
        f_frame = res.f_r0 if f_frame is None else f_frame
        rabi, alpha = 0.0, 0.0
    else:
        f_frame = pulse.f_carrier
        rabi, alpha = pulse.amplitude, pulse.cavity_drive
    kappa_drive = res.kappa_c if kappa_drive is None else kappa_drive
    model = _Model(de, res, f_frame, rabi, alpha, kappa_drive, relaxation, gamma_parallel)
    fmax = model.max_rate()
    limit = 1.0 / (DT_FRACTION * fmax) if fmax > 0 else t_end / 100.0
    if dt_max is None:
        dt_max = limit
    elif dt_max > limit * (1 + 1e-9):
        raise ValueError(f"dt_max={dt_max:.3g} s does not resolve the fastest rate {fmax:.3g} Hz "
                         f"(need <= {limit:.3g} s)")
    t_eval = np.array([t_end]) if t_eval is None else np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) < 0) or t_eval.min() < 0 or t_eval.max() > t_end * (1 + 1e-12):
        raise ValueError("t_eval must be sorted and lie within [0, t_end]")

    # piecewise-smooth drive: integrate between breakpoints
    if envelope_override is not None:
        pieces = [(0.0, t_end, envelope_override)]
    elif pulse is None:
        pieces = [(0.0, t_end, 0.0)]
    else:
        segs = pulse.segments()
        if segs is None:
            end = min(pulse.duration, t_end)
            pieces = [(0.0, end, pulse.envelope)]
        else:
            pieces = [(t0, min(t1, t_end), v) for t0, t1, v in segs if t0 < t_end]
        if t_end > pulse.duration:
            pieces.append((pulse.duration, t_end, 0.0))

    y = _pack(de.a0, de.s0, de.sz0)
    samples = np.empty((y.size, t_eval.size), dtype=complex)
    filled = np.zeros(t_eval.size, dtype=bool)
    if np.any(t_eval == 0.0):
        samples[:, t_eval == 0.0] = y[:, None]
        filled |= t_eval == 0.0
    for t0, t1, env in pieces:
        if t1 <= t0:
            continue
        if callable(env):
            def fun(t, yy, _e=env):
                return model.rhs(yy, complex(np.asarray(_e(np.array([t])))[0]))
        else:
            def fun(t, yy, _e=complex(env)):
                return model.rhs(yy, _e)
        sel = (t_eval > t0) & (t_eval <= t1) & ~filled
        if method == "rk4":
            vals, y = _rk4(fun, t0, t1, y, dt_max, t_eval[sel])
            samples[:, sel] = vals
        elif method in ("DOP853", "RK45"):
            sol = solve_ivp(fun, (t0, t1), y, method=method, max_step=dt_max, rtol=rtol, atol=atol,
                            dense_output=bool(np.any(sel)))
            if sol.status < 0:
                raise DynamicsError(f"integration failed on [{t0:.3g}, {t1:.3g}] s: {sol.message}")
            if np.any(sel):
                samples[:, sel] = sol.sol(t_eval[sel])
            y = sol.y[:, -1]
        else:
            raise ValueError(f"unknown method {method!r}")
        filled |= sel
        if not np.all(np.isfinite(y)):
            raise DynamicsError(f"non-finite state at t={t1:.3g} s")
    m = de.n_cells
    meta = {"relaxation": relaxation, "gamma_parallel": gamma_parallel, "method": method, "dt_max": dt_max,
            "f_frame": f_frame, "kappa_drive": kappa_drive, "rtol": rtol, "atol": atol}
    return Trajectory(t_eval, samples[0], samples[1:m + 1].T, samples[m + 1:].real.T, meta)


def readout_shift(de: DiscretizedEnsemble, res: ResonatorSpec, sz, sz_ref=None):
    """Resonator shift (Hz) from the change of cell polarizations relative to
    ``sz_ref`` (default: the initial state). ``sz`` may be 1D (one state) or
    2D (samples x cells)."""
    sz_ref = de.sz0 if sz_ref is None else sz_ref
    chi = chi_single(de.cell_g, de.cell_freq - res.f_r0, de.t2)
    return (np.asarray(sz) - sz_ref) @ (de.cell_count * chi)


def dressed_resonator_frequency(de: DiscretizedEnsemble, res: ResonatorSpec) -> float:
    """Resonator frequency (Hz) pulled by the ensemble in its initial state,
    i.e. the frequency a transmission measurement would report."""
    chi = chi_single(de.cell_g, de.cell_freq - res.f_r0, de.t2)
    return float(res.f_r0 + de.sz0 @ (de.cell_count * chi))


def cw_response(de: DiscretizedEnsemble, res: ResonatorSpec, f_probe, alpha=1.0, *, t_settle=None,
                kappa_drive=None, **kw):
    """Cavity amplitude per unit input ``a/alpha`` after driving the resonator
    with a constant weak tone at each probe frequency until steady state.

    The spins relax toward the ground state so that the undriven fixed point
    is the thermal one. Returns ``(a_over_alpha, s21)`` where ``s21`` is the
    transmission implied by the cavity field, ``1 - i sqrt(kappa_c)/2 * a/alpha``
    (angular kappa_c).
    """
    f_probe = np.atleast_1d(np.asarray(f_probe, dtype=float))
    kappa_drive = res.kappa_c if kappa_drive is None else kappa_drive
    if t_settle is None:
        slow = min(0.5 * to_angular(res.kappa), 1.0 / de.t2 if not math.isinf(de.t2) else math.inf)
        if not slow > 0 or math.isinf(slow):
            raise ValueError("steady state needs finite cavity or spin damping")
        t_settle = 14.0 / slow
    out = np.empty(f_probe.size, dtype=complex)
    for k, f in enumerate(f_probe):
        pulse = PulseSpec("square_single", f, 0.0, t_settle, cavity_drive=alpha)
        tr = integrate(de, res, pulse, t_settle, relaxation="ground", kappa_drive=kappa_drive,
                       t_eval=[t_settle], **kw)
        out[k] = tr.a[-1] / alpha
    s21 = 1.0 - 0.5j * math.sqrt(to_angular(res.kappa_c)) * out if kappa_drive == res.kappa_c else None
    return out, s21


def shift_trace_vs_duration(de: DiscretizedEnsemble, res: ResonatorSpec, pulse_template: PulseSpec, durations,
                            readout_delay=0.0, **kw) -> TraceSet:
    """Readout shift after pulses of each base duration.

    The shift follows from the final cell polarizations through the
    dispersive formula. Pulses whose segments all share one phase, read out
    right at the end, are served from a single trajectory sampled at every
    pulse length.
    """
    durations = np.asarray(durations, dtype=float)
    if durations.ndim != 1 or durations.size == 0 or np.any(np.diff(durations) <= 0) or durations[0] <= 0:
        raise ValueError("durations must be positive and strictly increasing")
    if readout_delay < 0:
        raise ValueError("readout_delay must be >= 0")
    segs = pulse_template.segments()
    uniform = segs is not None and all(v == segs[0][2] for *_, v in segs)
    if uniform and readout_delay == 0:
        scale = 4.0 if pulse_template.shape == "square_triple" else 1.0
        t_stop = scale * durations
        long_pulse = PulseSpec("square_single", pulse_template.f_carrier, pulse_template.amplitude,
                               float(t_stop[-1]), cavity_drive=pulse_template.cavity_drive)
        env0 = segs[0][2]
        tr = integrate(de, res, long_pulse, float(t_stop[-1]), t_eval=t_stop,
                       envelope_override=(lambda t, _v=env0: np.full(np.shape(t), _v)), **kw)
        sz = tr.sz
    else:
        sz = np.empty((durations.size, de.n_cells))
        for k, tp in enumerate(durations):
            p = pulse_template.with_duration(float(tp))
            t_end = p.duration + readout_delay
            tr = integrate(de, res, p, t_end, t_eval=[t_end], **kw)
            sz[k] = tr.sz[-1]
    shift = readout_shift(de, res, sz)
    weights = de.cell_count / de.cell_count.sum()
    meta = {"pulse": pulse_template, "resonator": res, "readout_delay": readout_delay,
            "n_disc": de.f_box.size, "n_coup": de.g1.size}
    return TraceSet("t_pump_s", durations, {"shift_Hz": shift, "sz_mean": sz @ weights}, meta)


def mirror_subtract(trace_resonant: TraceSet, trace_mirror: TraceSet, column="shift_Hz") -> TraceSet:
    """Pointwise difference of two shift traces taken on the same durations."""
    a = trace_resonant.axis_values
    b = trace_mirror.axis_values
    if a.shape != b.shape or not np.array_equal(a, b):
        raise ValueError("traces must share identical duration axes")
    diff = np.asarray(trace_resonant[column]) - np.asarray(trace_mirror[column])
    meta = {"operation": "mirror_subtract", "resonant": trace_resonant.metadata, "mirror": trace_mirror.metadata}
    return TraceSet(trace_resonant.axis_name, a, {column: diff}, meta)


@dataclass(frozen=True)
class DressedStates:
    """First-order dispersive dressing of one spin by the resonator.

    ``plus`` and ``minus`` give the amplitudes on the bare states
    ``|1, g>`` (one photon, spin down) and ``|0, e>`` (no photon, spin up).
    ``chi`` (Hz) is the dispersive shift ``g1**2/delta``; the bare
    ``|0,g> -> |1,->`` transition sits at ``f_r - chi`` and ``|1,+> -> |2,+>``
    at ``f_r + chi``.
    """

    mixing: float
    plus: dict
    minus: dict
    chi: float


def dressed_amplitudes(g1: float, delta: float) -> DressedStates:
    """Dressed single-excitation states for coupling ``g1`` and spin-resonator
    detuning ``delta`` (Hz) in the dispersive regime."""
    if delta == 0:
        raise ValueError("dispersive expansion is invalid at zero detuning")
    r = abs(g1 / delta)
    if r >= 0.1:
        warnings.warn(f"|g1/delta| = {r:.3g} >= 0.1: dispersive approximation is poor", RuntimeWarning,
                      stacklevel=2)
    if delta > 0:
        plus = {"1g": r, "0e": 1.0}
        minus = {"1g": 1.0, "0e": -r}
    else:
        plus = {"1g": 1.0, "0e": r}
        minus = {"1g": -r, "0e": 1.0}
    return DressedStates(r, plus, minus, g1**2 / delta)
