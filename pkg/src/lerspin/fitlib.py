"""Nonlinear least-squares fits used across the package.

All fits go through :func:`least_squares_fit`, a thin layer over
``scipy.optimize.least_squares`` that adds multi-start, unit bookkeeping and
1-sigma uncertainties from the Jacobian at the optimum. Model fits return a
:class:`FitReport`; hard failures raise :class:`FitError`.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core import (
    EnvironmentConditions,
    FrequencyDistribution,
    HWHM_PER_SIGMA,
    ResonatorSpec,
    SpinEnsembleSpec,
    resonance_field,
)
from .relaxation import stretched_exponential
from .transmission import TransmissionMap, ensemble_collective_coupling, notch_s21, s21_at

logger = logging.getLogger(__name__)

XTOL = 1e-8
GTOL = 1e-10
MAX_ITER = 500
N_STARTS = 8
MAP_SCAN_RANGE = 4.0  # G_N scan spans g0/4 .. 4 g0
MAP_SCAN_POINTS = 121
MAP_SCAN_STARTS = 3


@dataclass
class FitReport:
    """Outcome of one fit.

    ``params`` and ``uncertainties`` share keys; units are listed in
    ``units``. ``uncertainties`` are 1-sigma values from the local curvature,
    scaled by the reduced chi-square.
    """

    params: dict[str, float]
    uncertainties: dict[str, float]
    residual_norm: float
    n_iter: int
    converged: bool
    units: dict[str, str] = field(default_factory=dict)
    message: str = ""
    warnings: list[str] = field(default_factory=list)

    def __getitem__(self, name):
        return self.params[name]

    def as_dict(self):
        return {
            "params": dict(self.params),
            "uncertainties": dict(self.uncertainties),
            "units": dict(self.units),
            "residual_norm": self.residual_norm,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "message": self.message,
            "warnings": list(self.warnings),
        }


class FitError(RuntimeError):
    """A fit that cannot produce a meaningful estimate; ``report`` carries
    the diagnostics of the last attempt (may be None)."""

    def __init__(self, message, report: FitReport | None = None):
        super().__init__(message)
        self.report = report


def _failed(names, units, message, warns=()):
    nan = {n: math.nan for n in names}
    return FitReport(nan, dict(nan), math.nan, 0, False, dict(units), message, list(warns))


def _covariance(jac, cost, n_res, n_par):
    dof = max(n_res - n_par, 1)
    s2 = 2.0 * cost / dof
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj) * s2
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj) * s2
    return cov


def least_squares_fit(residuals, p0_list, names, *, bounds=(-np.inf, np.inf), transforms=None, units=None,
                      x_scale=1.0, jac="2-point"):
    """Minimize ``sum(residuals(p)**2)`` from each start in ``p0_list``.

    Parameters
    ----------
    residuals : callable
        Maps the internal parameter vector to a residual vector.
    p0_list : sequence of array_like
        Starting points (internal parametrization); the best result wins.
    names : sequence of str
        Public parameter names, in order.
    transforms : sequence of callable, optional
        Map each internal parameter to its public value. Uncertainties are
        propagated with a numerical derivative of the transform.

    Returns
    -------
    FitReport, ndarray
        The report and the best internal parameter vector.
    """
    names = list(names)
    units = units or {}
    transforms = transforms or [None] * len(names)
    best = None
    for p0 in p0_list:
        p0 = np.asarray(p0, dtype=float)
        if isinstance(bounds, tuple) and np.ndim(bounds[0]):
            p0 = np.clip(p0, np.asarray(bounds[0]) + 1e-12, np.asarray(bounds[1]) - 1e-12)
        try:
            r = optimize.least_squares(residuals, p0, jac=jac, bounds=bounds, x_scale=x_scale,
                                       xtol=XTOL, gtol=GTOL, ftol=1e-12, max_nfev=MAX_ITER)
        except (ValueError, FloatingPointError) as exc:
            logger.debug("start %s failed: %s", p0, exc)
            continue
        if not np.isfinite(r.cost):
            continue
        if best is None or r.cost < best.cost:
            best = r
    if best is None:
        raise FitError("no start produced a finite residual")
    n_res = best.fun.size
    cov = _covariance(best.jac, best.cost, n_res, len(best.x))
    params, errs = {}, {}
    for k, name in enumerate(names):
        fn = transforms[k]
        sd = math.sqrt(cov[k, k]) if cov[k, k] >= 0 else math.inf
        if fn is None:
            params[name] = float(best.x[k])
            errs[name] = sd
        else:
            val = fn(best.x[k])
            h = 1e-6 * max(1.0, abs(best.x[k]))
            deriv = (fn(best.x[k] + h) - fn(best.x[k] - h)) / (2 * h)
            params[name] = float(val)
            errs[name] = abs(deriv) * sd
    report = FitReport(params, errs, float(np.sqrt(2.0 * best.cost)), int(best.nfev), bool(best.status > 0),
                       {n: units.get(n, "") for n in names}, str(best.message))
    report._cov = cov
    return report, best.x


def _noise_level(y):
    """Robust noise estimate from second differences."""
    y = np.asarray(y)
    if y.size < 4:
        return 0.0
    d = np.diff(y, 2)
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(6.0))


# --- resonance --------------------------------------------------------------

def fit_resonance(f, s21, *, init=None) -> FitReport:
    """Fit a notch resonance ``a*exp(i*phi)*S21_notch(f)`` to complex data.

    Returns parameters ``f_r0``, ``kappa_i``, ``kappa_c`` (Hz) plus the
    background ``amplitude`` and ``phase`` (rad).
    """
    f = np.asarray(f, dtype=float)
    z = np.asarray(s21, dtype=complex)
    names = ["f_r0", "kappa_i", "kappa_c", "amplitude", "phase"]
    units = {"f_r0": "Hz", "kappa_i": "Hz", "kappa_c": "Hz", "amplitude": "", "phase": "rad"}
    if f.size < 10:
        raise ValueError("fit_resonance needs at least 10 samples")
    init = dict(init or {})
    n_edge = max(2, f.size // 20)
    edges = np.concatenate([z[:n_edge], z[-n_edge:]])
    amp0 = init.get("amplitude", float(np.mean(np.abs(edges))))
    ph0 = init.get("phase", float(np.angle(np.mean(edges))))
    zn = z / (amp0 * np.exp(1j * ph0))
    dip = np.abs(1.0 - zn)
    noise = max(_noise_level(zn.real), _noise_level(zn.imag), 1e-15)
    if dip.max() < 8.0 * noise:
        return _failed(names, units, "no resonance above the noise level")
    k = int(np.argmax(dip))
    fr0 = init.get("f_r0", float(f[k]))
    above = f[dip >= 0.5 * dip.max()]
    kappa0 = max((above.max() - above.min()) / math.sqrt(3.0), np.min(np.diff(f)))
    kappa0 = init.get("kappa", kappa0)
    ratio = float(np.clip(np.abs(zn[k]), 0.0, 1.0))
    ki0 = init.get("kappa_i", ratio * kappa0)
    kc0 = init.get("kappa_c", max((1 - ratio) * kappa0, 1e-3 * kappa0))

    def unpack(x):
        return fr0 + x[0] * kappa0, x[1] * kappa0, x[2] * kappa0, x[3], x[4]

    def resid(x):
        fr, ki, kc, a, ph = unpack(x)
        model = a * np.exp(1j * ph) * notch_s21(f, fr, ki, kc)
        d = model - z
        return np.concatenate([d.real, d.imag])

    x0 = [0.0, ki0 / kappa0, kc0 / kappa0, amp0, ph0]
    lb = [-np.inf, 0.0, 1e-9, 0.0, -np.inf]
    ub = [np.inf, np.inf, np.inf, np.inf, np.inf]
    tf = [lambda v: fr0 + v * kappa0, lambda v: v * kappa0, lambda v: v * kappa0, None, None]
    report, _ = least_squares_fit(resid, [x0], names, bounds=(lb, ub), transforms=tf, units=units)
    kappa = report.params["kappa_i"] + report.params["kappa_c"]
    span = f.max() - f.min()
    if span < 3.0 * kappa:
        report.warnings.append("frequency span is below 3 linewidths")
        report.converged = False
    return report


# --- 2D coupled map -----------------------------------------------------------

def fit_coupled_map(tmap: TransmissionMap, fixed: ResonatorSpec, ens_init: SpinEnsembleSpec,
                    env: EnvironmentConditions | None = None, *, g_n_init=None, complex_fit=False,
                    n_boxes=101) -> FitReport:
    """Fit G_N, the line HWHM ``gamma`` and the line centre offset to a map.

    The resonator is held fixed. By default the residual is built from
    ``|S21|`` only; ``complex_fit=True`` uses real and imaginary parts.
    ``f_s_center`` is the offset (Hz) of the line mean from the nominal
    Larmor frequency ``g*mu_B*B/h``.
    """
    env = env or tmap.metadata.get("environment")
    if env is None:
        raise ValueError("environment conditions are required")
    names = ["G_N", "gamma", "f_s_center"]
    units = {"G_N": "Hz", "gamma": "Hz", "f_s_center": "Hz"}
    warns = []
    b_res = resonance_field(fixed.f_r0 - ens_init.freq_dist.center_offset, ens_init.g_factor)
    if not (tmap.b_axis.min() <= b_res <= tmap.b_axis.max()):
        warns.append("map does not cover the spin-resonator crossing; fit is poorly conditioned")
        warnings.warn(warns[-1], RuntimeWarning, stacklevel=2)
    scale = 1e6
    g0 = g_n_init if g_n_init is not None else ensemble_collective_coupling(
        ens_init, EnvironmentConditions(env.temperature, max(b_res, 1e-9)))
    gam0 = ens_init.freq_dist.hwhm if ens_init.freq_dist.shape != "delta" else 1e6
    off0 = ens_init.freq_dist.center_offset
    shape = ens_init.freq_dist.shape if ens_init.freq_dist.shape != "delta" else "gaussian"
    data = tmap.s21

    def model(x):
        dist = FrequencyDistribution.from_hwhm(max(x[1], 1e-9) * scale, shape=shape, center_offset=x[2] * scale)
        ens = SpinEnsembleSpec(ens_init.n_spins, dist, ens_init.coupling_dist, ens_init.t1, ens_init.t2,
                               ens_init.g_factor)
        rows = []
        for b in tmap.b_axis:
            if b <= 0:
                rows.append(notch_s21(tmap.f_axis, fixed.f_r0, fixed.kappa_i, fixed.kappa_c))
            else:
                rows.append(s21_at(tmap.f_axis, fixed, ens, EnvironmentConditions(env.temperature, float(b)),
                                   g_n=x[0] * scale, n_boxes=n_boxes))
        return np.array(rows)

    def resid(x):
        m = model(x)
        if complex_fit:
            d = (m - data).ravel()
            return np.concatenate([d.real, d.imag])
        return (np.abs(m) - np.abs(data)).ravel()

    # sharp polariton dips make the cost very narrow in G_N: seed from a coarse scan
    scan = np.geomspace(g0 / MAP_SCAN_RANGE, g0 * MAP_SCAN_RANGE, MAP_SCAN_POINTS) / scale
    costs = [float(np.sum(resid([g, gam0 / scale, off0 / scale]) ** 2)) for g in scan]
    best = scan[np.argsort(costs)[:MAP_SCAN_STARTS]]
    starts = [[g0 / scale, gam0 / scale, off0 / scale]] + [[g, gam0 / scale, off0 / scale] for g in best]
    lb = [0.0, 1e-6, -np.inf]
    ub = [np.inf, np.inf, np.inf]
    tf = [lambda v: v * scale] * 3
    report, _ = least_squares_fit(resid, starts, names, bounds=(lb, ub), transforms=tf, units=units)
    report.warnings.extend(warns)
    return report


# --- stretched exponential ------------------------------------------------------

def log_time_weights(t):
    """Per-sample weights proportional to the local spacing in ``ln t``,
    normalized to unit mean. Non-positive times get the first positive
    spacing."""
    t = np.asarray(t, dtype=float)
    pos = t > 0
    w = np.ones_like(t)
    if pos.sum() >= 2:
        lt = np.log(t[pos])
        g = np.gradient(lt)
        w[pos] = np.abs(g)
        w[~pos] = np.abs(g[0])
    w = np.maximum(w, 1e-12)
    return w / w.mean()


def fit_stretched_exponential(t, y, *, log_weighting=True) -> FitReport:
    """Fit ``amplitude * exp(-(t/t1_eff)**stretch)`` with stretch in (0, 1]."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    names = ["amplitude", "t1_eff", "stretch"]
    units = {"amplitude": "", "t1_eff": "s", "stretch": ""}
    if np.ptp(y) == 0:
        raise ValueError("all samples are equal; nothing to fit")
    warns = []
    tpos = t[t > 0]
    if t.size < 8 or tpos.size < 2 or tpos.max() / tpos.min() < 100:
        warns.append("fewer than 8 points or less than 2 decades in time; stretch is poorly determined")
    sw = np.sqrt(log_time_weights(t)) if log_weighting else np.ones_like(t)
    a0 = y[np.argmin(t)] if y[np.argmin(t)] != 0 else y[np.argmax(np.abs(y))]

    def resid(x):
        return sw * (stretched_exponential(t, x[0], 10.0 ** x[1], x[2]) - y)

    lo = math.log10(tpos.min()) - 1 if tpos.size else -3
    hi = math.log10(tpos.max()) + 1 if tpos.size else 3
    starts = [[a0, l, s] for l in np.linspace(lo, hi, N_STARTS // 2) for s in (1.0, 0.5)]
    tf = [None, lambda v: 10.0**v, None]
    report, _ = least_squares_fit(resid, starts, names, bounds=([-np.inf, lo - 3, 1e-3], [np.inf, hi + 3, 1.0]),
                                  transforms=tf, units=units)
    report.warnings.extend(warns)
    return report


# --- damped sine ---------------------------------------------------------------

def damped_sine(t, amplitude, omega_R, tau_R, phase=0.0, time_factor=4.0):
    """``amplitude * exp(-k t/tau_R) * sin(k*2*pi*omega_R*t + phase)``, k = ``time_factor``.

    ``omega_R`` is the Rabi frequency in Hz (Omega_R / 2 pi).
    """
    t = np.asarray(t, dtype=float)
    k = time_factor
    return amplitude * np.exp(-k * t / tau_R) * np.sin(k * 2.0 * np.pi * omega_R * t + phase)


def fit_damped_sine(t, y, *, time_factor=4.0, phase=None) -> FitReport:
    """Fit an exponentially damped oscillation.

    ``time_factor`` multiplies the time axis inside the model (4 for the
    t, 2t, t pulse train, whose total excitation time is four times the base
    duration; use 1 for a plain damped sine). Passing a number as ``phase``
    holds the phase fixed (0 for an oscillation that starts at zero); its
    reported uncertainty is then 0.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    names = ["amplitude", "omega_R", "tau_R", "phase"]
    units = {"amplitude": "", "omega_R": "Hz", "tau_R": "s", "phase": "rad"}
    if t.size < 6:
        raise ValueError("need at least 6 samples")
    if not np.any(y):
        return _failed(names, units, "zero-amplitude trace")
    k = time_factor
    dt = float(np.median(np.diff(t)))
    n_fft = 16 * int(2 ** math.ceil(math.log2(t.size)))
    spec = np.abs(np.fft.rfft(y - y.mean(), n_fft))
    freqs = np.fft.rfftfreq(n_fft, dt)
    noise = _noise_level(y)
    peak = int(np.argmax(spec[1:]) + 1)
    if spec[peak] < 3.0 * noise * math.sqrt(t.size):
        return _failed(names, units, "no oscillation above the noise level")
    f0 = freqs[peak] / k
    env = np.abs(y)
    tau0 = k * max(np.sum(env * (t - t.min())) / max(np.sum(env), 1e-300), dt)
    a0 = float(np.max(np.abs(y)))
    starts = []
    for fm in (0.7, 0.85, 1.0, 1.2):
        for tm in (0.5, 2.0):
            starts.append([a0, f0 * fm / 1e6, tau0 * tm * 1e9] + ([0.0] if phase is None else []))

    def resid(x):
        ph = x[3] if phase is None else phase
        return damped_sine(t, x[0], x[1] * 1e6, x[2] * 1e-9, ph, k) - y

    tf = [None, lambda v: v * 1e6, lambda v: v * 1e-9, None]
    n_free = 4 if phase is None else 3
    report, _ = least_squares_fit(resid, starts, names[:n_free],
                                  bounds=([-np.inf, 0.0, 1e-6, -np.inf][:n_free], np.inf),
                                  transforms=tf[:n_free], units=units)
    if phase is not None:
        report.params["phase"] = float(phase)
        report.uncertainties["phase"] = 0.0
        report.units["phase"] = "rad"
    # amplitude and phase are degenerate under (A, phi) -> (-A, phi + pi); report A >= 0
    if report.params["amplitude"] < 0:
        report.params["amplitude"] *= -1
        report.params["phase"] += math.pi
    report.params["phase"] = (report.params["phase"] + math.pi) % (2 * math.pi) - math.pi
    visible = min(t.max() - t.min(), 3.0 * report.params["tau_R"] / k) * k * report.params["omega_R"]
    if visible < 3:
        report.warnings.append(f"only {visible:.1f} oscillation periods are visible")
    if abs(report.params["amplitude"]) < 2.0 * report.uncertainties["amplitude"]:
        report.converged = False
        report.message = "oscillation amplitude not significant"
    return report


# --- Gaussian line ---------------------------------------------------------------

def gaussian_line(f, center, sigma, amplitude, offset=0.0):
    return offset + amplitude * np.exp(-0.5 * ((np.asarray(f) - center) / sigma) ** 2)


def fit_gaussian_line(f, y) -> FitReport:
    """Fit ``offset + amplitude*exp(-(f-center)**2/(2 sigma**2))``; adds the
    derived ``hwhm = sqrt(2 ln 2) * sigma``."""
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    names = ["center", "sigma", "amplitude", "offset"]
    units = {"center": "Hz", "sigma": "Hz", "amplitude": "", "offset": "", "hwhm": "Hz"}
    if f.size < 4:
        raise ValueError("need at least 4 samples")
    off0 = float(np.median(np.concatenate([y[:3], y[-3:]])))
    yy = y - off0
    k = int(np.argmax(np.abs(yy)))
    a0 = float(yy[k])
    c0 = float(f[k])
    step = float(np.median(np.diff(f)))
    half = f[np.abs(yy) >= 0.5 * abs(a0)]
    s0 = max((half.max() - half.min()) / (2 * HWHM_PER_SIGMA), step)
    fs = max(s0, step)

    def resid(x):
        return gaussian_line(f, c0 + x[0] * fs, x[1] * fs, x[2], x[3]) - y

    tf = [lambda v: c0 + v * fs, lambda v: v * fs, None, None]
    report, _ = least_squares_fit(resid, [[0.0, s0 / fs, a0, off0]], names,
                                  bounds=([-np.inf, 1e-6, -np.inf, -np.inf], np.inf), transforms=tf, units=units)
    sigma = report.params["sigma"]
    report.params["hwhm"] = HWHM_PER_SIGMA * sigma
    report.uncertainties["hwhm"] = HWHM_PER_SIGMA * report.uncertainties["sigma"]
    if f.size < 10 or np.ptp(f) < 4 * sigma:
        report.warnings.append("fewer than 10 points or span below 4 sigma")
    if sigma < 2.0 * abs(step):
        report.warnings.append("under-resolved: sigma is below two grid steps")
    return report
