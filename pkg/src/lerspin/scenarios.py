"""Scenario execution behind ``lerspin run``.

Each runner takes a validated :class:`~lerspin.config.ScenarioConfig` and
returns the list of files it wrote. Every file embeds the config hash.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import io
from .config import ConfigError, ScenarioConfig
from .core import EnvironmentConditions, spin_center_frequency
from .traces import TraceSet


def provenance(cfg: ScenarioConfig) -> dict:
    return {"config_hash": io.config_hash(cfg.raw), "scenario": cfg.scenario, "mode": cfg.mode, "seed": cfg.seed,
            "lerspin_version": __version__, "numpy_version": np.__version__, "scipy_version": scipy.__version__}


class _Writer:
    """Collects output paths under ``output.dir`` with the configured prefix."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.meta = provenance(cfg)
        self.files: list[Path] = []

    def path(self, suffix):
        return self.cfg.output.dir / f"{self.cfg.output.prefix}{suffix}"

    def trace(self, trace: TraceSet, suffix="", plot=True, **extra):
        p = io.write_traceset(trace, self.path(f"{suffix}.csv"), {**self.meta, **extra})
        self.files.append(p)
        if plot and self.cfg.output.plot:
            self.files.append(io.emit_plot(trace, "line", self.path(f"{suffix}.svg"),
                                           title=f"{self.cfg.scenario}/{self.cfg.mode}"))
        return p

    def map(self, tmap, suffix=""):
        self.files.append(io.write_map(tmap, self.path(f"{suffix}.csv"), self.meta))
        if self.cfg.output.plot:
            self.files.append(io.emit_plot(tmap, "map", self.path(f"{suffix}.svg"),
                                           title=f"{self.cfg.scenario}/{self.cfg.mode}"))

    def rows(self, header, rows, suffix, **extra):
        self.files.append(io.write_rows(self.path(f"{suffix}.csv"), header, rows, {**self.meta, **extra}))

    def report(self, payload, suffix="_fit"):
        p = self.path(f"{suffix}.json")
        p.parent.mkdir(parents=True, exist_ok=True)
        body = {"provenance": self.meta, **io._jsonable(payload)}
        p.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        self.files.append(p)


def _g_n(params):
    g = params.get("g_n", "auto")
    if g == "auto":
        return None
    if isinstance(g, bool) or not isinstance(g, (int, float)) or not g >= 0:
        raise ConfigError("params.g_n", "expected 'auto' or a number >= 0")
    return float(g)


def _int_param(params, name, lo=1):
    v = params[name]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"params.{name}", f"expected an integer >= {lo}")
    return v


def _num_param(params, name, positive=False):
    v = params[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"params.{name}", "expected a number")
    if positive and not v > 0:
        raise ConfigError(f"params.{name}", "must be > 0")
    return float(v)


def _bool_param(params, name):
    v = params[name]
    if not isinstance(v, bool):
        raise ConfigError(f"params.{name}", "expected true or false")
    return v


# --- transmit -----------------------------------------------------------------

def run_transmit(cfg: ScenarioConfig, out: _Writer):
    from .transmission import dip_visibility_curve, ensemble_collective_coupling, s21_at, transmission_map

    p = cfg.params
    if cfg.mode == "map":
        cfg.require("resonator", "ensemble", "environment")
        tmap = transmission_map(cfg.grids["b_T"], cfg.grids["f_Hz"], cfg.resonator, cfg.ensemble,
                                cfg.environment, g_n=_g_n(p), n_boxes=_int_param(p, "n_boxes"))
        out.map(tmap)
    elif cfg.mode == "sweep":
        cfg.require("resonator")
        f = cfg.grids["f_Hz"]
        if cfg.ensemble is not None:
            cfg.require("environment")
        s21 = s21_at(f, cfg.resonator, cfg.ensemble, cfg.environment, g_n=_g_n(p), n_boxes=_int_param(p, "n_boxes"))
        out.trace(TraceSet("f_Hz", f, {"s21": np.atleast_1d(s21)}, {"resonator": cfg.resonator}))
    elif cfg.mode == "visibility":
        cfg.require("resonator")
        if p["shape"] not in ("lorentzian", "gaussian"):
            raise ConfigError("params.shape", "expected 'lorentzian' or 'gaussian'")
        tr = dip_visibility_curve(cfg.resonator, cfg.grids["kappa_c_Hz"], _num_param(p, "g_n", True),
                                  _num_param(p, "gamma", True), shape=p["shape"],
                                  n_boxes=_int_param(p, "n_boxes"))
        out.trace(tr)
    else:
        cfg.require("ensemble", "environment")
        temps = cfg.grids["temperature_K"]
        envs = [EnvironmentConditions(float(t), cfg.environment.b_field) for t in temps]
        g_n = np.array([ensemble_collective_coupling(cfg.ensemble, e) for e in envs])
        g2 = cfg.ensemble.coupling_dist.second_moment()
        out.trace(TraceSet("temperature_K", temps, {"g_n_Hz": g_n, "g_n_sq_Hz2": g_n**2, "n_eff": g_n**2 / g2},
                           {"ensemble": cfg.ensemble}))


# --- dispersive ---------------------------------------------------------------

def run_dispersive(cfg: ScenarioConfig, out: _Writer):
    from .dispersive import spectroscopy_scan, thermal_shift_curve
    from .fitlib import fit_gaussian_line

    cfg.require("resonator", "ensemble", "environment")
    p = cfg.params
    if cfg.mode == "thermal":
        tr = thermal_shift_curve(cfg.resonator, cfg.ensemble, cfg.environment.b_field, cfg.grids["temperature_K"],
                                 n_disc=_int_param(p, "n_disc"), n_coup=_int_param(p, "n_coup"))
        out.trace(tr)
        return
    tr = spectroscopy_scan(cfg.resonator, cfg.ensemble, cfg.environment, cfg.grids["f_pump_Hz"],
                           _num_param(p, "pulse_bandwidth", True), n_quad=_int_param(p, "n_quad"))
    out.trace(tr)
    if _bool_param(p, "fit"):
        rep = fit_gaussian_line(tr.axis_values, tr["density_per_Hz"])
        out.report({"model": "gaussian_line", "column": "density_per_Hz", "report": rep.as_dict()})


# --- relax --------------------------------------------------------------------

def run_relax(cfg: ScenarioConfig, out: _Writer):
    from .fitlib import fit_stretched_exponential
    from .relaxation import ensemble_decay_trace, purcell_rate

    cfg.require("resonator", "ensemble")
    p = cfg.params
    res, ens = cfg.resonator, cfg.ensemble
    n_disc, n_coup = _int_param(p, "n_disc"), _int_param(p, "n_coup")
    if cfg.mode == "decay":
        dets = p["detunings_Hz"]
        if dets == "auto":
            cfg.require("environment")
            dets = [spin_center_frequency(ens, cfg.environment) - res.f_r0]
        if not isinstance(dets, list) or not dets:
            raise ConfigError("params.detunings_Hz", "expected 'auto' or a non-empty list of numbers")
        t = cfg.grids["t_s"]
        fits, plot_cols = [], {}
        for k, d in enumerate(dets):
            d = _num_param({"detunings_Hz": d}, "detunings_Hz")
            dt = ensemble_decay_trace(res, ens, None, d, t, n_disc=n_disc, n_coup=n_coup,
                                      purcell=_bool_param(p, "purcell"))
            tr = TraceSet("t_s", t, {"shift": dt.shift}, {"detuning_avg_Hz": d})
            out.trace(tr, f"_{k}", plot=False, detuning_avg_Hz=d)
            plot_cols[f"shift_{k}"] = dt.shift
            if _bool_param(p, "fit"):
                fits.append({"detuning_avg_Hz": d, "report": fit_stretched_exponential(t, dt.shift).as_dict()})
        if cfg.output.plot:
            out.files.append(io.emit_plot(TraceSet("t_s", t, plot_cols), "line", out.path(".svg"),
                                          title="normalized shift recovery"))
        if fits:
            out.report({"model": "stretched_exponential", "fits": fits})
        return
    g1 = _num_param(p, "g1")
    dets = cfg.grids["detuning_Hz"]
    t = np.geomspace(_num_param(p, "t_min", True), _num_param(p, "t_max", True), _int_param(p, "n_t", 8))
    t1_single = 1.0 / purcell_rate(g1, res.f_r0, res.f_r0 + dets, res.kappa, ens.t1)
    t1_eff, stretch = np.empty_like(dets), np.empty_like(dets)
    for k, d in enumerate(dets):
        tr = ensemble_decay_trace(res, ens, None, float(d), t, n_disc=n_disc, n_coup=n_coup)
        rep = fit_stretched_exponential(t, tr.shift)
        t1_eff[k], stretch[k] = rep["t1_eff"], rep["stretch"]
    out.trace(TraceSet("detuning_Hz", dets, {"t1_single_s": t1_single, "t1_eff_s": t1_eff, "stretch": stretch},
                       {"g1_Hz": g1}))


# --- dynamics -----------------------------------------------------------------

def run_dynamics(cfg: ScenarioConfig, out: _Writer):
    from .dynamics import (
        DiscretizedEnsemble,
        discretize,
        dressed_resonator_frequency,
        integrate,
        mirror_subtract,
        shift_trace_vs_duration,
    )
    from .fitlib import fit_damped_sine
    from .pulses import PulseSpec

    cfg.require("resonator", "pulse")
    p = cfg.params
    res = cfg.resonator
    if cfg.mode == "rabi":
        t = cfg.grids["t_s"]
        if "f_carrier" not in cfg.pulse:
            raise ConfigError("pulse.f_carrier", "required in rabi mode (the spin sits at the carrier)")
        pulse = PulseSpec(**cfg.pulse)
        t1, t2 = (cfg.ensemble.t1, cfg.ensemble.t2) if cfg.ensemble else (math.inf, math.inf)
        # a single spin cell with zero cavity coupling
        de = DiscretizedEnsemble([pulse.f_carrier], [1.0], [0.0], [1.0], 1.0, t1, t2)
        tr = integrate(de, res, pulse, float(t[-1]), t_eval=t, method=p["method"], gamma_parallel="t1")
        sz = tr.sz[:, 0]
        out.trace(TraceSet("t_s", t, {"sz": sz, "population": 0.5 * (1.0 + sz)}))
        rep = fit_damped_sine(t, sz - sz.mean(), time_factor=1.0)
        out.report({"model": "damped_sine", "time_factor": 1.0, "report": rep.as_dict()})
        return
    cfg.require("ensemble", "environment")
    if "f_carrier" in cfg.pulse:
        raise ConfigError("pulse.f_carrier", "set from params.offset_Hz in shift_vs_duration mode; remove it")
    if p["pump"] not in ("mirror", "resonant", "difference"):
        raise ConfigError("params.pump", "expected 'mirror', 'resonant' or 'difference'")
    offset = _num_param(p, "offset_Hz", True)
    de = discretize(cfg.ensemble, cfg.environment, _int_param(p, "n_disc"), _int_param(p, "n_coup"))
    f_dressed = dressed_resonator_frequency(de, res)
    kw = dict(method=p["method"], relaxation=p["relaxation"], gamma_parallel=p["gamma_parallel"])
    durations = cfg.grids["t_pump_s"]

    def trace(sign):
        pulse = PulseSpec(**{**cfg.pulse, "f_carrier": f_dressed + sign * offset})
        return shift_trace_vs_duration(de, res, pulse, durations, **kw)

    meta = {"f_dressed_Hz": f_dressed, "offset_Hz": offset, "pump": p["pump"]}
    if p["pump"] == "mirror":
        tr = trace(-1)
    elif p["pump"] == "resonant":
        tr = trace(+1)
    else:
        res_tr, mir_tr = trace(+1), trace(-1)
        diff = mirror_subtract(res_tr, mir_tr)
        tr = TraceSet("t_pump_s", durations, {"shift_Hz": diff["shift_Hz"], "shift_resonant_Hz": res_tr["shift_Hz"],
                                              "shift_mirror_Hz": mir_tr["shift_Hz"]})
    out.trace(TraceSet(tr.axis_name, tr.axis_values, tr.columns, meta))


# --- fields -------------------------------------------------------------------

GEOMETRY_BUILDERS = {
    "straight_wire": ("length", "width", "thickness"),
    "constricted_wire": ("length", "width", "c_width", "c_length", "thickness"),
    "meander": ("n_legs", "leg_length", "pitch", "width", "thickness"),
}


def _geometry(cfg: ScenarioConfig):
    from . import fields

    g = cfg.params["geometry"]
    if isinstance(g, str):
        path = cfg.resolve(g)
        try:
            return fields.load_geometry(path)
        except FileNotFoundError:
            raise ConfigError("params.geometry", f"no such file {path}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError("params.geometry", f"{path}: {exc}") from None
    if not isinstance(g, dict) or g.get("type") not in GEOMETRY_BUILDERS:
        raise ConfigError("params.geometry", f"expected a file path or {{type: {'|'.join(GEOMETRY_BUILDERS)}, ...}}")
    args = GEOMETRY_BUILDERS[g["type"]]
    for k in g:
        if k != "type" and k not in args:
            raise ConfigError(f"params.geometry.{k}", f"unknown key (allowed: {', '.join(args)})")
    kw = {k: v for k, v in g.items() if k != "type"}
    try:
        return getattr(fields, g["type"])(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("params.geometry", str(exc)) from None


def run_fields(cfg: ScenarioConfig, out: _Writer):
    from .fields import coupling_histogram, coupling_map, histogram_tail_slope

    cfg.require("resonator")
    p = cfg.params
    geom = _geometry(cfg)
    x, y, z = np.meshgrid(cfg.grids["x_m"], cfg.grids["y_m"], cfg.grids["z_m"], indexing="ij")
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    n_sub = None if p["n_sub"] == "auto" else _int_param(p, "n_sub")
    sd = p["static_dir"]
    if not isinstance(sd, list) or len(sd) != 3 or not any(sd):
        raise ConfigError("params.static_dir", "expected a non-zero 3-vector")
    cmap = coupling_map(geom, cfg.resonator, pts, g_factor=_num_param(p, "g_factor", True), static_dir=sd,
                        n_sub=n_sub, rms=_bool_param(p, "rms"))
    keep = ~cmap.mask
    table = cmap.as_table()[keep]
    extra = {"geometry": geom.name, "current_A": cmap.current_used, "masked_points": int(cmap.mask.sum())}
    out.rows(["x_m", "y_m", "z_m", "b_T", "g1_Hz"], table, "_map", **extra)
    hist = coupling_histogram(cmap, n_bins=_int_param(p, "n_bins"))
    g, w = np.array(hist.table).T if len(hist.table) else (np.array([]), np.array([]))
    try:
        slope = histogram_tail_slope(cmap.g1[keep], n_bins=_int_param(p, "n_bins"))
    except ValueError:
        slope = None
    htr = TraceSet("g1_Hz", g, {"weight": w})
    out.trace(htr, "_hist", tail_slope=slope)


# --- fit ----------------------------------------------------------------------

def _data_paths(cfg):
    d = cfg.params["data"]
    items = d if isinstance(d, list) else [d]
    if not items or not all(isinstance(x, str) for x in items):
        raise ConfigError("params.data", "expected a path or a list of paths")
    paths = [cfg.resolve(x) for x in items]
    for x in paths:
        if not x.exists():
            raise ConfigError("params.data", f"no such file {x}")
    return paths


def _synthetic_damped_sine(cfg, rng):
    from .fitlib import damped_sine

    syn = dict(cfg.params["synthetic"])
    for k in ("amplitude", "omega_R", "tau_R", "phase", "noise"):
        syn[k] = _num_param(syn, k)
        if k in ("omega_R", "tau_R") and not syn[k] > 0:
            raise ConfigError(f"params.synthetic.{k}", "must be > 0")
    if "t_pump_s" not in cfg.grids:
        raise ConfigError("grids.t_pump_s", "required for synthetic damped_sine data")
    t = cfg.grids["t_pump_s"]
    clean = damped_sine(t, syn["amplitude"], syn["omega_R"], syn["tau_R"], syn["phase"],
                        cfg.params["time_factor"])
    if syn["noise_mode"] == "additive":
        noisy = clean + syn["noise"] * abs(syn["amplitude"]) * rng.standard_normal(t.size)
    elif syn["noise_mode"] == "proportional":
        noisy = clean * (1.0 + syn["noise"] * rng.standard_normal(t.size))
    else:
        raise ConfigError("params.synthetic.noise_mode", "expected 'additive' or 'proportional'")
    return TraceSet("t_pump_s", t, {"shift_Hz": noisy, "clean": clean})


def run_fit(cfg: ScenarioConfig, out: _Writer):
    from . import fitlib
    from .relaxation import DecayTrace, ensemble_decay_trace, infer_gmax

    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    mode = cfg.mode
    if mode == "damped_sine":
        if "synthetic" in p:
            data = _synthetic_damped_sine(cfg, rng)
            out.trace(data, "_data", plot=False)
        else:
            data = io.ingest_csv(_data_paths(cfg)[0], "shift_trace")
        phase = None if p["phase"] == "free" else _num_param(p, "phase")
        tf = _num_param(p, "time_factor", True)
        rep = fitlib.fit_damped_sine(data.axis_values, data["shift_Hz"], time_factor=tf, phase=phase)
        model = (fitlib.damped_sine(data.axis_values, rep["amplitude"], rep["omega_R"], rep["tau_R"], rep["phase"], tf)
                 if rep.converged else None)
        _fit_outputs(out, data, "shift_Hz", model, rep, "damped_sine")
    elif mode == "stretched":
        data = io.ingest_csv(_data_paths(cfg)[0], "decay")
        rep = fitlib.fit_stretched_exponential(data.axis_values, data["shift"],
                                               log_weighting=_bool_param(p, "log_weighting"))
        from .relaxation import stretched_exponential

        model = stretched_exponential(data.axis_values, rep["amplitude"], rep["t1_eff"], rep["stretch"])
        _fit_outputs(out, data, "shift", model, rep, "stretched_exponential")
    elif mode == "resonance":
        data = io.ingest_csv(_data_paths(cfg)[0], "s21_sweep")
        if not isinstance(p["init"], dict):
            raise ConfigError("params.init", "expected an object")
        rep = fitlib.fit_resonance(data.axis_values, data["s21"], init=p["init"])
        from .transmission import notch_s21

        model = rep["amplitude"] * np.exp(1j * rep["phase"]) * notch_s21(
            data.axis_values, rep["f_r0"], rep["kappa_i"], rep["kappa_c"])
        _fit_outputs(out, data, "s21", model, rep, "notch_resonance")
    elif mode == "gaussian_line":
        data = io.read_traceset(_data_paths(cfg)[0])
        col = p["column"]
        if col not in data.columns:
            raise ConfigError("params.column", f"column {col!r} not in data (have {', '.join(data.columns)})")
        rep = fitlib.fit_gaussian_line(data.axis_values, data[col])
        model = fitlib.gaussian_line(data.axis_values, rep["center"], rep["sigma"], rep["amplitude"], rep["offset"])
        _fit_outputs(out, data, col, model, rep, "gaussian_line")
    elif mode == "coupled_map":
        cfg.require("resonator", "ensemble", "environment")
        tmap = io.ingest_csv(_data_paths(cfg)[0], "s21_map")
        g0 = p["g_n_init"]
        rep = fitlib.fit_coupled_map(tmap, cfg.resonator, cfg.ensemble, cfg.environment,
                                     g_n_init=None if g0 is None else _num_param(p, "g_n_init", True),
                                     n_boxes=_int_param(p, "n_boxes"))
        out.report({"model": "coupled_map", "report": rep.as_dict()})
        _check_converged(rep)
    else:
        cfg.require("resonator", "ensemble")
        known_t1 = _num_param(p, "known_t1", True)
        n_disc, n_coup = _int_param(p, "n_disc"), _int_param(p, "n_coup")
        traces = []
        if "synthetic" in p:
            syn = p["synthetic"]
            if "t_s" not in cfg.grids:
                raise ConfigError("grids.t_s", "required for synthetic decay data")
            if not isinstance(syn["detunings_Hz"], list) or not syn["detunings_Hz"]:
                raise ConfigError("params.synthetic.detunings_Hz", "expected a non-empty list")
            from dataclasses import replace

            truth = replace(cfg.ensemble, t1=known_t1,
                            coupling_dist=replace(cfg.ensemble.coupling_dist, g_max=float(syn["g_max"])))
            for k, d in enumerate(syn["detunings_Hz"]):
                tr = ensemble_decay_trace(cfg.resonator, truth, None, float(d), cfg.grids["t_s"],
                                          n_disc=n_disc, n_coup=n_coup)
                traces.append(tr)
                out.trace(TraceSet("t_s", tr.t_axis, {"shift": tr.shift}), f"_data_{k}", plot=False,
                          detuning_avg_Hz=float(d))
        else:
            for path in _data_paths(cfg):
                ds = io.ingest_csv(path, "decay")
                d = ds.metadata.get("detuning_avg_Hz")
                if not isinstance(d, (int, float)):
                    raise ConfigError("params.data", f"{path}: metadata lacks detuning_avg_Hz")
                traces.append(DecayTrace(ds.axis_values, ds["shift"], float(d)))
        g_max, rep = infer_gmax(traces, cfg.ensemble, cfg.resonator, known_t1,
                                g_max_init=_num_param(p, "g_max_init", True), n_disc=n_disc, n_coup=n_coup)
        out.report({"model": "gmax", "report": rep.as_dict()})


def _fit_outputs(out, data, column, model, rep, name):
    out.report({"model": name, "report": rep.as_dict()})
    _check_converged(rep)
    cols = {column: data[column], "model": model}
    out.trace(TraceSet(data.axis_name, data.axis_values, cols), "_fit")


def _check_converged(rep):
    from .fitlib import FitError

    if not rep.converged:
        raise FitError(f"fit did not converge: {rep.message}", rep)


RUNNERS = {"transmit": run_transmit, "dispersive": run_dispersive, "relax": run_relax,
           "dynamics": run_dynamics, "fields": run_fields, "fit": run_fit}


def execute(cfg: ScenarioConfig) -> list[Path]:
    """Run a validated scenario and return the files written."""
    out = _Writer(cfg)
    RUNNERS[cfg.scenario](cfg, out)
    return out.files

