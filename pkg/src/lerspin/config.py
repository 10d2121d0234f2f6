"""Strict JSON scenario configuration.

Top-level keys::

    scenario     transmit | dispersive | relax | dynamics | fields | fit
    seed         integer (default 0)
    resonator    {f_r0, kappa_i, kappa_c, inductance}
    ensemble     {n_spins, freq_dist{shape, sigma, center_offset},
                  coupling_dist{shape, exponent, g_min, g_max, table}, t1, t2, g_factor}
    environment  {temperature, b_field}
    pulse        {shape, f_carrier, amplitude, t_pump, sigma_t, cavity_drive, phases}
    grids        {name: {start, stop, num[, spacing]} | {start, stop, step} | {values}}
    output       {dir, prefix, plot}
    params       scenario-specific options, checked against the mode's key list

All frequencies and rates are in Hz, fields in T, times in s, temperatures
in K. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    CouplingDistribution,
    EnvironmentConditions,
    FrequencyDistribution,
    ResonatorSpec,
    SpinEnsembleSpec,
)

SCENARIOS = ("transmit", "dispersive", "relax", "dynamics", "fields", "fit")
TOP_KEYS = ("scenario", "seed", "resonator", "ensemble", "environment", "pulse", "grids", "output", "params")
PULSE_KEYS = ("shape", "f_carrier", "amplitude", "t_pump", "sigma_t", "cavity_drive", "phases")

# per scenario: mode -> (required grids, allowed params with defaults; None marks a required param)
MODES = {
    "transmit": {
        "map": (("b_T", "f_Hz"), {"g_n": "auto", "n_boxes": 101}),
        "sweep": (("f_Hz",), {"g_n": "auto", "n_boxes": 101}),
        "visibility": (("kappa_c_Hz",), {"g_n": None, "gamma": None, "shape": "lorentzian", "n_boxes": 101}),
        "collective": (("temperature_K",), {}),
    },
    "dispersive": {
        "thermal": (("temperature_K",), {"n_disc": 501, "n_coup": 1}),
        "spectroscopy": (("f_pump_Hz",), {"pulse_bandwidth": 20e3, "n_quad": 16, "fit": True}),
    },
    "relax": {
        "decay": (("t_s",), {"detunings_Hz": "auto", "n_disc": 51, "n_coup": 40, "purcell": True, "fit": True}),
        "t1_vs_detuning": (("detuning_Hz",), {"g1": None, "t_min": 1e-4, "t_max": 1e3, "n_t": 200,
                                              "n_disc": 51, "n_coup": 40}),
    },
    "dynamics": {
        "shift_vs_duration": (("t_pump_s",), {"offset_Hz": None, "pump": "mirror", "n_disc": 51, "n_coup": 1,
                                              "method": "DOP853", "relaxation": "literal",
                                              "gamma_parallel": "purcell"}),
        "rabi": (("t_s",), {"method": "DOP853"}),
    },
    "fields": {
        "map": (("x_m", "y_m", "z_m"), {"geometry": None, "static_dir": [1.0, 0.0, 0.0], "rms": True,
                                        "g_factor": 2.0, "n_sub": "auto", "n_bins": 40}),
    },
    "fit": {
        "damped_sine": ((), {"data": None, "time_factor": 4.0, "phase": "free"}),
        "stretched": ((), {"data": None, "log_weighting": True}),
        "resonance": ((), {"data": None, "init": {}}),
        "gaussian_line": ((), {"data": None, "column": "shift_Hz"}),
        "coupled_map": ((), {"data": None, "g_n_init": None, "n_boxes": 101}),
        "gmax": ((), {"data": None, "known_t1": None, "g_max_init": 10e3, "n_disc": 51, "n_coup": 40}),
    },
}
SYNTHETIC_KEYS = {
    "damped_sine": {"amplitude": 1.0, "omega_R": None, "tau_R": None, "phase": 0.0, "noise": 0.05,
                    "noise_mode": "additive"},
    "gmax": {"g_max": None, "detunings_Hz": None},
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.detail = message


class ConfigParseError(ConfigError):
    """The file is not valid JSON."""


def _check_keys(d, allowed, path, required=()):
    if not isinstance(d, dict):
        raise ConfigError(path, f"expected an object, got {type(d).__name__}")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, f"unknown key (allowed: {', '.join(allowed)})")
    for k in required:
        if k not in d:
            raise ConfigError(f"{path}.{k}" if path else k, "missing required key")


def _number(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    return float(v)


def _build(cls, d, path, convert=None):
    """Construct a dataclass from a dict, mapping key and invariant errors to ``path``."""
    names = [f.name for f in dataclasses.fields(cls)]
    required = [f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
    _check_keys(d, names, path, required)
    kwargs = {}
    for k, v in d.items():
        if convert and k in convert:
            kwargs[k] = convert[k](v, f"{path}.{k}")
        else:
            kwargs[k] = _number(v, f"{path}.{k}")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        field_name = next((n for n in names if msg.startswith(n)), None)
        raise ConfigError(f"{path}.{field_name}" if field_name else path, msg) from None


def _string(v, path):
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    return v


def _table(v, path):
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list of [g1, weight] pairs")
    out = []
    for i, row in enumerate(v):
        if not isinstance(row, list) or len(row) != 2:
            raise ConfigError(f"{path}[{i}]", "expected [g1, weight]")
        out.append((_number(row[0], f"{path}[{i}][0]"), _number(row[1], f"{path}[{i}][1]")))
    return tuple(out)


def parse_resonator(d, path="resonator") -> ResonatorSpec:
    return _build(ResonatorSpec, d, path)


def parse_ensemble(d, path="ensemble") -> SpinEnsembleSpec:
    conv = {
        "freq_dist": lambda v, p: _build(FrequencyDistribution, v, p, {"shape": _string}),
        "coupling_dist": lambda v, p: _build(CouplingDistribution, v, p, {"shape": _string, "table": _table}),
    }
    return _build(SpinEnsembleSpec, d, path, conv)


def parse_environment(d, path="environment") -> EnvironmentConditions:
    return _build(EnvironmentConditions, d, path)


def parse_pulse(d, path="pulse") -> dict:
    """Validated keyword arguments for :class:`~lerspin.pulses.PulseSpec`.

    ``f_carrier`` may be omitted when the scenario places the carrier itself.
    """
    from .pulses import PulseSpec

    _check_keys(d, PULSE_KEYS, path, ("shape", "t_pump"))
    kw = {"shape": _string(d["shape"], f"{path}.shape")}
    for k in ("f_carrier", "amplitude", "t_pump", "sigma_t", "cavity_drive"):
        if k in d:
            kw[k] = _number(d[k], f"{path}.{k}")
    if "phases" in d:
        ph = d["phases"]
        if not isinstance(ph, list) or len(ph) != 3:
            raise ConfigError(f"{path}.phases", "expected three numbers")
        kw["phases"] = tuple(_number(x, f"{path}.phases[{i}]") for i, x in enumerate(ph))
    kw.setdefault("amplitude", 0.0)
    try:
        PulseSpec(**{**kw, "f_carrier": kw.get("f_carrier", 1.0)})
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    return kw


def parse_grid(d, path) -> np.ndarray:
    """Linear/log ``{start, stop, num}``, stepped ``{start, stop, step}`` (stop
    included when it lies on the step lattice) or explicit ``{values}``."""
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    if "values" in d:
        _check_keys(d, ("values",), path)
        v = d["values"]
        if not isinstance(v, list) or not v:
            raise ConfigError(f"{path}.values", "expected a non-empty list")
        arr = np.array([_number(x, f"{path}.values[{i}]") for i, x in enumerate(v)])
    elif "step" in d:
        _check_keys(d, ("start", "stop", "step"), path, ("start", "stop", "step"))
        start, stop, step = (_number(d[k], f"{path}.{k}") for k in ("start", "stop", "step"))
        if not step > 0 or stop < start:
            raise ConfigError(path, "need step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        arr = start + step * np.arange(n)
    else:
        _check_keys(d, ("start", "stop", "num", "spacing"), path, ("start", "stop", "num"))
        start, stop = _number(d["start"], f"{path}.start"), _number(d["stop"], f"{path}.stop")
        num = d["num"]
        if isinstance(num, bool) or not isinstance(num, int) or num < 1:
            raise ConfigError(f"{path}.num", "expected a positive integer")
        spacing = d.get("spacing", "linear")
        if spacing == "linear":
            arr = np.linspace(start, stop, num)
        elif spacing == "log":
            if not (start > 0 and stop > 0):
                raise ConfigError(path, "log spacing needs positive start and stop")
            arr = np.geomspace(start, stop, num)
        else:
            raise ConfigError(f"{path}.spacing", "expected 'linear' or 'log'")
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        raise ConfigError(path, "grid must be strictly increasing")
    return arr


@dataclass
class OutputSpec:
    dir: Path
    prefix: str
    plot: bool = True


@dataclass
class ScenarioConfig:
    """A validated scenario; ``raw`` keeps the parsed JSON for hashing."""

    scenario: str
    mode: str
    seed: int
    resonator: ResonatorSpec | None
    ensemble: SpinEnsembleSpec | None
    environment: EnvironmentConditions | None
    pulse: dict | None
    grids: dict[str, np.ndarray]
    output: OutputSpec
    params: dict
    raw: dict = field(repr=False, default_factory=dict)
    base_dir: Path = Path(".")

    def resolve(self, rel) -> Path:
        """Path relative to the config file's directory."""
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def require(self, *names):
        for n in names:
            if getattr(self, n) is None:
                raise ConfigError(n, f"required by scenario {self.scenario}/{self.mode}")


def _parse_params(scenario, d):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError("params", "expected an object")
    modes = MODES[scenario]
    mode = d.get("mode", next(iter(modes)))
    if mode not in modes:
        raise ConfigError("params.mode", f"unknown mode {mode!r} for {scenario} (allowed: {', '.join(modes)})")
    grids_needed, defaults = modes[mode]
    allowed = ("mode", "synthetic", *defaults) if scenario == "fit" else ("mode", *defaults)
    _check_keys(d, allowed, "params")
    out = {"mode": mode}
    for k, default in defaults.items():
        if k in d:
            out[k] = d[k]
        elif default is None and not (scenario == "fit" and k == "data" and "synthetic" in d):
            raise ConfigError(f"params.{k}", f"required for mode {mode}")
        else:
            out[k] = default
    if "synthetic" in d:
        syn_defaults = SYNTHETIC_KEYS.get(mode)
        if syn_defaults is None:
            raise ConfigError("params.synthetic", f"no synthetic data generator for mode {mode}")
        _check_keys(d["synthetic"], tuple(syn_defaults), "params.synthetic")
        syn = {}
        for k, default in syn_defaults.items():
            if k not in d["synthetic"] and default is None:
                raise ConfigError(f"params.synthetic.{k}", "missing required key")
            syn[k] = d["synthetic"].get(k, default)
        out["synthetic"] = syn
    return mode, grids_needed, out


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file.

    Raises
    ------
    ConfigParseError
        The file cannot be read or is not JSON.
    ConfigError
        A key is unknown or missing, or a value violates an invariant.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError("", f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") \
            from None
    return parse_config(raw, path.parent)


def parse_config(raw, base_dir=Path(".")) -> ScenarioConfig:
    _check_keys(raw, TOP_KEYS, "", ("scenario",))
    scenario = raw["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {scenario!r} (allowed: {', '.join(SCENARIOS)})")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "expected a non-negative integer")
    res = parse_resonator(raw["resonator"]) if "resonator" in raw else None
    ens = parse_ensemble(raw["ensemble"]) if "ensemble" in raw else None
    env = parse_environment(raw["environment"]) if "environment" in raw else None
    pulse = parse_pulse(raw["pulse"]) if "pulse" in raw else None
    grids_raw = raw.get("grids", {})
    if not isinstance(grids_raw, dict):
        raise ConfigError("grids", "expected an object")
    grids = {k: parse_grid(v, f"grids.{k}") for k, v in grids_raw.items()}
    mode, grids_needed, params = _parse_params(scenario, raw.get("params"))
    for g in grids_needed:
        if g not in grids:
            raise ConfigError(f"grids.{g}", f"required for {scenario}/{mode}")
    for g in grids:
        if grids_needed and g not in grids_needed:
            raise ConfigError(f"grids.{g}", f"not used by {scenario}/{mode} (expected: {', '.join(grids_needed)})")
    out_raw = raw.get("output", {})
    _check_keys(out_raw, ("dir", "prefix", "plot"), "output")
    plot = out_raw.get("plot", True)
    if not isinstance(plot, bool):
        raise ConfigError("output.plot", "expected true or false")
    out = OutputSpec(Path(_string(out_raw.get("dir", "output"), "output.dir")),
                     _string(out_raw.get("prefix", f"{scenario}_{mode}"), "output.prefix"), plot)
    base_dir = Path(base_dir)
    if not out.dir.is_absolute():
        out.dir = base_dir / out.dir
    return ScenarioConfig(scenario, mode, seed, res, ens, env, pulse, grids, out, params, raw, base_dir)
