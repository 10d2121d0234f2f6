"""CSV and SVG input/output.

CSV files start with ``# key: value`` metadata lines (values JSON-encoded),
followed by a header row and numeric rows. Floats are written with ``repr``
so they read back bit-identically; complex columns are split into ``<name>_re``
and ``<name>_im``. Column names end in a unit suffix (``_Hz``, ``_T``, ``_s``,
``_dB``, ...); prefixed units such as ``_MHz`` or ``_ns`` are converted to SI
on ingestion and ``_dB`` magnitudes are converted with ``10**(dB/20)``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .traces import TraceSet
from .transmission import TransmissionMap

UNIT_SCALE = {
    "Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9,
    "T": 1.0, "mT": 1e-3, "uT": 1e-6,
    "s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9,
    "K": 1.0, "mK": 1e-3,
    "rad": 1.0, "m": 1.0, "A": 1.0,
}
BASE_UNIT = {"kHz": "Hz", "MHz": "Hz", "GHz": "Hz", "mT": "T", "uT": "T", "ms": "s", "us": "s", "ns": "s",
             "mK": "K"}
KINDS = ("s21_sweep", "s21_map", "decay", "shift_trace")


class SchemaError(ValueError):
    """A data file does not match the documented layout."""


def _jsonable(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    return repr(value)


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    text = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _fmt(x) -> str:
    return repr(float(x))


def _write(path, meta, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {json.dumps(_jsonable(v), sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _split_columns(columns):
    header, arrays = [], []
    for name, arr in columns.items():
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            header += [f"{name}_re", f"{name}_im"]
            arrays += [arr.real, arr.imag]
        else:
            header.append(name)
            arrays.append(arr.astype(float))
    return header, arrays


def write_traceset(trace: TraceSet, path, extra_meta=None) -> Path:
    """Write a TraceSet as CSV."""
    meta = {"kind": "trace", "axis": trace.axis_name}
    meta.update(extra_meta or {})
    meta.update({k: v for k, v in trace.metadata.items() if k not in meta})
    header, arrays = _split_columns({trace.axis_name: trace.axis_values, **trace.columns})
    rows = [[_fmt(a[i]) for a in arrays] for i in range(len(trace))]
    _write(path, meta, header, rows)
    return Path(path)


def write_map(tmap: TransmissionMap, path, extra_meta=None) -> Path:
    """Write a TransmissionMap in long form: one row per (B, f) pixel."""
    meta = {"kind": "s21_map"}
    meta.update(extra_meta or {})
    meta.update({k: v for k, v in tmap.metadata.items() if k not in meta})
    rows = []
    for i, b in enumerate(tmap.b_axis):
        for j, f in enumerate(tmap.f_axis):
            z = tmap.s21[i, j]
            rows.append([_fmt(b), _fmt(f), _fmt(z.real), _fmt(z.imag)])
    _write(path, meta, ["b_T", "f_Hz", "s21_re", "s21_im"], rows)
    return Path(path)


def write_rows(path, header, rows, meta) -> Path:
    """Write plain numeric rows with metadata."""
    _write(path, meta, header, [[_fmt(v) for v in r] for r in rows])
    return Path(path)


def read_csv(path):
    """Read metadata, header and a float array; raises SchemaError with the
    offending row number on ragged or non-numeric rows."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    meta, lines = {}, []
    with path.open(newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                key, sep, val = line[1:].partition(":")
                if sep:
                    val = val.strip()
                    try:
                        meta[key.strip()] = json.loads(val)
                    except json.JSONDecodeError:
                        meta[key.strip()] = val
                continue
            if line.strip():
                lines.append((lineno, line))
    if not lines:
        raise SchemaError(f"{path}: no header row")
    header = next(csv.reader([lines[0][1]]))
    header = [h.strip() for h in header]
    data = []
    for lineno, line in lines[1:]:
        cells = next(csv.reader([line]))
        if len(cells) != len(header):
            raise SchemaError(f"{path}: row at line {lineno} has {len(cells)} cells, expected {len(header)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise SchemaError(f"{path}: non-numeric cell in line {lineno}") from None
        if any(math.isnan(v) for v in vals):
            raise SchemaError(f"{path}: NaN cell in line {lineno}")
        data.append(vals)
    arr = np.array(data, dtype=float).reshape(len(data), len(header))
    return meta, header, arr


def _unit_of(name):
    stem, sep, unit = name.rpartition("_")
    if not sep:
        return name, None
    if unit == "dB" or unit in UNIT_SCALE:
        return stem, unit
    if unit in ("re", "im"):
        inner_stem, inner_unit = _unit_of(stem)
        return name, inner_unit
    return name, None


def _to_si(header, arr):
    """Convert prefixed units to SI; returns new names and columns."""
    cols = {}
    for k, name in enumerate(header):
        stem, unit = _unit_of(name)
        col = arr[:, k]
        if unit in BASE_UNIT:
            cols[f"{stem}_{BASE_UNIT[unit]}"] = col * UNIT_SCALE[unit]
        else:
            cols[name] = col
    return cols


def _merge_complex(cols):
    out = {}
    for name, col in cols.items():
        if name.endswith("_im") and name[:-3] + "_re" in cols:
            continue
        if name.endswith("_re") and name[:-3] + "_im" in cols:
            out[name[:-3]] = col + 1j * cols[name[:-3] + "_im"]
        else:
            out[name] = col
    return out


def _find(cols, candidates, path, what):
    for c in candidates:
        if c in cols:
            return c
    raise SchemaError(f"{path}: missing {what} column (expected one of {list(candidates)})")


def _s21_from(cols, path):
    if "s21" in cols:
        return cols.pop("s21")
    if "re" in cols and "im" in cols:
        return cols.pop("re") + 1j * cols.pop("im")
    for name in list(cols):
        if name.endswith("_dB"):
            mag = 10.0 ** (cols.pop(name) / 20.0)
            phase = cols.pop("phase_rad", np.zeros_like(mag))
            return mag * np.exp(1j * phase)
    raise SchemaError(f"{path}: no transmission columns (s21_re/s21_im, re/im or <name>_dB)")


def ingest_csv(path, kind: str):
    """Load and validate a data file for fitting.

    ``s21_sweep`` -> TraceSet on ``f_Hz`` with complex column ``s21``;
    ``s21_map`` -> TransmissionMap; ``decay`` -> TraceSet on ``t_s`` with
    column ``shift``; ``shift_trace`` -> TraceSet on ``t_pump_s`` with
    column ``shift_Hz``. Other columns are carried along unchanged.
    """
    if kind not in KINDS:
        raise SchemaError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
    meta, header, arr = read_csv(path)
    if arr.shape[0] == 0:
        raise SchemaError(f"{path}: no data rows")
    cols = _merge_complex(_to_si(header, arr))
    if kind == "s21_sweep":
        axis = _find(cols, ("f_Hz",), path, "frequency")
        f = cols.pop(axis)
        s21 = _s21_from(cols, path)
        return TraceSet("f_Hz", f, {"s21": s21, **cols}, meta)
    if kind == "s21_map":
        b_name = _find(cols, ("b_T",), path, "field")
        f_name = _find(cols, ("f_Hz",), path, "frequency")
        b = cols.pop(b_name)
        f = cols.pop(f_name)
        s21 = _s21_from(cols, path)
        b_axis = np.unique(b)
        f_axis = np.unique(f)
        for bv in b_axis:
            rows = np.flatnonzero(b == bv)
            if rows.size != f_axis.size or not np.array_equal(np.sort(f[rows]), f_axis):
                raise SchemaError(f"{path}: map row at b_T={float(bv)!r} (first data row {rows[0] + 1}) is ragged: "
                                  f"{rows.size} frequencies, expected {f_axis.size}")
        order = np.lexsort((f, b))
        grid = s21[order].reshape(b_axis.size, f_axis.size)
        return TransmissionMap(b_axis, f_axis, grid, meta)
    if kind == "decay":
        axis = _find(cols, ("t_s",), path, "time")
        t = cols.pop(axis)
        name = _find(cols, ("shift", "shift_norm", "shift_Hz", "y"), path, "shift")
        y = cols.pop(name)
        return TraceSet("t_s", t, {"shift": y, **cols}, meta)
    axis = _find(cols, ("t_pump_s",), path, "pulse duration")
    t = cols.pop(axis)
    name = _find(cols, ("shift_Hz",), path, "shift")
    return TraceSet("t_pump_s", t, {"shift_Hz": cols.pop(name), **cols}, meta)


def read_traceset(path) -> TraceSet:
    """Read back any CSV written by :func:`write_traceset` (first column is the axis)."""
    meta, header, arr = read_csv(path)
    cols = _merge_complex({name: arr[:, k] for k, name in enumerate(header)})
    axis = header[0]
    values = cols.pop(axis)
    return TraceSet(axis, values, cols, meta)


def emit_plot(dataset, style: str, path, *, title=None) -> Path:
    """Write a self-contained SVG: ``line`` plots every real column of a
    TraceSet (magnitude for complex columns); ``map`` draws |S21| of a
    TransmissionMap as a heat map."""
    if style not in ("line", "map"):
        raise ValueError("style must be 'line' or 'map'")
    if isinstance(dataset, TransmissionMap):
        if dataset.s21.size == 0:
            raise ValueError("empty dataset; no plot written")
    elif len(dataset) == 0 or not dataset.columns:
        raise ValueError("empty dataset; no plot written")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": "lerspin", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        if style == "map":
            if not isinstance(dataset, TransmissionMap):
                raise ValueError("map style needs an s21 map dataset")
            mesh = ax.pcolormesh(dataset.b_axis, dataset.f_axis, np.abs(dataset.s21).T, shading="nearest")
            fig.colorbar(mesh, ax=ax, label="|S21|")
            ax.set_xlabel("B (T)")
            ax.set_ylabel("f (Hz)")
        else:
            if isinstance(dataset, TransmissionMap):
                raise ValueError("line style needs a trace dataset")
            for name, col in dataset.columns.items():
                y = np.abs(col) if np.iscomplexobj(col) else col
                ax.plot(dataset.axis_values, y, label=f"|{name}|" if np.iscomplexobj(col) else name)
            x = dataset.axis_values
            if x.size > 1 and x.min() > 0 and x.max() / x.min() > 1e3:
                ax.set_xscale("log")
            ax.set_xlabel(dataset.axis_name)
            ax.legend()
        if title:
            ax.set_title(title)
        fig.tight_layout()
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OSError(f"cannot write plot to {path}: {exc}") from exc
        finally:
            plt.close(fig)
    return path
