"""Command-line front end.

    lerspin run <config.json>
    lerspin fit <kind> <data.csv> [--init k=v ...] [--config cfg.json] [--out report.json]
    lerspin plot <data.csv> --style line|map [--out plot.svg]

Exit codes: 0 success, 2 parse error, 3 validation error, 4 numerical
failure, 5 I/O failure. Errors are reported on stderr as one JSON object
``{"error": kind, "exit_code": n, "field": path-or-null, "message": text}``.
Set ``LERSPIN_THREADS`` to cap the BLAS/OpenMP thread count.
"""

from __future__ import annotations

import os

_threads = os.environ.get("LERSPIN_THREADS")
if _threads:
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse  # noqa: E402
import json  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4, 5
FIT_KINDS = {"s21_sweep": "resonance", "s21_map": "coupled_map", "decay": "stretched", "shift_trace": "damped_sine"}


def _error(kind, code, message, field=None):
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "field": field, "message": message},
                                sort_keys=True) + "\n")
    return code


def _classify(exc):
    """Map an exception to ``(exit code, kind, field)``."""
    from .config import ConfigError, ConfigParseError
    from .dynamics import DynamicsError
    from .fitlib import FitError
    from .io import SchemaError

    if isinstance(exc, ConfigParseError):
        return EXIT_PARSE, "parse", exc.path or None
    if isinstance(exc, ConfigError):
        return EXIT_VALIDATION, "validation", exc.path
    if isinstance(exc, SchemaError):
        return EXIT_VALIDATION, "schema", None
    if isinstance(exc, (FitError, DynamicsError, FloatingPointError, np.linalg.LinAlgError, OverflowError)):
        return EXIT_NUMERICAL, "numerical", None
    if isinstance(exc, FileNotFoundError):
        return EXIT_VALIDATION, "validation", None
    if isinstance(exc, OSError):
        return EXIT_IO, "io", None
    if isinstance(exc, (ValueError, TypeError)):
        return EXIT_VALIDATION, "validation", None
    return None


def _guarded(fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # translated to an exit code below
        cls = _classify(exc)
        if cls is None:
            raise
        code, kind, field = cls
        detail = getattr(exc, "detail", None) or str(exc)
        return _error(kind, code, detail, field)


def run_scenario(config_path):
    """Load, validate and execute a scenario file.

    Returns
    -------
    code : int
        Process exit code.
    files : list of Path
        Files written (empty on failure).
    """
    from .config import load_config
    from .scenarios import execute

    files = []

    def work():
        cfg = load_config(config_path)
        files.extend(execute(cfg))
        return EXIT_OK

    code = _guarded(work)
    return code, files


def _parse_init(items):
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise argparse.ArgumentTypeError(f"--init expects k=v, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _cmd_run(args):
    code, files = run_scenario(args.config)
    for f in files:
        print(f)
    return code


def _cmd_fit(args):
    from . import fitlib, io

    init = _parse_init(args.init)
    ds = io.ingest_csv(args.data, args.kind)
    if args.kind == "s21_sweep":
        rep = fitlib.fit_resonance(ds.axis_values, ds["s21"], init=init)
    elif args.kind == "decay":
        rep = fitlib.fit_stretched_exponential(ds.axis_values, ds["shift"],
                                               log_weighting=bool(init.pop("log_weighting", True)))
    elif args.kind == "shift_trace":
        allowed = {"time_factor", "phase"}
        bad = set(init) - allowed
        if bad:
            raise ValueError(f"unknown --init keys {sorted(bad)} for shift_trace (allowed: {sorted(allowed)})")
        rep = fitlib.fit_damped_sine(ds.axis_values, ds["shift_Hz"], time_factor=float(init.get("time_factor", 4.0)),
                                     phase=init.get("phase"))
    else:
        from .config import ConfigError, load_config

        if args.config is None:
            raise ConfigError("--config", "s21_map fits need a config with resonator, ensemble and environment")
        cfg = load_config(args.config)
        cfg.require("resonator", "ensemble", "environment")
        rep = fitlib.fit_coupled_map(ds, cfg.resonator, cfg.ensemble, cfg.environment,
                                     g_n_init=init.get("g_n_init"))
    body = json.dumps({"kind": args.kind, "model": FIT_KINDS[args.kind], "report": io._jsonable(rep.as_dict())},
                      indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(body + "\n")
    print(body)
    if not rep.converged:
        return _error("numerical", EXIT_NUMERICAL, f"fit did not converge: {rep.message}")
    return EXIT_OK


def _cmd_plot(args):
    from . import io

    out = Path(args.out) if args.out else Path(args.data).with_suffix(".svg")
    ds = io.ingest_csv(args.data, "s21_map") if args.style == "map" else io.read_traceset(args.data)
    print(io.emit_plot(ds, args.style, out))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="lerspin", description="Spin-ensemble / resonator toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a scenario config")
    p.add_argument("config")
    p.set_defaults(fn=_cmd_run)
    p = sub.add_parser("fit", help="fit a data file")
    p.add_argument("kind", choices=sorted(FIT_KINDS))
    p.add_argument("data")
    p.add_argument("--init", action="append", metavar="K=V", help="initial guess or option (repeatable)")
    p.add_argument("--config", help="scenario config supplying specs for s21_map fits")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(fn=_cmd_fit)
    p = sub.add_parser("plot", help="render a CSV as SVG")
    p.add_argument("data")
    p.add_argument("--style", choices=("line", "map"), required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_PARSE
    if args.command == "run":
        return args.fn(args)
    try:
        return _guarded(args.fn, args)
    except argparse.ArgumentTypeError as exc:
        return _error("parse", EXIT_PARSE, str(exc))


if __name__ == "__main__":
    sys.exit(main())
