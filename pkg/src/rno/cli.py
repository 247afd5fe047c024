"""Command-line front end.

``rno run`` executes a scenario sweep and writes ``results.csv``, per-scheme
iteration traces under ``traces/`` and ``manifest.json``.  ``rno plot``
renders one figure per metric from a results table.

Exit codes: 0 success, 1 runtime failure, 2 invalid input (config or
results table), 3 missing solver backend.  Failures print a JSON record on
stderr.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import platform
import sys
from pathlib import Path

from . import __version__
from .backend import backend_available
from .config import ConfigError, config_hash, dump_scenario, load_scenario
from .experiments import Scenario, override_scheme, results_csv, run_sweep, traces_csv
from .plotting import ResultsFormatError, read_results, render

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT, EXIT_BACKEND = 0, 1, 2, 3


def _fail(code: int, record: dict, out_dir: Path | None = None) -> int:
    text = json.dumps(record, default=str)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def apply_overrides(scenario: Scenario, args) -> Scenario:
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.metric is not None:
        changes["metric"] = args.metric
    sig = None if args.signaling is None else args.signaling.upper()
    sic = None if args.sic is None else args.sic == "on"
    net = {}
    if args.set is not None:
        net["feasibility_set"] = args.set
    if sig is not None:
        net["signaling"] = sig
    if sic is not None:
        net["sic_enabled"] = sic
    if net:
        changes["network"] = scenario.network.with_(**net)
    if scenario.schemes and (args.set or sig or sic is not None):
        changes["schemes"] = [
            override_scheme(s, feasibility_set=args.set, signaling=sig, sic=sic) for s in scenario.schemes
        ]
    if not changes:
        return scenario
    return Scenario.model_validate({**scenario.model_dump(), **changes})


def cmd_run(args) -> int:
    out = Path(args.out)
    try:
        scenario = apply_overrides(load_scenario(args.config), args)
    except ConfigError as exc:
        return _fail(EXIT_INPUT, exc.record(), out)
    except ValueError as exc:  # overrides that fail validation
        return _fail(EXIT_INPUT, {"error": "invalid_config", "message": str(exc)}, out)
    if not backend_available():
        return _fail(EXIT_BACKEND, {"error": "backend_unavailable", "message": "install the 'clarabel' package"}, out)
    started = _dt.datetime.now(_dt.timezone.utc)
    try:
        result = run_sweep(scenario, jobs=max(1, args.jobs))
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable record
        return _fail(EXIT_RUNTIME, {"error": "runtime", "type": type(exc).__name__, "message": str(exc)}, out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(result.rows, timing=args.timing))
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)
    for scheme, rows in result.traces.items():
        (tdir / f"{scheme}.csv").write_text(traces_csv(rows))
    (out / "scenario.yaml").write_text(dump_scenario(scenario))
    manifest = {
        "tool": "rno",
        "version": __version__,
        "config_hash": config_hash(scenario),
        "seed_base": scenario.seed_base,
        "trials": scenario.trials,
        "schemes": scenario.scheme_list(),
        "dropped_trials": result.dropped,
        "errors": result.errors,
        "started": started.isoformat(),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "python": platform.python_version(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if result.dropped:
        print(f"dropped {result.dropped} failed trial(s)", file=sys.stderr)
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        text = Path(args.input).read_text()
        rows = read_results(text)
    except OSError as exc:
        return _fail(EXIT_INPUT, {"error": "unreadable_results", "message": str(exc)})
    except ResultsFormatError as exc:
        return _fail(EXIT_INPUT, {"error": "malformed_results", "message": str(exc)})
    for path in render(rows, args.out):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rno", description="RIS-assisted NOMA resource optimization sweeps")
    p.add_argument("--version", action="version", version=f"rno {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario sweep")
    r.add_argument("--config", required=True, help="scenario YAML file")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--jobs", type=int, default=1, help="parallel trials")
    r.add_argument("--trials", type=int, help="override the trial count")
    r.add_argument("--set", choices=["U", "I", "C"], help="feasibility set of optimized RIS schemes")
    r.add_argument("--signaling", choices=["igs", "pgs"], type=str.lower)
    r.add_argument("--sic", choices=["on", "off"], type=str.lower)
    r.add_argument("--metric", choices=["rate", "ee"], type=str.lower)
    r.add_argument("--timing", action="store_true",
                   help="fill mean_wall_ms with measured times (results are then not byte-reproducible)")
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plot", help="plot a results table")
    pl.add_argument("--in", dest="input", required=True, help="results.csv")
    pl.add_argument("--out", required=True, help="output directory")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
