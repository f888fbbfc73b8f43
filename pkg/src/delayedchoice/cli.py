"""Command-line entry point.

    delayedchoice fig2 --engine both --trials 100000 --out results/
    delayedchoice run --config my.cfg
    delayedchoice trials --phase 0 --trials 1000 --out records.jsonl
    delayedchoice fit-fringe results/fig2_a_montecarlo.csv

Errors go to stderr as one JSON object ``{"error": <category>, "message": ...}``
and the exit code identifies the category (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from . import montecarlo as mc
from .analysis import FitError, fit_exponential_decay, fit_sinusoid, read_series, visibility_from_fringe
from .config import ConfigFileError, dumps_config, load_config
from .evolution import FringeScan
from .model import InterferometerConfig, QrngMode, ValidationError, validate
from .scenarios import Engine, ScenarioError, ScenarioName, Sweep, default_spec, emit, run_scenario, spec_from_provenance
from .temporal import OverlapConvergenceError

EXIT_CODES = {"usage": 2, "config": 3, "scenario": 4, "fit": 5, "io": 6, "numerics": 7, "internal": 1}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--engine", choices=[e.value for e in Engine])
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, help="Monte Carlo trials per sweep point and phase")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--qrng-mode", choices=[m.value for m in QrngMode])
    p.add_argument("--workers", type=int, help="parallel worker processes (default: 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="delayedchoice", description="Temporal delayed-choice interferometer simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ScenarioName:
        p = sub.add_parser(name.value, help=f"run the {name.value} scenario")
        _run_flags(p)
        if name is ScenarioName.FIG2:
            p.add_argument("--xi-set", choices=["fitted", "nominal"], default="fitted")

    p = sub.add_parser("run", help="run a scenario described by a config file")
    p.add_argument("--config", required=True)
    _run_flags(p)

    p = sub.add_parser("reproduce", help="rerun the scenario recorded in a provenance sidecar")
    p.add_argument("sidecar")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("trials", help="stream per-trial records as JSON lines")
    p.add_argument("--config")
    p.add_argument("--phase", type=float, default=0.0, help="EOM phase in radians")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--start", type=int, default=0, help="first trial index")
    p.add_argument("--seed", type=int, default=2019)
    p.add_argument("--qrng-mode", choices=[m.value for m in QrngMode])
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("fit-fringe", help="fit a sinusoid to a phase/counts CSV")
    p.add_argument("file")
    p.add_argument("--x", default="phase_rad")
    p.add_argument("--y", default=None, help="counts column (default: counts, else expected_counts)")
    p.add_argument("--poisson", action="store_true", help="weight residuals by 1/sqrt(counts)")

    p = sub.add_parser("fit-decay", help="fit A*exp(-t/T)+g0 to a time/counts CSV")
    p.add_argument("file")
    p.add_argument("--x", default=None, help="time column in ns (default: first column)")
    p.add_argument("--y", default=None, help="counts column (default: second column)")
    p.add_argument("--poisson", action="store_true")

    p = sub.add_parser("config-template", help="print a config file for a scenario's base parameters")
    p.add_argument("scenario", nargs="?", choices=[n.value for n in ScenarioName])
    return parser


def _floats(text: str) -> tuple[float, ...]:
    vals = [v.strip() for v in text.split(",") if v.strip()]
    try:
        return tuple(float(eval_number(v)) for v in vals)
    except ValueError as exc:
        raise CliError("config", str(exc)) from None


def eval_number(text: str) -> float:
    """A float, optionally written as a multiple of pi (``pi``, ``0.5pi``, ``pi/4``)."""
    t = text.strip().lower().replace(" ", "")
    if "pi" not in t:
        return float(t)
    head, _, tail = t.partition("pi")
    factor = 1.0 if head in ("", "+") else -1.0 if head == "-" else float(head.rstrip("*"))
    div = 1.0
    if tail:
        if not tail.startswith("/"):
            raise ValueError(f"cannot parse {text!r}")
        div = float(tail[1:])
    return factor * math.pi / div


def _spec_from_file(path: str):
    from .config import parse_keyvalue

    try:
        with open(path, encoding="utf-8") as fh:
            opts = {k: v for k, v in parse_keyvalue(fh.read()).items()
                    if k.startswith(("scenario.", "sweep."))}
    except OSError as exc:
        raise CliError("io", f"cannot read config {path}: {exc.strerror}") from None
    except ConfigFileError as exc:
        raise CliError("config", str(exc)) from None
    if "scenario.name" not in opts:
        raise CliError("config", "config file must set scenario.name")
    known = {"scenario.name", "scenario.engine", "scenario.trials", "scenario.seed", "scenario.workers",
             "scenario.N", "scenario.zeta", "scenario.phase_grid", "scenario.bin_width",
             "scenario.xi_set", "sweep.parameter", "sweep.values", "sweep.labels"}
    unknown = sorted(set(opts) - known)
    if unknown:
        raise CliError("config", f"unknown option(s): {', '.join(unknown)}")
    try:
        spec = default_spec(opts["scenario.name"], opts.get("scenario.engine", "analytic"),
                            xi_set=opts.get("scenario.xi_set", "fitted"))
        config, _ = load_config(path, base=spec.base_config)
        kw: dict = {"base_config": config}
        if "scenario.trials" in opts:
            kw["trials_per_point"] = int(opts["scenario.trials"])
        if "scenario.seed" in opts:
            kw["seed"] = int(opts["scenario.seed"])
        if "scenario.workers" in opts:
            kw["workers"] = int(opts["scenario.workers"])
        if "scenario.N" in opts:
            kw["N"] = float(opts["scenario.N"])
        if "scenario.bin_width" in opts:
            kw["bin_width"] = float(opts["scenario.bin_width"])
        if "scenario.zeta" in opts:
            z = opts["scenario.zeta"].lower()
            kw["zeta"] = None if z in ("computed", "none") else complex(z.replace("i", "j"))
        if "scenario.phase_grid" in opts:
            kw["phase_grid"] = _floats(opts["scenario.phase_grid"])
        if "sweep.parameter" in opts or "sweep.values" in opts:
            labels = tuple(s.strip() for s in opts.get("sweep.labels", "").split(",") if s.strip())
            kw["sweep"] = Sweep(opts.get("sweep.parameter", spec.sweep.parameter),
                                _floats(opts.get("sweep.values", "")), labels)
    except (ConfigFileError, ValidationError) as exc:
        raise CliError("config", str(exc)) from None
    except ScenarioError as exc:
        raise CliError("scenario", str(exc)) from None
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    return replace(spec, **kw)


def _apply_flags(spec, args):
    kw: dict = {}
    if args.engine:
        kw["engine"] = Engine(args.engine)
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.trials is not None:
        kw["trials_per_point"] = args.trials
    if args.workers is not None:
        kw["workers"] = args.workers
    if args.qrng_mode:
        cfg = spec.base_config
        kw["base_config"] = replace(cfg, qrng=replace(cfg.qrng, mode=QrngMode(args.qrng_mode)))
    return replace(spec, **kw)


def _run_and_emit(spec, out: str) -> int:
    try:
        result = run_scenario(spec)
    except ValidationError as exc:
        raise CliError("config", str(exc)) from None
    except ScenarioError as exc:
        raise CliError("scenario", str(exc)) from None
    try:
        written = emit(result, out)
    except OSError as exc:
        raise CliError("io", f"cannot write to {out}: {exc.strerror}") from None
    for path in written:
        print(path)
    return 0


def _cmd_scenario(args) -> int:
    if args.workers is not None and args.workers < 1:
        raise CliError("usage", "--workers must be at least 1")
    if args.command == "run":
        spec = _spec_from_file(args.config)
    else:
        try:
            spec = default_spec(args.command, xi_set=getattr(args, "xi_set", "fitted"))
        except ScenarioError as exc:
            raise CliError("scenario", str(exc)) from None
    return _run_and_emit(_apply_flags(spec, args), args.out)


def _cmd_reproduce(args) -> int:
    try:
        with open(args.sidecar, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliError("io", f"cannot read {args.sidecar}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{args.sidecar} is not valid JSON: {exc}") from None
    try:
        spec = spec_from_provenance(doc.get("provenance", doc), workers=args.workers)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError("config", f"incomplete provenance record: {exc}") from None
    return _run_and_emit(spec, args.out)


def _cmd_trials(args) -> int:
    if args.trials < 0 or args.start < 0:
        raise CliError("usage", "--trials and --start must be nonnegative")
    config = InterferometerConfig()
    if args.config:
        try:
            config, _ = load_config(args.config)
        except OSError as exc:
            raise CliError("io", f"cannot read config {args.config}: {exc.strerror}") from None
        except (ConfigFileError, ValidationError) as exc:
            raise CliError("config", str(exc)) from None
    if args.qrng_mode:
        config = replace(config, qrng=replace(config.qrng, mode=QrngMode(args.qrng_mode)))
    try:
        validate(config)
    except ValidationError as exc:
        raise CliError("config", str(exc)) from None
    records = mc.iter_trial_records(config, args.phase, args.seed, args.start, args.trials)
    try:
        if args.out:
            mc.write_trial_records(records, args.out)
        else:
            mc.write_trial_records(records, sys.stdout)
    except OSError as exc:
        raise CliError("io", f"cannot write records: {exc.strerror}") from None
    return 0


def _read(path: str) -> dict:
    try:
        return read_series(path)
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror}") from None
    except (StopIteration, IndexError, ValueError) as exc:
        raise CliError("io", f"{path} is not a readable series file: {exc}") from None


def _column(data: dict, name: str | None, fallback: list, path: str) -> np.ndarray:
    if name is None:
        name = next((c for c in fallback if c in data), None)
        if name is None:
            raise CliError("io", f"{path}: cannot find a default column among {fallback}")
    if name not in data:
        raise CliError("io", f"{path}: no column {name!r} (have {', '.join(data)})")
    col = data[name]
    if col.dtype.kind not in "fiu":
        raise CliError("io", f"{path}: column {name!r} is not numeric")
    return col.astype(float)


def _cmd_fit_fringe(args) -> int:
    data = _read(args.file)
    x = _column(data, args.x, [], args.file)
    y = _column(data, args.y, ["counts", "expected_counts"], args.file)
    try:
        scan = FringeScan(x, y)
        fit = fit_sinusoid(scan, poisson_weights=args.poisson)
        vis = visibility_from_fringe(scan, fit)
    except FitError as exc:
        raise CliError("fit", str(exc)) from None
    except ValueError as exc:
        raise CliError("io", str(exc)) from None
    print(json.dumps({"amplitude": fit.amplitude, "phase0": fit.phase0, "offset": fit.offset,
                      "visibility": vis, "residual_norm": fit.residual_norm,
                      "uncertainties": fit.parameter_uncertainties}, sort_keys=True))
    return 0


def _cmd_fit_decay(args) -> int:
    data = _read(args.file)
    names = list(data)
    if len(names) < 2 and (args.x is None or args.y is None):
        raise CliError("io", f"{args.file}: need a time and a counts column")
    x = _column(data, args.x, names[:1], args.file)
    y = _column(data, args.y, names[1:2], args.file)
    try:
        fit = fit_exponential_decay(np.column_stack([x, y]), poisson_weights=args.poisson)
    except FitError as exc:
        raise CliError("fit", str(exc)) from None
    print(json.dumps({"A": fit.A, "T": fit.T, "g0": fit.g0, "residual_norm": fit.residual_norm,
                      "uncertainties": fit.parameter_uncertainties}, sort_keys=True))
    return 0


def _cmd_template(args) -> int:
    config = default_spec(args.scenario).base_config if args.scenario else InterferometerConfig()
    sys.stdout.write(dumps_config(config))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in ("run", *(n.value for n in ScenarioName)):
            return _cmd_scenario(args)
        handler = {"reproduce": _cmd_reproduce, "trials": _cmd_trials, "fit-fringe": _cmd_fit_fringe,
                   "fit-decay": _cmd_fit_decay, "config-template": _cmd_template}[args.command]
        return handler(args)
    except CliError as exc:
        category, message = exc.category, str(exc)
    except OverlapConvergenceError as exc:
        category, message = "numerics", str(exc)
    except KeyboardInterrupt:
        category, message = "internal", "interrupted"
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
