"""``tfgd`` command-line entry point.

Subcommands::

    tfgd weights verify --alpha 0.6 --lambda 0.5 --max-j 1000000 --tol 1e-8
    tfgd data prepare --input data/wdbc.data --seed 42 --test-fraction 0.2 --out split.csv
    tfgd run configs/wdbc_table2.cfg
    tfgd bench --dims 1000,10000,100000 --steps 100

Exit status: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import data as data_mod
from .harness import (
    CONVERGENCE_DEFINITION,
    DivergenceError,
    ExperimentConfig,
    QuadraticSpec,
    WDBCSpec,
    bench_scaling,
    run_experiment,
    summary_rows,
    write_reports,
    SUMMARY_HEADER,
)
from .optimizer import Mode, OptimizerConfig, Schedule
from .weights import (
    Convention,
    WeightParams,
    alignment_coefficient,
    default_window,
    has_closed_form,
    raw_weights,
    tempered_partial_sum,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    """Invalid flags or configuration (exit status 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# config files


TOP_KEYS = {
    "problem",
    "epochs",
    "seed",
    "batch_size",
    "output_dir",
    "convergence_tol",
    "data.path",
    "data.test_fraction",
    "model.l2",
    "quadratic.dim",
    "quadratic.scale",
    "quadratic.center",
    "quadratic.sigma",
}
OPT_KEYS = {"mode", "alpha", "lambda", "eta0", "schedule", "window", "convention", "tail_tolerance"}


@dataclass
class RunConfig:
    experiment: ExperimentConfig
    output_dir: Path
    source: Path | None = None
    raw: dict[str, str] = field(default_factory=dict)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise UsageError(f"line {lineno}: empty key")
        if key in out:
            raise UsageError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _num(raw: dict[str, str], key: str, kind, default):
    if key not in raw:
        return default
    try:
        return kind(raw[key])
    except ValueError:
        raise UsageError(f"{key}: cannot parse {raw[key]!r} as {kind.__name__}") from None


def _optimizer(name: str, entries: dict[str, str]) -> OptimizerConfig:
    try:
        mode = Mode(entries.get("mode", "recursive").lower())
        schedule = Schedule(entries.get("schedule", "constant").lower())
        convention = Convention(entries.get("convention", "rising").lower())
        alpha = float(entries.get("alpha", "1.0" if mode is Mode.SGD else "0.6"))
        lam = float(entries.get("lambda", "0.5"))
        eta0 = float(entries["eta0"]) if "eta0" in entries else 0.1
        window = int(entries["window"]) if "window" in entries else None
        tol = float(entries.get("tail_tolerance", "1e-8"))
        return OptimizerConfig(mode, WeightParams(alpha, lam, convention), eta0, schedule, window, tol)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"optimizer {name!r}: {exc}") from None


def build_run_config(raw: dict[str, str], base_dir: Path | None = None) -> RunConfig:
    optimizers: dict[str, dict[str, str]] = {}
    for key, value in raw.items():
        if key.startswith("opt."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in OPT_KEYS:
                raise UsageError(f"unknown key {key!r}")
            optimizers.setdefault(parts[1], {})[parts[2]] = value
        elif key not in TOP_KEYS:
            raise UsageError(f"unknown key {key!r}")
    if not optimizers:
        raise UsageError("config defines no optimizers (opt.<name>.<field> keys)")

    base = base_dir or Path.cwd()
    problem_kind = raw.get("problem", "wdbc").lower()
    if problem_kind == "wdbc":
        if "data.path" not in raw:
            raise UsageError("problem = wdbc requires data.path")
        path = Path(raw["data.path"])
        if not path.is_absolute():
            path = base / path
        problem = WDBCSpec(
            str(path.resolve()),
            _num(raw, "data.test_fraction", float, 0.2),
            _num(raw, "model.l2", float, 0.0),
        )
    elif problem_kind == "quadratic":
        problem = QuadraticSpec(
            _num(raw, "quadratic.dim", int, 10),
            _num(raw, "quadratic.scale", float, 1.0),
            _num(raw, "quadratic.center", float, 1.0),
            _num(raw, "quadratic.sigma", float, 0.0),
        )
    else:
        raise UsageError(f"problem: expected 'wdbc' or 'quadratic', got {problem_kind!r}")

    batch = raw.get("batch_size", "full").lower()
    batch_size = None if batch in ("full", "0") else _num(raw, "batch_size", int, None)
    opts = {name: _optimizer(name, e) for name, e in optimizers.items()}
    try:
        experiment = ExperimentConfig(
            problem,
            opts,
            epochs=_num(raw, "epochs", int, 100),
            batch_size=batch_size,
            seed=_num(raw, "seed", int, 42),
            convergence_tol=_num(raw, "convergence_tol", float, 1e-2),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(raw.get("output_dir", "results"))
    if not out.is_absolute():
        out = base / out
    return RunConfig(experiment, out.resolve(), raw=raw)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    cfg = build_run_config(parse_config_text(text), path.parent)
    cfg.source = path
    return cfg


# ---------------------------------------------------------------------------
# commands


def cmd_weights_verify(args) -> int:
    try:
        params = WeightParams(args.alpha, args.lam, Convention(args.convention))
    except ValueError as exc:
        raise UsageError(f"{exc} (valid ranges: 0 < alpha <= 1, lambda > 0)") from None
    if args.max_j < 0:
        raise UsageError("--max-j must be non-negative")
    closed = alignment_coefficient(params)
    # one row per j while the tempered term still moves the partial sum,
    # then a final row at j = max_j
    shown = min(args.max_j, default_window(params, 1e-17))
    raw = raw_weights(args.max_j, params)
    tempered = raw[: shown + 1] * np.exp(-params.lam * np.arange(shown + 1))
    partial = np.cumsum(tempered)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["j", "w", "tempered", "partial_sum", "closed_form", "rel_err"])
    for j in range(shown + 1):
        rel = abs(float(partial[j]) - closed) / closed
        w.writerow([j, repr(float(raw[j])), repr(float(tempered[j])), repr(float(partial[j])), repr(closed), repr(rel)])
    final = tempered_partial_sum(params, args.max_j)
    rel = abs(final - closed) / closed
    if shown < args.max_j:
        t_last = float(raw[-1]) * math.exp(-params.lam * args.max_j)
        w.writerow([args.max_j, repr(float(raw[-1])), repr(t_last), repr(final), repr(closed), repr(rel)])
    if not has_closed_form(params):
        print("# GL convention: closed_form is the numerically summed series", file=sys.stderr)
    print(f"# max_j={args.max_j} rel_err={rel:.3e} tol={args.tol:g}", file=sys.stderr)
    return EXIT_OK if rel <= args.tol else EXIT_INVALID


def cmd_data_prepare(args) -> int:
    try:
        ds = data_mod.load_wdbc(args.input)
    except OSError as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except data_mod.DataFormatError as exc:
        raise UsageError(str(exc)) from None
    try:
        sp = data_mod.split(ds, args.seed, args.test_fraction)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        data_mod.write_manifest(sp, args.out)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{len(ds)} rows: {sp.train.size} train, {sp.test.size} test -> {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_run_config(args.config)
    spec = cfg.experiment.problem
    if isinstance(spec, WDBCSpec) and not Path(spec.path).is_file():
        print(f"error: dataset not found: {spec.path}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        reports = run_experiment(cfg.experiment)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except data_mod.DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        write_reports(reports, cfg.output_dir)
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    rows = summary_rows(reports)
    widths = [max(len(h), 12) for h in SUMMARY_HEADER]
    print("  ".join(h.ljust(w) for h, w in zip(SUMMARY_HEADER, widths)))
    for r in rows:
        cells = [r[0], f"{r[1]:.4f}", f"{r[2]:.5f}", str(r[3]), f"{r[4]:.1f}", f"{r[5]:.1f}"]
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    tol = cfg.experiment.convergence_tol
    print(f"# {CONVERGENCE_DEFINITION}, tol = {tol:g}")
    for name, rep in reports.items():
        if not rep.convergence.converged:
            print(f"# {name}: never entered the band before the final epoch")
    print(f"# results written to {cfg.output_dir}")
    return EXIT_OK


def _dims(text: str) -> list[int]:
    try:
        dims = [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid dimension list {text!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError("dimensions must be positive integers")
    return dims


def cmd_bench(args) -> int:
    try:
        params = WeightParams(args.alpha, args.lam)
        cfg = OptimizerConfig(Mode.RECURSIVE, params, args.eta)
        rows = bench_scaling(sorted(args.dims), args.steps, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["d", "tfgd_step_us", "sgd_step_us", "memory_units"])
    for r in rows:
        w.writerow([r.d, repr(r.tfgd_step_us), repr(r.sgd_step_us), repr(r.memory_units)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tfgd", description="Tempered fractional gradient descent experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    weights = sub.add_parser("weights", help="weight-sequence checks")
    wsub = weights.add_subparsers(dest="action", required=True, parser_class=_Parser)
    verify = wsub.add_parser("verify", help="partial sums against the closed form, as CSV")
    verify.add_argument("--alpha", type=float, required=True)
    verify.add_argument("--lambda", dest="lam", type=float, required=True)
    verify.add_argument("--max-j", type=int, default=1000)
    verify.add_argument("--tol", type=float, default=1e-8)
    verify.add_argument("--convention", choices=[c.value for c in Convention], default="rising")
    verify.set_defaults(func=cmd_weights_verify)

    data = sub.add_parser("data", help="dataset preparation")
    dsub = data.add_subparsers(dest="action", required=True, parser_class=_Parser)
    prep = dsub.add_parser("prepare", help="write a train/test split manifest")
    prep.add_argument("--input", required=True)
    prep.add_argument("--seed", type=int, default=42)
    prep.add_argument("--test-fraction", type=float, default=0.2)
    prep.add_argument("--out", required=True)
    prep.set_defaults(func=cmd_data_prepare)

    run = sub.add_parser("run", help="train optimizers from a config file")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="per-step time scaling, TFGD vs SGD")
    bench.add_argument("--dims", type=_dims, default=[1000, 10000, 100000])
    bench.add_argument("--steps", type=int, default=100)
    bench.add_argument("--alpha", type=float, default=0.6)
    bench.add_argument("--lambda", dest="lam", type=float, default=0.5)
    bench.add_argument("--eta", type=float, default=0.1)
    bench.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
