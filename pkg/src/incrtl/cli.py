"""Command-line interface: ``incrtl {fit,gain,simulate,bench}``.

Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import IncrtlError, NumericalError, ReplicateError, ValidationError, DimensionMismatch

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


def _grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="incrtl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model on source/target CSV files")
    f.add_argument("--source", required=True, help="source CSV (historical features only)")
    f.add_argument("--target", required=True, help="target CSV (historical then new features)")
    f.add_argument("--label", required=True, help="label column name")
    f.add_argument("--method", choices=("ols", "dp", "dsft", "dsft-nl"), default="dp")
    f.add_argument("--out", required=True, help="model file to write")
    f.add_argument("--intercept", action="store_true", help="prepend a constant-1 historical column")
    f.add_argument("--seed", type=int, default=0, help="accepted for uniformity; fitting is deterministic")

    g = sub.add_parser("gain", help="empirical transfer gain over a target-size sweep")
    g.add_argument("--experiment", choices=("alpha", "meanshift"), default="alpha")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="CSV file of gain reports")
    _sim_overrides(g)

    s = sub.add_parser("simulate", help="run a simulation experiment and write plot-ready CSV")
    s.add_argument("--experiment", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    _sim_overrides(s)

    b = sub.add_parser("bench", help="run a benchmark config")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--seed", type=int, default=None, help="override the config seed")
    b.add_argument("--correction", choices=("none", "holm", "bonferroni"), default=None)
    return p


def _sim_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-replicates", type=int, default=200)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--n-S", dest="n_S", type=int, default=None)
    p.add_argument("--n-T", dest="n_T", type=int, default=None)
    p.add_argument("--grid", type=_grid, default=None, help="comma-separated sweep values")


def _with_intercept(data):
    from .estimators import Dataset

    cols = ("1",) + (data.columns or tuple(f"x{j}" for j in range(data.d)))
    return Dataset(np.hstack([np.ones((data.n, 1)), data.X]), data.y, None, cols)


def cmd_fit(args) -> int:
    from .bench import fit_method, load_csv
    from .estimators import Dataset
    from .modelio import save_model

    source = load_csv(args.source, args.label)
    target = load_csv(args.target, args.label)
    if args.intercept:
        source, target = _with_intercept(source), _with_intercept(target)
    if target.d <= source.d:
        raise DimensionMismatch(
            f"target must have more feature columns than source (source {source.d}, target {target.d})"
        )
    if tuple(target.columns[: source.d]) != tuple(source.columns):
        raise DimensionMismatch("the target's leading feature columns must match the source columns in order")
    target = Dataset(target.X, target.y, source.d, target.columns)
    model = fit_method(args.method, source, target)
    save_model(args.out, model, target.columns)
    w = model.weights
    a_S = f"{w.alpha_S:.6g}" if w else "-"
    a_T = f"{w.alpha_T:.6g}" if w else "-"
    print(f"method={args.method} d_S={source.d} d_T={target.d} alpha_S={a_S} alpha_T={a_T}")
    return EXIT_OK


def _sim_kwargs(args) -> dict:
    kw = dict(seed=args.seed, n_replicates=args.n_replicates, n_test=args.n_test, n_S=args.n_S, n_T=args.n_T)
    if args.grid is not None:
        kw["grid"] = args.grid
    return kw


def cmd_gain(args) -> int:
    from .gain import GainMode, empirical_gain, write_gain_csv
    from .experiments import DEFAULTS, base_spec
    from .simgen import part_seeds, sample, sweep

    kw = _sim_kwargs(args)
    grid = tuple(int(v) for v in kw.pop("grid", DEFAULTS[args.experiment]["grid"]))
    base = base_spec(args.experiment, args.seed, args.n_S, args.n_T, args.n_test)
    test = sample(base, "test", part_seeds(args.seed)[2])
    modes = (
        (GainMode.ANALYTIC_WEIGHTS, GainMode.ESTIMATED_WEIGHTS)
        if args.experiment == "alpha"
        else (GainMode.TRUE_MEAN_SHIFT, GainMode.SAMPLE_MEAN_SHIFT)
    )
    reports = [
        empirical_gain(spec, test, args.n_replicates, mode) for spec in sweep(base, "n_T", grid) for mode in modes
    ]
    write_gain_csv(args.out, reports)
    for r in reports:
        print(f"n_T={r.n_T:<3d} {r.mode.value:<17s} gain={r.mean_gain:+.4f} se={r.stderr:.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .experiments import EXPERIMENTS, run_experiment, write_result

    if args.experiment not in EXPERIMENTS:
        print(f"incrtl simulate: unknown experiment {args.experiment!r}; choose one of {', '.join(EXPERIMENTS)}",
              file=sys.stderr)
        return EXIT_USAGE
    kw = _sim_kwargs(args)
    if "grid" in kw and args.experiment in ("alpha", "meanshift", "nonadditive"):
        kw["grid"] = tuple(int(v) for v in kw["grid"])
    result = run_experiment(args.experiment, **kw)
    out = Path(args.out) / f"{args.experiment}.csv"
    write_result(result, out)
    print(f"wrote {out} ({len(result.points)} rows)")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import load_experiment, markdown_table, run_benchmark, write_outputs

    cfg = Path(args.config)
    spec = load_experiment(cfg)
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    if args.correction is not None:
        spec = spec.replace(correction=args.correction)
    result = run_benchmark(spec, base_dir=cfg.parent)
    write_outputs(result, args.out)
    print(markdown_table(result))
    for t in result.tests:
        flag = "significant" if t.significant else "n.s."
        print(f"  {t.method_a} vs {t.method_b}: p={t.p_value:.3g} ({spec.correction}: {flag})")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "gain": cmd_gain, "simulate": cmd_simulate, "bench": cmd_bench}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ReplicateError):
        return _exit_code(exc.cause)
    if isinstance(exc, ValidationError):
        return EXIT_USAGE
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    return EXIT_NUMERIC


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except IncrtlError as exc:
        print(f"incrtl {args.command}: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
