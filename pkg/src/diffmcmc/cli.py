"""Command-line interface: train, sample, eval, table, plot."""

from __future__ import annotations

import argparse
import os
import sys

from . import experiment as ex
from . import plots


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="flat key=value config file")
    parser.add_argument("--seed", type=int, metavar="N", help="master seed")
    parser.add_argument("--runs", type=int, metavar="N", help="number of independent runs")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--grid", metavar="ENTRY[,ENTRY...]", help="grid entries, e.g. score/HMC-5-line")
    parser.add_argument("--w2-convention", choices=("sum", "mean"), help="W2 normalisation")
    parser.add_argument("--jobs", type=int, metavar="N", help="parallel worker processes")


def _config_from_args(args: argparse.Namespace) -> ex.ExperimentConfig:
    file_values = ex.load_config_file(args.config) if args.config else {}
    grid = tuple(g.strip() for g in args.grid.split(",") if g.strip()) if args.grid else None
    return ex.build_config(
        file_values,
        master_seed=args.seed,
        runs=args.runs,
        out_dir=args.out,
        grid=grid,
        w2_convention=args.w2_convention,
        jobs=args.jobs,
    )


def main(argv=None) -> int:
    ex.tune_allocator()
    parser = argparse.ArgumentParser(prog="diffmcmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, desc in (
        ("train", "train the component models for every run"),
        ("sample", "sample every grid entry for every run"),
        ("eval", "compute metrics for existing sample files"),
        ("table", "aggregate metrics into table1.csv / table1.txt"),
    ):
        p = sub.add_parser(name, help=desc)
        _add_common(p)

    plot_p = sub.add_parser("plot", help="render sample CSVs as SVG scatter plots")
    plot_p.add_argument("files", nargs="+", metavar="CSV", help="sample files to plot")
    plot_p.add_argument("--out", metavar="DIR", default=".", help="directory for the SVGs")

    args = parser.parse_args(argv)

    if args.command == "plot":
        failures = 0
        os.makedirs(args.out, exist_ok=True)
        for path in args.files:
            svg = os.path.join(args.out, os.path.basename(path).removesuffix(".csv") + ".svg")
            try:
                n = plots.plot_samples_csv(path, svg)
            except (OSError, ValueError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                failures += 1
                continue
            print(f"{svg}: {n} points")
        return 1 if failures else 0

    try:
        cfg = _config_from_args(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "train":
        paths = ex.cmd_train(cfg)
        print(f"trained {len(paths)} checkpoints under {cfg.out_dir}")
        return 0

    if args.command == "sample":
        paths = ex.cmd_sample(cfg)
        print(f"wrote {len(paths)} sample files under {cfg.out_dir}")
        return 0

    if args.command == "eval":
        rows, missing = ex.cmd_eval(cfg)
        print(f"wrote {len(rows)} metric rows to {ex.metrics_path(cfg)}")
        for path in missing:
            print(f"missing: {path}", file=sys.stderr)
        return 1 if missing else 0

    rows, missing = ex.cmd_table(cfg)
    print(ex.render_table(rows), end="")
    for path in missing:
        print(f"absent: {path}", file=sys.stderr)
    return 1 if missing else 0


if __name__ == "__main__":
    sys.exit(main())
