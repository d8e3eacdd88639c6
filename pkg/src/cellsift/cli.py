"""Command line interface: detect, bench, theory.

Exit codes: 0 on success, 1 for usage errors, 2 for data errors
(unreadable or malformed input, degenerate matrices).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bench import (
    expected_contaminated_row_fraction,
    load_grid_config,
    run_experiment,
    substructure_theory,
    write_results_csv,
)
from .cellmap import CellMapSpec, render_cell_map
from .engine import DetectionParams, run_pipeline
from .io import DEFAULT_NA_TOKENS, read_csv, write_flags, write_imputed, write_row_flags
from .matrix import NoAnalyzableColumnsError
from .robust import RobustTuning

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; we reserve 2 for data
    errors, so usage problems are rerouted through UsageError."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cellsift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    detect = sub.add_parser("detect", help="flag deviating cells in a CSV matrix")
    detect.add_argument("--input", required=True, help="input CSV file")
    detect.add_argument("--tolerance", type=float, default=0.99)
    detect.add_argument("--corrlim", type=float, default=0.5)
    detect.add_argument("--iterations", type=int, default=0,
                        help="extra refinement iterations")
    detect.add_argument("--k-neighbors", type=int, default=None)
    detect.add_argument("--no-row-flags", action="store_true")
    detect.add_argument("--combination", default="weighted-mean",
                        choices=["weighted-mean", "weighted-median"])
    detect.add_argument("--min-distinct", type=int, default=3)
    detect.add_argument("--max-missing-frac", type=float, default=0.5)
    detect.add_argument("--na-token", action="append", default=None,
                        metavar="TOKEN",
                        help="missing-value token (repeatable; default NA, '', NaN)")
    self_group = detect.add_mutually_exclusive_group()
    self_group.add_argument("--include-self", dest="include_self",
                            action="store_true", default=True)
    self_group.add_argument("--exclude-self", dest="include_self",
                            action="store_false")
    detect.add_argument("--flags-out", metavar="PATH")
    detect.add_argument("--imputed-out", metavar="PATH")
    detect.add_argument("--rowflags-out", metavar="PATH")
    detect.add_argument("--cellmap-out", metavar="PATH")
    detect.add_argument("--block-rows", type=int, default=1)
    detect.add_argument("--block-cols", type=int, default=1)
    detect.set_defaults(handler=_cmd_detect)

    bench = sub.add_parser("bench", help="run a benchmark grid from a config file")
    bench.add_argument("--config", required=True, help="flat key=value grid file")
    bench.add_argument("--out", required=True, help="output CSV path")
    bench.add_argument("--quiet", action="store_true")
    bench.set_defaults(handler=_cmd_bench)

    theory = sub.add_parser("theory", help="print contamination propagation limits")
    theory.add_argument("--eps", type=float, required=True,
                        help="cellwise contamination fraction")
    theory.add_argument("--q", type=int, default=None,
                        help="subset size for substructure limits")
    theory.add_argument("--d", type=int, default=None,
                        help="row width for the contaminated-row fraction")
    theory.set_defaults(handler=_cmd_theory)

    return parser


def _cmd_detect(args) -> int:
    na_tokens = tuple(args.na_token) if args.na_token else DEFAULT_NA_TOKENS
    table = read_csv(args.input, na_tokens)
    params = DetectionParams(
        tuning=RobustTuning(tolerance=args.tolerance),
        corrlim=args.corrlim,
        combination=args.combination,
        include_self=args.include_self,
        extra_iterations=args.iterations,
        k_neighbors=args.k_neighbors,
        flag_rows=not args.no_row_flags,
        min_distinct=args.min_distinct,
        max_missing_frac=args.max_missing_frac,
    )
    result = run_pipeline(table.matrix, params)

    if args.flags_out:
        write_flags(result, args.flags_out)
    if args.rowflags_out:
        write_row_flags(result, args.rowflags_out)
    if args.imputed_out:
        write_imputed(table, result.imputed, args.imputed_out)
    if args.cellmap_out:
        spec = CellMapSpec(
            block_rows=args.block_rows,
            block_cols=args.block_cols,
            show_row_flags=not args.no_row_flags,
        )
        render_cell_map(result, spec, args.cellmap_out)

    analyzed = result.analyzed
    n, da = analyzed.shape
    n_cells = int((result.cell_flags != 0).sum())
    n_rows_flagged = int(result.row_flags.sum())
    print(f"rows: {n}")
    print(f"columns analyzed: {da} of {len(table.header)}")
    print(f"flagged cells: {n_cells} ({100.0 * n_cells / (n * da):.2f}% of analyzed)")
    print(f"flagged rows: {n_rows_flagged}")
    dropped = result.report.describe(table.matrix.col_labels)
    for name in table.text_columns:
        dropped.append(f"{name}: non-numeric")
    if table.label_column is not None:
        dropped.append(f"{table.label_column}: row labels")
    if dropped:
        print("columns not analyzed:")
        for line in dropped:
            print(f"  {line}")
    return 0


def _cmd_bench(args) -> int:
    points, replications, seed = load_grid_config(args.config)

    def progress(point, index, total):
        if not args.quiet:
            print(
                f"[{index + 1}/{total}] {point.model} n={point.n} d={point.d} "
                f"eps={point.eps} gamma={point.gamma} {point.mode} "
                f"{point.detector}",
                flush=True,
            )

    rows = run_experiment(points, replications, seed, progress=progress)
    write_results_csv(rows, args.out)
    if not args.quiet:
        print(f"wrote {len(rows)} result rows to {args.out} (seed {seed})")
    return 0


def _cmd_theory(args) -> int:
    if args.q is None and args.d is None:
        raise UsageError("theory needs --q and/or --d")
    if args.q is not None:
        breakdown, clean_prob = substructure_theory(args.q, args.eps)
        print(f"subset size q={args.q}, contamination eps={args.eps}")
        print(f"breakdown fraction: {100.0 * breakdown:.1f}%")
        print(f"clean subrow probability: {100.0 * clean_prob:.1f}%")
    if args.d is not None:
        frac = expected_contaminated_row_fraction(args.eps, args.d)
        print(
            f"expected contaminated row fraction (eps={args.eps}, "
            f"d={args.d}): {100.0 * frac:.1f}%"
        )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"cellsift: error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"cellsift: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, NoAnalyzableColumnsError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"cellsift: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
