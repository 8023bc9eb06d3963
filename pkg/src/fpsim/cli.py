"""Command-line entry point.

    fpsim run <config.json> --outdir DIR [--parallel] [--seed S] [--keep-timing]
    fpsim validate <config.json>

`run` executes every sweep cell (standard once, plus each pruning
strategy at each listed rate) and writes records.csv, summary.csv, and
map_vs_round.svg into --outdir. Exit codes: 0 success, 1 runtime
failure, 2 invalid configuration.

wall_ms is written as 0 unless --keep-timing is given, so that repeated
runs of the same config produce byte-identical records.csv.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor

from fpsim.config import ConfigError, ExperimentConfig, load_config
from fpsim.federation import (
    CSV_HEADER,
    record_csv_row,
    run_experiment,
    worker_count,
)


def _run_cell(cfg: ExperimentConfig, strategy: str, q: float,
              threads: int):
    records = run_experiment(
        cfg.federation_config(q), strategy, cfg.data, cfg.arch,
        threads=threads,
    )
    return strategy, q, records


def _run_cell_star(args):
    return _run_cell(*args)


def _effective_config_json(cfg: ExperimentConfig) -> str:
    as_dict = dataclasses.asdict(cfg)
    return json.dumps(as_dict, indent=2, default=list)


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return 2
    print(_effective_config_json(cfg))
    return 0


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    try:
        os.makedirs(args.outdir, exist_ok=True)
        cells = cfg.cells()
        if args.parallel and len(cells) > 1:
            # One process per cell; clients inside each run sequentially
            # to avoid oversubscribing cores.
            max_workers = min(len(cells), worker_count())
            with ProcessPoolExecutor(max_workers=max_workers) as ex:
                results = list(
                    ex.map(
                        _run_cell_star,
                        [(cfg, s, q, 1) for s, q in cells],
                    )
                )
        else:
            threads = worker_count()
            results = [_run_cell(cfg, s, q, threads) for s, q in cells]

        records_path = os.path.join(args.outdir, "records.csv")
        lines = [CSV_HEADER]
        for _, _, records in results:
            lines += [
                record_csv_row(r, keep_timing=args.keep_timing)
                for r in records
            ]
        with open(records_path, "w", newline="") as f:
            f.write("\n".join(lines) + "\n")

        summary_path = os.path.join(args.outdir, "summary.csv")
        rows = ["strategy,q,final_map"]
        rows += [
            f"{s},{q:g},{records[-1].test_map:.10f}"
            for s, q, records in results
        ]
        with open(summary_path, "w", newline="") as f:
            f.write("\n".join(rows) + "\n")

        from fpsim.plotting import plot_records

        plot_records(
            results,
            os.path.join(args.outdir, "map_vs_round.svg"),
            warmup=cfg.warmup,
        )
    except Exception:
        traceback.print_exc()
        return 1
    print(f"wrote {records_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpsim",
        description=(
            "Deterministic federated-learning simulator with "
            "relevance-guided one-time pruning"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a sweep and write results")
    run_p.add_argument("config", help="path to JSON experiment config")
    run_p.add_argument("--outdir", required=True,
                       help="directory for records.csv/summary.csv/SVG")
    run_p.add_argument("--parallel", action="store_true",
                       help="run sweep cells in parallel processes")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    run_p.add_argument("--keep-timing", action="store_true",
                       help="record real wall_ms instead of 0")
    run_p.set_defaults(func=cmd_run)

    val_p = sub.add_parser("validate",
                           help="check a config and print effective values")
    val_p.add_argument("config", help="path to JSON experiment config")
    val_p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
