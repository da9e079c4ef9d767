"""Command-line front end: ``run``, ``plot`` and ``snapshot-dump``.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigError, FormatError, OutputError
from ..store import UNLIMITED, restore
from .config import KEYS, parse_config
from .report import METRIC_NAMES, emit_plots
from .runner import AGGREGATE_FILE, final_records, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

log = logging.getLogger("mfec_sa")


def _add_run(sub) -> None:
    p = sub.add_parser("run", help="train agents over several seeds and write per-epoch CSVs")
    p.add_argument("--config", metavar="FILE", help="key=value file; flags given here take precedence")
    p.add_argument("--env", help="gridworld, noisy-gridworld or scroller (default gridworld)")
    p.add_argument("--eps-in", help="input-space merge threshold (default 0: no aggregation)")
    p.add_argument("--eps-out", help="return-space merge threshold (default 100)")
    p.add_argument("--k", help="neighbours per estimate (default 11)")
    p.add_argument("--epsilon", help="exploration rate (default 0.005)")
    p.add_argument("--gamma", help="discount factor (default 1)")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", help="single seed")
    seeds.add_argument("--seeds", help="comma list or inclusive range such as 0-4 (default 0-4)")
    p.add_argument("--total-frames", help="environment steps per seed (default 200000)")
    p.add_argument("--epoch-frames", help="steps between assessments (default 10000)")
    p.add_argument("--capacity", help="entries per action buffer, or 'unlimited' (default 100)")
    p.add_argument("--proj-dim", help="random projection output size (default 128)")
    p.add_argument("--out-dir", help="results directory (default ./results)")
    p.add_argument("--plot", action="store_true", help="also render SVG figures into the results directory")


def _add_plot(sub) -> None:
    p = sub.add_parser("plot", help="render mean +/- standard-error curves from result CSVs")
    p.add_argument("--metric", choices=sorted(METRIC_NAMES) + ["all"], default="all")
    p.add_argument("--inputs", nargs="+", required=True, metavar="CSV",
                   help="aggregate.csv or seed_<s>.csv files, one curve each")
    p.add_argument("--labels", nargs="+", help="legend labels, one per input")
    p.add_argument("--out", required=True,
                   help="SVG file for a single metric, or a directory when --metric all")


def _add_dump(sub) -> None:
    p = sub.add_parser("snapshot-dump", help="print a readable summary of a store snapshot")
    p.add_argument("path")
    p.add_argument("--entries", type=int, default=5, metavar="N",
                   help="entries to list per buffer (default 5, -1 for all)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfec-sa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_plot(sub)
    _add_dump(sub)
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    given = {key: getattr(args, key.replace("-", "_")) for key in KEYS}
    cfg = parse_config(given, args.config)
    records = run_experiment(cfg)
    for seed, rec in sorted(final_records(records).items()):
        print(f"seed {seed}: {rec.epoch} epochs, {rec.frames} frames, final avg {rec.avg_score:.4g}, "
              f"peak {rec.peak_score:.4g}, total size {rec.total_size}")
    if not records:
        print("no frames requested; wrote header-only CSVs")
    if args.plot and records:
        for path in emit_plots([cfg.out_dir / AGGREGATE_FILE], cfg.out_dir):
            print(f"wrote {path}")
    print(f"results in {cfg.out_dir}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    metrics = None if args.metric == "all" else [args.metric]
    for path in emit_plots(args.inputs, args.out, metrics=metrics, labels=args.labels):
        print(f"wrote {path}")
    return EXIT_OK


def dump_text(data: bytes, max_entries: int = 5) -> str:
    store = restore(data)
    cap = "unlimited" if store.capacity == UNLIMITED else str(store.capacity)
    lines = [f"store: {store.num_actions} actions, key dim {store.dim}, capacity {cap}, "
             f"{store.total_size()} entries"]
    for a, buf in enumerate(store.buffers):
        entries = buf.entries()
        counts = sum(e.count for e in entries)
        lines.append(f"action {a}: {len(entries)} entries, aggregated count {counts}, "
                     f"tick {buf.tick_counter}, next insert index {buf.next_insert_index}")
        if entries:
            qs = np.array([e.q for e in entries])
            lines.append(f"  q min {qs.min():.6g}  mean {qs.mean():.6g}  max {qs.max():.6g}")
        shown = entries if max_entries < 0 else entries[:max_entries]
        for e in shown:
            lines.append(f"  [{e.insert_index}] q={e.q:.6g} count={e.count} last_access={e.last_access} "
                         f"|key|={np.linalg.norm(e.key):.6g}")
        if len(shown) < len(entries):
            lines.append(f"  ... {len(entries) - len(shown)} more")
    return "\n".join(lines)


def cmd_dump(args: argparse.Namespace) -> int:
    try:
        data = Path(args.path).read_bytes()
    except OSError as exc:
        raise OutputError(f"cannot read {args.path}: {exc.strerror or exc}") from exc
    print(dump_text(data, args.entries))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "plot": cmd_plot, "snapshot-dump": cmd_dump}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
