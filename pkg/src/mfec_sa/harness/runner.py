"""Multi-seed experiment runs with per-epoch metrics written as CSV."""

from __future__ import annotations

import csv
import logging
import math
import statistics
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ..agent import AgentConfig, run_episode
from ..embedding import new_projection
from ..envs import make_env
from ..errors import OutputError
from ..store import UNLIMITED, QECStore, snapshot
from .config import ExperimentConfig

log = logging.getLogger(__name__)

SEED_COLUMNS = ("seed", "epoch", "frames", "episodes", "avg_score", "peak_score", "total_size",
                "buffer_sizes")
METRICS = ("avg_score", "peak_score", "total_size")
AGGREGATE_COLUMNS = ("epoch", "n_seeds", "frames_mean") + tuple(
    f"{m}_{s}" for m in METRICS for s in ("mean", "se"))
AGGREGATE_FILE = "aggregate.csv"
TIMINGS_FILE = "timings.csv"


def seed_csv_name(seed: int) -> str:
    return f"seed_{seed}.csv"


def snapshot_name(seed: int) -> str:
    return f"store_seed_{seed}.bin"


@dataclass(frozen=True)
class EpochRecord:
    seed: int
    epoch: int
    frames: int
    """Environment steps taken by the end of this epoch, counted from the start of the run."""
    episodes: int
    """Episodes that ended in this epoch."""
    avg_score: float
    peak_score: float
    total_size: int
    buffer_sizes: tuple[int, ...]
    wall_seconds: float = 0.0
    """Time spent in this epoch; kept out of the CSV so reruns compare byte-for-byte."""

    def csv_row(self) -> list[str]:
        return [str(self.seed), str(self.epoch), str(self.frames), str(self.episodes),
                fmt_float(self.avg_score), fmt_float(self.peak_score), str(self.total_size),
                ";".join(str(n) for n in self.buffer_sizes)]


def fmt_float(x: float) -> str:
    """17 significant digits: parses back to the identical double."""
    return "%.17g" % x


@dataclass
class SeedRun:
    seed: int
    records: list[EpochRecord]
    store: QECStore


def ensure_writable(out_dir: Path) -> None:
    """Create ``out_dir`` and prove a file can be written there, or raise OutputError."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out_dir, prefix=".probe-"):
            pass
    except OSError as exc:
        raise OutputError(f"output directory {out_dir} is not writable: {exc.strerror or exc}") from exc


def _seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for action selection and environment resets."""
    agent_ss, env_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(agent_ss)), np.random.Generator(np.random.PCG64(env_ss))


def run_seed(cfg: ExperimentConfig, seed: int,
             on_epoch: Callable[[EpochRecord], None] | None = None) -> SeedRun:
    """Train a fresh agent for ``cfg.total_frames`` steps, closing an epoch every ``cfg.epoch_frames``.

    Episodes always run to the end; an episode belongs to the epoch in which
    it finishes, so an epoch can hold more than ``epoch_frames`` steps.
    """
    env = make_env(cfg.env, **dict(cfg.env_params))
    proj = new_projection(seed, env.obs_dim, cfg.proj_dim)
    store = QECStore(env.num_actions, cfg.proj_dim, cfg.capacity)
    agent = AgentConfig(epsilon=cfg.epsilon, k=cfg.k, eps_in=cfg.eps_in, eps_out=cfg.eps_out,
                        gamma=cfg.gamma, seed=seed)
    rng, env_rng = _seed_streams(seed)

    records: list[EpochRecord] = []
    frames = 0
    epoch_steps = 0
    scores: list[float] = []
    started = time.perf_counter()
    while frames < cfg.total_frames:
        result = run_episode(env, store, proj, agent, rng,
                             reset_seed=int(env_rng.integers(2**63)), detail=False)
        steps = len(result.trace)
        frames += steps
        epoch_steps += steps
        scores.append(result.score)
        if epoch_steps >= cfg.epoch_frames or frames >= cfg.total_frames:
            now = time.perf_counter()
            rec = EpochRecord(
                seed=seed, epoch=len(records) + 1, frames=frames, episodes=len(scores),
                avg_score=math.fsum(scores) / len(scores), peak_score=max(scores),
                total_size=store.total_size(), buffer_sizes=tuple(store.buffer_sizes()),
                wall_seconds=now - started)
            records.append(rec)
            if on_epoch is not None:
                on_epoch(rec)
            started = now
            epoch_steps = 0
            scores = []
    return SeedRun(seed, records, store)


def aggregate(records_by_seed: Sequence[Sequence[EpochRecord]]) -> list[dict[str, float]]:
    """Per-epoch mean and standard error across seeds.

    Standard error is the sample standard deviation over sqrt(n); it is nan
    when fewer than two seeds reached that epoch.
    """
    by_epoch: dict[int, list[EpochRecord]] = {}
    for records in records_by_seed:
        for rec in records:
            by_epoch.setdefault(rec.epoch, []).append(rec)
    rows = []
    for epoch in sorted(by_epoch):
        recs = by_epoch[epoch]
        n = len(recs)
        row: dict[str, float] = {"epoch": epoch, "n_seeds": n,
                                 "frames_mean": math.fsum(r.frames for r in recs) / n}
        for m in METRICS:
            values = [float(getattr(r, m)) for r in recs]
            row[f"{m}_mean"] = math.fsum(values) / n
            row[f"{m}_se"] = statistics.stdev(values) / math.sqrt(n) if n > 1 else math.nan
        rows.append(row)
    return rows


def _aggregate_row(row: dict[str, float]) -> list[str]:
    return [str(int(row["epoch"])), str(int(row["n_seeds"]))] + [
        fmt_float(row[c]) for c in AGGREGATE_COLUMNS[2:]]


def _write_csv(path: Path, header: Iterable[str], rows: Iterable[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def config_lines(cfg: ExperimentConfig) -> list[str]:
    """The resolved configuration as ``key=value`` lines, readable by ``--config``."""
    cap = "unlimited" if cfg.capacity == UNLIMITED else str(cfg.capacity)
    return [
        f"env={cfg.env}", f"eps-in={fmt_float(cfg.eps_in)}", f"eps-out={fmt_float(cfg.eps_out)}",
        f"k={cfg.k}", f"epsilon={fmt_float(cfg.epsilon)}", f"gamma={fmt_float(cfg.gamma)}",
        f"seeds={','.join(str(s) for s in cfg.seeds)}", f"total-frames={cfg.total_frames}",
        f"epoch-frames={cfg.epoch_frames}", f"capacity={cap}", f"proj-dim={cfg.proj_dim}",
    ]


def run_experiment(cfg: ExperimentConfig) -> list[EpochRecord]:
    """Run every seed in ``cfg`` and write the results under ``cfg.out_dir``.

    Files: ``seed_<s>.csv`` (flushed after every epoch), ``aggregate.csv``,
    ``store_seed_<s>.bin`` (final memory snapshot), ``timings.csv`` and
    ``config.txt``. The output directory is checked before any simulation.
    """
    out = cfg.out_dir
    ensure_writable(out)
    runs = []
    timings = []
    try:
        (out / "config.txt").write_text("\n".join(config_lines(cfg)) + "\n", encoding="utf-8")
        for seed in cfg.seeds:
            path = out / seed_csv_name(seed)
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(SEED_COLUMNS)
                fh.flush()

                def flush(rec: EpochRecord) -> None:
                    writer.writerow(rec.csv_row())
                    fh.flush()
                    log.info("seed %d epoch %d: frames=%d avg=%.3f peak=%.3f size=%d",
                             rec.seed, rec.epoch, rec.frames, rec.avg_score, rec.peak_score,
                             rec.total_size)

                run = run_seed(cfg, seed, on_epoch=flush)
            (out / snapshot_name(seed)).write_bytes(snapshot(run.store))
            runs.append(run)
            timings.extend([str(r.seed), str(r.epoch), "%.6f" % r.wall_seconds] for r in run.records)
        _write_csv(out / AGGREGATE_FILE, AGGREGATE_COLUMNS,
                   (_aggregate_row(r) for r in aggregate([r.records for r in runs])))
        _write_csv(out / TIMINGS_FILE, ("seed", "epoch", "wall_seconds"), timings)
    except OSError as exc:
        if isinstance(exc, OutputError):
            raise
        raise OutputError(f"writing results to {out} failed: {exc.strerror or exc}") from exc
    return [rec for run in runs for rec in run.records]


def final_records(records: Sequence[EpochRecord]) -> dict[int, EpochRecord]:
    """Last epoch of each seed."""
    last: dict[int, EpochRecord] = {}
    for rec in records:
        if rec.seed not in last or rec.epoch > last[rec.seed].epoch:
            last[rec.seed] = rec
    return last

