"""Read result CSVs back and render mean +/- standard-error curves as SVG."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import FormatError, OutputError
from .runner import AGGREGATE_COLUMNS, SEED_COLUMNS

# user-facing metric name -> CSV column stem
METRIC_NAMES = {"average_score": "avg_score", "peak_score": "peak_score", "total_size": "total_size"}
METRIC_TITLES = {"average_score": "Average score", "peak_score": "Peak score",
                 "total_size": "Total buffer size"}

_INT_COLUMNS = {"seed", "epoch", "frames", "episodes", "total_size", "n_seeds"}


@dataclass
class Curve:
    """One configuration's per-epoch mean and standard error for every metric."""

    label: str
    frames: np.ndarray
    mean: dict[str, np.ndarray]
    se: dict[str, np.ndarray]
    """All-nan for a single seed: the band is then omitted."""


def _parse(value: str, column: str, lineno: int, path: Path) -> float:
    try:
        if column in _INT_COLUMNS:
            return float(int(value))
        return float(value)
    except ValueError:
        raise FormatError(f"{path}: column {column!r} has non-numeric value {value!r}",
                          line=lineno) from None


def read_curve(path: str | Path, label: str | None = None) -> Curve:
    """Load a per-seed or aggregate results CSV.

    A per-seed file is treated as a one-sample configuration (no error band).
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (UnicodeDecodeError, csv.Error) as exc:
        raise FormatError(f"{path}: unreadable CSV ({exc})", line=1) from None
    if not rows:
        raise FormatError(f"{path}: empty file, expected a header row", line=1)
    header = tuple(rows[0])
    if header == SEED_COLUMNS:
        aggregate = False
    elif header == AGGREGATE_COLUMNS:
        aggregate = True
    else:
        raise FormatError(f"{path}: unrecognised header {','.join(header)!r}", line=1)
    if len(rows) == 1:
        raise FormatError(f"{path}: no data rows", line=2)

    table: dict[str, list[float]] = {c: [] for c in header if c != "buffer_sizes"}
    prev_epoch = 0
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(f"{path}: expected {len(header)} fields, found {len(row)}", line=lineno)
        for column, value in zip(header, row):
            if column == "buffer_sizes":
                if value and not all(p.isdigit() for p in value.split(";")):
                    raise FormatError(f"{path}: bad buffer_sizes {value!r}", line=lineno)
                continue
            table[column].append(_parse(value, column, lineno, path))
        epoch = table["epoch"][-1]
        if epoch <= prev_epoch:
            raise FormatError(f"{path}: epochs must increase, got {int(epoch)} after {int(prev_epoch)}",
                              line=lineno)
        prev_epoch = epoch

    if label is None:
        label = path.parent.name if aggregate and path.parent.name else path.stem
    frames = np.array(table["frames_mean" if aggregate else "frames"])
    mean, se = {}, {}
    for name, column in METRIC_NAMES.items():
        if aggregate:
            mean[name] = np.array(table[f"{column}_mean"])
            se[name] = np.array(table[f"{column}_se"])
        else:
            mean[name] = np.array(table[column])
            se[name] = np.full(len(frames), np.nan)
    return Curve(label, frames, mean, se)


def _figure(curves: Sequence[Curve], metric: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for i, curve in enumerate(curves):
        color = f"C{i % 10}"
        y = curve.mean[metric]
        ax.plot(curve.frames, y, color=color, lw=1.5, label=curve.label)
        band = curve.se[metric]
        ok = np.isfinite(band)
        if ok.any():
            ax.fill_between(curve.frames, np.where(ok, y - band, y), np.where(ok, y + band, y),
                            color=color, alpha=0.25, lw=0)
    ax.set_xlabel("frames")
    ax.set_ylabel(METRIC_TITLES[metric])
    ax.grid(True, lw=0.4, alpha=0.5)
    if len(curves) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def emit_plots(inputs: Sequence[str | Path], out: str | Path,
               metrics: Sequence[str] | None = None,
               labels: Sequence[str] | None = None) -> list[Path]:
    """Plot each metric as mean curve with a shaded standard-error band per input.

    With a single metric, ``out`` is the SVG file to write; otherwise it is a
    directory that receives ``<metric>.svg`` for each metric. Every input is
    validated before anything is written.
    """
    metrics = list(METRIC_NAMES) if metrics is None else list(metrics)
    for m in metrics:
        if m not in METRIC_NAMES:
            raise FormatError(f"unknown metric {m!r}; choose from {sorted(METRIC_NAMES)}")
    if not inputs:
        raise FormatError("no input CSV files given")
    if labels is not None and len(labels) != len(inputs):
        raise FormatError("need one label per input")
    curves = [read_curve(p, None if labels is None else labels[i]) for i, p in enumerate(inputs)]

    out = Path(out)
    if len(metrics) == 1:
        targets = {metrics[0]: out if out.suffix else out.with_suffix(".svg")}
    else:
        targets = {m: out / f"{m}.svg" for m in metrics}

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for metric, target in targets.items():
        fig = _figure(curves, metric)
        tmp = target.with_name(f".{target.name}.tmp")
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with matplotlib.rc_context({"svg.hashsalt": "mfec-sa", "svg.fonttype": "none"}):
                fig.savefig(tmp, format="svg", metadata={"Date": None})
            os.replace(tmp, target)
        except OSError as exc:
            raise OutputError(f"cannot write {target}: {exc.strerror or exc}") from exc
        finally:
            plt.close(fig)
            if tmp.exists():
                tmp.unlink()
        written.append(target)
    return written



__all__ = ["Curve", "METRIC_NAMES", "emit_plots", "read_curve"]
