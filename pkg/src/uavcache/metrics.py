"""Evaluation metrics: content availability, access delay, Jaro-Winkler similarity."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .bandit import learnt_sequence  # noqa: F401  (re-exported)


@dataclass
class EpochMetrics:
    epoch_index: int
    availability: float
    mean_access_delay: float
    jws_per_anchor: list[float]
    jws_per_ferry: list[float]
    vertical_downloads: int
    epsilon_current: float
    requests: int = 0
    local_hits: int = 0
    ferry_serves: int = 0
    cache_fetches: int = 0
    availability_per_anchor: list[float] = field(default_factory=list)
    served_per_anchor: list[int] = field(default_factory=list)
    resolved_per_anchor: list[int] = field(default_factory=list)

    @property
    def jws_anchor_mean(self) -> float:
        return float(np.mean(self.jws_per_anchor)) if self.jws_per_anchor else math.nan

    @property
    def jws_ferry_mean(self) -> float:
        return float(np.mean(self.jws_per_ferry)) if self.jws_per_ferry else math.nan

    def row(self) -> dict:
        return {
            "epoch": self.epoch_index,
            "availability": self.availability,
            "mean_delay": self.mean_access_delay,
            "jws_anchor_mean": self.jws_anchor_mean,
            "jws_ferry_mean": self.jws_ferry_mean,
            "downloads": self.vertical_downloads,
            "epsilon": self.epsilon_current,
            "requests": self.requests,
            "local_hits": self.local_hits,
            "ferry_serves": self.ferry_serves,
            "cache_fetches": self.cache_fetches,
        }


CSV_COLUMNS = ["epoch", "availability", "mean_delay", "jws_anchor_mean", "jws_ferry_mean",
               "downloads", "epsilon", "requests", "local_hits", "ferry_serves", "cache_fetches"]


def availability(hits: int, requests: int) -> float | None:
    """hits / requests; None when nothing was requested."""
    if requests <= 0:
        return None
    return hits / requests


def epoch_access_delay(served: Iterable[tuple[float, object]]) -> float | None:
    """Mean delay over (delay, outcome) pairs; None for an empty epoch."""
    delays = [d for d, _ in served]
    if not delays:
        return None
    return float(np.mean(delays))


def jaro_winkler(seq_a: Sequence[int], seq_b: Sequence[int], prefix_scale: float = 0.1,
                 max_prefix: int = 4) -> float:
    """Jaro-Winkler similarity of two token sequences (exact token matching).

    Match window is max(len)//2 - 1, transpositions count half, the prefix
    boost uses at most ``max_prefix`` leading tokens.
    """
    a = np.asarray(seq_a, dtype=np.int64).ravel()
    b = np.asarray(seq_b, dtype=np.int64).ravel()
    return float(_kernels.jaro_winkler(a, b, float(prefix_scale), int(max_prefix)))


def tokens(text: str) -> np.ndarray:
    """Map a string to integer tokens (its code points)."""
    return np.array([ord(ch) for ch in text], dtype=np.int64)


# --------------------------------------------------------------------------
# Series helpers and aggregation across replications
# --------------------------------------------------------------------------

def moving_average(x: Sequence[float], window: int) -> np.ndarray:
    """Trailing moving average; the first window-1 entries average what exists."""
    x = np.asarray(x, dtype=np.float64)
    c = np.cumsum(np.insert(x, 0, 0.0))
    n = np.arange(1, x.size + 1)
    lo = np.maximum(n - window, 0)
    return (c[n] - c[lo]) / (n - lo)


def series(history: Sequence[EpochMetrics], column: str) -> np.ndarray:
    return np.array([m.row()[column] for m in history], dtype=np.float64)


def aggregate(runs: Sequence[Sequence[EpochMetrics]], columns: Sequence[str] = CSV_COLUMNS[1:],
              ) -> list[dict]:
    """Per-epoch mean and sample standard deviation across replications."""
    n_epochs = min(len(r) for r in runs)
    out = []
    for e in range(n_epochs):
        row = {"epoch": e}
        for col in columns:
            vals = np.array([r[e].row()[col] for r in runs], dtype=np.float64)
            row[f"{col}_mean"] = float(np.mean(vals))
            row[f"{col}_std"] = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        out.append(row)
    return out


def write_metrics_csv(path, history: Sequence[EpochMetrics], header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for m in history:
            w.writerow({k: _fmt(v) for k, v in m.row().items()})


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 12))
    return v


def history_to_dicts(history: Sequence[EpochMetrics]) -> list[dict]:
    return [asdict(m) for m in history]
