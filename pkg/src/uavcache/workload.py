"""Per-community request streams: Poisson arrivals, Zipf-distributed contents."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import CommunityProfile, ContentCatalog

_BLOCK = 4096


@dataclass(frozen=True)
class RequestEvent:
    request_id: int
    community_id: int
    content_id: int
    issue_time: float
    tad: float


@dataclass
class RequestBatch:
    """Column view of consecutive requests from one community."""

    community_id: int
    request_id: np.ndarray
    content: np.ndarray
    time: np.ndarray
    tad: np.ndarray

    def __len__(self):
        return int(self.time.shape[0])

    def events(self) -> Iterable[RequestEvent]:
        for i in range(len(self)):
            yield RequestEvent(int(self.request_id[i]), self.community_id, int(self.content[i]),
                               float(self.time[i]), float(self.tad[i]))


def community_rng(seed: int, community_id: int) -> np.random.Generator:
    """Independent generator for one community's stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), 1, int(community_id)]))


def sample_contents(profile: CommunityProfile, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF lookup over the rank order for uniforms ``u`` in [0, 1)."""
    cdf = np.cumsum(profile.pmf)
    rank = np.searchsorted(cdf, u * cdf[-1], side="right")
    np.minimum(rank, cdf.shape[0] - 1, out=rank)
    return profile.rank_order[rank]


class RequestStream:
    """Endless request stream of one community.

    Draws come in fixed-size blocks, so the sequence of events is the same
    whether it is consumed one request at a time or in time windows.
    """

    def __init__(self, profile: CommunityProfile, catalog: ContentCatalog, mu: float,
                 rng: np.random.Generator, start_time: float = 0.0):
        if mu <= 0:
            raise ValueError("request rate must be > 0")
        self.profile = profile
        self.catalog = catalog
        self.mu = float(mu)
        self.rng = rng
        self._now = float(start_time)
        self._next_id = 0
        self._times = np.empty(0)
        self._contents = np.empty(0, dtype=np.int64)
        self._pos = 0

    def _refill(self):
        gaps = self.rng.exponential(1.0 / self.mu, size=_BLOCK)
        u = self.rng.random(_BLOCK)
        last = self._times[-1] if self._times.size else self._now
        # sequential accumulation keeps times identical to one-by-one addition
        times = np.cumsum(np.concatenate(([last], gaps)))[1:]
        self._times = np.concatenate((self._times[self._pos:], times))
        self._contents = np.concatenate((self._contents[self._pos:],
                                         sample_contents(self.profile, u)))
        self._pos = 0

    def _emit(self, n: int) -> RequestBatch:
        sl = slice(self._pos, self._pos + n)
        content = self._contents[sl].copy()
        batch = RequestBatch(self.profile.community_id,
                             np.arange(self._next_id, self._next_id + n),
                             content, self._times[sl].copy(), self.catalog.tad_of[content - 1])
        self._pos += n
        self._next_id += n
        return batch

    def next_request(self) -> RequestEvent:
        if self._pos >= self._times.shape[0]:
            self._refill()
        return next(self._emit(1).events())

    def take_until(self, horizon: float) -> RequestBatch:
        """All not-yet-consumed requests issued strictly before ``horizon``."""
        while self._times.shape[0] == 0 or self._times[-1] < horizon:
            self._refill()
        n = int(np.searchsorted(self._times[self._pos:], horizon, side="left"))
        return self._emit(n)


def next_request(community: CommunityProfile, catalog: ContentCatalog, now: float, mu: float,
                 rng: np.random.Generator, request_id: int = 0) -> RequestEvent:
    """Single draw: exponential gap after ``now`` and a content from the pmf."""
    if mu <= 0:
        raise ValueError("request rate must be > 0")
    t = now + rng.exponential(1.0 / mu)
    content = int(sample_contents(community, np.array([rng.random()]))[0])
    return RequestEvent(request_id, community.community_id, content, float(t), catalog.tad(content))


def empirical_request_counts(stream: Iterable[RequestEvent], window: tuple[float, float] | float,
                             ) -> dict[int, dict[int, int]]:
    """Requests per community and content with issue time in ``window``.

    ``window`` is ``(start, end)`` (half-open) or a length measured from 0.
    """
    start, end = (0.0, float(window)) if np.isscalar(window) else map(float, window)
    if end <= start:
        raise ValueError("window must have positive length")
    counts: dict[int, dict[int, int]] = {}
    for ev in stream:
        if start <= ev.issue_time < end:
            per = counts.setdefault(ev.community_id, {})
            per[ev.content_id] = per.get(ev.content_id, 0) + 1
    return counts


def write_trace(path, events: Iterable[RequestEvent], header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["request_id", "community_id", "content_id", "issue_time", "tad"])
        for ev in events:
            w.writerow([ev.request_id, ev.community_id, ev.content_id, repr(ev.issue_time), repr(ev.tad)])


def read_trace(path) -> list[RequestEvent]:
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        return [RequestEvent(int(r["request_id"]), int(r["community_id"]), int(r["content_id"]),
                             float(r["issue_time"]), float(r["tad"])) for r in rows]
