"""Shared simulator state and the epoch-batched engine.

Within an epoch every anchor cache is fixed and ferry routes are fixed, so
ferry loads can be computed first and then every request resolved against
them in one vectorized pass. ``events.EventSimulation`` processes the same
model one event at a time and is used as the reference on small setups.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import _kernels
from ..bandit import FerrySummary, RewardWeights, Strategy, TopKAgent, learnt_sequence
from ..metrics import EpochMetrics, jaro_winkler
from ..model import CommunityProfile, ContentCatalog, SystemConfig
from ..preload import PreloadPlan
from ..workload import RequestBatch, RequestStream, community_rng


class EventKind(enum.IntEnum):
    """Event kinds; the value is the tie-break priority at equal times."""

    FERRY_ARRIVAL = 0
    REQUEST_ARRIVAL = 1
    TAD_EXPIRY = 2
    FERRY_DEPARTURE = 3
    EPOCH_BOUNDARY = 4


class Outcome(enum.IntEnum):
    LOCAL_HIT = _kernels.LOCAL_HIT
    FERRY_HOVER = _kernels.FERRY_HOVER
    FERRY_ARRIVAL = _kernels.FERRY_ARRIVAL
    DOWNLOAD = _kernels.DOWNLOAD
    DEFERRED = _kernels.UNRESOLVED


SERVED_BY_UAV = (Outcome.LOCAL_HIT, Outcome.FERRY_HOVER, Outcome.FERRY_ARRIVAL)

_LOG_LABEL = {
    Outcome.LOCAL_HIT: "LocalHit",
    Outcome.FERRY_HOVER: "FerryHover",
    Outcome.FERRY_ARRIVAL: "FerryServe",
    Outcome.DOWNLOAD: "Download",
    Outcome.DEFERRED: "Deferred",
}


# --------------------------------------------------------------------------
# State
# --------------------------------------------------------------------------

class AnchorState:
    """One anchor UAV: its cache, its agent (or frozen plan), counters."""

    def __init__(self, community_id: int, n_contents: int, agent: TopKAgent | None = None,
                 plan_sequence: np.ndarray | None = None):
        self.community_id = community_id
        self.n = n_contents
        self.agent = agent
        self.plan_sequence = plan_sequence
        self.cache = np.empty(0, dtype=np.int64)
        self.in_cache = np.zeros(n_contents + 1, dtype=bool)
        self.vertical_download_count = 0
        self.cache_fetches = 0
        # local demand not yet handed to a ferry
        self.unreported = np.zeros(n_contents + 1)
        self.summary_seq = 0
        # per-epoch feedback counters, indexed by content id
        self.hits = np.zeros(n_contents + 1)
        self.misses = np.zeros(n_contents + 1)
        self.local_requests = 0

    @property
    def frozen(self) -> bool:
        return self.agent is None

    def select(self) -> None:
        new = self.agent.select_top_k() if self.agent is not None else self.plan_sequence
        new = np.asarray(new, dtype=np.int64)
        mask = np.zeros(self.n + 1, dtype=bool)
        mask[new] = True
        self.cache_fetches += int(np.count_nonzero(mask & ~self.in_cache))
        self.cache = new
        self.in_cache = mask

    def rank_key(self) -> np.ndarray:
        """Position of every content in this anchor's preference order (lower is better)."""
        if self.agent is not None:
            order = np.argsort(-self.agent.q, kind="stable") + 1
        else:
            rest = np.setdiff1d(np.arange(1, self.n + 1), self.plan_sequence, assume_unique=True)
            order = np.concatenate((self.plan_sequence, rest))
        key = np.empty(self.n + 1, dtype=np.int64)
        key[0] = self.n + 1
        key[order] = np.arange(self.n)
        return key

    def sequence(self) -> np.ndarray:
        """The cache as an ordered sequence (by Q for agents, plan order when frozen)."""
        if self.agent is not None:
            return learnt_sequence(self.agent)
        return self.cache


@dataclass
class CarriedSummary:
    key: tuple
    origin: int
    counts: np.ndarray
    hops_left: int


class FerryState:
    """One ferry: load with per-item origin, cache snapshots, carried messages."""

    def __init__(self, ferry_id: int, start_anchor: int, n_contents: int, n_anchors: int):
        self.ferry_id = ferry_id
        self.start_anchor = start_anchor
        self.n = n_contents
        self.n_anchors = n_anchors
        self.load = np.empty(0, dtype=np.int64)
        self.origin = np.empty(0, dtype=np.int64)
        self.snapshots: dict[int, np.ndarray] = {}
        self.summaries: list[CarriedSummary] = []
        self.credit: dict[int, np.ndarray] = {}
        self.position: int | None = None  # anchor while hovering, None in transit
        self.next_anchor = start_anchor

    def known_cache(self, anchor: int) -> np.ndarray:
        snap = self.snapshots.get(anchor)
        return snap if snap is not None else np.zeros(self.n + 1, dtype=bool)

    def credit_row(self, origin: int) -> np.ndarray:
        if origin not in self.credit:
            self.credit[origin] = np.zeros(self.n + 1)
        return self.credit[origin]

    def add_credit(self, origin: int, content: int, count: float = 1.0) -> None:
        self.credit_row(origin)[content] += count


def ferry_fill(prev_load: np.ndarray, prev_origin: np.ndarray, cache: np.ndarray,
               rank_key: np.ndarray, next_known: np.ndarray, capacity: int, anchor_id: int,
               ) -> tuple[np.ndarray, np.ndarray]:
    """New ferry load at an anchor.

    Contents of ``cache`` missing from the next anchor's last-known cache,
    best ``rank_key`` first, then previously carried contents in their
    current order (most recently loaded first), truncated to ``capacity``.
    """
    cand = cache[~next_known[cache]]
    cand = cand[np.argsort(rank_key[cand], kind="stable")][:capacity]
    keep = ~np.isin(prev_load, cand)
    load = np.concatenate((cand, prev_load[keep]))[:capacity]
    origin = np.concatenate((np.full(cand.size, anchor_id, dtype=np.int64), prev_origin[keep]))
    return load.astype(np.int64), origin[:capacity]


@dataclass
class Visit:
    ferry: int
    anchor: int
    index: int  # k-th stop of this ferry
    arrival: float
    departure: float
    load: np.ndarray = field(default=None, repr=False)
    origin: np.ndarray = field(default=None, repr=False)
    load_mask: np.ndarray = field(default=None, repr=False)
    origin_map: np.ndarray = field(default=None, repr=False)  # content -> origin, -1 if absent

    def origin_of(self, content: int) -> int:
        return int(self.origin_map[content])


@dataclass
class SimulationResult:
    metrics: list[EpochMetrics]
    event_log: list[tuple] | None = None
    # final (content_id, Q, pull_count) rows per anchor; None for frozen runs
    agent_snapshots: list[list[tuple[int, float, int]]] | None = None


# --------------------------------------------------------------------------
# Base simulation (shared by both engines)
# --------------------------------------------------------------------------

class BaseSimulation:
    """Everything except request resolution.

    Exactly one of ``strategy`` (live learning agents) or ``plan`` (caches
    frozen to a pre-loading plan) must be given. ``benchmark`` is the plan
    whose anchor sequences and ferry loads serve as the similarity reference.
    """

    def __init__(self, config: SystemConfig, profiles: Sequence[CommunityProfile],
                 catalog: ContentCatalog, strategy: Strategy | str | None = None,
                 plan: PreloadPlan | None = None, benchmark: PreloadPlan | None = None,
                 log_events: bool = False):
        if (strategy is None) == (plan is None):
            raise ValueError("give exactly one of strategy or plan")
        cfg = config
        self.config = cfg
        self.profiles = list(profiles)
        self.catalog = catalog
        self.C = cfg.total_contents
        self.N_A = cfg.num_anchor_uavs
        self.N_F = cfg.num_ferry_uavs
        if len(self.profiles) != self.N_A:
            raise ValueError("need one profile per anchor")
        self.period = cfg.hover_time + cfg.transition_time
        self.epoch_len = cfg.epoch_seconds
        self.weights = RewardWeights(cfg.w_local, cfg.w_ferry, cfg.w_global,
                                     cfg.w_penalty).scaled(cfg.reward_scale)
        self.plan = plan
        self.benchmark = benchmark if benchmark is not None else plan
        seed = cfg.rng_seed
        self.anchors = []
        for a in range(self.N_A):
            if plan is not None:
                self.anchors.append(AnchorState(a, self.C, plan_sequence=plan.per_anchor_cache[a]))
            else:
                rng = np.random.default_rng(np.random.SeedSequence([seed, 2, a]))
                agent = TopKAgent(self.C, cfg.anchor_cache_capacity, strategy,
                                  cfg.epsilon_initial, cfg.epsilon_decay, cfg.ucb_degree, rng)
                self.anchors.append(AnchorState(a, self.C, agent=agent))
        self.streams = [RequestStream(self.profiles[a], catalog, cfg.request_rate,
                                      community_rng(seed, a)) for a in range(self.N_A)]
        self.ferries = [FerryState(f, (f * self.N_A) // max(self.N_F, 1), self.C, self.N_A)
                        for f in range(self.N_F)]
        self.epoch = 0
        self.metrics: list[EpochMetrics] = []
        self.log: list[tuple] | None = [] if log_events else None
        for anchor in self.anchors:
            anchor.select()
        self._frozen_keys = [a.rank_key() for a in self.anchors] if plan is not None else None

    # ---- schedule --------------------------------------------------------

    def route_anchor(self, ferry: FerryState, k: int) -> int:
        return (ferry.start_anchor + k) % self.N_A

    def visits_between(self, t0: float, t1: float, include_start: bool) -> list[Visit]:
        """Ferry arrivals with t0 < arrival <= t1 (also arrival == t0 when
        ``include_start``), sorted by (arrival, ferry)."""
        out = []
        for f in self.ferries:
            k = int(np.floor(t0 / self.period))
            while k * self.period <= t0 and not (include_start and k * self.period == t0):
                k += 1
            while k * self.period <= t1:
                arr = k * self.period
                out.append(Visit(f.ferry_id, self.route_anchor(f, k), k, arr, arr + self.config.hover_time))
                k += 1
        out.sort(key=lambda v: (v.arrival, v.ferry))
        return out

    # ---- ferry mechanics -------------------------------------------------

    def _key(self, a: int) -> np.ndarray:
        if self._frozen_keys is not None:
            return self._frozen_keys[a]
        return self.anchors[a].rank_key()

    def arrive(self, v: Visit) -> None:
        """Record the incoming load on ``v`` and reload the ferry."""
        f = self.ferries[v.ferry]
        v.load, v.origin = f.load, f.origin
        v.load_mask = np.zeros(self.C + 1, dtype=bool)
        v.load_mask[v.load] = True
        v.origin_map = np.full(self.C + 1, -1, dtype=np.int64)
        v.origin_map[v.load] = v.origin
        f.position = v.anchor
        anchor = self.anchors[v.anchor]
        nxt = self.route_anchor(f, v.index + 1)
        f.load, f.origin = ferry_fill(f.load, f.origin, anchor.cache, self._key(v.anchor),
                                      f.known_cache(nxt), self.config.ferry_cache_capacity, v.anchor)
        f.snapshots[v.anchor] = anchor.in_cache.copy()
        f.next_anchor = nxt

    def exchange(self, v: Visit) -> None:
        """Deliver carried demand summaries and ferry credit, then pick up
        this anchor's unreported demand."""
        f = self.ferries[v.ferry]
        anchor = self.anchors[v.anchor]
        msgs = []
        kept = []
        for s in f.summaries:
            if s.origin != v.anchor:
                msgs.append(FerrySummary(key=s.key, foreign=s.counts))
                s.hops_left -= 1
            if s.hops_left > 0:
                kept.append(s)
        f.summaries = kept
        credit = f.credit.pop(v.anchor, None)
        if credit is not None:
            msgs.append(FerrySummary(key=("credit", v.ferry, v.index), served=credit))
        if anchor.agent is not None and msgs:
            anchor.agent.merge_global_feedback(msgs)
        if self.N_A > 1:
            f.summaries.append(CarriedSummary(("demand", v.anchor, anchor.summary_seq), v.anchor,
                                              anchor.unreported, self.N_A - 1))
        anchor.summary_seq += 1
        anchor.unreported = np.zeros(self.C + 1)

    def depart(self, v: Visit) -> None:
        f = self.ferries[v.ferry]
        if f.position == v.anchor:
            f.position = None

    # ---- epoch boundary ----------------------------------------------------

    def close_epoch(self, counts: dict) -> EpochMetrics:
        """Update agents, re-select caches and emit this epoch's metrics."""
        e = self.epoch
        jws_a = self._anchor_jws()
        jws_f = self._ferry_jws()
        eps = float(np.mean([a.agent.epsilon for a in self.anchors])) if self.plan is None else 0.0
        fetch_before = sum(a.cache_fetches for a in self.anchors)
        for a in self.anchors:
            if a.agent is not None:
                a.agent.add_local(a.hits, a.misses)
                a.agent.finish_epoch(self.weights, max(a.local_requests, 1))
                a.select()
            a.hits = np.zeros(self.C + 1)
            a.misses = np.zeros(self.C + 1)
            a.local_requests = 0
        fetches = sum(a.cache_fetches for a in self.anchors) - fetch_before
        resolved = counts["resolved"]
        served = counts["local"] + counts["ferry"]
        per_anchor = [(h / r if r else float("nan")) for h, r in zip(counts["served_a"], counts["resolved_a"])]
        m = EpochMetrics(
            epoch_index=e,
            availability=served / resolved if resolved else float("nan"),
            mean_access_delay=math.fsum(counts["delay"]) / resolved if resolved else float("nan"),
            jws_per_anchor=jws_a,
            jws_per_ferry=jws_f,
            vertical_downloads=counts["download"],
            epsilon_current=eps,
            requests=resolved,
            local_hits=counts["local"],
            ferry_serves=counts["ferry"],
            cache_fetches=fetches,
            availability_per_anchor=per_anchor,
            served_per_anchor=list(counts["served_a"]),
            resolved_per_anchor=list(counts["resolved_a"]),
        )
        self.metrics.append(m)
        if self.log is not None:
            self.log.append((self.epoch_end(e), int(EventKind.EPOCH_BOUNDARY), -1, -1, f"epoch{e}", ""))
        self.epoch += 1
        return m

    def epoch_end(self, e: int) -> float:
        return (e + 1) * self.epoch_len

    def _anchor_jws(self) -> list[float]:
        if self.benchmark is None:
            return []
        return [jaro_winkler(a.sequence(), self.benchmark.per_anchor_cache[a.community_id])
                for a in self.anchors]

    def ferry_reference(self, destination: int) -> np.ndarray:
        """Benchmark exclusive contents the destination lacks, in benchmark rank order."""
        seg2 = self.benchmark.segment2
        parts = [seg2[j] for j in range(len(seg2)) if j != destination]
        ref = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        return ref[:self.config.ferry_cache_capacity]

    def _ferry_jws(self) -> list[float]:
        if self.benchmark is None:
            return []
        return [jaro_winkler(f.load, self.ferry_reference(f.next_anchor)) for f in self.ferries]

    @staticmethod
    def new_counts(n_anchors: int) -> dict:
        return {"resolved": 0, "local": 0, "ferry": 0, "download": 0, "delay": [],
                "served_a": [0] * n_anchors, "resolved_a": [0] * n_anchors}

    def run(self, epochs: int) -> SimulationResult:
        for _ in range(epochs):
            self.step()
        log = sorted(self.log, key=_log_sort_key) if self.log is not None else None
        snaps = None if self.plan is not None else [a.agent.snapshot() for a in self.anchors]
        return SimulationResult(self.metrics, log, snaps)

    def step(self) -> EpochMetrics:  # pragma: no cover - engines override
        raise NotImplementedError


def _log_sort_key(row):
    return row[:5]


def write_event_log(path, rows, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["time", "kind", "community", "content", "outcome", "delay"])
        for t, kind, comm, content, outcome, delay in rows:
            w.writerow([repr(float(t)), EventKind(kind).name, comm, content, outcome,
                        "" if delay == "" else repr(float(delay))])


# --------------------------------------------------------------------------
# Batched engine
# --------------------------------------------------------------------------

@dataclass
class _Pending:
    request_id: np.ndarray
    time: np.ndarray
    content: np.ndarray
    tad: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.empty(0, dtype=np.int64), np.empty(0), np.empty(0, dtype=np.int64), np.empty(0))


class Simulation(BaseSimulation):
    """Epoch-batched engine (default)."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._pending = [_Pending.empty() for _ in range(self.N_A)]
        self._hovering: list[Visit] = []

    def step(self) -> EpochMetrics:
        e = self.epoch
        t0, t1 = e * self.epoch_len, (e + 1) * self.epoch_len
        batches = [s.take_until(t1) for s in self.streams]
        visits = self.visits_between(t0, t1, include_start=(e == 0))
        for v in visits:
            self.arrive(v)
        # visits still parked at t0 can serve fresh requests while hovering
        carried_over = [v for v in self._hovering if v.departure >= t0]
        counts = self.new_counts(self.N_A)
        hover_credit: list[tuple[Visit, np.ndarray]] = []
        arrival_credit: dict[int, list[np.ndarray]] = {}
        for a in range(self.N_A):
            self._resolve_anchor(a, batches[a], [v for v in carried_over + visits if v.anchor == a],
                                 t1, counts, hover_credit, arrival_credit)
        # ferry exchanges in time order; credit earned while parked is booked
        # after the exchange of that stop
        by_visit_hover: dict[int, list[np.ndarray]] = {}
        old = {id(v) for v in carried_over}
        for v, contents in hover_credit:
            if id(v) in old:
                self._book_credit(v, contents)
            else:
                by_visit_hover.setdefault(id(v), []).append(contents)
        cursors = [0] * self.N_A
        for v in visits:
            for contents in arrival_credit.get(id(v), []):
                self._book_credit(v, contents)
            self._report_demand(v.anchor, batches[v.anchor], v.arrival, cursors)
            self.exchange(v)
            for contents in by_visit_hover.get(id(v), []):
                self._book_credit(v, contents)
            if self.log is not None:
                self.log.append((v.arrival, int(EventKind.FERRY_ARRIVAL), v.anchor, -1, f"ferry{v.ferry}", ""))
        for a in range(self.N_A):
            self._report_demand(a, batches[a], np.inf, cursors)
        for v in carried_over + visits:
            if t0 < v.departure <= t1:
                self.depart(v)
                if self.log is not None:
                    self.log.append((v.departure, int(EventKind.FERRY_DEPARTURE), v.anchor, -1,
                                     f"ferry{v.ferry}", ""))
        self._hovering = [v for v in carried_over + visits if v.departure > t1]
        return self.close_epoch(counts)

    def _book_credit(self, v: Visit, contents: np.ndarray) -> None:
        f = self.ferries[v.ferry]
        origins = v.origin_map[contents]
        foreign = origins != v.anchor
        for o in np.unique(origins[foreign]):
            np.add.at(f.credit_row(int(o)), contents[foreign & (origins == o)], 1.0)

    def _report_demand(self, a: int, batch: RequestBatch, before: float, cursors: list[int]) -> None:
        i0 = cursors[a]
        i1 = int(np.searchsorted(batch.time, before, side="left")) if np.isfinite(before) else len(batch)
        if i1 > i0:
            np.add.at(self.anchors[a].unreported, batch.content[i0:i1], 1.0)
            cursors[a] = i1

    def _resolve_anchor(self, a, batch, visits, horizon, counts, hover_credit, arrival_credit):
        anchor = self.anchors[a]
        pend = self._pending[a]
        times = np.concatenate((pend.time, batch.time))
        contents = np.concatenate((pend.content, batch.content)).astype(np.int64)
        tads = np.concatenate((pend.tad, batch.tad))
        rid = np.concatenate((pend.request_id, batch.request_id))
        fresh = np.zeros(times.size, dtype=bool)
        fresh[pend.time.size:] = True
        visits = sorted(visits, key=lambda v: (v.arrival, v.ferry))
        nv = len(visits)
        v_arr = np.array([v.arrival for v in visits], dtype=np.float64)
        v_dep = np.array([v.departure for v in visits], dtype=np.float64)
        v_load = (np.stack([v.load_mask for v in visits]) if nv
                  else np.zeros((0, self.C + 1), dtype=bool))
        outcome = np.empty(times.size, dtype=np.int64)
        when = np.empty(times.size)
        vidx = np.empty(times.size, dtype=np.int64)
        _kernels.resolve_requests(times, contents, tads, fresh, anchor.in_cache, v_arr, v_dep,
                                  v_load, float(horizon), outcome, when, vidx)
        local = outcome == Outcome.LOCAL_HIT
        hover = outcome == Outcome.FERRY_HOVER
        ferry = outcome == Outcome.FERRY_ARRIVAL
        dl = outcome == Outcome.DOWNLOAD
        done = ~(outcome == Outcome.DEFERRED)
        n_local, n_ferry = int(local.sum()), int(hover.sum() + ferry.sum())
        n_dl, n_done = int(dl.sum()), int(done.sum())
        counts["local"] += n_local
        counts["ferry"] += n_ferry
        counts["download"] += n_dl
        counts["resolved"] += n_done
        counts["served_a"][a] += n_local + n_ferry
        counts["resolved_a"][a] += n_done
        counts["delay"].extend((when[ferry] - times[ferry]).tolist() + tads[dl].tolist())
        np.add.at(anchor.hits, contents[local], 1.0)
        np.add.at(anchor.misses, contents[dl], 1.0)
        anchor.vertical_download_count += n_dl
        anchor.local_requests += len(batch)
        for j in range(nv):
            sel = hover & (vidx == j)
            if sel.any():
                hover_credit.append((visits[j], contents[sel]))
            sel = ferry & (vidx == j)
            if sel.any():
                arrival_credit.setdefault(id(visits[j]), []).append(contents[sel])
        keep = outcome == Outcome.DEFERRED
        self._pending[a] = _Pending(rid[keep], times[keep], contents[keep], tads[keep])
        if self.log is not None:
            self._log_requests(a, times, contents, tads, fresh, outcome, when)

    def _log_requests(self, a, times, contents, tads, fresh, outcome, when):
        for t, c, tad, fr, o, w in zip(times, contents, tads, fresh, outcome, when):
            o = Outcome(int(o))
            if fr:
                label = _LOG_LABEL[o] if o in (Outcome.LOCAL_HIT, Outcome.FERRY_HOVER) else "Deferred"
                delay = 0.0 if label != "Deferred" else ""
                self.log.append((float(t), int(EventKind.REQUEST_ARRIVAL), a, int(c), label, delay))
            if o == Outcome.FERRY_ARRIVAL:
                self.log.append((float(w), int(EventKind.FERRY_ARRIVAL), a, int(c), "FerryServe", float(w - t)))
            elif o == Outcome.DOWNLOAD:
                self.log.append((float(w), int(EventKind.TAD_EXPIRY), a, int(c), "Download", float(tad)))
