"""Discrete-event reference engine.

Processes one event at a time from a priority queue ordered by
(time, kind priority, insertion order). Slow, but a direct transcription of
the model; the batched engine must reproduce its results exactly.
"""
from __future__ import annotations

import heapq
import itertools

from .core import BaseSimulation, EventKind, Visit
from ..metrics import EpochMetrics


class EventSimulation(BaseSimulation):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._heap: list = []
        self._seq = itertools.count()
        # request_id -> (community, content, issue, tad, expiry) still waiting
        self._pending: dict[tuple[int, int], tuple] = {}
        self._hovering: dict[int, dict[int, Visit]] = {a: {} for a in range(self.N_A)}
        self._counts = None

    def _push(self, time: float, kind: EventKind, payload) -> None:
        heapq.heappush(self._heap, (time, int(kind), next(self._seq), payload))

    def step(self) -> EpochMetrics:
        e = self.epoch
        t0, t1 = e * self.epoch_len, (e + 1) * self.epoch_len
        self._counts = self.new_counts(self.N_A)
        for v in self.visits_between(t0, t1, include_start=(e == 0)):
            self._push(v.arrival, EventKind.FERRY_ARRIVAL, v)
        for a, stream in enumerate(self.streams):
            batch = stream.take_until(t1)
            for ev in batch.events():
                self._push(ev.issue_time, EventKind.REQUEST_ARRIVAL, ev)
        self._push(t1, EventKind.EPOCH_BOUNDARY, e)
        while True:
            time, kind, _, payload = heapq.heappop(self._heap)
            kind = EventKind(kind)
            if kind is EventKind.EPOCH_BOUNDARY:
                return self.close_epoch(self._counts)
            getattr(self, f"_on_{kind.name.lower()}")(time, payload)

    # ---- handlers ----------------------------------------------------------

    def _log(self, *row) -> None:
        if self.log is not None:
            self.log.append(row)

    def _served(self, a: int, via_ferry: bool, delay: float) -> None:
        c = self._counts
        c["resolved"] += 1
        c["resolved_a"][a] += 1
        c["served_a"][a] += 1
        c["ferry" if via_ferry else "local"] += 1
        c["delay"].append(delay)

    def _on_ferry_arrival(self, time: float, v: Visit) -> None:
        a = v.anchor
        self.arrive(v)
        self._log(time, int(EventKind.FERRY_ARRIVAL), a, -1, f"ferry{v.ferry}", "")
        served = [key for key, r in self._pending.items()
                  if r[0] == a and v.load_mask[r[1]] and r[2] < time <= r[4]]
        for key in sorted(served, key=lambda k: k[1]):
            _, content, issue, _, _ = self._pending.pop(key)
            self._served(a, True, time - issue)
            self._credit(v, content)
            self._log(time, int(EventKind.FERRY_ARRIVAL), a, content, "FerryServe", time - issue)
        self.exchange(v)
        self._hovering[a][v.ferry] = v
        self._push(v.departure, EventKind.FERRY_DEPARTURE, v)

    def _credit(self, v: Visit, content: int) -> None:
        origin = v.origin_of(content)
        if origin != v.anchor:
            self.ferries[v.ferry].add_credit(origin, content)

    def _on_request_arrival(self, time: float, ev) -> None:
        a, c = ev.community_id, ev.content_id
        anchor = self.anchors[a]
        anchor.local_requests += 1
        anchor.unreported[c] += 1
        if anchor.in_cache[c]:
            anchor.hits[c] += 1
            self._served(a, False, 0.0)
            self._log(time, int(EventKind.REQUEST_ARRIVAL), a, c, "LocalHit", 0.0)
            return
        for v in sorted(self._hovering[a].values(), key=lambda v: (v.arrival, v.ferry)):
            if v.load_mask[c]:
                self._served(a, True, 0.0)
                self._credit(v, c)
                self._log(time, int(EventKind.REQUEST_ARRIVAL), a, c, "FerryHover", 0.0)
                return
        expiry = time + ev.tad
        self._pending[(a, ev.request_id)] = (a, c, time, ev.tad, expiry)
        self._push(expiry, EventKind.TAD_EXPIRY, (a, ev.request_id))
        self._log(time, int(EventKind.REQUEST_ARRIVAL), a, c, "Deferred", "")

    def _on_tad_expiry(self, time: float, key) -> None:
        r = self._pending.pop(key, None)
        if r is None:
            return
        a, c, _, tad, _ = r
        anchor = self.anchors[a]
        anchor.misses[c] += 1
        anchor.vertical_download_count += 1
        cnt = self._counts
        cnt["resolved"] += 1
        cnt["resolved_a"][a] += 1
        cnt["download"] += 1
        cnt["delay"].append(tad)
        self._log(time, int(EventKind.TAD_EXPIRY), a, c, "Download", tad)

    def _on_ferry_departure(self, time: float, v: Visit) -> None:
        self._hovering[v.anchor].pop(v.ferry, None)
        self.depart(v)
        self._log(time, int(EventKind.FERRY_DEPARTURE), v.anchor, -1, f"ferry{v.ferry}", "")

    def pending_count(self) -> int:
        return len(self._pending)
