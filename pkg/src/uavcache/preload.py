"""Static pre-loading baselines (FD, SEC, PBC, VBC) for anchor caches."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import CommunityProfile, ContentCatalog, global_order, global_pmf_by_id


class Policy(str, enum.Enum):
    FD = "fd"
    SEC = "sec"
    PBC = "pbc"
    VBC = "vbc"


class PlanError(ValueError):
    pass


@dataclass
class PreloadPlan:
    policy: Policy
    lam: float
    per_anchor_cache: list[np.ndarray]
    system_content_count: int
    non_exclusive_count: int = 0
    exclusive_total: int = 0
    segment1_size: int = 0
    segment2: list[np.ndarray] = field(default_factory=list)

    @property
    def num_anchors(self) -> int:
        return len(self.per_anchor_cache)


def segment_sizes(lam: float, C_A: int) -> tuple[int, int]:
    """(Segment-1, Segment-2) slot counts; Segment-1 is round(lam * C_A)."""
    if not 0 <= lam <= 1:
        raise PlanError("lambda must be in [0, 1]")
    s1 = int(round(lam * C_A))
    return s1, C_A - s1


def _union_size(caches: Sequence[np.ndarray]) -> int:
    return int(np.unique(np.concatenate(caches)).size) if caches else 0


def plan_fd(profiles: Sequence[CommunityProfile], C_A: int) -> PreloadPlan:
    """Every anchor holds its own community's top-C_A contents."""
    if C_A > profiles[0].rank_order.size:
        raise PlanError("C_A exceeds catalog size")
    caches = [p.top(C_A).copy() for p in profiles]
    return PreloadPlan(Policy.FD, 1.0, caches, _union_size(caches), segment1_size=C_A,
                       segment2=[np.empty(0, dtype=np.int64) for _ in profiles])


def _partition_exclusive(ranked: np.ndarray, taken: np.ndarray, s2: int, N_A: int,
                         C: int) -> list[np.ndarray]:
    """Deal ``s2`` consecutive contents to each anchor in community-id order,
    skipping anything already in ``taken``."""
    free = ranked[~np.isin(ranked, taken)]
    if free.size < s2 * N_A:
        raise PlanError(f"plan needs {taken.size + s2 * N_A} distinct contents but only {C} exist")
    return [free[j * s2:(j + 1) * s2] for j in range(N_A)]


def plan_sec(base_profile: CommunityProfile, lam: float, C_A: int, N_A: int) -> PreloadPlan:
    """Segment-1: global top round(lam*C_A), replicated everywhere.
    Segment-2: the following contents dealt out disjointly across anchors."""
    s1, s2 = segment_sizes(lam, C_A)
    ranked = base_profile.rank_order
    seg1 = ranked[:s1]
    seg2 = _partition_exclusive(ranked, seg1, s2, N_A, ranked.size)
    caches = [np.concatenate((seg1, seg2[j])) for j in range(N_A)]
    return PreloadPlan(Policy.SEC, lam, caches, s1 + N_A * s2, segment1_size=s1, segment2=seg2)


def _segmented_plan(policy: Policy, seg1_lists: list[np.ndarray], ranked: np.ndarray,
                    lam: float, C_A: int) -> PreloadPlan:
    N_A = len(seg1_lists)
    s1, s2 = segment_sizes(lam, C_A)
    stacked = np.concatenate(seg1_lists) if s1 else np.empty(0, dtype=np.int64)
    ids, counts = np.unique(stacked, return_counts=True)
    seg2 = _partition_exclusive(ranked, ids, s2, N_A, ranked.size)
    caches = [np.concatenate((seg1_lists[j], seg2[j])) for j in range(N_A)]
    c_ne = int(np.count_nonzero(counts > 1))
    c_e = int(np.count_nonzero(counts == 1))
    return PreloadPlan(policy, lam, caches, c_ne + c_e + N_A * s2, c_ne, c_e,
                       segment1_size=s1, segment2=seg2)


def plan_pbc(profiles: Sequence[CommunityProfile], lam: float, C_A: int, N_A: int | None = None,
             ) -> PreloadPlan:
    """Segment-1 from each community's own ranking, Segment-2 as in SEC over
    the global ranking minus every Segment-1 content."""
    N_A = len(profiles) if N_A is None else N_A
    s1, _ = segment_sizes(lam, C_A)
    seg1 = [profiles[j].top(s1) for j in range(N_A)]
    return _segmented_plan(Policy.PBC, seg1, global_order(profiles[:N_A]), lam, C_A)


def content_value(p_i, tad_i, kappa: float, tad_min: float, p_top: float):
    """kappa * (tad_min / p_top) * (p_i / tad_i); 1 for the most popular,
    least tolerant content when kappa is 1."""
    tad_i = np.asarray(tad_i, dtype=np.float64)
    if tad_min <= 0 or np.any(tad_i <= 0):
        raise ValueError("TAD must be > 0")
    if p_top <= 0:
        raise ValueError("p_top must be > 0")
    out = kappa * (tad_min / p_top) * (np.asarray(p_i, dtype=np.float64) / tad_i)
    return float(out) if out.ndim == 0 else out


def _value_order(prob_by_id: np.ndarray, base_order: np.ndarray, catalog: ContentCatalog,
                 kappa, p_top: float) -> np.ndarray:
    """Content ids by value, descending; ties keep their ``base_order`` position."""
    ids = catalog.contents
    position = np.empty(ids.size + 1, dtype=np.int64)
    position[base_order] = np.arange(base_order.size)
    value = content_value(prob_by_id[ids], catalog.tad_of, 1.0, catalog.tad_min, p_top)
    value = value * np.asarray(kappa, dtype=np.float64)
    return ids[np.lexsort((position[ids], -value))]


def plan_vbc(profiles: Sequence[CommunityProfile], catalog: ContentCatalog, lam: float, C_A: int,
             N_A: int | None = None, kappa=1.0) -> PreloadPlan:
    """PBC with both segments ranked by content value instead of popularity.

    ``kappa`` is a scalar or a per-content array (index i-1 for content i).
    """
    N_A = len(profiles) if N_A is None else N_A
    s1, _ = segment_sizes(lam, C_A)
    p_top = max(float(p.pmf.max()) for p in profiles[:N_A])
    seg1 = [_value_order(p.prob_by_id, p.rank_order, catalog, kappa, p_top)[:s1]
            for p in profiles[:N_A]]
    ranked = _value_order(global_pmf_by_id(profiles[:N_A]), global_order(profiles[:N_A]),
                          catalog, kappa, p_top)
    return _segmented_plan(Policy.VBC, seg1, ranked, lam, C_A)


def make_plan(policy: Policy | str, profiles: Sequence[CommunityProfile], catalog: ContentCatalog,
              lam: float, C_A: int, kappa=1.0) -> PreloadPlan:
    policy = Policy(policy)
    if policy is Policy.FD:
        return plan_fd(profiles, C_A)
    if policy is Policy.SEC:
        return plan_sec(profiles[0], lam, C_A, len(profiles))
    if policy is Policy.PBC:
        return plan_pbc(profiles, lam, C_A)
    return plan_vbc(profiles, catalog, lam, C_A, kappa=kappa)


def benchmark_sequence(plan: PreloadPlan, community_id: int) -> np.ndarray:
    """Ordered cache of one anchor under the plan (Segment-1 then Segment-2)."""
    return plan.per_anchor_cache[community_id]


def write_plan_csv(path, plan: PreloadPlan, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["anchor_id", "slot_index", "content_id"])
        for a, cache in enumerate(plan.per_anchor_cache):
            for slot, c in enumerate(cache):
                w.writerow([a, slot, int(c)])


def read_plan_csv(path, policy: Policy | str = Policy.VBC, lam: float = float("nan")) -> PreloadPlan:
    rows: dict[int, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(line for line in fh if not line.startswith("#")):
            rows.setdefault(int(r["anchor_id"]), []).append((int(r["slot_index"]), int(r["content_id"])))
    caches = [np.array([c for _, c in sorted(rows[a])], dtype=np.int64) for a in sorted(rows)]
    return PreloadPlan(Policy(policy), lam, caches, _union_size(caches))
