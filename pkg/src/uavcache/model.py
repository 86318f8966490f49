"""Static system description: parameters, catalog, popularity, heterogeneity."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from . import _kernels


class Trajectory(str, enum.Enum):
    ROUND_ROBIN = "RoundRobin"


class ProfileMode(str, enum.Enum):
    # two fixed rank orders, alternating between consecutive communities
    ALTERNATING = "alternating"
    # each community swaps from the previous community's order
    CHAIN = "chain"


@dataclass(frozen=True)
class SystemConfig:
    """All model parameters. Defaults are the reference setup (C=1000, 12
    anchors, 3 ferries, 100-slot caches, 1 req/s, 600 s hover, 300 s transit,
    Zipf 0.7, round-robin ferry routes)."""

    total_contents: int = 1000
    num_anchor_uavs: int = 12
    num_ferry_uavs: int = 3
    anchor_cache_capacity: int = 100
    ferry_cache_capacity: int = 100
    request_rate: float = 1.0
    hover_time: float = 600.0
    transition_time: float = 300.0
    zipf_alpha: float = 0.7
    trajectory_policy: Trajectory = Trajectory.ROUND_ROBIN
    swap_probability: float = 0.3
    tad_values: tuple[float, ...] = (300.0,)
    # None: one full ferry-fleet coverage period, N_A*(hover+transit)/N_F
    epoch_length: float | None = None
    epsilon_initial: float = 1.0
    epsilon_decay: float = 0.0025
    ucb_degree: float = 2.0
    rng_seed: int = 0
    profile_mode: ProfileMode = ProfileMode.ALTERNATING
    segmentation_factor: float = 0.9
    kappa: float = 1.0
    w_local: float = 1.0
    w_ferry: float = 1.0
    w_global: float = 0.5
    w_penalty: float = 0.5
    # multiplies every reward weight; puts rewards on the scale the UCB bonus assumes
    reward_scale: float = 50.0

    def __post_init__(self):
        validate(self)

    @property
    def epoch_seconds(self) -> float:
        if self.epoch_length is not None:
            return float(self.epoch_length)
        cycle = self.num_anchor_uavs * (self.hover_time + self.transition_time)
        return cycle / max(self.num_ferry_uavs, 1)

    def replace(self, **changes) -> "SystemConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return SystemConfig(**values)


class ConfigError(ValueError):
    """Invalid parameter value; ``key`` names the offending field."""

    def __init__(self, key: str, message: str, line: int | None = None):
        self.key = key
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{key}: {message}")


# (key, predicate, accepted range text)
_RANGES = [
    ("total_contents", lambda v: v >= 1, "integer >= 1"),
    ("num_anchor_uavs", lambda v: v >= 1, "integer >= 1"),
    ("num_ferry_uavs", lambda v: v >= 0, "integer >= 0"),
    ("anchor_cache_capacity", lambda v: v >= 1, "integer >= 1"),
    ("ferry_cache_capacity", lambda v: v >= 1, "integer >= 1"),
    ("request_rate", lambda v: v > 0, "real > 0"),
    ("hover_time", lambda v: v > 0, "real > 0"),
    ("transition_time", lambda v: v > 0, "real > 0"),
    ("zipf_alpha", lambda v: v >= 0, "real >= 0"),
    ("swap_probability", lambda v: 0 <= v <= 1, "real in [0, 1]"),
    ("epsilon_initial", lambda v: 0 <= v <= 1, "real in [0, 1]"),
    ("epsilon_decay", lambda v: v >= 0, "real >= 0"),
    ("ucb_degree", lambda v: v > 0, "real > 0"),
    ("segmentation_factor", lambda v: 0 <= v <= 1, "real in [0, 1]"),
    ("kappa", lambda v: v > 0, "real > 0"),
    ("w_local", lambda v: v >= 0, "real >= 0"),
    ("w_ferry", lambda v: v >= 0, "real >= 0"),
    ("w_global", lambda v: v >= 0, "real >= 0"),
    ("w_penalty", lambda v: v >= 0, "real >= 0"),
    ("reward_scale", lambda v: v > 0, "real > 0"),
]


def validate(cfg: SystemConfig) -> None:
    for key, ok, text in _RANGES:
        if not ok(getattr(cfg, key)):
            raise ConfigError(key, f"{getattr(cfg, key)!r} outside accepted range ({text})")
    if cfg.anchor_cache_capacity > cfg.total_contents:
        raise ConfigError("anchor_cache_capacity", "must not exceed total_contents")
    if cfg.ferry_cache_capacity > cfg.total_contents:
        raise ConfigError("ferry_cache_capacity", "must not exceed total_contents")
    if not cfg.tad_values:
        raise ConfigError("tad_values", "needs at least one value")
    if any(t <= 0 for t in cfg.tad_values):
        raise ConfigError("tad_values", "all values must be > 0 seconds")
    if cfg.epoch_length is not None and cfg.epoch_length <= 0:
        raise ConfigError("epoch_length", f"{cfg.epoch_length!r} outside accepted range (real > 0)")


# --------------------------------------------------------------------------
# Catalog and popularity
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ContentCatalog:
    """Content ids 1..C with one TAD each (``tad_of[i-1]`` is content i's TAD)."""

    tad_of: np.ndarray

    @property
    def size(self) -> int:
        return int(self.tad_of.shape[0])

    @property
    def contents(self) -> np.ndarray:
        return np.arange(1, self.size + 1)

    @property
    def tad_min(self) -> float:
        return float(self.tad_of.min())

    def tad(self, content_id: int) -> float:
        return float(self.tad_of[content_id - 1])


@dataclass(frozen=True)
class CommunityProfile:
    """Popularity of one community: ``rank_order[r]`` is the content id at
    rank r+1 and carries probability ``pmf[r]``."""

    community_id: int
    rank_order: np.ndarray
    pmf: np.ndarray
    _prob_by_id: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = np.zeros(self.rank_order.shape[0] + 1)
        by_id[self.rank_order] = self.pmf
        object.__setattr__(self, "_prob_by_id", by_id)

    def prob(self, content_id) -> np.ndarray | float:
        """Request probability of a content id (vectorized)."""
        return self._prob_by_id[content_id]

    @property
    def prob_by_id(self) -> np.ndarray:
        # index 0 unused so content ids index directly
        return self._prob_by_id

    def top(self, n: int) -> np.ndarray:
        return self.rank_order[:n]


def zipf_pmf(alpha: float, C: int) -> np.ndarray:
    """Zipf popularity over ranks 1..C: entry i-1 is (1/i)^alpha / sum_k (1/k)^alpha."""
    if C < 1:
        raise ValueError("C must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    w = np.arange(1, C + 1, dtype=np.float64) ** -float(alpha)
    return w / w.sum()


def swap_pass(order: np.ndarray, swap_probability: float, rng: np.random.Generator) -> np.ndarray:
    """One top-to-bottom scan over adjacent rank pairs, swapping each with the
    given probability. A content pushed down can be pushed again at the next pair."""
    out = np.array(order, copy=True)
    flips = rng.random(out.shape[0] - 1) < swap_probability
    for r in np.flatnonzero(flips):
        out[r], out[r + 1] = out[r + 1], out[r]
    return out


def generate_profiles(base_pmf: np.ndarray, N_A: int, swap_probability: float,
                      rng: np.random.Generator,
                      mode: ProfileMode | str = ProfileMode.CHAIN) -> list[CommunityProfile]:
    """Community popularity profiles. Profile 0 keeps the identity rank order.

    CHAIN derives each profile from the previous one with a swap pass.
    ALTERNATING builds a single swapped order and gives it to every odd
    community, the identity to every even one. Ranks keep their probability
    mass in both modes; only contents move between ranks.
    """
    if not 0 <= swap_probability <= 1:
        raise ValueError("swap_probability must be in [0, 1]")
    pmf = np.asarray(base_pmf, dtype=np.float64)
    mode = ProfileMode(mode)
    identity = np.arange(1, pmf.shape[0] + 1)
    orders = [identity]
    if mode is ProfileMode.CHAIN:
        for _ in range(1, N_A):
            orders.append(swap_pass(orders[-1], swap_probability, rng))
    else:
        other = swap_pass(identity, swap_probability, rng)
        orders = [identity if j % 2 == 0 else other for j in range(N_A)]
    return [CommunityProfile(j, orders[j], pmf) for j in range(N_A)]


def assign_tads(catalog_size: int, tad_values: Sequence[float],
                rng: np.random.Generator) -> ContentCatalog:
    """Draw every content's TAD uniformly from ``tad_values``."""
    values = np.asarray(tad_values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("tad_values must be non-empty")
    if values.size == 1:
        return ContentCatalog(np.full(catalog_size, values[0]))
    return ContentCatalog(values[rng.integers(0, values.size, size=catalog_size)])


def global_order(profiles: Sequence[CommunityProfile]) -> np.ndarray:
    """Content ids ranked by mean popularity across communities (id tie-break)."""
    mean = np.mean([p.prob_by_id[1:] for p in profiles], axis=0)
    return np.argsort(-mean, kind="stable") + 1


def global_pmf_by_id(profiles: Sequence[CommunityProfile]) -> np.ndarray:
    out = np.zeros(profiles[0].prob_by_id.shape[0])
    out[1:] = np.mean([p.prob_by_id[1:] for p in profiles], axis=0)
    return out


# --------------------------------------------------------------------------
# Heterogeneity measurement
# --------------------------------------------------------------------------

def smith_waterman_score(seq_a, seq_b, match: float = 1.0, mismatch: float = -1.0,
                         gap: float = -1.0) -> float:
    """Best local-alignment score (linear gap penalty, zero floor)."""
    a = np.asarray(seq_a, dtype=np.int64)
    b = np.asarray(seq_b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise ValueError("sequences must be non-empty")
    return float(_kernels.sw_score(a, b, float(match), float(mismatch), float(gap)))


def smith_waterman_distance(seq_a, seq_b, match: float = 1.0, mismatch: float = -1.0,
                            gap: float = -1.0) -> float:
    """1 - score / (match * shorter length): 0 for identical, 1 for unrelated."""
    score = smith_waterman_score(seq_a, seq_b, match, mismatch, gap)
    return 1.0 - score / (match * min(len(seq_a), len(seq_b)))
