"""Top-k multi-armed bandit caching agent.

One agent lives in each anchor UAV. Arms are contents, k is the cache size,
and one round is one epoch: the agent picks k contents, the simulator feeds
back per-content reward records, and the agent updates its estimates.

Reward model (reconstructed; weights are configuration, not ground truth)::

    r = (w_local*local_hits + w_ferry*delta_f + w_global*delta_g
         - w_penalty*miss_penalties) / epoch_request_total

``local_hits`` are local requests served from this cache, ``delta_f`` counts
requests served elsewhere by content this anchor handed to a ferry,
``delta_g`` is the foreign demand for the content relayed by ferries, and
``miss_penalties`` counts local requests for it that fell back to the
vertical link.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels


class Strategy(str, enum.Enum):
    EPSILON_GREEDY = "eps-greedy"
    UCB = "ucb"
    # greedy slots by Q, exploratory slots to the best-UCB challenger
    HYBRID = "hybrid"
    # greedy slots by UCB index, exploratory slots uniform at random
    HYBRID_RANDOM = "hybrid-random"


_CODES = {
    Strategy.EPSILON_GREEDY: _kernels.EPSILON_GREEDY,
    Strategy.UCB: _kernels.UCB,
    Strategy.HYBRID: _kernels.HYBRID,
    Strategy.HYBRID_RANDOM: _kernels.HYBRID_RANDOM,
}


@dataclass(frozen=True)
class RewardWeights:
    w_local: float = 1.0
    w_ferry: float = 1.0
    w_global: float = 0.5
    w_penalty: float = 0.5

    def scaled(self, c: float) -> "RewardWeights":
        return RewardWeights(self.w_local * c, self.w_ferry * c, self.w_global * c, self.w_penalty * c)


@dataclass
class RewardRecord:
    """Per-content feedback for one epoch (arrays indexed by content id - 1,
    or scalars for a single content)."""

    local_hits: np.ndarray
    delta_f: np.ndarray
    delta_g: np.ndarray
    miss_penalties: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "RewardRecord":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n))


def composite_reward(record: RewardRecord, weights: RewardWeights, epoch_request_total: float):
    if epoch_request_total <= 0:
        raise ValueError("epoch_request_total must be > 0")
    raw = (weights.w_local * np.asarray(record.local_hits, dtype=np.float64)
           + weights.w_ferry * np.asarray(record.delta_f, dtype=np.float64)
           + weights.w_global * np.asarray(record.delta_g, dtype=np.float64)
           - weights.w_penalty * np.asarray(record.miss_penalties, dtype=np.float64))
    out = raw / epoch_request_total
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FerrySummary:
    """Immutable message delivered by a ferry to one anchor.

    ``key`` identifies the (ferry visit, demand span) pair, ``foreign`` holds
    relayed request counts per content, ``served`` the requests served
    elsewhere with content this anchor contributed.
    """

    key: tuple
    foreign: np.ndarray | None = None
    served: np.ndarray | None = None


class DuplicateSummaryError(ValueError):
    pass


class TopKAgent:
    """Bandit state of one anchor: Q-values, pull counts, exploration rate."""

    def __init__(self, n_contents: int, k: int, strategy: Strategy | str = Strategy.HYBRID,
                 epsilon: float = 1.0, epsilon_decay: float = 0.0025, ucb_degree: float = 2.0,
                 rng: np.random.Generator | None = None):
        if not 1 <= k <= n_contents:
            raise ValueError("need 1 <= k <= number of contents")
        self.n = n_contents
        self.k = k
        self.strategy = Strategy(strategy)
        self.epsilon = float(epsilon)
        self.epsilon_decay = float(epsilon_decay)
        self.ucb_degree = float(ucb_degree)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.q = np.zeros(n_contents)
        self.pulls = np.zeros(n_contents, dtype=np.int64)
        self.t = 0
        self.cached = np.empty(0, dtype=np.int64)  # ids, in selection order
        self._cached_mask = np.zeros(n_contents, dtype=bool)
        self.record = RewardRecord.zeros(n_contents)
        self._seen: set = set()

    # ---- selection -------------------------------------------------------

    def ucb_scores(self) -> np.ndarray:
        """Q + degree*sqrt(ln(round)/pulls), unbounded for never-cached contents."""
        return _kernels.ucb_scores(self.q, self.pulls, self.t, self.ucb_degree)

    def select_top_k(self) -> np.ndarray:
        """Choose this epoch's k contents; returns ids in slot order.

        Every call consumes k + n uniforms so the random stream does not
        depend on the strategy.
        """
        u = self.rng.random(self.k + self.n)
        idx = _kernels.select_slots(self.q, self.pulls, self.t, self.epsilon, self.k,
                                    _CODES[self.strategy], self.ucb_degree, u)
        self.cached = idx + 1
        self._cached_mask[:] = False
        self._cached_mask[idx] = True
        return self.cached

    @property
    def cached_mask(self) -> np.ndarray:
        return self._cached_mask

    # ---- learning --------------------------------------------------------

    def update_q(self, content_id: int, reward: float) -> None:
        i = content_id - 1
        if not self._cached_mask[i]:
            raise ValueError(f"content {content_id} was not cached this epoch")
        self.pulls[i] += 1
        self.q[i] += (reward - self.q[i]) / self.pulls[i]

    def update_cached(self, rewards: np.ndarray) -> None:
        """Sample-average update of every cached content; ``rewards`` is
        indexed by content id - 1."""
        idx = self.cached - 1
        self.pulls[idx] += 1
        self.q[idx] += (rewards[idx] - self.q[idx]) / self.pulls[idx]

    def decay_epsilon(self) -> float:
        self.epsilon = max(0.0, self.epsilon - self.epsilon_decay)
        return self.epsilon

    def finish_epoch(self, weights: RewardWeights, epoch_request_total: float) -> np.ndarray:
        """Fold the epoch's records into Q, advance the round, decay epsilon.
        Returns the reward vector used."""
        rewards = composite_reward(self.record, weights, max(epoch_request_total, 1.0))
        self.update_cached(rewards)
        self.t += 1
        self.decay_epsilon()
        self.record = RewardRecord.zeros(self.n)
        return rewards

    # ---- feedback --------------------------------------------------------

    def add_local(self, hits: np.ndarray, misses: np.ndarray) -> None:
        self.record.local_hits += hits[1:]
        self.record.miss_penalties += misses[1:]

    def merge_global_feedback(self, summaries) -> None:
        """Accumulate ferried demand (delta_g) and ferry credit (delta_f).

        Arrays in a summary are indexed by content id (slot 0 unused).
        """
        for s in summaries:
            if s.key in self._seen:
                raise DuplicateSummaryError(f"summary {s.key!r} already merged")
            self._seen.add(s.key)
            if s.foreign is not None:
                self.record.delta_g += s.foreign[1:]
            if s.served is not None:
                self.record.delta_f += s.served[1:]

    def snapshot(self) -> list[tuple[int, float, int]]:
        return [(i + 1, float(self.q[i]), int(self.pulls[i])) for i in range(self.n)]


def learnt_sequence(agent: TopKAgent) -> np.ndarray:
    """Cached ids by Q descending, id tie-break."""
    ids = np.sort(agent.cached)
    return ids[np.argsort(-agent.q[ids - 1], kind="stable")]


# --------------------------------------------------------------------------
# Synthetic environment for checking the learner in isolation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticArmEnvironment:
    """Stationary Bernoulli arms with means ``mu`` (variance mu*(1-mu))."""

    mu: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return self.mu * (1 - self.mu)

    def top_k(self, k: int) -> set[int]:
        """True best k arm ids (1-based) by brute-force ranking."""
        return {int(i) + 1 for i in np.argsort(-self.mu, kind="stable")[:k]}

    def pull(self, u: np.ndarray) -> np.ndarray:
        return (u < self.mu).astype(np.float64)


def run_synthetic(env: SyntheticArmEnvironment, k: int, horizon: int,
                  strategy: Strategy | str = Strategy.HYBRID, seed: int = 0,
                  epsilon: float = 1.0, epsilon_decay: float = 0.0025, ucb_degree: float = 2.0,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Play ``horizon`` rounds. Returns (final selection ids, per-round
    expected reward of the selected set)."""
    n = env.mu.shape[0]
    agent_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    env_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    # same draws, in the same order, as stepping a TopKAgent round by round
    u_agent = agent_rng.random((horizon + 1, k + n))
    u_env = env_rng.random((horizon, n))
    q = np.zeros(n)
    pulls = np.zeros(n, dtype=np.int64)
    gained = np.empty(horizon)
    final = _kernels.synthetic_run(np.asarray(env.mu, dtype=np.float64), k, _CODES[Strategy(strategy)],
                                   float(epsilon), float(epsilon_decay), float(ucb_degree),
                                   u_agent, u_env, q, pulls, gained)
    return final + 1, gained
