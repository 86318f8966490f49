import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavcache.bandit import (DuplicateSummaryError, FerrySummary, RewardRecord, RewardWeights,
                             Strategy, SyntheticArmEnvironment, TopKAgent, composite_reward,
                             learnt_sequence, run_synthetic)


def _agent(n=4, k=2, strategy=Strategy.HYBRID, eps=1.0, seed=0, **kw):
    return TopKAgent(n, k, strategy, epsilon=eps, rng=np.random.default_rng(seed), **kw)


class _FixedRng:
    """Stands in for a Generator and hands out preset uniforms."""

    def __init__(self, u):
        self.u = np.asarray(u, dtype=float)

    def random(self, n):
        assert n == self.u.size
        return self.u


# ---- rewards ------------------------------------------------------------------

def test_composite_reward_by_hand():
    rec = RewardRecord(np.array([10.0, 0.0]), np.array([2.0, 4.0]), np.array([6.0, 0.0]),
                       np.array([0.0, 8.0]))
    w = RewardWeights(1.0, 1.0, 0.5, 0.5)
    # (10 + 2 + 3 - 0) / 100 and (0 + 4 + 0 - 4) / 100
    np.testing.assert_allclose(composite_reward(rec, w, 100), [0.15, 0.0])
    assert composite_reward(RewardRecord(3, 0, 0, 1), w, 10) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        composite_reward(rec, w, 0)


def test_weight_scaling_scales_reward():
    rec = RewardRecord(np.array([5.0]), np.array([1.0]), np.array([2.0]), np.array([3.0]))
    w = RewardWeights()
    np.testing.assert_allclose(composite_reward(rec, w.scaled(50), 20),
                               50 * composite_reward(rec, w, 20))


# ---- learning updates -------------------------------------------------------------

def test_update_q_is_sample_average():
    agent = _agent(eps=0.0, strategy=Strategy.EPSILON_GREEDY)
    agent.select_top_k()
    cid = int(agent.cached[0])
    for r in (1.0, 0.0, 1.0):
        agent.update_q(cid, r)
    assert agent.q[cid - 1] == pytest.approx(2 / 3)
    assert agent.pulls[cid - 1] == 3
    uncached = next(i for i in range(1, 5) if i not in agent.cached)
    with pytest.raises(ValueError):
        agent.update_q(uncached, 1.0)


def test_epsilon_schedule_reaches_zero_at_400():
    agent = _agent()
    values = [agent.decay_epsilon() for _ in range(450)]
    assert values[0] == pytest.approx(0.9975)
    assert values[398] == pytest.approx(0.0025)
    assert values[399] == pytest.approx(0.0, abs=1e-12)
    assert min(values) >= 0.0 and values[-1] == 0.0


def test_finish_epoch_folds_records():
    agent = _agent(n=3, k=1, strategy=Strategy.EPSILON_GREEDY, eps=0.0)
    agent.select_top_k()
    assert agent.cached.tolist() == [1]
    hits = np.array([0.0, 4.0, 1.0, 0.0])
    agent.add_local(hits, np.zeros(4))
    rewards = agent.finish_epoch(RewardWeights(), 5)
    np.testing.assert_allclose(rewards, [0.8, 0.2, 0.0])
    assert agent.q.tolist() == [0.8, 0.0, 0.0] and agent.pulls.tolist() == [1, 0, 0]
    assert agent.t == 1 and agent.epsilon == 0.0
    assert agent.record.local_hits.sum() == 0


def test_merge_feedback_accumulates_and_rejects_duplicates():
    agent = _agent(n=3)
    s1 = FerrySummary(("demand", 1, 0), foreign=np.array([0.0, 1.0, 2.0, 3.0]))
    s2 = FerrySummary(("credit", 0, 5), served=np.array([0.0, 0.0, 5.0, 0.0]))
    agent.merge_global_feedback([s1, s2])
    assert agent.record.delta_g.tolist() == [1.0, 2.0, 3.0]
    assert agent.record.delta_f.tolist() == [0.0, 5.0, 0.0]
    with pytest.raises(DuplicateSummaryError):
        agent.merge_global_feedback([s1])


# ---- selection ------------------------------------------------------------------------

def test_ucb_index_by_hand():
    agent = _agent(n=2, k=1, ucb_degree=2.0)
    agent.q[:] = [0.5, 0.1]
    agent.pulls[:] = [4, 0]
    agent.t = 9
    s = agent.ucb_scores()
    assert s[0] == pytest.approx(0.5 + 2 * math.sqrt(math.log(10) / 4))
    assert s[1] == math.inf


def test_greedy_takes_best_q_in_order():
    agent = _agent(n=5, k=3, strategy=Strategy.EPSILON_GREEDY, eps=0.0)
    agent.q[:] = [0.1, 0.7, 0.3, 0.7, 0.9]
    assert agent.select_top_k().tolist() == [5, 2, 4]


def test_ucb_first_round_takes_lowest_ids():
    agent = _agent(n=10, k=4, strategy=Strategy.UCB)
    assert agent.select_top_k().tolist() == [1, 2, 3, 4]


def test_hybrid_exploration_prefers_ucb_challengers():
    agent = _agent(n=4, k=2, strategy=Strategy.HYBRID)
    agent.q[:] = [0.9, 0.8, 0.1, 0.5]
    agent.pulls[:] = 1
    agent.t = 3
    # both slots explore: incumbents 1 and 2 are skipped, then by UCB
    agent.rng = _FixedRng([0.0, 0.0, 0.1, 0.2, 0.3, 0.4])
    assert agent.select_top_k().tolist() == [4, 3]
    # slot 0 greedy, slot 1 explores
    agent.epsilon = 0.5
    agent.rng = _FixedRng([0.9, 0.1, 0.1, 0.2, 0.3, 0.4])
    assert agent.select_top_k().tolist() == [1, 4]
    # no exploration
    agent.rng = _FixedRng([0.9, 0.9, 0.1, 0.2, 0.3, 0.4])
    assert agent.select_top_k().tolist() == [1, 2]


def test_hybrid_cold_start_breaks_ties_at_random():
    # every arm is unseen: the first cache should be a random draw, not ids 1..k
    picks = {tuple(_agent(n=50, k=5, seed=s).select_top_k()) for s in range(20)}
    assert len(picks) == 20


def test_epsilon_greedy_random_slot_uses_permutation_key():
    agent = _agent(n=4, k=1, strategy=Strategy.EPSILON_GREEDY)
    agent.q[:] = [0.9, 0.0, 0.0, 0.0]
    agent.rng = _FixedRng([0.0, 0.8, 0.6, 0.1, 0.7])
    assert agent.select_top_k().tolist() == [3]


def test_hybrid_random_greedy_part_uses_ucb():
    agent = _agent(n=4, k=2, strategy=Strategy.HYBRID_RANDOM, eps=0.0)
    agent.q[:] = [0.9, 0.8, 0.1, 0.5]
    agent.pulls[:] = [10, 10, 10, 0]
    agent.t = 5
    assert agent.select_top_k().tolist() == [4, 1]


def test_learnt_sequence_orders_by_q_then_id():
    agent = _agent(n=6, k=4, strategy=Strategy.EPSILON_GREEDY, eps=0.0)
    agent.q[:] = [0.2, 0.5, 0.5, 0.0, 0.9, 0.1]
    agent.select_top_k()
    assert learnt_sequence(agent).tolist() == [5, 2, 3, 1]


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 40), st.data(), st.sampled_from(list(Strategy)), st.floats(0, 1),
       st.integers(0, 10_000))
def test_selection_is_k_distinct_ids(n, data, strategy, eps, seed):
    k = data.draw(st.integers(1, n))
    agent = _agent(n=n, k=k, strategy=strategy, eps=eps, seed=seed)
    agent.q[:] = data.draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n))
    agent.pulls[:] = data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
    agent.t = data.draw(st.integers(0, 50))
    sel = agent.select_top_k()
    assert sel.size == k == np.unique(sel).size
    assert sel.min() >= 1 and sel.max() <= n
    assert agent.cached_mask.sum() == k and agent.cached_mask[sel - 1].all()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=30), st.integers(0, 100))
def test_zero_epsilon_greedy_equals_sorted_top_k(q, seed):
    n = len(q)
    k = 1 + seed % n
    for strategy in (Strategy.EPSILON_GREEDY, Strategy.HYBRID):
        agent = _agent(n=n, k=k, strategy=strategy, eps=0.0, seed=seed)
        agent.q[:] = q
        expected = sorted(range(1, n + 1), key=lambda i: (-q[i - 1], i))[:k]
        assert agent.select_top_k().tolist() == expected


# ---- synthetic arms -------------------------------------------------------------------

def test_environment_top_k_brute_force():
    env = SyntheticArmEnvironment(np.array([0.2, 0.9, 0.5, 0.7]))
    assert env.top_k(2) == {2, 4}
    np.testing.assert_allclose(env.variance, [0.16, 0.09, 0.25, 0.21])
    assert env.pull(np.array([0.1, 0.95, 0.5, 0.69])).tolist() == [1.0, 0.0, 0.0, 1.0]


@pytest.mark.parametrize("strategy", list(Strategy))
def test_fast_synthetic_loop_equals_agent_stepping(strategy):
    env = SyntheticArmEnvironment(np.linspace(0.05, 0.5, 10))
    horizon, k, seed = 300, 3, 11
    final, gained = run_synthetic(env, k, horizon, strategy, seed=seed)

    agent = TopKAgent(10, k, strategy, rng=np.random.default_rng(np.random.SeedSequence([seed, 0])))
    env_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    expected = []
    for _ in range(horizon):
        sel = agent.select_top_k()
        expected.append(env.mu[sel - 1].sum())
        reward = env.pull(env_rng.random(10))
        for c in sel:
            agent.update_q(int(c), reward[c - 1])
        agent.t += 1
        agent.decay_epsilon()
    assert final.tolist() == agent.select_top_k().tolist()
    np.testing.assert_allclose(gained, expected, rtol=0, atol=1e-12)


def test_synthetic_learner_finds_clear_winners():
    env = SyntheticArmEnvironment(np.array([0.1, 0.1, 0.9, 0.1, 0.8, 0.1]))
    final, gained = run_synthetic(env, 2, 1000, Strategy.HYBRID, seed=0)
    assert set(final.tolist()) == env.top_k(2)
    assert gained[-100:].mean() == pytest.approx(1.7)


def test_agent_rejects_bad_k():
    with pytest.raises(ValueError):
        TopKAgent(3, 4)
