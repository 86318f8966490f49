"""Hot inner loops with a numba path and a pure-numpy path.

Set ``UAVCACHE_DISABLE_NUMBA=1`` before import to force the numpy path.
Both paths return identical results for identical inputs; the test suite
checks this directly.
"""
import os

import numpy as np

try:
    if os.environ.get("UAVCACHE_DISABLE_NUMBA", "").strip() not in ("", "0"):
        raise ImportError("numba disabled by environment")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

# outcome codes written by resolve_requests
LOCAL_HIT = 0
FERRY_HOVER = 1
FERRY_ARRIVAL = 2
DOWNLOAD = 3
UNRESOLVED = 4


# --------------------------------------------------------------------------
# Smith-Waterman local alignment score
# --------------------------------------------------------------------------

def _sw_score_loop(a, b, match, mismatch, gap):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.zeros(m + 1)
    cur = np.zeros(m + 1)
    best = 0.0
    for i in range(1, n + 1):
        cur[0] = 0.0
        ai = a[i - 1]
        for j in range(1, m + 1):
            s = match if ai == b[j - 1] else mismatch
            h = prev[j - 1] + s
            up = prev[j] + gap
            if up > h:
                h = up
            left = cur[j - 1] + gap
            if left > h:
                h = left
            if h < 0.0:
                h = 0.0
            cur[j] = h
            if h > best:
                best = h
        prev, cur = cur, prev
    return best


def _sw_score_numpy(a, b, match, mismatch, gap):
    # row sweep; the within-row gap recurrence is a running max
    m = b.shape[0]
    idx = np.arange(m + 1, dtype=np.float64) * gap
    prev = np.zeros(m + 1)
    best = 0.0
    for ai in a:
        s = np.where(b == ai, match, mismatch)
        v = np.empty(m + 1)
        v[0] = 0.0
        v[1:] = np.maximum(np.maximum(prev[:-1] + s, prev[1:] + gap), 0.0)
        cur = np.maximum.accumulate(v - idx) + idx
        cur[0] = 0.0
        best = max(best, float(cur.max()))
        prev = cur
    return best


# --------------------------------------------------------------------------
# Jaro-Winkler similarity on integer token sequences
# --------------------------------------------------------------------------

def _jaro_winkler_loop(a, b, prefix_scale, max_prefix):
    la = a.shape[0]
    lb = b.shape[0]
    if la == 0 and lb == 0:
        return 1.0
    if la == 0 or lb == 0:
        return 0.0
    window = max(la, lb) // 2 - 1
    if window < 0:
        window = 0
    a_flag = np.zeros(la, dtype=np.bool_)
    b_flag = np.zeros(lb, dtype=np.bool_)
    m = 0
    for i in range(la):
        lo = i - window
        if lo < 0:
            lo = 0
        hi = i + window + 1
        if hi > lb:
            hi = lb
        for j in range(lo, hi):
            if not b_flag[j] and a[i] == b[j]:
                a_flag[i] = True
                b_flag[j] = True
                m += 1
                break
    if m == 0:
        return 0.0
    half = 0
    j = 0
    for i in range(la):
        if a_flag[i]:
            while not b_flag[j]:
                j += 1
            if a[i] != b[j]:
                half += 1
            j += 1
    t = half / 2.0
    jaro = (m / la + m / lb + (m - t) / m) / 3.0
    ell = 0
    lim = min(la, lb, max_prefix)
    while ell < lim and a[ell] == b[ell]:
        ell += 1
    return jaro + ell * prefix_scale * (1.0 - jaro)


def _jaro_winkler_numpy(a, b, prefix_scale, max_prefix):
    la = a.shape[0]
    lb = b.shape[0]
    if la == 0 and lb == 0:
        return 1.0
    if la == 0 or lb == 0:
        return 0.0
    if np.unique(a).shape[0] != la or np.unique(b).shape[0] != lb:
        # repeated tokens compete for matches; only the scan handles that
        return _jaro_winkler_loop(a, b, prefix_scale, max_prefix)
    window = max(max(la, lb) // 2 - 1, 0)
    lo = min(int(a.min()), int(b.min()))
    hi = max(int(a.max()), int(b.max()))
    pos_b = np.full(hi - lo + 1, -1, dtype=np.int64)
    pos_b[b - lo] = np.arange(lb)
    pb = pos_b[a - lo]
    hit = (pb >= 0) & (np.abs(pb - np.arange(la)) <= window)
    m = int(hit.sum())
    if m == 0:
        return 0.0
    half = int(np.count_nonzero(a[hit] != b[np.sort(pb[hit])]))
    t = half / 2.0
    jaro = (m / la + m / lb + (m - t) / m) / 3.0
    lim = min(la, lb, max_prefix)
    neq = np.flatnonzero(a[:lim] != b[:lim])
    ell = int(neq[0]) if neq.size else lim
    return jaro + ell * prefix_scale * (1.0 - jaro)


# --------------------------------------------------------------------------
# Two-order slot merge used by every top-k selection rule
# --------------------------------------------------------------------------

def _merge_select_loop(greedy_order, explore_order, explore_flags, k):
    """Slot s takes the first unchosen id from ``explore_order`` when
    ``explore_flags[s]`` is set, else the first unchosen from ``greedy_order``.
    """
    n = greedy_order.shape[0]
    chosen = np.zeros(n, dtype=np.bool_)
    out = np.empty(k, dtype=np.int64)
    gi = 0
    ei = 0
    for s in range(k):
        if explore_flags[s]:
            while chosen[explore_order[ei]]:
                ei += 1
            c = explore_order[ei]
        else:
            while chosen[greedy_order[gi]]:
                gi += 1
            c = greedy_order[gi]
        chosen[c] = True
        out[s] = c
    return out


def _merge_select_numpy(greedy_order, explore_order, explore_flags, k):
    if not explore_flags[:k].any():
        return greedy_order[:k].astype(np.int64)
    return _merge_select_loop(greedy_order, explore_order, explore_flags, k)


# --------------------------------------------------------------------------
# Batched request resolution for one anchor
# --------------------------------------------------------------------------

def _resolve_loop(times, contents, tads, fresh, in_cache, v_arr, v_dep, v_load,
                  horizon, outcome, when, visit):
    """Classify requests against a fixed anchor cache and a visit schedule.

    A fresh request (issued in this window) is a local hit when cached, a
    hover serve when a ferry carrying it is parked at the anchor, and
    otherwise waits for the first arrival within its TAD that carries it.
    Requests still waiting at ``horizon`` stay UNRESOLVED. Visits must be
    sorted by arrival time so the first matching arrival wins.
    """
    nv = v_arr.shape[0]
    for r in range(times.shape[0]):
        t = times[r]
        c = contents[r]
        expiry = t + tads[r]
        visit[r] = -1
        if fresh[r]:
            if in_cache[c]:
                outcome[r] = LOCAL_HIT
                when[r] = t
                continue
            hovered = False
            for v in range(nv):
                if v_arr[v] <= t and t <= v_dep[v] and v_load[v, c]:
                    outcome[r] = FERRY_HOVER
                    when[r] = t
                    visit[r] = v
                    hovered = True
                    break
            if hovered:
                continue
        served = False
        for v in range(nv):
            if v_arr[v] > t and v_arr[v] <= expiry and v_load[v, c]:
                outcome[r] = FERRY_ARRIVAL
                when[r] = v_arr[v]
                visit[r] = v
                served = True
                break
        if served:
            continue
        if expiry <= horizon:
            outcome[r] = DOWNLOAD
            when[r] = expiry
        else:
            outcome[r] = UNRESOLVED
            when[r] = np.inf


def _resolve_numpy(times, contents, tads, fresh, in_cache, v_arr, v_dep, v_load,
                   horizon, outcome, when, visit):
    n = times.shape[0]
    expiry = times + tads
    outcome[:] = UNRESOLVED
    when[:] = np.inf
    visit[:] = -1
    open_ = np.ones(n, dtype=bool)
    local = fresh & in_cache[contents]
    outcome[local] = LOCAL_HIT
    when[local] = times[local]
    open_ &= ~local
    for v in range(v_arr.shape[0]):
        carried = v_load[v, contents]
        hov = open_ & fresh & carried & (v_arr[v] <= times) & (times <= v_dep[v])
        outcome[hov] = FERRY_HOVER
        when[hov] = times[hov]
        visit[hov] = v
        open_ &= ~hov
    for v in range(v_arr.shape[0]):
        carried = v_load[v, contents]
        arr = open_ & carried & (v_arr[v] > times) & (v_arr[v] <= expiry)
        outcome[arr] = FERRY_ARRIVAL
        when[arr] = v_arr[v]
        visit[arr] = v
        open_ &= ~arr
    dl = open_ & (expiry <= horizon)
    outcome[dl] = DOWNLOAD
    when[dl] = expiry[dl]


# --------------------------------------------------------------------------
# Top-k selection and the synthetic bandit loop
# --------------------------------------------------------------------------

# strategy codes for select_slots
EPSILON_GREEDY = 0
UCB = 1
HYBRID = 2
HYBRID_RANDOM = 3


def _ucb_loop(q, pulls, t, alpha):
    n = q.shape[0]
    out = np.empty(n)
    lg = np.log(t + 1.0)
    for i in range(n):
        if pulls[i] == 0:
            out[i] = np.inf
        else:
            out[i] = q[i] + alpha * np.sqrt(lg / pulls[i])
    return out


def _ucb_numpy(q, pulls, t, alpha):
    out = np.full(q.shape[0], np.inf)
    seen = pulls > 0
    out[seen] = q[seen] + alpha * np.sqrt(np.log(t + 1.0) / pulls[seen])
    return out


def _select_body(q, pulls, t, eps, k, strategy, alpha, u):
    """0-based ids of the k slots; ``u`` holds k + n uniforms (slot coins,
    then a random permutation key)."""
    n = q.shape[0]
    flags = u[:k] < eps
    random_order = np.argsort(u[k:], kind="mergesort")
    if strategy == UCB:
        greedy = np.argsort(-ucb_scores(q, pulls, t, alpha), kind="mergesort")
        return merge_select(greedy, random_order, np.zeros(k, dtype=np.bool_), k)
    if strategy == EPSILON_GREEDY:
        greedy = np.argsort(-q, kind="mergesort")
        explore = random_order
    elif strategy == HYBRID:
        greedy = np.argsort(-q, kind="mergesort")
        ucb = ucb_scores(q, pulls, t, alpha)
        # incumbents last, then UCB descending, then random tie-break
        idx = random_order[np.argsort(-ucb[random_order], kind="mergesort")]
        incumbent = np.zeros(n, dtype=np.int64)
        for s in range(k):
            incumbent[greedy[s]] = 1
        explore = idx[np.argsort(incumbent[idx], kind="mergesort")]
    else:
        greedy = np.argsort(-ucb_scores(q, pulls, t, alpha), kind="mergesort")
        explore = random_order
    return merge_select(greedy, explore, flags, k)


def _synthetic_body(mu, k, strategy, eps0, decay, alpha, u_agent, u_env, q, pulls, gained):
    """Play Bernoulli arms for ``u_env.shape[0]`` rounds, updating ``q`` and
    ``pulls`` in place; returns the selection after the last round."""
    horizon = u_env.shape[0]
    eps = eps0
    for step in range(horizon):
        sel = select_slots(q, pulls, step, eps, k, strategy, alpha, u_agent[step])
        g = 0.0
        for s in range(k):
            i = sel[s]
            g += mu[i]
        for s in range(k):
            i = sel[s]
            r = 1.0 if u_env[step, i] < mu[i] else 0.0
            pulls[i] += 1
            q[i] += (r - q[i]) / pulls[i]
        gained[step] = g
        eps = max(0.0, eps - decay)
    return select_slots(q, pulls, horizon, eps, k, strategy, alpha, u_agent[horizon])


if HAS_NUMBA:
    sw_score = njit(cache=True)(_sw_score_loop)
    jaro_winkler = njit(cache=True)(_jaro_winkler_loop)
    merge_select = njit(cache=True)(_merge_select_loop)
    resolve_requests = njit(cache=True)(_resolve_loop)
    ucb_scores = njit(cache=True)(_ucb_loop)
    select_slots = njit(cache=True)(_select_body)
    synthetic_run = njit(cache=True)(_synthetic_body)
else:
    sw_score = _sw_score_numpy
    jaro_winkler = _jaro_winkler_numpy
    merge_select = _merge_select_numpy
    resolve_requests = _resolve_numpy
    ucb_scores = _ucb_numpy
    select_slots = _select_body
    synthetic_run = _synthetic_body

BACKEND = "numba" if HAS_NUMBA else "numpy"
