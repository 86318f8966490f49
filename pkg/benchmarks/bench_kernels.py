"""Compare the numba and pure-numpy kernel paths.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``UAVCACHE_DISABLE_NUMBA``. Numba timings exclude the first
(compiling) call.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--epochs 20]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat):
    fn()  # warm-up, triggers compilation on the numba path
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def _worker(repeat: int, epochs: int) -> dict:
    import numpy as np

    from uavcache import _kernels as K
    from uavcache.model import SystemConfig
    from uavcache.sim import run_simulation
    from uavcache.bandit import Strategy

    rng = np.random.default_rng(0)
    n_req, n_vis, n = 4000, 24, 1000
    times = np.sort(rng.uniform(0, 3600, n_req))
    contents = rng.integers(0, n, n_req)
    tads = np.full(n_req, 300.0)
    fresh = np.ones(n_req, dtype=np.bool_)
    in_cache = rng.random(n) < 0.1
    v_arr = np.sort(rng.uniform(0, 3600, n_vis))
    v_dep = v_arr + 600
    v_load = rng.random((n_vis, n)) < 0.1
    out = (np.empty(n_req, np.int64), np.empty(n_req), np.empty(n_req, np.int64))

    a = rng.integers(0, 20, 300)
    b = rng.integers(0, 20, 300)
    seq = rng.permutation(100)

    q, pulls = rng.random(n), rng.integers(0, 50, n).astype(np.float64)
    u = rng.random(100 + n)

    mu = np.linspace(0.05, 0.5, 10)
    u_agent = rng.random((5001, 13))
    u_env = rng.random((5000, 10))

    def synth():
        K.synthetic_run(mu, 3, K.HYBRID, 1.0, 0.0025, 2.0, u_agent, u_env,
                        np.zeros(10), np.zeros(10), np.zeros(5000))

    cases = {
        "resolve_requests (4000 req x 24 visits)":
            lambda: K.resolve_requests(times, contents, tads, fresh, in_cache, v_arr, v_dep,
                                       v_load, 3600.0, *out),
        "sw_score (300 x 300)": lambda: K.sw_score(a, b, 2.0, -1.0, -1.0),
        "jaro_winkler (100 tokens)": lambda: K.jaro_winkler(seq, seq[::-1].copy(), 0.1, 4),
        "select_slots hybrid (n=1000, k=100)":
            lambda: K.select_slots(q, pulls, 10, 0.5, 100, K.HYBRID, 2.0, u),
        "synthetic_run (5000 rounds)": synth,
    }
    result = {name: _best(fn, repeat) for name, fn in cases.items()}
    cfg = SystemConfig()
    result[f"simulation ({epochs} epochs, defaults)"] = _best(
        lambda: run_simulation(cfg, epochs, strategy=Strategy.HYBRID), max(1, repeat // 3))
    return {"backend": K.BACKEND, "timings": result}


def _spawn(disable: bool, repeat: int, epochs: int) -> dict:
    env = dict(os.environ, UAVCACHE_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run(
        [sys.executable, __file__, "--worker", "--repeat", str(repeat), "--epochs", str(epochs)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.worker:
        print(json.dumps(_worker(args.repeat, args.epochs)))
        return
    fast = _spawn(False, args.repeat, args.epochs)
    slow = _spawn(True, args.repeat, args.epochs)
    if fast["backend"] != "numba":
        print("numba unavailable; both columns are numpy", file=sys.stderr)
    width = max(len(k) for k in fast["timings"])
    print(f"{'kernel':<{width}}  {'numba [ms]':>11}  {'numpy [ms]':>11}  {'speedup':>8}")
    for name, t_fast in fast["timings"].items():
        t_slow = slow["timings"][name]
        print(f"{name:<{width}}  {t_fast * 1e3:11.3f}  {t_slow * 1e3:11.3f}  {t_slow / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
