"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--steps 200000] [--repeat 3]

Both backends consume the same uniforms, so the final tables must agree
exactly; the script checks that before reporting timings.
"""

import argparse
import time

import numpy as np

from qconv import _fallback
from qconv._backend import COMPILED, kernels
from qconv.experiments import generate_mdp
from qconv.learn import EpsilonGreedy, LearnConfig, drive
from qconv.mdp import validate_mdp
from qconv.schedules import VisitHarmonic
from qconv.solver import value_iterate


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not COMPILED:
        raise SystemExit("compiled kernels are not available; build the extension first")

    mdp = validate_mdp(generate_mdp(5, 3, "gaussian", seed=7))
    qstar, _ = value_iterate(mdp)
    cfg = LearnConfig(VisitHarmonic(1.0), EpsilonGreedy(0.1), args.steps, seed=0, record_every=10_000)
    a = 1.0 / np.arange(1.0, args.steps + 1)
    c = np.zeros(args.steps)

    cases = {
        "q-learning": lambda k: drive(mdp, qstar, cfg, kernel_module=k).q,
        "sarsa": lambda k: drive(mdp, qstar, cfg, sarsa=True, kernel_module=k).q,
        "recurrence": lambda k: _recurrence(k, a, c),
    }
    print(f"{'case':<12} {'steps':>9} {'cython s':>10} {'python s':>10} {'speedup':>8}  identical")
    for name, fn in cases.items():
        tc, qc = best_of(lambda: fn(kernels), args.repeat)
        tp, qp = best_of(lambda: fn(_fallback), 1)
        print(f"{name:<12} {args.steps:>9} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.1f}  {np.array_equal(qc, qp)}")


def _recurrence(k, a, c):
    out = np.empty(a.size + 1)
    k.recurrence(1.0, 0.5, a, c, out)
    return out


if __name__ == "__main__":
    main()
