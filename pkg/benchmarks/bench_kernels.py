"""Compare the compiled and numpy kernels on the canonical 64x64 problem.

    python benchmarks/bench_kernels.py [--n 64] [--steps 2000]

Reports microseconds per Euler step for ``fitzhugh_advance`` and per call
for ``laplacian``, and checks that both backends agree bitwise.
"""
import argparse
import time

import numpy as np

from rdode import kernels
from rdode.kinetics import CANONICAL_BETA, CANONICAL_DELTA, CANONICAL_RHO, CANONICAL_SIGMA


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(mod, n, steps, repeat):
    rng = np.random.default_rng(0)
    h = 1.0 / n
    gamma = 50.0
    dt = 0.45 / (gamma * 2 / h**2)
    u0 = rng.uniform(0.0, 1.0, (n, n))
    v0 = rng.uniform(-0.02, 0.04, (n, n))
    du, dv = np.empty(steps), np.empty(steps)
    state = {}

    def advance():
        u, v = u0.copy(), v0.copy()
        mod.fitzhugh_advance(u, v, CANONICAL_BETA, CANONICAL_SIGMA, CANONICAL_DELTA, CANONICAL_RHO,
                             gamma, dt, h, h, steps, u0, v0, du, dv, 1e8)
        state["u"], state["v"] = u, v

    out = np.empty((n, n))
    t_adv = _time(advance, repeat) / steps
    t_lap = _time(lambda: [mod.laplacian(v0, h, h, out) for _ in range(200)], repeat) / 200
    return t_adv, t_lap, state["u"], state["v"]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    comp = kernels.compiled_backend()
    rows = [("python", kernels.python_backend)] + ([("cython", comp)] if comp is not None else [])
    results = {}
    print(f"grid {args.n}x{args.n}, {args.steps} steps")
    print(f"{'backend':<8} {'us/step':>10} {'us/laplacian':>14}")
    for name, mod in rows:
        t_adv, t_lap, u, v = bench(mod, args.n, args.steps, args.repeat)
        results[name] = (t_adv, u, v)
        print(f"{name:<8} {1e6 * t_adv:10.1f} {1e6 * t_lap:14.1f}")
    if comp is None:
        print("compiled backend not built; only the numpy fallback was timed")
        return
    same = all(np.array_equal(a, b) for a, b in zip(results["python"][1:], results["cython"][1:]))
    print(f"speed-up {results['python'][0] / results['cython'][0]:.1f}x; bitwise identical: {same}")


if __name__ == "__main__":
    main()
