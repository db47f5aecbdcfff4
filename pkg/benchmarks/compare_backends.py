#!/usr/bin/env python3
"""Benchmark the compiled stage-system core against the numpy fallback.

Runs the Lagrangian-form nonholonomic stepper on the catalog's vector
systems for a fixed trajectory and reports per-step wall time per backend,
plus the end-state agreement between the two.

Usage: python benchmarks/compare_backends.py [--steps N] [--stages S]
"""

import argparse
import time

import numpy as np

from nhprk import _backend, systems
from nhprk.mechanics import consistent_multiplier, make_state
from nhprk.prk_vec import step_nh_lagrangian
from nhprk.tableau import lobatto_pair


def run(entry, pair, h, steps, backend):
    sys = entry.system
    q0, v0 = entry.initial
    state = make_state(sys, q0, v0, consistent_multiplier(sys, q0, v0))
    start = time.perf_counter()
    if backend == "fast":
        core = _backend.core_module()
        kernel = _backend.kernel_for(sys)
        q, p, lam, iters, resid, constr, fail = core.nh_lag_run(
            kernel, pair.primal.a, pair.dual.a, pair.primal.b, h,
            state.q, state.p, state.lam, steps, 1e-12, 50)
        assert fail == -1
        elapsed = time.perf_counter() - start
        return elapsed, q[-1], p[-1]
    for _ in range(steps):
        state, _ = step_nh_lagrangian(sys, pair, state, h, backend="python")
    elapsed = time.perf_counter() - start
    return elapsed, state.q, state.p


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--stages", type=int, default=3)
    args = parser.parse_args()

    if not _backend.core_available():
        print("compiled core unavailable; showing the python backend only")
    pair = lobatto_pair(args.stages)
    h = 0.01
    header = f"{'system':<10} {'backend':<8} {'steps':>6} {'total [s]':>10} {'per step':>12}"
    print(header)
    print("-" * len(header))
    for name, factory in (("particle", systems.nonholonomic_particle),
                          ("cvt", systems.cvt),
                          ("chaotic", systems.chaotic)):
        entry = factory()
        results = {}
        backends = ["python"] + (["fast"] if _backend.core_available() else [])
        for backend in backends:
            steps = args.steps if backend == "fast" else min(args.steps, 500)
            elapsed, q, p = run(entry, pair, h, steps, backend)
            results[backend] = (steps, elapsed, q, p)
            print(f"{name:<10} {backend:<8} {steps:>6} {elapsed:>10.3f} "
                  f"{elapsed / steps * 1e3:>9.3f} ms")
        if len(results) == 2:
            ns = min(results["python"][0], results["fast"][0])
            _, _, q_py, p_py = results["python"]
            elapsed, q_f, p_f = run(entry, pair, h, ns, "fast")
            gap = max(np.max(np.abs(q_py - q_f)), np.max(np.abs(p_py - p_f)))
            speedup = (results["python"][1] / results["python"][0]) \
                / (results["fast"][1] / results["fast"][0])
            print(f"{'':<10} agreement {gap:.2e} over {ns} steps, "
                  f"speedup x{speedup:.0f}")
    print()


if __name__ == "__main__":
    main()
