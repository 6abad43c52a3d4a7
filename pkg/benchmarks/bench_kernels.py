"""Time the partition kernels under numba and interpreted (numpy-array) execution.

    python benchmarks/bench_kernels.py [--samples 20000] [--moves 20000] [--repeat 3]

Both backends run the same kernel source on the same problem, so the script
also checks that they agree bit for bit.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fairsplit import _kernels
from fairsplit.partition import BalanceProblem, PartitionConfig, build_strata
from fairsplit.synth import affectnet_like_spec, generate_manifest


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run_backend(kern, problem, moves, repeat):
    n_groups = problem.n_groups
    order = np.argsort(-problem.gsize, kind="stable").astype(np.int64)

    def seed():
        sets = np.zeros(n_groups, dtype=np.int64)
        kern["greedy_seed"](order, *problem.args(), sets)
        return sets

    def search():
        sets = start.copy()
        trace = np.empty(moves.shape[0])
        used, acc, _ = kern["local_search"](sets, *problem.args(), moves, np.int64(1 << 40), np.int64(0), trace)
        return sets, int(acc)

    def evaluate():
        return float(kern["assignment_objective"](start, *problem.args()))

    t_seed, start = best_of(seed, repeat)
    t_search, (final, accepted) = best_of(search, repeat)
    t_eval, value = best_of(evaluate, repeat)
    return {"greedy_seed": t_seed, "local_search": t_search, "objective": t_eval}, (start, final, accepted, value)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--moves", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    strata = build_strata(generate_manifest(affectnet_like_spec(args.samples, seed=0)))
    problem = BalanceProblem.build(strata, PartitionConfig())
    moves = _kernels.decode_moves(_kernels.splitmix64(0, 0, 3 * args.moves), problem.n_groups)

    jit = _kernels.jit_kernels()
    run_backend(jit, problem, moves[:10], 1)  # compile (or load the on-disk cache)
    t_jit, r_jit = run_backend(jit, problem, moves, args.repeat)
    t_py, r_py = run_backend(_kernels.PY_KERNELS, problem, moves, 1)

    same = all(np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b for a, b in zip(r_jit, r_py))
    print(f"{args.samples} samples ({problem.n_groups} groups), {args.moves} local-search moves")
    print(f"{'kernel':<14} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>9}")
    for name in t_jit:
        print(f"{name:<14} {t_jit[name]:>10.4f} {t_py[name]:>10.4f} {t_py[name] / t_jit[name]:>8.0f}x")
    print(f"bit-identical results: {same}")


if __name__ == "__main__":
    main()
