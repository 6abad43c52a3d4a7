"""Hot loops of the partition solver.

Each kernel is written once as plain loops over numpy arrays.  When numba is
importable and ``FAIRSPLIT_DISABLE_JIT`` is unset, the exported names are the
``numba.njit`` compilations; otherwise the same functions run interpreted.
Both paths execute identical floating-point operations in identical order, so
they return bit-identical results (the JIT path is just much faster).

Problem encoding
----------------
``gcounts[g, c]``   per-group count for balancing column ``c``
``gsize[g]``        samples in group ``g``
``ref[c]``          global proportion (categorical) or rate (AU) of column ``c``
``dim_start``       column ranges: dimension ``d`` owns ``dim_start[d]:dim_start[d+1]``
``dim_w``           dimension weight
``dim_scale``       1 for categorical dimensions, 1/K for a K-AU rate dimension

Pseudorandom moves
------------------
Moves are driven by a SplitMix64 stream: word ``i`` (0-based) of the stream
for seed ``s`` is ``mix(s + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)`` with the
standard SplitMix64 finaliser.  Move ``m`` consumes words ``3m, 3m+1, 3m+2``
as ``(r0, r1, r2)``: ``r0 % 2 == 0`` is a reassignment of group ``r1 % G`` to
set ``(current + 1 + r2 % 2) % 3``; otherwise it is a swap of groups
``r1 % G`` and ``r2 % G`` (rejected when they share a set).
"""
from __future__ import annotations

import os

import numpy as np

DISABLE_ENV = "FAIRSPLIT_DISABLE_JIT"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def jit_requested() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() not in {"1", "true", "yes", "on"}


def splitmix64(seed: int, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of the SplitMix64 stream for ``seed``."""
    seed64 = np.uint64(int(seed) % (1 << 64))
    with np.errstate(over="ignore"):
        z = np.arange(start + 1, start + count + 1, dtype=np.uint64) * _GOLDEN + seed64
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def decode_moves(words: np.ndarray, n_groups: int) -> np.ndarray:
    """Turn raw stream words (a multiple of 3) into int64 ``(kind, g1, arg)`` rows.

    ``kind`` 0 is a reassignment with ``arg`` the set offset (0 or 1), ``kind``
    1 a swap with ``arg`` the second group.
    """
    w = words.reshape(-1, 3)
    kind = (w[:, 0] % np.uint64(2)).astype(np.int64)
    g1 = (w[:, 1] % np.uint64(n_groups)).astype(np.int64)
    arg = np.where(kind == 0, w[:, 2] % np.uint64(2), w[:, 2] % np.uint64(n_groups)).astype(np.int64)
    return np.stack([kind, g1, arg], axis=1)


def set_term(counts, n, s, total, targets, w_size, ref, dim_start, dim_w, dim_scale):
    size = w_size * abs(n / total - targets[s])
    acc = 0.0
    if n == 0:
        # empty set: unit gap in every dimension
        for d in range(dim_w.shape[0]):
            acc += dim_w[d]
        return size + acc
    for d in range(dim_w.shape[0]):
        gap = 0.0
        for c in range(dim_start[d], dim_start[d + 1]):
            gap += abs(counts[c] / n - ref[c])
        acc += dim_w[d] * (gap * dim_scale[d])
    return size + acc


def seed_term(counts, n, s, placed, targets, w_size, ref, dim_start, dim_w, dim_scale):
    """Seeding surrogate of ``set_term``: size term against ``placed`` and gaps scaled by ``n / placed``."""
    size = w_size * abs(n / placed - targets[s])
    if n == 0:
        return size
    acc = 0.0
    for d in range(dim_w.shape[0]):
        gap = 0.0
        for c in range(dim_start[d], dim_start[d + 1]):
            gap += abs(counts[c] / n - ref[c])
        acc += dim_w[d] * (gap * dim_scale[d])
    return size + (n / placed) * acc


def set_gaps(counts, n, ref, dim_start, dim_scale, out):
    for d in range(out.shape[0]):
        if n == 0:
            out[d] = 1.0
            continue
        gap = 0.0
        for c in range(dim_start[d], dim_start[d + 1]):
            gap += abs(counts[c] / n - ref[c])
        out[d] = gap * dim_scale[d]


def accumulate(assign, gcounts, gsize, set_counts, set_n):
    set_counts[:, :] = 0
    set_n[:] = 0
    for g in range(assign.shape[0]):
        s = assign[g]
        set_n[s] += gsize[g]
        for c in range(gcounts.shape[1]):
            set_counts[s, c] += gcounts[g, c]


def assignment_objective(assign, gcounts, gsize, total, targets, w_size, ref, dim_start, dim_w, dim_scale):
    set_counts = np.zeros((3, gcounts.shape[1]), dtype=np.int64)
    set_n = np.zeros(3, dtype=np.int64)
    accumulate(assign, gcounts, gsize, set_counts, set_n)
    t0 = set_term(set_counts[0], set_n[0], 0, total, targets, w_size, ref, dim_start, dim_w, dim_scale)
    t1 = set_term(set_counts[1], set_n[1], 1, total, targets, w_size, ref, dim_start, dim_w, dim_scale)
    t2 = set_term(set_counts[2], set_n[2], 2, total, targets, w_size, ref, dim_start, dim_w, dim_scale)
    return t0 + t1 + t2


def greedy_seed(order, gcounts, gsize, total, targets, w_size, ref, dim_start, dim_w, dim_scale, assign):
    """Place groups in ``order``, each into the set with the smallest seeding objective.

    The seeding objective is the objective restricted to the samples placed
    so far, with each set's marginal gaps weighted by its share of them.
    Without the weighting a near-empty set looks worse than an empty one
    (one sample is far from every marginal) and the first set to fill
    swallows everything.  Ties go to the lowest set index.
    """
    n_cols = gcounts.shape[1]
    set_counts = np.zeros((3, n_cols), dtype=np.int64)
    set_n = np.zeros(3, dtype=np.int64)
    scratch = np.empty(n_cols, dtype=np.int64)
    placed = 0
    for i in range(order.shape[0]):
        g = order[i]
        partial = placed + gsize[g]
        best = -1
        best_value = np.inf
        for s in range(3):
            value = 0.0
            for t in range(3):
                if t == s:
                    for c in range(n_cols):
                        scratch[c] = set_counts[t, c] + gcounts[g, c]
                    value += seed_term(scratch, set_n[t] + gsize[g], t, partial, targets, w_size, ref, dim_start, dim_w, dim_scale)
                else:
                    value += seed_term(set_counts[t], set_n[t], t, partial, targets, w_size, ref, dim_start, dim_w, dim_scale)
            if value < best_value:
                best_value = value
                best = s
        assign[g] = best
        set_n[best] += gsize[g]
        placed = partial
        for c in range(n_cols):
            set_counts[best, c] += gcounts[g, c]


def local_search(
    assign, gcounts, gsize, total, targets, w_size, ref, dim_start, dim_w, dim_scale,
    moves, patience, rejections, trace,
):
    """Improving local search over a block of pre-drawn moves.

    Mutates ``assign`` in place and writes each accepted objective value to
    ``trace``.  ``rejections`` is the consecutive-rejection count carried in
    from the previous block.  Returns ``(moves_used, n_accepted, rejections)``;
    ``rejections >= patience`` means the search has stopped.
    """
    n_cols = gcounts.shape[1]
    set_counts = np.zeros((3, n_cols), dtype=np.int64)
    set_n = np.zeros(3, dtype=np.int64)
    accumulate(assign, gcounts, gsize, set_counts, set_n)
    terms = np.empty(3)
    for s in range(3):
        terms[s] = set_term(set_counts[s], set_n[s], s, total, targets, w_size, ref, dim_start, dim_w, dim_scale)
    current = terms[0] + terms[1] + terms[2]
    new_terms = np.empty(3)
    row_a = np.empty(n_cols, dtype=np.int64)
    row_b = np.empty(n_cols, dtype=np.int64)
    n_accepted = 0
    used = 0
    for m in range(moves.shape[0]):
        if rejections >= patience:
            break
        used += 1
        g1 = moves[m, 1]
        if moves[m, 0] == 0:
            g2 = -1
            a = assign[g1]
            b = (a + 1 + moves[m, 2]) % 3
            for c in range(n_cols):
                row_a[c] = set_counts[a, c] - gcounts[g1, c]
                row_b[c] = set_counts[b, c] + gcounts[g1, c]
            na = set_n[a] - gsize[g1]
            nb = set_n[b] + gsize[g1]
        else:
            g2 = moves[m, 2]
            a = assign[g1]
            b = assign[g2]
            if a == b:
                rejections += 1
                continue
            for c in range(n_cols):
                row_a[c] = set_counts[a, c] - gcounts[g1, c] + gcounts[g2, c]
                row_b[c] = set_counts[b, c] - gcounts[g2, c] + gcounts[g1, c]
            na = set_n[a] - gsize[g1] + gsize[g2]
            nb = set_n[b] - gsize[g2] + gsize[g1]
        for s in range(3):
            new_terms[s] = terms[s]
        new_terms[a] = set_term(row_a, na, a, total, targets, w_size, ref, dim_start, dim_w, dim_scale)
        new_terms[b] = set_term(row_b, nb, b, total, targets, w_size, ref, dim_start, dim_w, dim_scale)
        candidate = new_terms[0] + new_terms[1] + new_terms[2]
        if candidate < current:
            for c in range(n_cols):
                set_counts[a, c] = row_a[c]
                set_counts[b, c] = row_b[c]
            set_n[a] = na
            set_n[b] = nb
            terms[a] = new_terms[a]
            terms[b] = new_terms[b]
            current = candidate
            if g2 < 0:
                assign[g1] = b
            else:
                assign[g1] = b
                assign[g2] = a
            trace[n_accepted] = current
            n_accepted += 1
            rejections = 0
        else:
            rejections += 1
    return used, n_accepted, rejections


PY_KERNELS = {
    "set_term": set_term,
    "seed_term": seed_term,
    "set_gaps": set_gaps,
    "accumulate": accumulate,
    "assignment_objective": assignment_objective,
    "greedy_seed": greedy_seed,
    "local_search": local_search,
}

_jit_cache: dict = {}


def jit_kernels() -> dict:
    """numba compilations of every kernel (compiled lazily, cached on disk)."""
    if numba is None:
        raise RuntimeError("numba is not installed")
    if not _jit_cache:
        opts = dict(cache=True, nogil=True)
        term = numba.njit(**opts)(set_term)
        gaps = numba.njit(**opts)(set_gaps)
        seed = numba.njit(**opts)(seed_term)
        acc = numba.njit(**opts)(accumulate)
        # rebind globals so the jitted callers see jitted callees
        g = dict(globals(), set_term=term, seed_term=seed, set_gaps=gaps, accumulate=acc)
        rebound = {}
        for name in ("assignment_objective", "greedy_seed", "local_search"):
            fn = PY_KERNELS[name]
            clone = type(fn)(fn.__code__, g, fn.__name__, fn.__defaults__, fn.__closure__)
            clone.__qualname__ = fn.__qualname__
            clone.__module__ = fn.__module__
            rebound[name] = numba.njit(**opts)(clone)
        _jit_cache.update(set_term=term, seed_term=seed, set_gaps=gaps, accumulate=acc, **rebound)
    return _jit_cache


def kernels(use_jit: bool | None = None) -> dict:
    """Kernel table for the requested backend (default: environment flag)."""
    if use_jit is None:
        use_jit = jit_requested()
    if use_jit and numba is not None:
        return jit_kernels()
    return PY_KERNELS


def backend_name(use_jit: bool | None = None) -> str:
    return "numba" if kernels(use_jit) is not PY_KERNELS else "numpy"
