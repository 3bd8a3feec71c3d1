#!/usr/bin/env python3
"""Time the numba kernels against their numpy twins on a synthetic workload.

Each kernel is warmed up once (numba compiles on first call) and then timed
as the best of ``--repeat`` runs. Results from both paths are compared before
any timing is reported, so a speed-up is never quoted for diverging output.

Example::

    python3 benchmarks/bench_kernels.py --users 20000 --tracks 10000
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fpnet import _accel, kernels
from fpnet.community import detect_communities
from fpnet.graph import build_graph
from fpnet.synth import SynthConfig, generate


def best_of(fn, repeat: int) -> tuple[float, object]:
    fn()  # warm-up, includes JIT compilation
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and np.allclose(a, b, rtol=1e-10, atol=1e-12)
    return a == b or abs(a - b) <= 1e-12


def workloads(args):
    cfg = SynthConfig(n_users=args.users, n_tracks=args.tracks,
                      fp_length_mean=args.fp_length, n_provinces=4, cities_per_province=2)
    ds, _, _ = generate(cfg, seed=args.seed)
    g = build_graph(ds)
    print(f"graph: {g.n_users} users, {g.n_tracks} tracks, {g.n_edges} edges")
    ind, idx, w = g.adjacency()
    n = ind.size - 1
    gen = np.random.default_rng(args.seed)
    comm = gen.integers(0, 64, n).astype(np.int64)
    k = np.bincount(np.repeat(np.arange(n), np.diff(ind)), weights=w, minlength=n)
    order = gen.permutation(n).astype(np.int64)
    src = gen.random((g.n_tracks, 8))
    per_user = gen.random((g.n_users, 8))
    raw_ptr, raw_tracks = ds.fp_csr()
    labels = gen.integers(0, 16, g.n_tracks).astype(np.int64)

    def sweep(ks):
        c = np.arange(n, dtype=np.int64)
        tot = k.copy()
        moved = ks.louvain_sweep(order, ind, idx, w, k, c, tot, float(w.sum()))
        return moved, c

    return g, {
        "dedupe_rows": lambda ks: ks.dedupe_rows(raw_ptr, raw_tracks),
        "gather_rows": lambda ks: ks.gather_rows(g.indptr, g.tracks, g.weights, src),
        "scatter_rows": lambda ks: ks.scatter_rows(g.indptr, g.tracks, per_user, g.n_tracks),
        "louvain_sweep": sweep,
        "aggregate": lambda ks: ks.aggregate(ind, idx, w, comm, 64),
        "modularity": lambda ks: ks.modularity(ind, idx, w, comm, 64),
        "label_counts": lambda ks: ks.label_counts(g.indptr, g.tracks, labels, 16),
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--users", type=int, default=20000)
    p.add_argument("--tracks", type=int, default=10000)
    p.add_argument("--fp-length", type=float, default=50.0)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-louvain", action="store_true",
                   help="skip the end-to-end community detection timing")
    args = p.parse_args(argv)
    if not _accel.HAS_NUMBA:
        p.error("numba is not installed; nothing to compare")

    g, jobs = workloads(args)
    print(f"{'kernel':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}")
    for name, job in jobs.items():
        t_nb, r_nb = best_of(lambda: job(kernels.NUMBA), args.repeat)
        t_np, r_np = best_of(lambda: job(kernels.NUMPY), args.repeat)
        if not same(r_nb, r_np):
            raise SystemExit(f"{name}: numba and numpy results differ")
        print(f"{name:<16}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")

    if not args.skip_louvain:
        t_nb, a = best_of(lambda: detect_communities(g, seed=0, backend=kernels.NUMBA), 1)
        t_np, b = best_of(lambda: detect_communities(g, seed=0, backend=kernels.NUMPY), 1)
        if not np.array_equal(a.labels, b.labels):
            raise SystemExit("detect_communities: labels differ between backends")
        print(f"{'louvain (full)':<16}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
