"""Independent reference computations used by the tests."""

from __future__ import annotations

import numpy as np

from fpnet.graph import BipartiteGraph


def dense_modularity(graph: BipartiteGraph, labels) -> float:
    """Newman-Girvan Q straight from the dense adjacency matrix."""
    n, nu = graph.n_nodes, graph.n_users
    A = np.zeros((n, n))
    for u, t, w in zip(graph.edge_users, graph.tracks, graph.weights):
        A[u, nu + t] += w
        A[nu + t, u] += w
    k = A.sum(axis=1)
    m2 = k.sum()
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    return float(((A - np.outer(k, k) / m2) * same).sum() / m2)


def set_partitions(n: int):
    """Every partition of ``range(n)`` as a restricted-growth label list."""
    labels = [0] * n

    def rec(i, k):
        if i == n:
            yield list(labels)
            return
        for c in range(k + 1):
            labels[i] = c
            yield from rec(i + 1, max(k, c + 1))

    if n == 0:
        yield []
        return
    yield from rec(1, 1)


def best_modularity(graph: BipartiteGraph) -> float:
    return max(dense_modularity(graph, p) for p in set_partitions(graph.n_nodes))


def small_connected_graphs(count: int, seed: int = 2024, max_nodes: int = 8):
    """Random connected bipartite graphs with at most ``max_nodes`` nodes."""
    gen = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(gen.integers(2, max_nodes + 1))
        nu = int(gen.integers(1, n))
        nt = n - nu
        p = gen.uniform(0.3, 0.9)
        fps = {f"u{i}": [f"t{j}" for j in range(nt) if gen.random() < p] for i in range(nu)}
        if any(not fp for fp in fps.values()):
            continue
        g = BipartiteGraph.from_fp_lists(fps, [f"t{j}" for j in range(nt)])
        if g.n_nodes != n or not _connected(g):
            continue
        out.append(g)
    return out


def _connected(g: BipartiteGraph) -> bool:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    indptr, indices, w = g.adjacency()
    return connected_components(csr_matrix((w, indices, indptr)), directed=False)[0] == 1


def planted_blocks(n_users=1000, n_tracks=1000, n_blocks=8, epsilon=0.05, fp_length=20,
                   seed=0):
    """Planted-partition FPs: own block with prob ``1 - epsilon``, else any track."""
    gen = np.random.default_rng(seed)
    ub = np.arange(n_users) % n_blocks
    tb = np.arange(n_tracks) % n_blocks
    by_block = [np.flatnonzero(tb == b) for b in range(n_blocks)]
    fps = {}
    for u in range(n_users):
        picks = set()
        while len(picks) < fp_length:
            if gen.random() < epsilon:
                picks.add(int(gen.integers(n_tracks)))
            else:
                picks.add(int(gen.choice(by_block[ub[u]])))
        fps[f"u{u}"] = [f"t{t}" for t in sorted(picks)]
    graph = BipartiteGraph.from_fp_lists(fps, [f"t{t}" for t in range(n_tracks)])
    truth = np.concatenate([ub[graph.user_index], tb[graph.track_index]])
    return graph, truth
