"""Hot inner loops.

Every kernel exists twice: a numba ``@njit`` version and a numpy/scipy version
with identical semantics. :data:`NUMBA` and :data:`NUMPY` expose the two sets;
:func:`active` returns whichever the ``FPNET_DISABLE_NUMBA`` flag selects.

All kernels work on CSR triples ``(indptr, indices, weights)``. Row indices
inside returned CSR structures are sorted so both paths produce the same layout.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import scipy.sparse as sp

from ._accel import USE_NUMBA, njit

# Louvain moves require a strict improvement larger than this.
MOVE_EPS = 1e-12


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------


@njit
def _dedupe_rows_nb(indptr, indices):
    n = indptr.size - 1
    out_ptr = np.zeros(n + 1, dtype=np.int64)
    out = np.empty(indices.size, dtype=indices.dtype)
    pos = 0
    for r in range(n):
        row = np.sort(indices[indptr[r]:indptr[r + 1]])
        last = -1
        for j in range(row.size):
            v = row[j]
            if j == 0 or v != last:
                out[pos] = v
                pos += 1
                last = v
        out_ptr[r + 1] = pos
    return out_ptr, out[:pos].copy()


@njit
def _gather_rows_nb(indptr, indices, weights, src):
    n = indptr.size - 1
    k = src.shape[1]
    out = np.zeros((n, k), dtype=np.float64)
    for r in range(n):
        for p in range(indptr[r], indptr[r + 1]):
            w = weights[p]
            s = indices[p]
            for c in range(k):
                out[r, c] += w * src[s, c]
    return out


@njit
def _scatter_rows_nb(indptr, indices, src, n_out):
    n = indptr.size - 1
    k = src.shape[1]
    out = np.zeros((n_out, k), dtype=np.float64)
    for r in range(n):
        for p in range(indptr[r], indptr[r + 1]):
            t = indices[p]
            for c in range(k):
                out[t, c] += src[r, c]
    return out


@njit
def _louvain_sweep_nb(order, indptr, indices, weights, k, comm, tot, m2):
    n = indptr.size - 1
    neigh_w = np.zeros(n, dtype=np.float64)
    neigh_seen = np.zeros(n, dtype=np.bool_)
    neigh_list = np.empty(n, dtype=np.int64)
    moved = 0
    for oi in range(order.size):
        i = order[oi]
        ci = comm[i]
        ki = k[i]
        n_nc = 0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j == i:
                continue
            c = comm[j]
            if not neigh_seen[c]:
                neigh_seen[c] = True
                neigh_list[n_nc] = c
                n_nc += 1
            neigh_w[c] += weights[p]
        tot[ci] -= ki
        own_gain = neigh_w[ci] - tot[ci] * ki / m2
        best = -1
        best_gain = 0.0
        for q in range(n_nc):
            c = neigh_list[q]
            if c == ci:
                continue
            g = neigh_w[c] - tot[c] * ki / m2
            if best < 0 or g > best_gain or (g == best_gain and c < best):
                best = c
                best_gain = g
        target = ci
        if best >= 0 and best_gain > own_gain + MOVE_EPS:
            target = best
            moved += 1
        tot[target] += ki
        comm[i] = target
        for q in range(n_nc):
            c = neigh_list[q]
            neigh_w[c] = 0.0
            neigh_seen[c] = False
    return moved


@njit
def _aggregate_nb(indptr, indices, weights, comm, n_comm):
    n = indptr.size - 1
    # counting sort of nodes by community
    counts = np.zeros(n_comm + 1, dtype=np.int64)
    for i in range(n):
        counts[comm[i] + 1] += 1
    for c in range(n_comm):
        counts[c + 1] += counts[c]
    members = np.empty(n, dtype=np.int64)
    fill = counts[:-1].copy()
    for i in range(n):
        c = comm[i]
        members[fill[c]] = i
        fill[c] += 1

    acc = np.zeros(n_comm, dtype=np.float64)
    seen = np.zeros(n_comm, dtype=np.bool_)
    lst = np.empty(n_comm, dtype=np.int64)
    out_ptr = np.zeros(n_comm + 1, dtype=np.int64)
    cap = max(indices.size, 1)
    out_idx = np.empty(cap, dtype=np.int64)
    out_w = np.empty(cap, dtype=np.float64)
    pos = 0
    for c in range(n_comm):
        nl = 0
        for m in range(counts[c], counts[c + 1]):
            i = members[m]
            for p in range(indptr[i], indptr[i + 1]):
                d = comm[indices[p]]
                if not seen[d]:
                    seen[d] = True
                    lst[nl] = d
                    nl += 1
                acc[d] += weights[p]
        row = np.sort(lst[:nl])
        for q in range(nl):
            d = row[q]
            out_idx[pos] = d
            out_w[pos] = acc[d]
            pos += 1
            acc[d] = 0.0
            seen[d] = False
        out_ptr[c + 1] = pos
    return out_ptr, out_idx[:pos].copy(), out_w[:pos].copy()


@njit
def _modularity_nb(indptr, indices, weights, comm, n_comm):
    n = indptr.size - 1
    inside = np.zeros(n_comm, dtype=np.float64)
    tot = np.zeros(n_comm, dtype=np.float64)
    m2 = 0.0
    for i in range(n):
        ci = comm[i]
        for p in range(indptr[i], indptr[i + 1]):
            w = weights[p]
            tot[ci] += w
            m2 += w
            if comm[indices[p]] == ci:
                inside[ci] += w
    if m2 == 0.0:
        return 0.0
    q = 0.0
    for c in range(n_comm):
        q += inside[c] / m2 - (tot[c] / m2) ** 2
    return q


@njit
def _label_counts_nb(indptr, indices, labels, n_labels):
    n = indptr.size - 1
    acc = np.zeros(n_labels, dtype=np.int64)
    lst = np.empty(n_labels, dtype=np.int64)
    out_ptr = np.zeros(n + 1, dtype=np.int64)
    out_col = np.empty(max(indices.size, 1), dtype=np.int64)
    out_cnt = np.empty(max(indices.size, 1), dtype=np.int64)
    pos = 0
    for r in range(n):
        nl = 0
        for p in range(indptr[r], indptr[r + 1]):
            c = labels[indices[p]]
            if acc[c] == 0:
                lst[nl] = c
                nl += 1
            acc[c] += 1
        row = np.sort(lst[:nl])
        for q in range(nl):
            c = row[q]
            out_col[pos] = c
            out_cnt[pos] = acc[c]
            acc[c] = 0
            pos += 1
        out_ptr[r + 1] = pos
    return out_ptr, out_col[:pos].copy(), out_cnt[:pos].copy()


# --------------------------------------------------------------------------
# numpy path
# --------------------------------------------------------------------------


def _row_ids(indptr):
    return np.repeat(np.arange(indptr.size - 1, dtype=np.int64), np.diff(indptr))


def _dedupe_rows_np(indptr, indices):
    n = indptr.size - 1
    if indices.size == 0:
        return np.zeros(n + 1, dtype=np.int64), indices.copy()
    base = np.int64(indices.max()) + 1
    key = np.unique(_row_ids(indptr) * base + indices.astype(np.int64))
    rows = key // base
    out_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=out_ptr[1:])
    return out_ptr, (key % base).astype(indices.dtype)


def _gather_rows_np(indptr, indices, weights, src):
    mat = sp.csr_matrix((weights, indices, indptr), shape=(indptr.size - 1, src.shape[0]))
    return np.asarray(mat @ src, dtype=np.float64)


def _scatter_rows_np(indptr, indices, src, n_out):
    ones = np.ones(indices.size, dtype=np.float64)
    mat = sp.csr_matrix((ones, indices, indptr), shape=(indptr.size - 1, n_out))
    return np.asarray(mat.T @ src, dtype=np.float64)


def _louvain_sweep_np(order, indptr, indices, weights, k, comm, tot, m2):
    # Interpreted twin of the numba sweep; numpy cannot vectorise sequential moves.
    moved = 0
    for i in order.tolist():
        ci = int(comm[i])
        ki = float(k[i])
        lo, hi = int(indptr[i]), int(indptr[i + 1])
        nbrs = indices[lo:hi]
        keep = nbrs != i
        cs = comm[nbrs[keep]]
        ws = weights[lo:hi][keep]
        tot[ci] -= ki
        uniq, inv = np.unique(cs, return_inverse=True)
        wsum = np.bincount(inv, weights=ws, minlength=uniq.size) if uniq.size else np.zeros(0)
        own = np.flatnonzero(uniq == ci)
        own_w = float(wsum[own[0]]) if own.size else 0.0
        own_gain = own_w - tot[ci] * ki / m2
        target = ci
        others = uniq != ci
        if others.any():
            cand = uniq[others]
            gains = wsum[others] - tot[cand] * ki / m2
            g = gains.max()
            best = int(cand[gains == g].min())
            if g > own_gain + MOVE_EPS:
                target = best
                moved += 1
        tot[target] += ki
        comm[i] = target
    return moved


def _aggregate_np(indptr, indices, weights, comm, n_comm):
    n = indptr.size - 1
    adj = sp.csr_matrix((weights, indices, indptr), shape=(n, n))
    onehot = sp.csr_matrix((np.ones(n), (np.arange(n), comm)), shape=(n, n_comm))
    agg = (onehot.T @ adj @ onehot).tocsr()
    agg.sum_duplicates()
    agg.sort_indices()
    return agg.indptr.astype(np.int64), agg.indices.astype(np.int64), agg.data.astype(np.float64)


def _modularity_np(indptr, indices, weights, comm, n_comm):
    rows = _row_ids(indptr)
    m2 = float(weights.sum())
    if m2 == 0.0:
        return 0.0
    cr = comm[rows]
    same = cr == comm[indices]
    inside = np.bincount(cr[same], weights=weights[same], minlength=n_comm)
    tot = np.bincount(cr, weights=weights, minlength=n_comm)
    return float(np.sum(inside / m2 - (tot / m2) ** 2))


def _label_counts_np(indptr, indices, labels, n_labels):
    n = indptr.size - 1
    mat = sp.csr_matrix(
        (np.ones(indices.size, dtype=np.int64), (_row_ids(indptr), labels[indices])),
        shape=(n, n_labels),
    )
    mat.sum_duplicates()
    mat.sort_indices()
    return mat.indptr.astype(np.int64), mat.indices.astype(np.int64), mat.data.astype(np.int64)


NUMBA = SimpleNamespace(
    name="numba",
    dedupe_rows=_dedupe_rows_nb,
    gather_rows=_gather_rows_nb,
    scatter_rows=_scatter_rows_nb,
    louvain_sweep=_louvain_sweep_nb,
    aggregate=_aggregate_nb,
    modularity=_modularity_nb,
    label_counts=_label_counts_nb,
)

NUMPY = SimpleNamespace(
    name="numpy",
    dedupe_rows=_dedupe_rows_np,
    gather_rows=_gather_rows_np,
    scatter_rows=_scatter_rows_np,
    louvain_sweep=_louvain_sweep_np,
    aggregate=_aggregate_np,
    modularity=_modularity_np,
    label_counts=_label_counts_np,
)


def active() -> SimpleNamespace:
    return NUMBA if USE_NUMBA else NUMPY
