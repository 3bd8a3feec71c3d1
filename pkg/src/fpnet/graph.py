"""Weighted user-track bipartite network built from favorite playlists."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .model import Dataset


class GraphError(ValueError):
    pass


@dataclass(eq=False)
class BipartiteGraph:
    """User rows in CSR form pointing at track nodes.

    ``user_index``/``track_index`` map graph nodes back to dataset rows. Each
    user's edges carry weight ``1/L`` with ``L`` the distinct FP length.
    """

    user_ids: tuple[str, ...]
    track_ids: tuple[str, ...]
    user_index: np.ndarray
    track_index: np.ndarray
    indptr: np.ndarray
    tracks: np.ndarray
    weights: np.ndarray
    n_skipped: int = 0
    # id space for attention exports (every dataset track, followed or not)
    all_track_ids: tuple[str, ...] = ()

    @property
    def n_users(self) -> int:
        return self.user_index.size

    @property
    def n_tracks(self) -> int:
        return self.track_index.size

    @property
    def n_nodes(self) -> int:
        return self.n_users + self.n_tracks

    @property
    def n_edges(self) -> int:
        return self.tracks.size

    @cached_property
    def fp_length(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def followers(self) -> np.ndarray:
        return np.bincount(self.tracks, minlength=self.n_tracks)

    @cached_property
    def edge_users(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_users, dtype=np.int64), self.fp_length)

    def node_ids(self) -> list[str]:
        return list(self.user_ids) + list(self.track_ids)

    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric CSR over users (0..U-1) then tracks (U..U+T-1), sides ignored."""
        nu, n = self.n_users, self.n_nodes
        rows = np.concatenate([self.edge_users, self.tracks.astype(np.int64) + nu])
        cols = np.concatenate([self.tracks.astype(np.int64) + nu, self.edge_users])
        w = np.concatenate([self.weights, self.weights])
        adj = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
        adj.sum_duplicates()
        adj.sort_indices()
        return (adj.indptr.astype(np.int64), adj.indices.astype(np.int64),
                adj.data.astype(np.float64))

    @classmethod
    def from_fp_lists(
        cls,
        fps: dict[str, Sequence[str]],
        track_ids: Sequence[str] | None = None,
    ) -> "BipartiteGraph":
        """Build directly from ``{user_id: [track_id, ...]}`` (duplicates collapse)."""
        if track_ids is None:
            track_ids = list(dict.fromkeys(t for fp in fps.values() for t in fp))
        tidx = {t: i for i, t in enumerate(track_ids)}
        users = list(fps)
        indptr = np.zeros(len(users) + 1, dtype=np.int64)
        flat = []
        for i, u in enumerate(users):
            flat.extend(tidx[t] for t in fps[u])
            indptr[i + 1] = len(flat)
        indptr, tracks = kernels.active().dedupe_rows(indptr, np.asarray(flat, dtype=np.int64))
        return _assemble(users, np.arange(len(users)), list(track_ids), indptr, tracks)


def _assemble(user_ids, user_rows, all_track_ids, indptr, tracks) -> BipartiteGraph:
    lengths = np.diff(indptr)
    keep = lengths > 0
    n_skipped = int((~keep).sum())
    kept_rows = np.flatnonzero(keep)
    new_ptr = np.zeros(kept_rows.size + 1, dtype=np.int64)
    np.cumsum(lengths[keep], out=new_ptr[1:])
    # rows of empty users contribute nothing, so tracks stay in order
    followed = np.unique(tracks)
    remap = np.full(len(all_track_ids), -1, dtype=np.int64)
    remap[followed] = np.arange(followed.size)
    weights = np.repeat(1.0 / np.maximum(lengths[keep], 1), lengths[keep])
    return BipartiteGraph(
        user_ids=tuple(user_ids[i] for i in kept_rows.tolist()),
        track_ids=tuple(all_track_ids[t] for t in followed.tolist()),
        user_index=np.asarray(user_rows)[kept_rows].astype(np.int64),
        track_index=followed.astype(np.int64),
        indptr=new_ptr,
        tracks=remap[tracks].astype(np.int64),
        weights=weights.astype(np.float64),
        n_skipped=n_skipped,
        all_track_ids=tuple(all_track_ids),
    )


def build_graph(dataset: Dataset) -> BipartiteGraph:
    """One node per user with a non-empty FP and per followed track.

    Duplicate FP entries collapse into one edge; users with empty FPs are
    omitted and counted in ``n_skipped``.
    """
    if not dataset.favorite.any():
        raise GraphError("dataset has no favorite playlists")
    indptr, tracks = dataset.fp_csr()
    has_fp = dataset.fp_of_user >= 0
    # users without any FP are not graph candidates at all
    rows = np.flatnonzero(has_fp)
    lengths = np.diff(indptr)[rows]
    sub_ptr = np.zeros(rows.size + 1, dtype=np.int64)
    np.cumsum(lengths, out=sub_ptr[1:])
    return _assemble(dataset.user_ids, rows, dataset.track_ids, sub_ptr, tracks)


@dataclass(frozen=True, eq=False)
class AttentionTable:
    """Total attention per track over every dataset track (0 when unfollowed)."""

    track_ids: tuple[str, ...]
    values: np.ndarray

    @cached_property
    def _index(self):
        return {t: i for i, t in enumerate(self.track_ids)}

    def get(self, track_id: str) -> float:
        i = self._index.get(track_id)
        return 0.0 if i is None else float(self.values[i])

    def __getitem__(self, track_id: str) -> float:
        return self.get(track_id)

    def total(self) -> float:
        return float(np.sum(self.values))

    def followed(self) -> dict[str, float]:
        return {t: float(v) for t, v in zip(self.track_ids, self.values) if v > 0}


def total_attention(graph: BipartiteGraph) -> AttentionTable:
    per_node = np.bincount(graph.tracks, weights=graph.weights, minlength=graph.n_tracks)
    values = np.zeros(len(graph.all_track_ids))
    values[graph.track_index] = per_node
    return AttentionTable(graph.all_track_ids, values)


@dataclass(frozen=True)
class Histogram:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    count: np.ndarray

    @property
    def density(self) -> np.ndarray:
        total = self.count.sum()
        if total == 0:
            return np.zeros(self.count.size)
        return self.count / (total * (self.bin_hi - self.bin_lo))

    def rows(self):
        return zip(self.bin_lo.tolist(), self.bin_hi.tolist(), self.count.tolist(),
                   self.density.tolist())


def integer_histogram(values: np.ndarray) -> Histogram:
    """Unit-width bins covering ``min..max`` of positive integer data."""
    values = np.asarray(values, dtype=np.int64)
    if values.size == 0:
        empty = np.zeros(0)
        return Histogram(empty, empty, np.zeros(0, dtype=np.int64))
    lo = int(values.min())
    counts = np.bincount(values - lo)
    edges = np.arange(lo, lo + counts.size + 1, dtype=float)
    return Histogram(edges[:-1], edges[1:], counts)


def log_binned_histogram(values: np.ndarray, bins_per_decade: int = 10) -> Histogram:
    """Histogram of positive values on a logarithmic grid anchored at powers of ten."""
    values = np.asarray(values, dtype=float)
    values = values[values > 0]
    if values.size == 0:
        empty = np.zeros(0)
        return Histogram(empty, empty, np.zeros(0, dtype=np.int64))
    lmin = np.floor(np.log10(values.min()) * bins_per_decade)
    lmax = np.ceil(np.log10(values.max()) * bins_per_decade)
    if lmax <= lmin:
        lmax = lmin + 1
    edges = 10.0 ** (np.arange(lmin, lmax + 1) / bins_per_decade)
    # guard the extremes against rounding in 10**x
    edges[0] = min(edges[0], values.min())
    edges[-1] = max(edges[-1], values.max())
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges[:-1], edges[1:], counts.astype(np.int64))


def degree_distributions(graph: BipartiteGraph, bins_per_decade: int = 10) -> dict[str, Histogram]:
    """FP-length, followers-per-track and (log-binned) attention distributions."""
    attention = np.bincount(graph.tracks, weights=graph.weights, minlength=graph.n_tracks)
    return {
        "fp_length": integer_histogram(graph.fp_length),
        "followers": integer_histogram(graph.followers),
        "attention": log_binned_histogram(attention, bins_per_decade),
    }
