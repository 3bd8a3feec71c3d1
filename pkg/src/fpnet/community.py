"""Fast-unfolding (Louvain) modularity maximisation on the bipartite graph.

Both node sides are treated alike: user-track edges form one undirected
weighted graph. Runs are deterministic for a fixed seed: each local-move sweep
visits nodes in a seeded shuffle, gain ties go to the lowest community label,
and final labels are renumbered by descending user count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .graph import BipartiteGraph
from .model import FEMALE, MALE, Dataset
from .tagmap import TagMatrix, TagVectorSet, normalize_classes

log = logging.getLogger(__name__)

DEFAULT_MIN_GAIN = 1e-7


@dataclass(frozen=True)
class LouvainResult:
    labels: np.ndarray
    modularity: float
    level_modularity: tuple[float, ...]
    n_sweeps: int


def _relabel_first_seen(comm: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, inv = np.unique(comm, return_inverse=True)
    return inv.astype(np.int64), uniq.size


def louvain(
    indptr: np.ndarray,
    indices: np.ndarray,
    weights: np.ndarray,
    seed: int = 0,
    min_gain: float = DEFAULT_MIN_GAIN,
    backend=None,
) -> LouvainResult:
    """Louvain on a symmetric weighted CSR adjacency.

    Each level repeats sweeps until a sweep moves nobody or improves modularity
    by less than ``min_gain``; levels stop when aggregation would not merge
    anything or the level's improvement falls below ``min_gain``.
    """
    k = backend or kernels.active()
    n = indptr.size - 1
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    node_comm = np.arange(n, dtype=np.int64)
    if n == 0:
        return LouvainResult(node_comm, 0.0, (0.0,), 0)
    m2 = float(weights.sum())
    if m2 == 0.0:
        return LouvainResult(node_comm, 0.0, (0.0,), 0)
    rng = np.random.Generator(np.random.Philox(seed))

    cur_ptr, cur_idx, cur_w = indptr, indices, weights
    degree = np.bincount(np.repeat(np.arange(n), np.diff(indptr)), weights=weights, minlength=n)
    q = k.modularity(cur_ptr, cur_idx, cur_w, np.arange(n, dtype=np.int64), n)
    history = [q]
    sweeps = 0
    while True:
        nc = cur_ptr.size - 1
        comm = np.arange(nc, dtype=np.int64)
        tot = degree.copy()
        level_q = q
        while True:
            order = rng.permutation(nc).astype(np.int64)
            moved = k.louvain_sweep(order, cur_ptr, cur_idx, cur_w, degree, comm, tot, m2)
            sweeps += 1
            if moved == 0:
                break
            new_q = k.modularity(cur_ptr, cur_idx, cur_w, comm, nc)
            gained = new_q - level_q
            level_q = new_q
            if gained < min_gain:
                break
        comm, n_comm = _relabel_first_seen(comm)
        node_comm = comm[node_comm]
        improved = level_q - q
        q = level_q
        history.append(q)
        if n_comm == nc or improved < min_gain:
            break
        cur_ptr, cur_idx, cur_w = k.aggregate(cur_ptr, cur_idx, cur_w, comm, n_comm)
        degree = np.bincount(comm, weights=degree, minlength=n_comm)
    return LouvainResult(node_comm, q, tuple(history), sweeps)


@dataclass(eq=False)
class CommunityAssignment:
    """Community label for every graph node (users first, then tracks)."""

    node_ids: tuple[str, ...]
    n_users: int
    labels: np.ndarray
    modularity: float
    level_modularity: tuple[float, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    @property
    def n_communities(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def user_labels(self) -> np.ndarray:
        return self.labels[:self.n_users]

    @property
    def track_labels(self) -> np.ndarray:
        return self.labels[self.n_users:]

    @cached_property
    def user_counts(self) -> np.ndarray:
        return np.bincount(self.user_labels, minlength=self.n_communities)

    @cached_property
    def track_counts(self) -> np.ndarray:
        return np.bincount(self.track_labels, minlength=self.n_communities)

    def sides(self) -> list[str]:
        return ["user"] * self.n_users + ["track"] * (len(self.node_ids) - self.n_users)

    def label_of(self, node_id: str) -> int:
        return int(self.labels[self.node_ids.index(node_id)])


def canonical_labels(labels: np.ndarray, n_users: int) -> np.ndarray:
    """Renumber communities by (user count desc, track count desc, first node)."""
    if labels.size == 0:
        return labels.astype(np.int64)
    labels, n = _relabel_first_seen(labels)
    users = np.bincount(labels[:n_users], minlength=n)
    tracks = np.bincount(labels[n_users:], minlength=n)
    first = np.full(n, labels.size, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(labels.size))
    order = np.lexsort((first, -tracks, -users))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    return rank[labels]


def detect_communities(
    graph: BipartiteGraph,
    seed: int = 0,
    min_modularity_gain: float = DEFAULT_MIN_GAIN,
    backend=None,
) -> CommunityAssignment:
    indptr, indices, weights = graph.adjacency()
    if weights.size and weights.min() <= 0:
        raise ValueError("edge weights must be positive")
    res = louvain(indptr, indices, weights, seed=seed, min_gain=min_modularity_gain,
                  backend=backend)
    labels = canonical_labels(res.labels, graph.n_users)
    assignment = CommunityAssignment(
        node_ids=tuple(graph.node_ids()),
        n_users=graph.n_users,
        labels=labels,
        modularity=res.modularity,
        level_modularity=res.level_modularity,
    )
    warnings = []
    bad = np.flatnonzero((assignment.user_counts == 0) | (assignment.track_counts == 0))
    if bad.size:
        warnings.append(f"{bad.size} communities lack either a user or a track")
        log.warning(warnings[-1])
    assignment.warnings = tuple(warnings)
    return assignment


def modularity(graph: BipartiteGraph, assignment) -> float:
    """Weighted Newman-Girvan modularity of a labelling of the graph's nodes."""
    labels = assignment.labels if isinstance(assignment, CommunityAssignment) else assignment
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != graph.n_nodes:
        raise ValueError(f"assignment covers {labels.size} nodes, graph has {graph.n_nodes}")
    labels, n = _relabel_first_seen(labels)
    indptr, indices, weights = graph.adjacency()
    return float(kernels.active().modularity(indptr, indices, weights, labels, max(n, 1)))


@dataclass(frozen=True)
class CommunityRanking:
    by_tracks: tuple[tuple[int, int], ...]
    by_users: tuple[tuple[int, int], ...]


def rank_communities(assignment: CommunityAssignment) -> CommunityRanking:
    """Zipf rankings as ``(label, size)`` pairs, size descending, ties by label."""
    def ranked(counts):
        order = np.lexsort((np.arange(counts.size), -counts))
        return tuple((int(c), int(counts[c])) for c in order)

    return CommunityRanking(ranked(assignment.track_counts), ranked(assignment.user_counts))


@dataclass(frozen=True, eq=False)
class CommunityProfile:
    label: int
    n_users: int
    n_tracks: int
    track_share: float
    user_share: float
    tags: TagVectorSet
    primary_tags: dict[str, list[str]]
    mean_age: float
    female_proportion: float

    def as_dict(self) -> dict:
        return {
            "community": self.label,
            "n_users": self.n_users,
            "n_tracks": self.n_tracks,
            "rho_T": self.track_share,
            "rho_U": self.user_share,
            "mean_age": None if np.isnan(self.mean_age) else self.mean_age,
            "female_proportion": (None if np.isnan(self.female_proportion)
                                  else self.female_proportion),
            "primary_tags": self.primary_tags,
        }


def profile_communities(
    assignment: CommunityAssignment,
    dataset: Dataset,
    user_tags: TagMatrix,
    graph: BipartiteGraph,
    top: int | None = None,
) -> list[CommunityProfile]:
    """Tag vector-set, top-2 tags per class and member demographics per community."""
    n_c = assignment.n_communities
    labels = assignment.user_labels
    rows = graph.user_index
    schema = user_tags.schema
    sums = np.zeros((n_c, schema.n_tags))
    np.add.at(sums, labels, user_tags.values[rows])
    normalize_classes(sums, schema)
    ages = dataset.ages()[rows].astype(float)
    gender = dataset.gender[rows]
    known_age = ages >= 0
    age_sum = np.bincount(labels[known_age], weights=ages[known_age], minlength=n_c)
    age_n = np.bincount(labels[known_age], minlength=n_c)
    fem = np.bincount(labels[gender == FEMALE], minlength=n_c)
    male = np.bincount(labels[gender == MALE], minlength=n_c)
    total_t = max(assignment.track_counts.sum(), 1)
    total_u = max(assignment.user_counts.sum(), 1)
    out = []
    for c in range(n_c if top is None else min(top, n_c)):
        tv = TagVectorSet(schema, sums[c])
        gendered = fem[c] + male[c]
        out.append(CommunityProfile(
            label=c,
            n_users=int(assignment.user_counts[c]),
            n_tracks=int(assignment.track_counts[c]),
            track_share=float(assignment.track_counts[c] / total_t),
            user_share=float(assignment.user_counts[c] / total_u),
            tags=tv,
            primary_tags={name: tv.primary_tags(name, 2) for name in schema.class_names},
            mean_age=float(age_sum[c] / age_n[c]) if age_n[c] else float("nan"),
            female_proportion=float(fem[c] / gendered) if gendered else float("nan"),
        ))
    return out
