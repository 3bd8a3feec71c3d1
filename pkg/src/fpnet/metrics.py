"""Normalised-entropy diversity metrics and distribution divergences.

Natural logarithms throughout; ``0 log 0 = 0``. An all-zero vector has no
defined diversity and is reported as ``None`` (``nan`` in array results).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .community import CommunityAssignment
from .graph import BipartiteGraph
from .model import FEMALE, MALE
from .tagmap import TagMatrix

LN2 = float(np.log(2.0))


def _entropy_rows(p: np.ndarray) -> np.ndarray:
    p = np.atleast_2d(np.asarray(p, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def normalized_entropy(p: np.ndarray, m: int | None = None) -> np.ndarray:
    """Row-wise entropy divided by ``log m``; rows summing to 0 give ``nan``.

    Rows are renormalised first so count vectors are accepted too.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    m = p.shape[1] if m is None else m
    if m < 2:
        raise ValueError(f"normalised entropy needs at least 2 categories, got {m}")
    s = p.sum(axis=1, keepdims=True)
    q = np.divide(p, s, out=np.zeros_like(p), where=s > 0)
    h = _entropy_rows(q) / np.log(m)
    h[s[:, 0] <= 0] = np.nan
    # guard exact extremes against rounding
    return np.clip(h, 0.0, 1.0, where=~np.isnan(h), out=h)


def _scalar(h: np.ndarray) -> float | None:
    v = float(h[0])
    return None if np.isnan(v) else v


def individual_tag_diversity(tag_vector, m_G: int | None = None) -> float | None:
    """Normalised entropy of one class vector of one user."""
    return _scalar(normalized_entropy(tag_vector, m_G))


def aggregated_tag_diversity(group_vector, m_G: int | None = None) -> float | None:
    return _scalar(normalized_entropy(group_vector, m_G))


@dataclass(frozen=True)
class DiversityTriple:
    """Mean individual, aggregated and within-group diversity of one group."""

    individual_mean: float | None
    aggregated: float | None
    within: float | None
    n_members: int
    n_excluded: int


def tag_diversity_triple(member_vectors: np.ndarray, m_G: int | None = None) -> DiversityTriple:
    """Diversities of one tag class for a group given its members' class vectors.

    The group vector is the normalised sum of member vectors; members with a
    zero vector are excluded from the individual mean and counted.
    """
    member_vectors = np.atleast_2d(np.asarray(member_vectors, dtype=float))
    n = member_vectors.shape[0]
    m_G = member_vectors.shape[1] if m_G is None else m_G
    if n == 0:
        return DiversityTriple(None, None, None, 0, 0)
    ind = normalized_entropy(member_vectors, m_G)
    defined = ~np.isnan(ind)
    if not defined.any():
        return DiversityTriple(None, None, None, n, n)
    group = member_vectors.sum(axis=0)
    group = group / group.sum()
    agg = float(normalized_entropy(group, m_G)[0])
    mean = float(ind[defined].mean())
    return DiversityTriple(mean, agg, agg - mean, n, int((~defined).sum()))


def within_group_tag_diversity(member_vectors: np.ndarray, m_G: int | None = None) -> float | None:
    return tag_diversity_triple(member_vectors, m_G).within


# --------------------------------------------------------------------------
# community diversity
# --------------------------------------------------------------------------


def community_counts(graph: BipartiteGraph, assignment: CommunityAssignment) -> sp.csr_matrix:
    """``l_kj``: number of user ``k``'s FP tracks lying in community ``j`` (graph users)."""
    n_c = assignment.n_communities
    ptr, cols, cnt = kernels.active().label_counts(
        graph.indptr, graph.tracks, assignment.track_labels.astype(np.int64), n_c)
    return sp.csr_matrix((cnt.astype(float), cols, ptr), shape=(graph.n_users, n_c))


def individual_community_diversity(fp_communities: Sequence[int], M_c: int) -> float | None:
    """Normalised entropy of the community labels of one user's FP tracks."""
    labels = np.asarray(fp_communities, dtype=np.int64)
    if labels.size == 0:
        return None
    if M_c < 2:
        raise ValueError(f"community diversity needs M_c >= 2, got {M_c}")
    counts = np.bincount(labels).astype(float)
    return _scalar(normalized_entropy(counts, M_c))


def _sparse_row_entropy(counts: sp.csr_matrix, M_c: int) -> np.ndarray:
    counts = counts.tocsr()
    totals = np.asarray(counts.sum(axis=1)).ravel()
    rows = np.repeat(np.arange(counts.shape[0]), np.diff(counts.indptr))
    p = counts.data / totals[rows]
    h = -np.bincount(rows, weights=p * np.log(p), minlength=counts.shape[0]) / np.log(M_c)
    h[totals <= 0] = np.nan
    return np.clip(h, 0.0, 1.0, where=~np.isnan(h), out=h)


def community_diversity_triple(counts: sp.csr_matrix, members: np.ndarray,
                               M_c: int) -> DiversityTriple:
    """Diversities over the community distribution of a group's FP tracks.

    ``members`` are graph-user rows of ``counts``. The aggregate proportions
    pool all members' FP tracks, so long FPs weigh more there than in the
    unweighted individual mean.
    """
    if M_c < 2:
        raise ValueError(f"community diversity needs M_c >= 2, got {M_c}")
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        return DiversityTriple(None, None, None, 0, 0)
    sub = counts[members]
    ind = _sparse_row_entropy(sub, M_c)
    defined = ~np.isnan(ind)
    if not defined.any():
        return DiversityTriple(None, None, None, members.size, members.size)
    q = np.asarray(sub.sum(axis=0)).ravel()
    agg = float(normalized_entropy(q, M_c)[0])
    mean = float(ind[defined].mean())
    return DiversityTriple(mean, agg, agg - mean, members.size, int((~defined).sum()))


def aggregated_community_diversity(counts: sp.csr_matrix, members, M_c: int) -> float | None:
    return community_diversity_triple(counts, members, M_c).aggregated


def within_group_community_diversity(counts: sp.csr_matrix, members, M_c: int) -> float | None:
    return community_diversity_triple(counts, members, M_c).within


def community_proportions(counts: sp.csr_matrix, members) -> np.ndarray:
    """``q_j`` of a group: pooled share of each community among members' FP tracks."""
    q = np.asarray(counts[np.asarray(members, dtype=np.int64)].sum(axis=0)).ravel()
    s = q.sum()
    return q / s if s > 0 else q


# --------------------------------------------------------------------------
# divergences
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Divergence:
    value: float | None
    # mean over P and Q of the mass lying outside their common support
    dropped_mass: float


def symmetrized_kld_detail(P, Q) -> Divergence:
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ValueError("P and Q must share the same index set")
    common = (P > 0) & (Q > 0)
    dropped = 0.5 * (float(P[~common].sum()) + float(Q[~common].sum()))
    if not common.any():
        return Divergence(None, dropped)
    p, q = P[common], Q[common]
    lr = np.log(p) - np.log(q)
    # (p - q) * ln(p/q) sums both directions in one symmetric expression
    return Divergence(float(0.5 * np.sum((p - q) * lr)), dropped)


def symmetrized_kld(P, Q) -> float | None:
    """Mean of the two directed KL divergences over the common support."""
    return symmetrized_kld_detail(P, Q).value


def jensen_shannon(P, Q) -> float:
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ValueError("P and Q must share the same index set")
    M = 0.5 * (P + Q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * (np.log(a[nz]) - np.log(M[nz]))))

    return min(max(0.5 * kl(P) + 0.5 * kl(Q), 0.0), LN2)


def _group_vector(user_tags: TagMatrix, members, class_name: str) -> np.ndarray:
    idx = np.asarray(members, dtype=np.int64)
    v = user_tags.class_block(class_name)[idx].sum(axis=0)
    s = v.sum()
    return v / s if s > 0 else v


def tag_kld(user_tags: TagMatrix, members_a, members_b, class_name: str) -> Divergence:
    """Symmetrised KLD between the class vectors of two subgroups (dataset user rows)."""
    if len(members_a) == 0 or len(members_b) == 0:
        return Divergence(None, 0.0)
    return symmetrized_kld_detail(_group_vector(user_tags, members_a, class_name),
                                  _group_vector(user_tags, members_b, class_name))


def community_kld(counts: sp.csr_matrix, members_a, members_b) -> Divergence:
    """Symmetrised KLD between two subgroups' pooled community proportions (graph rows)."""
    if len(members_a) == 0 or len(members_b) == 0:
        return Divergence(None, 0.0)
    return symmetrized_kld_detail(community_proportions(counts, members_a),
                                  community_proportions(counts, members_b))


def gender_split(gender: np.ndarray, members) -> tuple[np.ndarray, np.ndarray]:
    members = np.asarray(members, dtype=np.int64)
    g = gender[members]
    return members[g == MALE], members[g == FEMALE]


# --------------------------------------------------------------------------
# group reports
# --------------------------------------------------------------------------

REPORT_COLUMNS = ("group_key", "metric", "tag_class_or_community", "value", "n_members",
                  "n_excluded")


def diversity_rows(
    groups: dict[str, np.ndarray],
    user_tags: TagMatrix,
    graph: BipartiteGraph,
    counts: sp.csr_matrix | None,
    M_c: int,
) -> list[tuple]:
    """Long-format diversity table for ``{group_key: dataset user rows}``."""
    schema = user_tags.schema
    graph_row = np.full(len(user_tags.ids), -1, dtype=np.int64)
    graph_row[graph.user_index] = np.arange(graph.n_users)
    rows = []
    for key, members in groups.items():
        members = np.asarray(members, dtype=np.int64)
        for c in schema.class_names:
            t = tag_diversity_triple(user_tags.class_block(c)[members], schema.size(c))
            for metric, v in (("D_TI_mean", t.individual_mean), ("D_TA", t.aggregated),
                              ("D_TU", t.within)):
                rows.append((key, metric, c, v, t.n_members, t.n_excluded))
        if counts is not None and M_c >= 2:
            g = graph_row[members]
            g = g[g >= 0]
            t = community_diversity_triple(counts, g, M_c)
            excluded = t.n_excluded + (members.size - g.size)
            for metric, v in (("D_CI_mean", t.individual_mean), ("D_CA", t.aggregated),
                              ("D_CU", t.within)):
                rows.append((key, metric, "community", v, int(members.size), excluded))
    return rows


def divergence_rows(
    groups: dict[str, np.ndarray],
    gender: np.ndarray,
    user_tags: TagMatrix,
    graph: BipartiteGraph,
    counts: sp.csr_matrix | None,
) -> list[tuple]:
    """Male/female KLD, JSD and dropped-mass rows per group (``n_excluded`` = unknown gender)."""
    schema = user_tags.schema
    graph_row = np.full(len(user_tags.ids), -1, dtype=np.int64)
    graph_row[graph.user_index] = np.arange(graph.n_users)
    rows = []
    for key, members in groups.items():
        members = np.asarray(members, dtype=np.int64)
        male, female = gender_split(gender, members)
        n, excl = int(members.size), int(members.size - male.size - female.size)
        for c in schema.class_names:
            d = tag_kld(user_tags, male, female, c)
            rows.append((key, "KLD_T", c, d.value, n, excl))
            rows.append((key, "KLD_T_dropped_mass", c, d.dropped_mass, n, excl))
            js = None
            if male.size and female.size:
                js = jensen_shannon(_group_vector(user_tags, male, c),
                                    _group_vector(user_tags, female, c))
            rows.append((key, "JSD_T", c, js, n, excl))
        if counts is not None:
            gm, gf = graph_row[male], graph_row[female]
            gm, gf = gm[gm >= 0], gf[gf >= 0]
            d = community_kld(counts, gm, gf)
            rows.append((key, "KLD_C", "community", d.value, n, excl))
            rows.append((key, "KLD_C_dropped_mass", "community", d.dropped_mass, n, excl))
            js = None
            if gm.size and gf.size:
                js = jensen_shannon(community_proportions(counts, gm),
                                    community_proportions(counts, gf))
            rows.append((key, "JSD_C", "community", js, n, excl))
    return rows
