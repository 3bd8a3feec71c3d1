"""Birth-year by release-year attention, global preference decay and sensitivity.

Year axes are dense integer ranges. Release years span every dated track in
the dataset, birth years span the graph users with a known birth year.
Missing years (0 in the dataset) are excluded and tallied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import BipartiteGraph, total_attention
from .model import GENDER_CODES, Dataset

BANDS = ("hot", "middle", "unpopular")
# cumulative rank fractions closing the hot and middle bands
BAND_EDGES = (0.05, 0.25)


@dataclass(frozen=True, eq=False)
class EdgeView:
    """Per-edge columns of a graph joined with dataset years."""

    user: np.ndarray          # graph user row
    track: np.ndarray         # dataset track row
    weight: np.ndarray
    release_year: np.ndarray  # 0 when undated
    birth_year: np.ndarray    # of the edge's user, 0 when unknown
    n_users: int


def _edges(dataset: Dataset, graph: BipartiteGraph, gender: str | None) -> EdgeView:
    users = graph.edge_users
    track = graph.track_index[graph.tracks]
    w = graph.weights
    by_user = dataset.birth_year[graph.user_index]
    n_users = graph.n_users
    if gender not in (None, "all"):
        keep_user = dataset.gender[graph.user_index] == GENDER_CODES[gender]
        n_users = int(keep_user.sum())
        sel = keep_user[users]
        users, track, w = users[sel], track[sel], w[sel]
    return EdgeView(users, track, w, dataset.release_year[track].astype(np.int64),
                    by_user[users].astype(np.int64), n_users)


def release_axis(dataset: Dataset) -> np.ndarray:
    dated = dataset.release_year[dataset.release_year != 0]
    if dated.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.arange(int(dated.min()), int(dated.max()) + 1, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class AttentionMatrix:
    """``values[i, j]``: attention of birth cohort ``birth_years[j]`` to ``release_years[i]``.

    Columns of empty cohorts are ``nan``.
    """

    release_years: np.ndarray
    birth_years: np.ndarray
    values: np.ndarray
    cohort_sizes: np.ndarray
    n_users_unknown_birth: int
    undated_mass: float  # share of the matrix users' attention on undated tracks

    def column(self, birth_year: int) -> np.ndarray | None:
        j = int(birth_year) - int(self.birth_years[0]) if self.birth_years.size else -1
        if j < 0 or j >= self.birth_years.size or self.cohort_sizes[j] == 0:
            return None
        return self.values[:, j]

    def defined_columns(self) -> np.ndarray:
        return self.cohort_sizes > 0


def attention_matrix(dataset: Dataset, graph: BipartiteGraph,
                     gender: str | None = None) -> AttentionMatrix:
    e = _edges(dataset, graph, gender)
    years = release_axis(dataset)
    known_user = dataset.birth_year[graph.user_index] != 0
    if gender not in (None, "all"):
        in_group = dataset.gender[graph.user_index] == GENDER_CODES[gender]
    else:
        in_group = np.ones(graph.n_users, dtype=bool)
    births = dataset.birth_year[graph.user_index][known_user & in_group]
    n_unknown = int((~known_user & in_group).sum())
    if births.size == 0 or years.size == 0:
        return AttentionMatrix(years, np.zeros(0, dtype=np.int64), np.zeros((years.size, 0)),
                               np.zeros(0, dtype=np.int64), n_unknown, 0.0)
    b_axis = np.arange(int(births.min()), int(births.max()) + 1, dtype=np.int64)
    n_j = np.bincount(births - b_axis[0], minlength=b_axis.size)
    with_birth = e.birth_year != 0
    dated = with_birth & (e.release_year != 0)
    flat = (e.release_year[dated] - years[0]) * b_axis.size + (e.birth_year[dated] - b_axis[0])
    sums = np.bincount(flat, weights=e.weight[dated], minlength=years.size * b_axis.size)
    sums = sums.reshape(years.size, b_axis.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = sums / n_j
    values[:, n_j == 0] = np.nan
    undated = float(e.weight[with_birth & (e.release_year == 0)].sum())
    return AttentionMatrix(years, b_axis, values, n_j, n_unknown,
                           undated / births.size)


@dataclass(frozen=True, eq=False)
class GlobalAttention:
    release_years: np.ndarray
    values: np.ndarray
    n_users: int
    undated_mass: float


def global_attention(dataset: Dataset, graph: BipartiteGraph, gender: str | None = None,
                     known_birth_only: bool = False) -> GlobalAttention:
    """``A^G`` over the release axis, averaged over all ``N`` graph users of the group.

    ``known_birth_only`` restricts users to those with a birth year, which is
    the population for which ``A^G`` is the cohort-weighted mean of ``A^Y``.
    """
    e = _edges(dataset, graph, gender)
    years = release_axis(dataset)
    n = e.n_users
    keep = np.ones(e.weight.size, dtype=bool)
    if known_birth_only:
        keep = e.birth_year != 0
        user_known = dataset.birth_year[graph.user_index] != 0
        if gender not in (None, "all"):
            user_known &= dataset.gender[graph.user_index] == GENDER_CODES[gender]
        n = int(user_known.sum())
    dated = keep & (e.release_year != 0)
    if n == 0 or years.size == 0:
        return GlobalAttention(years, np.zeros(years.size), n, 0.0)
    values = np.bincount(e.release_year[dated] - years[0], weights=e.weight[dated],
                         minlength=years.size) / n
    undated = float(e.weight[keep & (e.release_year == 0)].sum()) / n
    return GlobalAttention(years, values, n, undated)


# --------------------------------------------------------------------------
# decay curve
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecayCurve:
    """``I^G`` against years since release, one point per year with tracks."""

    x: np.ndarray
    y: np.ndarray
    track_counts: np.ndarray
    release_years: np.ndarray
    rho: np.ndarray
    attention: np.ndarray
    undated_fraction: float  # share of dataset tracks with no release year


def popularity_bands(dataset: Dataset, graph: BipartiteGraph) -> np.ndarray:
    """Band code per dataset track (0 hot, 1 middle, 2 unpopular, -1 undated).

    Tracks are ranked by total attention within their release year; ties
    keep dataset order.
    """
    att = total_attention(graph).values
    ry = dataset.release_year.astype(np.int64)
    out = np.full(dataset.n_tracks, -1, dtype=np.int64)
    dated = np.flatnonzero(ry != 0)
    if dated.size == 0:
        return out
    order = dated[np.lexsort((dated, -att[dated], ry[dated]))]
    years = ry[order]
    starts = np.flatnonzero(np.r_[True, years[1:] != years[:-1]])
    sizes = np.diff(np.r_[starts, years.size])
    rank = np.arange(years.size) - np.repeat(starts, sizes)
    frac = rank / np.repeat(sizes, sizes)
    out[order] = np.searchsorted(np.asarray(BAND_EDGES), frac, side="right")
    return out


def mean_global_preference(dataset: Dataset, graph: BipartiteGraph,
                           gender: str | None = None,
                           band: str | None = None) -> DecayCurve:
    """``I^G_i = A^G_i / rho_i`` with ``rho_i = m_i / M`` over dated tracks.

    With ``band`` both the attention and the track counts are restricted to
    that popularity band and ``A^G`` is renormalised over the band.
    """
    years = release_axis(dataset)
    ry = dataset.release_year.astype(np.int64)
    n_total = dataset.n_tracks
    track_mask = ry != 0
    if band is not None:
        if band not in BANDS:
            raise ValueError(f"unknown popularity band {band!r}; expected one of {BANDS}")
        track_mask &= popularity_bands(dataset, graph) == BANDS.index(band)
    m = np.bincount(ry[track_mask] - years[0], minlength=years.size) if years.size else np.zeros(0)
    M = m.sum()
    e = _edges(dataset, graph, gender)
    sel = track_mask[e.track]
    a = np.bincount(e.release_year[sel] - years[0], weights=e.weight[sel],
                    minlength=years.size) if years.size else np.zeros(0)
    if band is None:
        a = a / max(e.n_users, 1)
    elif a.sum() > 0:
        a = a / a.sum()
    keep = m > 0
    rho = m[keep] / M if M else np.zeros(0)
    y = a[keep] / rho if M else np.zeros(0)
    undated = float((ry == 0).sum() / n_total) if n_total else 0.0
    return DecayCurve(
        x=dataset.reference_year - years[keep],
        y=y,
        track_counts=m[keep],
        release_years=years[keep],
        rho=rho,
        attention=a[keep],
        undated_fraction=undated,
    )


# --------------------------------------------------------------------------
# relative attention and sensitivity
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RelativeAttention:
    release_years: np.ndarray
    birth_years: np.ndarray
    values: np.ndarray  # nan where undefined

    def log(self) -> np.ndarray:
        """``ln R`` with zero entries reported as ``nan``."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.values > 0, np.log(np.where(self.values > 0, self.values, 1.0)),
                            np.nan)


def relative_attention(ay: AttentionMatrix, ag: GlobalAttention) -> RelativeAttention:
    if not np.array_equal(ay.release_years, ag.release_years):
        raise ValueError("A^Y and A^G use different release-year axes")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = ay.values / ag.values[:, None]
    r[ag.values <= 0, :] = np.nan
    return RelativeAttention(ay.release_years, ay.birth_years, r)


@dataclass(frozen=True, eq=False)
class SensitivityCurve:
    birth_year: int
    age: np.ndarray   # release year minus birth year; negative before birth
    values: np.ndarray


def sensitivity(R: RelativeAttention, birth_year: int) -> SensitivityCurve | None:
    """``S_j(i - j) = R_ij / mean_k R_kj`` over release years ``k`` with defined ``R``."""
    j = int(birth_year) - int(R.birth_years[0]) if R.birth_years.size else -1
    if j < 0 or j >= R.birth_years.size:
        return None
    col = R.values[:, j]
    ok = ~np.isnan(col)
    if not ok.any():
        return None
    mean = col[ok].mean()
    if mean <= 0:
        return None
    return SensitivityCurve(int(birth_year), R.release_years[ok] - int(birth_year), col[ok] / mean)


def sensitivity_surface(R: RelativeAttention) -> list[SensitivityCurve]:
    out = []
    for b in R.birth_years.tolist():
        s = sensitivity(R, b)
        if s is not None:
            out.append(s)
    return out


@dataclass(frozen=True, eq=False)
class AgeSeries:
    age: np.ndarray
    mean: np.ndarray
    n_cohorts: np.ndarray


def mean_sensitivity_by_age(curves: list[SensitivityCurve],
                            age_range: tuple[int, int] | None = None) -> AgeSeries:
    """Average sensitivity over cohorts at each age-at-release."""
    if not curves:
        return AgeSeries(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64))
    ages = np.concatenate([c.age for c in curves])
    vals = np.concatenate([c.values for c in curves])
    if age_range is not None:
        sel = (ages >= age_range[0]) & (ages <= age_range[1])
        ages, vals = ages[sel], vals[sel]
    if ages.size == 0:
        return AgeSeries(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64))
    uniq, inv = np.unique(ages, return_inverse=True)
    n = np.bincount(inv)
    return AgeSeries(uniq, np.bincount(inv, weights=vals) / n, n)


@dataclass(frozen=True)
class CohortQuantiles:
    birth_year: int
    q25: int
    median: int
    q75: int


def _weighted_quantile(years: np.ndarray, dist: np.ndarray, q: float) -> int:
    cdf = np.cumsum(dist)
    # first year where the cumulative share reaches q
    return int(years[np.searchsorted(cdf, q * cdf[-1] - 1e-12)])


def release_year_quantiles(ay: AttentionMatrix) -> list[CohortQuantiles]:
    """Median and quartiles of each cohort's release-year distribution."""
    out = []
    for j, b in enumerate(ay.birth_years.tolist()):
        col = ay.values[:, j]
        if ay.cohort_sizes[j] == 0 or not np.any(col > 0):
            continue
        out.append(CohortQuantiles(b, *(_weighted_quantile(ay.release_years, col, q)
                                        for q in (0.25, 0.5, 0.75))))
    return out
