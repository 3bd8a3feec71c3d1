"""Curve fits, Pearson correlation, age modes and the regional economics driver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from . import metrics
from .graph import BipartiteGraph
from .ingest import EconomicTable
from .model import FEMALE, MALE, Dataset
from .tagmap import TagMatrix, group_tag_matrix

log = logging.getLogger(__name__)

DEFAULT_STAGES = ((12, 18), (19, 25), (26, 40))
DEFAULT_THRESHOLD = 0.10
UP, FLAT, DOWN = "/", "-", "\\"


class FitError(ValueError):
    pass


# --------------------------------------------------------------------------
# power law with exponential tail
# --------------------------------------------------------------------------


def power_exp_tail(x, a: float, b: float, c: float) -> np.ndarray:
    """``a * x**-b * exp(-c x)``."""
    x = np.asarray(x, dtype=float)
    return a * x ** (-b) * np.exp(-c * x)


@dataclass(frozen=True)
class PowerExpTailFit:
    a: float
    b: float
    c: float
    residual_norm: float  # of the log-space residuals
    n_iter: int = 1
    converged: bool = True
    n_points: int = 0
    n_dropped: int = 0
    method: str = "log-linear least squares"
    weighted: bool = False

    def __call__(self, x):
        return power_exp_tail(x, self.a, self.b, self.c)

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "residual_norm": self.residual_norm,
                "n_iter": self.n_iter, "converged": self.converged, "n_points": self.n_points,
                "n_dropped": self.n_dropped, "method": self.method, "weighted": self.weighted}


def fit_power_exp_tail(x, y, weights=None) -> PowerExpTailFit:
    """Fit ``log y = log a - b log x - c x`` by linear least squares.

    Points with non-positive ``x`` or ``y`` cannot be log-transformed; they
    are dropped and counted. ``weights`` multiply squared log residuals.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise FitError("x and y differ in length")
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    w = None if weights is None else np.asarray(weights, dtype=float)
    if w is not None:
        if w.shape != x.shape:
            raise FitError("weights differ in length from x")
        ok &= w > 0
    n_dropped = int((~ok).sum())
    x, y = x[ok], y[ok]
    if x.size < 4:
        raise FitError(f"need at least 4 usable points, got {x.size}")
    design = np.column_stack([np.ones_like(x), -np.log(x), -x])
    target = np.log(y)
    if w is not None:
        sw = np.sqrt(w[ok])
        design, target = design * sw[:, None], target * sw
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 3:
        raise FitError("design matrix is rank deficient")
    resid = target - design @ coef
    return PowerExpTailFit(float(np.exp(coef[0])), float(coef[1]), float(coef[2]),
                           float(np.linalg.norm(resid)), n_points=int(x.size),
                           n_dropped=n_dropped, weighted=w is not None)


# --------------------------------------------------------------------------
# Bigaussian
# --------------------------------------------------------------------------


def bigaussian(x, y0: float, xc: float, H: float, w1: float, w2: float) -> np.ndarray:
    """Peak of height ``H`` over baseline ``y0``.

    Width ``w1`` applies left of ``xc`` and ``w2`` from ``xc`` on.
    """
    x = np.asarray(x, dtype=float)
    w = np.where(x < xc, w1, w2)
    return y0 + H * np.exp(-0.5 * ((x - xc) / w) ** 2)


@dataclass(frozen=True)
class BigaussianFit:
    y0: float
    xc: float
    H: float
    w1: float
    w2: float
    residual_norm: float
    converged: bool
    n_eval: int = 0
    init: tuple[float, ...] = ()

    @property
    def params(self) -> tuple[float, float, float, float, float]:
        return (self.y0, self.xc, self.H, self.w1, self.w2)

    def __call__(self, x):
        return bigaussian(x, *self.params)

    def as_dict(self) -> dict:
        return {"y0": self.y0, "xc": self.xc, "H": self.H, "w1": self.w1, "w2": self.w2,
                "residual_norm": self.residual_norm, "converged": self.converged,
                "n_eval": self.n_eval, "init": list(self.init)}


def bigaussian_init(x: np.ndarray, y: np.ndarray) -> tuple[float, ...]:
    """Baseline at min, height to max, widths from the span above half maximum."""
    y0 = float(y.min())
    H = float(y.max() - y0)
    xc = float(x[np.argmax(y)])
    above = x[y >= y0 + 0.5 * H]
    half = 0.5 * float(above.max() - above.min()) if above.size > 1 else 0.0
    if half <= 0:
        half = 0.25 * float(x.max() - x.min()) or 1.0
    return (y0, xc, max(H, 1e-12), half, half)


def fit_bigaussian(x, y, init: Sequence[float] | None = None,
                   max_nfev: int = 2000) -> BigaussianFit:
    """Least-squares Bigaussian fit with ``H``, ``w1``, ``w2`` kept positive."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 6:
        raise FitError(f"need at least 6 points, got {x.size}")
    p0 = tuple(float(v) for v in (init if init is not None else bigaussian_init(x, y)))
    lo = [-np.inf, x.min(), 1e-12, 1e-9, 1e-9]
    hi = [np.inf, x.max(), np.inf, np.inf, np.inf]
    p0 = tuple(float(np.clip(v, a, b)) for v, a, b in zip(p0, lo, hi))

    def resid(p):
        return bigaussian(x, *p) - y

    res = optimize.least_squares(resid, p0, bounds=(lo, hi), method="trf",
                                 xtol=1e-10, ftol=1e-10, gtol=1e-10, max_nfev=max_nfev,
                                 x_scale="jac")
    y0, xc, H, w1, w2 = (float(v) for v in res.x)
    return BigaussianFit(y0, xc, H, w1, w2, float(np.linalg.norm(res.fun)),
                         bool(res.status > 0), int(res.nfev), p0)


# --------------------------------------------------------------------------
# correlation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PearsonResult:
    r: float | None
    p: float | None
    n: int
    reason: str | None = None


def pearson(xs, ys) -> PearsonResult:
    """Sample Pearson ``r`` with a two-sided t-distribution p-value (``n - 2`` dof)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValueError("xs and ys differ in length")
    n = x.size
    if n < 3:
        return PearsonResult(None, None, n, "fewer than 3 observations")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    # relative test so constant data with rounding noise still counts as constant
    if sx <= 1e-14 * max(np.abs(x).max(), 1e-300) * np.sqrt(n) or sx == 0:
        return PearsonResult(None, None, n, "zero variance in xs")
    if sy <= 1e-14 * max(np.abs(y).max(), 1e-300) * np.sqrt(n) or sy == 0:
        return PearsonResult(None, None, n, "zero variance in ys")
    r = float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))
    dof = n - 2
    if abs(r) == 1.0:
        return PearsonResult(r, 0.0, n)
    t = r * np.sqrt(dof / (1.0 - r * r))
    return PearsonResult(r, float(2.0 * stats.t.sf(abs(t), dof)), n)


# --------------------------------------------------------------------------
# age modes
# --------------------------------------------------------------------------


def age_stage_means(ages, values, stages=DEFAULT_STAGES) -> tuple[float | None, ...]:
    """Mean of per-age values within each inclusive ``(lo, hi)`` stage; ``None`` when empty."""
    ages = np.asarray(ages)
    values = np.asarray(values, dtype=float)
    out = []
    for lo, hi in stages:
        sel = (ages >= lo) & (ages <= hi) & ~np.isnan(values)
        out.append(float(values[sel].mean()) if sel.any() else None)
    return tuple(out)


def classify_age_mode(stage_means: Sequence[float | None],
                      threshold: float = DEFAULT_THRESHOLD) -> str | None:
    """One trend symbol per adjacent stage pair: ``/`` up, ``\\`` down, ``-`` flat."""
    if any(m is None for m in stage_means):
        return None
    code = []
    for before, after in zip(stage_means[:-1], stage_means[1:]):
        if after > before * (1.0 + threshold):
            code.append(UP)
        elif after < before * (1.0 - threshold):
            code.append(DOWN)
        else:
            code.append(FLAT)
    return "".join(code)


@dataclass(frozen=True)
class AgeModeRow:
    tag_class: str
    tag: str
    stage_means: tuple[float | None, ...]
    mode: str | None


def age_modes(dataset: Dataset, user_tags: TagMatrix, stages=DEFAULT_STAGES,
              threshold: float = DEFAULT_THRESHOLD, gender: str | None = None) -> list[AgeModeRow]:
    """Age mode of every tag from per-age group vectors averaged within stages."""
    ages = dataset.ages()
    sel = ages >= 0
    if gender == "male":
        sel &= dataset.gender == MALE
    elif gender == "female":
        sel &= dataset.gender == FEMALE
    sel &= user_tags.values.any(axis=1)
    lo, hi = min(s[0] for s in stages), max(s[1] for s in stages)
    sel &= (ages >= lo) & (ages <= hi)
    rows = np.flatnonzero(sel)
    age_values = np.unique(ages[rows])
    groups = {int(a): rows[ages[rows] == a] for a in age_values}
    per_age = group_tag_matrix(user_tags, groups).values
    schema = user_tags.schema
    out = []
    for c in schema.class_names:
        sl = schema.slice(c)
        for k, tag in enumerate(schema.tags(c)):
            col = per_age[:, sl][:, k] if len(groups) else np.zeros(0)
            means = age_stage_means(age_values, col, stages)
            out.append(AgeModeRow(c, tag, means, classify_age_mode(means, threshold)))
    return out


# --------------------------------------------------------------------------
# regional economics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationRow:
    metric: str
    tag_class: str
    tag: str
    subgroup: str
    r: float | None
    p: float | None
    n: int
    reason: str | None = None


@dataclass(eq=False)
class RegionalAnalysis:
    level: str
    indicator: str
    regions: tuple[str, ...]
    indicator_values: np.ndarray
    n_users: np.ndarray
    excluded_regions: tuple[str, ...]
    # users without a code at this level never enter any region
    n_unlocated: int = 0
    # metric key -> per-region values (nan where undefined)
    series: dict[tuple[str, str, str, str], np.ndarray] = field(default_factory=dict)
    correlations: list[CorrelationRow] = field(default_factory=list)

    def ranked(self, tag_class: str, subgroup: str = "all",
               metric: str = "tag_strength") -> list[CorrelationRow]:
        rows = [c for c in self.correlations if c.metric == metric and c.tag_class == tag_class
                and c.subgroup == subgroup and c.r is not None]
        return sorted(rows, key=lambda c: -c.r)

    def gender_averages(self) -> list[tuple[str, str, float | None, float | None]]:
        """Mean positive and mean negative tag-strength ``r`` per class and gender.

        Tags whose male and female correlations disagree in sign are left out.
        """
        out = []
        by_key = {(c.tag_class, c.tag, c.subgroup): c.r for c in self.correlations
                  if c.metric == "tag_strength"}
        classes = list(dict.fromkeys(c.tag_class for c in self.correlations
                                     if c.metric == "tag_strength"))
        for cls in classes:
            tags = [t for (c, t, g) in by_key if c == cls and g == "all"]
            pos = {"male": [], "female": []}
            neg = {"male": [], "female": []}
            for t in tags:
                rm, rf = by_key.get((cls, t, "male")), by_key.get((cls, t, "female"))
                if rm is None or rf is None or np.sign(rm) != np.sign(rf) or rm == 0:
                    continue
                target = pos if rm > 0 else neg
                target["male"].append(rm)
                target["female"].append(rf)
            for g in ("female", "male"):
                out.append((cls, g, float(np.mean(pos[g])) if pos[g] else None,
                            float(np.mean(neg[g])) if neg[g] else None))
        return out


def _nan(v):
    return np.nan if v is None else v


def regional_analysis(
    dataset: Dataset,
    economics: EconomicTable,
    user_tags: TagMatrix,
    graph: BipartiteGraph,
    counts=None,
    n_communities: int = 0,
    indicator: str | None = None,
    level: str = "province",
    min_users: int = 10,
    stages=DEFAULT_STAGES,
) -> RegionalAnalysis:
    """Correlate regional preference metrics with an economic indicator.

    Each region with at least ``min_users`` users and an indicator value forms
    a group. Per region: tag strengths (all/male/female), tag diversities,
    community diversities (when ``counts`` is given) and gender KLD per class
    (all ages and per age stage). Each series is then correlated with the
    indicator across regions.
    """
    if level not in ("province", "city"):
        raise ValueError(f"level must be 'province' or 'city', got {level!r}")
    if indicator is None:
        names = economics.indicators(level)
        if not names:
            raise ValueError(f"economics table has no {level}-level indicators")
        indicator = names[0]
    econ = economics.values(indicator, level)
    codes = dataset.province if level == "province" else dataset.city
    members: dict[str, list[int]] = {}
    for i, code in enumerate(codes):
        if code is not None:
            members.setdefault(code, []).append(i)
    kept, excluded = [], []
    for code in sorted(set(members) | set(econ)):
        n = len(members.get(code, ()))
        if code in econ and n >= min_users:
            kept.append(code)
        else:
            excluded.append(code)
    if excluded:
        log.info("regional analysis excludes %d regions (missing indicator or < %d users)",
                 len(excluded), min_users)
    groups = {c: np.asarray(members[c], dtype=np.int64) for c in kept}
    x = np.array([econ[c] for c in kept], dtype=float)
    result = RegionalAnalysis(level, indicator, tuple(kept), x,
                              np.array([len(groups[c]) for c in kept], dtype=np.int64),
                              tuple(excluded), sum(c is None for c in codes))
    schema = user_tags.schema
    graph_row = np.full(dataset.n_users, -1, dtype=np.int64)
    graph_row[graph.user_index] = np.arange(graph.n_users)
    ages = dataset.ages()
    series = result.series
    nreg = len(kept)

    def put(key, j, v):
        series.setdefault(key, np.full(nreg, np.nan))[j] = _nan(v)

    for j, code in enumerate(kept):
        m = groups[code]
        subsets = {"all": m, "male": m[dataset.gender[m] == MALE],
                   "female": m[dataset.gender[m] == FEMALE]}
        for sub, rows in subsets.items():
            if rows.size == 0:
                continue
            total = user_tags.values[rows].sum(axis=0)
            for c in schema.class_names:
                block = total[schema.slice(c)]
                s = block.sum()
                vec = block / s if s > 0 else block
                for k, tag in enumerate(schema.tags(c)):
                    put(("tag_strength", c, tag, sub), j, vec[k] if s > 0 else None)
                t = metrics.tag_diversity_triple(user_tags.class_block(c)[rows], schema.size(c))
                put(("D_TI_mean", c, "", sub), j, t.individual_mean)
                put(("D_TA", c, "", sub), j, t.aggregated)
                put(("D_TU", c, "", sub), j, t.within)
        if counts is not None and n_communities >= 2:
            g = graph_row[m]
            t = metrics.community_diversity_triple(counts, g[g >= 0], n_communities)
            put(("D_CI_mean", "community", "", "all"), j, t.individual_mean)
            put(("D_CA", "community", "", "all"), j, t.aggregated)
            put(("D_CU", "community", "", "all"), j, t.within)
        age_sets = {"all": m}
        for lo, hi in stages:
            age_sets[f"{lo}-{hi}"] = m[(ages[m] >= lo) & (ages[m] <= hi)]
        for sub, rows in age_sets.items():
            male, female = metrics.gender_split(dataset.gender, rows)
            for c in schema.class_names:
                put(("KLD_T", c, "", sub), j, metrics.tag_kld(user_tags, male, female, c).value)

    for (metric, c, tag, sub), ys in series.items():
        ok = ~np.isnan(ys)
        pr = pearson(x[ok], ys[ok])
        result.correlations.append(CorrelationRow(metric, c, tag, sub, pr.r, pr.p, pr.n,
                                                  pr.reason))
    return result
