"""Synthetic playlist populations with planted ground truth.

Every random draw comes from numpy's Philox counter-based generator. Users are
generated in fixed-size chunks, each with its own sub-seed derived from
``(seed, stage, chunk)``, so output does not depend on how work is scheduled.

Planted structure
-----------------
* Tracks per release year follow ``m_i ~ exp(-x_i / tau)`` (``x`` = years
  before the reference year). ``tau`` is solved so that the global
  release-year marginal ``rho_i * f(x_i)`` sums to one for the planted decay
  ``f(x) = a x**-b exp(-c x)``; the expected ``I^G`` is then ``f``.
* Each birth cohort's release-year distribution is the Sinkhorn scaling of a
  Bigaussian kernel in age-at-release whose row marginal is that global
  release-year marginal.
* Users and tracks belong to ``n_blocks`` communities. A pick stays in the
  user's block with probability ``1 - epsilon``.
* A user's block prior mixes a gender skew and a regional income link, and
  the gender skew shrinks with income.
* General playlists are chunked per block and tagged from a per-block tag
  distribution.
"""

from __future__ import annotations

import configparser
import itertools
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy import optimize

from . import kernels
from .fit import bigaussian, power_exp_tail
from .ingest import EconomicRow, EconomicTable, write_economics, write_playlists
from .model import FEMALE, MALE, UNKNOWN, Dataset, TagSchema, ValidationError

SCHEMA_VERSION = 1
CHUNK_USERS = 8192
INCOME_INDICATOR = "disposable_income"

_STAGES = {"users": 1, "fp": 2, "tracks": 3, "general": 4, "regions": 5}


class SynthConfigError(ValidationError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 10000
    n_tracks: int = 5000
    n_blocks: int = 8
    epsilon: float = 0.05
    fp_length_mean: float = 50.0
    fp_length_sigma: float = 0.6
    fp_length_max: int = 1000
    min_age: int = 12
    max_age: int = 40
    reference_year: int = 2016
    max_track_age: int = 60
    decay_a: float = 1.97
    decay_b: float = 0.34
    decay_c: float = 0.023
    sens_y0: float = 0.43
    sens_xc: float = 12.88
    sens_h: float = 0.87
    sens_w1: float = 13.18
    sens_w2: float = 7.26
    female_fraction: float = 0.5
    unknown_gender_fraction: float = 0.0
    gender_skew: float = 1.0
    income_link: float = 1.0
    income_gap_link: float = 0.8
    n_provinces: int = 23
    cities_per_province: int = 10
    income_min: float = 15000.0
    income_max: float = 50000.0
    general_playlist_size: int = 20
    general_rounds: int = 3
    tagged_fraction: float = 0.8
    popularity_exponent: float = 0.8
    primary_tag_weight: float = 0.5
    secondary_tag_weight: float = 0.25

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise SynthConfigError(msg)

        need(self.n_users >= 1, "n_users must be positive")
        need(self.n_blocks >= 1, "n_blocks must be positive")
        need(self.n_tracks >= self.n_blocks,
             f"n_tracks ({self.n_tracks}) must be at least n_blocks ({self.n_blocks})")
        need(self.max_track_age >= 1, "max_track_age must be >= 1")
        need(self.n_tracks >= self.max_track_age * self.n_blocks,
             "n_tracks must give every (release year, block) cell a track "
             "(>= max_track_age * n_blocks)")
        need(0.0 <= self.epsilon <= 1.0, "epsilon must lie in [0, 1]")
        need(self.fp_length_mean >= 1, "fp_length_mean must be >= 1")
        need(self.fp_length_sigma >= 0, "fp_length_sigma must be >= 0")
        need(self.fp_length_max >= 1, "fp_length_max must be >= 1")
        need(1 <= self.min_age <= self.max_age, "need 1 <= min_age <= max_age")
        need(self.sens_h > 0 and self.sens_w1 > 0 and self.sens_w2 > 0,
             "sensitivity H, w1, w2 must be positive")
        need(self.sens_y0 >= 0, "sensitivity baseline must be non-negative")
        need(0 <= self.female_fraction <= 1 and 0 <= self.unknown_gender_fraction <= 1,
             "gender fractions must lie in [0, 1]")
        need(self.n_provinces >= 1 and self.cities_per_province >= 1,
             "need at least one province and one city per province")
        need(0 < self.income_min <= self.income_max, "need 0 < income_min <= income_max")
        need(self.general_playlist_size >= 1, "general_playlist_size must be positive")
        need(self.general_rounds >= 0, "general_rounds must be >= 0")
        need(0 <= self.tagged_fraction <= 1, "tagged_fraction must lie in [0, 1]")
        need(self.primary_tag_weight + self.secondary_tag_weight <= 1,
             "primary + secondary tag weight exceeds 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthConfig":
        """Read a flat ``key = value`` file (``#`` comments allowed)."""
        text = Path(path).read_text(encoding="utf-8")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        parser.read_string("[synth]\n" + text)
        return cls.from_mapping(dict(parser["synth"]))

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key == "seed":
                continue
            if key not in types:
                raise SynthConfigError(f"unknown synth config key {key!r}")
            conv = int if types[key] in ("int", int) else float
            try:
                kwargs[key] = conv(raw) if conv is float else int(float(raw))
            except ValueError:
                raise SynthConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


def _rng(seed: int, stage: str, chunk: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _STAGES[stage], int(chunk)])
    return np.random.Generator(np.random.Philox(ss))


# --------------------------------------------------------------------------
# planted temporal structure
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TemporalPlan:
    release_years: np.ndarray  # ascending
    birth_years: np.ndarray    # ascending
    track_counts: np.ndarray   # m_i per release year
    tau: float
    marginal: np.ndarray       # p_i, expected A^G
    cohort_weights: np.ndarray  # w_j
    cohort_dist: np.ndarray    # P_j(i), columns sum to 1
    decay_scale: float         # expected I^G = decay_scale * f(x)


def _solve_tau(x: np.ndarray, f: np.ndarray) -> float:
    def excess(log_tau):
        w = np.exp(-x / math.exp(log_tau))
        return float((w * f).sum() / w.sum() - 1.0)

    lo, hi = math.log(1e-2), math.log(1e6)
    if excess(lo) * excess(hi) > 0:
        raise SynthConfigError(
            "planted decay cannot be normalised by an exponential track-count law")
    return math.exp(optimize.brentq(excess, lo, hi, xtol=1e-14))


def _sinkhorn(K: np.ndarray, rows: np.ndarray, cols: np.ndarray, tol: float = 1e-13,
              max_iter: int = 100000) -> np.ndarray:
    u = np.ones(K.shape[0])
    v = np.ones(K.shape[1])
    for _ in range(max_iter):
        u = rows / (K @ v)
        v = cols / (K.T @ u)
        T = u[:, None] * K * v[None, :]
        if np.max(np.abs(T.sum(axis=1) - rows)) < tol:
            return T
    raise SynthConfigError("cohort release-year scaling did not converge")


def cohort_counts(cfg: SynthConfig) -> np.ndarray:
    """Users per age ``min_age..max_age``: an even split, remainder to the youngest ages."""
    n_ages = cfg.max_age - cfg.min_age + 1
    base = np.full(n_ages, cfg.n_users // n_ages, dtype=np.int64)
    base[: cfg.n_users % n_ages] += 1
    return base


def temporal_plan(cfg: SynthConfig) -> TemporalPlan:
    cfg.validate()
    x = np.arange(cfg.max_track_age, 0, -1, dtype=float)  # oldest release first
    years = cfg.reference_year - x.astype(np.int64)
    f = power_exp_tail(x, cfg.decay_a, cfg.decay_b, cfg.decay_c)
    tau = _solve_tau(x, f)
    raw = np.exp(-x / tau)
    # at least one track per block in every year
    m = np.maximum(cfg.n_blocks, np.floor(cfg.n_tracks * raw / raw.sum())).astype(np.int64)
    # hand the rounding remainder to the largest cells, newest first
    short = cfg.n_tracks - int(m.sum())
    order = np.argsort(-(cfg.n_tracks * raw / raw.sum() - m), kind="stable")
    if short > 0:
        m[order[:short]] += 1
    for _ in range(-short):
        m[np.argmax(m)] -= 1
    rho = m / m.sum()
    p = rho * f
    scale = 1.0 / p.sum()
    p = p * scale
    ages = np.arange(cfg.max_age, cfg.min_age - 1, -1)
    births = cfg.reference_year - ages
    w = cohort_counts(cfg)[::-1].astype(float)
    w = w / w.sum()
    K = bigaussian(years[:, None] - births[None, :], cfg.sens_y0, cfg.sens_xc, cfg.sens_h,
                   cfg.sens_w1, cfg.sens_w2)
    T = _sinkhorn(K, p, w)
    P = T / T.sum(axis=0, keepdims=True)
    return TemporalPlan(years, births, m, tau, p, w, P, scale)


def planted_sensitivity(plan: TemporalPlan) -> np.ndarray:
    """Expected ``S`` matrix (release years x birth years) implied by the plan."""
    R = plan.cohort_dist / plan.marginal[:, None]
    return R / R.mean(axis=0, keepdims=True)


# --------------------------------------------------------------------------
# planted tags
# --------------------------------------------------------------------------


def block_tag_plan(cfg: SynthConfig, schema: TagSchema) -> dict[str, np.ndarray]:
    """Per class, an ``(n_blocks, class_size)`` tag distribution.

    Block 0 (the income-linked block) owns tag 0 as its primary tag in every
    class; other blocks cycle through the remaining tags.
    """
    out = {}
    for c in schema.class_names:
        size = schema.size(c)
        dist = np.zeros((cfg.n_blocks, size))
        for b in range(cfg.n_blocks):
            prim = 0 if b == 0 else 1 + (b - 1) % (size - 1)
            sec = 1 + b % (size - 1)
            if sec == prim:
                sec = 1 + (sec % (size - 1))
            rest = 1.0 - cfg.primary_tag_weight - cfg.secondary_tag_weight
            dist[b] = rest / (size - 2)
            dist[b, prim] = cfg.primary_tag_weight
            dist[b, sec] = cfg.secondary_tag_weight
        out[c] = dist
    return out


def gender_pattern(n_blocks: int) -> np.ndarray:
    """+1 female-leaning (odd blocks), -1 male-leaning (even blocks >= 2), 0 for block 0."""
    z = np.where(np.arange(n_blocks) % 2 == 1, 1.0, -1.0)
    z[0] = 0.0
    return z


def income_pattern(n_blocks: int) -> np.ndarray:
    z = np.zeros(n_blocks)
    z[0] = 1.0
    return z


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------


@dataclass(eq=False)
class GroundTruth:
    seed: int
    config: SynthConfig
    user_ids: tuple[str, ...]
    user_blocks: np.ndarray
    track_ids: tuple[str, ...]
    track_blocks: np.ndarray
    plan: TemporalPlan
    tag_plan: dict[str, np.ndarray]
    province_income: dict[str, float]
    city_income: dict[str, float]

    def as_dict(self) -> dict:
        p = self.plan
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "config": asdict(self.config),
            "communities": {
                "n_blocks": self.config.n_blocks,
                "epsilon": self.config.epsilon,
                "user_blocks": dict(zip(self.user_ids, self.user_blocks.tolist())),
                "track_blocks": dict(zip(self.track_ids, self.track_blocks.tolist())),
            },
            "decay": {"a": self.config.decay_a, "b": self.config.decay_b,
                      "c": self.config.decay_c, "tau": p.tau, "scale": p.decay_scale,
                      "release_years": p.release_years.tolist(),
                      "track_counts": p.track_counts.tolist()},
            "sensitivity": {"y0": self.config.sens_y0, "xc": self.config.sens_xc,
                            "H": self.config.sens_h, "w1": self.config.sens_w1,
                            "w2": self.config.sens_w2},
            "tags": {c: d.tolist() for c, d in self.tag_plan.items()},
            "gender_pattern": gender_pattern(self.config.n_blocks).tolist(),
            "income_pattern": income_pattern(self.config.n_blocks).tolist(),
            "income_linked_block": 0,
            "province_income": self.province_income,
            "city_income": self.city_income,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def _regions(cfg: SynthConfig, seed: int):
    rng = _rng(seed, "regions")
    prov_codes = [f"P{p:02d}" for p in range(cfg.n_provinces)]
    # evenly spaced incomes in a random province order keep the indicator spread
    levels = np.linspace(cfg.income_min, cfg.income_max, cfg.n_provinces)
    prov_income = levels[rng.permutation(cfg.n_provinces)]
    city_codes, city_income, city_prov = [], [], []
    for p, code in enumerate(prov_codes):
        for c in range(cfg.cities_per_province):
            city_codes.append(f"{code}C{c:02d}")
            city_income.append(prov_income[p] * (1.0 + 0.1 * rng.uniform(-1.0, 1.0)))
            city_prov.append(p)
    return prov_codes, prov_income, city_codes, np.array(city_income), np.array(city_prov)


def _lookup(cum: np.ndarray, group: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sample within groups from a cumulative array of the form ``group + within-group CDF``."""
    # keep group + u strictly below group + 1 after rounding
    return np.searchsorted(cum, group + u * (1.0 - 1e-12), side="right")


def _group_cdf(group: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """``group + running share of weight`` for rows sorted by ``group``."""
    cs = np.cumsum(weight)
    starts = np.flatnonzero(np.r_[True, group[1:] != group[:-1]])
    sizes = np.diff(np.r_[starts, group.size])
    base = np.repeat(np.r_[0.0, cs[starts[1:] - 1]], sizes)
    total = np.repeat(cs[np.r_[starts[1:] - 1, group.size - 1]] - np.r_[0.0, cs[starts[1:] - 1]],
                      sizes)
    frac = (cs - base) / total
    frac[np.r_[starts[1:] - 1, group.size - 1]] = 1.0
    return group + frac


def _redraw_duplicates(rng, owner, cells, picks, cell_cdf, rounds: int = 64):
    """Redraw repeated (user, track) picks from the same cell so FPs keep their length.

    Without this, users lose picks in small, popular-heavy cells when
    duplicates collapse, which biases attention against old release years.
    Picks still duplicated after ``rounds`` redraws collapse later.
    """
    live = np.arange(picks.size)
    for _ in range(rounds):
        o, t = owner[live], picks[live]
        order = np.lexsort((live, t, o))
        dup = np.zeros(live.size, dtype=bool)
        dup[order[1:]] = (o[order[1:]] == o[order[:-1]]) & (t[order[1:]] == t[order[:-1]])
        if not dup.any():
            break
        idx = live[dup]
        picks[idx] = _lookup(cell_cdf, cells[idx], rng.random(idx.size))
        # only users that still had duplicates need another look
        live = live[np.isin(o, np.unique(owner[idx]))]
    return picks


def generate(config: SynthConfig, seed: int = 0) -> tuple[Dataset, GroundTruth, EconomicTable]:
    """Deterministic synthetic dataset, its ground truth and the regional economics table."""
    cfg = config
    cfg.validate()
    schema = TagSchema.default()
    plan = temporal_plan(cfg)
    B = cfg.n_blocks
    ny = plan.release_years.size
    nb = plan.birth_years.size

    # ---- tracks: sorted by (release year, block), popularity by rank in cell
    rng = _rng(seed, "tracks")
    year_idx = np.repeat(np.arange(ny), plan.track_counts)
    blocks = np.empty(cfg.n_tracks, dtype=np.int64)
    start = 0
    for m in plan.track_counts.tolist():
        blocks[start:start + m] = (np.arange(m) + rng.integers(B)) % B
        start += m
    order = np.lexsort((blocks, year_idx))
    year_idx, blocks = year_idx[order], blocks[order]
    cell = year_idx * B + blocks
    cell_start = np.flatnonzero(np.r_[True, cell[1:] != cell[:-1]])
    cell_size = np.diff(np.r_[cell_start, cell.size])
    rank = np.arange(cell.size) - np.repeat(cell_start, cell_size)
    weight = (rank + 1.0) ** (-cfg.popularity_exponent)
    cell_cdf = _group_cdf(cell, weight)
    track_perm = rng.permutation(cfg.n_tracks)
    width = max(6, len(str(cfg.n_tracks)))
    track_ids = tuple(f"t{i:0{width}d}" for i in track_perm.tolist())
    release_year = plan.release_years[year_idx]

    # ---- regions and users
    prov_codes, prov_income, city_codes, city_income, city_prov = _regions(cfg, seed)
    span = cfg.income_max - cfg.income_min
    prov_level = (prov_income - cfg.income_min) / span if span > 0 else np.zeros(len(prov_codes))
    per_age = cohort_counts(cfg)
    birth_pool = np.repeat(cfg.reference_year - np.arange(cfg.min_age, cfg.max_age + 1), per_age)
    rng = _rng(seed, "users")
    birth = birth_pool[rng.permutation(cfg.n_users)]
    g_draw = rng.random(cfg.n_users)
    gender = np.where(g_draw < cfg.unknown_gender_fraction, UNKNOWN,
                      np.where(rng.random(cfg.n_users) < cfg.female_fraction, FEMALE, MALE))
    city = rng.integers(len(city_codes), size=cfg.n_users)
    prov = city_prov[city]
    level = prov_level[prov]
    sign = np.where(gender == FEMALE, 1.0, np.where(gender == MALE, -1.0, 0.0))
    skew = cfg.gender_skew * (1.0 - cfg.income_gap_link * level) * sign
    logits = (cfg.income_link * (level - 0.5))[:, None] * income_pattern(B)[None, :] \
        + skew[:, None] * gender_pattern(B)[None, :]
    # Gumbel-max categorical draw
    user_block = np.argmax(logits - np.log(-np.log(rng.random((cfg.n_users, B)))), axis=1)
    birth_col = birth - plan.birth_years[0]

    # ---- favorite playlists, chunk by chunk
    cohort_cdf = (np.arange(nb)[:, None] + np.cumsum(plan.cohort_dist.T, axis=1)).ravel()
    cohort_cdf.reshape(nb, ny)[:, -1] = np.arange(nb) + 1.0
    sigma = cfg.fp_length_sigma
    mu = math.log(cfg.fp_length_mean) - 0.5 * sigma * sigma
    fp_ptr_parts, fp_track_parts = [], []
    for c, lo in enumerate(range(0, cfg.n_users, CHUNK_USERS)):
        hi = min(lo + CHUNK_USERS, cfg.n_users)
        r = _rng(seed, "fp", c)
        L = np.clip(np.rint(np.exp(r.normal(mu, sigma, hi - lo))), 1, cfg.fp_length_max)
        L = L.astype(np.int64)
        owner = np.repeat(np.arange(lo, hi), L)
        # systematic sampling within each FP: pick m sits at (m + U) / L
        ptr = np.zeros(hi - lo + 1, dtype=np.int64)
        np.cumsum(L, out=ptr[1:])
        m_in = np.arange(owner.size) - np.repeat(ptr[:-1], L)
        u_sys = (m_in + np.repeat(r.random(hi - lo), L)) / np.repeat(L, L)
        flat = _lookup(cohort_cdf, birth_col[owner], u_sys)
        yi = flat - birth_col[owner] * ny
        yi = np.minimum(yi, ny - 1)
        stray = r.random(owner.size) < cfg.epsilon
        blk = np.where(stray, r.integers(B, size=owner.size), user_block[owner])
        cells = yi * B + blk
        picks = _lookup(cell_cdf, cells, r.random(owner.size))
        picks = _redraw_duplicates(r, owner, cells, picks, cell_cdf)
        ptr, uniq = kernels.active().dedupe_rows(ptr, picks)
        fp_ptr_parts.append(np.diff(ptr))
        fp_track_parts.append(uniq)
    fp_len = np.concatenate(fp_ptr_parts)
    fp_tracks = np.concatenate(fp_track_parts)

    # ---- general playlists: chunks of each block's tracks
    rng = _rng(seed, "general")
    tag_plan = block_tag_plan(cfg, schema)
    gp_tracks, gp_len, gp_owner, gp_tags, gp_ntags = [], [], [], [], []
    n_classes = len(schema.class_names)
    # each round files every track of a block into one more general playlist
    for b, _ in itertools.product(range(B), range(cfg.general_rounds)):
        members = np.flatnonzero(blocks == b)
        members = members[rng.permutation(members.size)]
        for s in range(0, members.size, cfg.general_playlist_size):
            chunk = np.sort(members[s:s + cfg.general_playlist_size])
            gp_tracks.append(chunk)
            gp_len.append(chunk.size)
            gp_owner.append(int(rng.integers(cfg.n_users)))
            tags = []
            if rng.random() < cfg.tagged_fraction:
                k = int(rng.integers(1, 4))
                for ci in np.sort(rng.choice(n_classes, size=k, replace=False)).tolist():
                    cname = schema.class_names[ci]
                    t = int(rng.choice(schema.size(cname), p=tag_plan[cname][b]))
                    tags.append(int(schema.offsets[ci]) + t)
            gp_tags.extend(tags)
            gp_ntags.append(len(tags))

    # ---- assemble
    uw = max(6, len(str(cfg.n_users)))
    user_ids = tuple(f"u{i:0{uw}d}" for i in range(cfg.n_users))
    has_fp = fp_len > 0
    fp_users = np.flatnonzero(has_fp)
    n_gp = len(gp_len)
    pw = max(6, len(str(n_gp)))
    playlist_ids = tuple(f"fp-{user_ids[u]}" for u in fp_users.tolist()) + \
        tuple(f"gp{i:0{pw}d}" for i in range(n_gp))
    pl_len = np.concatenate([fp_len[has_fp], np.asarray(gp_len, dtype=np.int64)])
    pl_indptr = np.zeros(pl_len.size + 1, dtype=np.int64)
    np.cumsum(pl_len, out=pl_indptr[1:])
    tag_indptr = np.zeros(pl_len.size + 1, dtype=np.int64)
    np.cumsum(np.r_[np.zeros(fp_users.size, dtype=np.int64), np.asarray(gp_ntags, np.int64)],
              out=tag_indptr[1:])
    ds = Dataset(
        user_ids=user_ids,
        birth_year=birth.astype(np.int32),
        birth_default=np.zeros(cfg.n_users, dtype=bool),
        gender=gender.astype(np.int8),
        province=tuple(prov_codes[p] for p in prov.tolist()),
        city=tuple(city_codes[c] for c in city.tolist()),
        active=np.ones(cfg.n_users, dtype=bool),
        track_ids=track_ids,
        release_year=release_year.astype(np.int32),
        album_id=(None,) * cfg.n_tracks,
        playlist_ids=playlist_ids,
        owner=np.r_[fp_users, np.asarray(gp_owner, dtype=np.int64)],
        favorite=np.r_[np.ones(fp_users.size, bool), np.zeros(n_gp, bool)],
        pl_indptr=pl_indptr,
        pl_tracks=np.concatenate([fp_tracks] + gp_tracks).astype(np.int32),
        tag_indptr=tag_indptr,
        tag_codes=np.asarray(gp_tags, dtype=np.int16),
        tag_schema=schema,
        reference_year=cfg.reference_year,
    )
    econ_rows = [EconomicRow(code, "province", INCOME_INDICATOR, round(float(v), 2))
                 for code, v in zip(prov_codes, prov_income)]
    econ_rows += [EconomicRow(code, "city", INCOME_INDICATOR, round(float(v), 2))
                  for code, v in zip(city_codes, city_income)]
    gt = GroundTruth(
        seed=seed,
        config=cfg,
        user_ids=user_ids,
        user_blocks=user_block.astype(np.int64),
        track_ids=track_ids,
        track_blocks=blocks,
        plan=plan,
        tag_plan=tag_plan,
        province_income={c: float(v) for c, v in zip(prov_codes, prov_income)},
        city_income={c: float(v) for c, v in zip(city_codes, city_income)},
    )
    return ds, gt, EconomicTable(tuple(econ_rows))


def write_synth(out_dir: str | Path, dataset: Dataset, truth: GroundTruth,
                economics: EconomicTable) -> dict[str, Path]:
    """Write ``playlists.jsonl``, ``economics.csv`` and ``ground_truth.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"playlists": out / "playlists.jsonl", "economics": out / "economics.csv",
             "ground_truth": out / "ground_truth.json"}
    write_playlists(dataset, paths["playlists"])
    write_economics(economics, paths["economics"])
    paths["ground_truth"].write_text(truth.to_json(), encoding="utf-8")
    return paths
