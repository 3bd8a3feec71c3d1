"""End-to-end analysis pipeline with deterministic, plot-ready outputs.

Stages run in dependency order (ingest, graph, tagmap, community, metrics,
temporal, fit). Each stage is computed lazily once; a failure raises
:class:`PipelineError` naming the stage. Outputs are CSV and JSON files with
no timestamps, so identical inputs, configuration and seed give identical
bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import community, fit, graph as graph_mod, ingest, metrics, tagmap, temporal
from .model import GENDERS, ValidationError, cohort_summary, filter_demographics

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STAGES = ("ingest", "graph", "tagmap", "community", "metrics", "temporal", "fit")


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def is_validation(self) -> bool:
        return isinstance(self.cause, (ValidationError, FileNotFoundError, graph_mod.GraphError,
                                       fit.FitError))


def stage_seed(seed: int, stage: str) -> int:
    """Sub-seed of a stage: the first 8 bytes of ``sha256("seed:stage")``."""
    digest = hashlib.sha256(f"{int(seed)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class PipelineConfig:
    input: str
    format: str = "json-lines"
    economics: str | None = None
    exclude_regions: tuple[str, ...] = ()
    seed: int = 0
    out: str = "fpnet-out"
    threads: int | None = None
    min_age: int | None = 12
    max_age: int | None = 40
    exclude_default_birthdate: bool = True
    min_modularity_gain: float = community.DEFAULT_MIN_GAIN
    bins_per_decade: int = 10
    sensitivity_ages: tuple[int, int] = (-20, 40)
    stages: tuple[tuple[int, int], ...] = fit.DEFAULT_STAGES
    age_mode_threshold: float = fit.DEFAULT_THRESHOLD
    indicator: str | None = None
    min_region_users: int = 10
    reference_year: int = 2016

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("threads")
        d["input"] = Path(self.input).name
        if self.economics:
            d["economics"] = Path(self.economics).name
        return d


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return _clean(float(v))
    if isinstance(v, np.ndarray):
        return [_json_default(x) if isinstance(x, (np.generic, np.ndarray)) else x
                for x in v.tolist()]
    raise TypeError(f"not JSON serialisable: {type(v).__name__}")


def _clean(obj):
    """Replace nan/inf by ``None`` recursively so the JSON stays standard."""
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1, default=_json_default) + "\n"


class OutputDir:
    """Writes files under one directory and remembers them for the manifest."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, list[str]] = {}

    def _record(self, stage: str, name: str) -> Path:
        self.files.setdefault(stage, [])
        if name not in self.files[stage]:
            self.files[stage].append(name)
        return self.path / name

    def csv(self, stage: str, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = self._record(stage, name)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(header) + ["schema_version"])
            for r in rows:
                w.writerow([_cell(v) for v in r] + [SCHEMA_VERSION])
        return path

    def matrix(self, stage: str, name: str, row_labels, col_labels, values: np.ndarray) -> Path:
        """Matrix CSV: first row holds column labels, first column row labels."""
        path = self._record(stage, name)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"schema_v{SCHEMA_VERSION}"] + [_cell(c) for c in col_labels])
            for lab, row in zip(row_labels, values):
                w.writerow([_cell(lab)] + [_cell(v) for v in row])
        return path

    def json(self, stage: str, name: str, obj: dict) -> Path:
        path = self._record(stage, name)
        payload = {"schema_version": SCHEMA_VERSION, **obj}
        path.write_text(dumps(payload), encoding="utf-8")
        return path


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------


class Pipeline:
    """Lazily evaluated stages over one configuration."""

    def __init__(self, config: PipelineConfig):
        self.cfg = config
        self._cache: dict[str, object] = {}
        self.status: dict[str, str] = {}
        self._out: OutputDir | None = None

    @property
    def out(self) -> OutputDir:
        if self._out is None:
            self._out = OutputDir(self.cfg.out)
        return self._out

    def _stage(self, stage: str, key: str, fn: Callable):
        if key in self._cache:
            return self._cache[key]
        try:
            value = fn()
        except PipelineError:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
            self.status[stage] = "failed"
            raise PipelineError(stage, exc) from exc
        self._cache[key] = value
        self.status.setdefault(stage, "complete")
        return value

    # ---- ingest ----------------------------------------------------------

    @property
    def raw_dataset(self):
        return self._stage("ingest", "raw", lambda: ingest.load_playlists(
            self.cfg.input, format=self.cfg.format, reference_year=self.cfg.reference_year))

    @property
    def dataset(self):
        def build():
            ds = ingest.region_filter(self.raw_dataset, self.cfg.exclude_regions)
            if self.cfg.min_age is not None or self.cfg.max_age is not None:
                ds = filter_demographics(
                    ds,
                    min_age=self.cfg.min_age if self.cfg.min_age is not None else 0,
                    max_age=self.cfg.max_age if self.cfg.max_age is not None else 10 ** 6,
                    exclude_default_birthdate=self.cfg.exclude_default_birthdate,
                )
            if ds.n_users == 0:
                raise ValidationError("no users left after region and age filtering")
            return ds
        return self._stage("ingest", "dataset", build)

    @property
    def economics(self):
        def load():
            if not self.cfg.economics:
                raise FileNotFoundError("no economics file given (use --economics)")
            path = Path(self.cfg.economics)
            if not path.exists():
                raise FileNotFoundError(f"economics file not found: {path}")
            return ingest.load_economics(path)
        return self._stage("fit", "economics", load)

    # ---- graph / tags / communities -----------------------------------------

    @property
    def graph(self):
        return self._stage("graph", "graph", lambda: graph_mod.build_graph(self.dataset))

    @property
    def track_tags(self):
        return self._stage("tagmap", "track_tags", lambda: tagmap.map_tags_to_tracks(self.dataset))

    @property
    def user_tags(self):
        return self._stage("tagmap", "user_tags", lambda: tagmap.map_tags_to_users(
            self.dataset, self.track_tags, self.graph))

    @property
    def assignment(self):
        return self._stage("community", "assignment", lambda: community.detect_communities(
            self.graph, seed=stage_seed(self.cfg.seed, "community"),
            min_modularity_gain=self.cfg.min_modularity_gain))

    @property
    def counts(self):
        return self._stage("metrics", "counts", lambda: metrics.community_counts(
            self.graph, self.assignment))

    # ---- groups ------------------------------------------------------------

    def groups(self) -> dict[str, np.ndarray]:
        """Dataset user rows per analysis group, in a fixed key order."""
        ds = self.dataset
        ages = ds.ages()
        out: dict[str, np.ndarray] = {"all": np.arange(ds.n_users)}
        for code in (1, 2):
            out[f"gender={GENDERS[code]}"] = np.flatnonzero(ds.gender == code)
        for lo, hi in self.cfg.stages:
            out[f"stage={lo}-{hi}"] = np.flatnonzero((ages >= lo) & (ages <= hi))
        for a in np.unique(ages[ages >= 0]).tolist():
            out[f"age={a}"] = np.flatnonzero(ages == a)
        for a in np.unique(ages[ages >= 0]).tolist():
            for code in (1, 2):
                out[f"age={a}|gender={GENDERS[code]}"] = np.flatnonzero(
                    (ages == a) & (ds.gender == code))
        return {k: v for k, v in out.items() if v.size}

    # ---- stage outputs -------------------------------------------------------

    def write_ingest(self) -> dict:
        ds, raw = self.dataset, self.raw_dataset
        summary = cohort_summary(ds)
        self.out.csv("ingest", "cohorts.csv",
                     ("age", "gender", "n_users", "n_with_fp", "mean_fp_length"),
                     ((r.age, r.gender, r.n_users, r.n_with_fp, r.mean_fp_length)
                      for r in summary.rows))
        info = {
            "n_users_loaded": raw.n_users, "n_tracks_loaded": raw.n_tracks,
            "n_playlists_loaded": raw.n_playlists,
            "n_users": ds.n_users, "n_tracks": ds.n_tracks, "n_playlists": ds.n_playlists,
            "n_favorite_playlists": int(ds.favorite.sum()),
            "n_tagged_playlists": int(np.count_nonzero(np.diff(ds.tag_indptr))),
            "undated_track_fraction": float(np.mean(ds.release_year == 0)) if ds.n_tracks else 0.0,
        }
        self.out.json("ingest", "dataset.json", info)
        return info

    def write_graph(self) -> dict:
        g = self.graph
        att = graph_mod.total_attention(g)
        dists = graph_mod.degree_distributions(g, self.cfg.bins_per_decade)
        for name, h in dists.items():
            self.out.csv("graph", f"dist_{name}.csv", ("bin_lo", "bin_hi", "count", "density"),
                         h.rows())
        self.out.csv("graph", "attention.csv", ("track_id", "attention"),
                     zip(att.track_ids, att.values.tolist()))
        info = {
            "n_users": g.n_users, "n_tracks": g.n_tracks, "n_edges": g.n_edges,
            "n_skipped_empty_fp": g.n_skipped,
            "total_attention": att.total(),
            "mean_fp_length": float(g.fp_length.mean()) if g.n_users else None,
            "max_followers": int(g.followers.max()) if g.n_tracks else 0,
        }
        self.out.json("graph", "graph_stats.json", info)
        return info

    def write_tagmap(self, level: str = "group") -> dict:
        """Vector-sets per entity as JSON ``{id: {class: [strengths]}}``."""
        if level == "track":
            m = self.track_tags
        elif level == "user":
            m = self.user_tags
        elif level == "group":
            m = tagmap.group_tag_matrix(self.user_tags, self.groups())
        else:
            raise ValueError(f"unknown tag level {level!r}")
        schema = m.schema
        self.out.json("tagmap", f"tags_{level}.json", {
            "level": level,
            "classes": {c: list(schema.tags(c)) for c in schema.class_names},
            "vectors": {i: m.row(k).as_dict() for k, i in enumerate(m.ids)},
        })
        info = {"track_coverage": self.track_tags.coverage,
                "user_coverage": self.user_tags.coverage}
        self.out.json("tagmap", "tag_coverage.json", info)
        return info

    def write_community(self) -> dict:
        a = self.assignment
        g = self.graph
        self.out.csv("community", "communities.csv", ("node_id", "side", "community"),
                     zip(a.node_ids, a.sides(), a.labels.tolist()))
        rank = community.rank_communities(a)
        self.out.csv("community", "community_ranking.csv",
                     ("rank", "by_tracks_community", "n_tracks", "by_users_community", "n_users"),
                     ((i + 1, t[0], t[1], u[0], u[1])
                      for i, (t, u) in enumerate(zip(rank.by_tracks, rank.by_users))))
        profiles = community.profile_communities(a, self.dataset, self.user_tags, g, top=8)
        top_u = a.user_counts[:8].sum() / max(a.user_counts.sum(), 1)
        top_t = a.track_counts[:8].sum() / max(a.track_counts.sum(), 1)
        info = {
            "modularity": a.modularity,
            "level_modularity": list(a.level_modularity),
            "n_communities": a.n_communities,
            "top8_user_coverage": float(top_u),
            "top8_track_coverage": float(top_t),
            "warnings": list(a.warnings),
            "seed": stage_seed(self.cfg.seed, "community"),
            "profiles": [p.as_dict() for p in profiles],
        }
        self.out.json("community", "communities.json", info)
        return info

    def write_diversity(self) -> list[tuple]:
        a = self.assignment
        rows = metrics.diversity_rows(self.groups(), self.user_tags, self.graph, self.counts,
                                      a.n_communities)
        self.out.csv("metrics", "diversity.csv", metrics.REPORT_COLUMNS, rows)
        return rows

    def write_divergence(self) -> list[tuple]:
        rows = metrics.divergence_rows(self.groups(), self.dataset.gender, self.user_tags,
                                       self.graph, self.counts)
        self.out.csv("metrics", "divergence.csv", metrics.REPORT_COLUMNS, rows)
        return rows

    def temporal_bundle(self, gender: str | None = None):
        key = f"temporal:{gender or 'all'}"

        def build():
            ds, g = self.dataset, self.graph
            ay = temporal.attention_matrix(ds, g, gender=gender)
            ag = temporal.global_attention(ds, g, gender=gender)
            ag_known = temporal.global_attention(ds, g, gender=gender, known_birth_only=True)
            R = temporal.relative_attention(ay, ag)
            curves = temporal.sensitivity_surface(R)
            by_age = temporal.mean_sensitivity_by_age(curves, self.cfg.sensitivity_ages)
            decay = temporal.mean_global_preference(ds, g, gender=gender)
            return ay, ag, ag_known, R, curves, by_age, decay
        return self._stage("temporal", key, build)

    def write_temporal(self, gender: str | None = None, band: str | None = None) -> dict:
        sfx = "" if gender in (None, "all") else f"_{gender}"
        ay, ag, ag_known, R, curves, by_age, decay = self.temporal_bundle(
            None if gender == "all" else gender)
        o = self.out
        o.matrix("temporal", f"attention_matrix{sfx}.csv", ay.release_years, ay.birth_years,
                 ay.values)
        o.matrix("temporal", f"relative_attention{sfx}.csv", R.release_years, R.birth_years,
                 R.values)
        o.matrix("temporal", f"log_relative_attention{sfx}.csv", R.release_years, R.birth_years,
                 R.log())
        o.csv("temporal", f"global_attention{sfx}.csv",
              ("release_year", "A_G", "A_G_known_birth"),
              zip(ag.release_years.tolist(), ag.values.tolist(), ag_known.values.tolist()))
        o.csv("temporal", f"sensitivity{sfx}.csv", ("birth_year", "age_at_release", "S"),
              ((c.birth_year, a, s) for c in curves for a, s in zip(c.age.tolist(),
                                                                    c.values.tolist())))
        o.csv("temporal", f"sensitivity_by_age{sfx}.csv", ("age_at_release", "mean_S", "n_cohorts"),
              zip(by_age.age.tolist(), by_age.mean.tolist(), by_age.n_cohorts.tolist()))
        o.csv("temporal", f"release_year_quantiles{sfx}.csv",
              ("birth_year", "q25", "median", "q75"),
              ((q.birth_year, q.q25, q.median, q.q75)
               for q in temporal.release_year_quantiles(ay)))
        bands = [None] if band is None else [band]
        if band == "all":
            bands = [None, *temporal.BANDS]
        for b in bands:
            d = decay if b is None else self._stage(
                "temporal", f"decay:{gender}:{b}",
                lambda b=b: temporal.mean_global_preference(
                    self.dataset, self.graph, gender=None if gender == "all" else gender, band=b))
            name = f"decay{sfx}" + ("" if b is None else f"_{b}") + ".csv"
            o.csv("temporal", name, ("x", "release_year", "I_G", "A_G", "rho", "track_count"),
                  zip(d.x.tolist(), d.release_years.tolist(), d.y.tolist(), d.attention.tolist(),
                      d.rho.tolist(), d.track_counts.tolist()))
        return {
            "n_users_unknown_birth": ay.n_users_unknown_birth,
            "undated_mass": ag.undated_mass,
            "undated_track_fraction": decay.undated_fraction,
        }

    # ---- fits --------------------------------------------------------------

    def fit_decay(self, gender: str | None = None) -> fit.PowerExpTailFit:
        decay = self.temporal_bundle(gender)[-1]
        return self._stage("fit", f"decay:{gender}",
                           lambda: fit.fit_power_exp_tail(decay.x, decay.y))

    def fit_sensitivity(self, gender: str | None = None) -> fit.BigaussianFit:
        by_age = self.temporal_bundle(gender)[5]
        return self._stage("fit", f"bigaussian:{gender}",
                           lambda: fit.fit_bigaussian(by_age.age, by_age.mean))

    def age_modes(self) -> list[fit.AgeModeRow]:
        return self._stage("fit", "agemode", lambda: fit.age_modes(
            self.dataset, self.user_tags, self.cfg.stages, self.cfg.age_mode_threshold))

    def write_age_modes(self) -> list[fit.AgeModeRow]:
        rows = self.age_modes()
        names = [f"stage_{lo}_{hi}" for lo, hi in self.cfg.stages]
        self.out.csv("fit", "age_modes.csv", ("tag_class", "tag", *names, "mode"),
                     ((r.tag_class, r.tag, *r.stage_means, r.mode) for r in rows))
        return rows

    def regional(self, level: str) -> fit.RegionalAnalysis:
        econ = self.economics
        return self._stage("fit", f"regional:{level}", lambda: fit.regional_analysis(
            self.dataset, econ, self.user_tags, self.graph, self.counts,
            self.assignment.n_communities, indicator=self.cfg.indicator, level=level,
            min_users=self.cfg.min_region_users, stages=self.cfg.stages))

    def write_correlations(self) -> dict:
        out = {}
        for level in ("province", "city"):
            ra = self.regional(level)
            self.out.csv("fit", f"correlations_{level}.csv",
                         ("metric", "tag_class", "tag", "subgroup", "r", "p", "n", "reason"),
                         ((c.metric, c.tag_class, c.tag, c.subgroup, c.r, c.p, c.n, c.reason)
                          for c in ra.correlations))
            self.out.csv("fit", f"gender_correlation_averages_{level}.csv",
                         ("tag_class", "gender", "mean_positive_r", "mean_negative_r"),
                         ra.gender_averages())
            keys = [k for k in ra.series]
            self.out.csv("fit", f"regional_series_{level}.csv",
                         ("region", "indicator", "n_users") + tuple("/".join(k) for k in keys),
                         ((code, x, n, *(ra.series[k][j] for k in keys))
                          for j, (code, x, n) in enumerate(zip(ra.regions,
                                                               ra.indicator_values.tolist(),
                                                               ra.n_users.tolist()))))
            top = {}
            for c in ("D_CI_mean", "D_CA", "D_CU"):
                row = next((r for r in ra.correlations if r.metric == c and r.subgroup == "all"),
                           None)
                if row is not None:
                    top[c] = {"r": row.r, "p": row.p, "n": row.n}
            out[level] = {"indicator": ra.indicator, "n_regions": len(ra.regions),
                          "n_excluded_regions": len(ra.excluded_regions),
                          "n_users_without_region": ra.n_unlocated,
                          "community_diversity": top}
        return out

    def write_fits(self) -> dict:
        res = {"decay": self.fit_decay().as_dict(),
               "decay_space": "log-linear, unweighted"}
        for g in (None, "male", "female"):
            key = "sensitivity" if g is None else f"sensitivity_{g}"
            try:
                res[key] = self.fit_sensitivity(g).as_dict()
            except PipelineError as exc:
                if g is None:
                    raise
                res[key] = {"error": str(exc.cause)}
        by_age = self.temporal_bundle(None)[5]
        bg = self.fit_sensitivity(None)
        self.out.csv("fit", "sensitivity_fit_residuals.csv", ("age_at_release", "mean_S", "fit",
                                                              "residual"),
                     ((a, y, f, y - f) for a, y, f in zip(by_age.age.tolist(), by_age.mean.tolist(),
                                                          bg(by_age.age).tolist())))
        d = self.temporal_bundle(None)[-1]
        dfit = self.fit_decay()
        # the model is undefined at x = 0 (tracks released in the reference year)
        fitted = np.where(d.x > 0, dfit(np.where(d.x > 0, d.x, 1)), np.nan)
        self.out.csv("fit", "decay_fit_residuals.csv", ("x", "I_G", "fit", "residual"),
                     ((x, y, f, y - f) for x, y, f in zip(d.x.tolist(), d.y.tolist(),
                                                          fitted.tolist())))
        self.out.json("fit", "fits.json", res)
        return res

    # ---- full run ----------------------------------------------------------

    def kld_by_age(self, rows: list[tuple]) -> dict:
        series: dict[str, list] = {}
        for key, metric, cls, value, *_ in rows:
            if metric in ("KLD_T", "KLD_C") and key.startswith("age=") and "|" not in key:
                series.setdefault(cls, []).append([int(key[4:]), value])
        return series

    def run(self) -> dict:
        """Run every stage, write all outputs, ``report.json`` and ``manifest.json``."""
        report: dict = {"config": self.cfg.as_dict(), "seed": self.cfg.seed}
        error: PipelineError | None = None
        try:
            report["dataset"] = self.write_ingest()
            report["graph"] = self.write_graph()
            report["tags"] = self.write_tagmap("group")
            report["communities"] = {k: v for k, v in self.write_community().items()
                                     if k != "profiles"}
            self.write_diversity()
            report["kld_by_age"] = self.kld_by_age(self.write_divergence())
            report["temporal"] = self.write_temporal(None)
            for g in ("male", "female"):
                self.write_temporal(g)
            fits = self.write_fits()
            self.write_age_modes()
            report["fits"] = {"decay": {k: fits["decay"][k] for k in ("a", "b", "c")},
                              "sensitivity": {k: fits["sensitivity"][k]
                                              for k in ("y0", "xc", "H", "w1", "w2")},
                              "peak_sensitivity_age": fits["sensitivity"]["xc"]}
            for g in ("male", "female"):
                f = fits.get(f"sensitivity_{g}", {})
                if "xc" in f:
                    report["fits"][f"peak_sensitivity_age_{g}"] = f["xc"]
            if self.cfg.economics:
                report["regional"] = self.write_correlations()
        except PipelineError as exc:
            error = exc
        self.write_manifest(error)
        if error is not None:
            raise error
        self.out.json("report", "report.json", report)
        self.write_manifest(None)
        return report

    def write_manifest(self, error: PipelineError | None) -> None:
        stages = {}
        for s in STAGES:
            st = self.status.get(s, "not run")
            stages[s] = {"status": st, "files": sorted(self.out.files.get(s, []))}
        complete = error is None and all(stages[s]["status"] == "complete" for s in STAGES)
        manifest = {"schema_version": SCHEMA_VERSION, "complete": complete, "stages": stages,
                    "report": "report.json" if "report" in self.out.files else None}
        if error is not None:
            manifest["error"] = {"stage": error.stage, "message": str(error.cause)}
        (self.out.path / "manifest.json").write_text(dumps(manifest), encoding="utf-8")


def run_pipeline(config: PipelineConfig) -> dict:
    return Pipeline(config).run()
