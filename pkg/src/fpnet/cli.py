"""``fpnet`` command-line interface.

Exit codes: 0 success, 1 validation error (bad input or config), 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import _accel, fit, ingest, synth, temporal
from .model import ValidationError
from .pipeline import OutputDir, Pipeline, PipelineConfig, PipelineError, dumps

log = logging.getLogger("fpnet")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _stages(text: str) -> tuple[tuple[int, int], ...]:
    """Parse ``12-18,19-25,26-40``."""
    out = []
    for part in text.split(","):
        lo, _, hi = part.strip().partition("-")
        out.append((int(lo), int(hi)))
    return tuple(out)


def _global_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    p.add_argument("--out", default="fpnet-out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _input_flags(p: argparse.ArgumentParser, economics: bool = False) -> None:
    p.add_argument("--input", "-i", required=True, help="playlist file")
    p.add_argument("--format", choices=ingest.FORMATS, default="json-lines")
    p.add_argument("--exclude-regions", default="",
                   help="comma-separated province or city codes to drop")
    p.add_argument("--min-age", type=int, default=12)
    p.add_argument("--max-age", type=int, default=40)
    p.add_argument("--no-age-filter", action="store_true",
                   help="keep users of every age, including unknown")
    p.add_argument("--keep-default-birthdate", action="store_true")
    p.add_argument("--reference-year", type=int, default=2016)
    p.add_argument("--min-gain", type=float, default=1e-7,
                   help="minimum modularity gain per Louvain sweep")
    if economics:
        p.add_argument("--economics", help="region_code,level,indicator,value CSV")
        p.add_argument("--indicator", default=None)
        p.add_argument("--min-region-users", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpnet",
        description="Favorite-playlist network analysis: graph, communities, diversity, "
                    "temporal preference and fits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, economics=False, inputs=True):
        p = sub.add_parser(name, help=help_)
        _global_flags(p)
        if inputs:
            _input_flags(p, economics)
        return p

    add("ingest", "validate a playlist file and summarise cohorts")
    p = add("graph-stats", "bipartite graph size, attention and degree distributions")
    p.add_argument("--bins-per-decade", type=int, default=10)
    p = add("tagmap", "tag vector-sets per track, user or analysis group")
    p.add_argument("--level", choices=("track", "user", "group"), default="group")
    p = add("communities", "Louvain communities and profiles")
    add("diversity", "tag and community diversity per analysis group")
    add("divergence", "male/female KLD and JSD per analysis group")
    p = add("temporal", "attention matrices, decay curve and sensitivity")
    p.add_argument("--gender", choices=("all", "male", "female"), default="all")
    p.add_argument("--popularity-band", choices=(*temporal.BANDS, "all"), default=None)
    p = add("agemode", "age-mode trend code per tag")
    p.add_argument("--stages", type=_stages, default=fit.DEFAULT_STAGES)
    p.add_argument("--threshold", type=float, default=fit.DEFAULT_THRESHOLD)

    pf = sub.add_parser("fit", help="model fits")
    fsub = pf.add_subparsers(dest="fit_command", required=True)
    for name, help_ in (("decay", "power law with exponential tail on the I^G curve"),
                        ("bigaussian", "Bigaussian on mean sensitivity by age"),
                        ("correlate", "regional correlations with an economic indicator"),
                        ("agemode", "age-mode trend code per tag")):
        p = fsub.add_parser(name, help=help_)
        _global_flags(p)
        _input_flags(p, economics=name == "correlate")
        if name in ("decay", "bigaussian"):
            p.add_argument("--gender", choices=("all", "male", "female"), default="all")
        if name == "agemode":
            p.add_argument("--stages", type=_stages, default=fit.DEFAULT_STAGES)
            p.add_argument("--threshold", type=float, default=fit.DEFAULT_THRESHOLD)

    p = sub.add_parser("synth", help="generate a synthetic dataset with planted ground truth")
    _global_flags(p)
    p.add_argument("--config", help="flat key = value file (defaults when omitted)")

    add("report", "run the whole pipeline and write report.json", economics=True)
    return parser


def _config(args) -> PipelineConfig:
    no_filter = getattr(args, "no_age_filter", False)
    return PipelineConfig(
        input=args.input,
        format=args.format,
        economics=getattr(args, "economics", None),
        exclude_regions=tuple(r.strip() for r in args.exclude_regions.split(",") if r.strip()),
        seed=args.seed,
        out=args.out,
        threads=args.threads,
        min_age=None if no_filter else args.min_age,
        max_age=None if no_filter else args.max_age,
        exclude_default_birthdate=not args.keep_default_birthdate,
        min_modularity_gain=args.min_gain,
        bins_per_decade=getattr(args, "bins_per_decade", 10),
        stages=getattr(args, "stages", fit.DEFAULT_STAGES),
        age_mode_threshold=getattr(args, "threshold", fit.DEFAULT_THRESHOLD),
        indicator=getattr(args, "indicator", None),
        min_region_users=getattr(args, "min_region_users", 10),
        reference_year=args.reference_year,
    )


def _print(obj) -> None:
    sys.stdout.write(dumps(obj))


def _dispatch(args) -> int:
    if args.command == "synth":
        cfg = synth.SynthConfig.from_file(args.config) if args.config else synth.SynthConfig()
        ds, truth, econ = synth.generate(cfg, seed=args.seed)
        paths = synth.write_synth(args.out, ds, truth, econ)
        _print({"users": ds.n_users, "tracks": ds.n_tracks, "playlists": ds.n_playlists,
                "files": {k: p.name for k, p in paths.items()}})
        return EXIT_OK

    pipe = Pipeline(_config(args))
    cmd = args.command
    if cmd == "ingest":
        _print(pipe.write_ingest())
    elif cmd == "graph-stats":
        _print(pipe.write_graph())
    elif cmd == "tagmap":
        _print(pipe.write_tagmap(args.level))
    elif cmd == "communities":
        info = pipe.write_community()
        _print({k: v for k, v in info.items() if k != "profiles"})
    elif cmd == "diversity":
        rows = pipe.write_diversity()
        _print({"rows": len(rows), "file": "diversity.csv"})
    elif cmd == "divergence":
        rows = pipe.write_divergence()
        _print({"rows": len(rows), "file": "divergence.csv"})
    elif cmd == "temporal":
        _print(pipe.write_temporal(args.gender, args.popularity_band))
    elif cmd == "agemode":
        rows = pipe.write_age_modes()
        _print({"tags": len(rows), "file": "age_modes.csv"})
    elif cmd == "fit":
        return _dispatch_fit(pipe, args)
    elif cmd == "report":
        report = pipe.run()
        _print({k: report[k] for k in ("communities", "fits") if k in report})
    return EXIT_OK


def _dispatch_fit(pipe: Pipeline, args) -> int:
    sub = args.fit_command
    out: OutputDir = pipe.out
    gender = None if getattr(args, "gender", "all") == "all" else args.gender
    sfx = "" if gender is None else f"_{gender}"
    if sub == "decay":
        f = pipe.fit_decay(gender)
        out.json("fit", f"decay_fit{sfx}.json", {**f.as_dict(), "space": "log-linear, unweighted"})
        _print(f.as_dict())
    elif sub == "bigaussian":
        f = pipe.fit_sensitivity(gender)
        out.json("fit", f"bigaussian_fit{sfx}.json", f.as_dict())
        _print(f.as_dict())
    elif sub == "correlate":
        _print(pipe.write_correlations())
    elif sub == "agemode":
        rows = pipe.write_age_modes()
        _print({"tags": len(rows), "file": "age_modes.csv"})
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _accel.set_threads(args.threads)
    try:
        return _dispatch(args)
    except PipelineError as exc:
        sys.stderr.write(f"fpnet: error in stage {exc.stage}: {exc.cause}\n")
        return EXIT_VALIDATION if exc.is_validation else EXIT_RUNTIME
    except (ValidationError, FileNotFoundError) as exc:
        sys.stderr.write(f"fpnet: {exc}\n")
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        log.debug("runtime failure", exc_info=True)
        sys.stderr.write(f"fpnet: runtime failure: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
