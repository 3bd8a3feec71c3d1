"""Playlist and economic-indicator file readers and the canonical writer.

Playlist files are JSON-lines, one playlist per line::

    {"playlist_id": "p1", "kind": "favorite",
     "owner": {"user_id": "u1", "birth_year": 1995, "gender": "female",
               "province": "P01", "city": "C0101"},
     "tags": [], "tracks": [{"track_id": "t1", "release_year": 2012}]}

``owner.birth_default`` (or a full ``owner.birthdate``), ``owner.active`` and
``tracks[].album_id`` are optional.
A flat CSV variant with one row per (playlist, track) is also supported.
"""

from __future__ import annotations

import csv
import json
import logging
from array import array
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .model import (
    FAVORITE,
    GENDER_CODES,
    GENDERS,
    GENERAL,
    MAX_PLAYLIST_TAGS,
    DEFAULT_REFERENCE_YEAR,
    Dataset,
    TagSchema,
    ValidationError,
)

log = logging.getLogger(__name__)

FORMATS = ("json-lines", "csv")
CSV_COLUMNS = (
    "playlist_id", "kind", "user_id", "birth_year", "birth_default", "gender", "province",
    "city", "active", "tags", "track_id", "release_year", "album_id",
)
ECONOMICS_HEADER = ("region_code", "level", "indicator", "value")
REGION_LEVELS = ("province", "city")
NON_NEGATIVE_HINTS = ("income", "gdp")
# platform default birthdate; users carrying it are flagged at ingestion
DEFAULT_BIRTHDATE = "1990-01-01"


class IngestError(ValidationError):
    """Malformed input file."""


class _Assembler:
    """Accumulates playlists into columnar arrays, assigning ids by first appearance."""

    def __init__(self, schema: TagSchema, reference_year: int):
        self.schema = schema
        self.reference_year = reference_year
        self.user_idx: dict[str, int] = {}
        self.birth_year = array("i")
        self.birth_default = array("b")
        self.gender = array("b")
        self.province: list = []
        self.city: list = []
        self.active = array("b")
        self.track_idx: dict[str, int] = {}
        self.release_year = array("i")
        self.album_id: list = []
        self.playlist_ids: list[str] = []
        self.seen_playlists: set[str] = set()
        self.owner = array("i")
        self.favorite = array("b")
        self.pl_indptr = array("q", [0])
        self.pl_tracks = array("i")
        self.tag_indptr = array("q", [0])
        self.tag_codes = array("h")
        self.fp_owners: set[int] = set()
        self.year_conflicts = 0

    def user(self, where: str, rec: dict) -> int:
        uid = rec.get("user_id")
        if uid is None:
            raise IngestError(f"{where}: owner has no user_id")
        uid = str(uid)
        i = self.user_idx.get(uid)
        if i is not None:
            return i
        gender = rec.get("gender") or "unknown"
        if gender not in GENDER_CODES:
            raise IngestError(f"{where}: unknown gender {gender!r}")
        by = rec.get("birth_year")
        birth_default = bool(rec.get("birth_default", False))
        birthdate = rec.get("birthdate")
        if birthdate:
            birthdate = str(birthdate)
            birth_default = birth_default or birthdate == DEFAULT_BIRTHDATE
            if by in (None, ""):
                by = birthdate[:4]
        try:
            by = int(by) if by not in (None, "") else 0
        except (TypeError, ValueError):
            raise IngestError(f"{where}: birth_year {by!r} is not an integer") from None
        i = len(self.user_idx)
        self.user_idx[uid] = i
        self.birth_year.append(by)
        self.birth_default.append(birth_default)
        self.gender.append(GENDER_CODES[gender])
        self.province.append(rec.get("province") or None)
        self.city.append(rec.get("city") or None)
        self.active.append(bool(rec.get("active", True)))
        return i

    def track(self, where: str, tid, year, album) -> int:
        if tid is None:
            raise IngestError(f"{where}: track has no track_id")
        tid = str(tid)
        try:
            year = int(year) if year not in (None, "") else 0
        except (TypeError, ValueError):
            raise IngestError(f"{where}: release_year {year!r} is not an integer") from None
        i = self.track_idx.get(tid)
        if i is None:
            i = len(self.track_idx)
            self.track_idx[tid] = i
            self.release_year.append(year)
            self.album_id.append(album or None)
        elif year:
            known = self.release_year[i]
            if known == 0:
                self.release_year[i] = year
            elif known != year:
                self.year_conflicts += 1
        return i

    def playlist(self, where: str, pid, kind, owner: int, tags: Iterable[str], tracks: list[int]):
        if pid is None:
            raise IngestError(f"{where}: missing playlist_id")
        pid = str(pid)
        if pid in self.seen_playlists:
            raise IngestError(f"{where}: duplicate playlist_id {pid!r}")
        if kind not in (FAVORITE, GENERAL):
            raise IngestError(f"{where}: unknown playlist kind {kind!r}")
        tags = list(tags)
        if kind == FAVORITE and tags:
            raise IngestError(f"{where}: favorite playlist {pid!r} carries tags")
        if len(tags) > MAX_PLAYLIST_TAGS:
            raise IngestError(f"{where}: playlist {pid!r} has {len(tags)} tags (max 3)")
        if kind == FAVORITE:
            if owner in self.fp_owners:
                uid = next(u for u, i in self.user_idx.items() if i == owner)
                raise IngestError(f"{where}: user {uid!r} has more than one favorite playlist")
            self.fp_owners.add(owner)
        try:
            codes = [self.schema.index(t) for t in tags]
        except ValidationError as exc:
            raise IngestError(f"{where}: {exc}") from None
        self.seen_playlists.add(pid)
        self.playlist_ids.append(pid)
        self.owner.append(owner)
        self.favorite.append(kind == FAVORITE)
        self.pl_tracks.extend(tracks)
        self.pl_indptr.append(len(self.pl_tracks))
        self.tag_codes.extend(codes)
        self.tag_indptr.append(len(self.tag_codes))

    def build(self) -> Dataset:
        if self.year_conflicts:
            log.warning("%d conflicting release years; first seen value kept", self.year_conflicts)
        users = sorted(self.user_idx, key=self.user_idx.__getitem__)
        tracks = sorted(self.track_idx, key=self.track_idx.__getitem__)
        try:
            return Dataset(
                user_ids=users,
                birth_year=np.frombuffer(self.birth_year, dtype=np.int32).copy(),
                birth_default=np.frombuffer(self.birth_default, dtype=np.int8).astype(bool),
                gender=np.frombuffer(self.gender, dtype=np.int8).copy(),
                province=self.province,
                city=self.city,
                active=np.frombuffer(self.active, dtype=np.int8).astype(bool),
                track_ids=tracks,
                release_year=np.frombuffer(self.release_year, dtype=np.int32).copy(),
                album_id=self.album_id,
                playlist_ids=self.playlist_ids,
                owner=np.frombuffer(self.owner, dtype=np.int32).copy(),
                favorite=np.frombuffer(self.favorite, dtype=np.int8).astype(bool),
                pl_indptr=np.frombuffer(self.pl_indptr, dtype=np.int64).copy(),
                pl_tracks=np.frombuffer(self.pl_tracks, dtype=np.int32).copy(),
                tag_indptr=np.frombuffer(self.tag_indptr, dtype=np.int64).copy(),
                tag_codes=np.frombuffer(self.tag_codes, dtype=np.int16).copy(),
                tag_schema=self.schema,
                reference_year=self.reference_year,
            )
        except ValidationError as exc:
            raise IngestError(str(exc)) from None


def load_playlists(
    path: str | Path,
    format: str = "json-lines",
    tag_schema: TagSchema | None = None,
    reference_year: int = DEFAULT_REFERENCE_YEAR,
) -> Dataset:
    """Read a playlist file into a :class:`Dataset`.

    Users and tracks are materialised from the playlist payloads in order of
    first appearance. Unknown fields are ignored.

    Raises
    ------
    IngestError
        On a malformed record (message names the line), a tagged favorite
        playlist, or a second favorite playlist for one user (names the user).
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    asm = _Assembler(tag_schema or TagSchema.default(), reference_year)
    path = Path(path)
    if format == "json-lines":
        _read_jsonl(path, asm)
    else:
        _read_csv(path, asm)
    return asm.build()


def _read_jsonl(path: Path, asm: _Assembler) -> None:
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path.name}:{line_no}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("owner"), dict):
                raise IngestError(f"{where}: record must be an object with an 'owner' object")
            owner = asm.user(where, rec["owner"])
            tracks = rec.get("tracks") or []
            if not isinstance(tracks, list):
                raise IngestError(f"{where}: 'tracks' must be a list")
            try:
                idx = [asm.track(where, t["track_id"], t.get("release_year"), t.get("album_id"))
                       for t in tracks]
            except (TypeError, KeyError):
                raise IngestError(f"{where}: each track must be an object with track_id") from None
            tags = rec.get("tags") or []
            if not isinstance(tags, list):
                raise IngestError(f"{where}: 'tags' must be a list")
            asm.playlist(where, rec.get("playlist_id"), rec.get("kind"), owner, tags, idx)


def _read_csv(path: Path, asm: _Assembler) -> None:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"playlist_id", "kind", "user_id", "track_id"} - set(reader.fieldnames or ())
        if missing:
            raise IngestError(f"{path.name}:1: header lacks columns {sorted(missing)}")
        current = None
        for line_no, row in enumerate(reader, start=2):
            where = f"{path.name}:{line_no}"
            pid = row["playlist_id"]
            if current is None or current[0] != pid:
                if current is not None:
                    asm.playlist(*current[1:])
                owner = asm.user(where, {
                    "user_id": row["user_id"] or None,
                    "birth_year": row.get("birth_year"),
                    "birth_default": row.get("birth_default", "").lower() in ("1", "true"),
                    "gender": row.get("gender") or None,
                    "province": row.get("province"),
                    "city": row.get("city"),
                    "active": row.get("active", "1").lower() not in ("0", "false"),
                })
                tags = [t for t in (row.get("tags") or "").split(";") if t]
                current = [pid, where, pid, row["kind"], owner, tags, []]
            if row["track_id"]:
                current[6].append(asm.track(where, row["track_id"], row.get("release_year"),
                                            row.get("album_id")))
        if current is not None:
            asm.playlist(*current[1:])


def _owner_payload(ds: Dataset, u: int) -> dict:
    rec: dict = {"user_id": ds.user_ids[u]}
    if ds.birth_year[u]:
        rec["birth_year"] = int(ds.birth_year[u])
    if ds.birth_default[u]:
        rec["birth_default"] = True
    if ds.gender[u]:
        rec["gender"] = GENDERS[int(ds.gender[u])]
    if ds.province[u] is not None:
        rec["province"] = ds.province[u]
    if ds.city[u] is not None:
        rec["city"] = ds.city[u]
    if not ds.active[u]:
        rec["active"] = False
    return rec


def write_playlists(dataset: Dataset, path: str | Path, format: str = "json-lines") -> None:
    """Canonical writer: playlists in dataset order, absent fields omitted."""
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}")
    ds = dataset
    schema = ds.tag_schema
    owners = [json.dumps(_owner_payload(ds, u), separators=(",", ":")) for u in range(ds.n_users)]
    track_json = []
    for t in range(ds.n_tracks):
        rec = {"track_id": ds.track_ids[t]}
        if ds.release_year[t]:
            rec["release_year"] = int(ds.release_year[t])
        if ds.album_id[t] is not None:
            rec["album_id"] = ds.album_id[t]
        track_json.append(json.dumps(rec, separators=(",", ":")))
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if format == "json-lines":
            for p in range(ds.n_playlists):
                tags = json.dumps([schema.ref(int(c)) for c in ds.playlist_tags(p)],
                                  separators=(",", ":"))
                tracks = ",".join(track_json[t] for t in ds.playlist_tracks(p).tolist())
                fh.write(
                    f'{{"playlist_id":{json.dumps(ds.playlist_ids[p])},'
                    f'"kind":"{FAVORITE if ds.favorite[p] else GENERAL}",'
                    f'"owner":{owners[int(ds.owner[p])]},"tags":{tags},"tracks":[{tracks}]}}\n'
                )
        else:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for p in range(ds.n_playlists):
                u = int(ds.owner[p])
                head = [
                    ds.playlist_ids[p], FAVORITE if ds.favorite[p] else GENERAL, ds.user_ids[u],
                    int(ds.birth_year[u]) or "", int(ds.birth_default[u]),
                    GENDERS[int(ds.gender[u])], ds.province[u] or "", ds.city[u] or "",
                    int(ds.active[u]), ";".join(schema.ref(int(c)) for c in ds.playlist_tags(p)),
                ]
                tracks = ds.playlist_tracks(p).tolist()
                if not tracks:
                    writer.writerow(head + ["", "", ""])
                for t in tracks:
                    writer.writerow(head + [ds.track_ids[t], int(ds.release_year[t]) or "",
                                            ds.album_id[t] or ""])


# --------------------------------------------------------------------------
# economics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EconomicRow:
    region_code: str
    level: str
    indicator: str
    value: float
    unit: str | None = None


@dataclass(frozen=True)
class EconomicTable:
    rows: tuple[EconomicRow, ...] = ()

    def __len__(self):
        return len(self.rows)

    def values(self, indicator: str, level: str = "province") -> dict[str, float]:
        return {r.region_code: r.value for r in self.rows
                if r.indicator == indicator and r.level == level}

    def indicators(self, level: str | None = None) -> tuple[str, ...]:
        return tuple(dict.fromkeys(r.indicator for r in self.rows
                                   if level is None or r.level == level))


def load_economics(path: str | Path) -> EconomicTable:
    """Parse a ``region_code,level,indicator,value`` CSV.

    Row indices in error messages count data rows from 1.
    """
    path = Path(path)
    rows = []
    seen = set()
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ECONOMICS_HEADER:
            raise IngestError(f"{path.name}: header must be exactly {','.join(ECONOMICS_HEADER)}")
        for i, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != 4:
                raise IngestError(f"{path.name}: row {i} has {len(rec)} fields, expected 4")
            code, level, indicator, raw = (s.strip() for s in rec)
            if level not in REGION_LEVELS:
                raise IngestError(f"{path.name}: row {i} has unknown level {level!r}")
            try:
                value = float(raw)
            except ValueError:
                raise IngestError(f"{path.name}: row {i} value {raw!r} is not numeric") from None
            if not np.isfinite(value):
                raise IngestError(f"{path.name}: row {i} value {raw!r} is not finite")
            if value < 0 and any(h in indicator.lower() for h in NON_NEGATIVE_HINTS):
                raise IngestError(f"{path.name}: row {i} has negative {indicator}")
            key = (code, level, indicator)
            if key in seen:
                raise IngestError(f"{path.name}: row {i} duplicates {code}/{level}/{indicator}")
            seen.add(key)
            rows.append(EconomicRow(code, level, indicator, value))
    return EconomicTable(tuple(rows))


def write_economics(table: EconomicTable, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ECONOMICS_HEADER)
        for r in table.rows:
            writer.writerow([r.region_code, r.level, r.indicator, repr(float(r.value))])


def region_filter(dataset: Dataset, excluded_regions: Iterable[str]) -> Dataset:
    """Drop users whose province or city is in ``excluded_regions``, with their playlists."""
    excluded = set(excluded_regions)
    if not excluded:
        return dataset
    known = set(dataset.province) | set(dataset.city)
    unknown = excluded - known
    if unknown:
        log.warning("excluded regions not present in dataset: %s", sorted(unknown))
    drop = np.fromiter(
        ((p in excluded) or (c in excluded) for p, c in zip(dataset.province, dataset.city)),
        dtype=bool, count=dataset.n_users,
    )
    return dataset.subset(~drop)
