"""Domain records, the tag schema and the columnar :class:`Dataset` store."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

from . import kernels

DEFAULT_REFERENCE_YEAR = 2016
MIN_BIRTH_YEAR = 1900

GENDERS = ("unknown", "male", "female")
UNKNOWN, MALE, FEMALE = 0, 1, 2
GENDER_CODES = {name: code for code, name in enumerate(GENDERS)}

FAVORITE = "favorite"
GENERAL = "general"
MAX_PLAYLIST_TAGS = 3

DEFAULT_TAG_CLASSES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("Language", ("Chinese", "EU&US", "Japanese", "Korean", "Cantonese", "Other LNGs")),
    (
        "Genre",
        (
            "Pop", "Rock", "Folk", "Electronica", "Dance", "Rap", "Light Music", "Jazz",
            "Country", "R&B/Soul", "Classical", "Ethnic", "Britpop", "Metal", "Punk",
            "Blues", "Reggae", "World Music", "Latin", "Alternative/Indie", "New Age",
            "Antique", "Post-Rock", "Bossa Nova",
        ),
    ),
    (
        "Scenario",
        (
            "Early Morning", "Night", "Studying", "Working", "Noon Recess", "Afternoon Tea",
            "Metro", "Driving", "Sports", "Travel", "Walking", "Bar",
        ),
    ),
    (
        "Emotion",
        (
            "Nostalgia", "Refreshing", "Romantic", "Sexy", "Sad", "Healing", "Relaxing",
            "Lonely", "Touched", "Exciting", "Happy", "Quiet", "Missing",
        ),
    ),
    (
        "Theme",
        (
            "OST", "ACG", "Campus", "Game", "1970s", "1980s", "1990s", "Web Song", "KTV",
            "Classic", "Cover", "Guitar", "Piano", "Instrumental", "Children", "Ranklist",
            "2000s",
        ),
    ),
)


class ValidationError(ValueError):
    """Input violates a dataset invariant."""


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    birth_year: int | None = None
    gender: str = "unknown"
    province: str | None = None
    city: str | None = None
    active: bool = True
    # set at ingestion when the platform's default birthdate was recorded
    birth_default: bool = False


@dataclass(frozen=True)
class TrackRecord:
    track_id: str
    release_year: int | None = None
    album_id: str | None = None


@dataclass(frozen=True)
class Playlist:
    playlist_id: str
    owner: str
    kind: str
    track_ids: tuple[str, ...]
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class TagSchema:
    """Ordered tag classes, each with an ordered tag vocabulary.

    Tags are addressed globally by a flat index (class blocks laid out in order)
    or by a ``"Class:Tag"`` reference string.
    """

    classes: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        seen = set()
        for name, tags in self.classes:
            if name in seen:
                raise ValueError(f"duplicate tag class {name!r}")
            seen.add(name)
            if len(set(tags)) != len(tags):
                raise ValueError(f"duplicate tag names in class {name!r}")

    @classmethod
    def default(cls) -> "TagSchema":
        return cls(DEFAULT_TAG_CLASSES)

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.classes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(tags) for _, tags in self.classes)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)

    @property
    def n_tags(self) -> int:
        return int(self.offsets[-1])

    def size(self, class_name: str) -> int:
        return self.sizes[self.class_names.index(class_name)]

    def slice(self, class_name: str) -> slice:
        c = self.class_names.index(class_name)
        return slice(int(self.offsets[c]), int(self.offsets[c + 1]))

    def tags(self, class_name: str) -> tuple[str, ...]:
        return self.classes[self.class_names.index(class_name)][1]

    @cached_property
    def _index(self) -> dict[str, int]:
        out = {}
        for c, (name, tags) in enumerate(self.classes):
            for t, tag in enumerate(tags):
                out[f"{name}:{tag}"] = int(self.offsets[c]) + t
        return out

    def index(self, ref: str) -> int:
        try:
            return self._index[ref]
        except KeyError:
            raise ValidationError(f"tag {ref!r} is not in the tag schema") from None

    def ref(self, index: int) -> str:
        c = int(np.searchsorted(self.offsets, index, side="right")) - 1
        name, tags = self.classes[c]
        return f"{name}:{tags[index - int(self.offsets[c])]}"


def _as_tuple(values) -> tuple:
    return tuple(values)


@dataclass(eq=False)
class Dataset:
    """Columnar store of users, tracks and playlists.

    Missing birth and release years are stored as 0. Playlist track lists and
    tag lists are CSR-packed (``pl_indptr``/``pl_tracks`` and
    ``tag_indptr``/``tag_codes``); tag codes index the flat tag schema.
    """

    user_ids: tuple[str, ...]
    birth_year: np.ndarray
    birth_default: np.ndarray
    gender: np.ndarray
    province: tuple[str | None, ...]
    city: tuple[str | None, ...]
    active: np.ndarray
    track_ids: tuple[str, ...]
    release_year: np.ndarray
    album_id: tuple[str | None, ...]
    playlist_ids: tuple[str, ...]
    owner: np.ndarray
    favorite: np.ndarray
    pl_indptr: np.ndarray
    pl_tracks: np.ndarray
    tag_indptr: np.ndarray
    tag_codes: np.ndarray
    tag_schema: TagSchema = field(default_factory=TagSchema.default)
    reference_year: int = DEFAULT_REFERENCE_YEAR

    def __post_init__(self):
        self.user_ids = _as_tuple(self.user_ids)
        self.track_ids = _as_tuple(self.track_ids)
        self.playlist_ids = _as_tuple(self.playlist_ids)
        self.province = _as_tuple(self.province)
        self.city = _as_tuple(self.city)
        self.album_id = _as_tuple(self.album_id)
        self.birth_year = np.asarray(self.birth_year, dtype=np.int32)
        self.birth_default = np.asarray(self.birth_default, dtype=bool)
        self.gender = np.asarray(self.gender, dtype=np.int8)
        self.active = np.asarray(self.active, dtype=bool)
        self.release_year = np.asarray(self.release_year, dtype=np.int32)
        self.owner = np.asarray(self.owner, dtype=np.int32)
        self.favorite = np.asarray(self.favorite, dtype=bool)
        self.pl_indptr = np.asarray(self.pl_indptr, dtype=np.int64)
        self.pl_tracks = np.asarray(self.pl_tracks, dtype=np.int32)
        self.tag_indptr = np.asarray(self.tag_indptr, dtype=np.int64)
        self.tag_codes = np.asarray(self.tag_codes, dtype=np.int16)
        self.validate()

    # ---- sizes -------------------------------------------------------------

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_tracks(self) -> int:
        return len(self.track_ids)

    @property
    def n_playlists(self) -> int:
        return len(self.playlist_ids)

    # ---- validation --------------------------------------------------------

    def validate(self) -> None:
        nu, nt, npl = self.n_users, self.n_tracks, self.n_playlists
        for name, arr, n in (
            ("birth_year", self.birth_year, nu),
            ("birth_default", self.birth_default, nu),
            ("gender", self.gender, nu),
            ("active", self.active, nu),
            ("release_year", self.release_year, nt),
            ("owner", self.owner, npl),
            ("favorite", self.favorite, npl),
        ):
            if arr.shape != (n,):
                raise ValidationError(f"{name} has shape {arr.shape}, expected ({n},)")
        if len(self.province) != nu or len(self.city) != nu or len(self.album_id) != nt:
            raise ValidationError("region/album columns do not match table sizes")
        if self.pl_indptr.shape != (npl + 1,) or self.tag_indptr.shape != (npl + 1,):
            raise ValidationError("playlist CSR pointers do not match playlist count")
        if len(set(self.user_ids)) != nu:
            raise ValidationError("user_id values are not unique")
        if len(set(self.track_ids)) != nt:
            raise ValidationError("track_id values are not unique")
        if len(set(self.playlist_ids)) != npl:
            raise ValidationError("playlist_id values are not unique")
        known = self.birth_year != 0
        bad = known & ((self.birth_year < MIN_BIRTH_YEAR) | (self.birth_year > self.reference_year))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"user {self.user_ids[i]!r} has birth_year {int(self.birth_year[i])} outside "
                f"[{MIN_BIRTH_YEAR}, {self.reference_year}]"
            )
        if np.any((self.gender < 0) | (self.gender > 2)):
            raise ValidationError("gender code out of range")
        if npl:
            if self.owner.min() < 0 or self.owner.max() >= nu:
                raise ValidationError("playlist owner does not resolve to a user")
        if self.pl_tracks.size and (self.pl_tracks.min() < 0 or self.pl_tracks.max() >= nt):
            raise ValidationError("playlist track does not resolve to a track")
        if self.tag_codes.size and (
            self.tag_codes.min() < 0 or self.tag_codes.max() >= self.tag_schema.n_tags
        ):
            raise ValidationError("tag code outside the tag schema")
        n_tags = np.diff(self.tag_indptr)
        if np.any(n_tags[self.favorite] > 0):
            i = int(np.flatnonzero(self.favorite & (n_tags > 0))[0])
            raise ValidationError(f"favorite playlist {self.playlist_ids[i]!r} carries tags")
        if np.any(n_tags > MAX_PLAYLIST_TAGS):
            i = int(np.flatnonzero(n_tags > MAX_PLAYLIST_TAGS)[0])
            raise ValidationError(f"playlist {self.playlist_ids[i]!r} has more than 3 tags")
        fav_owners = self.owner[self.favorite]
        if fav_owners.size != np.unique(fav_owners).size:
            counts = np.bincount(fav_owners, minlength=nu)
            i = int(np.flatnonzero(counts > 1)[0])
            raise ValidationError(f"user {self.user_ids[i]!r} owns more than one favorite playlist")

    # ---- lookups -----------------------------------------------------------

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.user_ids)}

    @cached_property
    def track_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.track_ids)}

    @cached_property
    def fp_of_user(self) -> np.ndarray:
        """Playlist index of each user's favorite playlist, -1 when absent."""
        out = np.full(self.n_users, -1, dtype=np.int64)
        fav = np.flatnonzero(self.favorite)
        out[self.owner[fav]] = fav
        return out

    def ages(self) -> np.ndarray:
        """Age in whole years at the reference year; -1 where birth year is absent."""
        return np.where(self.birth_year != 0, self.reference_year - self.birth_year, -1)

    def playlist_tracks(self, p: int) -> np.ndarray:
        return self.pl_tracks[self.pl_indptr[p]:self.pl_indptr[p + 1]]

    def playlist_tags(self, p: int) -> np.ndarray:
        return self.tag_codes[self.tag_indptr[p]:self.tag_indptr[p + 1]]

    def fp_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-user favorite-playlist tracks, deduplicated and sorted (CSR over users)."""
        lengths = np.zeros(self.n_users, dtype=np.int64)
        fav = np.flatnonzero(self.favorite)
        lengths[self.owner[fav]] = np.diff(self.pl_indptr)[fav]
        indptr = np.zeros(self.n_users + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        order = np.argsort(self.owner[fav], kind="stable")
        fav = fav[order]
        if fav.size:
            starts, ends = self.pl_indptr[fav], self.pl_indptr[fav + 1]
            idx = concat_ranges(starts, ends)
            tracks = self.pl_tracks[idx]
        else:
            tracks = np.zeros(0, dtype=np.int32)
        return kernels.active().dedupe_rows(indptr, tracks)

    def fp_lengths(self) -> np.ndarray:
        """Distinct favorite-playlist length per user (0 when no FP)."""
        return np.diff(self.fp_csr()[0])

    # ---- record views ------------------------------------------------------

    def user(self, i: int) -> UserRecord:
        by = int(self.birth_year[i])
        return UserRecord(
            user_id=self.user_ids[i],
            birth_year=by or None,
            gender=GENDERS[int(self.gender[i])],
            province=self.province[i],
            city=self.city[i],
            active=bool(self.active[i]),
            birth_default=bool(self.birth_default[i]),
        )

    def track(self, i: int) -> TrackRecord:
        ry = int(self.release_year[i])
        return TrackRecord(self.track_ids[i], ry or None, self.album_id[i])

    def playlist(self, p: int) -> Playlist:
        schema = self.tag_schema
        return Playlist(
            playlist_id=self.playlist_ids[p],
            owner=self.user_ids[int(self.owner[p])],
            kind=FAVORITE if self.favorite[p] else GENERAL,
            track_ids=tuple(self.track_ids[t] for t in self.playlist_tracks(p)),
            tags=tuple(schema.ref(int(c)) for c in self.playlist_tags(p)),
        )

    def users(self) -> Iterator[UserRecord]:
        return (self.user(i) for i in range(self.n_users))

    def tracks(self) -> Iterator[TrackRecord]:
        return (self.track(i) for i in range(self.n_tracks))

    def playlists(self) -> Iterator[Playlist]:
        return (self.playlist(p) for p in range(self.n_playlists))

    # ---- construction ------------------------------------------------------

    @classmethod
    def from_records(
        cls,
        users: Iterable[UserRecord],
        tracks: Iterable[TrackRecord],
        playlists: Iterable[Playlist],
        tag_schema: TagSchema | None = None,
        reference_year: int = DEFAULT_REFERENCE_YEAR,
    ) -> "Dataset":
        schema = tag_schema or TagSchema.default()
        users = list(users)
        tracks = list(tracks)
        uidx = {u.user_id: i for i, u in enumerate(users)}
        tidx = {t.track_id: i for i, t in enumerate(tracks)}
        if len(uidx) != len(users):
            raise ValidationError("user_id values are not unique")
        if len(tidx) != len(tracks):
            raise ValidationError("track_id values are not unique")
        pids, owner, fav, pl_ptr, pl_tracks, tag_ptr, tag_codes = [], [], [], [0], [], [0], []
        for pl in playlists:
            if pl.kind not in (FAVORITE, GENERAL):
                raise ValidationError(f"playlist {pl.playlist_id!r} has unknown kind {pl.kind!r}")
            try:
                owner.append(uidx[pl.owner])
            except KeyError:
                raise ValidationError(
                    f"playlist {pl.playlist_id!r} owner {pl.owner!r} does not resolve"
                ) from None
            for t in pl.track_ids:
                try:
                    pl_tracks.append(tidx[t])
                except KeyError:
                    raise ValidationError(
                        f"playlist {pl.playlist_id!r} track {t!r} does not resolve"
                    ) from None
            tag_codes.extend(schema.index(ref) for ref in pl.tags)
            pids.append(pl.playlist_id)
            fav.append(pl.kind == FAVORITE)
            pl_ptr.append(len(pl_tracks))
            tag_ptr.append(len(tag_codes))
        for u in users:
            if u.gender not in GENDER_CODES:
                raise ValidationError(f"user {u.user_id!r} has unknown gender {u.gender!r}")
        return cls(
            user_ids=[u.user_id for u in users],
            birth_year=[u.birth_year or 0 for u in users],
            birth_default=[u.birth_default for u in users],
            gender=[GENDER_CODES[u.gender] for u in users],
            province=[u.province for u in users],
            city=[u.city for u in users],
            active=[u.active for u in users],
            track_ids=[t.track_id for t in tracks],
            release_year=[t.release_year or 0 for t in tracks],
            album_id=[t.album_id for t in tracks],
            playlist_ids=pids,
            owner=owner,
            favorite=fav,
            pl_indptr=pl_ptr,
            pl_tracks=pl_tracks,
            tag_indptr=tag_ptr,
            tag_codes=tag_codes,
            tag_schema=schema,
            reference_year=reference_year,
        )

    def subset(self, user_mask: np.ndarray) -> "Dataset":
        """Keep the masked users and their playlists, in their original order.

        Tracks no retained playlist references are dropped.
        """
        user_mask = np.asarray(user_mask, dtype=bool)
        keep_pl = user_mask[self.owner]
        return self._select(user_mask, keep_pl, first_seen=False)

    def canonical(self) -> "Dataset":
        """Relabel users and tracks in order of first appearance across playlists.

        This is the order a loader produces when reading the canonical writer's
        output, so ``canonical()`` of a dataset equals its file round trip.
        """
        return self._select(np.ones(self.n_users, bool), np.ones(self.n_playlists, bool),
                            first_seen=True)

    def _select(self, user_mask: np.ndarray, keep_pl: np.ndarray, first_seen: bool) -> "Dataset":
        pls = np.flatnonzero(keep_pl)
        owners = self.owner[pls]
        if first_seen:
            # order of first appearance as playlist owner; owners of nothing vanish
            _, first = np.unique(owners, return_index=True)
            user_order = owners[np.sort(first)]
            user_order = user_order[user_mask[user_order]]
        else:
            user_order = np.flatnonzero(user_mask)
        new_uid = np.full(self.n_users, -1, dtype=np.int64)
        new_uid[user_order] = np.arange(user_order.size)

        starts, ends = self.pl_indptr[pls], self.pl_indptr[pls + 1]
        tr = self.pl_tracks[concat_ranges(starts, ends)]
        if first_seen:
            _, tfirst = np.unique(tr, return_index=True)
            track_order = tr[np.sort(tfirst)]
        else:
            track_order = np.unique(tr)
        new_tid = np.full(self.n_tracks, -1, dtype=np.int64)
        new_tid[track_order] = np.arange(track_order.size)

        pl_ptr = np.zeros(pls.size + 1, dtype=np.int64)
        np.cumsum(ends - starts, out=pl_ptr[1:])
        tstarts, tends = self.tag_indptr[pls], self.tag_indptr[pls + 1]
        tag_ptr = np.zeros(pls.size + 1, dtype=np.int64)
        np.cumsum(tends - tstarts, out=tag_ptr[1:])
        uo = user_order.tolist()
        to = track_order.tolist()
        return Dataset(
            user_ids=[self.user_ids[i] for i in uo],
            birth_year=self.birth_year[user_order],
            birth_default=self.birth_default[user_order],
            gender=self.gender[user_order],
            province=[self.province[i] for i in uo],
            city=[self.city[i] for i in uo],
            active=self.active[user_order],
            track_ids=[self.track_ids[i] for i in to],
            release_year=self.release_year[track_order],
            album_id=[self.album_id[i] for i in to],
            playlist_ids=[self.playlist_ids[p] for p in pls.tolist()],
            owner=new_uid[owners],
            favorite=self.favorite[pls],
            pl_indptr=pl_ptr,
            pl_tracks=new_tid[tr],
            tag_indptr=tag_ptr,
            tag_codes=self.tag_codes[concat_ranges(tstarts, tends)],
            tag_schema=self.tag_schema,
            reference_year=self.reference_year,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        scalar = (
            "user_ids", "province", "city", "track_ids", "album_id", "playlist_ids",
            "tag_schema", "reference_year",
        )
        arrays = (
            "birth_year", "birth_default", "gender", "active", "release_year", "owner",
            "favorite", "pl_indptr", "pl_tracks", "tag_indptr", "tag_codes",
        )
        return all(getattr(self, a) == getattr(other, a) for a in scalar) and all(
            np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays
        )

    __hash__ = None


def concat_ranges(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Concatenate ``arange(s, e)`` for each pair, vectorised."""
    lengths = (ends - starts).astype(np.int64)
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    shift = starts.astype(np.int64) - np.concatenate([[0], np.cumsum(lengths)[:-1]])
    offsets = np.repeat(shift, lengths)
    return offsets + np.arange(total, dtype=np.int64)


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def filter_demographics(
    dataset: Dataset,
    min_age: int = 12,
    max_age: int = 40,
    exclude_default_birthdate: bool = True,
) -> Dataset:
    """Keep users whose age lies in ``[min_age, max_age]``.

    Users without a birth year have no age and are dropped. With
    ``exclude_default_birthdate`` users flagged as carrying the platform's
    default birthdate are dropped too; a plain 1990 birth year is not enough.
    """
    if min_age > max_age:
        raise ValueError(f"min_age {min_age} exceeds max_age {max_age}")
    ages = dataset.ages()
    keep = (dataset.birth_year != 0) & (ages >= min_age) & (ages <= max_age)
    if exclude_default_birthdate:
        keep &= ~dataset.birth_default
    return dataset.subset(keep)


@dataclass(frozen=True)
class CohortRow:
    age: int
    gender: str
    n_users: int
    n_with_fp: int
    mean_fp_length: float


@dataclass(frozen=True)
class CohortSummary:
    rows: tuple[CohortRow, ...]

    def __len__(self):
        return len(self.rows)

    def sex_ratio(self) -> dict[int, float]:
        """Male-to-female user ratio per age (ages lacking females are skipped)."""
        counts: dict[int, dict[str, int]] = {}
        for r in self.rows:
            counts.setdefault(r.age, {})[r.gender] = r.n_users
        return {
            age: c.get("male", 0) / c["female"]
            for age, c in sorted(counts.items())
            if c.get("female", 0) > 0
        }

    def histogram(self, gender: str | None = None) -> dict[int, int]:
        out: dict[int, int] = {}
        for r in self.rows:
            if gender is None or r.gender == gender:
                out[r.age] = out.get(r.age, 0) + r.n_users
        return out


def cohort_summary(dataset: Dataset) -> CohortSummary:
    """User counts and mean FP length per (age, gender) cell, users of unknown age omitted."""
    ages = dataset.ages()
    known = ages >= 0
    lengths = dataset.fp_lengths()
    has_fp = dataset.fp_of_user >= 0
    rows = []
    if known.any():
        keys = ages[known].astype(np.int64) * 3 + dataset.gender[known]
        for key in np.unique(keys):
            sel = np.zeros(dataset.n_users, bool)
            sel[np.flatnonzero(known)[keys == key]] = True
            fp = sel & has_fp
            n_fp = int(fp.sum())
            rows.append(
                CohortRow(
                    age=int(key // 3),
                    gender=GENDERS[int(key % 3)],
                    n_users=int(sel.sum()),
                    n_with_fp=n_fp,
                    mean_fp_length=float(lengths[fp].mean()) if n_fp else float("nan"),
                )
            )
    return CohortSummary(tuple(rows))
