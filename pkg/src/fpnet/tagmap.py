"""Tag propagation: general playlists -> tracks -> users' FPs -> groups."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .graph import BipartiteGraph, build_graph
from .model import Dataset, TagSchema, ValidationError, concat_ranges


@dataclass(frozen=True, eq=False)
class TagVectorSet:
    """One strength vector per tag class, stored as a flat vector over the schema."""

    schema: TagSchema
    values: np.ndarray

    def vector(self, class_name: str) -> np.ndarray:
        return self.values[self.schema.slice(class_name)]

    def is_zero(self, class_name: str | None = None) -> bool:
        v = self.values if class_name is None else self.vector(class_name)
        return not np.any(v)

    def primary_tags(self, class_name: str, k: int = 2) -> list[str]:
        """Top-``k`` tags by strength; ties go to schema order, zero strengths skipped."""
        v = self.vector(class_name)
        order = np.argsort(-v, kind="stable")[:k]
        tags = self.schema.tags(class_name)
        return [tags[i] for i in order if v[i] > 0]

    def as_dict(self) -> dict[str, list[float]]:
        return {c: self.vector(c).tolist() for c in self.schema.class_names}

    def __eq__(self, other):
        return (isinstance(other, TagVectorSet) and self.schema == other.schema
                and np.array_equal(self.values, other.values))


@dataclass(eq=False)
class TagMatrix:
    """Vector-sets for a collection of entities, one row each."""

    ids: tuple[str, ...]
    values: np.ndarray
    schema: TagSchema

    @cached_property
    def _index(self):
        return {k: i for i, k in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, key: str) -> TagVectorSet:
        return self.row(self._index[key])

    def row(self, i: int) -> TagVectorSet:
        return TagVectorSet(self.schema, self.values[i])

    def index_of(self, keys: Iterable) -> np.ndarray:
        return np.fromiter(
            (k if isinstance(k, (int, np.integer)) else self._index[k] for k in keys),
            dtype=np.int64)

    def class_block(self, class_name: str) -> np.ndarray:
        return self.values[:, self.schema.slice(class_name)]

    @property
    def coverage(self) -> float:
        """Fraction of entities carrying at least one non-zero class vector."""
        if not len(self.ids):
            return 0.0
        return float(np.mean(self.values.any(axis=1)))


def normalize_classes(values: np.ndarray, schema: TagSchema) -> np.ndarray:
    """Normalise each non-zero class block of every row to sum 1, in place."""
    for c in schema.class_names:
        block = values[..., schema.slice(c)]
        s = block.sum(axis=-1, keepdims=True)
        np.divide(block, s, out=block, where=s > 0)
    return values


def _remap_schema(dataset: Dataset, schema: TagSchema | None) -> np.ndarray:
    codes = dataset.tag_codes.astype(np.int64)
    if schema is None or schema == dataset.tag_schema:
        return codes
    lut = np.empty(dataset.tag_schema.n_tags, dtype=np.int64)
    for i in range(dataset.tag_schema.n_tags):
        lut[i] = schema.index(dataset.tag_schema.ref(i))
    return lut[codes] if codes.size else codes


def map_tags_to_tracks(dataset: Dataset, schema: TagSchema | None = None) -> TagMatrix:
    """Per-track tag strengths from the tagged general playlists containing each track.

    Every (playlist, tag) incidence adds one unit; a track listed twice in one
    playlist still counts once for it.
    """
    schema = schema or dataset.tag_schema
    codes = _remap_schema(dataset, schema)
    n_tags = np.diff(dataset.tag_indptr)
    pls = np.flatnonzero(~dataset.favorite & (n_tags > 0))
    k = kernels.active()
    # tag incidence per tagged playlist
    tag_rows = np.zeros((pls.size, schema.n_tags))
    for j, p in enumerate(pls.tolist()):
        tag_rows[j, codes[dataset.tag_indptr[p]:dataset.tag_indptr[p + 1]]] = 1.0
    starts, ends = dataset.pl_indptr[pls], dataset.pl_indptr[pls + 1]
    ptr = np.zeros(pls.size + 1, dtype=np.int64)
    np.cumsum(ends - starts, out=ptr[1:])
    flat = dataset.pl_tracks[concat_ranges(starts, ends)].astype(np.int64)
    ptr, tracks = k.dedupe_rows(ptr, flat)
    counts = k.scatter_rows(ptr, tracks, tag_rows, dataset.n_tracks)
    return TagMatrix(dataset.track_ids, normalize_classes(counts, schema), schema)


def map_tags_to_users(
    dataset: Dataset,
    track_tags: TagMatrix,
    graph: BipartiteGraph | None = None,
) -> TagMatrix:
    """Sum the vector-sets of each user's (distinct) FP tracks, then normalise per class."""
    graph = graph or build_graph(dataset)
    src = track_tags.values[graph.track_index]
    ones = np.ones(graph.n_edges)
    per_node = kernels.active().gather_rows(graph.indptr, graph.tracks, ones, src)
    out = np.zeros((dataset.n_users, track_tags.schema.n_tags))
    out[graph.user_index] = per_node
    return TagMatrix(dataset.user_ids, normalize_classes(out, track_tags.schema), track_tags.schema)


def map_tags_to_group(user_tags: TagMatrix, member_ids: Sequence) -> TagVectorSet:
    """Unweighted sum of member vector-sets, normalised per class."""
    idx = user_tags.index_of(member_ids)
    if idx.size == 0:
        raise ValidationError("group has no members")
    total = user_tags.values[idx].sum(axis=0)
    return TagVectorSet(user_tags.schema, normalize_classes(total, user_tags.schema))


def group_tag_matrix(user_tags: TagMatrix, groups: dict) -> TagMatrix:
    """Vector-set per group for ``{key: member indices}``; empty groups get zero rows."""
    keys = list(groups)
    out = np.zeros((len(keys), user_tags.schema.n_tags))
    for i, key in enumerate(keys):
        idx = np.asarray(groups[key], dtype=np.int64)
        if idx.size:
            out[i] = user_tags.values[idx].sum(axis=0)
    return TagMatrix(tuple(str(k) for k in keys), normalize_classes(out, user_tags.schema),
                     user_tags.schema)
