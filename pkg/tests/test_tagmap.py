import numpy as np
import pytest

from fpnet.graph import build_graph
from fpnet.model import TagSchema, ValidationError
from fpnet.tagmap import map_tags_to_group, map_tags_to_tracks, map_tags_to_users

from conftest import make_dataset

LANG = TagSchema.default().tags("Language")


def test_language_counts_normalize_exactly():
    # five playlists say Chinese, two EU&US, two Japanese, one Korean
    counts = [5, 2, 2, 1, 0, 0]
    general = [("o", ["x"], [f"Language:{LANG[k]}"])
               for k, n in enumerate(counts) for _ in range(n)]
    ds = make_dataset({"u": ["x"]}, general=general)
    v = map_tags_to_tracks(ds)["x"].vector("Language")
    assert v.tolist() == [0.5, 0.2, 0.2, 0.1, 0.0, 0.0]


def test_untagged_track_zero():
    ds = make_dataset({"u": ["x", "y"]}, general=[("o", ["x"], ["Genre:Pop"])])
    tags = map_tags_to_tracks(ds)
    assert tags["y"].is_zero()
    assert tags.coverage == 0.5


def test_single_tagged_playlist_one_hot():
    ds = make_dataset({"u": ["x"]}, general=[("o", ["x", "x"], ["Genre:Pop"])])
    genre = map_tags_to_tracks(ds)["x"].vector("Genre")
    assert genre[0] == 1.0 and genre.sum() == 1.0


def test_user_mixes_two_one_hot_tracks():
    ds = make_dataset({"u": ["p", "r"]},
                      general=[("o", ["p"], ["Genre:Pop"]), ("o", ["r"], ["Genre:Rock"])])
    users = map_tags_to_users(ds, map_tags_to_tracks(ds))
    v = users["u"].vector("Genre")
    assert v[0] == 0.5 and v[1] == 0.5 and v.sum() == 1.0
    assert users["o"].is_zero()


def test_user_with_untagged_fp_is_zero():
    ds = make_dataset({"u": ["a"]}, general=[("o", ["b"], ["Genre:Pop"])])
    assert map_tags_to_users(ds, map_tags_to_tracks(ds))["u"].is_zero()


def test_shared_track_vector_is_fixed_point(rng):
    tags = ["Genre:Pop", "Emotion:Sad", "Language:Korean"]
    tracks = [f"t{i}" for i in range(30)]
    general = [("o", tracks, tags)]
    fps = {f"u{i}": list(rng.choice(tracks, 5, replace=False)) for i in range(50)}
    ds = make_dataset(fps, general=general)
    tt = map_tags_to_tracks(ds)
    ut = map_tags_to_users(ds, tt)
    ref = tt["t0"].values
    for u in fps:
        np.testing.assert_allclose(ut[u].values, ref, atol=1e-15)


def test_group_rules():
    ds = make_dataset({"a": ["x"], "b": ["y"]},
                      general=[("o", ["x"], ["Language:Chinese"]),
                               ("o", ["y"], ["Language:EU&US"])])
    ut = map_tags_to_users(ds, map_tags_to_tracks(ds))
    assert map_tags_to_group(ut, ["a"]) == ut["a"]
    g = map_tags_to_group(ut, ["a", "b"]).vector("Language")
    assert g.tolist() == [0.5, 0.5, 0, 0, 0, 0]
    with pytest.raises(ValidationError):
        map_tags_to_group(ut, [])


def test_population_is_count_weighted_mean_of_split(small_synth):
    ds, _, _ = small_synth
    ut = map_tags_to_users(ds, map_tags_to_tracks(ds), build_graph(ds))
    male = np.flatnonzero(ds.gender == 1)
    female = np.flatnonzero(ds.gender == 2)
    schema = ut.schema
    for c in schema.class_names:
        sl = schema.slice(c)
        pop = map_tags_to_group(ut, range(ds.n_users)).values[sl]
        sm = ut.values[male, sl].sum(axis=0)
        sf = ut.values[female, sl].sum(axis=0)
        # sums of normalised member vectors mix in proportion to member counts
        mix = (sm + sf) / (sm + sf).sum()
        np.testing.assert_allclose(pop, mix, atol=1e-12)


def test_normalised_vectors_sum_to_one(small_synth):
    ds, _, _ = small_synth
    ut = map_tags_to_users(ds, map_tags_to_tracks(ds))
    for c in ut.schema.class_names:
        s = ut.class_block(c).sum(axis=1)
        assert np.all((np.abs(s - 1) < 1e-9) | (s == 0))


def test_playlist_order_independence():
    general = [("o", ["x", "y"], ["Genre:Pop"]), ("o", ["y"], ["Genre:Rock", "Emotion:Sad"])]
    a = map_tags_to_tracks(make_dataset({"u": ["x", "y"]}, general=general))
    b = map_tags_to_tracks(make_dataset({"u": ["y", "x"]}, general=general[::-1]))
    for t in ("x", "y"):
        assert a[t] == b[t]
