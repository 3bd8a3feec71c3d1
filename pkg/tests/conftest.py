import sys

import numpy as np
import pytest

from fpnet import synth
from fpnet.model import Dataset, Playlist, TrackRecord, UserRecord


def make_dataset(fps, general=(), users=None, years=None, reference_year=2016):
    """Dataset from ``{user: [tracks]}`` FPs and ``(owner, tracks, tags)`` general lists."""
    users = users or {}
    years = years or {}
    uids = list(dict.fromkeys(list(fps) + [g[0] for g in general] + list(users)))
    tids = list(dict.fromkeys(
        [t for fp in fps.values() for t in fp] + [t for g in general for t in g[1]]))
    urecs = [UserRecord(u, **users.get(u, {})) for u in uids]
    trecs = [TrackRecord(t, years.get(t)) for t in tids]
    pls = [Playlist(f"fp-{u}", u, "favorite", tuple(fp)) for u, fp in fps.items()]
    pls += [Playlist(f"gp{i}", o, "general", tuple(ts), tuple(tags))
            for i, (o, ts, tags) in enumerate(general)]
    return Dataset.from_records(urecs, trecs, pls, reference_year=reference_year)


@pytest.fixture
def fig2():
    """Two users: one FP of {a, b, c}, one of {a, d}."""
    return make_dataset({"u1": ["a", "b", "c"], "u2": ["a", "d"]})


SMALL_SYNTH = synth.SynthConfig(n_users=3000, n_tracks=1500, fp_length_mean=20.0,
                                n_provinces=6, cities_per_province=3)


@pytest.fixture(scope="session")
def small_synth():
    return synth.generate(SMALL_SYNTH, seed=7)


@pytest.fixture(scope="session")
def small_synth_files(tmp_path_factory, small_synth):
    ds, truth, econ = small_synth
    out = tmp_path_factory.mktemp("synth")
    synth.write_synth(out, ds, truth, econ)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
