"""The numba and numpy kernel sets must agree on every input."""

import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fpnet import _accel, kernels

NB, NP = kernels.NUMBA, kernels.NUMPY
pytestmark = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")


@st.composite
def csr(draw, max_rows=12, max_cols=15):
    n = draw(st.integers(1, max_rows))
    m = draw(st.integers(1, max_cols))
    lengths = draw(st.lists(st.integers(0, 6), min_size=n, max_size=n))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    cols = draw(st.lists(st.integers(0, m - 1), min_size=int(indptr[-1]),
                         max_size=int(indptr[-1])))
    indices = np.asarray(cols, dtype=np.int64)
    w = draw(st.lists(st.floats(0.01, 5.0), min_size=indices.size, max_size=indices.size))
    return indptr, indices, np.asarray(w, dtype=np.float64), m


@st.composite
def sym_graph(draw, max_nodes=14):
    n = draw(st.integers(2, max_nodes))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1),
                                    st.floats(0.05, 3.0)), min_size=1, max_size=40))
    r, c, w = (np.array(x) for x in zip(*edges))
    a = sp.coo_matrix((w, (r, c)), shape=(n, n)).tocsr()
    a = (a + a.T).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a.indptr.astype(np.int64), a.indices.astype(np.int64), a.data.astype(np.float64), n


@settings(max_examples=200, deadline=None)
@given(csr())
def test_dedupe_rows(data):
    indptr, indices, _, _ = data
    p1, i1 = NB.dedupe_rows(indptr, indices)
    p2, i2 = NP.dedupe_rows(indptr, indices)
    assert np.array_equal(p1, p2) and np.array_equal(i1, i2)
    for r in range(indptr.size - 1):
        assert i1[p1[r]:p1[r + 1]].tolist() == sorted(set(indices[indptr[r]:indptr[r + 1]]))


@settings(max_examples=200, deadline=None)
@given(csr(), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_gather_and_scatter(data, k, seed):
    indptr, indices, w, m = data
    gen = np.random.default_rng(seed)
    src = gen.random((m, k))
    np.testing.assert_allclose(NB.gather_rows(indptr, indices, w, src),
                               NP.gather_rows(indptr, indices, w, src), rtol=1e-12, atol=1e-14)
    rows = gen.random((indptr.size - 1, k))
    np.testing.assert_allclose(NB.scatter_rows(indptr, indices, rows, m),
                               NP.scatter_rows(indptr, indices, rows, m), rtol=1e-12, atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(sym_graph(), st.integers(0, 2 ** 31))
def test_louvain_sweep(data, seed):
    indptr, indices, w, n = data
    gen = np.random.default_rng(seed)
    k = np.asarray(sp.csr_matrix((w, indices, indptr), shape=(n, n)).sum(axis=1)).ravel()
    m2 = float(w.sum())
    order = gen.permutation(n).astype(np.int64)
    comm0 = gen.integers(0, n, n).astype(np.int64)
    tot0 = np.bincount(comm0, weights=k, minlength=n)
    results = []
    for ks in (NB, NP):
        comm, tot = comm0.copy(), tot0.copy()
        moved = ks.louvain_sweep(order, indptr, indices, w, k, comm, tot, m2)
        results.append((moved, comm, tot))
    assert results[0][0] == results[1][0]
    assert np.array_equal(results[0][1], results[1][1])
    np.testing.assert_allclose(results[0][2], results[1][2], rtol=1e-12, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(sym_graph(), st.integers(0, 2 ** 31))
def test_aggregate_and_modularity(data, seed):
    indptr, indices, w, n = data
    gen = np.random.default_rng(seed)
    n_comm = int(gen.integers(1, n + 1))
    comm = gen.integers(0, n_comm, n).astype(np.int64)
    a = NB.aggregate(indptr, indices, w, comm, n_comm)
    b = NP.aggregate(indptr, indices, w, comm, n_comm)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    np.testing.assert_allclose(a[2], b[2], rtol=1e-12)
    # aggregation preserves total weight and modularity
    assert a[2].sum() == pytest.approx(w.sum(), rel=1e-12)
    q = NB.modularity(indptr, indices, w, comm, n_comm)
    assert q == pytest.approx(NP.modularity(indptr, indices, w, comm, n_comm), abs=1e-12)
    q_agg = NP.modularity(b[0], b[1], b[2], np.arange(n_comm), n_comm)
    assert q_agg == pytest.approx(q, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(csr(), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_label_counts(data, n_labels, seed):
    indptr, indices, _, m = data
    labels = np.random.default_rng(seed).integers(0, n_labels, m).astype(np.int64)
    a = NB.label_counts(indptr, indices, labels, n_labels)
    b = NP.label_counts(indptr, indices, labels, n_labels)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_env_flag_selects_numpy():
    code = "from fpnet import kernels; print(kernels.active().name)"
    for flag, name in (("1", "numpy"), ("0", "numba")):
        env = {**os.environ, "FPNET_DISABLE_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=False)
        assert out.stdout.strip() == name


def test_benchmark_script_runs():
    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    out = subprocess.run([sys.executable, str(script), "--users", "300", "--tracks", "600",
                          "--fp-length", "10", "--repeat", "1"], capture_output=True,
                         text=True, check=False)
    assert out.returncode == 0, out.stderr
    assert "louvain_sweep" in out.stdout and "louvain (full)" in out.stdout
