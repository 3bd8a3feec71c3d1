import numpy as np
import pytest
from scipy import stats

from fpnet import fit, synth
from fpnet.graph import build_graph
from fpnet.ingest import EconomicRow, EconomicTable
from fpnet.model import Dataset

from conftest import make_dataset
from fpnet.tagmap import map_tags_to_tracks, map_tags_to_users

TRUE_DECAY = (1.97, 0.34, 0.023)
TRUE_BIG = (0.43, 12.88, 0.87, 13.18, 7.26)


# ---- decay -----------------------------------------------------------------


def test_decay_exact_recovery():
    x = np.arange(1, 61, dtype=float)
    f = fit.fit_power_exp_tail(x, fit.power_exp_tail(x, *TRUE_DECAY))
    np.testing.assert_allclose((f.a, f.b, f.c), TRUE_DECAY, rtol=0, atol=1e-6)
    assert f.residual_norm < 1e-10
    assert f.converged and f.n_points == 60


def test_decay_pure_power_law():
    x = np.arange(1, 40, dtype=float)
    f = fit.fit_power_exp_tail(x, 3.0 * x ** -0.7)
    assert abs(f.c) < 1e-8
    assert f.b == pytest.approx(0.7, abs=1e-10)


def test_decay_drops_non_positive():
    x = np.arange(0, 12, dtype=float)
    y = fit.power_exp_tail(np.maximum(x, 1), *TRUE_DECAY)
    y[3] = 0.0
    f = fit.fit_power_exp_tail(x, y)
    assert f.n_dropped == 2 and f.n_points == 10


def test_decay_errors():
    with pytest.raises(fit.FitError):
        fit.fit_power_exp_tail([1, 2, 3], [1, 1, 1])
    with pytest.raises(fit.FitError, match="rank"):
        fit.fit_power_exp_tail([2, 2, 2, 2], [1, 2, 3, 4])


def test_decay_weighted_exact():
    x = np.arange(1, 30, dtype=float)
    f = fit.fit_power_exp_tail(x, fit.power_exp_tail(x, *TRUE_DECAY), weights=x)
    assert f.weighted
    np.testing.assert_allclose((f.a, f.b, f.c), TRUE_DECAY, atol=1e-9)


def test_decay_noisy_single_seed():
    gen = np.random.default_rng(0)
    x = np.linspace(1, 100, 50)
    y = fit.power_exp_tail(x, *TRUE_DECAY) * (1 + 0.05 * gen.standard_normal(x.size))
    f = fit.fit_power_exp_tail(x, y)
    np.testing.assert_allclose((f.a, f.b, f.c), TRUE_DECAY, rtol=0.1)


# ---- Bigaussian ------------------------------------------------------------


def test_bigaussian_exact_recovery():
    x = np.arange(-20, 41, dtype=float)
    f = fit.fit_bigaussian(x, fit.bigaussian(x, *TRUE_BIG))
    np.testing.assert_allclose(f.params, TRUE_BIG, rtol=0, atol=1e-4)
    assert f.converged


def test_bigaussian_symmetric():
    x = np.linspace(-10, 10, 41)
    f = fit.fit_bigaussian(x, fit.bigaussian(x, 0.1, 1.0, 2.0, 3.0, 3.0))
    assert abs(f.w1 - f.w2) < 1e-3


def test_bigaussian_peak_identity():
    f = fit.BigaussianFit(*TRUE_BIG, residual_norm=0.0, converged=True)
    assert f(f.xc) == TRUE_BIG[0] + TRUE_BIG[2]


def test_bigaussian_init_rules():
    x = np.arange(-20, 41, dtype=float)
    y = fit.bigaussian(x, *TRUE_BIG)
    y0, xc, H, w1, w2 = fit.bigaussian_init(x, y)
    assert y0 == y.min() and xc == 13.0 and H == pytest.approx(y.max() - y.min())
    assert w1 == w2 > 0


def test_bigaussian_iteration_cap():
    x = np.arange(-20, 41, dtype=float)
    y = fit.bigaussian(x, *TRUE_BIG) + 0.05 * np.random.default_rng(1).standard_normal(x.size)
    f = fit.fit_bigaussian(x, y, max_nfev=2)
    assert not f.converged


def test_bigaussian_needs_points():
    with pytest.raises(fit.FitError):
        fit.fit_bigaussian([1, 2, 3], [0, 1, 0])


# ---- Pearson ---------------------------------------------------------------


def test_pearson_perfect():
    x = np.arange(10.0)
    assert fit.pearson(x, 2 * x + 1).r == 1.0
    assert fit.pearson(x, -x).r == -1.0


def test_pearson_reported_pair():
    # p for r = .60 at n = 23 via the t transform
    r, n = 0.60, 23
    t = r * np.sqrt((n - 2) / (1 - r * r))
    p = 2 * stats.t.sf(t, n - 2)
    assert abs(p - 0.0027) / 0.0027 < 0.10
    gen = np.random.default_rng(3)
    x = gen.standard_normal(n)
    e = gen.standard_normal(n)
    # exact r = .60 by orthogonalising the noise against x
    x = x - x.mean()
    e = e - e.mean() - (e @ x) / (x @ x) * x
    y = 0.6 * x / np.linalg.norm(x) + 0.8 * e / np.linalg.norm(e)
    res = fit.pearson(x, y)
    assert res.r == pytest.approx(0.60, abs=1e-12)
    assert res.p == pytest.approx(p, rel=1e-9)
    assert res.p == pytest.approx(stats.pearsonr(x, y).pvalue, rel=1e-9)


def test_pearson_affine_invariance():
    gen = np.random.default_rng(4)
    x, y = gen.standard_normal(30), gen.standard_normal(30)
    r = fit.pearson(x, y).r
    assert fit.pearson(3 * x + 7, y).r == pytest.approx(r, abs=1e-12)
    assert fit.pearson(-2 * x + 1, y).r == pytest.approx(-r, abs=1e-12)


def test_pearson_degenerate():
    assert fit.pearson([1, 1, 1, 1], [1, 2, 3, 4]).reason == "zero variance in xs"
    assert fit.pearson([1, 2, 3, 4], [5, 5, 5, 5]).r is None
    assert fit.pearson([1, 2], [1, 2]).r is None
    with pytest.raises(ValueError):
        fit.pearson([1, 2, 3], [1, 2])


# ---- age modes -------------------------------------------------------------


@pytest.mark.parametrize("means, code", [
    ((1.0, 1.2, 1.5), "//"),
    ((1.0, 1.05, 1.02), "--"),
    ((1.0, 0.8, 0.7), "\\\\"),
    ((1.0, 1.2, 1.0), "/\\"),
    ((1.0, 1.1, 1.21), "--"),
])
def test_classify_age_mode(means, code):
    assert fit.classify_age_mode(means) == code


def test_classify_age_mode_missing_stage():
    assert fit.classify_age_mode((1.0, None, 1.0)) is None


def test_age_stage_means():
    ages = np.arange(12, 41)
    vals = np.where(ages <= 18, 1.0, np.where(ages <= 25, 2.0, 3.0))
    assert fit.age_stage_means(ages, vals) == (1.0, 2.0, 3.0)
    assert fit.age_stage_means(ages[:5], vals[:5])[1] is None


def test_age_modes_user_permutation(small_synth):
    ds, _, _ = small_synth
    rows = fit.age_modes(ds, map_tags_to_users(ds, map_tags_to_tracks(ds)))
    assert len(rows) == 72
    assert all(r.mode is None or len(r.mode) == 2 for r in rows)
    shuffled = Dataset.from_records(list(ds.users())[::-1], ds.tracks(), ds.playlists(),
                                    reference_year=ds.reference_year)
    again = fit.age_modes(shuffled, map_tags_to_users(shuffled, map_tags_to_tracks(shuffled)))
    assert [r.mode for r in rows] == [r.mode for r in again]
    for a, b in zip(rows, again):
        np.testing.assert_allclose(np.array(a.stage_means, float), np.array(b.stage_means, float),
                                   rtol=1e-12, equal_nan=True)


# ---- regional analysis -----------------------------------------------------


@pytest.fixture(scope="module")
def regional():
    cfg = synth.SynthConfig(n_users=20000, n_tracks=5000, fp_length_mean=20.0)
    ds, _, econ = synth.generate(cfg, seed=1)
    g = build_graph(ds)
    ut = map_tags_to_users(ds, map_tags_to_tracks(ds), g)
    return ds, econ, ut, g


def test_planted_income_tag_ranks_first(regional):
    ds, econ, ut, g = regional
    ra = fit.regional_analysis(ds, econ, ut, g, indicator=synth.INCOME_INDICATOR)
    assert len(ra.regions) == 23
    for c in ut.schema.class_names:
        assert ra.ranked(c)[0].tag == ut.schema.tags(c)[0]


def test_planted_kld_income_relation_negative(regional):
    ds, econ, ut, g = regional
    ra = fit.regional_analysis(ds, econ, ut, g, indicator=synth.INCOME_INDICATOR)
    rows = [c for c in ra.correlations if c.metric == "KLD_T" and c.subgroup == "all"]
    assert len(rows) == 5
    assert all(c.r < 0 for c in rows)
    assert len(ra.gender_averages()) == 10


def test_constant_indicator_gives_absent_correlations(regional):
    ds, _, ut, g = regional
    flat = EconomicTable(tuple(EconomicRow(p, "province", "flat", 1.0)
                               for p in sorted({p for p in ds.province if p})))
    ra = fit.regional_analysis(ds, flat, ut, g)
    assert ra.correlations and all(c.r is None for c in ra.correlations)
    assert all(c.reason == "zero variance in xs" for c in ra.correlations)


def test_small_regions_excluded(regional):
    ds, econ, ut, g = regional
    ra = fit.regional_analysis(ds, econ, ut, g, indicator=synth.INCOME_INDICATOR,
                               min_users=10 ** 6)
    assert ra.regions == () and len(ra.excluded_regions) == 23


def test_users_without_region_counted():
    users = {"a": {"province": "P1"}, "b": {"province": "P1"}, "c": {}}
    ds = make_dataset({u: ["x", "y"] for u in users}, users=users)
    g = build_graph(ds)
    ut = map_tags_to_users(ds, map_tags_to_tracks(ds), g)
    econ = EconomicTable((EconomicRow("P1", "province", "gdp", 1.0),))
    ra = fit.regional_analysis(ds, econ, ut, g, min_users=1)
    assert ra.n_unlocated == 1
    assert ra.regions == ("P1",) and ra.n_users.tolist() == [2]
