import numpy as np
import pytest

from sthawkes.catalog import EventCatalog, Region
from sthawkes.hawkes import HawkesParams
from sthawkes.simulate import SimConfig, simulate
from sthawkes.stattests import (_pairs_within, knox_test, st_kfunction)

REG = Region(0.0, 5.0, 0.0, 5.0)
MIN = 1.0 / (24 * 60)


def _poisson_cat(n_target, seed, region=REG, T=30.0):
    rate = n_target / (region.area * T)
    cfg = SimConfig(params=HawkesParams(1.0, 0.0, 24.0, 0.1), region=region,
                    T=T, background=rate, seed=seed)
    return simulate(cfg).catalog


def _clustered_cat(seed, theta=0.5, region=REG, T=30.0, rate=2.0):
    params = HawkesParams(1.0, theta, omega=144.0, sigma=0.126)
    cfg = SimConfig(params=params, region=region, T=T, background=rate,
                    seed=seed)
    return simulate(cfg).catalog


# -- pair machinery -----------------------------------------------------------


def test_pair_paths_agree_exactly():
    cat = _poisson_cat(400, seed=1)
    for radius in (0.2, 0.9, 3.0):
        ib, jb = _pairs_within(cat.x, cat.y, radius, method="brute")
        ig, jg = _pairs_within(cat.x, cat.y, radius, method="grid")
        assert np.array_equal(ib, ig)
        assert np.array_equal(jb, jg)


# -- Knox ---------------------------------------------------------------------


def test_knox_hand_fixture_counts():
    # exactly one close-close pair among three events
    cat = EventCatalog([0.0, 0.05, 3.0], [0.0, 0.0, 3.0],
                       [0.0, 5 * MIN, 10.0], Region(-1, 4, -1, 4), T=30.0)
    res = knox_test(cat, s_cut_km=0.1, t_cut_days=10 * MIN, n_perm=99, seed=0)
    assert res.statistic == 1
    assert res.contingency.sum() == 3
    assert res.contingency[0, 0] == 1


def test_knox_clustered_hits_p_floor():
    cat = _clustered_cat(seed=2)
    res = knox_test(cat, s_cut_km=0.134, t_cut_days=11 * MIN,
                    n_perm=999, seed=3)
    assert res.p_value == pytest.approx(1 / 1000)
    assert res.statistic > np.max(res.null_statistics)


def test_knox_poisson_p_values_uniform():
    # p over replicate null catalogs: P(p < 0.1) ~ 0.1
    hits = 0
    for s in range(100):
        cat = _poisson_cat(150, seed=100 + s)
        res = knox_test(cat, s_cut_km=0.5, t_cut_days=1.0, n_perm=199,
                        seed=s)
        if res.p_value < 0.10:
            hits += 1
    assert 2 <= hits <= 18


def test_knox_invariances():
    cat = _poisson_cat(200, seed=5)
    res1 = knox_test(cat, 0.5, 0.5, n_perm=199, seed=9)
    # rigid translation of all locations
    shifted = EventCatalog(cat.x + 1.0, cat.y - 0.5, cat.t,
                           Region(REG.x_min + 1, REG.x_max + 1,
                                  REG.y_min - 0.5, REG.y_max - 0.5),
                           cat.T)
    res2 = knox_test(shifted, 0.5, 0.5, n_perm=199, seed=9)
    assert res1.statistic == res2.statistic
    assert res1.p_value == res2.p_value
    assert np.array_equal(res1.contingency, res2.contingency)


def test_knox_deterministic_given_seed():
    cat = _poisson_cat(150, seed=6)
    a = knox_test(cat, 0.5, 0.5, n_perm=199, seed=4)
    b = knox_test(cat, 0.5, 0.5, n_perm=199, seed=4)
    assert a.p_value == b.p_value
    assert np.array_equal(a.null_statistics, b.null_statistics)


def test_knox_contingency_totals():
    cat = _poisson_cat(120, seed=7)
    res = knox_test(cat, 0.7, 2.0, n_perm=99, seed=0)
    n = len(cat)
    assert res.contingency.sum() == n * (n - 1) // 2
    assert np.all(res.contingency >= 0)
    assert res.p_value >= 1 / 100


def test_knox_validates_inputs():
    cat = _poisson_cat(50, seed=8)
    with pytest.raises(ValueError):
        knox_test(cat, -1.0, 1.0)
    with pytest.raises(ValueError):
        knox_test(cat, 1.0, 1.0, n_perm=10)
    single = EventCatalog([1.0], [1.0], [1.0], REG, T=30.0)
    with pytest.raises(ValueError):
        knox_test(single, 1.0, 1.0)
    coincident = EventCatalog([1.0, 1.0], [1.0, 1.0], [1.0, 2.0], REG, 30.0)
    with pytest.raises(ValueError, match="coincident"):
        knox_test(coincident, 1.0, 1.0)


# -- K-function ---------------------------------------------------------------


def test_kfun_single_pair_step_behavior():
    d0, tau0 = 1.0, 2.0
    cat = EventCatalog([1.0, 1.0 + d0], [1.0, 1.0], [5.0, 5.0 + tau0],
                       REG, T=30.0)
    res = st_kfunction(cat, s_grid=[0.5, d0, 2.0], t_grid=[1.0, tau0, 3.0])
    area_t = REG.area * 30.0
    # below the pair distance/lag: zero; at and beyond: the full value
    assert res.k_st[0, 0] == 0.0
    assert res.k_st[1, 0] == 0.0
    assert res.k_st[0, 1] == 0.0
    assert res.k_st[1, 1] == pytest.approx(area_t)  # 2/(n(n-1)) * |S| T * 1
    assert res.k_st[2, 2] == pytest.approx(area_t)


def test_kfun_saturates_at_area_times_window():
    cat = _poisson_cat(100, seed=11)
    res = st_kfunction(cat, s_grid=[1.0, 50.0], t_grid=[5.0, 100.0])
    assert res.k_st[-1, -1] == pytest.approx(REG.area * 30.0)
    assert res.k_s[-1] == pytest.approx(REG.area)
    assert res.k_t[-1] == pytest.approx(30.0)


def test_kfun_monotone_nonnegative():
    cat = _clustered_cat(seed=12, rate=1.0)
    res = st_kfunction(cat, s_grid=[0.1, 0.3, 0.8, 2.0],
                       t_grid=[0.01, 0.1, 1.0, 5.0])
    assert np.all(res.k_st >= 0)
    assert np.all(np.diff(res.k_st, axis=0) >= 0)
    assert np.all(np.diff(res.k_st, axis=1) >= 0)
    assert np.all(np.diff(res.k_s) >= 0)
    assert np.all(np.diff(res.k_t) >= 0)


def test_kfun_poisson_ratio_near_one():
    region = Region(0.0, 10.0, 0.0, 10.0)
    cat = _poisson_cat(5000, seed=13, region=region, T=50.0)
    res = st_kfunction(cat, s_grid=[0.5, 1.0], t_grid=[2.5, 5.0])
    assert np.all(np.abs(res.ratio - 1.0) < 0.15)


def test_kfun_clustered_ratio_exceeds_envelope_at_trigger_scale():
    cat = _clustered_cat(seed=14, rate=3.0)
    s_grid = [0.126, 1.0]
    t_grid = [10 * MIN, 1.0]
    res = st_kfunction(cat, s_grid, t_grid, envelope=39, seed=5)
    assert res.ratio[0, 0] > 2.0
    assert res.ratio[0, 0] > res.band_hi[0, 0]
    poisson = _poisson_cat(len(cat), seed=15)
    res_p = st_kfunction(poisson, s_grid, t_grid, envelope=39, seed=5)
    assert res_p.band_lo[0, 0] <= res_p.ratio[0, 0] <= res_p.band_hi[0, 0]


def test_kfun_validates_grids():
    cat = _poisson_cat(50, seed=16)
    with pytest.raises(ValueError):
        st_kfunction(cat, [], [1.0])
    with pytest.raises(ValueError):
        st_kfunction(cat, [1.0, 0.5], [1.0])
    with pytest.raises(ValueError):
        st_kfunction(cat, [0.0, 0.5], [1.0])


def test_exports(tmp_path):
    cat = _clustered_cat(seed=17, rate=1.0)
    res = knox_test(cat, 0.2, 0.1, n_perm=99, seed=1)
    res.export_csv(tmp_path / "knox.csv")
    text = (tmp_path / "knox.csv").read_text()
    assert text.startswith("space,time_close,time_far\n")
    kres = st_kfunction(cat, [0.2, 0.5], [0.1, 1.0], envelope=9, seed=2)
    kres.export_csv(tmp_path / "kfun.csv")
    lines = (tmp_path / "kfun.csv").read_text().splitlines()
    assert lines[0] == "s_km,t_days,ratio,band_lo,band_hi"
    assert len(lines) == 1 + 4
