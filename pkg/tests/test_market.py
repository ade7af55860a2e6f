import csv

import numpy as np
import pytest

from cpbid.conformal import ConformalConfig, ConformalPredictor, calibrate, qhat
from cpbid.data import PriceSeries
from cpbid.lp import LpSolverError
from cpbid.market import (BidSchedule, DeltaClusterSet, MarketError, NewsvendorConstraint,
                          ScenarioMatrix, backtest, build_scenarios, cluster_deltas, cvar_exact,
                          cvar_lp, cvar_objective, cvar_of, eum_bids, eum_candidates,
                          merge_invalid, newsvendor_fractile, newsvendor_level, scenario_levels,
                          strategy_eum, strategy_eum_cvar, strategy_newsvendor, strategy_perfect,
                          strategy_trust, strategy_worst_case, write_schedule_csv, write_summary)
from cpbid.models import LinearModel, fit_ols

import oracles
from synthetic import make_ds, split_sets

IDENTITY = LinearModel(0.0, [1.0], ("x0",))


def _ts(n, start="2016-06-01T00:00"):
    return np.datetime64(start, "s") + np.arange(n) * np.timedelta64(3600, "s")


def _prices(dam, up, down, n=None):
    n = len(np.atleast_1d(dam)) if n is None else n
    f = lambda v: np.broadcast_to(np.asarray(v, float), (n,))
    return PriceSeries(_ts(n), f(dam), f(up), f(down))


def _scen(pred, dam, up, down, w):
    pred = np.sort(np.asarray(pred, float), axis=1)
    return ScenarioMatrix(_ts(len(pred)), pred, dam, DeltaClusterSet(up, down, w))


def _random_instance(rng, T, N, C):
    pred = rng.uniform(0, 1, (T, N))
    dam = rng.uniform(0.5, 1.5, T)
    up = rng.uniform(-0.2, 1.0, C)
    down = rng.uniform(-0.2, 1.0, C)
    bad = up + down <= 0
    up[bad] += 0.5
    w = rng.integers(1, 10, C).astype(float)
    return _scen(pred, dam, up, down, w)


def _cps(scores, yhat_model=IDENTITY):
    return ConformalPredictor(ConformalConfig(cps=True), yhat_model, (np.sort(np.asarray(scores, float)),),
                              feature_names=("x0",))


def _one(x):
    return make_ds(np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(x, float)),
                   "2016-06-01T00:00")


SYMMETRIC = DeltaClusterSet([20.0], [20.0], [10.0])


# ---------------------------------------------------------------- clustering

def test_single_cluster_is_mean():
    rng = np.random.default_rng(0)
    dam = rng.uniform(30, 60, 200)
    pr = _prices(dam, dam + rng.uniform(0, 20, 200), dam - rng.uniform(0, 20, 200))
    cl = cluster_deltas(pr, 1, seed=0)
    assert cl.delta_up[0] == pytest.approx(pr.delta_up.mean())
    assert cl.delta_down[0] == pytest.approx(pr.delta_down.mean())
    assert cl.total_weight == 200


def test_two_blobs_recovered():
    rng = np.random.default_rng(1)
    a = rng.normal(0, 0.01, (300, 2)) + [5.0, 10.0]
    b = rng.normal(0, 0.01, (300, 2)) + [30.0, 2.0]
    pts = np.vstack([a, b])
    dam = np.full(600, 50.0)
    cl = cluster_deltas(_prices(dam, dam + pts[:, 0], dam - pts[:, 1]), 2, seed=3)
    got = sorted(zip(cl.delta_up, cl.delta_down))
    np.testing.assert_allclose(got[0], a.mean(axis=0), atol=1e-3)
    np.testing.assert_allclose(got[1], b.mean(axis=0), atol=1e-3)
    again = cluster_deltas(_prices(dam, dam + pts[:, 0], dam - pts[:, 1]), 2, seed=3)
    np.testing.assert_array_equal(cl.delta_up, again.delta_up)


def test_merge_invalid_clusters():
    centers = np.array([[1.0, 1.0], [-5.0, 1.0], [10.0, 10.0]])
    c, w, m = merge_invalid(centers, np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(c, centers[[0, 2]])
    np.testing.assert_array_equal(w, [3.0, 3.0])
    assert m == 1
    with pytest.raises(MarketError):
        merge_invalid(np.array([[-1.0, 0.0]]), np.array([1.0]))


def test_too_few_distinct_points():
    with pytest.raises(MarketError):
        cluster_deltas(_prices(50.0, 60.0, 40.0, n=30), 2)


def test_cluster_validation():
    with pytest.raises(MarketError):
        DeltaClusterSet([1.0], [1.0], [0.0])
    assert not DeltaClusterSet([1.0], [-2.0], [1.0]).valid


# ---------------------------------------------------------------- scenarios and simple strategies

def test_scenario_levels():
    lv = scenario_levels(99)
    assert lv[0] == pytest.approx(0.01) and lv[-1] == pytest.approx(0.99) and len(lv) == 99


def test_scenarios_from_hand_cpd():
    ds = _one(0.5)
    sc = build_scenarios(_cps([-0.3, -0.1, 0.4]), ds, _prices(50.0, 60.0, 40.0), SYMMETRIC)
    taus = scenario_levels(99)
    k = np.clip(np.ceil(4 * taus).astype(int), 1, 3)
    np.testing.assert_allclose(sc.pred[0], np.array([0.2, 0.4, 0.9])[k - 1])
    assert sc.method == "custom"


def test_constant_predictor_scenarios():
    ds = _one(0.3)
    sc = build_scenarios(_cps([0.1] * 5), ds, _prices(50.0, 60.0, 40.0), SYMMETRIC)
    np.testing.assert_allclose(sc.pred, 0.4)
    assert strategy_eum(sc).bids[0] == pytest.approx(0.4)


def test_scenario_validation():
    with pytest.raises(MarketError):
        ScenarioMatrix(_ts(1), [[0.5, 0.2]], [1.0], SYMMETRIC)
    with pytest.raises(MarketError):
        ScenarioMatrix(_ts(1), [[0.5, 1.2]], [1.0], SYMMETRIC)


def test_trust_examples():
    ds = make_ds(np.array([0.2, 0.7, 1.3]), np.zeros(3))
    m1 = ConformalPredictor(ConformalConfig(), IDENTITY, (np.full(9, 0.1),), feature_names=("x0",))
    np.testing.assert_allclose(strategy_trust(m1, ds).bids, [0.2, 0.7, 1.0])
    # rank ceil(6 * 0.5) = 3 lands on the zero score
    sym = _cps([-0.2, -0.1, 0.0, 0.1, 0.2])
    assert strategy_trust(sym, _one(0.5)).bids[0] == pytest.approx(0.5)
    assert strategy_trust(_cps([-0.3, -0.1, 0.4]), _one(0.5)).bids[0] == pytest.approx(0.4)


def test_worst_case_examples():
    scores = np.linspace(0.01, 0.3, 30)
    m1 = ConformalPredictor(ConformalConfig(), IDENTITY, (scores,), feature_names=("x0",))
    ds = make_ds(np.array([0.1, 0.6]), np.zeros(2))
    np.testing.assert_allclose(strategy_worst_case(m1, ds).bids,
                               np.clip([0.1 - qhat(scores, 0.1), 0.6 - qhat(scores, 0.1)], 0, 1))
    zero = ConformalPredictor(ConformalConfig(), IDENTITY, (np.zeros(5),), feature_names=("x0",))
    np.testing.assert_allclose(strategy_worst_case(zero, ds).bids, [0.1, 0.6])


@pytest.mark.parametrize("method", ["M1", "M3", "M5"])
def test_bid_ordering(method):
    train, cal, test = split_sets(300, 600, 200, seed=11)
    pred = calibrate(fit_ols(train), cal, ConformalConfig.method(method, k=20, n_bins=4), reference=train)
    w = strategy_worst_case(pred, test).bids
    t = strategy_trust(pred, test).bids
    hi = np.clip(pred.quantiles(test, [0.95])[:, 0], 0, 1)
    assert np.all(w <= t + 1e-12) and np.all(t <= hi + 1e-12)


# ---------------------------------------------------------------- newsvendor

def test_fractile_examples():
    assert newsvendor_fractile(20, 20) == 0.5
    assert newsvendor_fractile(70 - 50, 50 - 30) == 0.5
    assert newsvendor_fractile(20, 0) == 0.01
    with pytest.raises(MarketError):
        newsvendor_fractile(1.0, -1.0)


def test_weighted_level():
    # NV 0.2 -> down/up = 1/4; NV 0.6 -> down/up = 3/2
    cl = DeltaClusterSet([4.0, 2.0], [1.0, 3.0], [1.0, 3.0])
    assert newsvendor_level(cl) == pytest.approx(0.5)
    # prob constraint c = 0.05 clamps 0.2 -> 0.45 and 0.6 -> 0.55
    assert newsvendor_level(cl, NewsvendorConstraint("prob", 0.05)) == pytest.approx((0.45 + 3 * 0.55) / 4)


def test_symmetric_cluster_equals_trust():
    train, cal, test = split_sets(300, 600, 200, seed=12)
    for method in ("M1", "M4"):
        pred = calibrate(fit_ols(train), cal, ConformalConfig.method(method, k=20), reference=train)
        nv = strategy_newsvendor(pred, test, SYMMETRIC)
        np.testing.assert_array_equal(nv.bids, strategy_trust(pred, test).bids)


def test_dec_constraint_clamp():
    pred = _cps([0.2] * 9)
    s = strategy_newsvendor(pred, _one(0.5), SYMMETRIC, NewsvendorConstraint("dec", 0.1))
    assert s.bids[0] == pytest.approx(0.55)
    assert s.strategy == "newsvendor_dec10"


def test_constraint_validation():
    with pytest.raises(MarketError):
        NewsvendorConstraint("abs", 0.1)
    with pytest.raises(MarketError):
        NewsvendorConstraint("prob", 0.6)


# ---------------------------------------------------------------- EUM

def test_eum_identical_scenarios():
    sc = _scen(np.full((3, 5), 0.37), [0.5, 1.0, 2.0], [0.1, 0.9], [0.4, -0.05], [2.0, 1.0])
    np.testing.assert_allclose(eum_bids(sc)[0], 0.37)


def test_eum_three_scenario_grid():
    sc = _scen([[0.2, 0.5, 0.9]], [1.0], [0.3], [0.6], [1.0])
    p, val = eum_bids(sc)
    gb, gv = oracles.eum_grid(sc.pred, sc.dam, [0.3], [0.6], [1.0])
    assert val[0] >= gv[0] - 1e-9
    assert abs(p[0] - gb[0]) <= 1e-4


def test_eum_matches_oracle_on_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(40):
        T, N, C = rng.integers(1, 4), rng.integers(1, 10), rng.integers(1, 4)
        sc = _random_instance(rng, T, N, C)
        cl = sc.clusters
        p, val = eum_bids(sc)
        _, gv = oracles.eum_grid(sc.pred, sc.dam, cl.delta_up, cl.delta_down, cl.weights)
        assert np.all(val >= gv - 1e-9)
        for t in range(T):
            direct = oracles.expected_step_profit(p[t], sc.pred[t], sc.dam[t], cl.delta_up,
                                                  cl.delta_down, cl.weights)[0]
            assert val[t] == pytest.approx(direct, abs=1e-12)


def test_eum_candidates_match_direct_evaluation():
    rng = np.random.default_rng(6)
    sc = _random_instance(rng, 3, 7, 2)
    cand, value = eum_candidates(sc)
    cl = sc.clusters
    for t in range(3):
        direct = oracles.expected_step_profit(cand[t], sc.pred[t], sc.dam[t], cl.delta_up,
                                              cl.delta_down, cl.weights)
        np.testing.assert_allclose(value[t], direct, atol=1e-12)


def test_eum_expensive_deficit_bids_low():
    x = np.linspace(0.1, 0.9, 9)
    sc = _scen([x], [1.0], [5.0], [0.1], [1.0])
    assert eum_bids(sc)[0][0] <= np.median(x)


def test_eum_tie_goes_low():
    # zero deltas make expected profit flat in p
    sc = _scen([[0.3, 0.6]], [1.0], [0.0], [0.0], [1.0])
    assert eum_bids(sc)[0][0] == 0.0


# ---------------------------------------------------------------- CVaR

def test_cvar_of_matches_tail_mean():
    rng = np.random.default_rng(7)
    for _ in range(20):
        v = rng.normal(size=12)
        w = rng.uniform(0.1, 1, 12)
        g = rng.uniform(0.05, 0.95)
        assert cvar_of(v, w, g) == pytest.approx(oracles.tail_mean(v, w, g), abs=1e-12)


def test_cvar_beta_zero_is_eum():
    rng = np.random.default_rng(8)
    sc = _random_instance(rng, 5, 6, 2)
    e = strategy_eum(sc).bids
    for method in ("lp", "exact", "auto"):
        np.testing.assert_allclose(strategy_eum_cvar(sc, 0.9, 0.0, method).bids, e, atol=1e-6)
    np.testing.assert_allclose(cvar_exact(sc, 0.9, 0.0)[0], e, atol=1e-6)


def test_cvar_identical_scenarios():
    sc = _scen(np.full((1, 3), 0.4), [1.2], [0.5, 0.2], [0.3, 0.6], [1.0, 2.0])
    p, info = cvar_lp(sc, 0.8, 0.7)
    np.testing.assert_allclose(p, 0.4, atol=1e-9)
    obj = cvar_objective(sc, p, 0.8, 0.7)
    assert obj["cvar"] == pytest.approx(obj["expected"], abs=1e-9)


def test_cvar_two_by_two_fixture():
    sc = _scen([[0.2, 0.7], [0.4, 0.5]], [1.0, 0.8], [0.6], [0.3], [1.0])
    cl = sc.clusters
    p, info = cvar_lp(sc, 0.5, 0.5)
    grid, _ = oracles.cvar_grid_max(sc.pred, sc.dam, cl.delta_up, cl.delta_down, cl.weights, 0.5, 0.5)
    ours, _, cv = oracles.cvar_objective(sc.pred, sc.dam, cl.delta_up, cl.delta_down, cl.weights, p, 0.5, 0.5)
    assert ours >= grid - 1e-9 and ours - grid <= 2e-3
    assert info["cvar"] == pytest.approx(cv, abs=1e-6)
    assert info["objective"] == pytest.approx(ours, abs=1e-9)


def test_cvar_lp_and_exact_agree():
    rng = np.random.default_rng(9)
    for _ in range(15):
        T, N, C = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 3)
        sc = _random_instance(rng, T, N, C)
        g, b = rng.uniform(0.5, 0.95), rng.uniform(0.1, 1.0)
        p_lp, info = cvar_lp(sc, g, b)
        p_ex, ex = cvar_exact(sc, g, b)
        lp_obj = cvar_objective(sc, p_lp, g, b)["objective"]
        assert info["objective"] == pytest.approx(lp_obj, abs=1e-8)
        assert ex["objective"] == pytest.approx(lp_obj, abs=1e-7)


def test_cvar_windows_and_routing():
    rng = np.random.default_rng(10)
    sc = _random_instance(rng, 6, 4, 2)
    s = strategy_eum_cvar(sc, 0.9, 0.5, window=3)
    assert len(s.info["blocks"]) == 2 and s.info["blocks"][0]["solver"] == "lp"
    first = strategy_eum_cvar(sc.window(0, 3), 0.9, 0.5)
    np.testing.assert_allclose(s.bids[:3], first.bids)
    assert strategy_eum_cvar(sc, 0.9, 0.5, "exact").info["blocks"][0]["solver"] == "exact"


def test_cvar_argument_checks():
    sc = _random_instance(np.random.default_rng(0), 2, 2, 1)
    for g, b in ((1.0, 0.5), (0.0, 0.5), (0.9, 1.5)):
        with pytest.raises(MarketError):
            strategy_eum_cvar(sc, g, b)
    with pytest.raises(MarketError):
        strategy_eum_cvar(sc, 0.9, 0.5, method="gurobi")
    with pytest.raises(MarketError):
        strategy_eum_cvar(sc, 0.9, 0.5, window=0)
    assert issubclass(LpSolverError, Exception)


# ---------------------------------------------------------------- backtest

def test_backtest_examples():
    ts = _ts(1)
    # imbalance share needs production, so pair the deficit hour with a neutral one
    pr = PriceSeries(_ts(2), [50.0, 10.0], [70.0, 10.0], [30.0, 10.0])
    r = backtest(BidSchedule(_ts(2), [1.0, 0.5], "x"), [0.0, 0.5], pr)
    assert r.hourly_profit[0] == pytest.approx(-20.0)
    r = backtest(BidSchedule(ts, [0.0], "x"), [1.0], _prices(50.0, 70.0, 30.0))
    assert r.profit == pytest.approx(30.0) and r.imbalance_pct == pytest.approx(100.0)


def test_perfect_information():
    ds = make_ds(np.zeros(4), np.array([0.1, 0.0, 0.8, 1.0]), "2016-06-01T00:00")
    pr = PriceSeries(ds.timestamps, [40.0, 50.0, 60.0, 70.0], [80.0] * 4, [5.0] * 4)
    r = backtest(strategy_perfect(ds), ds.pv, pr)
    assert r.imbalance_pct == 0.0
    assert r.profit == pytest.approx(float(ds.pv @ pr.dam))


def test_backtest_errors():
    pr = _prices(50.0, 70.0, 30.0, n=2)
    with pytest.raises(MarketError, match="misaligned"):
        backtest(BidSchedule(_ts(3), [0.1] * 3, "x"), [0.2] * 3, pr)
    with pytest.raises(MarketError):
        backtest(BidSchedule(_ts(2), [0.1] * 2, "x"), [0.0, 0.0], pr)
    with pytest.raises(MarketError):
        BidSchedule(_ts(1), [1.2], "x")


def test_backtest_files(tmp_path):
    ds = make_ds(np.zeros(3), np.array([0.2, 0.4, 0.6]), "2016-06-01T00:00")
    pr = PriceSeries(ds.timestamps, [40.0] * 3, [60.0] * 3, [20.0] * 3)
    bids = BidSchedule(ds.timestamps, [0.3, 0.3, 0.3], "trust", "M1")
    rep = backtest(bids, ds.pv, pr)
    write_schedule_csv(rep, bids, ds.pv, pr, tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["timestamp", "bid", "actual", "dam", "rtm_up", "rtm_down", "profit"]
    assert sum(float(r[-1]) for r in rows[1:]) == pytest.approx(rep.profit)
    write_summary([rep], tmp_path / "b.csv", tmp_path / "b.json")
    assert next(csv.reader(open(tmp_path / "b.csv"))) == ["strategy", "cp_method", "profit", "imbalance_pct"]


def test_no_arbitrage_dominance_small():
    rng = np.random.default_rng(13)
    n = 200
    actual = rng.uniform(0, 1, n)
    dam = rng.uniform(20, 60, n)
    pr = PriceSeries(_ts(n), dam, dam + rng.uniform(0, 30, n), dam - rng.uniform(0, 20, n))
    best = float(actual @ dam)
    for _ in range(20):
        r = backtest(BidSchedule(_ts(n), rng.uniform(0, 1, n), "x"), actual, pr)
        assert r.profit <= best + 1e-9
