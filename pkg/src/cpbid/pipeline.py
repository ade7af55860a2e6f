"""Stage-by-stage orchestration with on-disk artifacts.

Layout of an output directory::

    config.yaml           normalized configuration
    stages.json           completed stages and the failing one, if any
    data/                 raw.csv (synthetic source), dataset.csv, prices.csv
    models/               point.json, SLQR.json, MLQR.json, meta.json
    predictors/           M1.json ... M5.json
    market/               clusters.json, scenarios_<method>.csv
    bids/                 <method>__<strategy>.csv, meta.json
    backtest/             <method>__<strategy>.csv with hourly settlement
    reports/              wis.csv/json, coverage.csv, point.json, backtest.csv/json

Every stage reads only the artifacts of earlier stages, so deleting the
reports and rerunning a stage reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import conformal as cp
from .config import BENCHMARKS, RunConfig, dump_config
from .data import (Dataset, PriceSeries, SplitSpec, ingest_csv, ingest_prices_csv, preprocess,
                   split, synth_generate, write_dataset_csv, write_prices_csv)
from .evaluation import WIS_ALPHAS, adjusted_r2, coverage, wis, write_wis_reports
from .market import (BidSchedule, NewsvendorConstraint, backtest, build_scenarios, cluster_deltas,
                     scenario_levels, strategy_eum, strategy_eum_cvar, strategy_newsvendor,
                     strategy_perfect, strategy_trust, strategy_worst_case, write_schedule_csv,
                     write_summary)
from .market.clustering import DeltaClusterSet
from .models import (fit_ols, fit_quantile_model, fit_rfr, forward_subset_select, load_model,
                     save_model, tune_rfr)
from .models.quantile import QuantileModel

log = logging.getLogger("cpbid")

STAGES = ("synth", "ingest", "train", "calibrate", "evaluate", "bid", "backtest")
COVERAGE_ALPHAS = (0.1, 0.2, 0.5)


class StageError(RuntimeError):
    """A stage could not run (missing inputs) or failed."""


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


class Workspace:
    """Paths inside one run directory plus the stage marker."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def need(self, *parts, stage: str) -> Path:
        p = self.root.joinpath(*parts)
        if not p.exists():
            raise StageError(f"missing {p}; run the '{stage}' stage first")
        return p

    @property
    def marker(self) -> Path:
        return self.root / "stages.json"

    def status(self) -> dict:
        if self.marker.exists():
            return _load_json(self.marker)
        return {"completed": [], "failed": None}

    def mark(self, stage: str, error: str | None = None) -> None:
        st = self.status()
        done = [s for s in st["completed"] if s != stage]
        if error is None:
            done.append(stage)
            st["failed"] = None
        else:
            st["failed"] = {"stage": stage, "error": error}
        st["completed"] = sorted(done, key=STAGES.index)
        self.root.mkdir(parents=True, exist_ok=True)
        _dump_json(st, self.marker)


# ---------------------------------------------------------------- loading

def load_dataset(ws: Workspace, cfg: RunConfig) -> Dataset:
    src = cfg.data.csv if cfg.data.source == "csv" else cfg.data.synth
    return ingest_csv(ws.need("data", "dataset.csv", stage="ingest"), {"day_flag": "day_flag"},
                      lat=src.lat, lon=src.lon)


def load_prices(ws: Workspace) -> PriceSeries:
    return ingest_prices_csv(ws.need("data", "prices.csv", stage="ingest"))


def load_split(ws: Workspace, cfg: RunConfig):
    return split(load_dataset(ws, cfg), SplitSpec(np.datetime64(cfg.split.train_end),
                                                  np.datetime64(cfg.split.cal_end)))


def load_predictor(ws: Workspace, method: str):
    if method in BENCHMARKS:
        return load_model(ws.need("models", f"{method}.json", stage="train"))
    model = load_model(ws.need("models", "point.json", stage="train"))
    d = _load_json(ws.need("predictors", f"{method}.json", stage="calibrate"))
    return cp.predictor_from_dict(d, model)


def lqr_levels(n_scenarios: int) -> tuple:
    """Levels fitted for the quantile benchmarks: the percentiles plus the scenario levels."""
    levels = {round(k / 100, 2) for k in range(1, 100)}
    levels |= {float(t) for t in scenario_levels(n_scenarios)}
    return tuple(sorted(levels))


# ---------------------------------------------------------------- stages

def stage_synth(cfg: RunConfig, ws: Workspace) -> dict:
    s = cfg.data.synth
    raw, prices = synth_generate(cfg.seed, s.days, s.lat, s.lon, s.start, s.no_arbitrage)
    write_dataset_csv(raw, ws.path("data", "raw.csv"))
    write_prices_csv(prices, ws.path("data", "prices.csv"))
    return {"records": len(raw), "price_rows": len(prices)}


def stage_ingest(cfg: RunConfig, ws: Workspace) -> dict:
    if cfg.data.source == "csv":
        c = cfg.data.csv
        raw = ingest_csv(c.pv, c.schema_map, c.lat, c.lon)
        prices = ingest_prices_csv(c.prices)
        write_prices_csv(prices, ws.path("data", "prices.csv"))
    else:
        s = cfg.data.synth
        raw = ingest_csv(ws.need("data", "raw.csv", stage="synth"), {"day_flag": "day_flag"},
                         lat=s.lat, lon=s.lon)
    p = cfg.data.preprocess
    ds = preprocess(raw, cap=p.cap, csi_bound=p.csi_bound, min_coverage=p.min_coverage)
    write_dataset_csv(ds, ws.path("data", "dataset.csv"))
    return {"raw_records": len(raw), "records": len(ds), "day_records": int(ds.day_flag.sum())}


def _fit_point(cfg: RunConfig, train: Dataset):
    m = cfg.model
    if m.kind == "rfr":
        feats = tuple(m.features or train.feature_names)
        if m.grid:
            n_trees, mf = tune_rfr(train, m.grid, m.folds, cfg.seed, m.min_leaf, feats)
        else:
            n_trees, mf = m.n_trees, m.max_features or min(3, len(feats))
        model = fit_rfr(train, n_trees, mf, m.min_leaf, cfg.seed, feats)
        return model, {"n_trees": n_trees, "max_features": mf, "features": list(feats)}
    if m.features is not None:
        feats = tuple(m.features)
    else:
        cap = 1 if m.kind == "slr" else None
        feats = forward_subset_select(train, m.folds, cap, cfg.seed)
    return fit_ols(train, feats), {"features": list(feats)}


def stage_train(cfg: RunConfig, ws: Workspace) -> dict:
    train, _, _ = load_split(ws, cfg)
    model, meta = _fit_point(cfg, train)
    save_model(model, ws.path("models", "point.json"))
    meta = {"kind": cfg.model.kind, **meta, "benchmarks": {}}
    levels = lqr_levels(cfg.market.scenarios)
    for name in BENCHMARKS:
        if name not in cfg.conformal.methods:
            continue
        cap = 1 if name == "SLQR" else None
        feats = forward_subset_select(train, cfg.model.folds, cap, cfg.seed)
        qm = fit_quantile_model(train, feats, levels)
        save_model(qm, ws.path("models", f"{name}.json"))
        meta["benchmarks"][name] = {"features": list(feats), "levels": len(levels)}
    _dump_json(meta, ws.path("models", "meta.json"))
    return {"train_records": len(train), **{k: v for k, v in meta.items() if k != "benchmarks"}}


def stage_calibrate(cfg: RunConfig, ws: Workspace) -> dict:
    train, cal, _ = load_split(ws, cfg)
    model = load_model(ws.need("models", "point.json", stage="train"))
    done = []
    for name in cfg.conformal.methods:
        if name in BENCHMARKS:
            continue
        conf = cp.ConformalConfig.method(name, cfg.conformal.k, cfg.conformal.n_bins)
        pred = cp.calibrate(model, cal, conf, reference=train, model_ref="models/point.json")
        _dump_json(cp.predictor_to_dict(pred), ws.path("predictors", f"{name}.json"))
        done.append(name)
    return {"calibration_records": len(cal), "methods": done}


def stage_evaluate(cfg: RunConfig, ws: Workspace) -> dict:
    train, _, test = load_split(ws, cfg)
    model = load_model(ws.need("models", "point.json", stage="train"))
    n_feat = len(_load_json(ws.need("models", "meta.json", stage="train"))["features"])
    point = {"model": cfg.model.kind, "features": n_feat}
    for name, part in (("train", train), ("test", test)):
        yhat = model.predict(part)
        point[f"adjusted_r2_{name}"] = adjusted_r2(part.pv, yhat, n_feat)
        point[f"rmse_{name}"] = float(np.sqrt(np.mean((part.pv - yhat) ** 2)))
    _dump_json(point, ws.path("reports", "point.json"))
    reports, cov_rows = [], []
    for name in cfg.conformal.methods:
        pred = load_predictor(ws, name)
        version = "LQR" if name in BENCHMARKS else cfg.model.kind.upper()
        reports.append(wis(pred, test, WIS_ALPHAS, method=name, version=version))
        cov_rows.append([name] + [coverage(pred, test, a) for a in COVERAGE_ALPHAS])
    write_wis_reports(reports, ws.path("reports", "wis.csv"), ws.path("reports", "wis.json"))
    with open(ws.path("reports", "coverage.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method"] + [f"alpha_{a:g}" for a in COVERAGE_ALPHAS])
        for row in cov_rows:
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
    return {"wis": {r.method: r.wis for r in reports}, **point}


def _clusters_to_dict(cl: DeltaClusterSet) -> dict:
    return {"delta_up": cl.delta_up.tolist(), "delta_down": cl.delta_down.tolist(),
            "weights": cl.weights.tolist(), "merged": cl.merged}


def _clusters_from_dict(d: dict) -> DeltaClusterSet:
    return DeltaClusterSet(d["delta_up"], d["delta_down"], d["weights"], d["merged"])


def _write_scenarios(scen, path) -> None:
    ts = np.datetime_as_string(scen.timestamps, unit="s")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "dam"] + [f"q{k + 1}" for k in range(scen.n_scenarios)])
        for i in range(scen.n_steps):
            w.writerow([ts[i] + "Z", repr(float(scen.dam[i]))] + [repr(float(v)) for v in scen.pred[i]])


def _write_bids(sched: BidSchedule, path) -> None:
    ts = np.datetime_as_string(sched.timestamps, unit="s")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "bid"])
        for t, b in zip(ts, sched.bids):
            w.writerow([t + "Z", repr(float(b))])


def _read_bids(path, strategy: str, method: str) -> BidSchedule:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    ts = np.array([r[0].rstrip("Z") for r in rows], dtype="datetime64[s]")
    return BidSchedule(ts, np.array([float(r[1]) for r in rows]), strategy, method)


def _run_strategy(sc, pred, test, clusters, scen) -> BidSchedule:
    if sc.name == "trust":
        return strategy_trust(pred, test)
    if sc.name == "worst_case":
        return strategy_worst_case(pred, test)
    if sc.name == "newsvendor":
        con = NewsvendorConstraint(sc.constraint, sc.c) if sc.constraint else None
        return strategy_newsvendor(pred, test, clusters, con)
    if sc.name == "eum":
        return strategy_eum(scen)
    if sc.name == "eum_cvar":
        return strategy_eum_cvar(scen, sc.gamma, sc.beta, sc.solver, sc.window)
    raise StageError(f"unhandled strategy {sc.name}")


def schedule_plan(cfg: RunConfig) -> list:
    """``(file stem, strategy config, method)`` for every schedule, in report order."""
    plan = []
    for sc in cfg.strategies:
        if sc.name == "perfect":
            plan.append(("actual__perfect", sc, "actual"))
    for method in cfg.conformal.methods:
        for sc in cfg.strategies:
            if sc.name != "perfect":
                plan.append((f"{method}__{sc.label}", sc, method))
    return plan


def stage_bid(cfg: RunConfig, ws: Workspace) -> dict:
    _, cal, test = load_split(ws, cfg)
    prices = load_prices(ws)
    cal_prices = prices.between(np.datetime64(cfg.split.train_end), np.datetime64(cfg.split.cal_end))
    clusters = cluster_deltas(cal_prices, cfg.market.clusters, cfg.seed)
    _dump_json(_clusters_to_dict(clusters), ws.path("market", "clusters.json"))
    test_prices = prices.align(test.timestamps)
    meta = {}
    scen_cache = {}
    for stem, sc, method in schedule_plan(cfg):
        t0 = time.perf_counter()
        if sc.name == "perfect":
            sched = strategy_perfect(test)
        else:
            pred = load_predictor(ws, method)
            if method not in scen_cache:
                scen = build_scenarios(pred, test, test_prices, clusters, cfg.market.scenarios)
                _write_scenarios(scen, ws.path("market", f"scenarios_{method}.csv"))
                scen_cache = {method: scen}
            sched = _run_strategy(sc, pred, test, clusters, scen_cache[method])
        sched = BidSchedule(sched.timestamps, sched.bids, sc.label, method, sched.info)
        _write_bids(sched, ws.path("bids", f"{stem}.csv"))
        meta[stem] = {"strategy": sc.label, "cp_method": method, "info": sched.info}
        log.info("bid %s in %.1fs", stem, time.perf_counter() - t0)
    _dump_json(meta, ws.path("bids", "meta.json"))
    return {"clusters": len(clusters), "merged_clusters": clusters.merged, "schedules": len(meta)}


def stage_backtest(cfg: RunConfig, ws: Workspace) -> dict:
    _, _, test = load_split(ws, cfg)
    prices = load_prices(ws).align(test.timestamps)
    meta = _load_json(ws.need("bids", "meta.json", stage="bid"))
    reports = []
    for stem, sc, method in schedule_plan(cfg):
        if stem not in meta:
            raise StageError(f"no bids for {stem}; rerun the 'bid' stage")
        bids = _read_bids(ws.need("bids", f"{stem}.csv", stage="bid"), sc.label, method)
        rep = backtest(bids, test.pv, prices, cfg.market.capacity_mw)
        write_schedule_csv(rep, bids, test.pv, prices, ws.path("backtest", f"{stem}.csv"))
        reports.append(rep)
    write_summary(reports, ws.path("reports", "backtest.csv"), ws.path("reports", "backtest.json"))
    return {"profit": {f"{r.method}/{r.strategy}": r.profit for r in reports}}


STAGE_FUNCS = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "train": stage_train,
    "calibrate": stage_calibrate,
    "evaluate": stage_evaluate,
    "bid": stage_bid,
    "backtest": stage_backtest,
}


def write_config(cfg: RunConfig, ws: Workspace) -> None:
    ws.path("config.yaml").write_text(dump_config(cfg))


def run_stage(name: str, cfg: RunConfig, ws: Workspace) -> dict:
    """Run one stage, recording success or failure in the stage marker."""
    t0 = time.perf_counter()
    log.info("stage %s", name)
    try:
        out = STAGE_FUNCS[name](cfg, ws)
    except Exception as exc:
        ws.mark(name, f"{type(exc).__name__}: {exc}")
        raise
    ws.mark(name)
    log.info("stage %s done in %.1fs", name, time.perf_counter() - t0)
    return out


def run_all(cfg: RunConfig, out) -> dict:
    """Every stage in order into a fresh directory ``out``."""
    ws = Workspace(out)
    if ws.root.exists() and any(ws.root.iterdir()):
        raise StageError(f"output directory {ws.root} is not empty")
    ws.root.mkdir(parents=True, exist_ok=True)
    write_config(cfg, ws)
    stages = [s for s in STAGES if not (s == "synth" and cfg.data.source == "csv")]
    return {s: run_stage(s, cfg, ws) for s in stages}
