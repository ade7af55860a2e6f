"""PV/weather/price series: CSV ingestion, cleaning, solar geometry, splits, synthesis.

Hourly records label the interval ``[t, t + 1h)``. Solar geometry used for the
day/night flag and the clear-sky bound is evaluated at the interval midpoint.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

__all__ = [
    "DataError",
    "SchemaError",
    "IngestError",
    "Record",
    "Dataset",
    "PriceSeries",
    "SplitSpec",
    "SolarGeometry",
    "solar_features",
    "solar_geometry",
    "haurwitz_ghi",
    "ingest_csv",
    "ingest_prices_csv",
    "write_dataset_csv",
    "write_prices_csv",
    "preprocess",
    "split",
    "synth_generate",
    "DE_BILT",
]

DE_BILT = (52.10, 5.18)
SOLAR_COLUMNS = ("clear_sky_ghi", "zenith", "azimuth", "hod_cos", "hod_sin")
HALF_HOUR = np.timedelta64(1800, "s")


class DataError(ValueError):
    pass


class SchemaError(DataError):
    pass


class IngestError(DataError):
    pass


def _as_utc_seconds(values) -> np.ndarray:
    ts = pd.to_datetime(pd.Series(values), utc=True)
    return ts.dt.tz_localize(None).to_numpy().astype("datetime64[s]")


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class Record:
    timestamp: np.datetime64
    pv: float
    features: dict
    day_flag: bool


@dataclass(frozen=True, eq=False)
class Dataset:
    """Time-aligned PV target and feature matrix.

    ``features`` has one column per entry of ``feature_names``. Arrays are
    read-only; derive new datasets with :meth:`subset` or
    :meth:`with_columns`.
    """

    timestamps: np.ndarray
    pv: np.ndarray
    features: np.ndarray
    feature_names: tuple
    day_flag: np.ndarray
    lat: float = DE_BILT[0]
    lon: float = DE_BILT[1]

    def __post_init__(self):
        ts = np.asarray(self.timestamps).astype("datetime64[s]")
        pv = np.asarray(self.pv, dtype=float)
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(len(pv), -1)
        names = tuple(self.feature_names)
        day = np.asarray(self.day_flag, dtype=bool)
        if not (len(ts) == len(pv) == X.shape[0] == len(day)):
            raise DataError("timestamps, pv, features and day_flag must have equal length")
        if X.shape[1] != len(names):
            raise DataError(f"{X.shape[1]} feature columns but {len(names)} names")
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names")
        if len(ts) > 1 and np.any(np.diff(ts) <= np.timedelta64(0, "s")):
            raise DataError("timestamps must be strictly increasing")
        ts, pv, X, day = ts.copy(), pv.copy(), X.copy(), day.copy()
        _freeze(ts, pv, X, day)
        for name, val in (("timestamps", ts), ("pv", pv), ("features", X),
                          ("feature_names", names), ("day_flag", day)):
            object.__setattr__(self, name, val)

    def __len__(self) -> int:
        return len(self.pv)

    @property
    def X(self) -> np.ndarray:
        return self.features

    @property
    def y(self) -> np.ndarray:
        return self.pv

    def column(self, name: str) -> np.ndarray:
        try:
            return self.features[:, self.feature_names.index(name)]
        except ValueError:
            raise KeyError(f"no feature named {name!r}") from None

    def columns(self, names) -> np.ndarray:
        idx = [self.feature_names.index(n) for n in names]
        return self.features[:, idx]

    def record(self, i: int) -> Record:
        return Record(self.timestamps[i], float(self.pv[i]),
                      dict(zip(self.feature_names, self.features[i].tolist())),
                      bool(self.day_flag[i]))

    def subset(self, mask) -> "Dataset":
        return Dataset(self.timestamps[mask], self.pv[mask], self.features[mask],
                       self.feature_names, self.day_flag[mask], self.lat, self.lon)

    def with_columns(self, names, values) -> "Dataset":
        values = np.asarray(values, dtype=float).reshape(len(self), -1)
        return Dataset(self.timestamps, self.pv, np.hstack([self.features, values]),
                       self.feature_names + tuple(names), self.day_flag, self.lat, self.lon)

    def replace(self, **kw) -> "Dataset":
        fields = dict(timestamps=self.timestamps, pv=self.pv, features=self.features,
                      feature_names=self.feature_names, day_flag=self.day_flag,
                      lat=self.lat, lon=self.lon)
        fields.update(kw)
        return Dataset(**fields)


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Hourly day-ahead and real-time (imbalance) prices in EUR/MWh."""

    timestamps: np.ndarray
    dam: np.ndarray
    rtm_up: np.ndarray
    rtm_down: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps).astype("datetime64[s]").copy()
        arrs = [np.asarray(getattr(self, k), dtype=float).copy() for k in ("dam", "rtm_up", "rtm_down")]
        if any(len(a) != len(ts) for a in arrs):
            raise DataError("price columns must align with timestamps")
        if len(ts) > 1 and np.any(np.diff(ts) <= np.timedelta64(0, "s")):
            raise DataError("price timestamps must be strictly increasing")
        _freeze(ts, *arrs)
        object.__setattr__(self, "timestamps", ts)
        for k, a in zip(("dam", "rtm_up", "rtm_down"), arrs):
            object.__setattr__(self, k, a)

    def __len__(self) -> int:
        return len(self.dam)

    @property
    def delta_up(self) -> np.ndarray:
        return self.rtm_up - self.dam

    @property
    def delta_down(self) -> np.ndarray:
        return self.dam - self.rtm_down

    def align(self, timestamps) -> "PriceSeries":
        """Prices at exactly ``timestamps`` (in that order)."""
        ts = np.asarray(timestamps).astype("datetime64[s]")
        idx = np.searchsorted(self.timestamps, ts)
        idx_c = np.clip(idx, 0, max(len(self) - 1, 0))
        ok = (idx < len(self)) & (self.timestamps[idx_c] == ts) if len(self) else np.zeros(len(ts), bool)
        if not np.all(ok):
            missing = ts[~ok][0]
            raise DataError(f"no price row for {missing}")
        return PriceSeries(ts, self.dam[idx], self.rtm_up[idx], self.rtm_down[idx])

    def between(self, start, end) -> "PriceSeries":
        m = (self.timestamps >= np.datetime64(start, "s")) & (self.timestamps < np.datetime64(end, "s"))
        return PriceSeries(self.timestamps[m], self.dam[m], self.rtm_up[m], self.rtm_down[m])


@dataclass(frozen=True)
class SplitSpec:
    train_end: np.datetime64
    cal_end: np.datetime64

    def __post_init__(self):
        te = np.datetime64(self.train_end, "s")
        ce = np.datetime64(self.cal_end, "s")
        if not te < ce:
            raise DataError(f"train_end {te} must precede cal_end {ce}")
        object.__setattr__(self, "train_end", te)
        object.__setattr__(self, "cal_end", ce)


@dataclass(frozen=True)
class SolarGeometry:
    zenith: float
    azimuth: float
    clear_sky_ghi: float
    hod_cos: float
    hod_sin: float


# ---------------------------------------------------------------- solar geometry

def haurwitz_ghi(zenith_deg):
    """Haurwitz clear-sky GHI in W/m2; zero with the sun at or below the horizon."""
    cz = np.cos(np.radians(np.asarray(zenith_deg, dtype=float)))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ghi = 1098.0 * cz * np.exp(-0.057 / cz)
    return np.where(cz > 0, ghi, 0.0)


def solar_geometry(timestamps, lat: float, lon: float) -> dict:
    """Vectorised solar position (NOAA fractional-year approximations).

    Returns arrays ``zenith``, ``azimuth`` (degrees, clockwise from north),
    ``clear_sky_ghi`` and the cyclic hour-of-day pair ``hod_cos``/``hod_sin``.
    """
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude {lat} outside [-90, 90]")
    ts = np.atleast_1d(np.asarray(timestamps).astype("datetime64[s]"))
    days = ts.astype("datetime64[D]")
    years = ts.astype("datetime64[Y]")
    doy = (days - years.astype("datetime64[D]")).astype(float) + 1.0
    sec = (ts - days.astype("datetime64[s]")).astype(float)
    hours = sec / 3600.0
    leap = np.array([(y % 4 == 0 and y % 100 != 0) or y % 400 == 0
                     for y in years.astype(int) + 1970])
    ylen = np.where(leap, 366.0, 365.0)
    g = 2.0 * np.pi / ylen * (doy - 1.0 + (hours - 12.0) / 24.0)

    eqtime = 229.18 * (0.000075 + 0.001868 * np.cos(g) - 0.032077 * np.sin(g)
                       - 0.014615 * np.cos(2 * g) - 0.040849 * np.sin(2 * g))
    decl = (0.006918 - 0.399912 * np.cos(g) + 0.070257 * np.sin(g)
            - 0.006758 * np.cos(2 * g) + 0.000907 * np.sin(2 * g)
            - 0.002697 * np.cos(3 * g) + 0.00148 * np.sin(3 * g))
    tst = hours * 60.0 + eqtime + 4.0 * lon
    ha = np.radians(tst / 4.0 - 180.0)
    phi = np.radians(lat)
    cosz = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(ha)
    zen = np.degrees(np.arccos(np.clip(cosz, -1.0, 1.0)))
    az = np.degrees(np.arctan2(np.sin(ha), np.cos(ha) * np.sin(phi) - np.tan(decl) * np.cos(phi)))
    az = np.mod(az + 180.0, 360.0)
    hod = np.floor(hours)
    return {
        "zenith": zen,
        "azimuth": az,
        "clear_sky_ghi": haurwitz_ghi(zen),
        "hod_cos": np.cos(2 * np.pi * hod / 24.0),
        "hod_sin": np.sin(2 * np.pi * hod / 24.0),
    }


def solar_features(timestamp, lat: float, lon: float) -> SolarGeometry:
    g = solar_geometry(_as_utc_seconds([timestamp]), lat, lon)
    return SolarGeometry(*(float(g[k][0]) for k in ("zenith", "azimuth", "clear_sky_ghi",
                                                     "hod_cos", "hod_sin")))


# ---------------------------------------------------------------- ingestion

def _parse_numeric_frame(df: pd.DataFrame, cols, what: str) -> np.ndarray:
    out = np.empty((len(df), len(cols)))
    bad_rows = set()
    for k, col in enumerate(cols):
        raw = df[col]
        bad = pd.to_numeric(raw, errors="coerce").isna().to_numpy()
        bad_rows.update(np.flatnonzero(bad).tolist())
        if not bad.any():
            # pandas' fast parser is not round-trip exact; numpy's is
            out[:, k] = raw.to_numpy(dtype=str).astype(float)
    if bad_rows:
        # line numbers: header is line 1
        lines = sorted(r + 2 for r in bad_rows)
        shown = ", ".join(map(str, lines[:20]))
        raise IngestError(f"unparseable {what} values on line(s) {shown}"
                          + (" ..." if len(lines) > 20 else ""))
    return out


def _read_frame(path, required):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    try:
        ts = _as_utc_seconds(df[required[0]])
    except (ValueError, TypeError) as exc:
        raise IngestError(f"{path}: unparseable timestamp ({exc})") from None
    dup = pd.Series(ts).duplicated(keep=False).to_numpy()
    if dup.any():
        raise IngestError(f"{path}: duplicate timestamp {ts[dup][0]}")
    return df, ts


def ingest_csv(path, schema: dict | None = None, lat: float = DE_BILT[0],
               lon: float = DE_BILT[1]) -> Dataset:
    """Read a PV/feature CSV into a :class:`Dataset` sorted by timestamp.

    ``schema`` maps the canonical names ``timestamp`` and ``pv`` (and
    optionally ``day_flag``) to column names in the file. All other columns
    become features and must be numeric. Without a ``day_flag`` column the
    flag is derived from the solar zenith at each timestamp.
    """
    schema = {"timestamp": "timestamp", "pv": "pv", **(schema or {})}
    ts_col, pv_col = schema["timestamp"], schema["pv"]
    df, ts = _read_frame(path, [ts_col, pv_col])
    flag_col = schema.get("day_flag")
    skip = {ts_col, pv_col} | ({flag_col} if flag_col else set())
    feat_cols = [c for c in df.columns if c not in skip]
    pv = _parse_numeric_frame(df, [pv_col], "pv")[:, 0]
    X = _parse_numeric_frame(df, feat_cols, "feature") if feat_cols else np.empty((len(df), 0))
    if flag_col:
        if flag_col not in df.columns:
            raise SchemaError(f"{path}: missing column(s) {flag_col}")
        day = df[flag_col].str.strip().str.lower().isin(["1", "true", "yes"]).to_numpy()
    else:
        day = solar_geometry(ts, lat, lon)["zenith"] < 90.0
    order = np.argsort(ts, kind="stable")
    return Dataset(ts[order], pv[order], X[order], tuple(feat_cols), day[order], lat, lon)


def ingest_prices_csv(path) -> PriceSeries:
    """Read ``timestamp, dam, rtm_up, rtm_down`` (EUR/MWh) into a :class:`PriceSeries`."""
    cols = ["timestamp", "dam", "rtm_up", "rtm_down"]
    df, ts = _read_frame(path, cols)
    vals = _parse_numeric_frame(df, cols[1:], "price")
    order = np.argsort(ts, kind="stable")
    return PriceSeries(ts[order], *(vals[order, k] for k in range(3)))


def _iso(ts: np.ndarray) -> list:
    return [str(t) + "Z" for t in ts.astype("datetime64[s]")]


def write_dataset_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "pv", "day_flag", *ds.feature_names])
        for t, pv, day, row in zip(_iso(ds.timestamps), ds.pv, ds.day_flag, ds.features):
            w.writerow([t, repr(float(pv)), int(day), *(repr(float(v)) for v in row)])


def write_prices_csv(prices: PriceSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "dam", "rtm_up", "rtm_down"])
        for row in zip(_iso(prices.timestamps), prices.dam, prices.rtm_up, prices.rtm_down):
            w.writerow([row[0], *(repr(float(v)) for v in row[1:])])


# ---------------------------------------------------------------- cleaning

def _to_hourly(ds: Dataset, min_coverage: float) -> Dataset:
    ts = ds.timestamps
    on_hour = np.all(ts.astype("datetime64[h]").astype("datetime64[s]") == ts)
    if on_hour:
        return ds
    diffs = np.diff(ts).astype(float)
    step = float(np.median(diffs[diffs > 0])) if diffs.size else 3600.0
    expected = max(1, int(round(3600.0 / step)))
    frame = pd.DataFrame(ds.features, columns=list(ds.feature_names))
    frame.insert(0, "__pv", ds.pv)
    hours = ts.astype("datetime64[h]").astype("datetime64[s]")
    grouped = frame.groupby(hours, sort=True)
    means = grouped.mean()
    counts = grouped.size()
    keep = (counts.to_numpy() >= min_coverage * expected)
    means = means[keep]
    hts = means.index.to_numpy().astype("datetime64[s]")
    return Dataset(hts, means["__pv"].to_numpy(), means.drop(columns="__pv").to_numpy(),
                   ds.feature_names, np.ones(len(hts), bool), ds.lat, ds.lon)


def preprocess(raw: Dataset, cap: float = 1.05, csi_bound: float = 1.3,
               csi_floor: float = 0.02, min_coverage: float = 0.5,
               add_solar: bool = True) -> Dataset:
    """Hourly averaging, night zeroing, outlier removal and clamping.

    Sub-hourly input is averaged per hour; hours with less than
    ``min_coverage`` of the expected samples are dropped. Night hours
    (midpoint zenith >= 90 deg) get ``pv = 0``. Records with ``pv > cap``
    or ``pv > max(csi_bound * GHI_cs / 1000, csi_floor)`` are removed, the
    rest clamped to ``[0, 1]``. Missing solar columns are appended when
    ``add_solar`` is set.
    """
    if cap <= 1.0:
        raise ValueError("cap must exceed 1")
    ds = _to_hourly(raw, min_coverage)
    geo = solar_geometry(ds.timestamps + HALF_HOUR, ds.lat, ds.lon)
    hod = solar_geometry(ds.timestamps, ds.lat, ds.lon)
    geo["hod_cos"], geo["hod_sin"] = hod["hod_cos"], hod["hod_sin"]
    day = geo["zenith"] < 90.0
    pv = np.where(day, ds.pv, 0.0)
    bound = np.maximum(csi_bound * geo["clear_sky_ghi"] / 1000.0, csi_floor)
    keep = (pv <= cap) & (pv <= bound) & np.isfinite(pv) & np.all(np.isfinite(ds.features), axis=1)
    out = ds.replace(pv=np.clip(pv, 0.0, 1.0), day_flag=day)
    if add_solar:
        new = [c for c in SOLAR_COLUMNS if c not in out.feature_names]
        if new:
            out = out.with_columns(new, np.column_stack([geo[c] for c in new]))
    out = out.subset(keep)
    if len(out) == 0:
        raise DataError("no records left after preprocessing")
    return out


def split(ds: Dataset, spec: SplitSpec):
    """Chronological train/calibration/test split keeping day records only."""
    ts = ds.timestamps
    parts = (ts < spec.train_end,
             (ts >= spec.train_end) & (ts < spec.cal_end),
             ts >= spec.cal_end)
    out = []
    for name, mask in zip(("train", "calibration", "test"), parts):
        sub = ds.subset(mask & ds.day_flag)
        if len(sub) == 0:
            raise DataError(f"{name} partition is empty")
        out.append(sub)
    return tuple(out)


# ---------------------------------------------------------------- synthesis

SYNTH_FEATURES = ("ssrd", "cloud_cover", "temperature", "wind_speed") + SOLAR_COLUMNS


def _ar1(rng, n, phi, sd):
    e = rng.normal(0.0, sd, n)
    out = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = phi * acc + e[i]
        out[i] = acc
    return out


def synth_generate(seed: int, days: int, lat: float = DE_BILT[0], lon: float = DE_BILT[1],
                   start: str = "2014-01-01", no_arbitrage: bool = False):
    """Seeded synthetic PV/weather/price year(s).

    PV follows a clear-sky-index process driven by a persistent cloud field;
    the features are noisy day-ahead "forecasts" of that field plus solar
    geometry, so forecast error is larger in broken-cloud conditions. Prices
    have a daily shape and heavy-tailed imbalance deltas. With
    ``no_arbitrage`` every hour satisfies ``rtm_up >= dam >= rtm_down >= 0``.

    Returns ``(Dataset, PriceSeries)``; the dataset is already clean (pv in
    [0, 1], zero at night).
    """
    if days < 3:
        raise ValueError("days must be at least 3")
    rng = np.random.default_rng(seed)
    n = days * 24
    t0 = np.datetime64(start, "s")
    ts = t0 + np.arange(n) * np.timedelta64(3600, "s")
    geo = solar_geometry(ts + HALF_HOUR, lat, lon)
    hod = solar_geometry(ts, lat, lon)
    doy = (ts.astype("datetime64[D]") - ts.astype("datetime64[Y]").astype("datetime64[D]")).astype(float)
    hour = (ts - ts.astype("datetime64[D]").astype("datetime64[s]")).astype(float) / 3600.0
    season = np.cos(2 * np.pi * (doy - 15.0) / 365.25)  # +1 mid-January

    day_level = np.repeat(_ar1(rng, days, 0.6, 1.0), 24)
    hourly = _ar1(rng, n, 0.8, 0.45)
    cloud = 1.0 / (1.0 + np.exp(-(0.2 + 0.8 * season + 2.0 * day_level + 1.5 * hourly)))
    csi = 1.0 - 0.75 * cloud ** 3.4
    csi = np.clip(csi * np.exp(rng.normal(0.0, 0.06, n)), 0.05, 1.15)
    ghi_cs = geo["clear_sky_ghi"]
    day = geo["zenith"] < 90.0
    pv = np.clip(0.95 * csi * ghi_cs / 1000.0, 0.0, 1.0)
    pv = np.where(day, pv, 0.0)

    # forecast error is largest for broken cloud
    fc_sd = 0.08 + 0.9 * cloud * (1.0 - cloud)
    cloud_fc = np.clip(cloud + fc_sd * rng.normal(size=n), 0.0, 1.0)
    ssrd = ghi_cs * (1.0 - 0.75 * cloud_fc ** 3.4) * np.exp(rng.normal(0.0, 0.1, n))
    temp = (10.0 - 7.0 * season + 3.0 * np.sin(2 * np.pi * (hour - 9.0) / 24.0)
            + 4.0 * (1.0 - cloud) * (ghi_cs / 1000.0) + rng.normal(0.0, 1.5, n))
    wind = np.abs(3.0 + 1.5 * season + 3.0 * cloud + rng.normal(0.0, 1.5, n))

    X = np.column_stack([ssrd, cloud_fc, temp, wind, ghi_cs, geo["zenith"], geo["azimuth"],
                         hod["hod_cos"], hod["hod_sin"]])
    ds = Dataset(ts, pv, X, SYNTH_FEATURES, day, lat, lon)

    shape = (6.0 * np.exp(-0.5 * ((hour - 8.0) / 1.5) ** 2)
             + 10.0 * np.exp(-0.5 * ((hour - 19.0) / 2.0) ** 2) - 6.0 * (hour < 6))
    level = np.repeat(_ar1(rng, days, 0.85, 4.0), 24)
    dam = 42.0 + 6.0 * season + shape + level - 12.0 * pv + rng.normal(0.0, 3.0, n)
    dam = np.maximum(dam, 2.0)
    shift = 10.0 * rng.standard_t(3, n)
    spread_up = np.abs(rng.normal(0.0, 3.0, n)) + rng.exponential(1.0, n)
    spread_down = np.abs(rng.normal(0.0, 3.0, n)) + rng.exponential(1.0, n)
    if no_arbitrage:
        d_up = np.maximum(shift, 0.0) + spread_up
        d_down = np.minimum(np.maximum(-shift, 0.0) + spread_down, dam)
    else:
        d_up = shift + spread_up
        d_down = -shift + spread_down
        inverted = rng.random(n) < 0.003
        excess = spread_up + spread_down + np.abs(rng.normal(0.0, 3.0, n))
        d_down = np.where(inverted, d_down - excess, d_down)
    prices = PriceSeries(ts, dam, dam + d_up, dam - d_down)
    return ds, prices
