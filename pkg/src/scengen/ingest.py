"""
Reading actuals / rolling forecasts and building deviation panels.

A deviation panel holds, for every forecast issue time ``t``, the
``Z x L`` matrix ``actual(t + lag) - forecast(t, lag)`` over the requested
(kind, zone) variables. Issue times with any missing cell are dropped.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError

logger = logging.getLogger(__name__)

N_LAGS = 24
KINDS = ("load", "wind")

HOUR = np.timedelta64(1, "h")


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping and timestamp handling for an input CSV.

    ``tz`` is the zone naive timestamps are interpreted in (they are then
    converted to UTC). ``ambiguous`` is forwarded to pandas for DST fall-back
    hours in local-time inputs.
    """

    timestamp: str = "timestamp"
    issue_timestamp: str = "issue_timestamp"
    lag: str = "lag"
    zone: str = "zone"
    value: str = "value"
    tz: str = "UTC"
    ambiguous: str = "raise"

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "CsvSchema":
        return cls(**(d or {}))


@dataclass(frozen=True)
class ActualsSeries:
    zone: str
    timestamps: pd.DatetimeIndex
    values: np.ndarray
    kind: str = "load"

    def __len__(self):
        return len(self.values)

    @property
    def gaps(self) -> pd.DatetimeIndex:
        """Timestamps that follow a spacing larger than one hour."""
        d = np.diff(self.timestamps.values)
        return self.timestamps[1:][d > HOUR]

    def as_series(self) -> pd.Series:
        return pd.Series(self.values, index=self.timestamps)


@dataclass(frozen=True)
class ForecastPanel:
    """Point forecasts, one row per issue time, one column per lag (NaN = missing)."""

    zone: str
    issue_times: pd.DatetimeIndex
    values: np.ndarray
    kind: str = "load"

    @property
    def n_lags(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DeviationPanel:
    """``n x Z x L`` tensor of actual minus forecast.

    The same container is used for seasonal remainders and Gaussian scores;
    only the meaning of ``data`` changes.
    """

    variables: list[tuple[str, str]]
    issue_times: pd.DatetimeIndex
    data: np.ndarray
    dropped: int = 0
    units: str = "MW"

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"panel data must be 3-d, got shape {self.data.shape}")
        n, Z, _ = self.data.shape
        if Z != len(self.variables):
            raise ValueError(f"{Z} zone slices but {len(self.variables)} variables")
        if n != len(self.issue_times):
            raise ValueError(f"{n} rows but {len(self.issue_times)} issue times")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def n_zones(self) -> int:
        return self.data.shape[1]

    @property
    def n_lags(self) -> int:
        return self.data.shape[2]

    @property
    def dim(self) -> int:
        return self.n_zones * self.n_lags

    def flat(self) -> np.ndarray:
        """``n x (Z*L)`` view; column ``z*L + lag``."""
        return self.data.reshape(self.n, -1)

    def with_data(self, data: np.ndarray) -> "DeviationPanel":
        return replace(self, data=np.asarray(data, dtype=float))

    def select(self, mask) -> "DeviationPanel":
        return replace(self, issue_times=self.issue_times[mask], data=self.data[mask])


RemainderPanel = DeviationPanel
GaussianPanel = DeviationPanel


def _read_csv(path, required: Sequence[str]) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    return df


def _line(i) -> int:
    # data row i sits on file line i + 2 (header is line 1)
    return int(i) + 2


def _parse_times(raw: pd.Series, schema: CsvSchema, path) -> pd.DatetimeIndex:
    ts = pd.to_datetime(raw, errors="coerce", utc=False, format="ISO8601")
    bad = ts.isna()
    if bad.any():
        i = np.flatnonzero(bad.values)[0]
        raise DataError(f"{path}: line {_line(i)}: unparseable timestamp {raw.iloc[i]!r}")
    ts = pd.DatetimeIndex(ts)
    if ts.tz is None:
        ts = ts.tz_localize(schema.tz, ambiguous=schema.ambiguous)
    return ts.tz_convert("UTC")


def _parse_values(raw: pd.Series, path, what="value") -> np.ndarray:
    v = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(v)
    if bad.any():
        i = np.flatnonzero(bad)[0]
        raise DataError(f"{path}: line {_line(i)}: non-numeric {what} {raw.iloc[i]!r}")
    return v


def load_actuals(path, schema: CsvSchema | Mapping | None = None, kind: str = "load") -> dict[str, ActualsSeries]:
    """Read an actuals CSV into one :class:`ActualsSeries` per zone.

    Parameters
    ----------
    path : path-like
        CSV with a header; columns named by ``schema`` (default
        ``timestamp,zone,value``).
    schema : CsvSchema or dict, optional
        Column mapping overrides.
    kind : {"load", "wind"}
        Variable kind attached to every returned series.

    Returns
    -------
    dict
        zone name -> series, zones in order of first appearance.
    """
    if not isinstance(schema, CsvSchema):
        schema = CsvSchema.from_dict(schema)
    df = _read_csv(path, [schema.timestamp, schema.zone, schema.value])
    ts = _parse_times(df[schema.timestamp], schema, path)
    vals = _parse_values(df[schema.value], path)
    zones = df[schema.zone].to_numpy()

    key = pd.DataFrame({"ts": ts, "zone": zones})
    dup = key.duplicated()
    if dup.any():
        i = np.flatnonzero(dup.values)[0]
        raise DataError(f"{path}: line {_line(i)}: duplicate (timestamp, zone) = ({ts[i]}, {zones[i]})")

    out = {}
    for zone in pd.unique(zones):
        m = zones == zone
        order = np.argsort(ts[m].values, kind="stable")
        s = ActualsSeries(zone=str(zone), timestamps=ts[m][order], values=vals[m][order], kind=kind)
        if len(s.gaps):
            logger.warning("%s zone %s: %d gaps in hourly actuals", path, zone, len(s.gaps))
        out[str(zone)] = s
    return out


def load_forecasts(path, schema: CsvSchema | Mapping | None = None, kind: str = "load",
                   n_lags: int = N_LAGS) -> dict[str, ForecastPanel]:
    """Read a rolling-forecast CSV (``issue_timestamp,lag,zone,value``).

    Cells absent from the file are NaN in the assembled matrix; rows are in
    issue-time order.
    """
    if not isinstance(schema, CsvSchema):
        schema = CsvSchema.from_dict(schema)
    df = _read_csv(path, [schema.issue_timestamp, schema.lag, schema.zone, schema.value])
    ts = _parse_times(df[schema.issue_timestamp], schema, path)
    vals = _parse_values(df[schema.value], path)
    lag_raw = df[schema.lag].str.strip()
    ok = lag_raw.str.fullmatch(r"[+-]?\d+")
    if not ok.all():
        i = np.flatnonzero(~ok.values)[0]
        raise DataError(f"{path}: line {_line(i)}: lag {lag_raw.iloc[i]!r} is not an integer")
    lags = lag_raw.astype(int).to_numpy()
    bad = (lags < 0) | (lags >= n_lags)
    if bad.any():
        i = np.flatnonzero(bad)[0]
        raise DataError(f"{path}: line {_line(i)}: lag {lags[i]} outside 0..{n_lags - 1}")
    zones = df[schema.zone].to_numpy()

    key = pd.DataFrame({"ts": ts, "lag": lags, "zone": zones})
    dup = key.duplicated()
    if dup.any():
        i = np.flatnonzero(dup.values)[0]
        raise DataError(f"{path}: line {_line(i)}: duplicate (issue, lag, zone) = "
                        f"({ts[i]}, {lags[i]}, {zones[i]})")

    out = {}
    for zone in pd.unique(zones):
        m = zones == zone
        issues, row = np.unique(ts[m].values, return_inverse=True)
        mat = np.full((len(issues), n_lags), np.nan)
        mat[row, lags[m]] = vals[m]
        out[str(zone)] = ForecastPanel(zone=str(zone), issue_times=pd.DatetimeIndex(issues, tz="UTC"),
                                       values=mat, kind=kind)
    return out


def _index(items) -> dict[tuple[str, str], object]:
    if isinstance(items, Mapping):
        items = items.values()
    out = {}
    for it in items:
        if isinstance(it, Mapping):
            out.update(_index(it))
        else:
            out[(it.kind, it.zone)] = it
    return out


def build_deviation_panel(actuals: Iterable[ActualsSeries] | Mapping,
                          forecasts: Iterable[ForecastPanel] | Mapping,
                          variables: Sequence[tuple[str, str]]) -> DeviationPanel:
    """Align actuals with rolling forecasts and subtract.

    ``data[t, z, lag] = actual(issue_times[t] + lag hours) - forecast(issue_times[t], lag)``.
    Issue times where any of the ``Z*L`` cells is missing are dropped; the
    number dropped is stored on the panel.

    ``actuals`` / ``forecasts`` may be iterables of series, dicts of them
    (as returned by the loaders) or lists of such dicts.
    """
    variables = [(str(k), str(z)) for k, z in variables]
    if len(set(variables)) != len(variables):
        raise DataError(f"duplicate variables in {variables}")
    act = _index(actuals)
    fc = _index(forecasts)
    for v in variables:
        if v not in act:
            raise DataError(f"variable {v} absent from actuals")
        if v not in fc:
            raise DataError(f"variable {v} absent from forecasts")

    n_lags = {fc[v].n_lags for v in variables}
    if len(n_lags) != 1:
        raise DataError(f"forecast panels disagree on lag count: {sorted(n_lags)}")
    L = n_lags.pop()

    issues = fc[variables[0]].issue_times
    for v in variables[1:]:
        issues = issues.intersection(fc[v].issue_times)
    issues = issues.sort_values()
    if len(issues) == 0:
        raise DataError("no issue time common to all requested variables")

    targets = issues.values[:, None] + np.arange(L) * HOUR
    data = np.empty((len(issues), len(variables), L))
    for j, v in enumerate(variables):
        f = fc[v]
        rows = f.issue_times.get_indexer(issues)
        a = act[v].as_series()
        a_idx = a.index.get_indexer(pd.DatetimeIndex(targets.ravel(), tz="UTC"))
        a_vals = np.where(a_idx >= 0, a.to_numpy()[a_idx], np.nan).reshape(targets.shape)
        data[:, j, :] = a_vals - f.values[rows]

    keep = np.isfinite(data).all(axis=(1, 2))
    dropped = int((~keep).sum())
    if not keep.any():
        raise DataError("every issue time has missing actual or forecast data")
    if dropped:
        logger.info("dropped %d of %d issue times with incomplete data", dropped, len(issues))
    return DeviationPanel(variables=variables, issue_times=issues[keep], data=data[keep], dropped=dropped)


def forecast_matrix(forecasts, variables: Sequence[tuple[str, str]], issue_time) -> np.ndarray:
    """``Z x L`` forecast baseline at one issue time; raises if incomplete."""
    fc = _index(forecasts)
    t = pd.Timestamp(issue_time)
    t = t.tz_localize("UTC") if t.tz is None else t.tz_convert("UTC")
    rows = []
    for v in variables:
        v = (str(v[0]), str(v[1]))
        if v not in fc:
            raise DataError(f"variable {v} absent from forecasts")
        f = fc[v]
        i = f.issue_times.get_indexer([t])[0]
        if i < 0 or not np.isfinite(f.values[i]).all():
            raise DataError(f"no complete forecast for {v} issued at {t.isoformat()}")
        rows.append(f.values[i])
    return np.vstack(rows)


def actual_matrix(actuals, variables: Sequence[tuple[str, str]], issue_time, n_lags: int = N_LAGS) -> np.ndarray:
    """``Z x L`` realized actuals for the 24 hours after ``issue_time``."""
    act = _index(actuals)
    t = pd.Timestamp(issue_time)
    t = t.tz_localize("UTC") if t.tz is None else t.tz_convert("UTC")
    targets = pd.DatetimeIndex([t + pd.Timedelta(hours=h) for h in range(n_lags)])
    rows = []
    for v in variables:
        v = (str(v[0]), str(v[1]))
        if v not in act:
            raise DataError(f"variable {v} absent from actuals")
        a = act[v].as_series()
        idx = a.index.get_indexer(targets)
        if (idx < 0).any():
            raise DataError(f"missing actuals for {v} in the {n_lags} h after {t.isoformat()}")
        rows.append(a.to_numpy()[idx])
    return np.vstack(rows)
