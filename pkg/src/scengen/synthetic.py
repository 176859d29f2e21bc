"""
Synthetic ERCOT-like data with a known generating model.

Deviations for each issue time are drawn from the same kind of model the
package fits: Kronecker-structured Gaussian scores, heavy-tailed marginals,
and a deterministic daily component. Forecasts are then defined as
``actual - deviation`` so the CSV files look like real rolling forecasts.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import special

from .ingest import N_LAGS, DeviationPanel

LOAD_ZONES = ("West", "North", "South", "Houston")
WIND_ZONES = ("West", "North", "South", "Coastal", "Panhandle")
TEXAS_LOAD = [("load", z) for z in LOAD_ZONES]
TEXAS_WIND = [("wind", z) for z in WIND_ZONES]
TEXAS_JOINT = TEXAS_LOAD + TEXAS_WIND

_BODY = 0.05  # tail mass beyond each threshold of the synthetic marginal


def ar1_correlation(n: int, rho: float) -> np.ndarray:
    i = np.arange(n)
    return rho ** np.abs(i[:, None] - i[None, :])


def chain_correlation(n: int, rho: float) -> np.ndarray:
    """Correlation whose inverse is tridiagonal (AR(1) along the zone order)."""
    return ar1_correlation(n, rho)


def block_diag(*blocks) -> np.ndarray:
    n = sum(len(b) for b in blocks)
    out = np.zeros((n, n))
    k = 0
    for b in blocks:
        m = len(b)
        out[k:k + m, k:k + m] = b
        k += m
    return out


def heavy_tail_quantile(u, xi_lower: float = 0.0, xi_upper: float = 0.0) -> np.ndarray:
    """Standard-normal body on the middle 90 %, GPD tails outside.

    Tail scales are set so the density is continuous at the thresholds.
    """
    u = np.asarray(u, dtype=float)
    th = special.ndtri(1 - _BODY)
    beta = _BODY / (np.exp(-th ** 2 / 2) / np.sqrt(2 * np.pi))

    def excess(s, xi):
        return -beta * np.log(s) if xi == 0 else beta / xi * (s ** -xi - 1)

    with np.errstate(divide="ignore", invalid="ignore"):
        out = special.ndtri(u)
        out = np.where(u > 1 - _BODY, th + excess((1 - u) / _BODY, xi_upper), out)
        out = np.where(u < _BODY, -th - excess(u / _BODY, xi_lower), out)
    return out


@dataclass
class SyntheticTruth:
    variables: list
    spatial_corr: np.ndarray
    temporal_corr: np.ndarray
    xi: np.ndarray  # (Z, 2): lower, upper
    sd: np.ndarray  # (Z, L)
    daily_amp: np.ndarray  # (Z,)
    origin: pd.Timestamp

    def seasonal(self, times) -> np.ndarray:
        t = (pd.DatetimeIndex(times) - self.origin) / pd.Timedelta(hours=1)
        L = self.sd.shape[1]
        return self.daily_amp[None, :, None] * np.cos(2 * np.pi * (np.asarray(t)[:, None, None]
                                                                   + np.arange(L)[None, None, :]) / 24)

    def marginal_quantile(self, u) -> np.ndarray:
        """Apply each zone's heavy-tailed quantile to ``u`` of shape ``(..., Z, L)``."""
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        for z in range(len(self.variables)):
            out[..., z, :] = heavy_tail_quantile(u[..., z, :], *self.xi[z]) * self.sd[z]
        return out


def default_truth(variables=TEXAS_JOINT, n_lags: int = N_LAGS, rho_time: float = 0.8,
                  rho_space: float = 0.6, xi_heavy: float = 0.3,
                  origin="2018-01-01T00:00Z") -> SyntheticTruth:
    """Load block and wind block independent of each other.

    Load zones get a heavy upper tail, wind zones a heavy lower tail.
    """
    kinds = [k for k, _ in variables]
    load = [i for i, k in enumerate(kinds) if k == "load"]
    wind = [i for i, k in enumerate(kinds) if k == "wind"]
    Z = len(variables)
    A = np.eye(Z)
    for grp in (load, wind):
        if grp:
            A[np.ix_(grp, grp)] = chain_correlation(len(grp), rho_space)
    xi = np.array([[0.0, xi_heavy] if k == "load" else [xi_heavy, 0.0] for k in kinds])
    base = np.array([300.0 if k == "load" else 200.0 for k in kinds])
    sd = base[:, None] * (0.5 + np.arange(n_lags)[None, :] / n_lags)
    amp = np.array([80.0 if k == "load" else 40.0 for k in kinds])
    return SyntheticTruth(variables=list(variables), spatial_corr=A, temporal_corr=ar1_correlation(n_lags, rho_time),
                          xi=xi, sd=sd, daily_amp=amp, origin=pd.Timestamp(origin))


def matrix_normal(rng, n: int, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``n`` draws ``L_A G L_B'`` with row covariance ``A`` and column covariance ``B``."""
    LA, LB = np.linalg.cholesky(A), np.linalg.cholesky(B)
    G = rng.standard_normal((n, len(A), len(B)))
    return np.einsum("zy,nyk,lk->nzl", LA, G, LB)


def sample_deviations(truth: SyntheticTruth, issue_times, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    scores = matrix_normal(rng, len(issue_times), truth.spatial_corr, truth.temporal_corr)
    return truth.marginal_quantile(special.ndtr(scores)) + truth.seasonal(issue_times)


def synthetic_panel(truth: SyntheticTruth | None = None, n: int = 2000, seed: int = 0) -> DeviationPanel:
    truth = truth or default_truth()
    times = pd.date_range(truth.origin, periods=n, freq="h")
    return DeviationPanel(variables=list(truth.variables), issue_times=times,
                          data=sample_deviations(truth, times, seed))


def _actual_levels(variables, times, rng) -> np.ndarray:
    """Plausible hourly actuals (MW), shape ``(T, Z)``."""
    h = np.asarray((times - times[0]) / pd.Timedelta(hours=1))
    out = np.empty((len(times), len(variables)))
    for z, (kind, _) in enumerate(variables):
        if kind == "load":
            lvl = 9000 + 1500 * z + 2000 * np.cos(2 * np.pi * (h - 17) / 24) + 500 * np.cos(2 * np.pi * h / 168)
        else:
            lvl = 3000 + 400 * z + 1200 * np.cos(2 * np.pi * (h - 3) / 24)
        out[:, z] = lvl + 50 * rng.standard_normal(len(h))
    return out


def write_dataset(out_dir, n_days: int = 60, seed: int = 2018, truth: SyntheticTruth | None = None,
                  n_lags: int = N_LAGS, config_extra: dict | None = None) -> Path:
    """Write actuals / forecasts CSVs for load and wind plus a ``config.json``.

    Returns the config path. Issue times are hourly from the truth origin;
    actuals extend ``n_lags - 1`` hours past the last issue time.
    """
    truth = truth or default_truth()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_issue = n_days * 24
    issues = pd.date_range(truth.origin, periods=n_issue, freq="h")
    times = pd.date_range(truth.origin, periods=n_issue + n_lags - 1, freq="h")
    actual = _actual_levels(truth.variables, times, rng)
    dev = sample_deviations(truth, issues, seed=seed + 1)
    # forecast(t, lag) = actual(t + lag) - deviation(t, lag)
    win = np.lib.stride_tricks.sliding_window_view(actual, n_lags, axis=0)  # (n_issue, Z, L)
    fc = win[:n_issue] - dev

    def stamp(ts):
        return ts.strftime("%Y-%m-%dT%H:%M:%SZ")

    t_str = np.asarray(stamp(times))
    i_str = np.asarray(stamp(issues))
    data = {}
    for kind in dict.fromkeys(k for k, _ in truth.variables):
        zs = [z for z, (k, _) in enumerate(truth.variables) if k == kind]
        with open(out / f"{kind}_actuals.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("timestamp,zone,value\n")
            for z in zs:
                name = truth.variables[z][1]
                fh.writelines(f"{t_str[i]},{name},{actual[i, z]:.3f}\n" for i in range(len(times)))
        with open(out / f"{kind}_forecasts.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("issue_timestamp,lag,zone,value\n")
            for z in zs:
                name = truth.variables[z][1]
                for i in range(n_issue):
                    row = fc[i, z]
                    fh.writelines(f"{i_str[i]},{l},{name},{row[l]:.3f}\n" for l in range(n_lags))
        data[kind] = {"actuals": f"{kind}_actuals.csv", "forecasts": f"{kind}_forecasts.csv"}

    cfg = {
        "data": data,
        "variables": [list(v) for v in truth.variables],
        "seasonal": {"periods": [24, 168, 8766]},
        "tails": {"threshold_quantile": 0.95, "min_exceedances": 30, "enabled": True},
        "glasso": {"lambda_spatial": 0.1, "lambda_temporal": 0.1, "tol": 1e-4, "max_iter": 200},
        "simulate": {"scenarios": 1000, "trim": 0.05, "seed": 42},
    }
    cfg.update(config_extra or {})
    path = out / "config.json"
    path.write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    return path
