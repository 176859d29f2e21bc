"""
Monte Carlo scenarios from a fitted model.

Random numbers come from Philox-4x64-10 (numpy's counter-based generator)
with ``key = seed`` and the scenario index placed in counter word 2, so
scenario ``i`` always sees the same normals whatever ``M`` is, and the
streams of different scenarios never overlap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataError, NumericalError
from .gaussianize import from_gaussian_array
from .glasso import GraphicalModel


def scenario_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(index), 0]))


def standard_normals(seed: int, M: int, shape: tuple) -> np.ndarray:
    """``(M, *shape)`` independent N(0, 1) draws, one Philox stream per row."""
    if M < 1:
        raise ValueError("need at least one scenario")
    out = np.empty((M, *shape))
    for i in range(M):
        out[i] = scenario_rng(seed, i).standard_normal(shape)
    return out


def _chol(M, name):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{name} covariance factor is not positive definite") from None


def sample_kronecker_gaussian(model: GraphicalModel, M: int, seed: int) -> np.ndarray:
    """Draw ``M`` matrices ``sqrt(scale) * L_A G L_B'`` of shape ``(Z, L)``.

    ``L_A``, ``L_B`` are Cholesky factors of the spatial and temporal
    covariances, so the flattened draws have covariance
    ``scale * spatial_cov (x) temporal_cov``.
    """
    LA = _chol(model.spatial_cov, "spatial")
    LB = _chol(model.temporal_cov, "temporal")
    G = standard_normals(seed, M, (model.n_zones, model.n_lags))
    return np.sqrt(model.scale) * np.einsum("zy,myk,lk->mzl", LA, G, LB)


@dataclass
class ScenarioBatch:
    issue_time: pd.Timestamp
    variables: list
    scenarios: np.ndarray  # (M, Z, L), physical units
    forecast: np.ndarray  # (Z, L)
    seed: int

    @property
    def M(self) -> int:
        return self.scenarios.shape[0]

    def to_csv(self, path):
        M, Z, L = self.scenarios.shape
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("scenario_id,variable,zone,lag,value\n")
            for m in range(M):
                for z, (kind, zone) in enumerate(self.variables):
                    row = self.scenarios[m, z]
                    fh.writelines(f"{m},{kind},{zone},{l},{float(row[l])!r}\n" for l in range(L))


@dataclass
class ScenarioBand:
    variables: list
    lower: np.ndarray  # (Z, L)
    upper: np.ndarray
    trim: float

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return (values >= self.lower) & (values <= self.upper)

    def to_csv(self, path):
        Z, L = self.lower.shape
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("variable,zone,lag,lower,upper\n")
            for z, (kind, zone) in enumerate(self.variables):
                for l in range(L):
                    fh.write(f"{kind},{zone},{l},{float(self.lower[z, l])!r},{float(self.upper[z, l])!r}\n")


def scenarios(bundle, forecast, issue_time, M: int = 1000, seed: int = 0) -> ScenarioBatch:
    """Scenarios of the actual quantities for the ``L`` hours after ``issue_time``.

    Per draw: Kronecker Gaussian scores, pushed through each (zone, lag)
    marginal quantile, plus the seasonal component at ``issue_time``, plus
    the point forecast.
    """
    graph = bundle.graph
    variables = [tuple(v) for v in bundle.variables]
    if [tuple(v) for v in graph.variables] != variables or list(bundle.seasonal.variables) != variables:
        raise DataError("variable order differs between bundle parts")
    forecast = np.asarray(forecast, dtype=float)
    if forecast.shape != (graph.n_zones, graph.n_lags):
        raise DataError(f"forecast shape {forecast.shape}, expected {(graph.n_zones, graph.n_lags)}")
    t = pd.Timestamp(issue_time)
    t = t.tz_localize("UTC") if t.tz is None else t.tz_convert("UTC")

    scores = sample_kronecker_gaussian(graph, M, seed)
    remainders = from_gaussian_array(scores, bundle.marginals)
    seasonal = bundle.seasonal.evaluate(pd.DatetimeIndex([t]))[0]
    values = remainders + seasonal + forecast
    return ScenarioBatch(issue_time=t, variables=variables, scenarios=values, forecast=forecast, seed=int(seed))


def band(batch, trim: float = 0.05) -> ScenarioBand:
    """Per-coordinate ``trim`` and ``1 - trim`` sample quantiles (linear interpolation).

    ``batch`` is a :class:`ScenarioBatch` or a bare ``(M, Z, L)`` array.
    """
    S = batch.scenarios if isinstance(batch, ScenarioBatch) else np.asarray(batch, dtype=float)
    variables = batch.variables if isinstance(batch, ScenarioBatch) else [("", str(z)) for z in range(S.shape[1])]
    if not 0 <= trim < 0.5:
        raise ValueError(f"trim must lie in [0, 0.5), got {trim}")
    M = S.shape[0]
    if trim > 0 and M < 1 / trim:
        raise ValueError(f"{M} scenarios is too few for trim {trim}; need at least {1 / trim:.0f}")
    lo, hi = np.quantile(S, [trim, 1 - trim], axis=0, method="linear")
    return ScenarioBand(variables=variables, lower=lo, upper=hi, trim=trim)


@dataclass
class CoverageReport:
    inside: np.ndarray  # (Z, L) bool
    band: ScenarioBand

    @property
    def fraction(self) -> float:
        return float(self.inside.mean())

    def to_csv(self, path, actuals):
        Z, L = self.inside.shape
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("variable,zone,lag,actual,lower,upper,inside\n")
            for z, (kind, zone) in enumerate(self.band.variables):
                for l in range(L):
                    fh.write(f"{kind},{zone},{l},{float(actuals[z, l])!r},{float(self.band.lower[z, l])!r},"
                             f"{float(self.band.upper[z, l])!r},{int(self.inside[z, l])}\n")


def coverage_report(batch, actuals, trim: float = 0.05) -> CoverageReport:
    """Which realized values fall inside the trimmed scenario band.

    ``batch`` may also be a precomputed :class:`ScenarioBand`.
    """
    b = batch if isinstance(batch, ScenarioBand) else band(batch, trim)
    actuals = np.asarray(actuals, dtype=float)
    if actuals.shape != b.lower.shape:
        raise DataError(f"actuals shape {actuals.shape}, expected {b.lower.shape}")
    if not np.isfinite(actuals).all():
        raise DataError("missing actuals")
    return CoverageReport(inside=b.contains(actuals), band=b)
