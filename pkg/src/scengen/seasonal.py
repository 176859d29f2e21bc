"""
Linear trend + harmonic regression, fitted independently per (zone, lag).

For every deviation series the model is::

    value(t) ~ intercept + slope * t + sum_k [a_k cos(2 pi t / P_k) + b_k sin(2 pi t / P_k)]

with ``t`` in hours since the first training issue time. All ``Z*L`` series
share the design matrix, so a single least-squares solve handles them.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .ingest import DeviationPanel

logger = logging.getLogger(__name__)

DEFAULT_PERIODS = (24.0, 168.0, 8766.0)


def hours_since(times: pd.DatetimeIndex, origin: pd.Timestamp) -> np.ndarray:
    return (pd.DatetimeIndex(times) - origin) / pd.Timedelta(hours=1)


def design_matrix(t: np.ndarray, periods: Sequence[float]) -> np.ndarray:
    """Columns: 1, t, then (cos, sin) for each period."""
    t = np.asarray(t, dtype=float)
    cols = [np.ones_like(t), t]
    for P in periods:
        w = 2 * np.pi * t / P
        cols += [np.cos(w), np.sin(w)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class SeasonalModel:
    """Per-(zone, lag) trend and harmonic coefficients.

    ``coefs`` has shape ``(Z, L, 2 + 2 * len(periods))`` laid out as
    ``[intercept, slope, cos_1, sin_1, cos_2, sin_2, ...]``.
    """

    variables: list[tuple[str, str]]
    origin: pd.Timestamp
    periods: tuple[float, ...]
    coefs: np.ndarray

    @property
    def intercept(self) -> np.ndarray:
        return self.coefs[..., 0]

    @property
    def trend_slope(self) -> np.ndarray:
        return self.coefs[..., 1]

    def harmonic_coefs(self, z: int, lag: int) -> list[tuple[float, float, float]]:
        c = self.coefs[z, lag]
        return [(P, c[2 + 2 * k], c[3 + 2 * k]) for k, P in enumerate(self.periods)]

    def evaluate(self, times) -> np.ndarray:
        """Fitted component at arbitrary issue times, shape ``(n, Z, L)``."""
        times = pd.DatetimeIndex(times if not isinstance(times, pd.Timestamp) else [times])
        X = design_matrix(hours_since(times, self.origin), self.periods)
        Z, L, P = self.coefs.shape
        C = np.ascontiguousarray(self.coefs, dtype=float).reshape(Z * L, P)
        return (X @ C.T).reshape(len(times), Z, L)

    def _check(self, panel: DeviationPanel):
        if list(panel.variables) != list(self.variables):
            raise ValueError(f"panel variables {panel.variables} do not match model {self.variables}")
        if panel.data.shape[1:] != self.coefs.shape[:2]:
            raise ValueError(f"panel shape {panel.data.shape[1:]} vs model {self.coefs.shape[:2]}")


def fit_seasonal(panel: DeviationPanel, periods: Sequence[float] = DEFAULT_PERIODS) -> SeasonalModel:
    """OLS fit of trend + harmonics to every (zone, lag) series of ``panel``.

    Periods longer than the observed time span cannot be separated from the
    trend; they are dropped with a warning.

    Raises
    ------
    ValueError
        If fewer than ten observations per coefficient remain, or a period
        is non-positive / repeated.
    """
    periods = tuple(float(p) for p in periods)
    if any(p <= 0 for p in periods) or len(set(periods)) != len(periods):
        raise ValueError(f"periods must be positive and distinct, got {periods}")
    origin = panel.issue_times[0]
    t = hours_since(panel.issue_times, origin)
    span = t[-1] - t[0] + 1 if len(t) else 0

    kept = tuple(p for p in periods if p <= span)
    if kept != periods:
        msg = f"periods {[p for p in periods if p > span]} exceed the {span:g} h data span; dropped"
        warnings.warn(msg, stacklevel=2)

    X = design_matrix(t, kept)
    if panel.n < 10 * X.shape[1]:
        raise ValueError(f"{panel.n} observations for {X.shape[1]} coefficients; need >= {10 * X.shape[1]}")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("rank-deficient seasonal design; check the period set against the sampling times")

    Y = panel.flat()
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    # contiguous copy so a reloaded bundle evaluates bit-identically
    coefs = np.ascontiguousarray(beta.T).reshape(panel.n_zones, panel.n_lags, X.shape[1])
    return SeasonalModel(variables=list(panel.variables), origin=origin, periods=kept, coefs=coefs)


def remove_seasonal(panel: DeviationPanel, model: SeasonalModel) -> DeviationPanel:
    model._check(panel)
    return panel.with_data(panel.data - model.evaluate(panel.issue_times))


def restore_seasonal(panel: DeviationPanel, model: SeasonalModel) -> DeviationPanel:
    model._check(panel)
    return panel.with_data(panel.data + model.evaluate(panel.issue_times))
