"""
Gaussian-copula forward and inverse transforms for whole panels.

Each entry is mapped through its own marginal and then the standard normal
quantile. To keep precision in the upper tail, values above the marginal
median go through the survival function instead of ``1 - cdf``.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from .ingest import DeviationPanel

# Phi and Phi^-1 come from scipy.special (Cephes rational approximations).
norm_cdf = special.ndtr
norm_ppf = special.ndtri


def _check(panel: DeviationPanel, dists):
    Z, L = panel.data.shape[1:]
    if len(dists) != Z or any(len(row) != L for row in dists):
        raise ValueError(f"need {Z} x {L} marginals, got {len(dists)} x {[len(r) for r in dists]}")


def to_scores(x: np.ndarray, dist) -> np.ndarray:
    """Normal scores ``Phi^-1(F(x))`` of one series."""
    x = np.asarray(x, dtype=float)
    F = dist.cdf(x)
    S = dist.sf(x)
    return np.where(F < 0.5, norm_ppf(F), -norm_ppf(S))


def from_scores(z: np.ndarray, dist) -> np.ndarray:
    """Inverse of :func:`to_scores`: ``F^-1(Phi(z))``."""
    z = np.asarray(z, dtype=float)
    lo = dist.quantile(norm_cdf(np.minimum(z, 0)))
    hi = dist.isf(norm_cdf(-np.maximum(z, 0)))
    return np.where(z < 0, lo, hi)


def to_gaussian(panel: DeviationPanel, dists) -> DeviationPanel:
    """Map a remainder panel to standard-normal scores, entry by entry."""
    _check(panel, dists)
    out = np.empty_like(panel.data)
    for z, row in enumerate(dists):
        for l, d in enumerate(row):
            out[:, z, l] = to_scores(panel.data[:, z, l], d)
    return panel.with_data(out)


def from_gaussian(panel: DeviationPanel, dists) -> DeviationPanel:
    _check(panel, dists)
    return panel.with_data(from_gaussian_array(panel.data, dists))


def from_gaussian_array(scores: np.ndarray, dists) -> np.ndarray:
    """``(..., Z, L)`` scores to remainders without a panel wrapper."""
    scores = np.asarray(scores, dtype=float)
    out = np.empty_like(scores)
    for z, row in enumerate(dists):
        for l, d in enumerate(row):
            out[..., z, l] = from_scores(scores[..., z, l], d)
    return out
