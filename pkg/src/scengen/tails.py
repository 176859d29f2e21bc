"""
Semi-parametric marginals: empirical interior spliced with Generalized
Pareto tails.

Above the upper threshold ``u`` the survival function is
``p_u * (1 + xi (x - u) / beta) ** (-1 / xi)``; the lower tail is the same
law applied to ``l - x``. Between the thresholds the CDF interpolates the
order statistics linearly. All three pieces meet continuously.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import special

from .errors import DegenerateSample, InsufficientExceedances

logger = logging.getLogger(__name__)

CDF_CLAMP = 1e-12
XI_MIN, XI_MAX = -0.5, 1.0
_XI_ZERO = 1e-9
_GOLDEN = (math.sqrt(5) - 1) / 2


# ---------------------------------------------------------------------------
# GPD primitives
# ---------------------------------------------------------------------------

def gpd_loglik(y, xi, beta) -> float:
    """Log-likelihood of excesses ``y`` under GPD(xi, beta); ``-inf`` off support."""
    y = np.asarray(y, dtype=float)
    if beta <= 0:
        return -np.inf
    if abs(xi) < _XI_ZERO:
        return -y.size * math.log(beta) - y.sum() / beta
    z = xi * y / beta
    if np.any(z <= -1):
        return -np.inf
    return -y.size * math.log(beta) - (1 + 1 / xi) * np.log1p(z).sum()


def gpd_sf(y, xi, beta):
    """GPD survival function of the excess ``y >= 0``."""
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    if abs(xi) < _XI_ZERO:
        return np.exp(-y / beta)
    base = 1 + xi * y / beta
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(base > 0, np.maximum(base, 0) ** (-1 / xi), 0.0)
    return out


def gpd_isf(s, xi, beta):
    """Excess whose GPD survival probability is ``s`` (0 < s <= 1)."""
    s = np.asarray(s, dtype=float)
    if abs(xi) < _XI_ZERO:
        return -beta * np.log(s)
    return beta / xi * np.expm1(-xi * np.log(s))


def _profile_beta(y: np.ndarray, xis: np.ndarray, iters: int = 100) -> np.ndarray:
    """Scale maximizing the likelihood for each fixed shape in ``xis``.

    The score equation in beta reduces to
    ``mean(y / (beta + xi y)) = 1 / (1 + xi)``, whose left side is strictly
    decreasing on the support, so a bracketed Newton iteration is safe.
    """
    xis = np.atleast_1d(np.asarray(xis, dtype=float))
    ymax, ymean = y.max(), y.mean()
    lo = np.maximum(0.0, -xis * ymax)
    hi = np.maximum(ymean * (1 + np.abs(xis)) * 4, lo * 4 + ymean)
    beta = np.clip(ymean * (1 - np.minimum(xis, 0.9)), lo * 1.001 + 1e-12 * ymean, hi)
    target = 1 / (1 + xis)

    def h(b):
        d = b[:, None] + xis[:, None] * y[None, :]
        r = y[None, :] / d
        return r.mean(axis=1) - target, -(r / d).mean(axis=1)

    hv, _ = h(hi)
    while np.any(hv > 0):
        hi = np.where(hv > 0, hi * 2, hi)
        hv, _ = h(hi)

    for _ in range(iters):
        f, df = h(beta)
        lo = np.where(f > 0, beta, lo)
        hi = np.where(f < 0, beta, hi)
        step = beta - f / df
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        new = np.where(bad, 0.5 * (lo + hi), step)
        if np.all(np.abs(new - beta) <= 1e-11 * beta):
            beta = new
            break
        beta = new
    return beta


def _profile_beta_scalar(y: np.ndarray, xi: float, beta0: float | None = None, iters: int = 100) -> float:
    # same iteration as _profile_beta for one shape, without the 2-d broadcasting
    n = y.size
    ymean = y.sum() / n
    lo = max(0.0, -xi * y.max())
    hi = max(ymean * (1 + abs(xi)) * 4, lo * 4 + ymean)
    target = 1 / (1 + xi)
    while True:
        r = y / (hi + xi * y)
        if r.sum() / n - target <= 0:
            break
        hi *= 2
    if beta0 is None or not lo < beta0 < hi:
        beta0 = ymean * (1 - min(xi, 0.9))
    beta = min(max(beta0, lo * 1.001 + 1e-12 * ymean), hi)
    for _ in range(iters):
        d = beta + xi * y
        r = y / d
        f = r.sum() / n - target
        df = -np.dot(r, 1 / d) / n
        if f > 0:
            lo = beta
        elif f < 0:
            hi = beta
        step = beta - f / df
        new = step if (np.isfinite(step) and lo < step < hi) else 0.5 * (lo + hi)
        if abs(new - beta) <= 1e-11 * beta:
            return new
        beta = new
    return beta


def _profile_loglik(y, xis):
    betas = _profile_beta(y, xis)
    return np.array([gpd_loglik(y, x, b) for x, b in zip(xis, betas)]), betas


def gpd_fit_pwm(y) -> tuple[float, float]:
    """Probability-weighted-moment estimate (Hosking & Wallis)."""
    y = np.sort(np.asarray(y, dtype=float))
    n = y.size
    p = (np.arange(1, n + 1) - 0.35) / n
    a0 = y.mean()
    a1 = np.mean((1 - p) * y)
    xi = 2 - a0 / (a0 - 2 * a1)
    beta = 2 * a0 * a1 / (a0 - 2 * a1)
    return float(xi), float(beta)


def fit_gpd_exceedances(excesses, method: str = "mle", min_exceedances: int = 30,
                        grid_step: float = 0.025, tol: float = 1e-6) -> tuple[float, float]:
    """Estimate GPD shape ``xi`` and scale ``beta`` from positive excesses.

    The MLE maximizes the profile likelihood over ``xi`` in [-0.5, 1]: a grid
    search picks the best cell, golden-section search refines it, and the
    scale is solved for each trial shape by safeguarded Newton. If the MLE
    breaks down the probability-weighted-moment estimate is returned.

    Raises
    ------
    InsufficientExceedances
        When fewer than ``min_exceedances`` values are given; callers
        should drop the GPD on that side.
    """
    y = np.asarray(excesses, dtype=float)
    y = y[np.isfinite(y)]
    if y.size < min_exceedances:
        raise InsufficientExceedances(y.size, min_exceedances)
    if np.any(y < 0):
        raise ValueError("excesses must be non-negative")
    if method == "pwm":
        return gpd_fit_pwm(y)
    if method != "mle":
        raise ValueError(f"unknown method {method!r}")

    try:
        grid = np.linspace(XI_MIN, XI_MAX, int(round((XI_MAX - XI_MIN) / grid_step)) + 1)
        ll, _ = _profile_loglik(y, grid)
        if not np.isfinite(ll).any():
            raise FloatingPointError("profile likelihood not finite on the grid")
        k = int(np.nanargmax(np.where(np.isfinite(ll), ll, -np.inf)))
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]

        last = [None]

        def f(x):
            last[0] = _profile_beta_scalar(y, x, last[0])
            return gpd_loglik(y, x, last[0])

        c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
        fc, fd = f(c), f(d)
        while b - a > tol:
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - _GOLDEN * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + _GOLDEN * (b - a)
                fd = f(d)
        cands = [grid[k], a, b, 0.5 * (a + b)]
        cb = [_profile_beta_scalar(y, x, last[0]) for x in cands]
        cll = [gpd_loglik(y, x, bb) for x, bb in zip(cands, cb)]
        j = int(np.argmax(cll))
        xi, beta = float(cands[j]), float(cb[j])
        if not (np.isfinite(cll[j]) and beta > 0):
            raise FloatingPointError("non-finite MLE")
        return xi, beta
    except FloatingPointError as exc:
        logger.warning("GPD MLE failed (%s); using PWM", exc)
        return gpd_fit_pwm(y)


# ---------------------------------------------------------------------------
# Marginal distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GpdTail:
    """One tail: excesses beyond ``threshold`` (measured outward) follow GPD(xi, beta)."""

    threshold: float
    xi: float
    beta: float
    tail_prob: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"GPD scale must be positive, got {self.beta}")
        if not 0 < self.tail_prob < 0.5:
            raise ValueError(f"tail_prob must lie in (0, 0.5), got {self.tail_prob}")

    @property
    def endpoint(self) -> float:
        """Largest finite excess, ``inf`` unless ``xi < 0``."""
        return self.beta / -self.xi if self.xi < 0 else np.inf

    def to_dict(self):
        return {"threshold": self.threshold, "xi": self.xi, "beta": self.beta, "tail_prob": self.tail_prob}


def _clamp(p):
    return np.clip(p, CDF_CLAMP, 1 - CDF_CLAMP)


@dataclass(frozen=True)
class SemiParametricDist:
    """Empirical interior with GPD (or exponential fallback) tails.

    ``tail_mode`` records which sides carry a fitted GPD; a side without
    one uses an exponential tail (``xi = 0``) whose density matches the
    interior at the threshold.
    """

    lower: GpdTail
    upper: GpdTail
    interior: np.ndarray = field(repr=False)
    tail_mode: str = "both"

    kind = "semiparametric"

    @cached_property
    def _knots(self):
        lo, hi = self.lower.threshold, self.upper.threshold
        x = np.asarray(self.interior, dtype=float)
        x = x[(x > lo) & (x < hi)]
        vals, inv = np.unique(x, return_inverse=True)
        m = x.size
        mass = 1 - self.lower.tail_prob - self.upper.tail_prob
        if m:
            pos = self.lower.tail_prob + mass * (np.arange(1, m + 1) - 0.5) / m
            pos = np.bincount(inv, weights=pos) / np.bincount(inv)
        else:
            pos = np.empty(0)
        xs = np.concatenate([[lo], vals, [hi]])
        Fs = np.concatenate([[self.lower.tail_prob], pos, [1 - self.upper.tail_prob]])
        return xs, Fs

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xs, Fs = self._knots
        lo, up = self.lower, self.upper
        out = np.interp(x, xs, Fs)
        out = np.where(x < lo.threshold, lo.tail_prob * gpd_sf(lo.threshold - x, lo.xi, lo.beta), out)
        out = np.where(x > up.threshold, 1 - up.tail_prob * gpd_sf(x - up.threshold, up.xi, up.beta), out)
        return _clamp(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        xs, Fs = self._knots
        lo, up = self.lower, self.upper
        out = 1 - np.interp(x, xs, Fs)
        out = np.where(x < lo.threshold, 1 - lo.tail_prob * gpd_sf(lo.threshold - x, lo.xi, lo.beta), out)
        out = np.where(x > up.threshold, up.tail_prob * gpd_sf(x - up.threshold, up.xi, up.beta), out)
        return _clamp(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        xs, Fs = self._knots
        lo, up = self.lower, self.upper
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.interp(u, Fs, xs)
            out = np.where(u < lo.tail_prob,
                           lo.threshold - gpd_isf(np.clip(u / lo.tail_prob, 0, 1), lo.xi, lo.beta), out)
            out = np.where(u > 1 - up.tail_prob,
                           up.threshold + gpd_isf(np.clip((1 - u) / up.tail_prob, 0, 1), up.xi, up.beta), out)
        return out

    def isf(self, s):
        """Inverse survival function; accurate for small upper-tail ``s``."""
        s = np.asarray(s, dtype=float)
        up = self.upper
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s < up.tail_prob,
                           up.threshold + gpd_isf(np.clip(s / up.tail_prob, 0, 1), up.xi, up.beta),
                           self.quantile(1 - s))
        return out

    def median(self) -> float:
        return float(self.quantile(0.5))

    def to_dict(self):
        return {"kind": self.kind, "tail_mode": self.tail_mode,
                "lower": self.lower.to_dict(), "upper": self.upper.to_dict(),
                "interior": [float(v) for v in self.interior]}


@dataclass(frozen=True)
class NormalMarginal:
    """Gaussian marginal used when tail fitting is switched off."""

    mean: float
    sd: float

    kind = "normal"

    def cdf(self, x):
        return _clamp(special.ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd))

    def sf(self, x):
        return _clamp(special.ndtr((self.mean - np.asarray(x, dtype=float)) / self.sd))

    def quantile(self, u):
        return self.mean + self.sd * special.ndtri(np.asarray(u, dtype=float))

    def isf(self, s):
        return self.mean - self.sd * special.ndtri(np.asarray(s, dtype=float))

    def median(self) -> float:
        return self.mean

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean, "sd": self.sd}


def marginal_from_dict(d):
    if d["kind"] == "normal":
        return NormalMarginal(mean=d["mean"], sd=d["sd"])
    if d["kind"] == "semiparametric":
        return SemiParametricDist(lower=GpdTail(**d["lower"]), upper=GpdTail(**d["upper"]),
                                  interior=np.asarray(d["interior"], dtype=float), tail_mode=d["tail_mode"])
    raise ValueError(f"unknown marginal kind {d['kind']!r}")


@dataclass(frozen=True)
class TailConfig:
    threshold_quantile: float = 0.95
    min_exceedances: int = 30
    enabled: bool = True
    method: str = "mle"

    def __post_init__(self):
        if not 0.5 < self.threshold_quantile < 1:
            raise ValueError(f"threshold_quantile must lie in (0.5, 1), got {self.threshold_quantile}")


def _fallback_tail(threshold, tail_prob, density) -> GpdTail:
    # exponential tail whose density tail_prob / beta equals the interior density
    return GpdTail(threshold=threshold, xi=0.0, beta=tail_prob / density, tail_prob=tail_prob)


def fit_semiparametric(sample, cfg: TailConfig | None = None, **kw) -> SemiParametricDist:
    """Fit an empirical-interior / GPD-tails marginal to ``sample``.

    Thresholds are the empirical ``threshold_quantile`` and
    ``1 - threshold_quantile`` quantiles. A side keeps its GPD when it has
    at least ``min_exceedances`` points and the fitted shape exceeds -0.5;
    otherwise it falls back to an exponential tail.
    """
    cfg = cfg or TailConfig(**kw)
    x = np.sort(np.asarray(sample, dtype=float))
    if x.size < 200:
        raise ValueError(f"need at least 200 observations, got {x.size}")
    if not np.isfinite(x).all():
        raise ValueError("sample contains non-finite values")
    if x[0] == x[-1]:
        raise DegenerateSample("sample has zero variance")
    n = x.size
    lo_th, up_th = np.quantile(x, [1 - cfg.threshold_quantile, cfg.threshold_quantile])
    if not lo_th < up_th:
        raise DegenerateSample("thresholds coincide; sample is (nearly) constant")

    up_exc = x[x > up_th] - up_th
    lo_exc = lo_th - x[x < lo_th]
    interior = x[(x >= lo_th) & (x <= up_th)]
    p_up = max(up_exc.size, 1) / n
    p_lo = max(lo_exc.size, 1) / n

    def side(exc, th, p):
        if not cfg.enabled:
            return None
        try:
            xi, beta = fit_gpd_exceedances(exc, method=cfg.method, min_exceedances=cfg.min_exceedances)
        except InsufficientExceedances as e:
            logger.info("tail at %.4g downgraded: %s", th, e)
            return None
        if xi <= XI_MIN:
            logger.info("tail at %.4g downgraded: xi at lower bound", th)
            return None
        return GpdTail(threshold=float(th), xi=xi, beta=beta, tail_prob=p)

    upper = side(up_exc, up_th, p_up)
    lower = side(lo_exc, lo_th, p_lo)
    mode = {(True, True): "both", (True, False): "upper-only",
            (False, True): "lower-only", (False, False): "none"}[(upper is not None, lower is not None)]

    if upper is None or lower is None:
        # densities of the outermost interior segments
        probe = SemiParametricDist(
            lower=GpdTail(float(lo_th), 0.0, 1.0, p_lo), upper=GpdTail(float(up_th), 0.0, 1.0, p_up),
            interior=interior, tail_mode="none")
        xs, Fs = probe._knots
        if upper is None:
            upper = _fallback_tail(float(up_th), p_up, (Fs[-1] - Fs[-2]) / (xs[-1] - xs[-2]))
        if lower is None:
            lower = _fallback_tail(float(lo_th), p_lo, (Fs[1] - Fs[0]) / (xs[1] - xs[0]))
    return SemiParametricDist(lower=lower, upper=upper, interior=interior, tail_mode=mode)


def fit_normal(sample) -> NormalMarginal:
    x = np.asarray(sample, dtype=float)
    sd = float(x.std(ddof=1))
    if not sd > 0:
        raise DegenerateSample("sample has zero variance")
    return NormalMarginal(mean=float(x.mean()), sd=sd)


def fit_marginals(panel, cfg: TailConfig | None = None) -> list[list]:
    """One marginal per (zone, lag) of a remainder panel, indexed ``[z][lag]``.

    With ``cfg.enabled`` false every marginal is a fitted normal.
    """
    cfg = cfg or TailConfig()
    fit = fit_semiparametric if cfg.enabled else (lambda s, c: fit_normal(s))
    return [[fit(panel.data[:, z, l], cfg) for l in range(panel.n_lags)] for z in range(panel.n_zones)]


def qq_gaussian(sample) -> np.ndarray:
    """Normal Q-Q pairs ``(Phi^-1((i - 0.5) / n), x_(i))``, shape ``(n, 2)``."""
    x = np.sort(np.asarray(sample, dtype=float))
    if x.size < 2:
        raise ValueError("need at least two points for a Q-Q plot")
    n = x.size
    theo = special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    return np.column_stack([theo, x])


def write_qq_csv(path, pairs: np.ndarray):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("theoretical,empirical\n")
        for a, b in pairs:
            fh.write(f"{float(a)!r},{float(b)!r}\n")


def tail_summary(marginals: Sequence[Sequence]) -> np.ndarray:
    """``(Z, L, 2)`` array of (lower xi, upper xi); NaN where no GPD was kept."""
    out = np.full((len(marginals), len(marginals[0]), 2), np.nan)
    for z, row in enumerate(marginals):
        for l, m in enumerate(row):
            if isinstance(m, SemiParametricDist):
                if m.tail_mode in ("both", "lower-only"):
                    out[z, l, 0] = m.lower.xi
                if m.tail_mode in ("both", "upper-only"):
                    out[z, l, 1] = m.upper.xi
    return out
