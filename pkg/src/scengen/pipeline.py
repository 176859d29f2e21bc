"""
Run configuration, model bundle and the fit pipeline.

The bundle is a JSON document; arrays are nested lists in row-major order.
Marginals are listed zone-major: entry ``z * L + lag`` belongs to
``variables[z]`` at that lag, the same order as the flattened panel and the
rows of the Kronecker covariance.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from . import ingest
from .errors import DataError
from .gaussianize import to_gaussian
from .glasso import GraphicalModel, gemini
from .seasonal import DEFAULT_PERIODS, SeasonalModel, fit_seasonal, remove_seasonal
from .tails import TailConfig, fit_marginals, marginal_from_dict, tail_summary

logger = logging.getLogger(__name__)

BUNDLE_VERSION = "scengen-bundle/1"


@dataclass
class GlassoConfig:
    lambda_spatial: float = 0.1
    lambda_temporal: float = 0.1
    tol: float = 1e-4
    max_iter: int = 200


@dataclass
class SimulateConfig:
    scenarios: int = 1000
    trim: float = 0.05
    seed: int = 0


@dataclass
class RunConfig:
    """Everything needed to fit and simulate; see ``docs`` in the README.

    ``data`` maps a variable kind (``load`` / ``wind``) to
    ``{"actuals": path, "forecasts": path, "schema": {...}}``; relative
    paths are resolved against ``base_dir``.
    """

    data: dict
    variables: list
    periods: tuple = DEFAULT_PERIODS
    tails: TailConfig = field(default_factory=TailConfig)
    glasso: GlassoConfig = field(default_factory=GlassoConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    window: dict = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        self.variables = [(str(k), str(z)) for k, z in self.variables]
        if not self.variables:
            raise DataError("config lists no variables")
        if len(set(self.variables)) != len(self.variables):
            raise DataError(f"duplicate variables in config: {self.variables}")
        for kind, _ in self.variables:
            if kind not in self.data:
                raise DataError(f"no data files configured for kind {kind!r}")
        if self.glasso.lambda_spatial < 0 or self.glasso.lambda_temporal < 0:
            raise DataError("glasso penalties must be non-negative")
        if not 0 < self.simulate.trim < 0.5:
            raise DataError(f"trim must lie in (0, 0.5), got {self.simulate.trim}")

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "RunConfig":
        d = dict(d)
        return cls(
            data=d["data"],
            variables=d["variables"],
            periods=tuple(d.get("seasonal", {}).get("periods", DEFAULT_PERIODS)),
            tails=TailConfig(**d.get("tails", {})),
            glasso=GlassoConfig(**d.get("glasso", {})),
            simulate=SimulateConfig(**d.get("simulate", {})),
            window=d.get("window", {}) or {},
            base_dir=str(d.get("base_dir", base_dir)),
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON ({e})") from None
        try:
            return cls.from_dict(d, base_dir=str(path.resolve().parent))
        except (KeyError, TypeError) as e:
            raise DataError(f"{path}: bad config ({e!r})") from None

    def to_dict(self) -> dict:
        return {
            "data": self.data,
            "variables": [list(v) for v in self.variables],
            "seasonal": {"periods": list(self.periods)},
            "tails": asdict(self.tails),
            "glasso": asdict(self.glasso),
            "simulate": asdict(self.simulate),
            "window": self.window,
            "base_dir": self.base_dir,
        }

    def path(self, kind: str, which: str) -> Path:
        p = Path(self.data[kind][which])
        return p if p.is_absolute() else Path(self.base_dir) / p

    def schema(self, kind: str, which: str) -> dict:
        return self.data[kind].get("schema", {}).get(which, {})


@dataclass
class ModelBundle:
    config: RunConfig
    seasonal: SeasonalModel
    marginals: list  # [z][lag]
    graph: GraphicalModel
    diagnostics: dict = field(default_factory=dict)
    version: str = BUNDLE_VERSION

    @property
    def variables(self) -> list:
        return list(self.seasonal.variables)

    def to_dict(self) -> dict:
        L = self.graph.n_lags
        margs = []
        for z, (kind, zone) in enumerate(self.variables):
            for l in range(L):
                margs.append({"variable": kind, "zone": zone, "lag": l, **self.marginals[z][l].to_dict()})
        return {
            "version": self.version,
            "config": self.config.to_dict(),
            "variables": [list(v) for v in self.variables],
            "seasonal": {
                "origin": self.seasonal.origin.isoformat(),
                "periods": list(self.seasonal.periods),
                "coef_layout": ["intercept", "slope"] + [f"{c}_{p:g}" for p in self.seasonal.periods
                                                         for c in ("cos", "sin")],
                "coefs": self.seasonal.coefs.tolist(),
            },
            "marginals": margs,
            "graph": self.graph.to_dict(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        if d.get("version") != BUNDLE_VERSION:
            raise DataError(f"unsupported bundle version {d.get('version')!r}")
        variables = [tuple(v) for v in d["variables"]]
        s = d["seasonal"]
        seasonal = SeasonalModel(variables=variables, origin=pd.Timestamp(s["origin"]),
                                 periods=tuple(s["periods"]), coefs=np.array(s["coefs"], dtype=float))
        graph = GraphicalModel.from_dict(d["graph"])
        L = graph.n_lags
        flat = d["marginals"]
        if len(flat) != len(variables) * L:
            raise DataError("bundle marginal count does not match variables x lags")
        marginals = [[None] * L for _ in variables]
        for k, m in enumerate(flat):
            z, l = divmod(k, L)
            if (m["variable"], m["zone"], m["lag"]) != (*variables[z], l):
                raise DataError(f"bundle marginal {k} is out of order")
            marginals[z][l] = marginal_from_dict(m)
        cfg = d["config"]
        return cls(config=RunConfig.from_dict(cfg, base_dir=cfg.get("base_dir", ".")), seasonal=seasonal,
                   marginals=marginals, graph=graph, diagnostics=d.get("diagnostics", {}), version=d["version"])


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (pd.Timestamp,)):
        return o.isoformat()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def save_bundle(bundle: ModelBundle, path):
    text = json.dumps(bundle.to_dict(), default=_jsonable, indent=1, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_bundle(path) -> ModelBundle:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"bundle not found: {path}") from None
    return ModelBundle.from_dict(d)


def utc(ts) -> pd.Timestamp:
    t = pd.Timestamp(ts)
    return t.tz_localize("UTC") if t.tz is None else t.tz_convert("UTC")


def _nan_to_none(a) -> list:
    return [[None if np.isnan(v) else float(v) for v in row] for row in np.asarray(a)]


def load_data(cfg: RunConfig) -> tuple[list, list]:
    """Read every configured actuals / forecasts file."""
    actuals, forecasts = [], []
    for kind in dict.fromkeys(k for k, _ in cfg.variables):
        actuals.append(ingest.load_actuals(cfg.path(kind, "actuals"), cfg.schema(kind, "actuals"), kind=kind))
        forecasts.append(ingest.load_forecasts(cfg.path(kind, "forecasts"), cfg.schema(kind, "forecasts"), kind=kind))
    return actuals, forecasts


def build_panel(cfg: RunConfig, actuals, forecasts) -> ingest.DeviationPanel:
    panel = ingest.build_deviation_panel(actuals, forecasts, cfg.variables)
    start, end = cfg.window.get("start"), cfg.window.get("end")
    if start or end:
        t = panel.issue_times
        mask = np.ones(len(t), dtype=bool)
        if start:
            mask &= t >= utc(start)
        if end:
            mask &= t < utc(end)
        if not mask.any():
            raise DataError("fitting window contains no issue times")
        panel = panel.select(mask)
    return panel


def fit_model(panel: ingest.DeviationPanel, cfg: RunConfig, tails: bool | None = None) -> ModelBundle:
    """Seasonal fit, marginals, Gaussian scores and the Kronecker graphical model.

    ``tails`` overrides ``cfg.tails.enabled``; with tails off every marginal
    is a fitted normal.
    """
    tcfg = cfg.tails if tails is None else TailConfig(**{**asdict(cfg.tails), "enabled": bool(tails)})
    if tails is not None:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "tails": asdict(tcfg)})
    seasonal = fit_seasonal(panel, cfg.periods)
    remainders = remove_seasonal(panel, seasonal)
    marginals = fit_marginals(remainders, tcfg)
    scores = to_gaussian(remainders, marginals)
    graph = gemini(scores, cfg.glasso.lambda_spatial, cfg.glasso.lambda_temporal,
                   tol=cfg.glasso.tol, max_iter=cfg.glasso.max_iter)
    xi = tail_summary(marginals)
    diagnostics: dict[str, Any] = {
        "n_used": panel.n,
        "dropped_rows": panel.dropped,
        "first_issue": panel.issue_times[0].isoformat(),
        "last_issue": panel.issue_times[-1].isoformat(),
        "periods_used": list(seasonal.periods),
        "tail_modes": [[getattr(m, "tail_mode", "normal") for m in row] for row in marginals],
        "xi_lower": _nan_to_none(xi[..., 0]),
        "xi_upper": _nan_to_none(xi[..., 1]),
        "glasso": graph.diagnostics,
    }
    return ModelBundle(config=cfg, seasonal=seasonal, marginals=marginals, graph=graph, diagnostics=diagnostics)
