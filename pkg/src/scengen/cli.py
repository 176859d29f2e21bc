"""
Command-line front end: ``scengen fit | simulate | diagnose | graph``.

Exit codes: 0 success, 1 data error, 2 numerical failure.
Set ``SCENGEN_LOG`` (DEBUG, INFO, WARNING, ...) to control verbosity.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import ingest
from .errors import DataError, NumericalError
from .glasso import dependency_graph, write_matrix_csv
from .pipeline import (ModelBundle, RunConfig, build_panel, fit_model, load_bundle, load_data, save_bundle,
                       utc)
from .seasonal import remove_seasonal
from .simulate import band, coverage_report, scenarios
from .tails import qq_gaussian, write_qq_csv

logger = logging.getLogger("scengen")


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.exc = exc


@contextlib.contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except (DataError, NumericalError, np.linalg.LinAlgError, ValueError, OSError) as e:
        raise StageError(name, e) from e


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _slug(s) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in str(s))


def _tails_flag(v):
    return None if v is None else v == "on"


def cmd_fit(args) -> ModelBundle:
    with stage("config"):
        cfg = RunConfig.from_file(args.config)
    with stage("ingest"):
        actuals, forecasts = load_data(cfg)
        panel = build_panel(cfg, actuals, forecasts)
    with stage("fit"):
        bundle = fit_model(panel, cfg, tails=_tails_flag(args.tails))
    bundle_path = Path(args.bundle) if args.bundle else _out_dir(args.out or ".") / "bundle.json"
    bundle_path.parent.mkdir(parents=True, exist_ok=True)
    with stage("write"):
        save_bundle(bundle, bundle_path)
    _print_fit_summary(bundle, bundle_path)
    return bundle


def _print_fit_summary(bundle: ModelBundle, path):
    g = bundle.graph
    d = bundle.diagnostics
    print(f"bundle: {path}")
    print(f"panel: n={d['n_used']} dropped={d['dropped_rows']} Z={g.n_zones} L={g.n_lags} dim={g.n_zones * g.n_lags}")
    print(f"seasonal periods: {d['periods_used']}")
    print("tail shape estimates (lower | upper) per lag:")
    for z, (kind, zone) in enumerate(bundle.variables):
        lo = " ".join("  -  " if v is None else f"{v:+.2f}" for v in d["xi_lower"][z])
        up = " ".join("  -  " if v is None else f"{v:+.2f}" for v in d["xi_upper"][z])
        print(f"  {kind}/{zone}: {lo} | {up}")
    for name, prec in (("spatial", g.spatial_precision), ("temporal", g.temporal_precision)):
        info = g.diagnostics.get(name, {})
        p = len(prec)
        nnz = int(np.count_nonzero(prec[~np.eye(p, dtype=bool)])) // 2
        total = p * (p - 1) // 2
        print(f"{name} precision {p}x{p}: {info.get('n_iter', 0)} sweeps, converged={info.get('converged')}, "
              f"{nnz}/{total} nonzero off-diagonal pairs")


def _forecast_source(bundle: ModelBundle, args):
    cfg = bundle.config
    if getattr(args, "config", None):
        cfg = RunConfig.from_file(args.config)
    return cfg, load_data(cfg)


def cmd_simulate(args):
    with stage("bundle"):
        bundle = load_bundle(args.bundle)
    with stage("ingest"):
        cfg, (actuals, forecasts) = _forecast_source(bundle, args)
        t = utc(args.issue_time)
        fc = ingest.forecast_matrix(forecasts, bundle.variables, t)
    M = args.scenarios or cfg.simulate.scenarios
    seed = cfg.simulate.seed if args.seed is None else args.seed
    trim = cfg.simulate.trim if args.trim is None else args.trim
    with stage("simulate"):
        batch = scenarios(bundle, fc, t, M=M, seed=seed)
        b = band(batch, trim)
    out = _out_dir(args.out)
    with stage("write"):
        batch.to_csv(out / "scenarios.csv")
        b.to_csv(out / "band.csv")
    print(f"{M} scenarios for {t.isoformat()} (seed {seed}) -> {out / 'scenarios.csv'}")
    print(f"band trim={trim} -> {out / 'band.csv'}")
    return batch, b


def _default_issue_time(panel):
    return panel.issue_times[-1]


def cmd_diagnose(args):
    """Q-Q data, coverage, and the heavy-tail vs Gaussian band comparison."""
    with stage("bundle"):
        bundle = load_bundle(args.bundle)
    with stage("ingest"):
        cfg, (actuals, forecasts) = _forecast_source(bundle, args)
        panel = build_panel(cfg, actuals, forecasts)
        t = utc(args.issue_time) if args.issue_time else _default_issue_time(panel)
        fc = ingest.forecast_matrix(forecasts, bundle.variables, t)
        try:
            act = ingest.actual_matrix(actuals, bundle.variables, t, n_lags=bundle.graph.n_lags)
        except DataError as e:
            logger.warning("no coverage report: %s", e)
            act = None
    out = _out_dir(args.out)
    M = args.scenarios or cfg.simulate.scenarios
    seed = cfg.simulate.seed if args.seed is None else args.seed
    trim = cfg.simulate.trim if args.trim is None else args.trim

    with stage("qq"):
        rem = remove_seasonal(panel, bundle.seasonal)
        qq_dir = _out_dir(out / "qq")
        for z, (kind, zone) in enumerate(bundle.variables):
            for l in range(rem.n_lags):
                write_qq_csv(qq_dir / f"{_slug(kind)}_{_slug(zone)}_lag{l:02d}.csv", qq_gaussian(rem.data[:, z, l]))

    with stage("fit"):
        tails_on = bundle.config.tails.enabled
        other = fit_model(panel, cfg, tails=not tails_on)
        models = {"on": bundle, "off": other} if tails_on else {"on": other, "off": bundle}

    lines = []
    with stage("simulate"):
        for mode, mb in models.items():
            batch = scenarios(mb, fc, t, M=M, seed=seed)
            b = band(batch, trim)
            b.to_csv(out / f"band_tails_{mode}.csv")
            if act is not None:
                rep = coverage_report(b, act)
                rep.to_csv(out / f"coverage_tails_{mode}.csv", act)
                lines.append(f"tails {mode}: coverage {rep.fraction:.3f} of {rep.inside.size} coordinates")
    print(f"diagnostics for issue time {t.isoformat()} -> {out}")
    for s in lines:
        print(s)
    return models


def cmd_graph(args):
    with stage("bundle"):
        bundle = load_bundle(args.bundle)
    g = bundle.graph
    out = _out_dir(args.out)
    zone_labels = [f"{k}:{z}" for k, z in bundle.variables]
    lag_labels = [f"lag{l}" for l in range(g.n_lags)]
    graphs = {}
    with stage("write"):
        for name, theta, labels in (("spatial", g.spatial_precision, zone_labels),
                                    ("temporal", g.temporal_precision, lag_labels)):
            dg = dependency_graph(theta, labels, edge_threshold=args.edge_threshold)
            (out / f"{name}.dot").write_text(dg.to_dot(name), encoding="utf-8")
            (out / f"{name}.json").write_text(dg.to_json() + "\n", encoding="utf-8")
            write_matrix_csv(out / f"{name}_precision.csv", theta, labels)
            graphs[name] = dg
            print(f"{name}: {len(dg.nodes)} nodes, {len(dg.edges)} edges, {dg.n_components} connected component(s)")
    return graphs


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scengen", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model bundle from a config file")
    f.add_argument("--config", required=True)
    f.add_argument("--bundle", help="output bundle path (default <out>/bundle.json)")
    f.add_argument("--out", help="output directory")
    f.add_argument("--tails", choices=["on", "off"], help="override tail fitting")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="write scenario and band CSVs for one issue time")
    s.add_argument("--bundle", required=True)
    s.add_argument("--config", help="config whose forecast files to use (default: the bundle's)")
    s.add_argument("--issue-time", required=True)
    s.add_argument("--scenarios", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--trim", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("diagnose", help="Q-Q data, coverage and heavy-tail vs Gaussian bands")
    d.add_argument("--bundle", required=True)
    d.add_argument("--config")
    d.add_argument("--issue-time")
    d.add_argument("--scenarios", type=int)
    d.add_argument("--seed", type=int)
    d.add_argument("--trim", type=float)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_diagnose)

    g = sub.add_parser("graph", help="dependency graphs of the spatial and temporal precision factors")
    g.add_argument("--bundle", required=True)
    g.add_argument("--edge-threshold", type=float, default=0.01)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_graph)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SCENGEN_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    if logging.getLogger().level > logging.WARNING:
        warnings.simplefilter("ignore")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        numeric = isinstance(e.exc, (NumericalError, np.linalg.LinAlgError))
        return 2 if numeric else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
