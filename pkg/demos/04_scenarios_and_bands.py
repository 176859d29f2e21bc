"""End-to-end: fit a bundle, draw scenarios for one issue time, band them.

Mirrors the ``scengen fit`` / ``scengen simulate`` commands in library form.

    python demos/04_scenarios_and_bands.py [out_dir]
"""
import sys
import tempfile
from pathlib import Path

from scengen.ingest import actual_matrix, forecast_matrix
from scengen.pipeline import RunConfig, build_panel, fit_model, load_bundle, load_data, save_bundle
from scengen.simulate import band, coverage_report, scenarios
from scengen.synthetic import write_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp())
cfg = RunConfig.from_file(write_dataset(out / "data", n_days=60, seed=2018,
                                        config_extra={"seasonal": {"periods": [24, 168]}}))
acts, fcs = load_data(cfg)
bundle = fit_model(build_panel(cfg, acts, fcs), cfg)
save_bundle(bundle, out / "bundle.json")
bundle = load_bundle(out / "bundle.json")

issue = "2018-02-20T00:00Z"
batch = scenarios(bundle, forecast_matrix(fcs, cfg.variables, issue), issue, M=1000, seed=42)
b = band(batch, trim=0.05)
batch.to_csv(out / "scenarios.csv")
b.to_csv(out / "band.csv")

rep = coverage_report(b, actual_matrix(acts, cfg.variables, issue))
print(f"1000 scenarios for {issue}; realized path inside the 90% band at {rep.fraction:.0%} of coordinates")
for z, (kind, zone) in enumerate(cfg.variables):
    print(f"  {kind:4s} {zone:9s} lag 12: [{b.lower[z, 12]:9.1f}, {b.upper[z, 12]:9.1f}]")
print("outputs in", out)
