"""Load CSVs, build the deviation panel and strip seasonality.

Writes a small synthetic Texas-layout dataset, reads it back through the
ingest layer and fits the trend + harmonic model per (zone, lag).

    python demos/01_panel_and_seasonal.py [out_dir]
"""
import sys
import tempfile

import numpy as np

from scengen.ingest import build_deviation_panel, load_actuals, load_forecasts
from scengen.pipeline import RunConfig
from scengen.seasonal import fit_seasonal, remove_seasonal
from scengen.synthetic import write_dataset

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp()
cfg = RunConfig.from_file(write_dataset(out, n_days=30, seed=1))
print("dataset written to", out)

actuals, forecasts = [], []
for kind in ("load", "wind"):
    actuals += load_actuals(cfg.path(kind, "actuals"), kind=kind).values()
    forecasts += load_forecasts(cfg.path(kind, "forecasts"), kind=kind).values()
panel = build_deviation_panel(actuals, forecasts, cfg.variables)
print(f"panel: {panel.n} issue times x {panel.n_zones} zones x {panel.n_lags} lags (dim {panel.dim})")

# 30 days cannot pin down an annual cycle, so only daily and weekly terms are kept
model = fit_seasonal(panel, periods=(24, 168))
rem = remove_seasonal(panel, model)
for z, (kind, zone) in enumerate(cfg.variables):
    amp = np.hypot(*model.harmonic_coefs(z, 0)[0][1:])
    print(f"  {kind:4s} {zone:9s} daily amplitude {amp:7.1f}  "
          f"sd before {panel.data[:, z].std():7.1f}  after {rem.data[:, z].std():7.1f}")
