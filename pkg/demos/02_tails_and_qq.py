"""Semi-parametric marginals: empirical body with generalized Pareto tails.

Fits one heavy-tailed sample, prints the tail parameters, checks the
score transform and writes Q-Q pairs against a Gaussian.

    python demos/02_tails_and_qq.py [out_dir]
"""
import sys
import tempfile
from pathlib import Path

import numpy as np
from scipy import stats

from scengen.gaussianize import from_scores, to_scores
from scengen.synthetic import heavy_tail_quantile
from scengen.tails import fit_normal, fit_semiparametric, qq_gaussian, write_qq_csv

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp())
rng = np.random.default_rng(0)
x = 100 * heavy_tail_quantile(rng.uniform(size=8760), xi_lower=0.35, xi_upper=0.05)

d = fit_semiparametric(x)
print(f"tail mode: {d.tail_mode}")
for name, t in (("lower", d.lower), ("upper", d.upper)):
    print(f"  {name}: threshold {t.threshold:8.2f}  xi {t.xi:6.3f}  beta {t.beta:6.2f}")

z = to_scores(x, d)
print(f"scores: mean {z.mean():.3f}  sd {z.std():.3f}  KS p-value {stats.kstest(z, 'norm').pvalue:.2f}")
print(f"round-trip max error {np.abs(from_scores(z, d) - x).max():.2e}")

n = fit_normal(x)
for p in (1e-2, 1e-3, 1e-4):
    print(f"  {p:.0e} quantile: semi-parametric {float(d.quantile(p)):8.1f}   "
          f"normal {float(n.quantile(p)):8.1f}   truth {100 * float(heavy_tail_quantile(p, 0.35, 0.05)):8.1f}")

write_qq_csv(out / "qq.csv", qq_gaussian(x))
print("Q-Q pairs written to", out / "qq.csv")
