"""Monte Carlo scenarios of load and wind-power forecast deviations.

Heavy-tailed marginals, a Gaussian copula and a Kronecker-structured
(spatial x temporal) sparse graphical model.
"""
from .errors import DataError, DegenerateSample, InsufficientExceedances, NumericalError
from .gaussianize import from_gaussian, to_gaussian
from .glasso import (DependencyGraph, GraphicalModel, dependency_graph, empirical_correlation, gemini, glasso,
                     kron_covariance)
from .ingest import (ActualsSeries, CsvSchema, DeviationPanel, ForecastPanel, build_deviation_panel, load_actuals,
                     load_forecasts)
from .pipeline import ModelBundle, RunConfig, fit_model, load_bundle, save_bundle
from .seasonal import SeasonalModel, fit_seasonal, remove_seasonal, restore_seasonal
from .simulate import ScenarioBand, ScenarioBatch, band, coverage_report, sample_kronecker_gaussian, scenarios
from .tails import (GpdTail, NormalMarginal, SemiParametricDist, TailConfig, fit_gpd_exceedances, fit_semiparametric,
                    qq_gaussian)

__version__ = "0.1.0"
