import numpy as np
import pytest

from scengen.synthetic import TEXAS_JOINT, default_truth, write_dataset

# a reduced Texas layout keeps CLI round-trips quick
SMALL_VARS = [("load", "West"), ("load", "North"), ("wind", "West"), ("wind", "Coastal")]


def random_pd(rng, p, cond=20.0):
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    ev = np.exp(rng.uniform(0, np.log(cond), p))
    return (Q * ev) @ Q.T


def random_corr(rng, p, cond=20.0):
    S = random_pd(rng, p, cond)
    d = np.sqrt(np.diag(S))
    C = S / np.outer(d, d)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Twenty days of hourly issues for four zones; returns the config path."""
    out = tmp_path_factory.mktemp("small")
    truth = default_truth(variables=SMALL_VARS)
    return write_dataset(out, n_days=20, seed=7, truth=truth,
                         config_extra={"seasonal": {"periods": [24, 168]}})


@pytest.fixture(scope="session")
def joint_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("joint")
    return write_dataset(out, n_days=60, seed=2018, truth=default_truth(variables=TEXAS_JOINT))


def fitted_bundle(truth, n=1500, seed=0, tails=True, lam=(0.1, 0.1), periods=(24,)):
    """Fit a bundle in memory on a synthetic panel drawn from ``truth``."""
    from scengen.pipeline import RunConfig, fit_model
    from scengen.synthetic import synthetic_panel

    panel = synthetic_panel(truth, n=n, seed=seed)
    kinds = {k for k, _ in truth.variables}
    cfg = RunConfig.from_dict({"data": {k: {} for k in kinds}, "variables": truth.variables,
                               "seasonal": {"periods": list(periods)},
                               "tails": {"enabled": tails},
                               "glasso": {"lambda_spatial": lam[0], "lambda_temporal": lam[1]}})
    return fit_model(panel, cfg), panel


@pytest.fixture(scope="session")
def long_dataset(tmp_path_factory):
    """Sixty days for four zones: enough exceedances for every GPD tail."""
    out = tmp_path_factory.mktemp("long")
    return write_dataset(out, n_days=60, seed=8, truth=default_truth(variables=SMALL_VARS),
                         config_extra={"seasonal": {"periods": [24, 168]}})
