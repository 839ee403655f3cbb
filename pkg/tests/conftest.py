"""Shared fixtures for the phmmutils test suite"""
import numpy as np
import pandas as pd
import pytest

from phmmutils.distributions import EmissionProduct, Normal, PerfectLabels
from phmmutils.estimate import ConstraintSet
from phmmutils.markov import InitialDistribution, LabeledSeries, TransitionMatrix
from phmmutils.model import ModelParams, ModelSpec


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long statistical runs, select with -m slow")


# worked two-state instance: f1(0)=0.8, f1(1)=0.2, f2(0)=0.3, f2(1)=0.7, y=(0, 1)
WORKED_DELTA = np.array([0.5, 0.5])
WORKED_GAMMA = np.array([[0.9, 0.1], [0.2, 0.8]])
WORKED_LOG_MATRIX = np.log(np.array([[0.8, 0.3], [0.2, 0.7]]))
WORKED_LIKELIHOOD = 0.190


def normal_params(means, sds=None, gamma=None, delta=None, label_model=None, mask=None):
    """ModelParams with one normal feature "x" per state"""
    n = len(means)
    sds = np.ones(n) if sds is None else sds
    if gamma is None:
        gamma = np.full((n, n), 0.2 / max(n - 1, 1)) + np.eye(n) * (0.8 - 0.2 / max(n - 1, 1))
        if n == 1:
            gamma = np.ones((1, 1))
    delta = np.full(n, 1.0 / n) if delta is None else delta
    products = tuple(EmissionProduct((("x", Normal(float(m), float(s))),)) for m, s in zip(means, sds))
    return ModelParams(
        InitialDistribution(np.asarray(delta, dtype=float)),
        TransitionMatrix(np.asarray(gamma, dtype=float), mask),
        products,
        label_model or PerfectLabels(),
    )


def normal_spec(means, sds=None, gamma=None, fixed=None, share=(), **kwargs):
    params = normal_params(means, sds, gamma, **kwargs)
    return ModelSpec(params, ConstraintSet(fixed or {}, share, params.gamma.mask))


def random_probability_row(rng, n, support=None):
    row = np.zeros(n)
    support = np.arange(n) if support is None else support
    row[support] = rng.dirichlet(np.ones(len(support)))
    return row


def random_instance(rng, n, T):
    """delta, Gamma and a T x N emission log matrix with entries in [-3, 0]"""
    delta = random_probability_row(rng, n)
    gamma = np.array([random_probability_row(rng, n) for _ in range(n)])
    log_matrix = rng.uniform(-3.0, 0.0, size=(T, n))
    return delta, gamma, log_matrix


def random_labels(rng, T, n, share=0.3):
    labels = np.where(rng.uniform(size=T) < share, rng.integers(1, n + 1, size=T), 0)
    return labels


def series_from_values(values, labels=None, series_id="s1", name="x"):
    return LabeledSeries(series_id, np.asarray(values, dtype=float), (name,), labels)


def numeric_hessian(func, x, step=1e-4):
    """Central-difference Hessian of a scalar function"""
    x = np.asarray(x, dtype=float)
    n = x.size
    hessian = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            hi = step * max(1.0, abs(x[i]))
            hj = step * max(1.0, abs(x[j]))
            values = []
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                y = x.copy()
                y[i] += si * hi
                y[j] += sj * hj
                values.append(func(y))
            hessian[i, j] = hessian[j, i] = (values[0] - values[1] - values[2] + values[3]) / (4 * hi * hj)
    return hessian


def standard_errors(func, x, step=1e-4):
    """Standard errors from the inverse of the negative Hessian of a log-likelihood"""
    covariance = np.linalg.inv(-numeric_hessian(func, x, step))
    return np.sqrt(np.clip(np.diag(covariance), 0.0, None))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_state_params():
    return normal_params([0.0, 3.0], gamma=[[0.9, 0.1], [0.2, 0.8]], delta=[0.6, 0.4])


@pytest.fixture
def two_state_spec():
    return normal_spec([0.0, 3.0], gamma=[[0.9, 0.1], [0.2, 0.8]], delta=[0.6, 0.4])


def dive_profile(fs=50, surface=5.0, descent=10.0, bottom=30.0, ascent=10.0, depth=20.0):
    """Surface, linear descent, flat bottom, linear ascent, surface"""
    return np.concatenate(
        [
            np.zeros(int(surface * fs)),
            np.linspace(0.0, depth, int(descent * fs)),
            np.full(int(bottom * fs), depth),
            np.linspace(depth, 0.0, int(ascent * fs)),
            np.zeros(int(surface * fs)),
        ]
    )


def trace_df(depth, fs=50, seed=0, roll=True):
    """Raw trace columns around a depth profile with noisy heading and acceleration"""
    rng = np.random.default_rng(seed)
    n = depth.size
    df = pd.DataFrame(
        {
            "time_s": np.arange(n) / fs,
            "depth_m": depth,
            "heading_rad": np.angle(np.exp(1j * np.cumsum(rng.normal(0.0, 0.05, size=n)))),
            "ax": rng.normal(0.0, 0.3, size=n),
            "ay": rng.normal(0.0, 0.3, size=n),
            "az": 9.81 + rng.normal(0.0, 0.3, size=n),
        }
    )
    if roll:
        df["roll_rad"] = rng.normal(0.0, 0.4, size=n)
    return df
