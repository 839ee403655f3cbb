"""State-dependent emission families and label models

Every family is an immutable dataclass exposing ``log_density``,
``grad_log_density`` (gradient with respect to its natural parameters),
``sample`` and a flat parameter vector used by the estimation module.
"""
import logging
from dataclasses import dataclass, replace
from typing import ClassVar, Tuple

import numpy as np
from scipy import linalg, special, stats

from phmmutils.exceptions import InvalidLabelError, InvalidParameterError, ShapeError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

MIN_SD = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


def _check_finite(family, **values):
    for name, value in values.items():
        if not np.all(np.isfinite(np.asarray(value, dtype=float))):
            raise InvalidParameterError(f"{family}: non-finite {name} {value!r}")


def gamma_mean_sd_to_shape_rate(mean, sd):
    """Convert a gamma (mean, sd) pair to (shape, rate)

    Args:
        mean(float): mean of the distribution, > 0
        sd(float): standard deviation, > 0

    Returns:
        tuple: shape = (mean/sd)**2, rate = mean/sd**2
    """
    _check_finite("gamma", mean=mean, sd=sd)
    if mean <= 0 or sd <= 0:
        raise InvalidParameterError(f"gamma: mean and sd must be positive, got {mean}, {sd}")
    return (mean / sd) ** 2, mean / sd ** 2


class EmissionFamily(object):
    """Common interface of the emission families

    Subclasses define ``type``, ``dim``, ``param_names`` and
    ``positive_params``; the latter are optimized on a floored log scale.
    """

    type: ClassVar[str] = ""
    dim: ClassVar[int] = 1

    def params(self):
        """Flat vector of natural parameters, ordered as ``param_names``"""
        return np.array([getattr(self, name) for name in self.param_names], dtype=float)

    @classmethod
    def from_params(cls, values, template=None):
        return cls(*[float(v) for v in values])

    def with_params(self, values):
        return type(self).from_params(values, template=self)

    def transforms(self):
        """Per-parameter working transform: 'log' for scales, 'identity' otherwise"""
        return tuple(
            "log" if name in self.positive_params else "identity"
            for name in self.param_names
        )

    def moments(self):
        raise NotImplementedError

    def to_dict(self):
        record = {"type": self.type}
        for name in self.param_names:
            record[name] = float(getattr(self, name))
        return record


@dataclass(frozen=True)
class Normal(EmissionFamily):
    mean: float
    sd: float

    type: ClassVar[str] = "normal"
    param_names: ClassVar[Tuple[str, ...]] = ("mean", "sd")
    positive_params: ClassVar[Tuple[str, ...]] = ("sd",)

    def __post_init__(self):
        _check_finite(self.type, mean=self.mean, sd=self.sd)
        if self.sd <= 0:
            raise InvalidParameterError(f"normal: sd must be positive, got {self.sd}")

    def log_density(self, x):
        return stats.norm.logpdf(np.asarray(x, dtype=float), loc=self.mean, scale=self.sd)

    def grad_log_density(self, x):
        r = np.asarray(x, dtype=float) - self.mean
        var = self.sd ** 2
        return np.stack([r / var, (r * r - var) / self.sd ** 3], axis=-1)

    def sample(self, rng, size=None):
        return rng.normal(self.mean, self.sd, size)

    def moments(self):
        return self.mean, self.sd ** 2


@dataclass(frozen=True)
class Gamma(EmissionFamily):
    """Gamma family stored as (mean, sd), evaluated through shape and rate"""

    mean: float
    sd: float

    type: ClassVar[str] = "gamma"
    param_names: ClassVar[Tuple[str, ...]] = ("mean", "sd")
    positive_params: ClassVar[Tuple[str, ...]] = ("mean", "sd")

    def __post_init__(self):
        gamma_mean_sd_to_shape_rate(self.mean, self.sd)

    @property
    def shape(self):
        return (self.mean / self.sd) ** 2

    @property
    def rate(self):
        return self.mean / self.sd ** 2

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        inside = x > 0
        with np.errstate(divide="ignore"):
            out = stats.gamma.logpdf(np.where(inside, x, 1.0), a=self.shape, scale=1.0 / self.rate)
        return np.where(inside, out, -np.inf)

    def grad_log_density(self, x):
        x = np.asarray(x, dtype=float)
        k, r = self.shape, self.rate
        inside = x > 0
        safe_x = np.where(inside, x, 1.0)
        d_shape = np.log(r) - special.digamma(k) + np.log(safe_x)
        d_rate = k / r - safe_x
        m, s = self.mean, self.sd
        d_mean = d_shape * 2 * m / s ** 2 + d_rate / s ** 2
        d_sd = -d_shape * 2 * m ** 2 / s ** 3 - d_rate * 2 * m / s ** 3
        grad = np.stack([d_mean, d_sd], axis=-1)
        grad[~inside] = 0.0
        return grad

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def moments(self):
        return self.mean, self.sd ** 2


@dataclass(frozen=True)
class LogNormal(EmissionFamily):
    log_mean: float
    log_sd: float

    type: ClassVar[str] = "lognormal"
    param_names: ClassVar[Tuple[str, ...]] = ("log_mean", "log_sd")
    positive_params: ClassVar[Tuple[str, ...]] = ("log_sd",)

    def __post_init__(self):
        _check_finite(self.type, log_mean=self.log_mean, log_sd=self.log_sd)
        if self.log_sd <= 0:
            raise InvalidParameterError(f"lognormal: log_sd must be positive, got {self.log_sd}")

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return stats.lognorm.logpdf(x, s=self.log_sd, scale=np.exp(self.log_mean))

    def grad_log_density(self, x):
        x = np.asarray(x, dtype=float)
        inside = x > 0
        r = np.log(np.where(inside, x, 1.0)) - self.log_mean
        var = self.log_sd ** 2
        grad = np.stack([r / var, (r * r - var) / self.log_sd ** 3], axis=-1)
        grad[~inside] = 0.0
        return grad

    def sample(self, rng, size=None):
        return rng.lognormal(self.log_mean, self.log_sd, size)

    def moments(self):
        var = self.log_sd ** 2
        mean = np.exp(self.log_mean + var / 2)
        return mean, (np.exp(var) - 1) * mean ** 2


@dataclass(frozen=True)
class MultivariateLogNormal(EmissionFamily):
    """Log of the observation vector is multivariate normal

    Parameters are optimized through the lower Cholesky factor of the
    log-scale covariance; its diagonal is kept positive.
    """

    log_mean: Tuple[float, ...]
    log_cov: Tuple[Tuple[float, ...], ...]

    type: ClassVar[str] = "mvlognormal"

    def __post_init__(self):
        mean = np.asarray(self.log_mean, dtype=float).ravel()
        cov = np.asarray(self.log_cov, dtype=float)
        if mean.size < 2:
            raise InvalidParameterError("mvlognormal: dimension must be at least 2")
        if cov.shape != (mean.size, mean.size):
            raise ShapeError(f"mvlognormal: covariance shape {cov.shape} for dimension {mean.size}")
        _check_finite(self.type, log_mean=mean, log_cov=cov)
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise InvalidParameterError("mvlognormal: covariance is not symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise InvalidParameterError("mvlognormal: covariance is not positive definite")
        object.__setattr__(self, "log_mean", tuple(float(v) for v in mean))
        object.__setattr__(self, "log_cov", tuple(tuple(float(v) for v in row) for row in cov))

    @property
    def dim(self):
        return len(self.log_mean)

    @property
    def mean_vector(self):
        return np.array(self.log_mean)

    @property
    def cov_matrix(self):
        return np.array(self.log_cov)

    @property
    def cholesky(self):
        return np.linalg.cholesky(self.cov_matrix)

    @property
    def _lower(self):
        return [(k, l) for k in range(self.dim) for l in range(k + 1)]

    @property
    def param_names(self):
        names = [f"log_mean_{k + 1}" for k in range(self.dim)]
        names += [f"chol_{k + 1}_{l + 1}" for k, l in self._lower]
        return tuple(names)

    @property
    def positive_params(self):
        return tuple(f"chol_{k + 1}_{k + 1}" for k in range(self.dim))

    def params(self):
        chol = self.cholesky
        return np.concatenate([self.mean_vector, [chol[k, l] for k, l in self._lower]])

    @classmethod
    def from_params(cls, values, template=None):
        values = np.asarray(values, dtype=float)
        dim = template.dim
        chol = np.zeros((dim, dim))
        for value, (k, l) in zip(values[dim:], template._lower):
            chol[k, l] = value
        return cls(tuple(values[:dim]), tuple(map(tuple, chol @ chol.T)))

    def _log_inputs(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dim:
            raise ShapeError(f"mvlognormal: expected {self.dim} columns, got {x.shape[-1]}")
        inside = np.all(x > 0, axis=-1)
        u = np.log(np.where(inside[:, None], x, 1.0))
        return u, inside

    def log_density(self, x):
        squeeze = np.asarray(x).ndim == 1
        u, inside = self._log_inputs(x)
        out = stats.multivariate_normal.logpdf(u, mean=self.mean_vector, cov=self.cov_matrix)
        out = np.atleast_1d(out) - u.sum(axis=-1)
        out[~inside] = -np.inf
        return out[0] if squeeze else out

    def grad_log_density(self, x):
        u, inside = self._log_inputs(x)
        chol = self.cholesky
        v = linalg.solve_triangular(chol, (u - self.mean_vector).T, lower=True)
        precision_resid = linalg.solve_triangular(chol.T, v, lower=False)
        columns = [precision_resid[k] for k in range(self.dim)]
        for k, l in self._lower:
            g = precision_resid[k] * v[l]
            if k == l:
                g = g - 1.0 / chol[k, k]
            columns.append(g)
        grad = np.stack(columns, axis=-1)
        grad[~inside] = 0.0
        return grad

    def sample(self, rng, size=None):
        return np.exp(rng.multivariate_normal(self.mean_vector, self.cov_matrix, size))

    def moments(self):
        var = np.diag(self.cov_matrix)
        return np.exp(self.mean_vector + var / 2), None

    def to_dict(self):
        return {
            "type": self.type,
            "log_mean": list(self.log_mean),
            "log_cov": [list(row) for row in self.log_cov],
        }


FAMILIES = {
    family.type: family for family in (Normal, Gamma, LogNormal, MultivariateLogNormal)
}


def family_from_dict(record):
    """Build an emission family from its tagged config record

    Args:
        record(dict): e.g. {"type": "normal", "mean": 0.0, "sd": 1.0}

    Returns:
        EmissionFamily
    """
    record = dict(record)
    kind = record.pop("type", None)
    record.pop("columns", None)
    if kind not in FAMILIES:
        raise InvalidParameterError(f"unknown emission family {kind!r}")
    if kind == "mvlognormal":
        return MultivariateLogNormal(tuple(record["log_mean"]), tuple(map(tuple, record["log_cov"])))
    return FAMILIES[kind](**{k: float(v) for k, v in record.items()})


def log_density(family, x):
    """ln f(x) for a family; -inf outside the support, never NaN for finite x"""
    return family.log_density(x)


def sample(family, seed, size=None):
    """Draw from a family with a fresh generator seeded by ``seed``"""
    return family.sample(np.random.default_rng(seed), size)


@dataclass(frozen=True)
class PerfectLabels(object):
    """Labels equal the hidden state with certainty"""

    type: ClassVar[str] = "perfect"

    def log_mass_matrix(self, labels, n_states):
        labels = _check_labels(labels, n_states)
        out = np.zeros((labels.size, n_states))
        rows = np.flatnonzero(labels)
        out[rows] = -np.inf
        out[rows, labels[rows] - 1] = 0.0
        return out

    def params(self):
        return np.empty(0)

    def to_dict(self):
        return {"type": self.type}


@dataclass(frozen=True)
class CategoricalLabels(object):
    """Label z given state i has probability beta[i][z - 1]

    Zero entries of ``beta`` are structural and stay zero during fitting.
    """

    beta: Tuple[Tuple[float, ...], ...]

    type: ClassVar[str] = "categorical"

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
            raise ShapeError(f"categorical labels: beta must be square, got {beta.shape}")
        _check_finite(self.type, beta=beta)
        if np.any(beta < 0) or np.any(np.abs(beta.sum(axis=1) - 1) > 1e-12):
            raise InvalidParameterError("categorical labels: rows must be non-negative and sum to 1")
        object.__setattr__(self, "beta", tuple(tuple(float(v) for v in row) for row in beta))

    @property
    def matrix(self):
        return np.array(self.beta)

    def log_mass_matrix(self, labels, n_states):
        labels = _check_labels(labels, n_states)
        if len(self.beta) != n_states:
            raise ShapeError(f"categorical labels cover {len(self.beta)} states, model has {n_states}")
        out = np.zeros((labels.size, n_states))
        rows = np.flatnonzero(labels)
        with np.errstate(divide="ignore"):
            out[rows] = np.log(self.matrix[:, labels[rows] - 1]).T
        return out

    def to_dict(self):
        return {"type": self.type, "beta": [list(row) for row in self.beta]}


def label_model_from_dict(record):
    kind = (record or {"type": "perfect"}).get("type", "perfect")
    if kind == "perfect":
        return PerfectLabels()
    if kind == "categorical":
        return CategoricalLabels(tuple(map(tuple, record["beta"])))
    raise InvalidParameterError(f"unknown label model {kind!r}")


def _check_labels(labels, n_states):
    labels = np.asarray(labels, dtype=int).ravel()
    if labels.size and (labels.min() < 0 or labels.max() > n_states):
        raise InvalidLabelError(f"labels must lie in 1..{n_states} (0 for no label)")
    return labels


def label_log_mass(model, state, z, n_states=None):
    """ln g^(i)(z) for one state and one label

    Args:
        model: PerfectLabels or CategoricalLabels
        state(int): hidden state, 1-based
        z(int or None): label, 1-based; None or 0 means no label
        n_states(int): number of states, needed to range-check perfect labels

    Returns:
        float: 0 for a missing label, otherwise the log mass (may be -inf)
    """
    if z is None or z == 0:
        return 0.0
    if n_states is None:
        n_states = len(model.beta) if isinstance(model, CategoricalLabels) else max(state, z)
    if not 1 <= z <= n_states:
        raise InvalidLabelError(f"label {z} outside 1..{n_states}")
    return float(model.log_mass_matrix([z], n_states)[0, state - 1])


@dataclass(frozen=True)
class EmissionProduct(object):
    """Independent product of per-feature families for one state

    Attributes:
        features: ordered ((feature name, family), ...) pairs
        columns: dataset columns read by each feature; defaults to the name
        missing: "ignore" gives a missing feature a density factor of 1,
            "error" rejects missing values
    """

    features: Tuple[Tuple[str, EmissionFamily], ...]
    columns: Tuple[Tuple[str, ...], ...] = None
    missing: str = "ignore"

    def __post_init__(self):
        features = tuple((str(name), family) for name, family in self.features)
        columns = self.columns
        if columns is None:
            columns = tuple((name,) for name, _ in features)
        columns = tuple(tuple(c) for c in columns)
        if len(columns) != len(features):
            raise ShapeError("one column list is needed per feature")
        for (name, family), cols in zip(features, columns):
            if len(cols) != family.dim:
                raise ShapeError(f"feature {name} reads {len(cols)} columns, family needs {family.dim}")
        if self.missing not in ("ignore", "error"):
            raise InvalidParameterError(f"unknown missing-value policy {self.missing!r}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "columns", columns)

    @property
    def names(self):
        return tuple(name for name, _ in self.features)

    @property
    def column_names(self):
        return tuple(c for cols in self.columns for c in cols)

    def family(self, name):
        return dict(self.features)[name]

    def with_family(self, name, family):
        features = tuple((n, family if n == name else f) for n, f in self.features)
        return replace(self, features=features)

    def feature_block(self, values, column_index, position):
        """Columns of one feature and the mask of rows where it is present"""
        idx = [column_index[c] for c in self.columns[position]]
        block = values[:, idx]
        present = ~np.any(np.isnan(block), axis=1)
        if self.missing == "error" and not present.all():
            raise InvalidParameterError(f"missing values in feature {self.features[position][0]}")
        if block.shape[1] == 1:
            block = block[:, 0]
        return block, present

    def log_density(self, values, column_names):
        """Row-wise ln of the product density over a T x C value matrix"""
        values = np.asarray(values, dtype=float)
        column_index = {c: k for k, c in enumerate(column_names)}
        out = np.zeros(values.shape[0])
        for position, (_, family) in enumerate(self.features):
            block, present = self.feature_block(values, column_index, position)
            if present.any():
                out[present] += family.log_density(block[present])
        return out


def check_products(products):
    """All states must expose identical feature names in identical order"""
    names = products[0].names
    for product in products[1:]:
        if product.names != names or product.columns != products[0].columns:
            raise ShapeError("every state must declare the same features in the same order")
    return names
