"""HMM and mixture machinery over weighted per-index emission terms

Emission terms arrive as a T x N matrix of logs. The recursions shift each
row by its maximum, run a scaled forward/backward pass in probability space
and keep the log of every scaling constant, so long sequences never
underflow and -inf entries stay exact zeros.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numba as nb
import numpy as np
from scipy.special import logsumexp

from phmmutils.exceptions import InvalidParameterError, ShapeError, ZeroLikelihoodError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

ROW_TOL = 1e-12


def _probability_row(name, values):
    values = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise InvalidParameterError(f"{name}: entries must be finite and non-negative")
    if abs(values.sum() - 1.0) > ROW_TOL:
        raise InvalidParameterError(f"{name}: entries sum to {values.sum()!r}, not 1")
    return values


@dataclass(frozen=True, eq=False)
class InitialDistribution(object):
    """Row vector delta with delta[i] = P(X_1 = i + 1)"""

    probs: np.ndarray
    fixed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "probs", _probability_row("initial distribution", self.probs))

    def __array__(self, dtype=None, copy=None):
        return self.probs.astype(dtype) if dtype else self.probs


@dataclass(frozen=True, eq=False)
class MixtureWeights(object):
    """Row vector pi with pi[i] = P(X_t = i + 1)"""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _probability_row("mixture weights", self.probs))

    def __array__(self, dtype=None, copy=None):
        return self.probs.astype(dtype) if dtype else self.probs


@dataclass(frozen=True, eq=False)
class TransitionMatrix(object):
    """Transition matrix with a structural-zero mask

    Attributes:
        matrix (ndarray): N x N, rows sum to 1
        mask (ndarray): boolean N x N, False marks a structural zero
    """

    matrix: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ShapeError(f"transition matrix must be square, got {matrix.shape}")
        mask = np.ones(matrix.shape, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != matrix.shape:
            raise ShapeError("transition mask must match the matrix shape")
        if not mask.any(axis=1).all():
            raise InvalidParameterError("every transition row needs at least one unmasked entry")
        if np.any(matrix[~mask] != 0):
            raise InvalidParameterError("masked transition entries must be exactly 0")
        for i, row in enumerate(matrix):
            _probability_row(f"transition row {i + 1}", row)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def normalized(cls, matrix, mask=None):
        """Zero the masked entries and rescale rows to sum to 1"""
        matrix = np.asarray(matrix, dtype=float)
        mask = np.ones(matrix.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        matrix = np.where(mask, matrix, 0.0)
        return cls(matrix / matrix.sum(axis=1, keepdims=True), mask)

    @property
    def n_states(self):
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix.astype(dtype) if dtype else self.matrix


@dataclass(frozen=True, eq=False)
class LabeledSeries(object):
    """One sequence of feature vectors with sparse state labels

    Attributes:
        series_id (str): identifier
        values (ndarray): T x C feature matrix, NaN marks a missing value
        feature_names (tuple): the C column names
        labels (ndarray): length-T integer labels, 1..N, 0 for no label
    """

    series_id: str
    values: np.ndarray
    feature_names: Tuple[str, ...]
    labels: np.ndarray = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        names = tuple(self.feature_names)
        if values.shape[1] != len(names):
            raise ShapeError(f"{len(names)} feature names for {values.shape[1]} columns")
        labels = np.zeros(values.shape[0], dtype=int) if self.labels is None else np.asarray(self.labels)
        if labels.shape != (values.shape[0],):
            raise ShapeError("labels must have one entry per index")
        labels = labels.astype(int)
        if np.any(labels < 0):
            raise InvalidParameterError("labels must be positive state numbers or 0")
        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "series_id", str(self.series_id))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.values.shape[0]

    @property
    def label_index(self):
        """0-based positions of the labelled indices"""
        return np.flatnonzero(self.labels)

    @property
    def n_labels(self):
        return int(np.count_nonzero(self.labels))

    def column(self, name):
        return self.values[:, self.feature_names.index(name)]

    def without_labels(self):
        return replace(self, labels=np.zeros(len(self), dtype=int))

    def slice(self, start, stop, series_id=None):
        return LabeledSeries(
            series_id or self.series_id,
            self.values[start:stop],
            self.feature_names,
            self.labels[start:stop],
        )


@dataclass(frozen=True, eq=False)
class Decoding(object):
    """Posterior state probabilities, log-likelihood and optional Viterbi path

    ``path`` holds 1-based states.
    """

    posteriors: np.ndarray
    log_likelihood: float
    path: Optional[np.ndarray] = None
    series_id: Optional[str] = None


def _shifted_probs(log_matrix):
    """exp(log_matrix - row max) together with the row maxima"""
    log_matrix = np.asarray(log_matrix, dtype=float)
    shift = log_matrix.max(axis=1)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    probs = np.exp(log_matrix - shift[:, None])
    return np.ascontiguousarray(probs), shift


@nb.njit(cache=True)
def _forward_kernel(delta, gamma, probs):
    T, N = probs.shape
    alpha = np.zeros((T, N))
    scale = np.zeros(T)
    c = 0.0
    for i in range(N):
        alpha[0, i] = delta[i] * probs[0, i]
        c += alpha[0, i]
    if c <= 0.0:
        return alpha, scale, 0
    scale[0] = c
    for i in range(N):
        alpha[0, i] /= c
    for t in range(1, T):
        c = 0.0
        for j in range(N):
            s = 0.0
            for i in range(N):
                s += alpha[t - 1, i] * gamma[i, j]
            alpha[t, j] = s * probs[t, j]
            c += alpha[t, j]
        if c <= 0.0:
            return alpha, scale, t
        scale[t] = c
        for j in range(N):
            alpha[t, j] /= c
    return alpha, scale, T


@nb.njit(cache=True)
def _backward_kernel(gamma, probs, scale):
    T, N = probs.shape
    beta = np.ones((T, N))
    for t in range(T - 2, -1, -1):
        for i in range(N):
            s = 0.0
            for j in range(N):
                s += gamma[i, j] * probs[t + 1, j] * beta[t + 1, j]
            beta[t, i] = s / scale[t + 1]
    return beta


@nb.njit(cache=True)
def _transition_counts(gamma, probs, alpha, beta, scale):
    T, N = probs.shape
    counts = np.zeros((N, N))
    for t in range(1, T):
        for i in range(N):
            a = alpha[t - 1, i]
            if a == 0.0:
                continue
            for j in range(N):
                counts[i, j] += a * gamma[i, j] * probs[t, j] * beta[t, j] / scale[t]
    return counts


@nb.njit(cache=True)
def _viterbi_kernel(log_delta, log_gamma, log_matrix):
    T, N = log_matrix.shape
    score = np.empty((T, N))
    back = np.zeros((T, N), dtype=np.int64)
    for i in range(N):
        score[0, i] = log_delta[i] + log_matrix[0, i]
    for t in range(1, T):
        for j in range(N):
            best = -np.inf
            arg = 0
            for i in range(N):
                cand = score[t - 1, i] + log_gamma[i, j]
                if cand > best:
                    best = cand
                    arg = i
            score[t, j] = best + log_matrix[t, j]
            back[t, j] = arg
    path = np.zeros(T, dtype=np.int64)
    best = -np.inf
    for i in range(N):
        if score[T - 1, i] > best:
            best = score[T - 1, i]
            path[T - 1] = i
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


def _check_inputs(delta, gamma, log_matrix):
    delta = np.ascontiguousarray(np.asarray(delta, dtype=float))
    gamma = np.ascontiguousarray(np.asarray(gamma, dtype=float))
    log_matrix = np.asarray(log_matrix, dtype=float)
    if log_matrix.ndim != 2 or log_matrix.shape[0] == 0:
        raise ShapeError("emission log matrix must be a non-empty T x N array")
    n_states = log_matrix.shape[1]
    if delta.shape != (n_states,) or gamma.shape != (n_states, n_states):
        raise ShapeError(
            f"delta {delta.shape} and gamma {gamma.shape} do not match {n_states} states"
        )
    if np.isnan(log_matrix).any() or np.isposinf(log_matrix).any():
        raise InvalidParameterError("emission log matrix contains NaN or +inf")
    return delta, gamma, log_matrix


def weighted_emission_log_matrix(series, emissions, label_model, weights):
    """Per-index, per-state weighted log emission terms

    Entry (t, i) is w_t * (ln f_i(y_t) + ln g_i(z_t)), with 0 * (-inf) = 0.

    Args:
        series(LabeledSeries): observations and labels
        emissions(sequence of EmissionProduct): one product per state
        label_model: PerfectLabels or CategoricalLabels
        weights(array): non-negative per-index weights

    Returns:
        ndarray: T x N matrix of logs
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(series),):
        raise ShapeError(f"{weights.shape} weights for a series of length {len(series)}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise InvalidParameterError("weights must be finite and non-negative")
    n_states = len(emissions)
    terms = np.column_stack(
        [product.log_density(series.values, series.feature_names) for product in emissions]
    )
    terms = terms + label_model.log_mass_matrix(series.labels, n_states)
    with np.errstate(invalid="ignore"):
        out = weights[:, None] * terms
    out[weights == 0] = 0.0
    return out


def forward_log_likelihood(delta, gamma, emission_log_matrix):
    """ln of delta P_1 prod_t Gamma P_t 1' by the scaled forward recursion

    Returns -inf (and logs a warning) when every path has probability zero.
    """
    delta, gamma, log_matrix = _check_inputs(delta, gamma, emission_log_matrix)
    probs, shift = _shifted_probs(log_matrix)
    _, scale, reached = _forward_kernel(delta, gamma, probs)
    if reached < len(probs):
        logger.warning("Zero likelihood: no feasible path through index %d", reached + 1)
        return -np.inf
    return float(np.log(scale).sum() + shift.sum())


def _forward_backward_arrays(delta, gamma, log_matrix):
    probs, shift = _shifted_probs(log_matrix)
    alpha, scale, reached = _forward_kernel(delta, gamma, probs)
    if reached < len(probs):
        return None
    beta = _backward_kernel(gamma, probs, scale)
    posteriors = alpha * beta
    posteriors /= posteriors.sum(axis=1, keepdims=True)
    log_likelihood = float(np.log(scale).sum() + shift.sum())
    return posteriors, log_likelihood, alpha, beta, scale, probs


def forward_backward(delta, gamma, emission_log_matrix, series_id=None):
    """Posterior state probabilities P(X_t = i | y, z) and the log-likelihood

    Raises:
        ZeroLikelihoodError: when the weighted likelihood is zero
    """
    delta, gamma, log_matrix = _check_inputs(delta, gamma, emission_log_matrix)
    result = _forward_backward_arrays(delta, gamma, log_matrix)
    if result is None:
        raise ZeroLikelihoodError(
            f"series {series_id} has zero likelihood; posteriors undefined",
            series_id,
        )
    posteriors, log_likelihood = result[:2]
    return Decoding(posteriors, log_likelihood, series_id=series_id)


def expected_counts(delta, gamma, emission_log_matrix):
    """Posteriors, expected transition counts and log-likelihood

    Returns None when the likelihood is zero. Used by the gradient.
    """
    delta, gamma, log_matrix = _check_inputs(delta, gamma, emission_log_matrix)
    result = _forward_backward_arrays(delta, gamma, log_matrix)
    if result is None:
        return None
    posteriors, log_likelihood, alpha, beta, scale, probs = result
    counts = _transition_counts(gamma, probs, alpha, beta, scale)
    return posteriors, counts, log_likelihood


def _log(values):
    with np.errstate(divide="ignore"):
        return np.log(values)


def viterbi(delta, gamma, emission_log_matrix, series_id=None):
    """Most probable state path, 1-based, ties going to the lowest state

    Raises:
        ZeroLikelihoodError: when every path has probability zero
    """
    delta, gamma, log_matrix = _check_inputs(delta, gamma, emission_log_matrix)
    path, best = _viterbi_kernel(_log(delta), _log(gamma), np.ascontiguousarray(log_matrix))
    if not np.isfinite(best):
        raise ZeroLikelihoodError(f"no feasible state path for series {series_id}", series_id)
    return path + 1


def path_log_probability(delta, gamma, emission_log_matrix, path):
    """Joint log-probability of one 1-based state path"""
    delta, gamma, log_matrix = _check_inputs(delta, gamma, emission_log_matrix)
    states = np.asarray(path, dtype=int) - 1
    log_gamma = _log(gamma)
    value = _log(delta)[states[0]] + log_matrix[np.arange(len(states)), states].sum()
    return float(value + log_gamma[states[:-1], states[1:]].sum())


def decode(delta, gamma, emission_log_matrix, series_id=None):
    """forward_backward plus the Viterbi path in one Decoding"""
    decoding = forward_backward(delta, gamma, emission_log_matrix, series_id)
    path = viterbi(delta, gamma, emission_log_matrix, series_id)
    return replace(decoding, path=path)


def mixture_log_density(pi, emissions, label_model, series, weights):
    """sum_t w_t * ln(sum_i pi_i f_i(y_t) g_i(z_t)), with 0 * (-inf) = 0

    Returns -inf (and logs a warning) when a positively weighted index has
    zero density.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (len(emissions),):
        raise ShapeError(f"{pi.shape} mixture weights for {len(emissions)} states")
    weights = np.asarray(weights, dtype=float)
    unit = weighted_emission_log_matrix(series, emissions, label_model, np.ones(len(series)))
    with np.errstate(divide="ignore", invalid="ignore"):
        per_index = logsumexp(_log(pi)[None, :] + unit, axis=1)
    if weights.shape != per_index.shape or np.any(weights < 0):
        raise ShapeError("weights must be non-negative with one entry per index")
    active = weights > 0
    if np.any(np.isneginf(per_index[active])):
        logger.warning("Zero mixture density in series %s", series.series_id)
        return -np.inf
    return float(np.dot(weights[active], per_index[active]))
