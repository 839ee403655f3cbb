"""Weight schemes for semi-supervised likelihoods

Mixtures use the normalized lambda scheme: labelled indices get
(1 - lambda) T / |labels| and unlabelled ones lambda T / (T - |labels|).
PHMMs use the alpha scheme: labelled indices keep weight 1 and
unlabelled indices get alpha. Weights act as exponents on the whole
per-index term f * g.
"""
import logging

import numpy as np
import pandas as pd

from phmmutils.exceptions import DegenerateSchemeError, InvalidParameterError, ShapeError
from phmmutils.markov import forward_log_likelihood, mixture_log_density, weighted_emission_log_matrix

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


def check_weight(name, value):
    """Reject weights outside [0, 1]"""
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise InvalidParameterError(f"{name} must lie in [0, 1], got {value}")
    return value


def lambda_weights(lam, T, n_labels):
    """Labelled and unlabelled weights of the lambda scheme

    Args:
        lam(float): relative weight of unlabelled observations, in [0, 1]
        T(int): number of indices
        n_labels(int): number of labelled indices

    Returns:
        tuple: (labelled weight, unlabelled weight); an unused weight is 0
    """
    lam = check_weight("lambda", lam)
    if not 0 <= n_labels <= T or T < 1:
        raise InvalidParameterError(f"need 0 <= labels ({n_labels}) <= T ({T}) and T >= 1")
    if n_labels == 0 and lam < 1:
        raise DegenerateSchemeError("no labelled indices: only lambda = 1 is defined")
    if n_labels == T and lam > 0:
        raise DegenerateSchemeError("no unlabelled indices: only lambda = 0 is defined")
    labelled = (1 - lam) * T / n_labels if n_labels else 0.0
    unlabelled = lam * T / (T - n_labels) if n_labels < T else 0.0
    return labelled, unlabelled


def lambda_index_weights(labels, lam):
    labels = np.asarray(labels)
    labelled, unlabelled = lambda_weights(lam, labels.size, int(np.count_nonzero(labels)))
    return np.where(labels > 0, labelled, unlabelled)


def weighted_mixture_log_likelihood(pi, emissions, label_model, series, lam):
    """ln of the lambda-weighted semi-supervised mixture likelihood"""
    weights = lambda_index_weights(series.labels, lam)
    return mixture_log_density(pi, emissions, label_model, series, weights)


def alpha_weight(z, alpha):
    """1 for a labelled index, alpha for an unlabelled one (z None or 0)"""
    return 1.0 if z else float(alpha)


def alpha_weights(labels, alpha):
    return np.where(np.asarray(labels) > 0, 1.0, float(alpha))


def phmm_weighted_log_likelihood(delta, gamma, emissions, label_model, series, alpha):
    """ln L_alpha for one series

    Args:
        delta: initial distribution
        gamma: transition matrix
        emissions(sequence of EmissionProduct): one product per state
        label_model: PerfectLabels or CategoricalLabels
        series(LabeledSeries): observations and labels
        alpha(float): weight of unlabelled indices

    Returns:
        float: weighted log-likelihood, -inf when labels are contradictory
    """
    alpha = check_weight("alpha", alpha)
    if len(series) == 0:
        raise ShapeError("series is empty")
    log_matrix = weighted_emission_log_matrix(
        series, emissions, label_model, alpha_weights(series.labels, alpha)
    )
    return forward_log_likelihood(delta, gamma, log_matrix)


def series_log_likelihoods(params, dataset, alpha):
    """Per-series ln L_alpha, in dataset order

    Returns:
        Series: values indexed by series id
    """
    columns = set(params.column_names)
    ids, values = [], []
    for series in dataset:
        missing = columns - set(series.feature_names)
        if missing:
            raise ShapeError(f"series {series.series_id} lacks columns {sorted(missing)}")
        ids.append(series.series_id)
        values.append(
            phmm_weighted_log_likelihood(
                params.delta, params.gamma, params.emissions, params.label_model, series, alpha
            )
        )
    return pd.Series(values, index=ids, dtype=float)


def total_log_likelihood(params, dataset, alpha):
    """Sum of ln L_alpha over independent series, summed in dataset order

    Returns -inf when any series is infeasible; the offending series are
    logged.
    """
    per_series = series_log_likelihoods(params, dataset, alpha)
    infeasible = per_series.index[np.isneginf(per_series.values)]
    if len(infeasible):
        logger.warning("Zero likelihood for series %s", ", ".join(map(str, infeasible)))
        return -np.inf
    total = 0.0
    for value in per_series.values:
        total += value
    return total
