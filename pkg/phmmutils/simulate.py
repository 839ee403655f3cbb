"""Synthetic PHMM data and brute-force oracles

The oracles enumerate every hidden path, so they only serve small
instances (N**T <= 10**6) and exist to check the recursions in markov.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from phmmutils.distributions import CategoricalLabels
from phmmutils.exceptions import InvalidParameterError, ScenarioSizeError, ShapeError, ZeroLikelihoodError
from phmmutils.helpers import Helpers
from phmmutils.markov import LabeledSeries

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

MAX_PATHS = 10 ** 6
LABEL_RULES = ("fixed", "terminal")


@dataclass(frozen=True, eq=False)
class SimulationScenario(object):
    """Generating model plus series lengths and label positions

    Attributes:
        params (ModelParams): generating parameters
        lengths (tuple): length of every series
        label_sets (tuple): 0-based labelled positions per series; used by
            the "fixed" label rule
        seed (int): base seed
        series_ids (tuple): identifiers, default "s1", "s2", ...
        label_rule (str): "fixed" labels the given positions; "terminal"
            labels, per label value, the first visit of that state (the
            last index for an absorbing state) in label_counts[z] randomly
            chosen series
        label_counts (dict): label value -> number of series, "terminal" rule
    """

    params: object
    lengths: Tuple[int, ...]
    label_sets: Tuple[Tuple[int, ...], ...] = ()
    seed: int = 0
    series_ids: Tuple[str, ...] = ()
    label_rule: str = "fixed"
    label_counts: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        lengths = tuple(int(n) for n in self.lengths)
        if not lengths or min(lengths) < 1:
            raise InvalidParameterError("every series needs length >= 1")
        if self.label_rule not in LABEL_RULES:
            raise InvalidParameterError(f"unknown label rule {self.label_rule!r}")
        label_sets = tuple(tuple(sorted(set(int(t) for t in s))) for s in self.label_sets)
        if self.label_rule == "fixed":
            if not label_sets:
                label_sets = tuple(() for _ in lengths)
            if len(label_sets) != len(lengths):
                raise ShapeError(f"{len(label_sets)} label sets for {len(lengths)} series")
            for positions, n in zip(label_sets, lengths):
                if positions and (positions[0] < 0 or positions[-1] >= n):
                    raise InvalidParameterError(f"label positions {positions} outside a series of length {n}")
        ids = tuple(str(s) for s in self.series_ids) or tuple(f"s{k + 1}" for k in range(len(lengths)))
        if len(ids) != len(lengths):
            raise ShapeError(f"{len(ids)} series ids for {len(lengths)} series")
        counts = {int(z): int(c) for z, c in dict(self.label_counts).items()}
        if any(not 1 <= z <= self.params.n_states for z in counts):
            raise InvalidParameterError(f"label counts name states outside 1..{self.params.n_states}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "label_sets", label_sets)
        object.__setattr__(self, "series_ids", ids)
        object.__setattr__(self, "label_counts", counts)

    @property
    def total_length(self):
        return sum(self.lengths)


@dataclass
class SimulationResult(object):
    """Simulated dataset and the hidden paths (1-based) that produced it"""

    dataset: list
    paths: list

    def truth_df(self):
        return pd.concat(
            [
                pd.DataFrame({"series_id": s.series_id, "t": np.arange(1, len(s) + 1), "state": path})
                for s, path in zip(self.dataset, self.paths)
            ],
            ignore_index=True,
        )


def split_lengths(n_series, total_length, min_length=None, rng=None):
    """
    Series lengths summing to total_length

    Without min_length the split is as even as possible, the remainder going
    to the last series. With min_length every series gets min_length plus a
    multinomial share of the rest.
    """
    if n_series < 1 or total_length < n_series:
        raise InvalidParameterError(f"cannot split {total_length} indices into {n_series} series")
    if min_length is None:
        base = total_length // n_series
        lengths = [base] * n_series
        lengths[-1] += total_length - base * n_series
        return lengths
    rest = total_length - n_series * min_length
    if rest < 0:
        raise InvalidParameterError(f"{n_series} series of at least {min_length} exceed {total_length}")
    return list(min_length + rng.multinomial(rest, np.full(n_series, 1.0 / n_series)))


def random_label_sets(lengths, n_labels, rng):
    """n_labels positions drawn without replacement over all indices"""
    total = sum(lengths)
    if n_labels > total:
        raise InvalidParameterError(f"{n_labels} labels exceed {total} indices")
    chosen = np.sort(rng.choice(total, size=n_labels, replace=False))
    bounds = np.concatenate([[0], np.cumsum(lengths)])
    return [tuple(chosen[(chosen >= a) & (chosen < b)] - a) for a, b in zip(bounds[:-1], bounds[1:])]


def sample_path(delta, gamma, T, rng):
    """Hidden path, 0-based"""
    n = len(delta)
    path = np.zeros(T, dtype=int)
    path[0] = rng.choice(n, p=delta)
    for t in range(1, T):
        path[t] = rng.choice(n, p=gamma[path[t - 1]])
    return path


def sample_emissions(params, path, rng):
    """T x C values for a 0-based path, in the model's column order"""
    products = params.emissions
    columns = products[0].columns
    width = sum(len(c) for c in columns)
    values = np.zeros((path.size, width))
    for state, product in enumerate(products):
        rows = np.flatnonzero(path == state)
        if rows.size == 0:
            continue
        col = 0
        for (_, family), cols in zip(product.features, columns):
            draws = family.sample(rng, size=rows.size)
            values[rows, col:col + len(cols)] = np.reshape(draws, (rows.size, len(cols)))
            col += len(cols)
    return values


def sample_label(label_model, state, rng):
    """Label for a 0-based state"""
    if isinstance(label_model, CategoricalLabels):
        beta = label_model.matrix[state]
        return int(rng.choice(beta.size, p=beta)) + 1
    return state + 1


class Simulator(Helpers):
    """This is a class for generating labelled PHMM datasets"""

    def simulate(self, scenario):
        """
        Simulates every series of a scenario with its own seed stream

        Args:
            scenario(SimulationScenario): generating model and layout

        Returns:
            SimulationResult: dataset and 1-based hidden paths
        """
        params = scenario.params
        delta, gamma = params.delta.probs, params.gamma.matrix
        columns = params.column_names
        streams = self.seed_streams(len(scenario.lengths))
        dataset, paths = [], []
        for k, (series_id, T, stream) in enumerate(zip(scenario.series_ids, scenario.lengths, streams)):
            rng = np.random.default_rng(stream)
            path = sample_path(delta, gamma, T, rng)
            values = sample_emissions(params, path, rng)
            labels = np.zeros(T, dtype=int)
            if scenario.label_rule == "fixed":
                for t in scenario.label_sets[k]:
                    labels[t] = sample_label(params.label_model, path[t], rng)
            dataset.append(LabeledSeries(series_id, values, columns, labels))
            paths.append(path)
        if scenario.label_rule == "terminal":
            dataset = self._terminal_labels(scenario, dataset, paths)
        logger.info(
            "Simulated %d series, %d indices, %d labels",
            len(dataset),
            scenario.total_length,
            sum(s.n_labels for s in dataset),
        )
        return SimulationResult(dataset, [path + 1 for path in paths])

    def _terminal_labels(self, scenario, dataset, paths):
        rng = self.rng(1)
        params = scenario.params
        labels = [np.zeros(len(s), dtype=int) for s in dataset]
        # a series carries at most one label away from its first index
        taken = np.zeros(len(dataset), dtype=bool)
        for z, count in sorted(scenario.label_counts.items()):
            state = z - 1
            absorbing = params.gamma.matrix[state, state] == 1.0
            positions = {}
            for k, path in enumerate(paths):
                if absorbing and path[-1] == state:
                    positions[k] = path.size - 1
                elif not absorbing and np.any(path == state):
                    positions[k] = int(np.argmax(path == state))
            candidates = [k for k, t in positions.items() if t == 0 or not taken[k]]
            if len(candidates) < count:
                logger.warning("Only %d series can carry label %d; %d requested", len(candidates), z, count)
                count = len(candidates)
            for k in (rng.choice(candidates, size=count, replace=False) if count else ()):
                t = positions[k]
                labels[k][t] = sample_label(params.label_model, state, rng)
                if t > 0:
                    taken[k] = True
        return [LabeledSeries(s.series_id, s.values, s.feature_names, z) for s, z in zip(dataset, labels)]


def simulate_phmm(scenario):
    """Dataset and hidden truth of a scenario, deterministic given its seed"""
    return Simulator(seed=scenario.seed).simulate(scenario)


def _enumerate(delta, gamma, log_matrix):
    log_matrix = np.asarray(log_matrix, dtype=float)
    T, n = log_matrix.shape
    if float(n) ** T > MAX_PATHS:
        raise ScenarioSizeError(f"{n}**{T} paths exceed the enumeration limit {MAX_PATHS}")
    paths = np.array(list(itertools.product(range(n), repeat=T)), dtype=int).reshape(-1, T)
    with np.errstate(divide="ignore"):
        log_delta = np.log(np.asarray(delta, dtype=float))
        log_gamma = np.log(np.asarray(gamma, dtype=float))
    scores = log_delta[paths[:, 0]] + log_matrix[np.arange(T), paths].sum(axis=1)
    if T > 1:
        scores = scores + log_gamma[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    return paths, scores


def brute_force_likelihood(delta, gamma, log_matrix):
    """ln of the sum over all hidden paths of their weighted joint mass"""
    _, scores = _enumerate(delta, gamma, log_matrix)
    return float(logsumexp(scores))


def brute_force_posterior(delta, gamma, log_matrix):
    """T x N posterior state probabilities by path enumeration"""
    paths, scores = _enumerate(delta, gamma, log_matrix)
    total = logsumexp(scores)
    if not np.isfinite(total):
        raise ZeroLikelihoodError("every path has probability zero")
    weights = np.exp(scores - total)
    n = np.asarray(log_matrix).shape[1]
    return np.array([np.bincount(paths[:, t], weights=weights, minlength=n) for t in range(paths.shape[1])])


def brute_force_map_path(delta, gamma, log_matrix):
    """Most probable path, 1-based; ties go to the lexicographically first path"""
    paths, scores = _enumerate(delta, gamma, log_matrix)
    best = int(np.argmax(scores))
    if not np.isfinite(scores[best]):
        raise ZeroLikelihoodError("every path has probability zero")
    return paths[best] + 1
