"""Cross-validation schemes, classification metrics and event probabilities"""
import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.metrics import confusion_matrix, roc_auc_score
from sklearn.model_selection import StratifiedKFold

from phmmutils.estimate import Estimator
from phmmutils.exceptions import (
    CannotSplitError,
    FitFailureError,
    InvalidParameterError,
    InvalidLabelError,
    ShapeError,
    UndefinedMetricError,
)
from phmmutils.helpers import Helpers
from phmmutils.markov import decode

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

SCHEMES = ("subprofile", "stratified")


@dataclass(frozen=True)
class FoldPlan(object):
    """Evaluation units grouped into folds

    Attributes:
        folds (tuple): one tuple of unit (series) ids per fold
        scheme (str): "subprofile" or "stratified"
        seed (int): seed the plan was drawn with
    """

    folds: Tuple[Tuple[str, ...], ...]
    scheme: str
    seed: int = 0

    def __post_init__(self):
        folds = tuple(tuple(str(u) for u in fold) for fold in self.folds)
        if self.scheme not in SCHEMES:
            raise InvalidParameterError(f"unknown fold scheme {self.scheme!r}")
        if not folds or any(not fold for fold in folds):
            raise InvalidParameterError("a fold plan needs non-empty folds")
        units = [u for fold in folds for u in fold]
        if len(units) != len(set(units)):
            raise InvalidParameterError("a unit appears in more than one fold")
        object.__setattr__(self, "folds", folds)

    @property
    def units(self):
        return tuple(u for fold in self.folds for u in fold)

    def fold_of(self, unit):
        for k, fold in enumerate(self.folds):
            if unit in fold:
                return k
        return None

    def check(self, dataset):
        """Every unit must name a series of the dataset"""
        ids = {series.series_id for series in dataset}
        unknown = [u for u in self.units if u not in ids]
        if unknown:
            raise InvalidParameterError(f"fold plan names unknown series {unknown[:5]}")


def split_subprofiles(series, seed):
    """
    Cuts a series into two contiguous parts holding ceil(n/2) and
    floor(n/2) of its n labels

    Args:
        series(LabeledSeries): series with at least 2 labels
        seed: seed for the cut position

    Returns:
        tuple: the two LabeledSeries, ids suffixed "/a" and "/b"
    """
    positions = series.label_index
    n = positions.size
    if n < 2:
        raise CannotSplitError(f"series {series.series_id} has {n} labels; 2 are needed to split")
    k = math.ceil(n / 2)
    # first index of the second part
    cut = int(np.random.default_rng(seed).integers(positions[k - 1] + 1, positions[k] + 1))
    return (
        series.slice(0, cut, f"{series.series_id}/a"),
        series.slice(cut, len(series), f"{series.series_id}/b"),
    )


def subprofile_plan(dataset, seed):
    """
    Splits every series into two sub-profiles and uses each as its own fold

    Series with one label stay whole and form a fold; unlabelled series are
    kept for training only.

    Returns:
        tuple: (split dataset, FoldPlan)
    """
    split, folds = [], []
    for k, series in enumerate(dataset):
        if series.n_labels >= 2:
            parts = split_subprofiles(series, np.random.SeedSequence([seed, k]))
            split.extend(parts)
            folds.extend((part.series_id,) for part in parts)
            continue
        logger.warning("Series %s has %d labels; not split", series.series_id, series.n_labels)
        split.append(series)
        if series.n_labels:
            folds.append((series.series_id,))
    return split, FoldPlan(tuple(folds), "subprofile", seed)


def make_stratified_folds(units, k, seed):
    """
    Splits (unit id, binary outcome) pairs into k folds with balanced classes

    Args:
        units(list): (id, outcome) pairs, outcome 0 or 1
        k(int): number of folds, at least 2
        seed(int): shuffling seed

    Returns:
        FoldPlan: per-class counts across folds differ by at most 1
    """
    if k < 2:
        raise InvalidParameterError(f"k must be at least 2, got {k}")
    if k > len(units):
        raise InvalidParameterError(f"k = {k} exceeds the {len(units)} units")
    ids = [str(u) for u, _ in units]
    outcomes = np.array([int(bool(y)) for _, y in units])
    if outcomes.min() == outcomes.max():
        raise InvalidParameterError("both outcome classes need at least one unit")
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    try:
        folds = [tuple(ids[i] for i in sorted(test)) for _, test in splitter.split(np.zeros(len(ids)), outcomes)]
    except ValueError as err:
        raise InvalidParameterError(str(err))
    return FoldPlan(tuple(folds), "stratified", seed)


def unit_outcomes(dataset, event_states, negative_states):
    """Binary outcome per series from its labels; series with neither kind are skipped"""
    event_states, negative_states = set(event_states), set(negative_states)
    units = []
    for series in dataset:
        labels = set(int(z) for z in series.labels[series.labels > 0])
        if labels & event_states:
            units.append((series.series_id, 1))
        elif labels & negative_states:
            units.append((series.series_id, 0))
    return units


@dataclass
class CrossValidationResult(object):
    """Held-out decodings assembled over all folds

    Attributes:
        decodings (dict): unit id -> Decoding (posteriors and Viterbi path)
        fold_of (dict): unit id -> 0-based fold index
        fits (list): FitResult per fold
        alpha (float): weight used for fitting
    """

    decodings: dict
    fold_of: dict
    fits: list
    alpha: float

    def posteriors_df(self):
        """Long-format posteriors: series_id, t, state, probability"""
        frames = []
        for unit, decoding in self.decodings.items():
            T, N = decoding.posteriors.shape
            frames.append(
                pd.DataFrame(
                    {
                        "series_id": unit,
                        "t": np.repeat(np.arange(1, T + 1), N),
                        "state": np.tile(np.arange(1, N + 1), T),
                        "probability": decoding.posteriors.ravel(),
                    }
                )
            )
        return pd.concat(frames, ignore_index=True)

    def paths_df(self):
        frames = [
            pd.DataFrame(
                {"series_id": unit, "t": np.arange(1, len(d.path) + 1), "state": d.path}
            )
            for unit, d in self.decodings.items()
        ]
        return pd.concat(frames, ignore_index=True)


def _run_fold(k, fold, spec, dataset, alpha, estimator_kwargs):
    held = set(fold)
    train = [series for series in dataset if series.series_id not in held]
    test = [series.without_labels() for series in dataset if series.series_id in held]
    try:
        result = Estimator(**estimator_kwargs).fit(spec, train, alpha)
    except FitFailureError as err:
        raise FitFailureError(f"fold {k + 1}: {err}", err.restarts, fold=k + 1)
    params = result.params
    decodings = {}
    for series in test:
        log_matrix = params.weighted_log_matrix(series, np.ones(len(series)))
        decodings[series.series_id] = decode(params.delta, params.gamma, log_matrix, series.series_id)
    return result, decodings


def sensitivity_specificity(predicted, truth, n_states):
    """
    One-vs-rest sensitivity and specificity per state over labelled units

    Args:
        predicted(array): predicted states, 1-based
        truth(array): true labels, 0 for unlabelled (skipped)
        n_states(int): number of states

    Returns:
        dict: state -> (sensitivity, specificity); an undefined value is None
    """
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    labelled = truth > 0
    if not labelled.any():
        raise InvalidParameterError("at least one labelled unit is needed")
    if truth.max() > n_states or predicted.min() < 1 or predicted.max() > n_states:
        raise InvalidLabelError(f"states must lie in 1..{n_states}")
    states = np.arange(1, n_states + 1)
    cm = confusion_matrix(truth[labelled], predicted[labelled], labels=states)
    total = cm.sum()
    out = {}
    for i, state in enumerate(states):
        tp = cm[i, i]
        fn = cm[i].sum() - tp
        fp = cm[:, i].sum() - tp
        tn = total - tp - fn - fp
        sensitivity = tp / (tp + fn) if tp + fn else None
        specificity = tn / (tn + fp) if tn + fp else None
        out[int(state)] = (
            None if sensitivity is None else float(sensitivity),
            None if specificity is None else float(specificity),
        )
    return out


def auc(scores, labels=None):
    """
    Area under the ROC curve; ties between a positive and a negative count 1/2

    Args:
        scores: scores, or (score, label) pairs when labels is None
        labels: binary labels, 1 = positive

    Returns:
        float: AUC in [0, 1]
    """
    if labels is None:
        pairs = list(scores)
        scores = [s for s, _ in pairs]
        labels = [y for _, y in pairs]
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape:
        raise InvalidParameterError("one label is needed per score")
    if labels.size == 0 or labels.min() == labels.max():
        raise UndefinedMetricError("AUC needs both a positive and a negative")
    return float(roc_auc_score(labels, scores))


def terminal_event_probability(decoding, states):
    """P(last state in states | observations); 0 for an empty set"""
    states = sorted(set(int(s) for s in states))
    if not states:
        return 0.0
    n = decoding.posteriors.shape[1]
    if states[0] < 1 or states[-1] > n:
        raise InvalidLabelError(f"states must lie in 1..{n}")
    return float(decoding.posteriors[-1, np.array(states) - 1].sum())


def classify_by_threshold(probabilities, threshold=0.5):
    """1 where the probability is strictly above threshold"""
    probabilities = np.asarray(probabilities, dtype=float)
    if np.any((probabilities < 0) | (probabilities > 1)):
        raise InvalidParameterError("probabilities must lie in [0, 1]")
    return (probabilities > threshold).astype(int)


@dataclass
class CatchRate(object):
    effort_hours: float
    successes: int
    per_hour: float = None
    foraging_fraction: float = None


def catch_rate(durations, dive_types, foraging_state, successes):
    """
    Hours of foraging effort and successes per hour of effort

    Args:
        durations(array): dive durations in seconds
        dive_types(array): decoded dive type per dive, 0 where undecided
        foraging_state(int): dive type counted as foraging effort
        successes(int): number of successful foraging dives

    Returns:
        CatchRate: per_hour is None without foraging effort;
            foraging_fraction is the share of total dive time spent foraging
    """
    durations = np.asarray(durations, dtype=float)
    dive_types = np.asarray(dive_types)
    if durations.shape != dive_types.shape:
        raise ShapeError(f"{durations.shape} durations for {dive_types.shape} dive types")
    foraging = dive_types == foraging_state
    seconds = float(durations[foraging].sum())
    total = float(durations.sum())
    hours = seconds / 3600.0
    return CatchRate(
        hours,
        int(successes),
        successes / hours if hours > 0 else None,
        seconds / total if total > 0 else None,
    )


@dataclass
class MetricsReport(object):
    """Metric rows: alpha, state, metric, value, n_units

    ``state`` is a state number, or a comma-joined state set for terminal
    event metrics. An undefined value is left empty.
    """

    rows: pd.DataFrame = field(
        default_factory=lambda: pd.DataFrame(columns=["alpha", "state", "metric", "value", "n_units"])
    )

    @classmethod
    def concat(cls, reports):
        return cls(pd.concat([r.rows for r in reports], ignore_index=True))

    def value(self, state, metric, alpha=None):
        rows = self.rows[(self.rows["state"] == str(state)) & (self.rows["metric"] == metric)]
        if alpha is not None:
            rows = rows[np.isclose(rows["alpha"].astype(float), alpha)]
        return None if rows.empty or pd.isna(rows["value"].iloc[0]) else float(rows["value"].iloc[0])

    def to_table(self):
        return self.rows.to_string(index=False, na_rep="-")


def _fold_mean_auc(scores, outcomes, folds):
    values = []
    for fold in np.unique(folds):
        sel = folds == fold
        if outcomes[sel].min() != outcomes[sel].max():
            values.append(auc(scores[sel], outcomes[sel]))
    return float(np.mean(values)) if values else None


def _auc_or_none(scores, outcomes, folds, mode):
    if mode == "fold-mean":
        return _fold_mean_auc(scores, outcomes, folds)
    try:
        return auc(scores, outcomes)
    except UndefinedMetricError:
        return None


class CrossValidator(Helpers):
    """This is a class for cross-validating PHMM fits and scoring held-out
    decodings

    Attributes:
        restarts (int): restarts per fold fit
        max_iter (int): optimizer iteration cap
        tol (float): optimizer tolerance
        gradient (str): "analytic" or "numeric"
    """

    def __init__(self, seed=0, threads=1, output_dir=".", restarts=10, max_iter=1000, tol=1e-8, gradient="analytic"):
        super().__init__(seed, threads, output_dir)
        self.restarts = restarts
        self.max_iter = max_iter
        self.tol = tol
        self.gradient = gradient

    def _estimator_kwargs(self, k):
        seed = int(self.seed_streams(k + 1, 1)[k].generate_state(1)[0])
        return {
            "seed": seed,
            "threads": 1,
            "restarts": self.restarts,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "gradient": self.gradient,
        }

    def cross_validate(self, spec, dataset, alpha, plan):
        """
        Fits on the complement of every fold and decodes the fold with its
        labels removed

        Args:
            spec(ModelSpec): model declaration
            dataset(list): LabeledSeries whose ids match the plan's units
            alpha(float): weight of unlabelled indices while fitting
            plan(FoldPlan): evaluation folds

        Returns:
            CrossValidationResult
        """
        plan.check(dataset)
        outcomes = Parallel(n_jobs=self.threads)(
            delayed(_run_fold)(k, fold, spec, dataset, alpha, self._estimator_kwargs(k))
            for k, fold in enumerate(plan.folds)
        )
        held_out, fold_of, fits = {}, {}, []
        for k, (result, fold_decodings) in enumerate(outcomes):
            logger.info("Fold %d/%d fitted, objective %.10g", k + 1, len(plan.folds), result.objective)
            fits.append(result)
            held_out.update(fold_decodings)
            fold_of.update({unit: k for unit in fold_decodings})
        # dataset order
        decodings = {s.series_id: held_out[s.series_id] for s in dataset if s.series_id in held_out}
        return CrossValidationResult(decodings, fold_of, fits, float(alpha))

    def state_report(self, cv, dataset, n_states, auc_mode="pooled"):
        """
        Per-state metrics over the labelled indices of the held-out units;
        predictions are posterior argmax, AUC scores are state posteriors
        """
        truth = {series.series_id: series.labels for series in dataset}
        labels, posteriors, folds = [], [], []
        for unit, decoding in cv.decodings.items():
            z = truth[unit]
            hit = z > 0
            labels.append(z[hit])
            posteriors.append(decoding.posteriors[hit])
            folds.append(np.full(hit.sum(), cv.fold_of[unit]))
        labels = np.concatenate(labels)
        posteriors = np.vstack(posteriors)
        folds = np.concatenate(folds)
        predicted = posteriors.argmax(axis=1) + 1
        rates = sensitivity_specificity(predicted, labels, n_states)
        rows = []
        for state in range(1, n_states + 1):
            sensitivity, specificity = rates[state]
            outcome = (labels == state).astype(int)
            value = _auc_or_none(posteriors[:, state - 1], outcome, folds, auc_mode)
            for metric, v in (("sensitivity", sensitivity), ("specificity", specificity), ("auc", value)):
                rows.append((cv.alpha, str(state), metric, v, int(labels.size)))
        return MetricsReport(pd.DataFrame(rows, columns=["alpha", "state", "metric", "value", "n_units"]))

    def event_report(self, cv, dataset, event_states, negative_states, threshold=0.5, auc_mode="pooled"):
        """
        Unit-level metrics: score = terminal event probability, positives
        are units labelled with an event state, negatives units labelled
        with a negative state
        """
        outcome_of = dict(unit_outcomes(dataset, event_states, negative_states))
        units = [u for u in cv.decodings if u in outcome_of]
        scores = np.array([terminal_event_probability(cv.decodings[u], event_states) for u in units])
        outcomes = np.array([outcome_of[u] for u in units])
        folds = np.array([cv.fold_of[u] for u in units])
        tag = ",".join(str(s) for s in sorted(event_states))
        predicted = classify_by_threshold(scores, threshold) + 1
        rates = sensitivity_specificity(predicted, outcomes + 1, 2)
        sensitivity, specificity = rates[2]
        value = _auc_or_none(scores, outcomes, folds, auc_mode)
        rows = [
            (cv.alpha, tag, "sensitivity", sensitivity, len(units)),
            (cv.alpha, tag, "specificity", specificity, len(units)),
            (cv.alpha, tag, "auc", value, len(units)),
            (cv.alpha, tag, "predicted_positive", float(predicted.sum() - len(units)), len(units)),
        ]
        return MetricsReport(pd.DataFrame(rows, columns=["alpha", "state", "metric", "value", "n_units"]))

    def sweep(self, spec, dataset, alphas, plan, event_states=None, negative_states=(), threshold=0.5, auc_mode="pooled"):
        """
        Cross-validates every alpha of a grid

        Returns:
            tuple: (MetricsReport over all alphas, dict alpha -> CrossValidationResult)
        """
        if auc_mode not in ("pooled", "fold-mean"):
            raise InvalidParameterError(f"unknown AUC mode {auc_mode!r}")
        results = {}

        def one_alpha(alpha):
            cv = self.cross_validate(spec, dataset, alpha, plan)
            results[float(alpha)] = cv
            if event_states:
                report = self.event_report(cv, dataset, event_states, negative_states, threshold, auc_mode)
            else:
                report = self.state_report(cv, dataset, spec.n_states, auc_mode)
            return report.rows.drop(columns="alpha")

        rows = self.sweep_df(one_alpha, alphas)
        return MetricsReport(rows), results


def cross_validate(model_spec, dataset, alpha, plan, seed=0, options=None):
    """Module-level wrapper around CrossValidator.cross_validate"""
    options = dict(options or {})
    options.setdefault("seed", seed)
    return CrossValidator(**options).cross_validate(model_spec, dataset, alpha, plan)
