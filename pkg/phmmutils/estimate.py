"""Constrained maximum weighted-likelihood fitting

Natural parameters map to an unconstrained working vector:

* probability rows (delta, Gamma rows, categorical label rows) use a
  multinomial logit over their unmasked entries, the first unmasked entry
  being the reference;
* scales use ln(value - MIN_SD);
* locations are left as they are;
* fixed coordinates are dropped and every share group is stored once.

The objective is the total alpha-weighted log-likelihood. Its gradient
comes from forward-backward posteriors and expected transition counts,
each emission score weighted by the per-index weight.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import minimize
from scipy.special import softmax

from phmmutils.distributions import MIN_SD, CategoricalLabels, MultivariateLogNormal
from phmmutils.exceptions import (
    ConstraintViolationError,
    FitFailureError,
    IdentifiabilityError,
    InvalidParameterError,
    ShapeError,
)
from phmmutils.helpers import Helpers
from phmmutils.markov import InitialDistribution, TransitionMatrix, expected_counts, forward_log_likelihood
from phmmutils.weighting import alpha_weights, check_weight

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

EQUALITY_TOL = 1e-12


def _theta_key(key):
    state, feature, param = key
    return int(state), str(feature), str(param)


def theta_value(params, key):
    """Natural value of one emission coordinate (state 1-based, feature, param)"""
    state, feature, param = key
    family = params.emissions[state - 1].family(feature)
    return float(family.params()[family.param_names.index(param)])


def with_theta(params, updates):
    """Copy of params with emission coordinates replaced"""
    by_family = {}
    for (state, feature, param), value in updates.items():
        by_family.setdefault((state, feature), {})[param] = value
    emissions = list(params.emissions)
    for (state, feature), values in by_family.items():
        product = emissions[state - 1]
        family = product.family(feature)
        current = family.params()
        for param, value in values.items():
            current[family.param_names.index(param)] = value
        emissions[state - 1] = product.with_family(feature, family.with_params(current))
    return replace(params, emissions=tuple(emissions))


def theta_keys(params):
    for state, product in enumerate(params.emissions, start=1):
        for feature, family in product.features:
            for param, transform in zip(family.param_names, family.transforms()):
                yield (state, feature, param), transform


@dataclass(frozen=True, eq=False)
class ConstraintSet(object):
    """Fixed values, share groups and structural zeros

    Attributes:
        fixed (dict): (state, feature, param) -> value
        share_groups (tuple): groups of (state, feature, param) keys forced equal
        gamma_mask (ndarray): boolean mask, False marks a structural zero;
            None defers to the template's mask
        delta_fixed (bool): keep the initial distribution at its template value
    """

    fixed: Dict[Tuple[int, str, str], float] = field(default_factory=dict)
    share_groups: Tuple[Tuple[Tuple[int, str, str], ...], ...] = ()
    gamma_mask: Optional[np.ndarray] = None
    delta_fixed: bool = False

    def __post_init__(self):
        fixed = {_theta_key(k): float(v) for k, v in dict(self.fixed).items()}
        groups = tuple(tuple(_theta_key(k) for k in group) for group in self.share_groups)
        seen = set()
        for group in groups:
            if not group:
                raise InvalidParameterError("share groups must be non-empty")
            for key in group:
                if key in fixed:
                    raise InvalidParameterError(f"{key} is both fixed and shared")
                if key in seen:
                    raise InvalidParameterError(f"{key} appears in two share groups")
                seen.add(key)
        mask = None if self.gamma_mask is None else np.asarray(self.gamma_mask, dtype=bool)
        object.__setattr__(self, "fixed", fixed)
        object.__setattr__(self, "share_groups", groups)
        object.__setattr__(self, "gamma_mask", mask)

    def group_of(self, key):
        for group in self.share_groups:
            if key in group:
                return group
        return (key,)

    def validate(self, params):
        """Raise ConstraintViolationError unless params satisfy every constraint"""
        known = {key for key, _ in theta_keys(params)}
        for key in list(self.fixed) + [k for g in self.share_groups for k in g]:
            if key not in known:
                raise ConstraintViolationError(f"constraint on unknown coordinate {key}")
        if self.gamma_mask is not None:
            if self.gamma_mask.shape != params.gamma.matrix.shape:
                raise ConstraintViolationError("gamma mask shape does not match the model")
            if np.any(params.gamma.matrix[~self.gamma_mask] != 0):
                raise ConstraintViolationError("masked transition entries must be 0")
        for key, value in self.fixed.items():
            if abs(theta_value(params, key) - value) > EQUALITY_TOL:
                raise ConstraintViolationError(f"{key} must equal {value}")
        for group in self.share_groups:
            values = [theta_value(params, key) for key in group]
            if max(values) - min(values) > EQUALITY_TOL:
                raise ConstraintViolationError(f"share group {group} holds unequal values")

    def apply(self, params):
        """Force fixed values and copy each group's first value to its members"""
        updates = dict(self.fixed)
        for group in self.share_groups:
            value = theta_value(params, group[0])
            updates.update({key: value for key in group})
        return with_theta(params, updates)


def _row_to_working(name, row, free):
    if np.any(row[free] <= 0):
        raise ConstraintViolationError(f"{name}: unmasked entries must be positive")
    return np.log(row[free[1:]] / row[free[0]])


def _row_from_working(values, free, n):
    row = np.zeros(n)
    row[free] = softmax(np.concatenate([[0.0], values]))
    return row


@dataclass(frozen=True, eq=False)
class WorkingVector(object):
    """Unconstrained coordinates plus the bijection that produced them"""

    values: np.ndarray
    parameterization: "Parameterization"

    @property
    def names(self):
        return self.parameterization.names


class Parameterization(object):
    """Bijection between constrained natural parameters and working vectors

    Attributes:
        template (ModelParams): supplies families, fixed delta and masks
        constraints (ConstraintSet): fixed coordinates and share groups
        names (tuple): readable name of every working coordinate
    """

    def __init__(self, template, constraints):
        self.template = template
        self.constraints = constraints
        n = template.n_states
        self.n_states = n
        self.mask = template.gamma.mask if constraints.gamma_mask is None else constraints.gamma_mask
        if self.mask.shape != (n, n) or not self.mask.any(axis=1).all():
            raise ShapeError("gamma mask must be N x N with a free entry in every row")
        self.delta_fixed = constraints.delta_fixed or template.delta.fixed
        self.delta_free = None if self.delta_fixed else np.arange(n)
        self.gamma_free = [np.flatnonzero(self.mask[i]) for i in range(n)]

        self.theta = []
        covered = set(constraints.fixed)
        for key, transform in theta_keys(template):
            if key in covered:
                continue
            group = constraints.group_of(key)
            covered.update(group)
            self.theta.append((group, transform))

        self.beta_free = None
        if isinstance(template.label_model, CategoricalLabels):
            support = template.label_model.matrix > 0
            self.beta_free = [np.flatnonzero(support[i]) for i in range(n)]

        names = []
        if self.delta_free is not None:
            names += [f"delta[{j + 1}]" for j in self.delta_free[1:]]
        for i, free in enumerate(self.gamma_free):
            names += [f"gamma[{i + 1},{j + 1}]" for j in free[1:]]
        names += ["theta[{},{},{}]".format(*group[0]) for group, _ in self.theta]
        if self.beta_free is not None:
            for i, free in enumerate(self.beta_free):
                names += [f"beta[{i + 1},{j + 1}]" for j in free[1:]]
        self.names = tuple(names)

    @property
    def size(self):
        return len(self.names)

    def to_working(self, params):
        self.constraints.validate(params)
        if np.any(params.gamma.matrix[~self.mask] != 0):
            raise ConstraintViolationError("masked transition entries must be 0")
        if self.delta_fixed and not np.array_equal(params.delta.probs, self.template.delta.probs):
            raise ConstraintViolationError("the initial distribution is fixed")
        parts = []
        if self.delta_free is not None:
            parts.append(_row_to_working("delta", params.delta.probs, self.delta_free))
        for i, free in enumerate(self.gamma_free):
            parts.append(_row_to_working(f"gamma row {i + 1}", params.gamma.matrix[i], free))
        theta = []
        for group, transform in self.theta:
            value = theta_value(params, group[0])
            if transform == "log":
                if value <= MIN_SD:
                    raise ConstraintViolationError(f"{group[0]} must exceed {MIN_SD}")
                value = np.log(value - MIN_SD)
            theta.append(value)
        parts.append(np.asarray(theta, dtype=float))
        if self.beta_free is not None:
            beta = params.label_model.matrix
            for i, free in enumerate(self.beta_free):
                parts.append(_row_to_working(f"beta row {i + 1}", beta[i], free))
        return WorkingVector(np.concatenate(parts) if parts else np.empty(0), self)

    def from_working(self, working):
        x = np.asarray(getattr(working, "values", working), dtype=float)
        if x.shape != (self.size,):
            raise ShapeError(f"working vector has {x.shape} entries, expected {self.size}")
        n = self.n_states
        pos = 0
        if self.delta_free is None:
            delta = self.template.delta
        else:
            k = len(self.delta_free) - 1
            delta = InitialDistribution(_row_from_working(x[pos:pos + k], self.delta_free, n))
            pos += k
        rows = []
        for free in self.gamma_free:
            k = len(free) - 1
            rows.append(_row_from_working(x[pos:pos + k], free, n))
            pos += k
        gamma = TransitionMatrix(np.array(rows), self.mask)
        updates = dict(self.constraints.fixed)
        for group, transform in self.theta:
            value = x[pos]
            if transform == "log":
                value = MIN_SD + np.exp(value)
            updates.update({key: float(value) for key in group})
            pos += 1
        label_model = self.template.label_model
        if self.beta_free is not None:
            beta = []
            for free in self.beta_free:
                k = len(free) - 1
                beta.append(_row_from_working(x[pos:pos + k], free, n))
                pos += k
            label_model = CategoricalLabels(tuple(map(tuple, beta)))
        params = replace(self.template, delta=delta, gamma=gamma, label_model=label_model)
        return with_theta(params, updates)

    def gradient(self, params, stats):
        """Chain natural-parameter scores into working coordinates

        Args:
            params (ModelParams): point of evaluation
            stats (dict): first-index posteriors, transition counts and
                per-key emission / label scores from Objective

        Returns:
            ndarray: gradient of the objective in working coordinates
        """
        grad = []
        if self.delta_free is not None:
            first = stats["first"]
            g = first - params.delta.probs * first.sum()
            grad.append(g[self.delta_free[1:]])
        counts = stats["counts"]
        for i, free in enumerate(self.gamma_free):
            g = counts[i] - params.gamma.matrix[i] * counts[i].sum()
            grad.append(g[free[1:]])
        theta_scores = stats["theta"]
        theta = []
        for group, transform in self.theta:
            total = 0.0
            for key in group:
                score = theta_scores.get(key, 0.0)
                if transform == "log":
                    score *= theta_value(params, key) - MIN_SD
                total += score
            theta.append(total)
        grad.append(np.asarray(theta, dtype=float))
        if self.beta_free is not None:
            label_counts = stats["labels"]
            beta = params.label_model.matrix
            for i, free in enumerate(self.beta_free):
                g = label_counts[i] - beta[i] * label_counts[i].sum()
                grad.append(g[free[1:]])
        return np.concatenate(grad) if grad else np.empty(0)


def to_working(params, constraints):
    """Working vector of params under constraints"""
    return Parameterization(params, constraints).to_working(params)


def from_working(working):
    return working.parameterization.from_working(working)


class Objective(object):
    """Total alpha-weighted log-likelihood of a dataset as a function of the
    working vector

    The dataset is stacked once so emission densities are evaluated in one
    pass per state and feature.
    """

    def __init__(self, parameterization, dataset, alpha):
        if not dataset:
            raise InvalidParameterError("dataset is empty")
        self.parameterization = parameterization
        self.alpha = check_weight("alpha", alpha)
        template = parameterization.template
        self.columns = template.column_names
        blocks, labels, lengths = [], [], []
        for series in dataset:
            try:
                idx = [series.feature_names.index(c) for c in self.columns]
            except ValueError:
                raise ShapeError(f"series {series.series_id} lacks model columns {self.columns}")
            blocks.append(series.values[:, idx])
            labels.append(series.labels)
            lengths.append(len(series))
        self.values = np.vstack(blocks)
        self.labels = np.concatenate(labels)
        if self.labels.max(initial=0) > template.n_states:
            raise InvalidParameterError(f"labels exceed {template.n_states} states")
        self.bounds = np.concatenate([[0], np.cumsum(lengths)])
        self.series_ids = [series.series_id for series in dataset]
        self.weights = alpha_weights(self.labels, self.alpha)

    def log_terms(self, params):
        log_f = np.column_stack(
            [product.log_density(self.values, self.columns) for product in params.emissions]
        )
        terms = log_f + params.label_model.log_mass_matrix(self.labels, params.n_states)
        with np.errstate(invalid="ignore"):
            out = self.weights[:, None] * terms
        out[self.weights == 0] = 0.0
        return out

    def _slices(self):
        for k in range(len(self.series_ids)):
            yield k, slice(self.bounds[k], self.bounds[k + 1])

    def value(self, x):
        params = self.parameterization.from_working(x)
        terms = self.log_terms(params)
        total = 0.0
        for k, rows in self._slices():
            value = forward_log_likelihood(params.delta, params.gamma, terms[rows])
            if not np.isfinite(value):
                return -np.inf
            total += value
        return total

    def value_and_gradient(self, x):
        params = self.parameterization.from_working(x)
        terms = self.log_terms(params)
        n = params.n_states
        posteriors = np.zeros_like(terms)
        counts = np.zeros((n, n))
        first = np.zeros(n)
        total = 0.0
        for k, rows in self._slices():
            result = expected_counts(params.delta, params.gamma, terms[rows])
            if result is None:
                return -np.inf, np.zeros(self.parameterization.size)
            post, trans, value = result
            posteriors[rows] = post
            counts += trans
            first += post[0]
            total += value
        stats = {"first": first, "counts": counts}
        stats.update(self._emission_scores(params, posteriors))
        return total, self.parameterization.gradient(params, stats)

    def _emission_scores(self, params, posteriors):
        weighted = posteriors * self.weights[:, None]
        column_index = {c: k for k, c in enumerate(self.columns)}
        theta = {}
        for state, product in enumerate(params.emissions, start=1):
            coef = weighted[:, state - 1]
            for position, (feature, family) in enumerate(product.features):
                block, present = product.feature_block(self.values, column_index, position)
                use = present & (coef > 0)
                if not use.any():
                    continue
                scores = coef[use] @ family.grad_log_density(block[use])
                for param, score in zip(family.param_names, np.atleast_1d(scores)):
                    theta[(state, feature, param)] = float(score)
        labels = None
        if isinstance(params.label_model, CategoricalLabels):
            n = params.n_states
            labels = np.zeros((n, n))
            rows = np.flatnonzero(self.labels)
            for j in range(1, n + 1):
                hit = rows[self.labels[rows] == j]
                labels[:, j - 1] = weighted[hit].sum(axis=0)
        return {"theta": theta, "labels": labels}


def objective_and_gradient(working, dataset, alpha, gradient="analytic"):
    """Total weighted log-likelihood and its gradient at a working vector

    Args:
        working(WorkingVector): point of evaluation
        dataset(list): LabeledSeries
        alpha(float): weight of unlabelled indices
        gradient(str): "analytic" or "numeric" (central differences)

    Returns:
        tuple: (value, gradient); value is -inf at an infeasible point
    """
    objective = Objective(working.parameterization, dataset, alpha)
    if gradient == "numeric":
        return objective.value(working.values), numeric_gradient(objective.value, working.values)
    return objective.value_and_gradient(working.values)


def numeric_gradient(func, x, rel_step=1e-5):
    """Central finite differences with a step relative to each coordinate"""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        h = rel_step * max(1.0, abs(x[k]))
        up, down = x.copy(), x.copy()
        up[k] += h
        down[k] -= h
        grad[k] = (func(up) - func(down)) / (2 * h)
    return grad


@dataclass
class RestartRecord(object):
    restart: int
    seed: int
    iterations: int = 0
    objective: Optional[float] = None
    initial_objective: Optional[float] = None
    converged: bool = False
    message: str = ""
    trace: Tuple[float, ...] = ()


@dataclass
class FitResult(object):
    """Best parameters over all restarts plus per-restart diagnostics"""

    params: object
    objective: float
    restarts: list
    alpha: float
    converged: bool
    options: dict = field(default_factory=dict)

    @property
    def best_restart(self):
        return next(r for r in self.restarts if r.objective == self.objective)


def _initial_params(spec, dataset, rng):
    """Random starting point

    delta and Gamma rows are flat Dirichlet draws over unmasked entries,
    locations start near the state's quantile of the pooled data and scales
    are log-uniform within [0.5, 2] times the pooled sd.
    """
    template = spec.params
    constraints = spec.constraints
    n = template.n_states
    mask = template.gamma.mask if constraints.gamma_mask is None else constraints.gamma_mask

    delta = template.delta
    if not (constraints.delta_fixed or template.delta.fixed):
        delta = InitialDistribution(rng.dirichlet(np.ones(n)))
    rows = np.zeros((n, n))
    for i in range(n):
        free = np.flatnonzero(mask[i])
        rows[i, free] = rng.dirichlet(np.ones(free.size))
    params = replace(template, delta=delta, gamma=TransitionMatrix(rows, mask))

    product = template.emissions[0]
    quantiles = (np.arange(n) + 0.5) / n + rng.uniform(-0.25 / n, 0.25 / n, size=n)
    emissions = list(params.emissions)
    for position, (feature, _) in enumerate(product.features):
        columns = product.columns[position]
        pooled = np.vstack(
            [series.values[:, [series.feature_names.index(c) for c in columns]] for series in dataset]
        )
        pooled = pooled[~np.isnan(pooled).any(axis=1)]
        for state in range(n):
            family = emissions[state].family(feature)
            start = _family_start(family, pooled, quantiles[state], rng)
            if start is not None:
                emissions[state] = emissions[state].with_family(feature, start)
    params = replace(params, emissions=tuple(emissions))

    if isinstance(template.label_model, CategoricalLabels):
        support = template.label_model.matrix > 0
        beta = np.zeros((n, n))
        for i in range(n):
            free = np.flatnonzero(support[i])
            concentration = np.where(free == i, 9.0, 1.0)
            beta[i, free] = rng.dirichlet(concentration)
        params = replace(params, label_model=CategoricalLabels(tuple(map(tuple, beta))))
    return constraints.apply(params)


def _log_uniform_scale(pooled_sd, rng, size=None):
    pooled_sd = np.maximum(pooled_sd, 10 * MIN_SD)
    return pooled_sd * np.exp(rng.uniform(np.log(0.5), np.log(2.0), size))


def _family_start(family, pooled, q, rng):
    if pooled.shape[0] < 2:
        return None
    if family.type == "normal":
        x = pooled[:, 0]
        return type(family)(float(np.quantile(x, q)), float(_log_uniform_scale(x.std(), rng)))
    positive = pooled[(pooled > 0).all(axis=1)]
    if positive.shape[0] < 2:
        return None
    if family.type == "gamma":
        x = positive[:, 0]
        return type(family)(max(float(np.quantile(x, q)), 10 * MIN_SD), float(_log_uniform_scale(x.std(), rng)))
    logs = np.log(positive)
    if family.type == "lognormal":
        x = logs[:, 0]
        return type(family)(float(np.quantile(x, q)), float(_log_uniform_scale(x.std(), rng)))
    if isinstance(family, MultivariateLogNormal):
        mean = np.quantile(logs, q, axis=0)
        sds = _log_uniform_scale(logs.std(axis=0), rng, size=logs.shape[1])
        corr = np.atleast_2d(np.corrcoef(logs, rowvar=False))
        cov = corr * np.outer(sds, sds) + 1e-9 * np.eye(len(sds))
        cov = (cov + cov.T) / 2
        return MultivariateLogNormal(tuple(mean), tuple(map(tuple, cov)))
    return None


def _optimize_restart(index, seed_seq, spec, dataset, alpha, options):
    seed = int(seed_seq.generate_state(1)[0])
    rng = np.random.default_rng(seed_seq)
    parameterization = Parameterization(spec.params, spec.constraints)
    objective = Objective(parameterization, dataset, alpha)
    record = RestartRecord(index, seed)

    x0, f0 = None, -np.inf
    for _ in range(options["max_init_tries"]):
        try:
            candidate = parameterization.to_working(_initial_params(spec, dataset, rng)).values
        except (ConstraintViolationError, InvalidParameterError) as err:
            record.message = str(err)
            continue
        f0 = objective.value(candidate)
        if np.isfinite(f0):
            x0 = candidate
            break
    if x0 is None:
        record.message = record.message or "no feasible starting point"
        return record, None

    penalty = abs(f0) * 1e3 + 1e6
    last = {"x": None, "value": None}
    trace = [f0]

    def negative(x):
        if options["gradient"] == "numeric":
            value = objective.value(x)
            grad = numeric_gradient(objective.value, x) if np.isfinite(value) else np.zeros_like(x)
        else:
            value, grad = objective.value_and_gradient(x)
        last["x"], last["value"] = np.array(x), value
        if not np.isfinite(value):
            return penalty, np.zeros_like(x)
        return -value, -grad

    def callback(xk):
        if last["x"] is not None and np.array_equal(xk, last["x"]):
            value = last["value"]
        else:
            value = objective.value(xk)
        trace.append(value)
        logger.debug("Restart %d iteration %d: objective %.10g", index, len(trace) - 1, value)

    result = minimize(
        negative,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": options["max_iter"], "ftol": options["tol"], "gtol": options["gtol"]},
    )
    x_best, f_best = result.x, objective.value(result.x)
    if not np.isfinite(f_best) or f_best < f0:
        x_best, f_best = x0, f0
    record.iterations = int(result.nit)
    record.objective = float(f_best)
    record.initial_objective = float(f0)
    record.converged = bool(result.success)
    record.message = str(result.message)
    record.trace = tuple(float(v) for v in trace)
    return record, parameterization.from_working(x_best)


class Estimator(Helpers):
    """This is a class for fitting PHMMs by multi-start maximization of
    the alpha-weighted likelihood

    Attributes:
        seed (int): base seed; restart k uses child stream k
        threads (int): joblib workers used for restarts
        restarts (int): number of random initializations
        max_iter (int): optimizer iteration cap
        tol (float): relative objective change for convergence
        gtol (float): projected-gradient norm for convergence
        gradient (str): "analytic" or "numeric"
    """

    def __init__(
        self,
        seed=0,
        threads=1,
        output_dir=".",
        restarts=10,
        max_iter=1000,
        tol=1e-8,
        gtol=1e-6,
        gradient="analytic",
        max_init_tries=25,
    ):
        super().__init__(seed, threads, output_dir)
        if restarts < 1:
            raise InvalidParameterError(f"restarts must be at least 1, got {restarts}")
        if gradient not in ("analytic", "numeric"):
            raise InvalidParameterError(f"unknown gradient mode {gradient!r}")
        self.restarts = int(restarts)
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        self.gtol = float(gtol)
        self.gradient = gradient
        self.max_init_tries = int(max_init_tries)

    @property
    def options(self):
        return {
            "restarts": self.restarts,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "gtol": self.gtol,
            "seed": self.seed,
            "gradient": self.gradient,
            "max_init_tries": self.max_init_tries,
        }

    def check_identifiable(self, spec, dataset, alpha):
        """
        With alpha = 0 only labelled indices inform the emissions, so every
        state needs a label or emissions pinned by fixed values or by ties
        to a labelled state.

        Raises:
            IdentifiabilityError: naming the unidentifiable states
        """
        if alpha > 0:
            return
        labelled = set()
        for series in dataset:
            labelled.update(int(z) for z in np.unique(series.labels) if z > 0)
        constraints = spec.constraints
        bad = []
        for state in range(1, spec.n_states + 1):
            if state in labelled:
                continue
            for key, _ in theta_keys(spec.params):
                if key[0] != state or key in constraints.fixed:
                    continue
                if not any(other[0] in labelled for other in constraints.group_of(key)):
                    bad.append(state)
                    break
        if bad:
            raise IdentifiabilityError(
                f"alpha = 0 leaves states {bad} without labels or tied emissions; "
                "the model would not be identifiable"
            )

    def fit(self, spec, dataset, alpha):
        """
        Runs every restart and keeps the best

        Args:
            spec(ModelSpec): template parameters and constraints
            dataset(list): LabeledSeries
            alpha(float): weight of unlabelled indices

        Returns:
            FitResult: best parameters, objective and per-restart records
        """
        alpha = check_weight("alpha", alpha)
        if not dataset:
            raise InvalidParameterError("dataset is empty")
        self.check_identifiable(spec, dataset, alpha)
        spec.constraints.validate(spec.params)

        streams = self.seed_streams(self.restarts)
        options = self.options
        outcomes = Parallel(n_jobs=self.threads)(
            delayed(_optimize_restart)(k, stream, spec, dataset, alpha, options)
            for k, stream in enumerate(streams)
        )

        records = [record for record, _ in outcomes]
        best, best_params = None, None
        for record, params in outcomes:
            if params is None:
                logger.warning("Restart %d failed: %s", record.restart + 1, record.message)
                continue
            logger.info(
                "Restart %d/%d %s at %.10g after %d iterations",
                record.restart + 1,
                self.restarts,
                "converged" if record.converged else "stopped",
                record.objective,
                record.iterations,
            )
            if best is None or record.objective > best.objective:
                best, best_params = record, params
        if best is None:
            logger.error("All %d restarts failed", self.restarts)
            raise FitFailureError(f"all {self.restarts} restarts failed", records)
        return FitResult(best_params, best.objective, records, alpha, best.converged, options)


def fit(model_spec, dataset, alpha, options=None):
    """Fit a PHMM; options are Estimator keyword arguments
    (restarts, max_iter, tol, seed, threads, gradient)"""
    return Estimator(**(options or {})).fit(model_spec, dataset, alpha)
