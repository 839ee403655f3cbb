from dataclasses import dataclass, replace
from typing import Any, Tuple

import numpy as np

from phmmutils.distributions import EmissionProduct, PerfectLabels, CategoricalLabels, check_products
from phmmutils.exceptions import ShapeError
from phmmutils.markov import InitialDistribution, TransitionMatrix, weighted_emission_log_matrix


@dataclass(frozen=True, eq=False)
class ModelParams(object):
    """Natural parameters of a PHMM

    Attributes:
        delta (InitialDistribution): initial distribution, optionally fixed
        gamma (TransitionMatrix): transition matrix with its structural zeros
        emissions (tuple): one EmissionProduct per state
        label_model: PerfectLabels or CategoricalLabels
    """

    delta: InitialDistribution
    gamma: TransitionMatrix
    emissions: Tuple[EmissionProduct, ...]
    label_model: Any = PerfectLabels()

    def __post_init__(self):
        emissions = tuple(self.emissions)
        n = len(emissions)
        if self.gamma.n_states != n or self.delta.probs.shape != (n,):
            raise ShapeError(f"delta, gamma and {n} emission products disagree on the state count")
        if isinstance(self.label_model, CategoricalLabels) and len(self.label_model.beta) != n:
            raise ShapeError("label model and emissions disagree on the state count")
        check_products(emissions)
        object.__setattr__(self, "emissions", emissions)

    @property
    def n_states(self):
        return len(self.emissions)

    @property
    def feature_names(self):
        return self.emissions[0].names

    @property
    def column_names(self):
        return self.emissions[0].column_names

    def emission_log_matrix(self, series):
        """T x N matrix of ln f_i(y_t), labels ignored"""
        return np.column_stack(
            [product.log_density(series.values, series.feature_names) for product in self.emissions]
        )

    def weighted_log_matrix(self, series, weights):
        return weighted_emission_log_matrix(series, self.emissions, self.label_model, weights)

    def permuted(self, order):
        """Relabel states: new state k is old state order[k] (0-based)"""
        order = np.asarray(order, dtype=int)
        gamma = self.gamma.matrix[np.ix_(order, order)]
        mask = self.gamma.mask[np.ix_(order, order)]
        label_model = self.label_model
        if isinstance(label_model, CategoricalLabels):
            label_model = CategoricalLabels(tuple(map(tuple, label_model.matrix[np.ix_(order, order)])))
        return replace(
            self,
            delta=InitialDistribution(self.delta.probs[order], self.delta.fixed),
            gamma=TransitionMatrix(gamma, mask),
            emissions=tuple(self.emissions[k] for k in order),
            label_model=label_model,
        )


@dataclass(frozen=True, eq=False)
class ModelSpec(object):
    """A model declaration: template parameters plus fitting constraints

    Attributes:
        params (ModelParams): families, structural zeros and starting values
        constraints (ConstraintSet): fixed values and share groups
        state_names (tuple): readable state names, 1-based order
        alpha (float): default weight for unlabelled indices
    """

    params: ModelParams
    constraints: Any
    state_names: Tuple[str, ...] = ()
    alpha: float = 1.0

    def __post_init__(self):
        names = tuple(self.state_names) or tuple(f"state_{k + 1}" for k in range(self.n_states))
        if len(names) != self.n_states:
            raise ShapeError(f"{len(names)} state names for {self.n_states} states")
        object.__setattr__(self, "state_names", names)

    @property
    def n_states(self):
        return self.params.n_states
