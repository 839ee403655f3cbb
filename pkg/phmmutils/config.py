"""YAML model configs, scenario files and fitted-parameter files

A fitted-parameter file is a model config whose values are the fitted
ones, plus a ``fit`` section of diagnostics, so it loads with the same
reader.
"""
import logging
from importlib import resources

import numpy as np
import yaml

from phmmutils.distributions import EmissionProduct, family_from_dict, label_model_from_dict
from phmmutils.estimate import ConstraintSet, theta_keys
from phmmutils.exceptions import InvalidParameterError, ShapeError
from phmmutils.markov import InitialDistribution, TransitionMatrix
from phmmutils.model import ModelParams, ModelSpec
from phmmutils.simulate import SimulationScenario, random_label_sets, split_lengths

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

PRESETS = ("cs1", "cs2", "sparse")


def load_yaml(source):
    """
    Parses a YAML file, or a shipped preset when source names one

    Args:
        source(str): file path or preset name (cs1, cs2, sparse)

    Returns:
        dict: the parsed document
    """
    if source in PRESETS:
        text = resources.files("phmmutils.presets").joinpath(f"{source}.yaml").read_text()
    else:
        with open(source) as handle:
            text = handle.read()
    config = yaml.safe_load(text)
    if not isinstance(config, dict):
        raise InvalidParameterError(f"{source} does not hold a YAML mapping")
    return config


def dump_yaml(record):
    return yaml.safe_dump(record, sort_keys=False, default_flow_style=None)


def _products(config):
    n = int(config["n_states"])
    features = list(config["features"])
    emissions = config.get("emissions") or []
    if len(emissions) != n:
        raise ShapeError(f"{len(emissions)} emission entries for {n} states")
    missing = config.get("missing", "ignore")
    products = []
    for state, entry in enumerate(emissions, start=1):
        absent = [f for f in features if f not in entry]
        if absent:
            raise ShapeError(f"state {state} does not declare features {absent}")
        families = tuple((f, family_from_dict(entry[f])) for f in features)
        columns = tuple(tuple(entry[f].get("columns", [f])) for f in features)
        products.append(EmissionProduct(families, columns, missing))
    return tuple(products)


def _share_groups(config, params):
    groups = []
    for entry in (config.get("constraints") or {}).get("share") or []:
        states = [int(s) for s in entry["states"]]
        features = entry.get("features", "all")
        if features == "all":
            features = list(params.feature_names)
        first = params.emissions[states[0] - 1]
        for feature in features:
            family = first.family(feature)
            for state in states[1:]:
                if type(params.emissions[state - 1].family(feature)) is not type(family):
                    raise InvalidParameterError(f"shared feature {feature} has different families")
            for param in entry.get("params") or family.param_names:
                groups.append(tuple((s, feature, param) for s in states))
    return tuple(groups)


def model_spec_from_dict(config):
    """
    Builds and validates a ModelSpec from a parsed model config

    Args:
        config(dict): model config, see README for the schema

    Returns:
        ModelSpec: template parameters satisfy its constraints
    """
    n = int(config["n_states"])
    products = _products(config)
    delta_fixed = bool(config.get("delta_fixed", False))
    delta = config.get("delta")
    delta = np.full(n, 1.0 / n) if delta is None else np.asarray(delta, dtype=float)
    mask = config.get("gamma_mask")
    mask = np.ones((n, n), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    gamma = config.get("gamma")
    if gamma is None:
        gamma = TransitionMatrix.normalized(np.ones((n, n)), mask)
    else:
        gamma = TransitionMatrix(np.asarray(gamma, dtype=float), mask)
    params = ModelParams(
        InitialDistribution(delta, delta_fixed),
        gamma,
        products,
        label_model_from_dict(config.get("label_model")),
    )
    fixed = {
        (int(entry["state"]), str(entry["feature"]), str(entry["param"])): float(entry["value"])
        for entry in (config.get("constraints") or {}).get("fixed") or []
    }
    constraints = ConstraintSet(fixed, _share_groups(config, params), mask, delta_fixed)
    constraints.validate(params)
    spec = ModelSpec(params, constraints, tuple(config.get("state_names") or ()), float(config.get("alpha", 1.0)))
    logger.debug("Loaded a %d-state model with features %s", n, list(params.feature_names))
    return spec


def params_to_dict(spec, params=None):
    """Model config of spec with params (default: the template) as values"""
    params = spec.params if params is None else params
    features = list(params.feature_names)
    emissions = []
    for product in params.emissions:
        entry = {}
        for (name, family), columns in zip(product.features, product.columns):
            record = family.to_dict()
            if list(columns) != [name]:
                record = {"type": record.pop("type"), "columns": list(columns), **record}
            entry[name] = record
        emissions.append(entry)
    constraints = spec.constraints
    shared = []
    for group in constraints.share_groups:
        shared.append(
            {"states": [key[0] for key in group], "features": [group[0][1]], "params": [group[0][2]]}
        )
    return {
        "n_states": params.n_states,
        "state_names": list(spec.state_names),
        "features": features,
        "emissions": emissions,
        "delta": [float(v) for v in params.delta.probs],
        "delta_fixed": bool(params.delta.fixed or constraints.delta_fixed),
        "gamma": [[float(v) for v in row] for row in params.gamma.matrix],
        "gamma_mask": [[int(v) for v in row] for row in params.gamma.mask],
        "label_model": params.label_model.to_dict(),
        "constraints": {
            "fixed": [
                {"state": s, "feature": f, "param": p, "value": v}
                for (s, f, p), v in constraints.fixed.items()
            ],
            "share": shared,
        },
        "alpha": float(spec.alpha),
        "missing": params.emissions[0].missing,
    }


def fit_result_to_dict(spec, result):
    """Fitted-parameter file: fitted values plus per-restart diagnostics"""
    record = params_to_dict(spec, result.params)
    record["alpha"] = float(result.alpha)
    record["fit"] = {
        "objective": float(result.objective),
        "converged": bool(result.converged),
        "options": dict(result.options),
        "restarts": [
            {
                "restart": r.restart + 1,
                "seed": int(r.seed),
                "iterations": int(r.iterations),
                "objective": None if r.objective is None else float(r.objective),
                "initial_objective": None if r.initial_objective is None else float(r.initial_objective),
                "converged": bool(r.converged),
                "message": r.message,
            }
            for r in result.restarts
        ],
    }
    return record


def theta_table(params):
    """(state, feature, param, value) rows of every emission coordinate"""
    rows = []
    for key, _ in theta_keys(params):
        state, feature, param = key
        family = params.emissions[state - 1].family(feature)
        rows.append((state, feature, param, float(family.params()[family.param_names.index(param)])))
    return rows


def scenario_from_dict(config, seed=None):
    """
    Builds a SimulationScenario from a scenario file: a model config plus a
    ``series`` section

    The series section is either a list of ``{id, length, labels}`` entries
    (labels: 1-based positions) or a ``generator`` block with n_series,
    total_length, optional min_length, label_rule and n_labels or
    label_counts.

    Args:
        config(dict): parsed scenario file
        seed(int): overrides the file's seed

    Returns:
        SimulationScenario
    """
    spec = model_spec_from_dict(config)
    seed = int(config.get("seed", 0) if seed is None else seed)
    series = config.get("series")
    if series is None:
        raise InvalidParameterError("scenario has no series section")
    if isinstance(series, list):
        ids = [str(entry.get("id", f"s{k + 1}")) for k, entry in enumerate(series)]
        lengths = [int(entry["length"]) for entry in series]
        label_sets = [tuple(int(t) - 1 for t in (entry.get("labels") or [])) for entry in series]
        return SimulationScenario(spec.params, lengths, label_sets, seed, ids)
    generator = series.get("generator")
    if generator is None:
        raise InvalidParameterError("series section needs a list or a generator block")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    lengths = split_lengths(
        int(generator["n_series"]), int(generator["total_length"]), generator.get("min_length"), rng
    )
    rule = generator.get("label_rule", "fixed")
    if rule == "fixed":
        label_sets = random_label_sets(lengths, int(generator.get("n_labels", 0)), rng)
        return SimulationScenario(spec.params, lengths, label_sets, seed)
    return SimulationScenario(spec.params, lengths, (), seed, (), rule, generator.get("label_counts") or {})


def evaluation_from_dict(config):
    """
    Unit-outcome defaults of a model config's ``evaluation`` section

    Returns:
        tuple: (event states, negative states, AUC mode), each None when
            the section does not set it
    """
    section = config.get("evaluation") or {}
    n = int(config["n_states"])
    states = []
    for key in ("event_states", "negative_states"):
        values = section.get(key)
        if values is not None:
            values = sorted(int(s) for s in values)
            if any(not 1 <= s <= n for s in values):
                raise InvalidParameterError(f"evaluation {key} {values} outside 1..{n}")
        states.append(values)
    mode = section.get("auc_mode")
    if mode not in (None, "pooled", "fold-mean"):
        raise InvalidParameterError(f"unknown AUC mode {mode!r}")
    return states[0], states[1], mode
