import numpy as np
import pytest

from conftest import (
    WORKED_DELTA,
    WORKED_GAMMA,
    WORKED_LIKELIHOOD,
    WORKED_LOG_MATRIX,
    normal_params,
    random_instance,
)
from phmmutils.config import load_yaml, scenario_from_dict
from phmmutils.distributions import CategoricalLabels
from phmmutils.exceptions import InvalidParameterError, ScenarioSizeError, ShapeError
from phmmutils.markov import forward_backward, viterbi
from phmmutils.simulate import (
    SimulationScenario,
    Simulator,
    brute_force_likelihood,
    brute_force_map_path,
    brute_force_posterior,
    random_label_sets,
    sample_label,
    simulate_phmm,
    split_lengths,
)


class TestSplitLengths:
    def test_even_split(self):
        assert split_lengths(10, 103) == [10] * 9 + [13]

    def test_min_length(self, rng):
        lengths = split_lengths(130, 15821, 60, rng)
        assert sum(lengths) == 15821
        assert min(lengths) >= 60

    def test_too_short(self, rng):
        with pytest.raises(InvalidParameterError):
            split_lengths(5, 3)
        with pytest.raises(InvalidParameterError):
            split_lengths(10, 100, 20, rng)

    def test_random_label_sets(self, rng):
        lengths = [20, 5, 40]
        label_sets = random_label_sets(lengths, 30, rng)
        assert sum(len(s) for s in label_sets) == 30
        for positions, n in zip(label_sets, lengths):
            assert all(0 <= t < n for t in positions)


class TestScenario:
    def test_default_ids_and_label_sets(self):
        scenario = SimulationScenario(normal_params([0.0, 1.0]), [3, 4])
        assert scenario.series_ids == ("s1", "s2")
        assert scenario.label_sets == ((), ())
        assert scenario.total_length == 7

    def test_validation(self):
        params = normal_params([0.0, 1.0])
        with pytest.raises(InvalidParameterError):
            SimulationScenario(params, [0])
        with pytest.raises(InvalidParameterError):
            SimulationScenario(params, [3], [(3,)])
        with pytest.raises(ShapeError):
            SimulationScenario(params, [3, 3], [(0,)])
        with pytest.raises(InvalidParameterError):
            SimulationScenario(params, [3], label_rule="terminal", label_counts={3: 1})
        with pytest.raises(InvalidParameterError):
            SimulationScenario(params, [3], label_rule="sometimes")


class TestSimulator:
    def test_identity_transitions_keep_the_state(self):
        params = normal_params([0.0, 5.0], gamma=np.eye(2))
        result = simulate_phmm(SimulationScenario(params, [50] * 5, seed=3))
        for path in result.paths:
            assert np.all(path == path[0])

    def test_perfect_labels_are_the_states(self):
        params = normal_params([0.0, 5.0, 10.0])
        label_sets = [tuple(range(0, 40, 3)), (), (1, 2)]
        result = simulate_phmm(SimulationScenario(params, [40, 10, 5], label_sets, seed=1))
        for series, path in zip(result.dataset, result.paths):
            idx = series.label_index
            np.testing.assert_array_equal(series.labels[idx], path[idx])
        assert [s.n_labels for s in result.dataset] == [14, 0, 2]

    def test_transition_frequencies(self):
        gamma = np.array([[0.9, 0.1], [0.2, 0.8]])
        params = normal_params([0.0, 1.0], gamma=gamma)
        (path,) = simulate_phmm(SimulationScenario(params, [100000], seed=7)).paths
        for i in (1, 2):
            origin = path[:-1] == i
            n = origin.sum()
            for j in (1, 2):
                p = gamma[i - 1, j - 1]
                observed = np.sum(origin & (path[1:] == j)) / n
                assert abs(observed - p) <= 3 * np.sqrt(p * (1 - p) / n)

    def test_deterministic_given_seed(self):
        params = normal_params([0.0, 2.0])
        scenario = SimulationScenario(params, [30, 20], [(0, 5), (3,)], seed=11)
        a, b = simulate_phmm(scenario), simulate_phmm(scenario)
        for x, y in zip(a.dataset, b.dataset):
            np.testing.assert_array_equal(x.values, y.values)
            np.testing.assert_array_equal(x.labels, y.labels)
        other = Simulator(seed=12).simulate(scenario)
        assert not np.array_equal(a.dataset[0].values, other.dataset[0].values)

    def test_more_series_extend_fewer(self):
        params = normal_params([0.0, 2.0])
        short = Simulator(seed=5).simulate(SimulationScenario(params, [30, 20]))
        long = Simulator(seed=5).simulate(SimulationScenario(params, [30, 20, 10]))
        np.testing.assert_array_equal(short.dataset[1].values, long.dataset[1].values)

    def test_truth_df(self):
        params = normal_params([0.0, 2.0])
        result = simulate_phmm(SimulationScenario(params, [4, 3]))
        truth = result.truth_df()
        assert list(truth.columns) == ["series_id", "t", "state"]
        assert truth["t"].tolist() == [1, 2, 3, 4, 1, 2, 3]
        assert truth["state"].isin([1, 2]).all()

    def test_categorical_label_draws(self, rng):
        labels = CategoricalLabels([[0.0, 1.0], [1.0, 0.0]])
        assert sample_label(labels, 0, rng) == 2
        assert sample_label(labels, 1, rng) == 1

    def test_dive_level_preset(self):
        result = simulate_phmm(scenario_from_dict(load_yaml("cs1")))
        assert len(result.dataset) == 11
        assert sum(len(s) for s in result.dataset) == 2169
        assert sum(s.n_labels for s in result.dataset) == 106
        assert result.dataset[0].feature_names == ("max_depth", "duration")
        assert all(np.all(s.values > 0) for s in result.dataset)

    def test_terminal_labels(self, caplog):
        scenario = scenario_from_dict(load_yaml("cs2"))
        result = simulate_phmm(scenario)
        counts = {z: 0 for z in range(1, 7)}
        for series, path in zip(result.dataset, result.paths):
            assert series.labels[0] == 1
            assert np.count_nonzero(series.labels[1:]) <= 1
            idx = series.label_index
            np.testing.assert_array_equal(series.labels[idx], path[idx])
            for z in series.labels[idx]:
                counts[int(z)] += 1
        assert counts[1] == 130
        for z, requested in ((4, 5), (5, 19), (6, 2)):
            assert counts[z] <= requested
        if "can carry label" not in caplog.text:
            assert sum(counts.values()) == 156


class TestOracles:
    def test_worked_likelihood(self):
        value = brute_force_likelihood(WORKED_DELTA, WORKED_GAMMA, WORKED_LOG_MATRIX)
        assert np.exp(value) == pytest.approx(WORKED_LIKELIHOOD, rel=1e-12)

    def test_single_state(self, rng):
        log_matrix = rng.uniform(-3.0, 0.0, size=(6, 1))
        value = brute_force_likelihood([1.0], [[1.0]], log_matrix)
        assert value == pytest.approx(log_matrix.sum(), abs=1e-12)

    def test_posterior_rows_sum_to_one(self, rng):
        delta, gamma, log_matrix = random_instance(rng, 3, 5)
        posterior = brute_force_posterior(delta, gamma, log_matrix)
        np.testing.assert_allclose(posterior.sum(axis=1), 1.0, atol=1e-12)
        expected = forward_backward(delta, gamma, log_matrix).posteriors
        np.testing.assert_allclose(posterior, expected, atol=1e-10)

    def test_map_path_matches_viterbi(self, rng):
        for _ in range(20):
            delta, gamma, log_matrix = random_instance(rng, 3, 6)
            np.testing.assert_array_equal(
                brute_force_map_path(delta, gamma, log_matrix), viterbi(delta, gamma, log_matrix)
            )

    def test_enumeration_limit(self):
        with pytest.raises(ScenarioSizeError):
            brute_force_likelihood([0.5, 0.5], np.full((2, 2), 0.5), np.zeros((21, 2)))
