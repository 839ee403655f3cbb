import time

import numpy as np
import pytest

from conftest import (
    WORKED_DELTA,
    WORKED_GAMMA,
    WORKED_LIKELIHOOD,
    WORKED_LOG_MATRIX,
    normal_params,
    random_instance,
    random_labels,
    series_from_values,
)
from phmmutils.config import load_yaml, model_spec_from_dict
from phmmutils.distributions import PerfectLabels
from phmmutils.exceptions import InvalidParameterError, ShapeError, ZeroLikelihoodError
from phmmutils.markov import (
    LabeledSeries,
    MixtureWeights,
    TransitionMatrix,
    decode,
    forward_backward,
    forward_log_likelihood,
    mixture_log_density,
    path_log_probability,
    viterbi,
    weighted_emission_log_matrix,
)
from phmmutils.simulate import brute_force_likelihood, brute_force_map_path, brute_force_posterior
from phmmutils.weighting import alpha_weights


class TestTransitionMatrix:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(InvalidParameterError):
            TransitionMatrix(np.array([[0.5, 0.4], [0.5, 0.5]]))

    def test_masked_entries_must_be_zero(self):
        with pytest.raises(InvalidParameterError):
            TransitionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]), np.array([[1, 0], [1, 1]]))

    def test_normalized_zeroes_masked_entries(self):
        gamma = TransitionMatrix.normalized(np.ones((3, 3)), np.array([[1, 1, 0], [0, 1, 1], [0, 0, 1]]))
        np.testing.assert_allclose(gamma.matrix, [[0.5, 0.5, 0], [0, 0.5, 0.5], [0, 0, 1]])

    def test_square(self):
        with pytest.raises(ShapeError):
            TransitionMatrix(np.ones((2, 3)) / 3)


class TestLabeledSeries:
    def test_defaults_and_slices(self):
        series = series_from_values(np.arange(5.0), [0, 2, 0, 0, 1])
        assert len(series) == 5
        assert series.n_labels == 2
        np.testing.assert_array_equal(series.label_index, [1, 4])
        part = series.slice(1, 3, "s1/a")
        assert part.series_id == "s1/a"
        np.testing.assert_array_equal(part.labels, [2, 0])
        assert series.without_labels().n_labels == 0

    def test_negative_labels_rejected(self):
        with pytest.raises(InvalidParameterError):
            series_from_values([1.0, 2.0], [0, -1])

    def test_values_are_read_only(self):
        series = series_from_values([1.0, 2.0])
        with pytest.raises(ValueError):
            series.values[0, 0] = 3.0


class TestWeightedEmissionLogMatrix:
    def test_zero_weights_give_zero_matrix(self, two_state_params):
        series = series_from_values([0.1, 5.0, -2.0], [1, 2, 0])
        out = weighted_emission_log_matrix(series, two_state_params.emissions, PerfectLabels(), np.zeros(3))
        np.testing.assert_array_equal(out, np.zeros((3, 2)))

    def test_perfect_label_excludes_other_states(self, two_state_params):
        series = series_from_values([0.1, 5.0], [0, 2])
        out = weighted_emission_log_matrix(series, two_state_params.emissions, PerfectLabels(), np.ones(2))
        assert out[1, 0] == -np.inf
        assert np.isfinite(out[1, 1])

    def test_unit_weights_without_labels(self, two_state_params):
        series = series_from_values([0.1, 5.0, -2.0])
        out = weighted_emission_log_matrix(series, two_state_params.emissions, PerfectLabels(), np.ones(3))
        np.testing.assert_array_equal(out, two_state_params.emission_log_matrix(series))

    def test_weight_shape(self, two_state_params):
        series = series_from_values([0.1, 5.0])
        with pytest.raises(ShapeError):
            weighted_emission_log_matrix(series, two_state_params.emissions, PerfectLabels(), np.ones(3))


class TestForwardLogLikelihood:
    def test_worked_instance(self):
        value = forward_log_likelihood(WORKED_DELTA, WORKED_GAMMA, WORKED_LOG_MATRIX)
        assert np.exp(value) == pytest.approx(WORKED_LIKELIHOOD, abs=1e-12)

    def test_single_state_collapse(self):
        log_f = np.log(np.array([[0.2], [0.5], [0.9]]))
        value = forward_log_likelihood([1.0], [[1.0]], log_f)
        assert value == pytest.approx(log_f.sum(), abs=1e-12)

    def test_contradictory_labels_give_minus_infinity(self):
        delta = np.array([1.0, 0.0])
        gamma = np.array([[1.0, 0.0], [0.0, 1.0]])
        log_matrix = np.array([[0.0, -np.inf], [-np.inf, 0.0]])
        assert forward_log_likelihood(delta, gamma, log_matrix) == -np.inf

    def test_long_sequence_does_not_underflow(self):
        rng = np.random.default_rng(1)
        delta, gamma, _ = random_instance(rng, 3, 1)
        log_matrix = rng.uniform(-40.0, -30.0, size=(5000, 3))
        value = forward_log_likelihood(delta, gamma, log_matrix)
        assert np.isfinite(value)
        assert -40.0 * 5000 < value < -30.0 * 5000 + 10

    def test_nan_rejected(self):
        with pytest.raises(InvalidParameterError):
            forward_log_likelihood(WORKED_DELTA, WORKED_GAMMA, np.array([[np.nan, 0.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            forward_log_likelihood([1.0], WORKED_GAMMA, WORKED_LOG_MATRIX)


class TestForwardBackward:
    def test_symmetric_single_index(self):
        decoding = forward_backward([0.5, 0.5], np.eye(2), np.zeros((1, 2)))
        np.testing.assert_allclose(decoding.posteriors, [[0.5, 0.5]])

    def test_labelled_index_is_forced(self, two_state_params):
        series = series_from_values([0.0, 0.2, 0.1, 3.0], [0, 2, 0, 0])
        log_matrix = two_state_params.weighted_log_matrix(series, alpha_weights(series.labels, 0.7))
        decoding = forward_backward(two_state_params.delta, two_state_params.gamma, log_matrix)
        assert decoding.posteriors[1, 1] == pytest.approx(1.0, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        delta, gamma, log_matrix = random_instance(rng, 2, 4)
        decoding = forward_backward(delta, gamma, log_matrix)
        np.testing.assert_allclose(decoding.posteriors, brute_force_posterior(delta, gamma, log_matrix), atol=1e-10)
        assert decoding.log_likelihood == pytest.approx(brute_force_likelihood(delta, gamma, log_matrix), rel=1e-12)

    def test_zero_likelihood_raises(self):
        log_matrix = np.array([[0.0, -np.inf], [-np.inf, 0.0]])
        with pytest.raises(ZeroLikelihoodError) as err:
            forward_backward([1.0, 0.0], np.eye(2), log_matrix, series_id="d7")
        assert err.value.series_id == "d7"


class TestViterbi:
    def test_single_state(self):
        np.testing.assert_array_equal(viterbi([1.0], [[1.0]], np.zeros((4, 1))), np.ones(4))

    def test_ties_go_to_lowest_state(self):
        path = viterbi(np.full(3, 1 / 3), np.full((3, 3), 1 / 3), np.zeros((5, 3)))
        np.testing.assert_array_equal(path, np.ones(5))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        delta, gamma, log_matrix = random_instance(rng, 3, 5)
        path = viterbi(delta, gamma, log_matrix)
        best = brute_force_map_path(delta, gamma, log_matrix)
        assert path_log_probability(delta, gamma, log_matrix, path) == pytest.approx(
            path_log_probability(delta, gamma, log_matrix, best), abs=1e-12
        )

    def test_infeasible(self):
        with pytest.raises(ZeroLikelihoodError):
            viterbi([1.0, 0.0], np.eye(2), np.array([[0.0, -np.inf], [-np.inf, 0.0]]))

    def test_decode_bundles_path(self):
        decoding = decode(WORKED_DELTA, WORKED_GAMMA, WORKED_LOG_MATRIX, "s")
        assert decoding.series_id == "s"
        assert decoding.path.tolist() == [2, 2]


class TestMixtureLogDensity:
    def test_single_state(self):
        params = normal_params([0.0])
        series = series_from_values([0.1, -0.4, 1.2])
        value = mixture_log_density([1.0], params.emissions, PerfectLabels(), series, np.ones(3))
        assert value == pytest.approx(params.emission_log_matrix(series).sum(), abs=1e-12)

    def test_labelled_term(self, two_state_params):
        series = series_from_values([0.5, 2.5], [2, 0])
        pi = np.array([0.3, 0.7])
        value = mixture_log_density(pi, two_state_params.emissions, PerfectLabels(), series, np.array([1.0, 0.0]))
        expected = np.log(pi[1]) + two_state_params.emission_log_matrix(series)[0, 1]
        assert value == pytest.approx(expected, abs=1e-12)

    def test_mixture_is_an_hmm_with_repeated_rows(self, two_state_params):
        rng = np.random.default_rng(4)
        series = series_from_values(rng.normal(1.0, 2.0, size=30))
        pi = MixtureWeights(np.array([0.35, 0.65]))
        mixture = mixture_log_density(pi, two_state_params.emissions, PerfectLabels(), series, np.ones(30))
        hmm = forward_log_likelihood(pi.probs, np.tile(pi.probs, (2, 1)), two_state_params.emission_log_matrix(series))
        assert mixture == pytest.approx(hmm, rel=1e-12)


class TestOracleEquivalence:
    def test_random_instances(self):
        rng = np.random.default_rng(20240101)
        start = time.perf_counter()
        for _ in range(200):
            n = int(rng.integers(1, 4))
            T = int(rng.integers(1, 8))
            params = normal_params(rng.normal(0.0, 2.0, size=n), rng.uniform(0.5, 2.0, size=n))
            delta, gamma, _ = random_instance(rng, n, T)
            series = LabeledSeries("s", rng.normal(0.0, 2.0, size=T), ("x",), random_labels(rng, T, n))
            weights = alpha_weights(series.labels, rng.uniform())
            log_matrix = params.weighted_log_matrix(series, weights)

            fast = forward_log_likelihood(delta, gamma, log_matrix)
            slow = brute_force_likelihood(delta, gamma, log_matrix)
            if not np.isfinite(slow):
                assert fast == -np.inf
                continue
            assert fast == pytest.approx(slow, rel=1e-9, abs=1e-12)
            np.testing.assert_allclose(
                forward_backward(delta, gamma, log_matrix).posteriors,
                brute_force_posterior(delta, gamma, log_matrix),
                atol=1e-10,
            )
            path = viterbi(delta, gamma, log_matrix)
            best = brute_force_map_path(delta, gamma, log_matrix)
            assert path_log_probability(delta, gamma, log_matrix, path) == pytest.approx(
                path_log_probability(delta, gamma, log_matrix, best), rel=1e-12, abs=1e-12
            )
        assert time.perf_counter() - start < 30.0

    def test_label_forcing(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            n = int(rng.integers(2, 4))
            T = int(rng.integers(2, 12))
            params = normal_params(rng.normal(0.0, 1.0, size=n))
            delta, gamma, _ = random_instance(rng, n, T)
            labels = random_labels(rng, T, n, share=0.4)
            series = LabeledSeries("s", rng.normal(0.0, 1.0, size=T), ("x",), labels)
            log_matrix = params.weighted_log_matrix(series, alpha_weights(labels, rng.uniform(0.01, 1.0)))
            if not np.isfinite(forward_log_likelihood(delta, gamma, log_matrix)):
                continue
            posteriors = forward_backward(delta, gamma, log_matrix).posteriors
            for t in np.flatnonzero(labels):
                assert posteriors[t, labels[t] - 1] == pytest.approx(1.0, abs=1e-12)


class TestStability:
    def test_long_structured_sequence(self):
        params = model_spec_from_dict(load_yaml("cs2")).params
        rng = np.random.default_rng(6)
        T = 15821
        log_matrix = rng.uniform(-6.0, 0.0, size=(T, 6))
        # warm up the compiled kernels
        forward_backward(params.delta, params.gamma, log_matrix[:10])
        start = time.perf_counter()
        decoding = forward_backward(params.delta, params.gamma, log_matrix)
        elapsed = time.perf_counter() - start
        assert np.isfinite(decoding.log_likelihood)
        np.testing.assert_allclose(decoding.posteriors.sum(axis=1), 1.0, atol=1e-12)
        assert elapsed < 0.1
