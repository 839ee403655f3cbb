import numpy as np
import pytest
import yaml

from phmmutils.config import (
    PRESETS,
    dump_yaml,
    evaluation_from_dict,
    fit_result_to_dict,
    load_yaml,
    model_spec_from_dict,
    params_to_dict,
    scenario_from_dict,
    theta_table,
)
from phmmutils.distributions import MultivariateLogNormal, PerfectLabels
from phmmutils.estimate import FitResult, RestartRecord
from phmmutils.exceptions import InvalidParameterError, ShapeError

SMALL = {
    "n_states": 2,
    "features": ["x", "g"],
    "emissions": [
        {"x": {"type": "normal", "mean": 0.0, "sd": 1.0}, "g": {"type": "gamma", "mean": 1.0, "sd": 0.5}},
        {"x": {"type": "normal", "mean": 2.0, "sd": 1.0}, "g": {"type": "gamma", "mean": 3.0, "sd": 1.0}},
    ],
    "gamma": [[0.9, 0.1], [0.2, 0.8]],
}


def assert_same_params(a, b):
    np.testing.assert_allclose(a.delta.probs, b.delta.probs, rtol=1e-14)
    np.testing.assert_allclose(a.gamma.matrix, b.gamma.matrix, rtol=1e-14)
    np.testing.assert_array_equal(a.gamma.mask, b.gamma.mask)
    assert [row[:3] for row in theta_table(a)] == [row[:3] for row in theta_table(b)]
    np.testing.assert_allclose([row[3] for row in theta_table(a)], [row[3] for row in theta_table(b)], rtol=1e-12)


class TestPresets:
    @pytest.mark.parametrize("name", PRESETS)
    def test_presets_load(self, name):
        spec = model_spec_from_dict(load_yaml(name))
        assert len(spec.state_names) == spec.n_states

    def test_dive_level_preset(self):
        spec = model_spec_from_dict(load_yaml("cs1"))
        assert spec.n_states == 3
        assert spec.params.column_names == ("max_depth", "duration")
        assert isinstance(spec.params.emissions[0].family("dive"), MultivariateLogNormal)
        assert spec.alpha == pytest.approx(0.049)

    def test_window_level_preset(self):
        spec = model_spec_from_dict(load_yaml("cs2"))
        params, constraints = spec.params, spec.constraints
        assert spec.state_names[3] == "capture"
        assert params.delta.fixed or constraints.delta_fixed
        assert not params.gamma.mask[0, 2]
        assert params.gamma.mask[3].tolist() == [False, False, False, True, False, True]
        assert params.gamma.matrix[4, 4] == params.gamma.matrix[5, 5] == 1.0
        assert constraints.fixed[(3, "ddepth", "mean")] == 0.0
        assert len(constraints.share_groups) == 6
        assert ((5, "jerk", "sd"), (6, "jerk", "sd")) in constraints.share_groups

    def test_window_level_evaluation_defaults(self):
        assert evaluation_from_dict(load_yaml("cs2")) == ([4, 6], [5], "fold-mean")
        assert evaluation_from_dict(SMALL) == (None, None, None)

    def test_evaluation_states_in_range(self):
        with pytest.raises(InvalidParameterError):
            evaluation_from_dict(dict(SMALL, evaluation={"event_states": [3]}))
        with pytest.raises(InvalidParameterError):
            evaluation_from_dict(dict(SMALL, evaluation={"auc_mode": "median"}))

    def test_load_from_path(self, tmp_path):
        path = tmp_path / "model.yaml"
        path.write_text(dump_yaml(SMALL))
        assert load_yaml(str(path))["n_states"] == 2

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(InvalidParameterError):
            load_yaml(str(path))


class TestModelConfig:
    def test_defaults(self):
        spec = model_spec_from_dict(SMALL)
        assert spec.state_names == ("state_1", "state_2")
        np.testing.assert_allclose(spec.params.delta.probs, [0.5, 0.5])
        assert isinstance(spec.params.label_model, PerfectLabels)
        assert spec.alpha == 1.0

    def test_uniform_gamma_over_mask(self):
        config = dict(SMALL, gamma=None, gamma_mask=[[1, 1], [0, 1]])
        gamma = model_spec_from_dict(config).params.gamma.matrix
        np.testing.assert_allclose(gamma, [[0.5, 0.5], [0.0, 1.0]])

    def test_wrong_number_of_states(self):
        with pytest.raises(ShapeError):
            model_spec_from_dict(dict(SMALL, n_states=3))

    def test_undeclared_feature(self):
        emissions = [dict(SMALL["emissions"][0]), {"x": {"type": "normal", "mean": 2.0, "sd": 1.0}}]
        with pytest.raises(ShapeError):
            model_spec_from_dict(dict(SMALL, emissions=emissions))

    def test_share_selected_params(self):
        config = dict(SMALL, constraints={"share": [{"states": [1, 2], "features": ["g"], "params": ["sd"]}]})
        spec = model_spec_from_dict(config)
        assert spec.constraints.share_groups == (((1, "g", "sd"), (2, "g", "sd")),)

    def test_share_needs_matching_families(self):
        emissions = [
            SMALL["emissions"][0],
            {"x": {"type": "normal", "mean": 2.0, "sd": 1.0}, "g": {"type": "lognormal", "log_mean": 0.0, "log_sd": 1.0}},
        ]
        config = dict(SMALL, emissions=emissions, constraints={"share": [{"states": [1, 2], "features": ["g"]}]})
        with pytest.raises(InvalidParameterError):
            model_spec_from_dict(config)

    def test_categorical_label_model(self):
        config = dict(SMALL, label_model={"type": "categorical", "beta": [[0.9, 0.1], [0.0, 1.0]]})
        matrix = model_spec_from_dict(config).params.label_model.matrix
        np.testing.assert_allclose(matrix, [[0.9, 0.1], [0.0, 1.0]])


class TestRoundTrip:
    @pytest.mark.parametrize("name", ["cs1", "cs2"])
    def test_params_to_dict(self, name):
        spec = model_spec_from_dict(load_yaml(name))
        restored = model_spec_from_dict(yaml.safe_load(dump_yaml(params_to_dict(spec))))
        assert_same_params(spec.params, restored.params)
        assert restored.constraints.fixed == spec.constraints.fixed
        assert restored.constraints.share_groups == spec.constraints.share_groups
        assert restored.state_names == spec.state_names

    def test_fitted_file_loads_as_config(self):
        spec = model_spec_from_dict(SMALL)
        record = RestartRecord(0, 123, 17, -40.5, -60.25, True, "converged", (-60.25, -40.5))
        result = FitResult(spec.params, -40.5, [record], 0.25, True, {"restarts": 1, "gradient": "analytic"})
        document = yaml.safe_load(dump_yaml(fit_result_to_dict(spec, result)))
        assert document["fit"]["restarts"][0]["restart"] == 1
        assert document["fit"]["objective"] == -40.5
        restored = model_spec_from_dict(document)
        assert restored.alpha == 0.25
        assert_same_params(spec.params, restored.params)

    def test_theta_table(self):
        rows = theta_table(model_spec_from_dict(SMALL).params)
        assert rows[0] == (1, "x", "mean", 0.0)
        assert len(rows) == 8


class TestScenarioConfig:
    def test_series_list(self):
        config = dict(SMALL, seed=4, series=[{"id": "a", "length": 5, "labels": [1, 3]}, {"length": 2}])
        scenario = scenario_from_dict(config)
        assert scenario.series_ids == ("a", "s2")
        assert scenario.lengths == (5, 2)
        assert scenario.label_sets == ((0, 2), ())
        assert scenario.seed == 4
        assert scenario_from_dict(config, seed=9).seed == 9

    def test_generator(self):
        config = dict(SMALL, series={"generator": {"n_series": 4, "total_length": 41, "n_labels": 6}})
        scenario = scenario_from_dict(config)
        assert sum(scenario.lengths) == 41
        assert sum(len(s) for s in scenario.label_sets) == 6

    def test_terminal_generator(self):
        scenario = scenario_from_dict(load_yaml("cs2"))
        assert scenario.label_rule == "terminal"
        assert scenario.label_counts == {1: 130, 4: 5, 5: 19, 6: 2}
        assert len(scenario.lengths) == 130
        assert min(scenario.lengths) >= 60

    def test_missing_series(self):
        with pytest.raises(InvalidParameterError):
            scenario_from_dict(SMALL)
