import os

import numpy as np
import pandas as pd
import pytest

from conftest import series_from_values
from phmmutils.exceptions import InvalidParameterError, ShapeError
from phmmutils.helpers import Helpers
from phmmutils.markov import LabeledSeries


class TestHelpers:
    def test_threads_must_be_positive(self):
        with pytest.raises(InvalidParameterError):
            Helpers(threads=0)

    def test_seed_streams_extend(self):
        helpers = Helpers(seed=42)
        few = [s.generate_state(2) for s in helpers.seed_streams(3)]
        many = [s.generate_state(2) for s in helpers.seed_streams(8)]
        for a, b in zip(few, many):
            np.testing.assert_array_equal(a, b)
        keyed = helpers.seed_streams(3, 1)[0].generate_state(2)
        assert not np.array_equal(keyed, few[0])

    def test_rng_is_reproducible(self):
        assert Helpers(seed=3).rng(5).uniform() == Helpers(seed=3).rng(5).uniform()


class TestDatasetFrames:
    def setup_method(self):
        self.helpers = Helpers()
        self.dataset = [
            LabeledSeries("a", np.array([[0.1, 1.0], [0.2, 2.0], [0.3, 3.0]]), ("x", "y"), [0, 2, 0]),
            LabeledSeries("b", np.array([[1.0 / 3.0, 0.5]]), ("x", "y"), [1]),
        ]

    def test_to_df_layout(self):
        df = self.helpers.dataset_to_df(self.dataset)
        assert list(df.columns) == ["series_id", "t", "x", "y", "label"]
        assert df["t"].tolist() == [1, 2, 3, 1]
        assert df["label"].isna().tolist() == [True, False, True, False]

    def test_csv_round_trip(self, tmp_path):
        helpers = Helpers(output_dir=str(tmp_path))
        path = helpers.write_csv(helpers.dataset_to_df(self.dataset), "dataset.csv")
        loaded = helpers.read_dataset_csv(path)
        assert [s.series_id for s in loaded] == ["a", "b"]
        for original, restored in zip(self.dataset, loaded):
            np.testing.assert_allclose(restored.values, original.values, rtol=1e-15)
            np.testing.assert_array_equal(original.labels, restored.labels)
            assert restored.feature_names == ("x", "y")

    def test_numeric_series_ids_stay_strings(self, tmp_path):
        helpers = Helpers(output_dir=str(tmp_path))
        dataset = [series_from_values([0.5, 0.7], series_id="007")]
        loaded = helpers.read_dataset_csv(helpers.write_csv(helpers.dataset_to_df(dataset), "d.csv"))
        assert loaded[0].series_id == "007"

    def test_column_selection(self):
        df = self.helpers.dataset_to_df(self.dataset)
        (a, _) = self.helpers.dataset_from_df(df, ["y"])
        assert a.feature_names == ("y",)
        with pytest.raises(ShapeError):
            self.helpers.dataset_from_df(df, ["z"])

    def test_time_must_increase(self):
        df = pd.DataFrame({"series_id": ["a", "a"], "t": [2, 1], "x": [0.0, 1.0]})
        with pytest.raises(ShapeError):
            self.helpers.dataset_from_df(df)

    def test_missing_reserved_columns(self):
        with pytest.raises(ShapeError):
            self.helpers.dataset_from_df(pd.DataFrame({"t": [1], "x": [0.0]}))


class TestOutputs:
    def test_write_leaves_no_temporary_files(self, tmp_path):
        helpers = Helpers(output_dir=str(tmp_path / "out"))
        helpers.write_csv(pd.DataFrame({"v": [0.1]}), "values.csv")
        helpers.write_text("done\n", "notes.txt")
        assert sorted(os.listdir(tmp_path / "out")) == ["notes.txt", "values.csv"]

    def test_full_precision(self, tmp_path):
        helpers = Helpers(output_dir=str(tmp_path))
        path = helpers.write_csv(pd.DataFrame({"v": [1.0 / 3.0]}), "values.csv")
        assert pd.read_csv(path)["v"].iloc[0] == pytest.approx(1.0 / 3.0, rel=1e-15)

    def test_failed_write_keeps_old_file(self, tmp_path, caplog):
        helpers = Helpers(output_dir=str(tmp_path))
        helpers.write_text("old", "f.txt")

        def explode(handle):
            handle.write("partial")
            raise RuntimeError("disk")

        with pytest.raises(RuntimeError):
            helpers._atomic_write("f.txt", explode)
        assert (tmp_path / "f.txt").read_text() == "old"
        assert os.listdir(tmp_path) == ["f.txt"]
        assert "previous contents kept" in caplog.text

    def test_sweep_df_puts_alpha_first(self):
        def evaluate(alpha, offset):
            return pd.DataFrame({"metric": ["auc"], "value": [alpha + offset]})

        df = Helpers().sweep_df(evaluate, [0.1, 1.0], (1.0,))
        assert list(df.columns) == ["alpha", "metric", "value"]
        np.testing.assert_allclose(df["value"], [1.1, 2.0])
