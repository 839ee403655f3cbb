import logging
import os
import tempfile

import numpy as np
import pandas as pd

from phmmutils.exceptions import InvalidParameterError, ShapeError
from phmmutils.markov import LabeledSeries

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

FLOAT_FORMAT = "%.17g"
RESERVED_COLUMNS = ("series_id", "t", "label")


class Helpers(object):
    """This is a class of helper functions shared by the
    fitting, evaluation, featurization and simulation workflows

    Attributes:
        seed (int): base seed for every random stream
        threads (int): number of joblib workers
        output_dir (str): directory outputs are written to
    """

    def __init__(self, seed=0, threads=1, output_dir="."):
        """Constructor for Helpers class

        Args:
            seed(int): base seed for every random stream
            threads(int): number of joblib workers
            output_dir(str): directory outputs are written to
        """
        if threads < 1:
            raise InvalidParameterError(f"threads must be at least 1, got {threads}")
        self.seed = int(seed)
        self.threads = int(threads)
        self.output_dir = output_dir

    def seed_streams(self, n, *keys):
        """
        Independent child seeds; child k does not depend on n, so a run
        with more streams extends a run with fewer.

        Args:
            n(int): number of streams
            keys(int): extra entropy separating unrelated uses of the seed

        Returns:
            list: numpy SeedSequence objects
        """
        return np.random.SeedSequence([self.seed, *keys]).spawn(n)

    def rng(self, *keys):
        return np.random.default_rng(np.random.SeedSequence([self.seed, *keys]))

    def dataset_from_df(self, df, columns=None):
        """
        Splits a long-format DataFrame into LabeledSeries

        Args:
            df(DataFrame): columns series_id, t, features..., label
            columns(list): feature columns to keep; defaults to every
                non-reserved column

        Returns:
            list: LabeledSeries in order of first appearance
        """
        missing = [c for c in ("series_id", "t") if c not in df.columns]
        if missing:
            raise ShapeError(f"dataset lacks columns {missing}")
        if columns is None:
            columns = [c for c in df.columns if c not in RESERVED_COLUMNS]
        absent = [c for c in columns if c not in df.columns]
        if absent:
            raise ShapeError(f"dataset lacks feature columns {absent}")

        df = df.copy()
        df["series_id"] = df["series_id"].astype(str)
        if "label" not in df.columns:
            df["label"] = 0
        df["label"] = pd.to_numeric(df["label"], errors="coerce").fillna(0).astype(int)

        dataset = []
        for series_id, group in df.groupby("series_id", sort=False):
            t = group["t"].to_numpy()
            if np.any(np.diff(t) <= 0):
                raise ShapeError(f"t is not strictly increasing in series {series_id}")
            dataset.append(
                LabeledSeries(
                    series_id,
                    group[list(columns)].to_numpy(dtype=float),
                    tuple(columns),
                    group["label"].to_numpy(),
                )
            )
        return dataset

    def dataset_to_df(self, dataset):
        """
        Long-format DataFrame of a dataset; missing labels become empty cells

        Args:
            dataset(list): LabeledSeries sharing feature names

        Returns:
            DataFrame: columns series_id, t, features..., label
        """
        frames = []
        for series in dataset:
            frame = pd.DataFrame(series.values, columns=list(series.feature_names))
            frame.insert(0, "t", np.arange(1, len(series) + 1))
            frame.insert(0, "series_id", series.series_id)
            frame["label"] = pd.Series(series.labels, dtype="Int64").replace(0, pd.NA)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def read_dataset_csv(self, filepath, columns=None):
        df = pd.read_csv(filepath, dtype={"series_id": str})
        return self.dataset_from_df(df, columns)

    def _atomic_write(self, filename, write):
        os.makedirs(self.output_dir, exist_ok=True)
        path = os.path.join(self.output_dir, filename)
        fd, tmp = tempfile.mkstemp(dir=self.output_dir, prefix=f".{filename}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as handle:
                write(handle)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            logger.error("Write of %s failed, previous contents kept", path)
            raise
        logger.debug("Wrote %s", path)
        return path

    def write_csv(self, df, filename):
        """
        Writes a DataFrame to output_dir through a temporary file and rename,
        floats with 17 significant digits

        Returns:
            str: path of the written file
        """
        return self._atomic_write(
            filename, lambda handle: df.to_csv(handle, index=False, float_format=FLOAT_FORMAT)
        )

    def write_text(self, text, filename):
        return self._atomic_write(filename, lambda handle: handle.write(text))

    def sweep_df(self, func, alphas, additional_func_args=None):
        """
        Function for running an evaluation function for every alpha of a grid.
        Returns the stacked results as a pandas Dataframe.

        Args:
            func: python function taking alpha first and returning a DataFrame
            alphas (list): weights to evaluate
            additional_func_args: optional extra positional arguments

        Returns:
            DataFrame: the concatenated results with an 'alpha' column first
        """
        additional_func_args = additional_func_args or ()
        frames = []
        for alpha in alphas:
            frame = func(alpha, *additional_func_args).copy()
            frame.insert(0, "alpha", float(alpha))
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)
