"""Raw-sensor ingestion and the dive / window feature pipelines

Traces are 50 Hz by default. Dives are maximal runs at depth >= 0.5 m
lasting at least 30 s. Dive-level features are (max depth, duration); window
features are change in depth, heading total variation and the jerk peak
normalized by the bottom-phase median.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from phmmutils.exceptions import (
    CannotCalibrateError,
    ChannelMissingError,
    DegenerateDiveError,
    InvalidParameterError,
    ShapeError,
)
from phmmutils.helpers import Helpers

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

TRACE_COLUMNS = {
    "depth": "depth_m",
    "heading": "heading_rad",
    "roll": "roll_rad",
}
ACCEL_COLUMNS = ("ax", "ay", "az")
BASELINE_STATS = ("jerk_ratio", "roll_at_peak", "heading_circvar")

RESTING, TRAVELLING, FORAGING = 1, 2, 3
DESCENT, BOTTOM, CHASE, CAPTURE, ASCENT_WITHOUT_FISH, ASCENT_WITH_FISH = 1, 2, 3, 4, 5, 6


@dataclass(frozen=True, eq=False)
class SensorTrace(object):
    """Time-aligned channels of one tag deployment

    Attributes:
        depth (ndarray): depth in m
        heading (ndarray): heading in radians, optional
        accel (ndarray): T x 3 acceleration in m/s^2, optional
        roll (ndarray): roll in radians, optional
        sampling_rate (float): Hz
        series_id (str): identifier
    """

    depth: np.ndarray
    heading: Optional[np.ndarray] = None
    accel: Optional[np.ndarray] = None
    roll: Optional[np.ndarray] = None
    sampling_rate: float = 50.0
    series_id: str = "trace"

    def __post_init__(self):
        if not self.sampling_rate > 0:
            raise InvalidParameterError(f"sampling rate must be positive, got {self.sampling_rate}")
        depth = np.asarray(self.depth, dtype=float).ravel()
        object.__setattr__(self, "depth", depth)
        for name in ("heading", "roll"):
            values = getattr(self, name)
            if values is not None:
                values = np.asarray(values, dtype=float).ravel()
                if values.size != depth.size:
                    raise ShapeError(f"{name} has {values.size} samples, depth has {depth.size}")
                object.__setattr__(self, name, values)
        if self.accel is not None:
            accel = np.asarray(self.accel, dtype=float)
            if accel.shape != (depth.size, 3):
                raise ShapeError(f"acceleration must be {depth.size} x 3, got {accel.shape}")
            object.__setattr__(self, "accel", accel)
        object.__setattr__(self, "series_id", str(self.series_id))

    def __len__(self):
        return self.depth.size

    def require(self, *channels):
        for channel in channels:
            if getattr(self, channel) is None:
                raise ChannelMissingError(f"trace {self.series_id} has no {channel} channel")

    @classmethod
    def from_df(cls, df, sampling_rate=None, series_id="trace"):
        """
        Builds a trace from columns time_s, depth_m, heading_rad, ax, ay, az
        and optionally roll_rad

        Args:
            df(DataFrame): raw trace
            sampling_rate(float): Hz; inferred from time_s when None
            series_id(str): identifier

        Returns:
            SensorTrace
        """
        if "depth_m" not in df.columns:
            raise ChannelMissingError("raw trace has no depth_m column")
        if sampling_rate is None:
            if "time_s" not in df.columns or len(df) < 2:
                raise InvalidParameterError("sampling rate needs time_s with at least 2 samples")
            steps = np.diff(df["time_s"].to_numpy(dtype=float))
            if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-9) or steps[0] <= 0:
                raise InvalidParameterError("raw trace is not uniformly sampled")
            sampling_rate = 1.0 / steps[0]
        channels = {
            name: df[column].to_numpy(dtype=float) if column in df.columns else None
            for name, column in TRACE_COLUMNS.items()
        }
        accel = None
        if all(c in df.columns for c in ACCEL_COLUMNS):
            accel = df[list(ACCEL_COLUMNS)].to_numpy(dtype=float)
        return cls(
            channels["depth"],
            channels["heading"],
            accel,
            channels["roll"],
            float(sampling_rate),
            series_id,
        )


@dataclass(frozen=True)
class DiveRecord(object):
    """One dive: samples [start, stop) of its trace

    Attributes:
        dive_id (int): 1-based position within the trace
        start (int): first sample
        stop (int): one past the last sample
        max_depth (float): m
        duration (float): s
        label (int): resting=1, travelling=2, foraging=3, 0 for no label
    """

    dive_id: int
    start: int
    stop: int
    max_depth: float
    duration: float
    label: int = 0


@dataclass(frozen=True)
class WindowRecord(object):
    dive_id: int
    index: int
    start: int
    stop: int
    ddepth: float
    htv: float
    jerk: float
    mean_depth: float
    label: int = 0


@dataclass(frozen=True)
class BaselineThresholds(object):
    """Minima of the dive-level statistics over confirmed capture dives"""

    jerk_ratio: float
    roll_at_peak: float
    heading_circvar: float

    def as_series(self):
        return pd.Series({name: getattr(self, name) for name in BASELINE_STATS})


def contiguous_regions(condition):
    """Start and stop (exclusive) indices of the True runs of a boolean array"""
    condition = np.asarray(condition, dtype=bool)
    edges = np.diff(np.concatenate([[False], condition, [False]]).astype(int))
    return np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)


def segment_dives(trace, depth_threshold=0.5, min_duration=30.0, min_max_depth=0.0):
    """
    Finds dives: maximal runs at depth >= depth_threshold lasting at least
    min_duration seconds

    Args:
        trace(SensorTrace): needs depth
        depth_threshold(float): m
        min_duration(float): s
        min_max_depth(float): keep only dives whose max depth exceeds this

    Returns:
        list: DiveRecord, ordered and non-overlapping
    """
    trace.require("depth")
    depth = trace.depth
    starts, stops = contiguous_regions(depth >= depth_threshold)
    dives = []
    for start, stop in zip(starts, stops):
        duration = (stop - start) / trace.sampling_rate
        max_depth = float(depth[start:stop].max())
        if duration < min_duration or max_depth <= min_max_depth:
            continue
        dives.append(DiveRecord(len(dives) + 1, int(start), int(stop), max_depth, float(duration)))
    logger.info("Finished segmenting dives: %d found in %s", len(dives), trace.series_id)
    return dives


def dive_summary_cs1(dive):
    """(max depth m, duration s) of a dive"""
    return dive.max_depth, dive.duration


def wrap_angle(diff):
    """Wraps angle differences to (-pi, pi]"""
    return np.pi - np.mod(np.pi - np.asarray(diff, dtype=float), 2 * np.pi)


def heading_total_variation(heading):
    return float(np.abs(wrap_angle(np.diff(heading))).sum())


def jerk_magnitudes(accel):
    """|a[k+1] - a[k]| for successive samples"""
    return np.linalg.norm(np.diff(accel, axis=0), axis=1)


def samples_per_window(sampling_rate, window):
    n = int(round(window * sampling_rate))
    if n < 1:
        raise InvalidParameterError(f"a {window} s window holds no samples at {sampling_rate} Hz")
    return n


def window_features(trace, dive, window=2.0):
    """
    Tiles a dive from its first sample with windows and summarizes each;
    a trailing partial window is dropped

    Args:
        trace(SensorTrace): needs depth, heading and acceleration
        dive(DiveRecord): dive to summarize
        window(float): window length in s

    Returns:
        list: WindowRecord with the raw (unnormalized) jerk peak
    """
    trace.require("depth", "heading", "accel")
    n = samples_per_window(trace.sampling_rate, window)
    n_windows = (dive.stop - dive.start) // n
    if n_windows < 1:
        raise DegenerateDiveError(f"dive {dive.dive_id} is shorter than one window")
    records = []
    for k in range(n_windows):
        start = dive.start + k * n
        stop = start + n
        depth = trace.depth[start:stop]
        jerks = jerk_magnitudes(trace.accel[start:stop])
        records.append(
            WindowRecord(
                dive.dive_id,
                k + 1,
                start,
                stop,
                float(depth[-1] - depth[0]),
                heading_total_variation(trace.heading[start:stop]),
                float(jerks.max()) if jerks.size else 0.0,
                float(depth.mean()),
            )
        )
    return records


def bottom_phase_mask(depth, kind="depth", fraction=0.7, max_depth=None):
    """
    Marks the bottom phase of a dive

    Args:
        depth(array): per-sample or per-window (mean) depths
        kind(str): "depth" keeps entries at >= fraction * max depth;
            "duration" keeps the central fraction of the entries
        fraction(float): share of max depth or of duration
        max_depth(float): dive maximum; defaults to depth.max()

    Returns:
        ndarray: boolean mask
    """
    depth = np.asarray(depth, dtype=float)
    if kind == "depth":
        max_depth = depth.max() if max_depth is None else max_depth
        return depth >= fraction * max_depth
    if kind == "duration":
        trim = int(np.floor(depth.size * (1 - fraction) / 2))
        mask = np.zeros(depth.size, dtype=bool)
        mask[trim:depth.size - trim] = True
        return mask
    raise InvalidParameterError(f"unknown bottom-phase kind {kind!r}")


def ascent_start(depth, fraction=0.7):
    """First sample after the last one at >= fraction of the max depth"""
    depth = np.asarray(depth, dtype=float)
    last = np.flatnonzero(depth >= fraction * depth.max())[-1]
    return int(min(last + 1, depth.size - 1))


def normalize_jerk(jerks, mask):
    """Jerk peaks divided by their median over the masked (bottom-phase) windows"""
    jerks = np.asarray(jerks, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DegenerateDiveError("the bottom phase holds no windows")
    median = np.median(jerks[mask])
    if median <= 0:
        raise DegenerateDiveError("median bottom-phase jerk is 0")
    return jerks / median


def label_windows_from_events(
    dive, crunch_times, ascent_time, video_covered, sampling_rate=50.0, window=2.0, ignore_before=30.0
):
    """
    Window labels of one dive from crunch events

    The first window is descent. The first crunch not more than
    ignore_before seconds ahead of the ascent marks its window as capture
    when it falls before the ascent, or the final window as ascent with a
    fish when it falls during the ascent. A dive watched on video without
    such a crunch ends in ascent without a fish.

    Args:
        dive(DiveRecord): the dive
        crunch_times(array): event times in s from the trace start
        ascent_time(float): ascent start in s from the trace start
        video_covered(bool): whether video covered the dive
        sampling_rate(float): Hz
        window(float): window length in s
        ignore_before(float): s

    Returns:
        ndarray: labels per window, 0 for no label
    """
    n = samples_per_window(sampling_rate, window)
    n_windows = (dive.stop - dive.start) // n
    if n_windows < 1:
        raise DegenerateDiveError(f"dive {dive.dive_id} is shorter than one window")
    start_s, stop_s = dive.start / sampling_rate, dive.stop / sampling_rate
    if not start_s <= ascent_time <= stop_s:
        raise InvalidParameterError(f"ascent start {ascent_time} s lies outside dive {dive.dive_id}")
    labels = np.zeros(n_windows, dtype=int)
    labels[0] = DESCENT

    crunches = np.sort(np.asarray(crunch_times, dtype=float))
    outside = (crunches < start_s) | (crunches >= stop_s)
    if outside.any():
        logger.warning("Ignoring %d crunch events outside dive %d", int(outside.sum()), dive.dive_id)
    valid = crunches[~outside & (crunches >= ascent_time - ignore_before)]
    if valid.size:
        first = valid[0]
        if first < ascent_time:
            k = min(int((first - start_s) * sampling_rate) // n, n_windows - 1)
            if k > 0:
                labels[k] = CAPTURE
            else:
                logger.warning("Capture in the first window of dive %d kept as descent", dive.dive_id)
        elif n_windows > 1:
            labels[-1] = ASCENT_WITH_FISH
    elif video_covered and n_windows > 1:
        labels[-1] = ASCENT_WITHOUT_FISH
    return labels


def dive_baseline_stats(trace, dive, kind="depth", fraction=0.7):
    """
    Dive-level statistics of the threshold baseline over the bottom phase:
    max / median jerk, |roll| at the jerk peak and the circular variance of
    heading

    Returns:
        dict: jerk_ratio, roll_at_peak, heading_circvar
    """
    trace.require("heading", "accel", "roll")
    rows = slice(dive.start, dive.stop)
    bottom = bottom_phase_mask(trace.depth[rows], kind, fraction)
    # jerk k belongs to sample k + 1
    jerks = np.concatenate([[0.0], jerk_magnitudes(trace.accel[rows])])
    idx = np.flatnonzero(bottom)
    if idx.size == 0:
        raise DegenerateDiveError(f"dive {dive.dive_id} has no bottom phase")
    median = np.median(jerks[idx])
    if median <= 0:
        raise DegenerateDiveError(f"dive {dive.dive_id} has zero median bottom-phase jerk")
    peak = idx[np.argmax(jerks[idx])]
    return {
        "jerk_ratio": float(jerks[peak] / median),
        "roll_at_peak": float(abs(trace.roll[rows][peak])),
        "heading_circvar": float(stats.circvar(trace.heading[rows][idx], high=np.pi, low=-np.pi)),
    }


def tennessen_baseline(dive_stats, confirmed_ids):
    """
    Threshold baseline: thresholds are the minima of each statistic over
    confirmed capture dives and a dive is positive when every statistic
    reaches its threshold

    Args:
        dive_stats(DataFrame): indexed by dive id, columns jerk_ratio,
            roll_at_peak, heading_circvar
        confirmed_ids(list): ids of confirmed capture dives

    Returns:
        tuple: (BaselineThresholds, Series of 0/1 predictions)
    """
    missing = [c for c in BASELINE_STATS if c not in dive_stats.columns]
    if missing:
        raise ChannelMissingError(f"dive statistics lack {missing}")
    confirmed = dive_stats.loc[dive_stats.index.isin(list(confirmed_ids)), list(BASELINE_STATS)]
    if confirmed.empty:
        raise CannotCalibrateError("no confirmed capture dives to calibrate thresholds on")
    minima = confirmed.min()
    thresholds = BaselineThresholds(*(float(minima[c]) for c in BASELINE_STATS))
    predictions = (dive_stats[list(BASELINE_STATS)] >= minima).all(axis=1).astype(int)
    return thresholds, predictions.rename("prediction")


def baseline_scores(dive_stats, thresholds):
    """ROC score of the baseline: min over statistics of (statistic - threshold)"""
    margins = dive_stats[list(BASELINE_STATS)] - thresholds.as_series()
    return margins.min(axis=1).rename("score")


class Featurizer(Helpers):
    """This is a class for turning raw traces and event files into
    dive-level and window-level datasets

    Attributes:
        depth_threshold (float): dive depth threshold, m
        min_duration (float): minimum dive duration, s
        min_max_depth (float): dives must be deeper than this, m
        window (float): window length, s
        bottom_kind (str): "depth" or "duration"
    """

    def __init__(
        self,
        seed=0,
        threads=1,
        output_dir=".",
        depth_threshold=0.5,
        min_duration=30.0,
        min_max_depth=0.0,
        window=2.0,
        bottom_kind="depth",
        sampling_rate=None,
    ):
        super().__init__(seed, threads, output_dir)
        self.depth_threshold = depth_threshold
        self.min_duration = min_duration
        self.min_max_depth = min_max_depth
        self.window = window
        self.bottom_kind = bottom_kind
        self.sampling_rate = sampling_rate

    def read_trace(self, filepath, series_id=None):
        df = pd.read_csv(filepath)
        return SensorTrace.from_df(df, self.sampling_rate, series_id or "trace")

    def read_events(self, filepath):
        """
        Event CSV with columns time_s, event, value. Events are
        ``crunch`` (time only), ``video`` (start time, value = end time)
        and ``dive_type`` (time inside the dive, value = 1..3).
        """
        events = pd.read_csv(filepath)
        missing = [c for c in ("time_s", "event") if c not in events.columns]
        if missing:
            raise ShapeError(f"event file lacks columns {missing}")
        if "value" not in events.columns:
            events["value"] = np.nan
        return events

    def _dive_events(self, events, dive, trace):
        if events is None:
            return np.empty(0), False, 0
        start_s, stop_s = dive.start / trace.sampling_rate, dive.stop / trace.sampling_rate
        kinds = events["event"].astype(str).str.lower()
        crunches = events.loc[kinds == "crunch", "time_s"].to_numpy(dtype=float)
        crunches = crunches[(crunches >= start_s) & (crunches < stop_s)]
        video = events.loc[kinds == "video", ["time_s", "value"]].to_numpy(dtype=float)
        covered = bool(np.any((video[:, 0] <= start_s) & (video[:, 1] >= stop_s))) if video.size else False
        typed = events[(kinds == "dive_type") & events["time_s"].between(start_s, stop_s, inclusive="left")]
        label = int(typed["value"].iloc[0]) if len(typed) else 0
        return crunches, covered, label

    def case1_dataset(self, trace, events=None):
        """
        Dive-level dataset: one row per dive with max_depth and duration

        Returns:
            DataFrame: series_id, t, max_depth, duration, label
        """
        dives = segment_dives(trace, self.depth_threshold, self.min_duration, self.min_max_depth)
        rows = []
        for dive in dives:
            _, _, label = self._dive_events(events, dive, trace)
            max_depth, duration = dive_summary_cs1(dive)
            rows.append((trace.series_id, dive.dive_id, max_depth, duration, label or pd.NA))
        df = pd.DataFrame(rows, columns=["series_id", "t", "max_depth", "duration", "label"])
        df["label"] = df["label"].astype("Int64")
        return df

    def case2_dataset(self, trace, events=None):
        """
        Window-level dataset, one series per dive, plus the dive-level
        baseline statistics when a roll channel is present

        Returns:
            tuple: (window DataFrame: series_id, t, ddepth, htv, jerk, label;
                dive DataFrame: series_id, duration, baseline statistics)
        """
        dives = segment_dives(trace, self.depth_threshold, self.min_duration, self.min_max_depth)
        fs = trace.sampling_rate
        frames, dive_rows = [], []
        for dive in dives:
            series_id = f"{trace.series_id}/{dive.dive_id}"
            windows = window_features(trace, dive, self.window)
            depths = np.array([w.mean_depth for w in windows])
            mask = bottom_phase_mask(depths, self.bottom_kind, max_depth=dive.max_depth)
            try:
                jerk = normalize_jerk([w.jerk for w in windows], mask)
            except DegenerateDiveError as err:
                logger.warning("Skipping dive %s: %s", series_id, err)
                continue
            crunches, covered, _ = self._dive_events(events, dive, trace)
            labels = np.zeros(len(windows), dtype=int)
            if events is not None:
                ascent = (dive.start + ascent_start(trace.depth[dive.start:dive.stop])) / fs
                labels = label_windows_from_events(dive, crunches, ascent, covered, fs, self.window)
            frames.append(
                pd.DataFrame(
                    {
                        "series_id": series_id,
                        "t": np.arange(1, len(windows) + 1),
                        "ddepth": [w.ddepth for w in windows],
                        "htv": [w.htv for w in windows],
                        "jerk": jerk,
                        "label": pd.Series(labels, dtype="Int64").replace(0, pd.NA),
                    }
                )
            )
            row = {"series_id": series_id, "duration": dive.duration}
            if trace.roll is not None:
                row.update(dive_baseline_stats(trace, dive, self.bottom_kind))
            dive_rows.append(row)
        logger.info("Finished featurizing %d dives of %s", len(frames), trace.series_id)
        windows_df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
            columns=["series_id", "t", "ddepth", "htv", "jerk", "label"]
        )
        return windows_df, pd.DataFrame(dive_rows)
