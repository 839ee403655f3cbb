"""Command-line entry point: phmmutils <command> ...

Commands are simulate, featurize, fit, cv, decode and baseline. Every
command writes its products to --output-dir; logs go to stderr.
"""
import argparse
import logging
import sys
from dataclasses import asdict

import numpy as np
import pandas as pd

from phmmutils.config import (
    dump_yaml,
    evaluation_from_dict,
    fit_result_to_dict,
    load_yaml,
    model_spec_from_dict,
    scenario_from_dict,
    theta_table,
)
from phmmutils.estimate import Estimator
from phmmutils.evaluate import (
    CrossValidator,
    auc,
    catch_rate,
    classify_by_threshold,
    make_stratified_folds,
    subprofile_plan,
    terminal_event_probability,
    unit_outcomes,
)
from phmmutils.exceptions import InvalidLabelError, PHMMError, UndefinedMetricError
from phmmutils.featurize import Featurizer, baseline_scores, tennessen_baseline
from phmmutils.helpers import Helpers
from phmmutils.markov import decode
from phmmutils.simulate import Simulator

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

FIT_NOT_CONVERGED = 3


def _unit_interval(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return value


def _alpha_list(text):
    return [_unit_interval(part) for part in text.split(",") if part.strip()]


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return value


def _state_list(text):
    if text == "all":
        return "all"
    return sorted({int(part) for part in text.split(",") if part.strip()})


def _resolve_states(states, n_states):
    if states == "all":
        return list(range(1, n_states + 1))
    if any(not 1 <= s <= n_states for s in states):
        raise InvalidLabelError(f"states {states} outside 1..{n_states}")
    return states


class Runner(Helpers):
    """This is a class that ties the library together into reproducible
    command runs; each cmd_* method takes the parsed arguments"""

    def __init__(self, seed=0, threads=1, output_dir="."):
        super().__init__(seed, threads, output_dir)

    def load_spec(self, source):
        return model_spec_from_dict(load_yaml(source))

    def load_dataset(self, filepath, spec):
        return self.read_dataset_csv(filepath, list(spec.params.column_names))

    def estimator_options(self, args):
        return {
            "restarts": args.restarts,
            "max_iter": args.max_iter,
            "tol": args.tol,
            "gradient": args.gradient,
        }

    def cmd_simulate(self, args):
        scenario = scenario_from_dict(load_yaml(args.scenario), seed=args.seed)
        result = Simulator(scenario.seed, self.threads, self.output_dir).simulate(scenario)
        self.write_csv(self.dataset_to_df(result.dataset), "dataset.csv")
        self.write_csv(result.truth_df(), "truth.csv")
        return 0

    def cmd_featurize(self, args):
        featurizer = Featurizer(
            self.seed,
            self.threads,
            self.output_dir,
            min_max_depth=args.min_max_depth,
            bottom_kind=args.bottom,
            sampling_rate=args.sampling_rate,
        )
        trace = featurizer.read_trace(args.trace, args.series_id)
        events = featurizer.read_events(args.events) if args.events else None
        if args.case == 1:
            self.write_csv(featurizer.case1_dataset(trace, events), "dataset.csv")
            return 0
        windows, dives = featurizer.case2_dataset(trace, events)
        self.write_csv(windows, "dataset.csv")
        self.write_csv(dives, "dives.csv")
        return 0

    def cmd_fit(self, args):
        spec = self.load_spec(args.config)
        dataset = self.load_dataset(args.dataset, spec)
        alpha = spec.alpha if args.alpha is None else args.alpha
        estimator = Estimator(self.seed, self.threads, self.output_dir, **self.estimator_options(args))
        result = estimator.fit(spec, dataset, alpha)
        self.write_text(dump_yaml(fit_result_to_dict(spec, result)), "fitted.yaml")
        self.write_csv(
            pd.DataFrame(theta_table(result.params), columns=["state", "feature", "param", "value"]),
            "parameters.csv",
        )
        trace = [
            (r.restart + 1, k, value) for r in result.restarts for k, value in enumerate(r.trace)
        ]
        self.write_csv(pd.DataFrame(trace, columns=["restart", "iteration", "objective"]), "trace.csv")
        if not result.converged:
            logger.warning("Best restart stopped before converging")
            return FIT_NOT_CONVERGED
        return 0

    def cmd_cv(self, args):
        config = load_yaml(args.config)
        spec = model_spec_from_dict(config)
        dataset = self.load_dataset(args.dataset, spec)
        alphas = args.alphas or [spec.alpha]
        default_events, default_negatives, default_mode = evaluation_from_dict(config)
        states = args.states or (default_events if args.scheme == "stratified" else None)
        event_states = _resolve_states(states, spec.n_states) if states else None
        if args.negative_states:
            negative_states = _resolve_states(args.negative_states, spec.n_states)
        elif default_negatives is not None:
            negative_states = default_negatives
        elif event_states:
            negative_states = _final_labels(dataset, event_states)
        else:
            negative_states = []
        if args.scheme == "subprofile":
            dataset, plan = subprofile_plan(dataset, self.seed)
        else:
            if not event_states:
                raise InvalidLabelError("the stratified scheme needs --states for the unit outcome")
            units = unit_outcomes(dataset, event_states, negative_states)
            plan = make_stratified_folds(units, args.k, self.seed)
        auc_mode = args.auc_mode or default_mode or ("fold-mean" if args.scheme == "stratified" else "pooled")
        logger.info("Event states %s, negative states %s, %s AUC", event_states, negative_states, auc_mode)
        validator = CrossValidator(self.seed, self.threads, self.output_dir, **self.estimator_options(args))
        report, results = validator.sweep(
            spec, dataset, alphas, plan, event_states, negative_states, args.threshold, auc_mode
        )
        posteriors, paths = [], []
        for alpha, cv in results.items():
            posteriors.append(cv.posteriors_df().assign(alpha=alpha))
            paths.append(cv.paths_df().assign(alpha=alpha))
        self.write_csv(report.rows, "metrics.csv")
        self.write_text(report.to_table() + "\n", "metrics.txt")
        self.write_csv(_alpha_first(posteriors), "posteriors.csv")
        self.write_csv(_alpha_first(paths), "viterbi.csv")
        print(report.to_table())
        return 0

    def cmd_decode(self, args):
        fitted = self.load_spec(args.fitted)
        params = fitted.params
        dataset = self.load_dataset(args.dataset, fitted)
        states = _resolve_states(args.states, params.n_states)
        if args.effort:
            (foraging_state,) = _resolve_states([args.foraging_state], params.n_states)
        rows, paths, foraging = [], [], []
        for series in dataset:
            log_matrix = params.weighted_log_matrix(series.without_labels(), np.ones(len(series)))
            decoding = decode(params.delta, params.gamma, log_matrix, series.series_id)
            rows.append((series.series_id, terminal_event_probability(decoding, states)))
            paths.append(
                pd.DataFrame({"series_id": series.series_id, "t": np.arange(1, len(series) + 1), "state": decoding.path})
            )
            if args.effort:
                foraging.append(classify_by_threshold(decoding.posteriors[:, foraging_state - 1], args.threshold))
        events = pd.DataFrame(rows, columns=["series_id", "probability"])
        events["prediction"] = classify_by_threshold(events["probability"], args.threshold)
        paths = pd.concat(paths, ignore_index=True)
        self.write_csv(events, "events.csv")
        self.write_csv(paths, "viterbi.csv")
        logger.info("%d of %d series predicted positive", int(events["prediction"].sum()), len(events))
        if args.effort:
            # same series order as the decoded dataset
            durations = np.concatenate(
                [s.column(args.duration_column) for s in self.read_dataset_csv(args.dataset, [args.duration_column])]
            )
            dive_types = np.where(np.concatenate(foraging) == 1, foraging_state, 0)
            successes = int(events["prediction"].sum()) if args.successes is None else args.successes
            rate = catch_rate(durations, dive_types, foraging_state, successes)
            self.write_csv(pd.DataFrame([asdict(rate)]), "effort.csv")
        return 0

    def cmd_baseline(self, args):
        dives = pd.read_csv(args.dives, dtype={"series_id": str}).set_index("series_id")
        if args.confirmed:
            confirmed = [c.strip() for c in args.confirmed.split(",") if c.strip()]
        else:
            windows = pd.read_csv(args.dataset, dtype={"series_id": str})
            confirmed = sorted(windows.loc[windows["label"].isin(args.capture_states), "series_id"].unique())
        thresholds, predictions = tennessen_baseline(dives, confirmed)
        scores = baseline_scores(dives, thresholds)
        out = pd.concat([predictions, scores], axis=1).reset_index()
        summary = thresholds.as_series().rename("value").rename_axis("statistic").reset_index()
        if args.dataset:
            units = unit_outcomes(
                self.read_dataset_csv(args.dataset, []), args.capture_states, args.negative_states
            )
            outcome = dict(units)
            scored = out[out["series_id"].isin(list(outcome))]
            try:
                value = auc(scored["score"], scored["series_id"].map(outcome))
                summary.loc[len(summary)] = ("auc", value)
            except UndefinedMetricError as err:
                logger.warning("Baseline AUC not computed: %s", err)
        self.write_csv(out, "baseline.csv")
        self.write_csv(summary, "thresholds.csv")
        return 0


def _final_labels(dataset, event_states):
    """Labels seen at the last index of some series, event states excluded"""
    seen = {int(s.labels[-1]) for s in dataset if s.labels[-1] > 0}
    return sorted(seen - set(event_states))


def _alpha_first(frames):
    frame = pd.concat(frames, ignore_index=True)
    return frame[["alpha"] + [c for c in frame.columns if c != "alpha"]]


def _add_fit_options(parser):
    parser.add_argument("--restarts", type=_positive_int, default=10)
    parser.add_argument("--max-iter", type=_positive_int, default=1000)
    parser.add_argument("--tol", type=float, default=1e-8)
    parser.add_argument("--gradient", choices=["analytic", "numeric"], default="analytic")


def build_parser():
    parser = argparse.ArgumentParser(prog="phmmutils", description="Partially hidden Markov models for sparse labels")
    parser.add_argument("--seed", type=int, help="base seed; simulate falls back to the scenario seed, others to 0")
    parser.add_argument("--threads", type=_positive_int, default=1)
    parser.add_argument("--output-dir", default=".")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="simulate a scenario file or preset")
    simulate.add_argument("scenario", help="scenario YAML or preset name (cs1, cs2, sparse)")

    featurize = commands.add_parser("featurize", help="build a dataset from a raw trace")
    featurize.add_argument("trace")
    featurize.add_argument("--case", type=int, choices=[1, 2], required=True)
    featurize.add_argument("--events")
    featurize.add_argument("--series-id")
    featurize.add_argument("--sampling-rate", type=float)
    featurize.add_argument("--min-max-depth", type=float, default=0.0)
    featurize.add_argument("--bottom", choices=["depth", "duration"], default="depth")

    fit = commands.add_parser("fit", help="fit a model config to a dataset")
    fit.add_argument("dataset")
    fit.add_argument("config", help="model config YAML or preset name")
    fit.add_argument("--alpha", type=_unit_interval)
    _add_fit_options(fit)

    cv = commands.add_parser("cv", help="cross-validate over an alpha grid")
    cv.add_argument("dataset")
    cv.add_argument("config")
    cv.add_argument("--alphas", type=_alpha_list)
    cv.add_argument("--scheme", choices=["subprofile", "stratified"], default="subprofile")
    cv.add_argument("--k", type=_positive_int, default=4)
    cv.add_argument("--states", type=_state_list, help="event states scored at the last index, e.g. 4,6")
    cv.add_argument("--negative-states", type=_state_list, help="labels marking a negative unit, e.g. 5")
    cv.add_argument("--threshold", type=_unit_interval, default=0.5)
    cv.add_argument(
        "--auc-mode", choices=["pooled", "fold-mean"], help="default: fold-mean for stratified folds, else pooled"
    )
    _add_fit_options(cv)

    decode_ = commands.add_parser("decode", help="event probabilities and Viterbi paths from fitted parameters")
    decode_.add_argument("dataset")
    decode_.add_argument("fitted", help="fitted.yaml written by fit")
    decode_.add_argument("--states", type=_state_list, default="all")
    decode_.add_argument("--threshold", type=_unit_interval, default=0.5)
    decode_.add_argument("--effort", action="store_true", help="also estimate successes per hour of foraging")
    decode_.add_argument("--foraging-state", type=_positive_int, default=3)
    decode_.add_argument("--duration-column", default="duration")
    decode_.add_argument("--successes", type=int)

    baseline = commands.add_parser("baseline", help="threshold baseline on dive statistics")
    baseline.add_argument("dives", help="dives.csv written by featurize --case 2")
    baseline.add_argument("--dataset", help="window dataset; its capture labels confirm dives")
    baseline.add_argument("--confirmed", help="comma-separated confirmed capture dive ids")
    baseline.add_argument("--capture-states", type=_state_list, default=[4, 6])
    baseline.add_argument("--negative-states", type=_state_list, default=[5])
    return parser


def main(argv=None):
    """
    Runs one command

    Returns:
        int: 0 on success, 1 on I/O errors, 2 on usage or model errors,
            3 when the best fit did not converge
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    if args.command == "baseline" and not (args.dataset or args.confirmed):
        parser.print_usage(sys.stderr)
        print("phmmutils: error: baseline needs --dataset or --confirmed", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    runner = Runner(args.seed or 0, args.threads, args.output_dir)
    try:
        return getattr(runner, f"cmd_{args.command}")(args)
    except PHMMError as err:
        logger.error("%s", err)
        print(f"phmmutils: error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"phmmutils: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
