from phmmutils.helpers import Helpers
from phmmutils.model import ModelParams, ModelSpec
from phmmutils.markov import LabeledSeries, TransitionMatrix, InitialDistribution, MixtureWeights, Decoding
from phmmutils.estimate import ConstraintSet, Estimator, FitResult
from phmmutils.evaluate import CrossValidator, FoldPlan, MetricsReport
from phmmutils.featurize import Featurizer, SensorTrace
from phmmutils.simulate import SimulationScenario, Simulator
