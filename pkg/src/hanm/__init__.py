"""Mixture conditional VAEs for bivariate causal direction inference and
causal mechanism clustering."""

from .data import BivariateDataset, Direction, MechanismSpec, default_specs, gen_mechanism_mixture, standardize
from .errors import HanmError
from .mcvae import MixtureCvaeConfig, MixtureCvaeModel, train
from .mcvcc import ClusterConfig, ClusterResult, cluster, kmeans_1d
from .mcvci import DirectionDecision, DirectionScore, InferenceConfig, Verdict, decide, decision_rate_curve
from .metrics import ari, direction_accuracy, nmi

__version__ = "0.1.0"

__all__ = [
    "BivariateDataset", "ClusterConfig", "ClusterResult", "Direction", "DirectionDecision",
    "DirectionScore", "HanmError", "InferenceConfig", "MechanismSpec", "MixtureCvaeConfig",
    "MixtureCvaeModel", "Verdict", "ari", "cluster", "decide", "decision_rate_curve",
    "default_specs", "direction_accuracy", "gen_mechanism_mixture", "kmeans_1d", "nmi",
    "standardize", "train",
]
