"""Causal mechanism clustering: 1-D k-means on regression residuals taken in
the inferred causal direction."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import mcvae, metrics
from .data import BivariateDataset, standardize
from .errors import ConfigError, StateError
from .mcvci import (
    DirectionScore,
    InferenceConfig,
    Verdict,
    confidence,
    correlation_gate,
    score_direction,
    verdict_from_scores,
)


@dataclass(frozen=True)
class ClusterConfig:
    n_clusters: int = 2
    max_iter: int = 300
    tol: float = 1e-8
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")


@dataclass
class ClusterResult:
    residuals: np.ndarray
    labels: np.ndarray
    centers: np.ndarray
    objective: float
    history: list[float] = field(default_factory=list)
    direction: Verdict | None = None
    l_forward: DirectionScore | None = None
    l_backward: DirectionScore | None = None
    ari: float | None = None
    nmi: float | None = None

    def to_dict(self) -> dict:
        return {
            "direction": None if self.direction is None else self.direction.value,
            "objective": self.objective,
            "centers": [float(c) for c in self.centers],
            "cluster_sizes": [int(np.sum(self.labels == i)) for i in range(len(self.centers))],
            "l_forward": None if self.l_forward is None else self.l_forward.to_dict(),
            "l_backward": None if self.l_backward is None else self.l_backward.to_dict(),
            "ari": self.ari,
            "nmi": self.nmi,
        }


def objective(values: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    return float(np.sum((values - centers[labels]) ** 2))


def residuals(x, y, direction: Verdict, model: mcvae.MixtureCvaeModel) -> np.ndarray:
    """``effect - prediction(cause)`` for the model fitted in ``direction``."""
    if not getattr(model, "trained", False):
        raise StateError("residuals need a trained model")
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if direction == Verdict.Y_TO_X:
        return x - mcvae.mixture_predict(model, y)
    return y - mcvae.mixture_predict(model, x)


def _kmeanspp(values: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    centers = [values[rng.integers(values.size)]]
    for _ in range(1, c):
        d2 = np.min((values[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total == 0:
            centers.append(values[rng.integers(values.size)])
        else:
            centers.append(values[rng.choice(values.size, p=d2 / total)])
    return np.array(centers, dtype=np.float64)


def _lloyd(values: np.ndarray, centers: np.ndarray, config: ClusterConfig):
    history = []
    labels = np.argmin((values[:, None] - centers[None, :]) ** 2, axis=1)
    for _ in range(config.max_iter):
        new = centers.copy()
        for i in range(centers.size):
            members = values[labels == i]
            if members.size:
                new[i] = members.mean()
        # an empty cluster restarts at the point worst served by its center
        for i in range(centers.size):
            if not np.any(labels == i):
                far = int(np.argmax((values - new[labels]) ** 2))
                new[i] = values[far]
                labels[far] = i
        shift = float(np.max(np.abs(new - centers)))
        centers = new
        labels = np.argmin((values[:, None] - centers[None, :]) ** 2, axis=1)
        history.append(objective(values, labels, centers))
        if len(history) > 1 and history[-1] > history[-2] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"k-means objective increased: {history[-2]} -> {history[-1]}")
        if shift < config.tol:
            break
    # final centers are the means of the returned assignment
    for i in range(centers.size):
        members = values[labels == i]
        if members.size:
            centers[i] = members.mean()
    return labels, centers, history


def kmeans_1d(values, config: ClusterConfig | None = None) -> ClusterResult:
    """Best of ``restarts`` k-means++ seeded Lloyd runs on a 1-D sample."""
    config = config or ClusterConfig()
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValueError("kmeans_1d needs at least one value")
    rng = np.random.default_rng(config.seed)
    best = None
    for _ in range(config.restarts):
        labels, centers, history = _lloyd(values, _kmeanspp(values, config.n_clusters, rng), config)
        psi = objective(values, labels, centers)
        if best is None or psi < best.objective:
            best = ClusterResult(values, labels, centers, psi, history)
    return best


def cluster(x, y=None, config: ClusterConfig | None = None,
            inference_config: InferenceConfig | None = None,
            truth=None) -> ClusterResult:
    """Fit both directions, take residuals in the winning one, cluster them."""
    config = config or ClusterConfig()
    inference_config = inference_config or InferenceConfig()
    ds = x if isinstance(x, BivariateDataset) else BivariateDataset(x, y)
    if truth is None:
        truth = ds.mechanism_labels
    ds = standardize(ds)
    forward = score_direction(ds.x, ds.y, inference_config)
    backward = score_direction(ds.y, ds.x, inference_config)
    if forward.total < backward.total:
        direction, model = Verdict.Y_TO_X, backward.model
    else:
        direction, model = Verdict.X_TO_Y, forward.model
    theta = residuals(ds.x, ds.y, direction, model)
    result = kmeans_1d(theta, config)
    result.direction = direction
    result.l_forward, result.l_backward = forward, backward
    if truth is not None:
        result.ari = metrics.ari(truth, result.labels)
        result.nmi = metrics.nmi(truth, result.labels)
    return result
