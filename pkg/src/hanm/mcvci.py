"""Causal direction decision by comparing mixture-CVAE likelihood scores.

For each candidate direction the score is

    L(cause -> effect) = mean log p(cause) + mean ELBO of p(effect | cause)

with log p(cause) from a Gaussian KDE fitted on the training split and both
terms evaluated on the held-out test split.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from . import mcvae
from .data import BivariateDataset, standardize
from .errors import ConfigError, SelectionError, TrainingError
from .mcvae import MixtureCvaeConfig, MixtureCvaeModel

DECISION_RATE_GRID = tuple(range(10, 101, 10))
KDE_CHUNK = 1 << 20


class Verdict(str, Enum):
    X_TO_Y = "XtoY"
    Y_TO_X = "YtoX"
    UNDECIDED = "Undecided"
    NO_CAUSAL_RELATION = "NoCausalRelation"


@dataclass(frozen=True)
class InferenceConfig:
    model: MixtureCvaeConfig = field(default_factory=MixtureCvaeConfig)
    split: float = 0.8
    alpha: float = 0.05
    k_grid: tuple[int, ...] = (1, 2, 3)
    seed: int = 0
    validation_fraction: float = 0.25
    eval_draws: int = 10

    def __post_init__(self):
        object.__setattr__(self, "k_grid", tuple(int(k) for k in self.k_grid))
        if not 0 < self.split < 1:
            raise ConfigError(f"split must lie in (0, 1), got {self.split}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.k_grid or min(self.k_grid) < 1:
            raise ConfigError(f"k_grid must be a non-empty list of positive counts, got {self.k_grid}")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.eval_draws < 1:
            raise ConfigError("eval_draws must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        d["k_grid"] = list(self.k_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InferenceConfig":
        d = dict(d)
        d["model"] = MixtureCvaeConfig.from_dict(d["model"])
        return cls(**d)


@dataclass
class GateResult:
    passes: bool
    corr: float
    p_value: float
    reason: str = ""

    def __iter__(self):
        yield self.passes
        yield self.corr


@dataclass
class DirectionScore:
    log_marginal: float
    elbo_term: float
    total: float
    k: int = 0
    k_scores: dict[int, float] = field(default_factory=dict)
    model: MixtureCvaeModel | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_terms(cls, log_marginal: float, elbo_term: float, **kw) -> "DirectionScore":
        return cls(log_marginal, elbo_term, log_marginal + elbo_term, **kw)

    def to_dict(self) -> dict:
        return {
            "log_marginal": self.log_marginal,
            "elbo_term": self.elbo_term,
            "total": self.total,
            "k": self.k,
            "k_scores": {str(k): v for k, v in self.k_scores.items()},
        }


@dataclass
class DirectionDecision:
    l_forward: DirectionScore | None
    l_backward: DirectionScore | None
    verdict: Verdict
    tau: float
    gate: GateResult | None = None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "tau": self.tau,
            "l_forward": None if self.l_forward is None else self.l_forward.to_dict(),
            "l_backward": None if self.l_backward is None else self.l_backward.to_dict(),
            "corr": None if self.gate is None else self.gate.corr,
            "corr_p_value": None if self.gate is None else self.gate.p_value,
        }


def correlation_gate(x, y, alpha: float = 0.05) -> GateResult:
    """Pearson correlation with a two-sided t-test of zero correlation."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"x and y must be equal-length vectors, got {x.shape} and {y.shape}")
    n = x.size
    if n < 3:
        raise ValueError("correlation gate needs at least 3 samples")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return GateResult(False, 0.0, 1.0, "degenerate data: zero variance")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = float(2.0 * stats.t.sf(abs(t), n - 2))
    passes = p < alpha
    return GateResult(passes, r, p, "" if passes else f"correlation not significant (p={p:.3g})")


def silverman_bandwidth(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    return 1.06 * float(values.std(ddof=1)) * values.size ** (-0.2)


def marginal_log_density(train_values, eval_values) -> float:
    """Mean log density of ``eval_values`` under a Gaussian KDE of ``train_values``."""
    train = np.asarray(train_values, dtype=np.float64).reshape(-1)
    points = np.asarray(eval_values, dtype=np.float64).reshape(-1)
    if train.size < 2:
        raise ValueError("KDE needs at least 2 training values")
    h = silverman_bandwidth(train)
    if not h > 0:
        raise ValueError("KDE bandwidth undefined: training sample has zero variance")
    const = -0.5 * math.log(2.0 * math.pi) - math.log(h) - math.log(train.size)
    # chunk the evaluation points so the kernel matrix stays a few MB
    step = max(1, KDE_CHUNK // train.size)
    total = 0.0
    for start in range(0, points.size, step):
        z = (points[start:start + step, None] - train[None, :]) / h
        total += float(np.sum(logsumexp(-0.5 * z * z, axis=1)))
    return total / points.size + const


def confidence(l_forward, l_backward) -> float:
    """Relative gap between the two scores, on the loss scale S = -L.

    For positive losses this is ``1 - min(S)/max(S)``. The general form
    ``|S_f - S_b| / max(|S_f|, |S_b|)`` agrees there and stays defined for
    negative losses; scores of opposite sign are clamped just below 1.
    """
    lf = l_forward.total if isinstance(l_forward, DirectionScore) else float(l_forward)
    lb = l_backward.total if isinstance(l_backward, DirectionScore) else float(l_backward)
    s_f, s_b = -lf, -lb
    scale = max(abs(s_f), abs(s_b))
    if scale == 0 or s_f == s_b:
        return 0.0
    return min(abs(s_f - s_b) / scale, math.nextafter(1.0, 0.0))


def verdict_from_scores(l_forward: float, l_backward: float) -> Verdict:
    if l_forward > l_backward:
        return Verdict.X_TO_Y
    if l_forward < l_backward:
        return Verdict.Y_TO_X
    return Verdict.UNDECIDED


def split_indices(n: int, split: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(max(int(round(split * n)), 2), n - 1)
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def _fit(model_config: MixtureCvaeConfig, k: int, cause, effect) -> MixtureCvaeModel:
    cfg = dataclasses.replace(model_config, n_components=k,
                              batch_size=min(model_config.batch_size, len(cause)))
    model, _ = mcvae.train(cfg, cause, effect)
    return model


def _heldout_elbo(model: MixtureCvaeModel, cause, effect, config: InferenceConfig) -> float:
    rng = np.random.default_rng([config.seed, 7919])
    return mcvae.mean_elbo(model, cause, effect, config.eval_draws, rng)


def select_k_scores(cause, effect, config: InferenceConfig) -> tuple[int, dict[int, float]]:
    """Validation ELBO for every K in the grid and the winning K."""
    grid = sorted(set(config.k_grid))
    if len(grid) == 1:
        return grid[0], {}
    fit_idx, val_idx = split_indices(len(cause), 1.0 - config.validation_fraction, config.seed + 1)
    scores: dict[int, float] = {}
    for k in grid:
        try:
            model = _fit(config.model, k, cause[fit_idx], effect[fit_idx])
            scores[k] = _heldout_elbo(model, cause[val_idx], effect[val_idx], config)
        except TrainingError:
            continue
    finite = {k: v for k, v in scores.items() if math.isfinite(v)}
    if not finite:
        raise SelectionError(f"every K in {grid} diverged")
    best = max(finite.values())
    # ascending grid order makes ties go to the smallest K
    return min(k for k, v in finite.items() if v == best), scores


def select_K(cause, effect, config: InferenceConfig) -> int:  # noqa: N802
    return select_k_scores(np.asarray(cause, float), np.asarray(effect, float), config)[0]


def score_direction(cause, effect, config: InferenceConfig) -> DirectionScore:
    """Score ``cause -> effect`` on standardized data (split by ``config.seed``)."""
    cause = np.asarray(cause, dtype=np.float64)
    effect = np.asarray(effect, dtype=np.float64)
    train, test = split_indices(cause.size, config.split, config.seed)
    k, k_scores = select_k_scores(cause[train], effect[train], config)
    model = _fit(config.model, k, cause[train], effect[train])
    log_marginal = marginal_log_density(cause[train], cause[test])
    elbo_term = _heldout_elbo(model, cause[test], effect[test], config)
    return DirectionScore.from_terms(log_marginal, elbo_term, k=k, k_scores=k_scores, model=model)


def decide(x, y=None, config: InferenceConfig | None = None) -> DirectionDecision:
    """Standardize, gate on correlation, score both directions, compare."""
    config = config or InferenceConfig()
    ds = x if isinstance(x, BivariateDataset) else BivariateDataset(x, y)
    ds = standardize(ds)
    gate = correlation_gate(ds.x, ds.y, config.alpha)
    if not gate.passes:
        return DirectionDecision(None, None, Verdict.NO_CAUSAL_RELATION, 0.0, gate)
    forward = score_direction(ds.x, ds.y, config)
    backward = score_direction(ds.y, ds.x, config)
    verdict = verdict_from_scores(forward.total, backward.total)
    return DirectionDecision(forward, backward, verdict, confidence(forward, backward), gate)


def decision_rate_curve(decisions: Sequence[tuple[float, bool]],
                        grid: Sequence[int] = DECISION_RATE_GRID) -> list[tuple[int, float]]:
    """Accuracy of the top k% most confident decisions for each k in ``grid``."""
    if not decisions:
        raise ValueError("decision_rate_curve needs at least one decision")
    ranked = sorted(decisions, key=lambda d: -d[0])
    n = len(ranked)
    curve = []
    for k in grid:
        top = ranked[:max(1, -(-k * n // 100))]
        curve.append((k, sum(bool(c) for _, c in top) / len(top)))
    return curve
