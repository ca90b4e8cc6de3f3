"""Mixture conditional variational auto-encoder regressing an effect on its cause.

Network pieces (all one-hidden-layer MLPs by default):

* prior encoder: cause -> (condition code, prior mean, prior log-variance)
* K posterior heads: (cause, effect) -> (mean_k, log-variance_k)
* weight encoder: (cause, effect) -> K logits, softmaxed into q(c|x, y)
* decoder (weights shared by all components): (z_k, condition code, one-hot k) -> mean

The one-hot input lets a single decoder represent K different mechanisms;
with ``component_decoder=False`` it is dropped and components differ only
through their latents. The reconstruction noise is one learned constant
per component (``noise_model="per_component"``, an additive noise model)
or a second decoder output (``"heteroscedastic"``).

The categorical prior p(c|x) is uniform, and the expectation over the
component is taken exactly as a q-weighted sum over all K components.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn_core as nn
from .errors import ConfigError, DimensionError, NumericError, StateError, TrainingError
from .nn_core import MlpSpec, ParamStore, Tensor


NOISE_MODELS = ("per_component", "heteroscedastic")


@dataclass(frozen=True)
class MixtureCvaeConfig:
    n_components: int = 2
    latent_dim: int = 2
    cond_dim: int = 2
    hidden_width: int = 32
    epochs: int = 600
    batch_size: int = 64
    learning_rate: float = 1e-2
    seed: int = 0
    logvar_clip: tuple[float, float] = (-7.0, 7.0)
    activation: str = "tanh"
    component_decoder: bool = True
    noise_model: str = "per_component"
    weight_init_scale: float = 5.0
    latent_kl_boost: float = 5.0
    boost_epochs: int = 200

    def __post_init__(self):
        object.__setattr__(self, "logvar_clip", tuple(float(v) for v in self.logvar_clip))
        for name in ("n_components", "latent_dim", "cond_dim", "hidden_width", "epochs", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.noise_model not in NOISE_MODELS:
            raise ConfigError(f"noise_model must be one of {NOISE_MODELS}, got {self.noise_model!r}")
        low, high = self.logvar_clip
        if not low < high:
            raise ConfigError(f"logvar_clip must be an increasing interval, got {self.logvar_clip}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["logvar_clip"] = list(self.logvar_clip)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureCvaeConfig":
        return cls(**{k: (tuple(v) if k == "logvar_clip" else v) for k, v in d.items()})


@dataclass(frozen=True)
class ElboTerms:
    recon: float
    kl_gauss: float
    kl_cat: float
    elbo: float
    loss: float

    @classmethod
    def from_parts(cls, recon: float, kl_gauss: float, kl_cat: float) -> "ElboTerms":
        elbo = recon - kl_gauss - kl_cat
        return cls(recon, kl_gauss, kl_cat, elbo, -elbo)


@dataclass
class LatentSample:
    z: list[np.ndarray]
    z_con: np.ndarray
    noise: np.ndarray


class MixtureCvaeModel:
    def __init__(self, config: MixtureCvaeConfig, rng: np.random.Generator | None = None,
                 zero: bool = False):
        self.config = config
        self.params = ParamStore()
        self.trained = False
        k, dz, dc, h = config.n_components, config.latent_dim, config.cond_dim, config.hidden_width
        act = config.activation
        self.prior_spec = MlpSpec((1, h, dc + 2 * dz), act)
        self.head_spec = MlpSpec((2, h, 2 * dz), act)
        self.weight_spec = MlpSpec((2, h, k), act)
        dec_in = dz + dc + (k if config.component_decoder else 0)
        dec_out = 2 if config.noise_model == "heteroscedastic" else 1
        self.decoder_spec = MlpSpec((dec_in, h, dec_out), act)
        if rng is None:
            rng = np.random.default_rng(config.seed)
        nn.init_mlp(self.prior_spec, self.params, "prior", rng, zero)
        for i in range(k):
            nn.init_mlp(self.head_spec, self.params, f"posterior{i}", rng, zero)
        nn.init_mlp(self.weight_spec, self.params, "weights", rng, zero)
        last = f"weights.w{len(self.weight_spec.layer_widths) - 2}"
        self.params.params[last][...] *= config.weight_init_scale
        nn.init_mlp(self.decoder_spec, self.params, "decoder", rng, zero)
        if config.noise_model == "per_component":
            self.params.add("decoder.logvar", np.zeros((1, k)))

    @property
    def n_components(self) -> int:
        return self.config.n_components


def _column(values) -> np.ndarray:
    if isinstance(values, Tensor):
        values = values.data
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != 1:
        raise DimensionError(f"expected a column of scalars, got shape {arr.shape}")
    return arr


def _pair(x, y) -> np.ndarray:
    x, y = _column(x), _column(y)
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    return np.hstack([x, y])


def _clip_logvar(model: MixtureCvaeModel, t: Tensor) -> Tensor:
    low, high = model.config.logvar_clip
    return nn.clip(t, low, high)


def _check_finite(name: str, t: Tensor) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite values in {name}")


def encode_prior(model: MixtureCvaeModel, x_batch) -> tuple[Tensor, Tensor, Tensor]:
    """Condition code, prior mean and prior log-variance of p(z | x)."""
    dc, dz = model.config.cond_dim, model.config.latent_dim
    out = nn.mlp_forward(model.prior_spec, model.params, _column(x_batch), "prior")
    _check_finite("prior encoder", out)
    z_con = out[:, :dc]
    mu = out[:, dc:dc + dz]
    logvar = _clip_logvar(model, out[:, dc + dz:])
    return z_con, mu, logvar


def _posterior(model: MixtureCvaeModel, xy: np.ndarray) -> list[tuple[Tensor, Tensor]]:
    dz = model.config.latent_dim
    heads = []
    for i in range(model.n_components):
        out = nn.mlp_forward(model.head_spec, model.params, xy, f"posterior{i}")
        _check_finite(f"posterior head {i}", out)
        heads.append((out[:, :dz], _clip_logvar(model, out[:, dz:])))
    return heads


def encode_posterior(model: MixtureCvaeModel, x_batch, y_batch) -> list[tuple[Tensor, Tensor]]:
    """Per-component posterior ``(mean, std)`` of q(z_k | x, y)."""
    return [(mu, nn.exp(nn.mul(lv, 0.5))) for mu, lv in _posterior(model, _pair(x_batch, y_batch))]


def _log_weights(model: MixtureCvaeModel, xy: np.ndarray) -> Tensor:
    logits = nn.mlp_forward(model.weight_spec, model.params, xy, "weights")
    _check_finite("weight encoder", logits)
    return nn.log_softmax(logits)


def component_weights(model: MixtureCvaeModel, x_batch, y_batch) -> Tensor:
    """q(c_k | x, y) as a batch x K matrix with rows on the simplex."""
    xy = _pair(x_batch, y_batch)
    logits = nn.mlp_forward(model.weight_spec, model.params, xy, "weights")
    return nn.softmax(logits)


def mixture_weights(model: MixtureCvaeModel, x_batch, y_batch) -> np.ndarray:
    """Dataset-level w_k: column means of q(c|x, y)."""
    return component_weights(model, x_batch, y_batch).data.mean(axis=0)


def reparameterize(mu, sigma, noise) -> Tensor:
    mu, sigma = nn.as_tensor(mu), nn.as_tensor(sigma)
    noise = np.asarray(noise.data if isinstance(noise, Tensor) else noise, dtype=np.float64)
    if mu.shape != sigma.shape or mu.shape != noise.shape:
        raise DimensionError(f"shapes differ: mu {mu.shape}, sigma {sigma.shape}, noise {noise.shape}")
    if np.any(sigma.data < 0):
        raise ValueError("sigma must be non-negative")
    return nn.add(mu, nn.mul(sigma, noise))


def _decoder_input(model: MixtureCvaeModel, z_k: Tensor, z_con: Tensor, component: int) -> Tensor:
    parts = [z_k, z_con]
    if model.config.component_decoder:
        onehot = np.zeros((z_k.shape[0], model.n_components))
        onehot[:, component] = 1.0
        parts.append(onehot)
    return nn.concat(parts, axis=1)


def _decoder_logvar(model: MixtureCvaeModel, out: Tensor, components: np.ndarray) -> Tensor:
    if model.config.noise_model == "heteroscedastic":
        return _clip_logvar(model, out[:, 1:2])
    # one learned noise level per component, independent of the cause
    per_k = _clip_logvar(model, model.params.tensor("decoder.logvar"))
    return nn.transpose(per_k[:, components])


def decode(model: MixtureCvaeModel, z_k, z_con, component: int = 0) -> tuple[Tensor, Tensor]:
    """Reconstruction mean and log-variance of component ``component``."""
    z_k, z_con = nn.as_tensor(z_k), nn.as_tensor(z_con)
    if z_k.shape[1] != model.config.latent_dim or z_con.shape[1] != model.config.cond_dim:
        raise DimensionError(f"decoder got latent {z_k.shape} and condition {z_con.shape}")
    if not 0 <= component < model.n_components:
        raise DimensionError(f"component {component} out of range for K={model.n_components}")
    out = nn.mlp_forward(model.decoder_spec, model.params,
                         _decoder_input(model, z_k, z_con, component), "decoder")
    _check_finite("decoder", out)
    return out[:, 0:1], _decoder_logvar(model, out, np.full(z_k.shape[0], component))


def mixture_predict(model: MixtureCvaeModel, x_batch, y_batch=None) -> np.ndarray:
    """Mixture regression  sum_k w_k * y_k.

    With ``y_batch`` the weights are q(c|x, y) and each component decodes its
    posterior mean. Without it, the weights are the uniform prior and every
    component decodes the prior mean, so the result is the x-only regression.
    """
    x = _column(x_batch)
    z_con, mu_p, _ = encode_prior(model, x)
    k = model.n_components
    if y_batch is None:
        weights = np.full((x.shape[0], k), 1.0 / k)
        latents = [mu_p] * k
    else:
        xy = _pair(x, y_batch)
        weights = np.exp(_log_weights(model, xy).data)
        latents = [mu for mu, _ in _posterior(model, xy)]
    preds = np.column_stack([decode(model, z, z_con, i)[0].data[:, 0] for i, z in enumerate(latents)])
    return (weights * preds).sum(axis=1)


def _elbo_graph(model: MixtureCvaeModel, x_batch, y_batch, noise):
    """Per-sample recon / Gaussian KL / categorical KL tensors (each batch x 1)."""
    k, dz = model.n_components, model.config.latent_dim
    x, y = _column(x_batch), _column(y_batch)
    xy = _pair(x, y)
    b = x.shape[0]
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (k, b, dz):
        raise DimensionError(f"noise must have shape {(k, b, dz)}, got {noise.shape}")

    z_con, mu_p, lv_p = encode_prior(model, x)
    heads = _posterior(model, xy)
    log_q = _log_weights(model, xy)
    q = nn.exp(log_q)

    dec_in, kls = [], []
    for i, (mu, lv) in enumerate(heads):
        z = nn.add(mu, nn.mul(nn.exp(nn.mul(lv, 0.5)), noise[i]))
        dec_in.append(_decoder_input(model, z, z_con, i))
        kls.append(nn.reduce_sum(nn.gaussian_kl(mu, lv, mu_p, lv_p), axis=1, keepdims=True))
    out = nn.mlp_forward(model.decoder_spec, model.params, nn.concat(dec_in, axis=0), "decoder")
    _check_finite("decoder", out)
    y_mean = out[:, 0:1]
    y_lv = _decoder_logvar(model, out, np.repeat(np.arange(k), b))
    ll = nn.gaussian_log_prob(np.tile(y, (k, 1)), y_mean, y_lv)
    ll = nn.transpose(nn.reshape(ll, (k, b)))

    recon = nn.reduce_sum(nn.mul(q, ll), axis=1, keepdims=True)
    kl_gauss = nn.reduce_sum(nn.mul(q, nn.concat(kls, axis=1)), axis=1, keepdims=True)
    kl_cat = nn.reduce_sum(nn.mul(q, nn.add(log_q, math.log(k))), axis=1, keepdims=True)
    return recon, kl_gauss, kl_cat


def loss_and_terms(model: MixtureCvaeModel, x_batch, y_batch, noise,
                   kl_weight: float = 1.0) -> tuple[Tensor, ElboTerms]:
    """Differentiable batch-mean loss (= -ELBO) plus its float decomposition.

    ``kl_weight`` scales the Gaussian KL in the differentiable loss only; the
    returned terms are always the unweighted ELBO.
    """
    recon, kl_gauss, kl_cat = _elbo_graph(model, x_batch, y_batch, noise)
    terms = ElboTerms.from_parts(
        float(recon.data.mean()), float(kl_gauss.data.mean()), float(kl_cat.data.mean())
    )
    for name in ("recon", "kl_gauss", "kl_cat"):
        if not math.isfinite(getattr(terms, name)):
            raise NumericError(f"ELBO term {name} is not finite", )
    if kl_weight != 1.0:
        kl_gauss = nn.mul(kl_gauss, kl_weight)
    per_sample = nn.sub(nn.add(kl_gauss, kl_cat), recon)
    return nn.reduce_mean(per_sample), terms


def elbo(model: MixtureCvaeModel, x_batch, y_batch, noise) -> ElboTerms:
    return loss_and_terms(model, x_batch, y_batch, noise)[1]


def elbo_per_sample(model: MixtureCvaeModel, x_batch, y_batch, noise) -> np.ndarray:
    recon, kl_gauss, kl_cat = _elbo_graph(model, x_batch, y_batch, noise)
    return (recon.data - kl_gauss.data - kl_cat.data)[:, 0]


def mean_elbo(model: MixtureCvaeModel, x, y, n_draws: int, rng: np.random.Generator) -> float:
    """Dataset-mean ELBO averaged over ``n_draws`` reparameterisation draws."""
    shape = (model.n_components, len(_column(x)), model.config.latent_dim)
    draws = [elbo_per_sample(model, x, y, rng.standard_normal(shape)).mean() for _ in range(n_draws)]
    return float(np.mean(draws))


def _kl_weight(config: MixtureCvaeConfig, epoch: int) -> float:
    if epoch >= config.boost_epochs:
        return 1.0
    return config.latent_kl_boost + (1.0 - config.latent_kl_boost) * epoch / config.boost_epochs


def train(config: MixtureCvaeConfig, cause, effect) -> tuple[MixtureCvaeModel, list[float]]:
    """Fit by minibatch Adam on -ELBO. Returns the model and per-epoch mean loss."""
    x, y = _column(cause), _column(effect)
    n = x.shape[0]
    if y.shape[0] != n:
        raise DimensionError(f"cause has {n} rows but effect has {y.shape[0]}")
    if config.batch_size > n:
        raise ConfigError(f"batch_size {config.batch_size} exceeds dataset size {n}")
    rng = np.random.default_rng(config.seed)
    model = MixtureCvaeModel(config, rng)
    state = nn.AdamState(learning_rate=config.learning_rate)
    k, dz = config.n_components, config.latent_dim
    trace: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        weight = _kl_weight(config, epoch)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            noise = rng.standard_normal((k, idx.size, dz))
            try:
                loss, terms = loss_and_terms(model, x[idx], y[idx], noise, weight)
            except NumericError as exc:
                raise TrainingError(f"training diverged at epoch {epoch}: {exc}", epoch, str(exc)) from exc
            model.params.zero_grads()
            nn.backward(loss)
            nn.adam_step(model.params, state)
            total += terms.loss * idx.size
        trace.append(total / n)
    model.trained = True
    return model, trace


def save_model(model: MixtureCvaeModel, path) -> None:
    """Write config and parameters to an ``.npz`` container."""
    arrays = {f"param:{name}": value for name, value in model.params.params.items()}
    arrays["config"] = np.array(json.dumps(model.config.to_dict()))
    arrays["trained"] = np.array(model.trained)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> MixtureCvaeModel:
    with np.load(Path(path), allow_pickle=False) as data:
        config = MixtureCvaeConfig.from_dict(json.loads(str(data["config"])))
        model = MixtureCvaeModel(config, zero=True)
        for key in data.files:
            if not key.startswith("param:"):
                continue
            name = key[len("param:"):]
            if name not in model.params or model.params[name].shape != data[key].shape:
                raise StateError(f"checkpoint parameter {name} does not fit the configured model")
            model.params.params[name][...] = data[key]
        model.trained = bool(data["trained"])
    return model
