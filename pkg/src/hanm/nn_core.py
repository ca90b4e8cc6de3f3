"""Dense numerics for the encoders and decoders: a small reverse-mode tape,
feed-forward networks, parameter storage and Adam.

Matrices are plain 2-D ``float64`` numpy arrays. A :class:`Tensor` wraps one
array and remembers how it was produced so that :func:`backward` can push
gradients to the parameter leaves it came from. Only the operations needed by
the mixture CVAE are provided; several are fused (``dense``,
``gaussian_log_prob``, ``gaussian_kl``) to keep the tape short.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericError, StateError

LOG_2PI = math.log(2.0 * math.pi)

ACTIVATIONS = ("tanh", "relu", "identity")
OUTPUT_ACTIVATIONS = ("identity", "softmax")


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward", "_sink", "_seq")

    _counter = 0

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._sink: tuple[dict, str] | None = None
        Tensor._counter += 1
        self._seq = Tensor._counter

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn: Callable) -> Tensor:
    requires = False
    for p in parents:
        if p.requires_grad:
            requires = True
            break
    out = Tensor(data, requires)
    if requires:
        out._parents = parents
        out._backward = grad_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise and structural ops ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not align")
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def dense(x, weight, bias) -> Tensor:
    """``x @ weight + bias`` as one tape entry."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"input width {x.shape[1]} != layer fan-in {weight.shape[0]}")

    def grad_fn(g):
        return g @ weight.data.T, x.data.T @ g, g.sum(axis=0, keepdims=True)

    return _node(x.data @ weight.data + bias.data, (x, weight, bias), grad_fn)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def clip(a, low: float, high: float) -> Tensor:
    """Clamp with zero gradient outside ``[low, high]``."""
    a = as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)
    return _node(np.clip(a.data, low, high), (a,), lambda g: (g * inside,))


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), grad_fn)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.T, (a,), lambda g: (g.T,))


def take(a, index) -> Tensor:
    a = as_tensor(a)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _node(a.data[index], (a,), grad_fn)


def concat(parts: Sequence, axis: int = 1) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(np.concatenate([p.data for p in parts], axis=axis), parts, grad_fn)


def log_softmax(a) -> Tensor:
    """Row-wise log-softmax (max-shifted)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    prob = np.exp(out)
    return _node(out, (a,), lambda g: (g - prob * g.sum(axis=1, keepdims=True),))


def softmax(a) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    return _node(out, (a,), lambda g: (out * (g - (g * out).sum(axis=1, keepdims=True)),))


def gaussian_log_prob(value, mean, logvar) -> Tensor:
    """Elementwise ``log N(value; mean, exp(logvar))``."""
    value, mean, logvar = as_tensor(value), as_tensor(mean), as_tensor(logvar)
    inv_var = np.exp(-logvar.data)
    diff = value.data - mean.data
    out = -0.5 * (LOG_2PI + logvar.data + diff * diff * inv_var)

    def grad_fn(g):
        d_mean = g * diff * inv_var
        d_logvar = g * 0.5 * (diff * diff * inv_var - 1.0)
        return (
            _unbroadcast(-d_mean, value.shape),
            _unbroadcast(d_mean, mean.shape),
            _unbroadcast(d_logvar, logvar.shape),
        )

    return _node(out, (value, mean, logvar), grad_fn)


def gaussian_kl(mu_q, logvar_q, mu_p, logvar_p) -> Tensor:
    """Elementwise ``KL(N(mu_q, var_q) || N(mu_p, var_p))``."""
    mu_q, logvar_q = as_tensor(mu_q), as_tensor(logvar_q)
    mu_p, logvar_p = as_tensor(mu_p), as_tensor(logvar_p)
    var_q = np.exp(logvar_q.data)
    inv_var_p = np.exp(-logvar_p.data)
    diff = mu_q.data - mu_p.data
    ratio = (var_q + diff * diff) * inv_var_p
    out = 0.5 * (logvar_p.data - logvar_q.data + ratio - 1.0)

    def grad_fn(g):
        d_mu = g * diff * inv_var_p
        return (
            _unbroadcast(d_mu, mu_q.shape),
            _unbroadcast(g * 0.5 * (var_q * inv_var_p - 1.0), logvar_q.shape),
            _unbroadcast(-d_mu, mu_p.shape),
            _unbroadcast(g * 0.5 * (1.0 - ratio), logvar_p.shape),
        )

    return _node(out, (mu_q, logvar_q, mu_p, logvar_p), grad_fn)


# reverse pass ---------------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    # creation order is already a valid topological order of the tape
    seen = {id(root): root}
    stack = [root]
    while stack:
        for parent in stack.pop()._parents:
            if parent.requires_grad and id(parent) not in seen:
                seen[id(parent)] = parent
                stack.append(parent)
    return sorted(seen.values(), key=lambda t: t._seq)


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d param`` into every reachable ParamStore buffer.

    The tape is kept, so a second call adds the same gradients again.
    """
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise StateError("backward called on a value with no recorded forward computation")
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._sink is not None:
            buffers, name = node._sink
            buffers[name] += g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


# parameters -----------------------------------------------------------------


class ParamStore:
    """Named parameter matrices with a same-shaped gradient buffer each.

    All parameters are views into one flat vector (and likewise the
    gradients), so optimisers can update everything in a single pass.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.flat = np.zeros(0)
        self.flat_grad = np.zeros(0)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already exists")
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self._pack()

    def _pack(self) -> None:
        total = int(np.sum([p.size for p in self.params.values()]))
        flat, flat_grad = np.empty(total), np.empty(total)
        offset = 0
        for name, p in self.params.items():
            view = flat[offset:offset + p.size].reshape(p.shape)
            view[...] = p
            gview = flat_grad[offset:offset + p.size].reshape(p.shape)
            gview[...] = self.grads[name]
            self.params[name], self.grads[name] = view, gview
            offset += p.size
        self.flat, self.flat_grad = flat, flat_grad

    def tensor(self, name: str) -> Tensor:
        t = Tensor(self.params[name], requires_grad=True)
        t._sink = (self.grads, name)
        return t

    def zero_grads(self) -> None:
        self.flat_grad.fill(0.0)

    def names(self) -> list[str]:
        return list(self.params)

    def __contains__(self, name):
        return name in self.params

    def __getitem__(self, name) -> np.ndarray:
        return self.params[name]

    def __len__(self):
        return len(self.params)

    def num_entries(self) -> int:
        return self.flat.size

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for name, value in self.params.items():
            other.add(name, value)
        return other


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise DimensionError("an MLP needs at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise DimensionError(f"layer widths must be >= 1, got {self.layer_widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1


def init_mlp(
    spec: MlpSpec,
    store: ParamStore,
    prefix: str,
    rng: np.random.Generator,
    zero: bool = False,
) -> None:
    """Glorot-uniform weights and zero biases (all zeros if ``zero``)."""
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.layer_widths[i], spec.layer_widths[i + 1]
        if zero:
            w = np.zeros((fan_in, fan_out))
        else:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        store.add(f"{prefix}.w{i}", w)
        store.add(f"{prefix}.b{i}", np.zeros((1, fan_out)))


def mlp_forward(spec: MlpSpec, store: ParamStore, inputs, prefix: str) -> Tensor:
    x = as_tensor(inputs)
    if x.data.ndim != 2 or x.shape[1] != spec.layer_widths[0]:
        raise DimensionError(
            f"{prefix}: expected input of width {spec.layer_widths[0]}, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"{prefix}: non-finite input")
    for i in range(spec.n_layers):
        w, b = store.tensor(f"{prefix}.w{i}"), store.tensor(f"{prefix}.b{i}")
        if w.shape != (spec.layer_widths[i], spec.layer_widths[i + 1]):
            raise DimensionError(f"{prefix}.w{i} has shape {w.shape}, spec wants "
                                 f"{(spec.layer_widths[i], spec.layer_widths[i + 1])}")
        x = dense(x, w, b)
        if i < spec.n_layers - 1:
            if spec.activation == "tanh":
                x = tanh(x)
            elif spec.activation == "relu":
                x = relu(x)
    if spec.output_activation == "softmax":
        x = softmax(x)
    return x


# optimiser ------------------------------------------------------------------


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    _m_flat: np.ndarray | None = field(default=None, repr=False)
    _v_flat: np.ndarray | None = field(default=None, repr=False)

    def _bind(self, params: ParamStore) -> None:
        self._m_flat = np.zeros_like(params.flat)
        self._v_flat = np.zeros_like(params.flat)
        offset = 0
        for name, p in params.params.items():
            self.m[name] = self._m_flat[offset:offset + p.size].reshape(p.shape)
            self.v[name] = self._v_flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update, in place. Gradients are left untouched."""
    if state._m_flat is None:
        state._bind(params)
    if state._m_flat.shape != params.flat.shape:
        raise DimensionError(f"Adam state holds {state._m_flat.size} entries, params {params.flat.size}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    g, m, v = params.flat_grad, state._m_flat, state._v_flat
    m *= state.beta1
    m += (1.0 - state.beta1) * g
    v *= state.beta2
    v += (1.0 - state.beta2) * (g * g)
    params.flat -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def gradient_check(
    model_closure: Callable[[], Tensor],
    params: ParamStore,
    h: float = 1e-5,
    names: Iterable[str] | None = None,
) -> float:
    """Max relative gap between tape gradients and central differences.

    ``model_closure`` must rebuild the loss from ``params`` deterministically
    (any noise frozen); a closure that returns different values on two calls
    makes the check meaningless and raises :class:`StateError`.
    """
    loss = model_closure()
    if float(loss.data) != float(model_closure().data):
        raise StateError("gradient_check: closure is not deterministic; freeze its noise")
    params.zero_grads()
    backward(loss)
    auto = {name: g.copy() for name, g in params.grads.items()}
    params.zero_grads()

    worst = 0.0
    for name in names if names is not None else params.names():
        p = params.params[name]
        flat = p.reshape(-1)
        g_auto = auto[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(model_closure().data)
            flat[i] = orig - h
            down = float(model_closure().data)
            flat[i] = orig
            g_fd = (up - down) / (2.0 * h)
            err = abs(g_auto[i] - g_fd) / max(1e-8, abs(g_auto[i]) + abs(g_fd))
            worst = max(worst, err)
    return worst
