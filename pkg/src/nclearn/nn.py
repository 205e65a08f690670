"""Layers, losses and optimizers on top of :mod:`nclearn.tensor`.

Parameters are plain ``dict[str, Tensor]`` mappings so they can be namespaced,
frozen (wrapped without gradients) and checkpointed without any module
machinery.  Every forward function accepts an optional leading batch axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContextError, DimensionError, NumericError
from .tensor import Tensor, as_tensor, concat, matmul

Params = dict[str, Tensor]

_ACTIVATIONS = {
    "relu": Tensor.relu,
    "tanh": Tensor.tanh,
    "sigmoid": Tensor.sigmoid,
}


def activation(name: str):
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


# ------------------------------------------------------------------------ init
def kaiming_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, batch=()) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(*batch, fan_in, fan_out))


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, batch=()) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(*batch, fan_in, fan_out))


# -------------------------------------------------------------------------- MLP
@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dims: tuple = ()
    output_dim: int = 1
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"MLP dimensions must be >= 1, got {dims}")
        activation(self.activation)

    @property
    def dims(self) -> tuple:
        return (self.input_dim, *self.hidden_dims, self.output_dim)


def fan_in_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, batch=()) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(*batch, fan_in, fan_out))


_INITS = {"kaiming": kaiming_uniform, "xavier": xavier_uniform, "fan_in": fan_in_uniform}


def init_mlp(cfg: MlpConfig, rng: np.random.Generator, prefix: str = "", batch=(),
             init: str | None = None) -> Params:
    """Initialize an MLP.

    ``init`` is ``"kaiming"`` (default for relu nets) or ``"xavier"`` (default
    otherwise), both with zero biases, or ``"fan_in"``: weights and biases
    ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, the usual linear-layer default.

    ``batch`` adds leading axes so many independent networks can be trained in
    one graph (weights ``[*batch, in, out]``, biases ``[*batch, 1, out]``).
    """
    init = init or ("kaiming" if cfg.activation == "relu" else "xavier")
    draw = _INITS[init]
    params = {}
    dims = cfg.dims
    for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"{prefix}{i}.W"] = Tensor(draw(rng, fi, fo, batch), requires_grad=True)
        bshape = (*batch, 1, fo) if batch else (fo,)
        if init == "fan_in":
            bound = 1.0 / math.sqrt(fi)
            b = rng.uniform(-bound, bound, size=bshape)
        else:
            b = np.zeros(bshape)
        params[f"{prefix}{i}.b"] = Tensor(b, requires_grad=True)
    return params


def mlp_forward(cfg: MlpConfig, params: Params, x, prefix: str = "") -> Tensor:
    x = as_tensor(x)
    if x.shape[-1] != cfg.input_dim:
        raise DimensionError(
            f"MLP expects input width {cfg.input_dim}, got shape {x.shape}"
        )
    act = activation(cfg.activation)
    n_layers = len(cfg.dims) - 1
    for i in range(n_layers):
        x = matmul(x, params[f"{prefix}{i}.W"]) + params[f"{prefix}{i}.b"]
        if i < n_layers - 1:
            x = act(x)
    return x


# -------------------------------------------------------------------- attention
@dataclass(frozen=True)
class AttentionConfig:
    model_dim: int
    num_heads: int = 4
    value_dim: int | None = None
    query_dim: int | None = None

    def __post_init__(self):
        if self.model_dim < 1 or self.num_heads < 1:
            raise ValueError("model_dim and num_heads must be >= 1")
        if self.model_dim % self.num_heads:
            raise ValueError(
                f"model_dim {self.model_dim} is not divisible by num_heads {self.num_heads}"
            )

    @property
    def v_dim(self) -> int:
        return self.value_dim or self.model_dim

    @property
    def q_dim(self) -> int:
        return self.query_dim or self.model_dim


def init_mha(cfg: AttentionConfig, rng: np.random.Generator, prefix: str = "") -> Params:
    d = cfg.model_dim
    shapes = {"q": cfg.q_dim, "k": cfg.q_dim, "v": cfg.v_dim, "o": d}
    params = {}
    for name, fan_in in shapes.items():
        params[f"{prefix}W{name}"] = Tensor(xavier_uniform(rng, fan_in, d), requires_grad=True)
        params[f"{prefix}b{name}"] = Tensor(np.zeros(d), requires_grad=True)
    return params


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # [..., n, d] -> [..., H, n, d/H]
    *lead, n, d = x.shape
    x = x.reshape(*lead, n, heads, d // heads)
    nd = len(lead)
    return x.permute(*range(nd), nd + 1, nd, nd + 2)


def _merge_heads(x: Tensor) -> Tensor:
    # [..., H, n, dh] -> [..., n, H*dh]
    *lead, h, n, dh = x.shape
    nd = len(lead)
    x = x.permute(*range(nd), nd + 1, nd, nd + 2)
    return x.reshape(*lead, n, h * dh)


def mha_forward(cfg: AttentionConfig, params: Params, Q, K, V, prefix: str = "") -> Tensor:
    """Multi-head scaled dot-product attention of queries over a key/value set.

    Q: [..., m', q_dim], K: [..., m, q_dim], V: [..., m, v_dim] -> [..., m', d].
    """
    Q, K, V = as_tensor(Q), as_tensor(K), as_tensor(V)
    if K.shape[-2] == 0:
        raise ContextError("attention needs at least one key/value row")
    if Q.shape[-1] != cfg.q_dim or K.shape[-1] != cfg.q_dim:
        raise DimensionError(
            f"attention expects query/key width {cfg.q_dim}, got {Q.shape} and {K.shape}"
        )
    if V.shape[-1] != cfg.v_dim:
        raise DimensionError(f"attention expects value width {cfg.v_dim}, got {V.shape}")
    if V.shape[:-1] != K.shape[:-1]:
        raise DimensionError(f"keys {K.shape} and values {V.shape} must have the same rows")
    H = cfg.num_heads
    p = prefix
    q = _split_heads(matmul(Q, params[f"{p}Wq"]) + params[f"{p}bq"], H)
    k = _split_heads(matmul(K, params[f"{p}Wk"]) + params[f"{p}bk"], H)
    v = _split_heads(matmul(V, params[f"{p}Wv"]) + params[f"{p}bv"], H)
    scale = 1.0 / math.sqrt(cfg.model_dim // H)
    weights = (matmul(q, k.swapaxes(-1, -2)) * scale).softmax(axis=-1)
    heads = _merge_heads(matmul(weights, v))
    return matmul(heads, params[f"{p}Wo"]) + params[f"{p}bo"]


# --------------------------------------------------------------------- bilinear
def init_bilinear(d_out: int, d_in: int, n_labels: int, rng: np.random.Generator,
                  prefix: str = "") -> Params:
    bound = math.sqrt(6.0 / (d_in * n_labels + d_out))
    W = rng.uniform(-bound, bound, size=(d_out, d_in, n_labels))
    return {f"{prefix}W": Tensor(W, requires_grad=True)}


def bilinear_forward(W, e, labels) -> Tensor:
    """``out[..., i, a] = sum_{b,k} W[a, b, k] * e[..., i, b] * labels[..., i, k]``."""
    W, e, labels = as_tensor(W), as_tensor(e), as_tensor(labels)
    d_out, d_in, n_lab = W.shape
    if e.shape[-1] != d_in or labels.shape[-1] != n_lab:
        raise DimensionError(
            f"bilinear weights {W.shape} do not match inputs {e.shape} and {labels.shape}"
        )
    if e.shape[:-1] != labels.shape[:-1]:
        raise DimensionError(f"bilinear rows differ: {e.shape} vs {labels.shape}")
    # [d_in, d_out * K]: one matmul, then contract the label axis.
    Wm = W.permute(1, 0, 2).reshape(d_in, d_out * n_lab)
    proj = matmul(e, Wm).reshape(*e.shape[:-1], d_out, n_lab)
    lab = labels.reshape(*labels.shape[:-1], 1, n_lab)
    return (proj * lab).sum(axis=-1)


# ------------------------------------------------------------------------ losses
def huber(delta) -> Tensor:
    """Elementwise Huber loss with unit threshold, symmetric in ``|delta|``."""
    delta = as_tensor(delta)
    x = delta.data
    a = np.abs(x)
    inside = a <= 1.0
    out = np.where(inside, 0.5 * x * x, a - 0.5)
    return delta._unary(out, lambda: np.clip(x, -1.0, 1.0))


def huber_value(delta: float) -> float:
    a = abs(delta)
    return 0.5 * delta * delta if a <= 1.0 else a - 0.5


def mse(pred, target) -> Tensor:
    """Mean squared error over the row axis; returns one value per leading index."""
    diff = as_tensor(pred) - as_tensor(target)
    return diff.square().mean(axis=(-2, -1))


# -------------------------------------------------------------------- optimizers
def _check_finite(name: str, g: np.ndarray) -> None:
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite gradient for parameter {name!r}")


@dataclass
class SGD:
    learning_rate: float

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    kind = "sgd"

    def step(self, params: Params) -> None:
        for name, p in params.items():
            if p.grad is None:
                continue
            _check_finite(name, p.grad)
            p.data -= self.learning_rate * p.grad


@dataclass
class Adam:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict, repr=False)
    v: dict = field(default_factory=dict, repr=False)

    kind = "adam"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    def step(self, params: Params) -> None:
        for name, p in params.items():
            if p.grad is not None:
                _check_finite(name, p.grad)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def freeze(params: Params) -> Params:
    """Gradient-free views sharing the same storage."""
    return {k: Tensor(p.data) for k, p in params.items()}


def concat_features(*parts) -> Tensor:
    return concat([as_tensor(p) for p in parts], axis=-1)
