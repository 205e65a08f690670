"""The Neural Complexity network: a set function from a hypothesis' evaluations
on train and test rows to a scalar estimate of its generalization gap.

Regression pipeline, per snapshot::

    e_tr = f_enc([x_tr | h(x_tr)])            # [m, d]
    e_te = f_enc([x_te | h(x_te)])            # [m', d]
    a    = e_te + MHA(Q=e_te, K=e_tr, V=[e_tr | y_tr])
    NC   = mean_i f_dec(a)_i

The classification variant runs ``n_self`` residual self-attention layers over
``e_tr`` and builds the values with a bilinear layer over
``[y_tr | 1 | per-row train loss]``.

All forward passes take batches of snapshots with identical row counts
(leading axis ``B``) and return one estimate per snapshot.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import binio
from .errors import ContextError, DimensionError, FormatError, LabelFormatError
from .nn import (
    Adam,
    AttentionConfig,
    MlpConfig,
    Params,
    bilinear_forward,
    freeze,
    huber,
    init_bilinear,
    init_mha,
    init_mlp,
    mha_forward,
    mlp_forward,
)
from .tensor import Tensor, as_tensor, concat

CHECKPOINT_MAGIC = b"NCCKPT\x00\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NcRegressionConfig:
    input_dim: int = 1
    model_dim: int = 128
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    query_residual: bool = True
    value_layers: int = 0
    self_attention_layers: int = 0

    kind = "regression"

    def __post_init__(self):
        for name in ("input_dim", "model_dim", "enc_layers", "dec_layers", "heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.value_layers < 0 or self.self_attention_layers < 0:
            raise ValueError("value_layers and self_attention_layers must be >= 0")
        if self.self_attention_layers and not self.value_layers:
            raise ValueError("regression self-attention runs over value rows: set value_layers >= 1")

    @property
    def pred_dim(self) -> int:
        return 1

    @property
    def label_dim(self) -> int:
        return 1


@dataclass(frozen=True)
class NcClassificationConfig:
    input_dim: int = 2
    num_classes: int = 2
    model_dim: int = 128
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    self_attention_layers: int = 1
    query_residual: bool = True

    kind = "classification"

    def __post_init__(self):
        for name in ("input_dim", "model_dim", "enc_layers", "dec_layers", "heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.self_attention_layers < 0:
            raise ValueError("self_attention_layers must be >= 0")

    @property
    def pred_dim(self) -> int:
        return self.num_classes

    @property
    def label_dim(self) -> int:
        return self.num_classes


NcConfig = NcRegressionConfig | NcClassificationConfig


def config_from_dict(d: dict) -> NcConfig:
    d = dict(d)
    kind = d.pop("kind", "regression")
    cls = NcClassificationConfig if kind == "classification" else NcRegressionConfig
    return cls(**d)


def config_to_dict(cfg: NcConfig) -> dict:
    return {"kind": cfg.kind, **asdict(cfg)}


@dataclass
class HypothesisEval:
    """What NC observes about one hypothesis (or a batch of them).

    Fields are ``[m, ·]`` for a single snapshot or ``[B, m, ·]`` for a batch.
    Predictions may be live :class:`Tensor` objects so gradients reach the
    learner; everything else is treated as constant.
    """

    x_tr: object
    x_te: object
    y_tr: object
    pred_tr: object
    pred_te: object
    loss_tr: object = None

    @classmethod
    def stack(cls, evals: Sequence["HypothesisEval"]) -> "HypothesisEval":
        def st(name):
            vals = [getattr(e, name) for e in evals]
            if any(v is None for v in vals):
                return None
            return np.stack([np.asarray(v, dtype=np.float64) for v in vals])

        return cls(*(st(n) for n in ("x_tr", "x_te", "y_tr", "pred_tr", "pred_te", "loss_tr")))

    @property
    def batched(self) -> bool:
        return np.ndim(_raw(self.x_tr)) == 3


def _raw(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def per_row_cross_entropy(y_onehot, probs, eps: float = 1e-12) -> Tensor:
    """``-log p[y]`` for each row, shape ``[..., m, 1]``."""
    probs = as_tensor(probs)
    picked = (probs * as_tensor(y_onehot)).sum(axis=-1, keepdims=True)
    return -((picked + eps).log())


class NeuralComplexity:
    """Parameters plus forward/training logic for one NC network."""

    def __init__(self, config: NcConfig, seed: int | np.random.Generator = 0,
                 params: Params | None = None):
        self.config = config
        if params is None:
            rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
            params = self._init(rng)
        self.params: Params = params
        self._frozen = freeze(params)

    # ----------------------------------------------------------------- layout
    @property
    def enc_cfg(self) -> MlpConfig:
        c = self.config
        return MlpConfig(c.input_dim + c.pred_dim, (c.model_dim,) * (c.enc_layers - 1), c.model_dim)

    @property
    def dec_cfg(self) -> MlpConfig:
        c = self.config
        return MlpConfig(c.model_dim, (c.model_dim,) * (c.dec_layers - 1), 1)

    @property
    def val_cfg(self) -> MlpConfig | None:
        c = self.config
        if c.kind != "regression" or not c.value_layers:
            return None
        return MlpConfig(c.model_dim + 1, (c.model_dim,) * (c.value_layers - 1), c.model_dim)

    @property
    def cross_cfg(self) -> AttentionConfig:
        c = self.config
        vdim = c.model_dim + 1 if self.val_cfg is None and c.kind == "regression" else c.model_dim
        return AttentionConfig(c.model_dim, c.heads, value_dim=vdim)

    @property
    def self_cfg(self) -> AttentionConfig:
        c = self.config
        return AttentionConfig(c.model_dim, c.heads)

    def _init(self, rng: np.random.Generator) -> Params:
        c = self.config
        params = {}
        params.update(init_mlp(self.enc_cfg, rng, prefix="enc."))
        for i in range(c.self_attention_layers):
            params.update(init_mha(self.self_cfg, rng, prefix=f"self{i}."))
        if c.kind == "classification":
            params.update(init_bilinear(c.model_dim, c.model_dim, c.num_classes + 2, rng,
                                        prefix="bilinear."))
        if self.val_cfg is not None:
            params.update(init_mlp(self.val_cfg, rng, prefix="val."))
        params.update(init_mha(self.cross_cfg, rng, prefix="att."))
        params.update(init_mlp(self.dec_cfg, rng, prefix="dec."))
        return params

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    # ---------------------------------------------------------------- forward
    def forward(self, ev: HypothesisEval, frozen: bool = False) -> Tensor:
        """NC estimate per snapshot: shape ``[B]`` (batched) or ``()``."""
        params = self._frozen if frozen else self.params
        c = self.config
        single = not ev.batched
        x_tr, x_te, y_tr = (np.asarray(_raw(v), dtype=np.float64) for v in (ev.x_tr, ev.x_te, ev.y_tr))
        pred_tr, pred_te = as_tensor(ev.pred_tr), as_tensor(ev.pred_te)
        loss_tr = ev.loss_tr
        if single:
            x_tr, x_te, y_tr = x_tr[None], x_te[None], y_tr[None]
            pred_tr = pred_tr.reshape(1, *pred_tr.shape)
            pred_te = pred_te.reshape(1, *pred_te.shape)
            if loss_tr is not None:
                loss_tr = as_tensor(loss_tr)
                loss_tr = loss_tr.reshape(1, *loss_tr.shape)
        self._check(x_tr, x_te, y_tr, pred_tr, pred_te)

        e_tr = mlp_forward(self.enc_cfg, params, concat([Tensor(x_tr), pred_tr]), prefix="enc.")
        e_te = mlp_forward(self.enc_cfg, params, concat([Tensor(x_te), pred_te]), prefix="enc.")

        if c.kind == "regression":
            values = concat([e_tr, Tensor(y_tr)])
            if self.val_cfg is not None:
                # row-wise interaction of embedding and label before pooling
                values = mlp_forward(self.val_cfg, params, values, prefix="val.")
                for i in range(c.self_attention_layers):
                    values = values + mha_forward(self.self_cfg, params, values, values, values,
                                                  prefix=f"self{i}.")
        else:
            if np.max(np.abs(y_tr.sum(-1) - 1.0)) > 1e-9 or np.any(
                np.abs(y_tr * (1.0 - y_tr)) > 1e-9
            ):
                raise LabelFormatError("classification labels must be one-hot rows")
            for i in range(c.self_attention_layers):
                e_tr = e_tr + mha_forward(self.self_cfg, params, e_tr, e_tr, e_tr, prefix=f"self{i}.")
            if loss_tr is None:
                loss_tr = per_row_cross_entropy(y_tr, pred_tr)
            ones = np.ones(y_tr.shape[:-1] + (1,))
            aug = concat([Tensor(y_tr), Tensor(ones), as_tensor(loss_tr)])
            values = bilinear_forward(params["bilinear.W"], e_tr, aug)

        att = mha_forward(self.cross_cfg, params, e_te, e_tr, values, prefix="att.")
        if c.query_residual:
            att = e_te + att
        out = mlp_forward(self.dec_cfg, params, att, prefix="dec.").mean(axis=(-2, -1))
        return out.reshape(()) if single else out

    __call__ = forward

    def _check(self, x_tr, x_te, y_tr, pred_tr, pred_te):
        c = self.config
        if x_tr.shape[1] == 0 or x_te.shape[1] == 0:
            raise ContextError("NC needs at least one train row and one test row")
        if x_tr.shape[-1] != c.input_dim or x_te.shape[-1] != c.input_dim:
            raise DimensionError(
                f"NC expects inputs of width {c.input_dim}, got {x_tr.shape} and {x_te.shape}"
            )
        if pred_tr.shape[:-1] != x_tr.shape[:-1] or pred_te.shape[:-1] != x_te.shape[:-1]:
            raise DimensionError(
                f"prediction rows {pred_tr.shape}/{pred_te.shape} do not match inputs "
                f"{x_tr.shape}/{x_te.shape}"
            )
        if pred_tr.shape[-1] != c.pred_dim or y_tr.shape[-1] != c.label_dim:
            raise DimensionError(
                f"expected prediction width {c.pred_dim} and label width {c.label_dim}, "
                f"got {pred_tr.shape} and {y_tr.shape}"
            )

    def predict(self, ev: HypothesisEval) -> np.ndarray:
        return np.array(self.forward(ev, frozen=True).data)

    def predict_clipped(self, ev: HypothesisEval, floor: float = -0.1) -> np.ndarray:
        return nc_predict_clipped(self, ev, floor)

    def frozen(self):
        """Callable for task learners: gradients flow to predictions only."""
        return lambda ev: self.forward(ev, frozen=True)

    # --------------------------------------------------------------- training
    def train_step(self, ev: HypothesisEval, gaps, optimizer: Adam) -> float:
        return nc_training_step(self, ev, gaps, optimizer)

    # ----------------------------------------------------------- persistence
    def save(self, path, extra: dict | None = None) -> None:
        names = sorted(self.params)
        header = {"config": config_to_dict(self.config), "extra": extra or {}}
        blob = binio.encode(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, header,
                            [(n, self.params[n].data) for n in names])
        binio.write_atomic(path, blob)

    @classmethod
    def load(cls, path) -> "NeuralComplexity":
        header, arrays = binio.decode(binio.read_bytes(path), CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        cfg = config_from_dict(header["config"])
        model = cls(cfg, seed=0)
        if set(arrays) != set(model.params):
            raise FormatError("checkpoint parameters do not match its config")
        for name, arr in arrays.items():
            if arr.shape != model.params[name].shape:
                raise FormatError(f"parameter {name!r} has shape {arr.shape}")
            model.params[name].data[...] = arr
        model.extra = header.get("extra", {})
        return model


def nc_training_step(model: NeuralComplexity, ev: HypothesisEval, gaps, optimizer: Adam) -> float:
    """One Adam step on the mean Huber loss of ``gap - NC``; returns the pre-step loss."""
    gaps = np.asarray(gaps, dtype=np.float64).reshape(-1)
    for p in model.params.values():
        p.grad = None
    est = model.forward(ev)
    delta = Tensor(gaps) - est.reshape(-1)
    loss = huber(delta).mean()
    loss.backward()
    optimizer.step(model.params)
    return loss.item()


def nc_predict_clipped(model: NeuralComplexity, ev: HypothesisEval, floor: float = -0.1) -> np.ndarray:
    """``max(NC, floor)``: used when NC regularizes a final single-task learner."""
    return np.maximum(model.predict(ev), floor)
