"""Task learners: SGD-trained MLPs with an optional NC regularizer, plus the
closed-form nearest-neighbor and constant learners used as out-of-distribution
probes.

MLP learners are vectorized over tasks: ``train_regularized`` accepts a list
of equally-shaped tasks and trains one independent network per task inside a
single graph.  The summed loss keeps every task's gradient separate, so a task
trained in a group follows the same update rule as one trained alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bank import Snapshot
from .errors import ContractError, NumericError
from .model import HypothesisEval
from .nn import MlpConfig, init_mlp, mlp_forward
from .tasks import TaskBatch
from .tensor import Tensor

_EPS = 1e-12


@dataclass(frozen=True)
class LearnerConfig:
    kind: str = "mlp"
    hidden_dims: tuple = (40, 40)
    activation: str = "relu"
    learning_rate: float = 0.01
    steps: int = 16
    loss: str = "mse"
    init: str = "fan_in"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.kind not in ("mlp", "nearest_neighbor", "constant"):
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.loss not in ("mse", "cross_entropy"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.kind == "mlp" and self.steps < 1:
            raise ValueError("an MLP learner needs steps >= 1")

    @classmethod
    def mlp(cls, width: int = 40, depth: int = 2, activation: str = "relu",
            learning_rate: float = 0.01, steps: int = 16, loss: str = "mse",
            init: str = "fan_in") -> "LearnerConfig":
        return cls("mlp", (width,) * depth, activation, learning_rate, steps, loss, init)

    def mlp_config(self, input_dim: int, output_dim: int) -> MlpConfig:
        return MlpConfig(input_dim, self.hidden_dims, output_dim, self.activation)

    def describe(self) -> dict:
        return {"kind": self.kind, "hidden_dims": list(self.hidden_dims),
                "activation": self.activation, "learning_rate": self.learning_rate}


@dataclass(frozen=True)
class LambdaSchedule:
    warmup_episodes: int = 1000

    def __post_init__(self):
        if self.warmup_episodes < 0:
            raise ValueError("warmup_episodes must be >= 0")

    def at(self, episode: int) -> float:
        return lambda_at(self, episode)


def lambda_at(schedule: LambdaSchedule, episode: int) -> float:
    """Linear ramp from 0 at episode 0 to 1 at ``warmup_episodes``."""
    if episode < 0:
        raise ContractError("episode must be >= 0")
    if schedule.warmup_episodes == 0:
        return 1.0
    return min(episode / schedule.warmup_episodes, 1.0)


# ------------------------------------------------------------------ losses
def per_row_loss(pred: np.ndarray, y: np.ndarray, loss: str) -> np.ndarray:
    """Loss of each row (trailing axis reduced), predictions as NC sees them."""
    if loss == "mse":
        return ((pred - y) ** 2).sum(axis=-1)
    return -np.log((pred * y).sum(axis=-1) + _EPS)


def mean_loss(pred: np.ndarray, y: np.ndarray, loss: str) -> np.ndarray:
    return per_row_loss(pred, y, loss).mean(axis=-1)


def gap(hypothesis, task: TaskBatch, loss: str | None = None) -> float:
    """Test-split mean loss minus train-split mean loss."""
    if task.m < 1 or task.m_test < 1:
        raise ContractError("gap needs nonempty train and test splits")
    loss = loss or ("cross_entropy" if task.kind == "classification" else "mse")
    tr = mean_loss(hypothesis.predict(task.x_tr), task.y_tr, loss)
    te = mean_loss(hypothesis.predict(task.x_te), task.y_te, loss)
    return float(te - tr)


# -------------------------------------------------------------- hypotheses
@dataclass
class MlpHypothesis:
    config: MlpConfig
    params: dict
    classification: bool = False

    def predict(self, x) -> np.ndarray:
        out = mlp_forward(self.config, {k: Tensor(v) for k, v in self.params.items()},
                          np.asarray(x, dtype=np.float64)).data
        if self.classification:
            z = np.exp(out - out.max(axis=-1, keepdims=True))
            return z / z.sum(axis=-1, keepdims=True)
        return out


@dataclass
class NearestNeighbor:
    x: np.ndarray
    y: np.ndarray

    def predict(self, x) -> np.ndarray:
        return nearest_neighbor_predict(self.x, self.y, x)


@dataclass
class ConstantPredictor:
    value: np.ndarray

    def predict(self, x) -> np.ndarray:
        return np.broadcast_to(self.value, (len(x), len(self.value))).copy()


def nearest_neighbor_predict(x_train, y_train, x_query) -> np.ndarray:
    """Label of the Euclidean-nearest train row; ties go to the lowest index."""
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    x_query = np.atleast_2d(np.asarray(x_query, dtype=np.float64))
    if len(x_train) < 1:
        raise ContractError("nearest neighbor needs at least one train point")
    d2 = ((x_query[:, None, :] - x_train[None, :, :]) ** 2).sum(axis=-1)
    return y_train[np.argmin(d2, axis=1)]


def constant_predict(x_train, y_train) -> ConstantPredictor:
    y_train = np.asarray(y_train, dtype=np.float64)
    if len(y_train) < 1:
        raise ContractError("constant predictor needs a nonempty train set")
    return ConstantPredictor(y_train.mean(axis=0))


def fit_closed_form(learner: LearnerConfig, task: TaskBatch):
    if learner.kind == "nearest_neighbor":
        return NearestNeighbor(task.x_tr, task.y_tr)
    if learner.kind == "constant":
        return constant_predict(task.x_tr, task.y_tr)
    raise ContractError(f"{learner.kind} is not a closed-form learner")


def make_snapshot(task: TaskBatch, pred_tr, pred_te, loss: str, task_id: int = 0, step: int = 0,
                  meta: dict | None = None) -> Snapshot:
    pred_tr = np.asarray(pred_tr, dtype=np.float64)
    pred_te = np.asarray(pred_te, dtype=np.float64)
    tr = float(mean_loss(pred_tr, task.y_tr, loss))
    te = float(mean_loss(pred_te, task.y_te, loss))
    loss_tr = per_row_loss(pred_tr, task.y_tr, loss)[:, None] if loss == "cross_entropy" else None
    index_stored = task.train_idx is not None and task.test_idx is not None
    return Snapshot(
        task_id=task_id, step=step, y_tr=task.y_tr, pred_tr=pred_tr, pred_te=pred_te,
        gap=te - tr, train_loss=tr, test_loss=te, loss_tr=loss_tr,
        x_tr=None if index_stored else task.x_tr, x_te=None if index_stored else task.x_te,
        train_idx=task.train_idx if index_stored else None,
        test_idx=task.test_idx if index_stored else None,
        meta=dict(meta or {}, step=step, val_size=task.m_test),
    )


def closed_form_snapshot(learner: LearnerConfig, task: TaskBatch, task_id: int = 0) -> Snapshot:
    h = fit_closed_form(learner, task)
    loss = "cross_entropy" if task.kind == "classification" else "mse"
    return make_snapshot(task, h.predict(task.x_tr), h.predict(task.x_te), loss, task_id,
                         meta={"kind": learner.kind})


# ---------------------------------------------------------------- training
@dataclass
class TrainResult:
    """Outcome of training one group of tasks.

    ``train_loss``, ``test_loss`` and ``nc_value`` are ``[T, steps + 1]``:
    column ``s`` is measured after ``s`` gradient steps.
    """

    config: MlpConfig
    params: dict
    train_loss: np.ndarray
    test_loss: np.ndarray
    nc_value: np.ndarray
    snapshots: list = field(default_factory=list)
    classification: bool = False

    @property
    def gap(self) -> np.ndarray:
        return self.test_loss - self.train_loss

    def hypothesis(self, i: int = 0) -> MlpHypothesis:
        return MlpHypothesis(self.config, {k: v[i].copy() for k, v in self.params.items()},
                             self.classification)


NcFn = Callable[[HypothesisEval], Tensor]


def _stack(tasks, name):
    return np.stack([np.asarray(getattr(t, name), dtype=np.float64) for t in tasks])


def train_regularized(learner: LearnerConfig, task: TaskBatch | Sequence[TaskBatch],
                      nc: NcFn | None = None, lam=0.0, rng: np.random.Generator | None = None,
                      penalty: str | None = None, penalty_weight: float = 0.0,
                      snapshot_every: int | None = 1, clip_floor: float | None = None,
                      task_ids: Sequence[int] | None = None, nc_eval: bool = True) -> TrainResult:
    """Full-batch gradient descent on ``train_loss + lam * NC(h) [+ penalty]``.

    ``nc`` maps a (batched) :class:`HypothesisEval` to per-task estimates and is
    treated as frozen; its gradient reaches the learner through the train and
    test predictions only.  ``lam`` may be a scalar or one value per task.
    ``snapshot_every=None`` disables snapshot collection.
    """
    if learner.kind != "mlp":
        raise ContractError("train_regularized trains MLP learners; use fit_closed_form")
    tasks = [task] if isinstance(task, TaskBatch) else list(task)
    T = len(tasks)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (T,)).copy()
    if np.any(lam < 0):
        raise ContractError("lam must be >= 0")
    if np.any(lam > 0) and nc is None:
        raise ContractError("lam > 0 needs an NC model")
    rng = rng if rng is not None else np.random.default_rng(0)
    classification = learner.loss == "cross_entropy"

    x_tr, x_te = _stack(tasks, "x_tr"), _stack(tasks, "x_te")
    y_tr, y_te = _stack(tasks, "y_tr"), _stack(tasks, "y_te")
    cfg = learner.mlp_config(x_tr.shape[-1], y_tr.shape[-1])
    params = init_mlp(cfg, rng, batch=(T,), init=learner.init)
    weights = [p for k, p in params.items() if k.endswith(".W")]
    steps = learner.steps
    lr = learner.learning_rate
    regularize = nc is not None and bool(np.any(lam > 0))
    lam_t = Tensor(lam)
    ids = list(task_ids) if task_ids is not None else list(range(T))

    tr_hist = np.full((T, steps + 1), np.nan)
    te_hist = np.full((T, steps + 1), np.nan)
    nc_hist = np.full((T, steps + 1), np.nan)
    snapshots = []
    Ytr = Tensor(y_tr)

    for s in range(steps + 1):
        for p in params.values():
            p.grad = None
        out_tr = mlp_forward(cfg, params, x_tr)
        out_te = mlp_forward(cfg, params, x_te)
        if classification:
            logp_tr = out_tr.log_softmax(axis=-1)
            row_loss = -(logp_tr * Ytr).sum(axis=-1, keepdims=True)
            pred_tr, pred_te = logp_tr.exp(), out_te.softmax(axis=-1)
            train_loss = row_loss.mean(axis=(-2, -1))
        else:
            row_loss = None
            pred_tr, pred_te = out_tr, out_te
            train_loss = (out_tr - Ytr).square().mean(axis=(-2, -1))
        te_np = mean_loss(pred_te.data, y_te, learner.loss)
        tr_hist[:, s] = train_loss.data
        te_hist[:, s] = te_np

        nc_val = None
        if nc is not None and (regularize or nc_eval):
            live = regularize and s < steps
            ev = HypothesisEval(x_tr, x_te, y_tr,
                                pred_tr if live else pred_tr.detach(),
                                pred_te if live else pred_te.detach(),
                                None if row_loss is None else (row_loss if live else row_loss.detach()))
            nc_val = nc(ev)
            nc_hist[:, s] = nc_val.data

        if snapshot_every is not None and (s % snapshot_every == 0 or s == steps):
            meta = learner.describe()
            for i, t in enumerate(tasks):
                snap = make_snapshot(t, pred_tr.data[i], pred_te.data[i], learner.loss,
                                     task_id=ids[i], step=s, meta=meta)
                snapshots.append(snap)

        if s == steps:
            break
        total = train_loss.sum()
        if regularize:
            reg = nc_val if clip_floor is None else nc_val.clip_min(clip_floor)
            total = total + (reg * lam_t).sum()
        if penalty and penalty_weight:
            pen = None
            for W in weights:
                term = W.square() if penalty == "l2" else W.abs()
                term = term.sum(axis=(-2, -1))
                pen = term if pen is None else pen + term
            total = total + pen.sum() * penalty_weight
        if not np.isfinite(total.data).all():
            raise NumericError(f"learner loss became non-finite at step {s}")
        total.backward()
        for name, p in params.items():
            if not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient for {name!r} at step {s}")
            p.data -= lr * p.grad

    return TrainResult(cfg, {k: v.data.copy() for k, v in params.items()}, tr_hist, te_hist,
                       nc_hist, snapshots, classification)


# ------------------------------------------------------- single-task training
@dataclass
class MinibatchResult:
    hypothesis: MlpHypothesis
    history: list

    @property
    def final(self) -> dict:
        return self.history[-1]


def _accuracy(pred: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(pred.argmax(axis=-1) == y.argmax(axis=-1)))


def train_minibatch(learner: LearnerConfig, x_train, y_train, x_test, y_test, steps: int,
                    batch_size: int, rng: np.random.Generator, nc: NcFn | None = None,
                    lam: Callable[[int], float] | float = 0.0, clip_floor: float | None = None,
                    eval_every: int = 20) -> MinibatchResult:
    """Minibatch SGD on one fixed training set, optionally NC-regularized.

    Each step NC sees the labelled minibatch as its train side and a second,
    disjoint minibatch of training inputs as its unlabelled query side; the
    held-out ``x_test`` is used only for evaluation.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    n = len(x_train)
    if 2 * batch_size > n:
        raise ContractError(f"{n} training rows cannot supply two disjoint batches of {batch_size}")
    classification = learner.loss == "cross_entropy"
    cfg = learner.mlp_config(x_train.shape[-1], y_train.shape[-1])
    params = init_mlp(cfg, rng, init=learner.init)
    lam_fn = lam if callable(lam) else (lambda s, v=float(lam): v)
    history = []

    def evaluate(step, nc_value, lam_value):
        hyp = MlpHypothesis(cfg, {k: v.data.copy() for k, v in params.items()}, classification)
        p_tr, p_te = hyp.predict(x_train), hyp.predict(x_test)
        tr = float(mean_loss(p_tr, y_train, learner.loss))
        te = float(mean_loss(p_te, y_test, learner.loss))
        row = {"step": step, "train_loss": tr, "test_loss": te, "gap": te - tr,
               "nc_estimate": nc_value, "lambda": lam_value}
        if classification:
            row["train_accuracy"] = _accuracy(p_tr, y_train)
            row["test_accuracy"] = _accuracy(p_te, y_test)
        history.append(row)

    nc_value = None
    for s in range(steps + 1):
        lam_s = float(lam_fn(s))
        if s % eval_every == 0 or s == steps:
            evaluate(s, nc_value, lam_s)
        if s == steps:
            break
        perm = rng.permutation(n)
        bi, qi = perm[:batch_size], perm[batch_size:2 * batch_size]
        for p in params.values():
            p.grad = None
        xb, yb = x_train[bi], y_train[bi]
        out = mlp_forward(cfg, params, xb)
        if classification:
            logp = out.log_softmax(axis=-1)
            row_loss = -(logp * Tensor(yb)).sum(axis=-1, keepdims=True)
            pred_b = logp.exp()
        else:
            row_loss = (out - Tensor(yb)).square().sum(axis=-1, keepdims=True)
            pred_b = out
        total = row_loss.mean()
        if nc is not None and lam_s > 0:
            out_q = mlp_forward(cfg, params, x_train[qi])
            pred_q = out_q.softmax(axis=-1) if classification else out_q
            est = nc(HypothesisEval(xb, x_train[qi], yb, pred_b, pred_q,
                                    row_loss if classification else None))
            nc_value = float(est.data)
            reg = est if clip_floor is None else est.clip_min(clip_floor)
            total = total + reg * lam_s
        if not np.isfinite(total.data).all():
            raise NumericError(f"learner loss became non-finite at step {s}")
        total.backward()
        for name, p in params.items():
            if not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient for {name!r} at step {s}")
            p.data -= learner.learning_rate * p.grad
    hyp = MlpHypothesis(cfg, {k: v.data.copy() for k, v in params.items()}, classification)
    return MinibatchResult(hyp, history)
