"""Experiment drivers behind the CLI subcommands.

Every driver is a plain function of an :class:`ExperimentConfig` (plus a
trained NC where one is needed) and returns an in-memory result; passing
``out`` also writes metrics streams, checkpoints and summaries there.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..bank import MemoryBank, Snapshot
from ..bound import BoundReport, compute_bound, epsilon_for_target
from ..errors import ContractError, InfeasibleError, NumericError
from ..learners import (
    LearnerConfig,
    TrainResult,
    closed_form_snapshot,
    lambda_at,
    train_minibatch,
    train_regularized,
)
from ..model import HypothesisEval, NcClassificationConfig, NeuralComplexity
from ..nn import Adam
from ..tensor import Tensor
from ..tasks import (
    Dataset,
    SplitProtocol,
    load_dataset,
    make_gaussian_classification_dataset,
    one_hot,
    sample_sinusoid_tasks,
    sample_subtask,
    sample_synthetic_classification_task,
    standardize,
)
from .config import ExperimentConfig, save_config
from .metrics import MetricsWriter, write_json


# ------------------------------------------------------------------- helpers
def _rngs(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def learner_for(cfg: ExperimentConfig) -> LearnerConfig:
    learner = cfg.learner
    if cfg.task.kind == "classification" and learner.loss != "cross_entropy":
        learner = replace(learner, loss="cross_entropy")
    return learner


def sample_tasks(cfg: ExperimentConfig, rng: np.random.Generator, n: int):
    t = cfg.task
    if t.kind == "sinusoid":
        return sample_sinusoid_tasks(rng, n, t.m, t.m_test, zero_labels=t.zero_labels)
    return [sample_synthetic_classification_task(rng, t.num_classes, t.m, t.m_test,
                                                 t.input_dim, t.sigma) for _ in range(n)]


def new_nc(cfg: ExperimentConfig) -> NeuralComplexity:
    nc_cfg = cfg.nc
    if cfg.task.kind == "classification" and nc_cfg.kind != "classification":
        raise ContractError("classification tasks need a classification NC config")
    return NeuralComplexity(nc_cfg, seed=cfg.seed)


def snapshot_evals(snaps, dataset: Dataset | None = None) -> HypothesisEval:
    """Stack equally shaped snapshots into one batched evaluation."""
    evs = []
    for s in snaps:
        x_tr, x_te = s.resolve(dataset)
        evs.append(HypothesisEval(x_tr, x_te, s.y_tr, s.pred_tr, s.pred_te, s.loss_tr))
    return HypothesisEval.stack(evs)


def predict_snapshots(nc: NeuralComplexity, snaps, dataset: Dataset | None = None,
                      chunk: int = 512) -> np.ndarray:
    """NC estimates for arbitrary snapshots, grouped by shape for batching."""
    out = np.empty(len(snaps))
    groups: dict = {}
    for i, s in enumerate(snaps):
        groups.setdefault(s.shape_key(), []).append(i)
    for idx in groups.values():
        for j in range(0, len(idx), chunk):
            part = idx[j:j + chunk]
            out[part] = nc.predict(snapshot_evals([snaps[i] for i in part], dataset))
    return out


def meta_step(nc: NeuralComplexity, bank: MemoryBank, optimizer: Adam, batch_size: int,
              rng: np.random.Generator, dataset: Dataset | None = None) -> float:
    snaps = bank.sample_batch(batch_size, rng)
    return nc.train_step(snapshot_evals(snaps, dataset), [s.gap for s in snaps], optimizer)


# -------------------------------------------------------------- gap fitting
@dataclass
class GapFit:
    r2: float
    mae: float
    n: int
    predictions: np.ndarray = field(repr=False)
    gaps: np.ndarray = field(repr=False)

    def to_record(self) -> dict:
        return {"r2": self.r2, "mae": self.mae, "n": self.n}


def gap_fit_stats(predictions, gaps) -> tuple[float, float]:
    """``(R^2, MAE)`` of predictions against observed gaps."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    g = np.asarray(gaps, dtype=np.float64).ravel()
    if p.shape != g.shape or g.size < 2:
        raise ContractError("need at least two aligned (prediction, gap) pairs")
    ss_tot = float(np.sum((g - g.mean()) ** 2))
    if ss_tot == 0.0:
        raise ContractError("R^2 is undefined: the gaps have zero variance")
    ss_res = float(np.sum((g - p) ** 2))
    return 1.0 - ss_res / ss_tot, float(np.mean(np.abs(g - p)))


def evaluate_gap_fit(nc: NeuralComplexity, snapshots, dataset: Dataset | None = None) -> GapFit:
    gaps = np.array([s.gap for s in snapshots], dtype=np.float64)
    pred = predict_snapshots(nc, snapshots, dataset)
    r2, mae = gap_fit_stats(pred, gaps)
    return GapFit(r2, mae, len(snapshots), pred, gaps)


def heldout_run(cfg: ExperimentConfig, nc: NeuralComplexity | None, n_tasks: int, seed: int,
                lam: float, learner: LearnerConfig | None = None) -> TrainResult:
    """Train learners on fresh tasks, regularized by ``nc`` with weight ``lam``."""
    task_rng, init_rng = _rngs(seed, 2)
    tasks = sample_tasks(cfg, task_rng, n_tasks)
    learner = learner or learner_for(cfg)
    return train_regularized(learner, tasks, None if nc is None else nc.frozen(),
                             lam=lam if nc is not None else 0.0, rng=init_rng,
                             snapshot_every=cfg.budget.snapshot_every, clip_floor=cfg.clip_floor)


def _heldout_seed(cfg: ExperimentConfig, k: int) -> int:
    return cfg.seed + cfg.eval.seed_offset * (k + 1)


def gap_fit_report(cfg: ExperimentConfig, nc: NeuralComplexity,
                   bank: MemoryBank | None = None) -> dict:
    """Held-out fit on NC-regularized and unregularized trajectories, plus the
    fit on the newest training snapshots when a bank is given."""
    seed = _heldout_seed(cfg, 0)
    n = cfg.eval.heldout_tasks
    reg = heldout_run(cfg, nc, n, seed, cfg.eval.lam)
    base = heldout_run(cfg, nc, n, seed, 0.0)
    report = {
        "heldout_regularized": evaluate_gap_fit(nc, reg.snapshots).to_record(),
        "heldout_baseline": evaluate_gap_fit(nc, base.snapshots).to_record(),
    }
    if bank is not None and len(bank) >= 2:
        recent = list(bank)[-len(reg.snapshots):]
        report["training"] = evaluate_gap_fit(nc, recent).to_record()
    return report


# ------------------------------------------------------------ meta-training
@dataclass
class MetaTrainingResult:
    nc: NeuralComplexity
    bank: MemoryBank
    rows: list
    episodes: int
    meta_steps: int
    wall_seconds: float
    fit: dict = field(default_factory=dict)


def _frozen_copy(nc: NeuralComplexity) -> NeuralComplexity:
    return NeuralComplexity(nc.config, params={k: Tensor(v.data.copy()) for k, v in nc.params.items()})


def run_meta_training(cfg: ExperimentConfig, out=None, nc: NeuralComplexity | None = None,
                      workers: int = 1, evaluate: bool = False, log=None) -> MetaTrainingResult:
    """Interleave task learning (with the current NC as regularizer) and NC
    meta-updates on replayed snapshots.

    Episodes are processed in rounds of ``budget.tasks_per_round`` tasks that
    are trained side by side; each round's snapshots enter the bank before any
    meta-step samples from it, after which ``steps_per_episode`` meta-steps per
    episode are taken.  ``workers=2`` runs task learning and meta-training on
    separate threads (faster on multi-core hosts, not reproducible).
    """
    if workers not in (1, 2):
        raise ValueError("workers must be 1 or 2")
    out = Path(out) if out is not None else None
    nc = nc or new_nc(cfg)
    bank = MemoryBank(cfg.bank)
    optimizer = Adam(cfg.meta_optimizer.learning_rate)
    learner = learner_for(cfg)
    writer = MetricsWriter(out)
    if out is not None:
        save_config(cfg, out / "config.json")
    t0 = time.perf_counter()
    try:
        if workers == 1:
            meta_steps = _interleaved(cfg, nc, bank, optimizer, learner, writer, out, log)
        else:
            meta_steps = _two_worker(cfg, nc, bank, optimizer, learner, writer, log)
    finally:
        writer.close()
    wall = time.perf_counter() - t0
    result = MetaTrainingResult(nc, bank, writer.rows, cfg.budget.episodes, meta_steps, wall)
    if out is not None:
        nc.save(out / "nc.ckpt", extra={"episodes": cfg.budget.episodes, "meta_steps": meta_steps})
        if cfg.bank.path:
            bank.persist(cfg.bank.path)
    if evaluate and cfg.budget.episodes > 0:
        result.fit = gap_fit_report(cfg, nc, bank)
    if out is not None:
        write_json(out / "run_info.json", {"wall_seconds": wall, "meta_steps": meta_steps,
                                           "episodes": cfg.budget.episodes, "fit": result.fit})
    return result


def _episode_rows(writer, r: TrainResult, e0: int, lam, losses, steps: int):
    chunks = np.array_split(np.asarray(losses, dtype=np.float64), len(lam))
    for i in range(len(lam)):
        tr, te = float(r.train_loss[i, steps]), float(r.test_loss[i, steps])
        est = float(r.nc_value[i, steps])
        writer.write(episode=e0 + i, step=steps, train_loss=tr, test_loss=te, gap=te - tr,
                     nc_estimate=est, meta_loss=float(chunks[i].mean()) if chunks[i].size else None,
                     **{"lambda": float(lam[i])})


def _learning_round(cfg, nc_view, learner, rng_task, rng_init, e0: int, T: int):
    lam = np.array([lambda_at(cfg.lambda_schedule, e0 + i) for i in range(T)])
    tasks = sample_tasks(cfg, rng_task, T)
    try:
        r = train_regularized(learner, tasks, nc_view.frozen(), lam=lam, rng=rng_init,
                              snapshot_every=cfg.budget.snapshot_every,
                              task_ids=range(e0, e0 + T), clip_floor=cfg.clip_floor)
    except NumericError as err:
        raise NumericError(f"task learning failed in episodes {e0}..{e0 + T - 1}: {err}") from err
    return r, lam


def _interleaved(cfg, nc, bank, optimizer, learner, writer, out, log) -> int:
    rng_task, rng_init, rng_meta = _rngs(cfg.seed, 3)
    budget, meta = cfg.budget, cfg.meta_optimizer
    e, owed, total = 0, 0.0, 0
    next_ckpt = budget.checkpoint_every or None
    while e < budget.episodes:
        T = min(budget.tasks_per_round, budget.episodes - e)
        r, lam = _learning_round(cfg, nc, learner, rng_task, rng_init, e, T)
        bank.extend(r.snapshots)
        owed += meta.steps_per_episode * T
        n_steps = int(owed)
        owed -= n_steps
        losses = []
        for _ in range(n_steps):
            try:
                losses.append(meta_step(nc, bank, optimizer, meta.batch_size, rng_meta))
            except NumericError as err:
                raise NumericError(f"meta-training failed after episode {e + T - 1}: {err}") from err
        total += n_steps
        _episode_rows(writer, r, e, lam, losses, learner.steps)
        e += T
        if log is not None:
            log(f"episode {e}/{budget.episodes} meta_loss "
                f"{np.mean(losses) if losses else float('nan'):.4f}")
        if out is not None and next_ckpt is not None and e >= next_ckpt:
            nc.save(out / "checkpoints" / f"nc_{e:06d}.ckpt", extra={"episodes": e})
            while next_ckpt <= e:
                next_ckpt += budget.checkpoint_every
    return total


def _two_worker(cfg, nc, bank, optimizer, learner, writer, log) -> int:
    rng_task, rng_init, rng_meta = _rngs(cfg.seed, 3)
    budget, meta = cfg.budget, cfg.meta_optimizer
    target = int(meta.steps_per_episode * budget.episodes)
    lock = threading.Lock()
    done = threading.Event()
    errors: list = []
    losses: list = []
    progress = {"steps": 0}

    def consumer():
        try:
            while progress["steps"] < target:
                if len(bank) == 0:
                    if done.is_set():
                        return
                    time.sleep(0.001)
                    continue
                snaps = bank.sample_batch(meta.batch_size, rng_meta)
                ev = snapshot_evals(snaps)
                with lock:
                    loss = nc.train_step(ev, [s.gap for s in snaps], optimizer)
                losses.append(loss)
                progress["steps"] += 1
        except Exception as err:  # surfaced in the main thread
            errors.append(err)

    worker = threading.Thread(target=consumer, name="nc-meta", daemon=True)
    worker.start()
    e, seen = 0, 0
    try:
        while e < budget.episodes and not errors:
            T = min(budget.tasks_per_round, budget.episodes - e)
            with lock:
                view = _frozen_copy(nc)
            r, lam = _learning_round(cfg, view, learner, rng_task, rng_init, e, T)
            bank.extend(r.snapshots)
            batch, seen = losses[seen:], len(losses)
            _episode_rows(writer, r, e, lam, batch, learner.steps)
            e += T
            if log is not None:
                log(f"episode {e}/{budget.episodes} meta_steps {progress['steps']}")
    finally:
        done.set()
        worker.join()
    if errors:
        raise errors[0]
    return progress["steps"]


# ----------------------------------------------------- regularizer comparison
@dataclass
class ComparisonTable:
    steps: tuple
    rows: list

    def value(self, method: str, weight: float | None, step: int) -> float:
        for r in self.rows:
            if r["method"] == method and (weight is None or r["weight"] == weight):
                return r["test_loss"][str(step)]
        raise KeyError((method, weight))

    def format(self) -> str:
        head = f"{'method':<8}{'weight':>8}" + "".join(f"{s:>10}" for s in self.steps)
        lines = [head, "-" * len(head)]
        for r in self.rows:
            w = "" if r["weight"] is None else f"{r['weight']:g}"
            vals = "".join(f"{r['test_loss'][str(s)]:>10.4f}" for s in self.steps)
            lines.append(f"{r['method']:<8}{w:>8}{vals}")
        return "\n".join(lines)


def run_regularizer_comparison(cfg: ExperimentConfig, nc: NeuralComplexity, out=None) -> ComparisonTable:
    """Mean test loss at selected steps for no regularizer, L2, L1 and NC.

    All methods share the same tasks and initializations, so differences are
    due to the regularizer alone.
    """
    comp = cfg.comparison
    steps = tuple(int(s) for s in comp.eval_steps)
    learner = replace(learner_for(cfg), steps=max(max(steps), 1))
    seed = _heldout_seed(cfg, 1)
    tasks = sample_tasks(cfg, _rngs(seed, 1)[0], comp.tasks)
    init_seed = seed + 1
    methods = [("none", None)]
    methods += [("l2", float(w)) for w in comp.penalty_weights]
    methods += [("l1", float(w)) for w in comp.penalty_weights]
    methods.append(("nc", float(cfg.eval.lam)))
    rows = []
    for method, w in methods:
        rng = np.random.default_rng(init_seed)
        if method == "nc":
            r = train_regularized(learner, tasks, nc.frozen(), lam=w, rng=rng,
                                  snapshot_every=None, nc_eval=False, clip_floor=cfg.clip_floor)
        else:
            r = train_regularized(learner, tasks, None, rng=rng, penalty=None if method == "none" else method,
                                  penalty_weight=w or 0.0, snapshot_every=None)
        rows.append({"method": method, "weight": w,
                     "test_loss": {str(s): float(r.test_loss[:, s].mean()) for s in steps}})
    table = ComparisonTable(steps, rows)
    if out is not None:
        out = Path(out)
        write_json(out / "comparison.json", {"steps": list(steps), "tasks": comp.tasks, "rows": rows})
        (out / "comparison.txt").write_text(table.format() + "\n")
    return table


# ------------------------------------------------------------------ OOD sweep
def ood_variants(cfg: ExperimentConfig) -> list[tuple[str, LearnerConfig]]:
    """Reference learner, one-axis-at-a-time variants, then closed-form learners."""
    ref = learner_for(cfg)
    width = ref.hidden_dims[0] if ref.hidden_dims else 40
    depth = len(ref.hidden_dims)
    o = cfg.ood
    variants = [("reference", ref)]
    for a in o.activations:
        if a != ref.activation:
            variants.append((f"activation={a}", replace(ref, activation=a)))
    for lr in o.learning_rates:
        if lr != ref.learning_rate:
            variants.append((f"lr={lr:g}", replace(ref, learning_rate=float(lr))))
    for w in o.widths:
        if w != width:
            variants.append((f"width={w}", replace(ref, hidden_dims=(int(w),) * depth)))
    for d in o.depths:
        if d != depth:
            variants.append((f"depth={d}", replace(ref, hidden_dims=(width,) * int(d))))
    for kind in o.closed_form:
        variants.append((kind, LearnerConfig(kind=kind, loss=ref.loss)))
    return variants


def run_ood_sweep(cfg: ExperimentConfig, nc: NeuralComplexity, out=None) -> list[dict]:
    """Gap-fit and regularization metrics for learners NC was not trained on.

    Fit statistics use unregularized trajectories of each variant on fresh
    tasks; ``nc_test_loss`` is the final test loss with NC as regularizer next
    to the unregularized and L2 baselines.
    """
    seed = _heldout_seed(cfg, 2)
    tasks = sample_tasks(cfg, _rngs(seed, 1)[0], cfg.ood.tasks)
    rows = []
    for name, learner in ood_variants(cfg):
        row = {"variant": name, "kind": learner.kind, "status": "ok"}
        try:
            if learner.kind == "mlp":
                def run(**kw):
                    return train_regularized(learner, tasks, rng=np.random.default_rng(seed + 1),
                                             snapshot_every=cfg.budget.snapshot_every, **kw)
                base = run(nc=None)
                fit = evaluate_gap_fit(nc, base.snapshots)
                reg = run(nc=nc.frozen(), lam=cfg.eval.lam, clip_floor=cfg.clip_floor)
                l2 = run(nc=None, penalty="l2", penalty_weight=cfg.ood.l2_weight)
                row.update(fit.to_record(), baseline_test_loss=float(base.test_loss[:, -1].mean()),
                           nc_test_loss=float(reg.test_loss[:, -1].mean()),
                           l2_test_loss=float(l2.test_loss[:, -1].mean()))
            else:
                snaps = [closed_form_snapshot(learner, t, i) for i, t in enumerate(tasks)]
                fit = evaluate_gap_fit(nc, snaps)
                row.update(fit.to_record(),
                           baseline_test_loss=float(np.mean([s.test_loss for s in snaps])),
                           nc_test_loss=None, l2_test_loss=None,
                           pearson=float(np.corrcoef(fit.predictions, fit.gaps)[0, 1]))
        except (NumericError, ContractError) as err:
            row.update(status=f"failed: {err}", r2=None, mae=None, n=0)
        rows.append(row)
    if out is not None:
        write_json(Path(out) / "ood.json", {"tasks": cfg.ood.tasks, "rows": rows})
    return rows


# ---------------------------------------------------------------- single task
def single_task_dataset(cfg: ExperimentConfig) -> Dataset:
    st = cfg.single_task
    if st.dataset:
        return load_dataset(st.dataset, num_classes=st.num_classes or None)
    rng = _rngs(cfg.seed, 4)[3]
    return make_gaussian_classification_dataset(rng, st.generate_points, st.input_dim, st.num_classes,
                                                separation=st.separation)


def run_single_task(cfg: ExperimentConfig, out=None, log=None) -> dict:
    """Meta-train NC on sub-task splits of one training set, then train a final
    learner on the whole training set with and without NC."""
    st = cfg.single_task
    ds = single_task_dataset(cfg)
    if not ds.num_classes:
        raise ContractError("the single-task protocol here expects a classification dataset")
    if st.train_size >= len(ds):
        raise ContractError(f"dataset of {len(ds)} rows is too small for train_size={st.train_size}")
    rng_split, rng_meta, rng_init, rng_final = _rngs(cfg.seed + 7, 4)
    perm = rng_split.permutation(len(ds))
    tr_idx, te_idx = perm[:st.train_size], perm[st.train_size:]
    x_tr, x_te = standardize(ds.x[tr_idx], ds.x[te_idx])
    train = Dataset(x_tr, ds.y[tr_idx], ds.num_classes)
    y_te = one_hot(ds.y[te_idx, 0], ds.num_classes)
    protocol = SplitProtocol(train, st.subtask_train, st.subtask_val, seed=cfg.seed)

    nc_cfg = NcClassificationConfig(input_dim=train.x.shape[1], num_classes=ds.num_classes,
                                    model_dim=st.model_dim, heads=cfg.nc.heads)
    nc = NeuralComplexity(nc_cfg, seed=cfg.seed)
    optimizer = Adam(cfg.meta_optimizer.learning_rate)
    bank = MemoryBank(cfg.bank)
    sub_learner = LearnerConfig.mlp(st.width, st.depth, learning_rate=st.learning_rate,
                                    steps=st.subtask_steps, loss="cross_entropy")
    meta_owed = 0.0
    for e in range(0, st.episodes, st.tasks_per_round):
        T = min(st.tasks_per_round, st.episodes - e)
        tasks = [sample_subtask(protocol, rng_meta) for _ in range(T)]
        lam = np.array([lambda_at(cfg.lambda_schedule, e + i) for i in range(T)])
        r = train_regularized(sub_learner, tasks, nc.frozen(), lam=lam, rng=rng_init,
                              snapshot_every=st.snapshot_every, task_ids=range(e, e + T),
                              clip_floor=st.clip_floor)
        bank.extend(r.snapshots)
        meta_owed += cfg.meta_optimizer.steps_per_episode * T
        for _ in range(int(meta_owed)):
            meta_step(nc, bank, optimizer, cfg.meta_optimizer.batch_size, rng_meta, train)
        meta_owed -= int(meta_owed)
        if log is not None:
            log(f"single-task episode {e + T}/{st.episodes}")

    final = LearnerConfig.mlp(st.width, st.depth, learning_rate=st.learning_rate,
                              steps=st.final_steps, loss="cross_entropy")
    y_train = train.targets()
    seed_final = int(rng_final.integers(2**31))
    runs = {}
    for method, model in (("baseline", None), ("nc", nc)):
        runs[method] = train_minibatch(
            final, train.x, y_train, x_te, y_te, st.final_steps, st.minibatch,
            np.random.default_rng(seed_final), nc=None if model is None else model.frozen(),
            lam=cfg.eval.lam if model is not None else 0.0, clip_floor=st.clip_floor,
            eval_every=st.eval_every)
    fields = ("record", "method", "step", "train_loss", "test_loss", "gap", "nc_estimate",
              "lambda", "train_accuracy", "test_accuracy")
    with MetricsWriter(out, stem="single_task", fields=fields) as w:
        for method, res in runs.items():
            for row in res.history:
                w.write(method=method, **row)
    summary = {m: dict(res.final) for m, res in runs.items()}
    summary["bank_size"] = len(bank)
    if out is not None:
        nc.save(Path(out) / "nc_single_task.ckpt", extra={"episodes": st.episodes})
        write_json(Path(out) / "single_task.json", summary)
    return summary


# --------------------------------------------------------------------- bound
def collect_residuals(cfg: ExperimentConfig, nc: NeuralComplexity, n_tasks: int | None = None):
    """One residual per fresh task: final-step gap minus NC estimate.

    One hypothesis per task keeps the residuals independent draws.
    """
    n = n_tasks or cfg.bound.tasks
    r = heldout_run(cfg, nc, n, _heldout_seed(cfg, 3), cfg.eval.lam)
    steps = r.train_loss.shape[1] - 1
    finals = [s for s in r.snapshots if s.step == steps]
    pred = predict_snapshots(nc, finals)
    gaps = np.array([s.gap for s in finals])
    return gaps - pred, gaps, pred


def run_bound(cfg: ExperimentConfig, nc: NeuralComplexity, out=None) -> BoundReport:
    b = cfg.bound
    residuals, gaps, pred = collect_residuals(cfg, nc)
    eps = b.epsilon
    if eps is None:
        if b.target is None:
            raise ContractError("bound needs either epsilon or target")
        eps = epsilon_for_target(residuals, b.delta, b.target)
    report = compute_bound(residuals, eps, b.delta)
    if out is not None:
        with MetricsWriter(out, stem="bound", fields=("record",) + tuple(report.to_record())) as w:
            w.write(**report.to_record())
    return report


__all__ = [
    "ComparisonTable", "GapFit", "InfeasibleError", "MetaTrainingResult", "Snapshot",
    "collect_residuals", "evaluate_gap_fit", "gap_fit_report", "gap_fit_stats", "heldout_run",
    "learner_for", "meta_step", "new_nc", "ood_variants", "predict_snapshots",
    "run_bound", "run_meta_training", "run_ood_sweep", "run_regularizer_comparison",
    "run_single_task", "sample_tasks", "snapshot_evals",
]
