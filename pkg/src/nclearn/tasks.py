"""Task distributions and the single-dataset sub-task protocol."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .errors import ContractError, FormatError


@dataclass
class TaskBatch:
    """One task's train/test split.

    Regression labels are ``[n, 1]``; classification labels are one-hot
    ``[n, c]``.  ``train_idx``/``test_idx`` are set when the rows come from a
    fixed dataset.
    """

    x_tr: np.ndarray
    y_tr: np.ndarray
    x_te: np.ndarray
    y_te: np.ndarray
    kind: str = "regression"
    params: dict = field(default_factory=dict)
    seed: int | None = None
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None

    def __post_init__(self):
        if len(self.x_tr) < 1 or len(self.x_te) < 1:
            raise ContractError("a task needs at least one train and one test row")

    @property
    def m(self) -> int:
        return len(self.x_tr)

    @property
    def m_test(self) -> int:
        return len(self.x_te)

    @property
    def input_dim(self) -> int:
        return self.x_tr.shape[1]


# ------------------------------------------------------------------ sinusoids
AMPLITUDE_RANGE = (0.1, 5.0)
PHASE_RANGE = (0.0, math.pi)
INPUT_RANGE = (-5.0, 5.0)


def sinusoid(x, amplitude: float, phase: float) -> np.ndarray:
    return amplitude * np.sin(x + phase)


def sample_sinusoid_task(rng: np.random.Generator, m: int = 10, m_test: int = 15,
                         amplitude: float | None = None, phase: float | None = None,
                         seed: int | None = None) -> TaskBatch:
    """``x -> A sin(x + b)`` with ``A ~ U[0.1, 5]``, ``b ~ U[0, pi]``, ``x ~ U[-5, 5]``."""
    A = rng.uniform(*AMPLITUDE_RANGE) if amplitude is None else float(amplitude)
    b = rng.uniform(*PHASE_RANGE) if phase is None else float(phase)
    x = rng.uniform(*INPUT_RANGE, size=(m + m_test, 1))
    y = sinusoid(x, A, b)
    return TaskBatch(x[:m], y[:m], x[m:], y[m:], kind="regression",
                     params={"amplitude": A, "phase": b}, seed=seed)


def sample_sinusoid_tasks(rng: np.random.Generator, n: int, m: int = 10, m_test: int = 15,
                          zero_labels: bool = False) -> list[TaskBatch]:
    tasks = [sample_sinusoid_task(rng, m, m_test) for _ in range(n)]
    if zero_labels:
        for t in tasks:
            t.y_tr = np.zeros_like(t.y_tr)
            t.y_te = np.zeros_like(t.y_te)
            t.params = {"amplitude": 0.0, "phase": 0.0}
    return tasks


# ------------------------------------------------------------- classification
def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def sample_synthetic_classification_task(rng: np.random.Generator, c: int = 5, m: int = 10,
                                         m_test: int = 15, D: int = 8, sigma: float = 0.3,
                                         seed: int | None = None) -> TaskBatch:
    """Gaussian blobs around ``c`` random centers on the unit sphere in ``R^D``.

    Classes are balanced in both splits, so ``m`` and ``m_test`` must be
    multiples of ``c``.
    """
    if c < 2:
        raise ContractError("need at least two classes")
    if m % c or m_test % c:
        raise ContractError(f"split sizes {m}/{m_test} are not divisible by {c} classes")
    centers = rng.normal(size=(c, D))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    def draw(n):
        labels = np.repeat(np.arange(c), n // c)
        rng.shuffle(labels)
        x = centers[labels] + sigma * rng.normal(size=(n, D))
        return x, one_hot(labels, c)

    x_tr, y_tr = draw(m)
    x_te, y_te = draw(m_test)
    return TaskBatch(x_tr, y_tr, x_te, y_te, kind="classification",
                     params={"centers": centers, "sigma": sigma}, seed=seed)


# ------------------------------------------------------------------- datasets
DATASET_MAGIC = b"NCDATA\x00\x00"
DATASET_VERSION = 1


@dataclass
class Dataset:
    """In-memory labelled matrix. ``num_classes == 0`` means regression."""

    x: np.ndarray
    y: np.ndarray
    num_classes: int = 0

    def __len__(self) -> int:
        return len(self.x)

    @property
    def kind(self) -> str:
        return "classification" if self.num_classes else "regression"

    def targets(self, idx=None) -> np.ndarray:
        """Labels as the learner consumes them (one-hot for classes)."""
        y = self.y if idx is None else self.y[idx]
        if self.num_classes:
            return one_hot(y[:, 0], self.num_classes)
        return y

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.num_classes)


def save_dataset(path, ds: Dataset) -> None:
    """Write ``ds`` in the binary dataset layout (see README)."""
    header = {"rows": len(ds), "feature_dim": int(ds.x.shape[1]),
              "label_dim": int(ds.y.shape[1]), "num_classes": int(ds.num_classes)}
    payload = np.hstack([ds.x, ds.y]).astype(np.float64)
    binio.write_atomic(path, binio.encode(DATASET_MAGIC, DATASET_VERSION, header,
                                          [("rows", payload)]))


def load_dataset(path, num_classes: int | None = None) -> Dataset:
    """Read a binary dataset file, or a CSV whose last column is the label."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
        mat = np.array(rows, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] < 2:
            raise FormatError("CSV dataset needs at least one feature and one label column")
        nc = int(num_classes or 0)
        return Dataset(mat[:, :-1], mat[:, -1:], nc)
    header, arrays = binio.decode(binio.read_bytes(path), DATASET_MAGIC, DATASET_VERSION)
    mat = arrays["rows"]
    fd, ld = header["feature_dim"], header["label_dim"]
    if mat.shape != (header["rows"], fd + ld):
        raise FormatError(f"payload shape {mat.shape} does not match header")
    return Dataset(mat[:, :fd].copy(), mat[:, fd:].copy(), int(header["num_classes"]))


def standardize(train: np.ndarray, *others: np.ndarray):
    """Whiten features with the train split's mean/std."""
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return tuple((a - mu) / sd for a in (train, *others))


def make_gaussian_classification_dataset(rng: np.random.Generator, n: int = 5000, D: int = 20,
                                         c: int = 2, separation: float = 1.0,
                                         noise: float = 1.0) -> Dataset:
    """Overlapping Gaussian classes in ``R^D`` (class means ``separation`` apart)."""
    labels = rng.integers(0, c, size=n)
    means = rng.normal(size=(c, D))
    means *= separation / np.linalg.norm(means[0] - means[-1]) if c > 1 else 1.0
    x = means[labels] + noise * rng.normal(size=(n, D))
    return Dataset(x, labels[:, None].astype(np.float64), c)


# ---------------------------------------------------------- sub-task protocol
@dataclass
class SplitProtocol:
    dataset: Dataset
    train_count: int
    val_count: int
    seed: int = 0
    _rng: np.random.Generator | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.train_count < 1 or self.val_count < 1:
            raise ContractError("train_count and val_count must be >= 1")
        if self.train_count + self.val_count > len(self.dataset):
            raise ContractError(
                f"dataset of {len(self.dataset)} rows cannot supply "
                f"{self.train_count} + {self.val_count} disjoint rows"
            )
        self._rng = np.random.default_rng(self.seed)


def sample_subtask(protocol: SplitProtocol, rng: np.random.Generator | None = None) -> TaskBatch:
    """Fresh disjoint train/validation index sets; validation fills the test side."""
    rng = rng if rng is not None else protocol._rng
    ds = protocol.dataset
    perm = rng.permutation(len(ds))
    tr = np.sort(perm[: protocol.train_count])
    va = np.sort(perm[protocol.train_count : protocol.train_count + protocol.val_count])
    return TaskBatch(ds.x[tr], ds.targets(tr), ds.x[va], ds.targets(va), kind=ds.kind,
                     train_idx=tr, test_idx=va)
