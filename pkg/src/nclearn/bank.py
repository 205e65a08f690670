"""Memory bank of task-learning snapshots.

A snapshot records what NC sees about one hypothesis plus the observed gap.
Rows can be stored inline or, for tasks cut from a fixed dataset, as row
indices into it.  Appended snapshots are made read-only.

The bank is single-writer / multi-reader: ``append`` and ``sample_batch`` take
the same lock, so a sampler always sees the bank as it was when the call
started.

Bank file layout (see :mod:`nclearn.binio` for the envelope): the JSON header
carries ``count`` and a ``snapshots`` list with each snapshot's scalar fields
and the names of its arrays; array payloads are stored in snapshot order as
``"{i}.{field}"``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .errors import CapacityError, ContractError, EmptyBankError, FormatError

BANK_MAGIC = b"NCBANK\x00\x00"
BANK_VERSION = 1

_ARRAY_FIELDS = ("x_tr", "x_te", "y_tr", "pred_tr", "pred_te", "loss_tr", "train_idx", "test_idx")


@dataclass
class Snapshot:
    task_id: int
    step: int
    y_tr: np.ndarray
    pred_tr: np.ndarray
    pred_te: np.ndarray
    gap: float
    x_tr: np.ndarray | None = None
    x_te: np.ndarray | None = None
    loss_tr: np.ndarray | None = None
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    train_loss: float = float("nan")
    test_loss: float = float("nan")
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not np.isfinite(self.gap):
            raise ContractError(f"snapshot gap must be finite, got {self.gap}")
        n_tr = len(self.x_tr) if self.x_tr is not None else len(self.train_idx)
        n_te = len(self.x_te) if self.x_te is not None else len(self.test_idx)
        if len(self.pred_tr) != n_tr or len(self.y_tr) != n_tr or len(self.pred_te) != n_te:
            raise ContractError("snapshot prediction rows do not match its inputs")

    @property
    def val_size(self) -> int:
        return len(self.pred_te)

    def resolve(self, dataset=None) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(x_tr, x_te)``, looking rows up in ``dataset`` if index-stored."""
        if self.x_tr is not None and self.x_te is not None:
            return self.x_tr, self.x_te
        if dataset is None:
            raise ContractError("index-stored snapshot needs its dataset to resolve rows")
        x = dataset.x if hasattr(dataset, "x") else np.asarray(dataset)
        return x[self.train_idx], x[self.test_idx]

    def freeze(self) -> "Snapshot":
        for name in _ARRAY_FIELDS:
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=np.int64 if name.endswith("idx") else np.float64)
                arr.flags.writeable = False
                setattr(self, name, arr)
        self.gap = float(self.gap)
        return self

    def shape_key(self) -> tuple:
        return (len(self.pred_tr), len(self.pred_te))


@dataclass
class BankConfig:
    capacity: int = 100_000
    eviction: str = "fifo"
    path: str | None = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.eviction not in ("fifo", "reject"):
            raise ValueError(f"unknown eviction policy {self.eviction!r}")


class MemoryBank:
    """Fixed-capacity ring of snapshots with uniform replay sampling."""

    def __init__(self, config: BankConfig | None = None, capacity: int | None = None,
                 eviction: str | None = None):
        cfg = config or BankConfig()
        if capacity is not None or eviction is not None:
            cfg = BankConfig(capacity or cfg.capacity, eviction or cfg.eviction, cfg.path)
        self.config = cfg
        self._items: list[Snapshot] = []
        self._start = 0
        self._lock = threading.Lock()
        self.total_appended = 0

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Snapshot:
        n = len(self._items)
        if not -n <= i < n:
            raise IndexError(i)
        return self._items[(self._start + i) % n]

    def __iter__(self):
        with self._lock:
            items = self._ordered()
        return iter(items)

    def _ordered(self) -> list[Snapshot]:
        return self._items[self._start:] + self._items[: self._start]

    def append(self, s: Snapshot) -> None:
        s.validate()
        s.freeze()
        with self._lock:
            cap = self.config.capacity
            if len(self._items) < cap:
                self._items.append(s)
            elif self.config.eviction == "reject":
                raise CapacityError(f"memory bank is full ({cap} snapshots)")
            else:
                self._items[self._start] = s
                self._start = (self._start + 1) % cap
            self.total_appended += 1

    def extend(self, snapshots) -> None:
        for s in snapshots:
            self.append(s)

    def sample_batch(self, n: int, rng: np.random.Generator) -> list[Snapshot]:
        """``n`` snapshots drawn uniformly with replacement."""
        with self._lock:
            size = len(self._items)
            if size == 0:
                raise EmptyBankError("cannot sample from an empty memory bank")
            idx = rng.integers(0, size, size=n)
            items = self._items
            return [items[i] for i in idx]

    # ------------------------------------------------------------ persistence
    def to_bytes(self) -> bytes:
        with self._lock:
            items = self._ordered()
        records, arrays = [], []
        for i, s in enumerate(items):
            names = []
            for name in _ARRAY_FIELDS:
                arr = getattr(s, name)
                if arr is not None:
                    names.append(name)
                    arrays.append((f"{i}.{name}", arr))
            records.append({"task_id": int(s.task_id), "step": int(s.step), "gap": _f2s(s.gap),
                            "train_loss": _f2s(s.train_loss), "test_loss": _f2s(s.test_loss),
                            "meta": s.meta, "arrays": names})
        header = {"count": len(items), "capacity": self.config.capacity,
                  "eviction": self.config.eviction, "snapshots": records}
        return binio.encode(BANK_MAGIC, BANK_VERSION, header, arrays)

    def persist(self, path) -> None:
        binio.write_atomic(path, self.to_bytes())

    save = persist

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MemoryBank":
        header, arrays = binio.decode(blob, BANK_MAGIC, BANK_VERSION)
        try:
            bank = cls(BankConfig(header["capacity"], header["eviction"]))
            records = header["snapshots"]
            if len(records) != header["count"]:
                raise FormatError("snapshot count does not match header")
            for i, r in enumerate(records):
                fields = {name: arrays[f"{i}.{name}"] for name in r["arrays"]}
                bank.append(Snapshot(task_id=r["task_id"], step=r["step"], gap=_s2f(r["gap"]),
                                     train_loss=_s2f(r["train_loss"]),
                                     test_loss=_s2f(r["test_loss"]), meta=r["meta"], **fields))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed bank header: {exc}") from None
        return bank

    @classmethod
    def load(cls, path) -> "MemoryBank":
        return cls.from_bytes(binio.read_bytes(path))

    # ----------------------------------------------- directory of segments
    def write_segment(self, directory, snapshots) -> Path:
        """Write ``snapshots`` as the next numbered segment file in ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        existing = sorted(directory.glob("segment-*.ncb"))
        n = int(existing[-1].stem.split("-")[1]) + 1 if existing else 0
        seg = MemoryBank(BankConfig(max(1, len(snapshots)), "reject"))
        seg.extend(snapshots)
        path = directory / f"segment-{n:06d}.ncb"
        seg.persist(path)
        return path

    def ingest_segments(self, directory, seen: set | None = None) -> int:
        """Append every not-yet-seen segment from ``directory``; returns count added."""
        seen = seen if seen is not None else set()
        added = 0
        for path in sorted(Path(directory).glob("segment-*.ncb")):
            if path.name in seen:
                continue
            for s in MemoryBank.load(path):
                self.append(s)
                added += 1
            seen.add(path.name)
        return added


def _f2s(x: float):
    # JSON has no NaN; keep bit-exactness via repr of the float.
    return repr(float(x))


def _s2f(s) -> float:
    return float(s)
