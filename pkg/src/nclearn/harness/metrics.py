"""Append-only metrics stream written as NDJSON with a CSV mirror.

Rows carry a logical clock (``record``, the row index) rather than wall time,
so identical runs produce byte-identical files.  Wall-clock timings go to the
separate ``run_info.json``.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

METRIC_FIELDS = ("record", "episode", "step", "train_loss", "test_loss", "gap",
                 "nc_estimate", "lambda", "meta_loss")


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


class MetricsWriter:
    def __init__(self, out_dir=None, stem: str = "metrics", fields=METRIC_FIELDS):
        self.fields = tuple(fields)
        self.rows: list[dict] = []
        self._json = self._csv = self._writer = None
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            self._json = open(out / f"{stem}.ndjson", "w", encoding="utf-8", newline="\n")
            self._csv = open(out / f"{stem}.csv", "w", encoding="utf-8", newline="")
            self._writer = csv.writer(self._csv, lineterminator="\n")
            self._writer.writerow(self.fields)

    def write(self, **values) -> dict:
        extra = set(values) - set(self.fields)
        if extra:
            raise ValueError(f"fields outside the stream schema: {sorted(extra)}")
        row = {"record": len(self.rows)} if "record" in self.fields else {}
        for f in self.fields:
            if f != "record" or "record" in values:
                row[f] = values.get(f, row.get(f))
        row = {f: _clean(row.get(f)) for f in self.fields}
        self.rows.append(row)
        if self._json is not None:
            self._json.write(json.dumps(row, separators=(",", ":")) + "\n")
            self._writer.writerow(["" if row[f] is None else row[f] for f in self.fields])
        return row

    def close(self) -> None:
        for fh in (self._json, self._csv):
            if fh is not None:
                fh.close()
        self._json = self._csv = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_ndjson(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_finite(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
