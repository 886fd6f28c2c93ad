"""Time-indexed metric curves and their JSON/CSV forms."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricSeries:
    """Values of one metric at steps ``n``.

    JSON form: ``{"metric": ..., "z0": ..., "values": [[n, v], ...]}``.
    """

    metric: str
    z0: str
    n: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        n = np.array(self.n, dtype=int, copy=True)
        v = np.array(self.values, dtype=float, copy=True)
        if n.shape != v.shape or n.ndim != 1:
            raise ValueError("n and values must be 1-d arrays of equal length")
        n.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "z0", str(self.z0))

    def __len__(self):
        return self.n.size

    def __getitem__(self, step: int) -> float:
        hit = np.flatnonzero(self.n == step)
        if not hit.size:
            raise KeyError(step)
        return float(self.values[hit[0]])

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "z0": self.z0,
            "values": [[int(k), float(v)] for k, v in zip(self.n, self.values)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSeries":
        pairs = np.asarray(d["values"], dtype=float).reshape(-1, 2)
        return cls(d["metric"], d["z0"], pairs[:, 0].astype(int), pairs[:, 1])

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["n", self.metric])
            for k, v in zip(self.n, self.values):
                w.writerow([int(k), repr(float(v))])
