"""Data model: label y, dimension d, mean mu_d = c / sqrt(d), samples x_i = y mu_d + z_i."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .noise import ExpPolyNoise
from .numerics import RandomStream


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    d: int
    c: float
    noise: ExpPolyNoise

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not (math.isfinite(self.c) and self.c != 0):
            raise ValueError(f"c must be a finite nonzero real, got {self.c!r}")

    @property
    def mu_d(self) -> float:
        return self.c / math.sqrt(self.d)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    label: int
    samples: np.ndarray
    master_seed: int
    trial_id: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError("label must be -1 or +1")

    @property
    def d(self) -> int:
        return int(self.samples.shape[0])


def generate(instance: ProblemInstance, label: int | Literal["uniform"],
             stream: RandomStream) -> LabeledDataset:
    """Draw one dataset. Draw 0 of the stream picks a uniform label, draws 1..d the noise."""
    if label == "uniform":
        y = 1 if stream.uniforms(1, 0)[0] < 0.5 else -1
    elif label in (-1, 1):
        y = int(label)
    else:
        raise ValueError(f"label must be -1, +1 or 'uniform', got {label!r}")
    z = instance.noise.sample(instance.d, stream, offset=1)
    samples = float(y) * instance.mu_d + z
    samples.setflags(write=False)
    return LabeledDataset(y, samples, stream.master_seed, stream.stream_id)


def write_datasets_csv(path: str | Path, datasets: Iterable[LabeledDataset]) -> None:
    """One row per dataset: ``label, x_0, ..., x_{d-1}``."""
    rows = list(datasets)
    d = rows[0].d if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", *(f"x{i}" for i in range(d))])
        for ds in rows:
            w.writerow([ds.label, *(repr(float(v)) for v in ds.samples)])
