"""Monte Carlo estimation of standard and robust error, and (d, alpha) sweeps.

Every trial draws from the stream ``(cell_seed, trial_index)`` so results do not
depend on how trials are spread over workers. In a sweep the cell seed is itself
derived from ``(master_seed, cell_index)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Sequence

import numpy as np

from . import _kernels as K
from .attack import budget_from_alpha
from .errors import BudgetTooLarge, L0LabError
from .noise import ExpPolyNoise, new_exp_poly, parse_coeffs
from .numerics import derive_stream

log = logging.getLogger(__name__)

CSV_HEADER = ("d", "k", "alpha", "classifier", "attack", "trials", "errors", "error_rate",
              "ci_low", "ci_high", "revert_rate", "seed", "status")
ATTACKS = ("none", "worst_case", "coupling")
CLASSIFIERS = ("ml", "truncated")
_MODES = {"none": K.MODE_NONE, "worst_case": K.MODE_WORST, "coupling": K.MODE_COUPLING}

DEFAULT_THRESHOLDS = {"converse_min_error": 0.45, "achievability_slack": 0.02}


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials <= 0 or not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials and trials > 0")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / trials
    z2n = z * z / trials
    centre = (p + z2n / 2) / (1 + z2n)
    half = z / (1 + z2n) * math.sqrt(p * (1 - p) / trials + z2n / (4 * trials))
    low = 0.0 if successes == 0 else max(0.0, centre - half)
    high = 1.0 if successes == trials else min(1.0, centre + half)
    return min(low, p), max(high, p)


@dataclass
class CellResult:
    d: int
    k: int
    alpha: float | None
    classifier: str
    attack: str
    trials: int
    errors: int | None = None
    error_rate: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    revert_rate: float | None = None
    seed: int = 0
    status: str = "ok"
    wall_time: float = 0.0
    mean_flips: float | None = None

    def csv_row(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, name)) for name in CSV_HEADER]

    def to_dict(self) -> dict:
        return asdict(self)


def _trim_and_budget(classifier: str, attack: str, k: int) -> tuple[int, int]:
    if classifier not in CLASSIFIERS:
        raise ValueError(f"unknown classifier {classifier!r}")
    if attack not in ATTACKS:
        raise ValueError(f"unknown attack {attack!r}")
    trim = k if classifier == "truncated" else 0
    budget = 0 if attack == "none" else k
    return trim, budget


def run_cell(noise: ExpPolyNoise, c: float, d: int, k: int, *, classifier: str, attack: str,
             trials: int, seed: int, alpha: float | None = None, workers: int | None = None,
             backend: str | None = None) -> CellResult:
    """One grid cell: error fraction with a Wilson 95% interval (plus revert rate for coupling)."""
    trim, budget = _trim_and_budget(classifier, attack, k)
    if classifier == "truncated" and 2 * k >= d:
        raise BudgetTooLarge(f"truncated classifier needs 2k < d, got k={k}, d={d}")
    if k > d:
        raise BudgetTooLarge(f"budget k={k} exceeds d={d}")
    if trials < 1:
        raise ValueError("trials must be positive")
    t0 = time.perf_counter()
    table = noise.sampler
    batch = K.simulate(seed, trials, d, c / math.sqrt(d), noise.coeffs, table.cdf, table.z,
                       table.guide, mode=_MODES[attack], trim_k=trim, budget=budget,
                       workers=workers, backend=backend)
    errors = int(batch.errors.sum())
    lo, hi = wilson_interval(errors, trials)
    coupling = attack == "coupling"
    return CellResult(d=d, k=k, alpha=alpha, classifier=classifier, attack=attack, trials=trials,
                      errors=errors, error_rate=errors / trials, ci_low=lo, ci_high=hi,
                      revert_rate=float(batch.reverted.mean()) if coupling else None,
                      seed=int(seed), wall_time=time.perf_counter() - t0,
                      mean_flips=float(batch.flips.mean()) if coupling else None)


def estimate_standard_error(noise: ExpPolyNoise, c: float, d: int, trials: int, seed: int, *,
                            classifier: str = "ml", k: int = 0, workers: int | None = None,
                            backend: str | None = None) -> CellResult:
    """Error with no adversary; the ML classifier unless ``classifier='truncated'``."""
    return run_cell(noise, c, d, k, classifier=classifier, attack="none", trials=trials,
                    seed=seed, workers=workers, backend=backend)


def estimate_robust_error(noise: ExpPolyNoise, c: float, d: int, k: int, *, classifier: str,
                          attack: str, trials: int, seed: int, alpha: float | None = None,
                          workers: int | None = None, backend: str | None = None) -> CellResult:
    """Error under ``worst_case`` (analytic extremal statistic per trial) or ``coupling`` attack."""
    if attack not in ("worst_case", "coupling"):
        raise ValueError("attack must be 'worst_case' or 'coupling'")
    return run_cell(noise, c, d, k, classifier=classifier, attack=attack, trials=trials,
                    seed=seed, alpha=alpha, workers=workers, backend=backend)


def score_sums(noise: ExpPolyNoise, c: float, d: int, trials: int, seed: int, label: int = 1,
               workers: int | None = None, backend: str | None = None) -> np.ndarray:
    """Per-trial sum of log-likelihood scores with the label held fixed."""
    table = noise.sampler
    batch = K.simulate(seed, trials, d, c / math.sqrt(d), noise.coeffs, table.cdf, table.z,
                       table.guide, fixed_label=label, workers=workers, backend=backend)
    return batch.stats


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    poly: list[float]
    c: float = 1.0
    dims: list[int] = field(default_factory=lambda: [1024, 4096])
    alphas: list[float] | None = None
    ks: list[int] | None = None
    attacks: list[str] = field(default_factory=lambda: ["coupling"])
    classifier: str = "truncated"
    trials: int = 10_000
    master_seed: int = 0
    out: str | None = None
    format: str = "csv"
    workers: int | None = None
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))

    def __post_init__(self):
        self.poly = parse_coeffs(self.poly)
        self.dims = sorted(int(d) for d in self.dims)
        if self.trials < 100:
            raise ValueError("trials must be at least 100")
        if (self.alphas is None) == (self.ks is None):
            raise ValueError("give exactly one of alphas or ks")
        if self.alphas is not None:
            self.alphas = sorted(float(a) for a in self.alphas)
            if not self.alphas or not all(0 < a < 1 for a in self.alphas):
                raise ValueError("alphas must be a nonempty list in (0, 1)")
        else:
            self.ks = sorted(int(k) for k in self.ks)
            if not self.ks or min(self.ks) < 0:
                raise ValueError("ks must be a nonempty list of nonnegative integers")
        for a in self.attacks:
            if a not in ATTACKS:
                raise ValueError(f"unknown attack {a!r}")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")

    def cells(self) -> list[tuple[int, int, float | None, str]]:
        """Grid in emission order: d ascending, then alpha (or k) ascending, then attack."""
        out = []
        for d in self.dims:
            if self.alphas is not None:
                pairs = [(budget_from_alpha(d, a).k, a) for a in self.alphas]
            else:
                pairs = [(k, None) for k in self.ks]
            for k, a in pairs:
                for attack in self.attacks:
                    out.append((d, k, a, attack))
        return out


@dataclass
class ExperimentResult:
    rows: list[CellResult]
    provenance: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.csv_row())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"provenance": self.provenance,
                           "rows": [r.to_dict() for r in self.rows]}, indent=2)

    def write(self, path: str | Path, fmt: str = "csv") -> None:
        Path(path).write_text(self.to_csv() if fmt == "csv" else self.to_json())


def phase_sweep(config: ExperimentConfig, noise: ExpPolyNoise | None = None,
                backend: str | None = None) -> ExperimentResult:
    """Run every cell of the grid. Failing cells are recorded with their error name."""
    noise = noise or new_exp_poly(config.poly)
    t0 = time.perf_counter()
    rows = []
    for index, (d, k, alpha, attack) in enumerate(config.cells()):
        seed = derive_stream(config.master_seed, index).key
        try:
            row = run_cell(noise, config.c, d, k, classifier=config.classifier, attack=attack,
                           trials=config.trials, seed=seed, alpha=alpha,
                           workers=config.workers, backend=backend)
        except L0LabError as exc:
            log.warning("cell d=%d k=%d attack=%s failed: %s", d, k, attack, exc)
            row = CellResult(d=d, k=k, alpha=alpha, classifier=config.classifier, attack=attack,
                             trials=config.trials, seed=seed, status=type(exc).__name__)
        log.info("cell d=%d k=%d attack=%s error=%s", d, k, attack, row.error_rate)
        rows.append(row)
    provenance = {
        "config": {k: v for k, v in asdict(config).items() if k not in ("out", "workers")},
        "noise": {"psi_coeffs": list(noise.psi_coeffs), "log_normalizer": noise.log_normalizer,
                  "fisher_info": noise.fisher_info,
                  "truncation_radius": noise.truncation_radius},
        "thresholds": dict(config.thresholds),
        "backend": backend or ("numba" if K.USE_NUMBA else "numpy"),
        "wall_time": time.perf_counter() - t0,
    }
    return ExperimentResult(rows, provenance)
