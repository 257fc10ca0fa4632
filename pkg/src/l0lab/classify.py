"""Log-likelihood scores, the maximum-likelihood classifier and the truncated classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import BudgetTooLarge, NonFinite
from .model import ProblemInstance


def _as_vector(x, d: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-d sequence")
    if d is not None and x.shape[0] != d:
        raise ValueError(f"expected length {d}, got {x.shape[0]}")
    if np.isnan(x).any():
        raise NonFinite("NaN in input")
    return x


@dataclass(frozen=True, eq=False)
class LikelihoodScores:
    scores: np.ndarray
    instance: ProblemInstance

    def __len__(self):
        return self.scores.shape[0]


def score_values(coeffs: np.ndarray, mu: float, x) -> np.ndarray:
    """``psi(x - mu) - psi(x + mu)``; the log normalizer cancels."""
    x = np.asarray(x, dtype=np.float64)
    return K.horner_np(coeffs, x - mu) - K.horner_np(coeffs, x + mu)


def loglik_transform(instance: ProblemInstance, x) -> LikelihoodScores:
    x = _as_vector(x, instance.d)
    return LikelihoodScores(score_values(instance.noise.coeffs, instance.mu_d, x), instance)


def _check_budget(d: int, k: int) -> None:
    if k < 0:
        raise ValueError("k must be nonnegative")
    if 2 * k >= d:
        raise BudgetTooLarge(f"need 2k < d, got k={k}, d={d}")


def ordered_sum(a: np.ndarray) -> float:
    """Left-to-right sum, the same order the simulation kernels use."""
    return float(np.cumsum(a)[-1]) if a.size else 0.0


def tsum(u, k: int) -> float:
    """Sum of ``u`` without its k largest and k smallest entries (plain sum when k = 0).

    Values are sorted ascending and added in that order for every k, which makes the
    result exactly invariant under permutations of ``u``.
    """
    u = _as_vector(getattr(u, "scores", u))
    _check_budget(u.shape[0], k)
    s = np.sort(u)
    return ordered_sum(s[k:u.shape[0] - k])


def classify_ml(instance: ProblemInstance, x) -> int:
    """+1 when the summed scores are positive, -1 otherwise (ties included)."""
    return 1 if tsum(loglik_transform(instance, x), 0) > 0 else -1


def classify_truncated(instance: ProblemInstance, x, k: int) -> int:
    return 1 if tsum(loglik_transform(instance, x), k) > 0 else -1
