"""Adversaries that may change at most k coordinates, with unbounded magnitude.

Worst-case attacks act on the score vector, where the extremal truncated sum has a
closed form; :func:`realize_in_x_space` then finds raw inputs producing those scores.
:func:`brute_force_attack` is an exhaustive oracle for small instances. The coupling
attack is the randomized, label-erasing adversary built from a maximal coupling of
``q(. - mu)`` and ``q(. + mu)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .classify import (LikelihoodScores, _as_vector, _check_budget, loglik_transform,
                       ordered_sum, score_values, tsum)
from .errors import ExtremeSearchFailed, InstanceTooLarge
from .model import LabeledDataset, ProblemInstance
from .numerics import RandomStream

Direction = Literal["minimize", "maximize"]

BRUTE_FORCE_MAX_D = 12
BRUTE_FORCE_MAX_K = 2
MAX_DOUBLINGS = 64


@dataclass(frozen=True)
class AttackBudget:
    k: int
    alpha: float | None = None

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("budget must be nonnegative")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def budget_from_alpha(d: int, alpha: float) -> AttackBudget:
    """``k = floor(d ** alpha)``, robust to d**alpha landing a few ulps under an integer."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    v = float(d) ** alpha
    k = math.floor(v)
    if k + 1 <= v * (1 + 1e-12):
        k += 1
    return AttackBudget(k=min(k, d), alpha=alpha)


@dataclass(frozen=True, eq=False)
class AttackOutcome:
    perturbed: np.ndarray
    changed_indices: tuple[int, ...]
    reverted: bool = False
    worst_statistic: float | None = None
    flipped_indices: tuple[int, ...] = field(default=(), repr=False)

    def l0_distance(self, original) -> int:
        return int(np.count_nonzero(np.asarray(original) != self.perturbed))


def _scores_of(scores) -> np.ndarray:
    return _as_vector(scores.scores if isinstance(scores, LikelihoodScores) else scores)


def _check_direction(direction: str) -> None:
    if direction not in ("minimize", "maximize"):
        raise ValueError(f"direction must be 'minimize' or 'maximize', got {direction!r}")


def _sentinels(s: np.ndarray) -> tuple[float, float]:
    margin = float(np.sum(np.abs(s))) + 1.0
    return float(s.min()) - margin, float(s.max()) + margin


def worst_case_tsum(scores, k: int, direction: Direction) -> tuple[float, AttackOutcome]:
    """Extremal ``TSum_k`` over all score vectors that differ from ``scores`` in <= k places.

    Minimizing: the k largest scores are pushed below every other score, leaving the
    sum of all but the 2k largest. Maximizing is the mirror image.
    """
    s = _scores_of(scores)
    _check_direction(direction)
    d = s.shape[0]
    _check_budget(d, k)
    if k == 0:
        return tsum(s, 0), AttackOutcome(s.copy(), (), worst_statistic=tsum(s, 0))
    order = np.argsort(s, kind="stable")
    asc = s[order]
    perturbed = s.copy()
    low, high = _sentinels(s)
    if direction == "minimize":
        value = ordered_sum(asc[:d - 2 * k])
        targets = order[d - k:]
        perturbed[targets] = low
    else:
        value = ordered_sum(asc[2 * k:])
        targets = order[:k]
        perturbed[targets] = high
    changed = tuple(sorted(int(i) for i in targets))
    return value, AttackOutcome(perturbed, changed, worst_statistic=value)


def brute_force_attack(scores, k: int, direction: Direction) -> float:
    """Exhaustive extremal ``TSum_k`` over subsets of size <= k and candidate replacement values.

    Candidates per replaced coordinate: a sentinel below the minimum, one above the
    maximum, every existing score and every midpoint of adjacent sorted scores.
    """
    s = _scores_of(scores)
    _check_direction(direction)
    d = s.shape[0]
    if d > BRUTE_FORCE_MAX_D or k > BRUTE_FORCE_MAX_K:
        raise InstanceTooLarge(f"brute force limited to d <= {BRUTE_FORCE_MAX_D}, "
                               f"k <= {BRUTE_FORCE_MAX_K}; got d={d}, k={k}")
    _check_budget(d, k)
    uniq = np.unique(s)
    low, high = _sentinels(s)
    cands = np.concatenate([[low, high], uniq, 0.5 * (uniq[1:] + uniq[:-1])])
    blocks = [s[None, :]]
    for size in range(1, k + 1):
        assignments = np.array(list(itertools.product(cands, repeat=size)))
        for subset in itertools.combinations(range(d), size):
            block = np.repeat(s[None, :], assignments.shape[0], axis=0)
            block[:, subset] = assignments
            blocks.append(block)
    rows = np.sort(np.concatenate(blocks), axis=1)
    values = np.cumsum(rows[:, k:d - k], axis=1)[:, -1]
    return float(values.min() if direction == "minimize" else values.max())


def realize_in_x_space(instance: ProblemInstance, x, target_indices: Sequence[int],
                       directions: Sequence[int] | int, k: int | None = None) -> np.ndarray:
    """Raw inputs whose scores at ``target_indices`` overshoot every original score.

    ``directions`` holds -1 (drive the score down) or +1 (drive it up) per target, or a
    single value for all of them. Each target is set to ``+-X`` with ``X`` found by
    doubling until the score clears all original scores by ``sum |score| + 1``. When ``k``
    is given and the targets are the ones :func:`worst_case_tsum` picks, the truncated
    sum of the result is checked against its closed-form value.
    """
    x = _as_vector(x, instance.d)
    targets = [int(i) for i in target_indices]
    if isinstance(directions, (int, np.integer)):
        dirs = [int(directions)] * len(targets)
    else:
        dirs = [int(v) for v in directions]
    if len(dirs) != len(targets):
        raise ValueError("one direction per target index is required")
    out = x.copy()
    if not targets:
        return out
    s = loglik_transform(instance, x).scores
    low, high = _sentinels(s)
    sign_mu = 1.0 if instance.mu_d > 0 else -1.0
    for i, direction in zip(targets, dirs):
        if direction not in (-1, 1):
            raise ValueError("directions must be -1 or +1")
        # scores grow like sign(mu) * x^(2n-1) for large |x|
        side = direction * sign_mu
        mag = 1.0
        for _ in range(MAX_DOUBLINGS):
            val = float(score_values(instance.noise.coeffs, instance.mu_d, side * mag))
            if (direction < 0 and val < low) or (direction > 0 and val > high):
                break
            mag *= 2.0
        else:
            raise ExtremeSearchFailed(
                f"no extreme input found for coordinate {i} after {MAX_DOUBLINGS} doublings")
        out[i] = side * mag
    if k is not None and len(set(dirs)) == 1:
        want, plan = worst_case_tsum(s, k, "minimize" if dirs[0] < 0 else "maximize")
        if tuple(sorted(targets)) != plan.changed_indices:
            return out
        got = tsum(loglik_transform(instance, out), k)
        if not math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-9 * (1 + np.abs(s).sum())):
            raise ExtremeSearchFailed(f"realized TSum {got!r} differs from closed form {want!r}")
    return out


def coupling_keep_probability(instance: ProblemInstance, x, label: int) -> np.ndarray:
    """``min(q(x - mu), q(x + mu)) / q(x - y mu)``, evaluated as ``exp(min(0, -y * score))``."""
    s = score_values(instance.noise.coeffs, instance.mu_d, x)
    return np.exp(np.minimum(-float(label) * s, 0.0))


def coupling_attack(instance: ProblemInstance, dataset: LabeledDataset, k: int,
                    stream: RandomStream) -> AttackOutcome:
    """Replace each sample by 0 when the maximal coupling separates the two labels.

    Coordinate i is kept with probability ``min(q(x_i - mu), q(x_i + mu)) / q(x_i - y mu)``
    using draw ``1 + d + i`` of ``stream``. If more than ``k`` coordinates would change,
    the original data is returned with ``reverted=True``.
    """
    x = np.asarray(dataset.samples, dtype=np.float64)
    d = x.shape[0]
    keep_p = coupling_keep_probability(instance, x, dataset.label)
    flip = stream.uniforms(d, offset=1 + d) >= keep_p
    w = np.where(flip, 0.0, x)
    changed = tuple(int(i) for i in np.flatnonzero(w != x))
    flipped = tuple(int(i) for i in np.flatnonzero(flip))
    if len(changed) > k:
        return AttackOutcome(x.copy(), (), reverted=True, flipped_indices=flipped)
    return AttackOutcome(w, changed, reverted=False, flipped_indices=flipped)
