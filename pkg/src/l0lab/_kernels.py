"""Hot loops: counter-based uniforms, table sampling, score sums, per-trial outcomes.

Two interchangeable backends implement the same arithmetic in the same order:

* ``numba``: scalar loops compiled with ``@njit(nogil=True)`` that build each trial's
  score vector, with rows sorted in batches by numpy between the compiled stages;
* ``numpy``: batched array code, used when numba is missing or when the
  environment variable ``L0LAB_DISABLE_NUMBA`` is set to a truthy value.

Both consume identical random draws, so a given (seed, trial) produces the same
dataset on either backend. Sums are accumulated sequentially on both sides
(``np.cumsum`` on the numpy side) to keep them bit-compatible.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _env_flag("L0LAB_DISABLE_NUMBA")

if HAVE_NUMBA:
    njit = numba.njit(cache=True, nogil=True)
else:  # pragma: no cover

    def njit(fn):
        return fn


MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

U_GOLDEN = np.uint64(GOLDEN)
U_MIX1 = np.uint64(MIX1)
U_MIX2 = np.uint64(MIX2)
U_30 = np.uint64(30)
U_27 = np.uint64(27)
U_31 = np.uint64(31)
U_11 = np.uint64(11)
INV_2_53 = 1.0 / 9007199254740992.0

MODE_NONE = 0
MODE_WORST = 1
MODE_COUPLING = 2


# ---------------------------------------------------------------------------
# SplitMix64, three flavours: python int, numpy array, numba scalar
# ---------------------------------------------------------------------------


def mix64_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def seed_key_int(master_seed: int) -> int:
    return mix64_int(master_seed + GOLDEN)


def stream_key_int(master_seed: int, stream_id: int) -> int:
    return mix64_int(seed_key_int(master_seed) + mix64_int((stream_id + 1) * GOLDEN))


def mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> U_30)) * U_MIX1
    z = (z ^ (z >> U_27)) * U_MIX2
    return z ^ (z >> U_31)


def uniforms_np(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Uniforms in (0, 1) for broadcastable arrays of stream keys and draw counters."""
    bits = mix64_np(keys + (counters.astype(np.uint64) + np.uint64(1)) * U_GOLDEN)
    return ((bits >> U_11).astype(np.float64) + 0.5) * INV_2_53


@njit
def _mix64(z):
    z = (z ^ (z >> U_30)) * U_MIX1
    z = (z ^ (z >> U_27)) * U_MIX2
    return z ^ (z >> U_31)


@njit
def _uniform(key, j):
    bits = _mix64(key + np.uint64(j + 1) * U_GOLDEN)
    return (np.float64(bits >> U_11) + 0.5) * INV_2_53


# ---------------------------------------------------------------------------
# Polynomials and table lookup
# ---------------------------------------------------------------------------


def horner_np(coeffs: np.ndarray, x):
    acc = np.full_like(np.asarray(x, dtype=np.float64), coeffs[-1])
    for b in coeffs[-2::-1]:
        acc = acc * x + b
    return acc


@njit
def _horner(coeffs, x):
    m = coeffs.shape[0]
    acc = coeffs[m - 1]
    for i in range(m - 2, -1, -1):
        acc = acc * x + coeffs[i]
    return acc


def lookup_np(u: np.ndarray, cdf: np.ndarray, zs: np.ndarray) -> np.ndarray:
    j = np.searchsorted(cdf, u, side="right") - 1
    j = np.clip(j, 0, cdf.shape[0] - 2)
    c0 = cdf[j]
    z0 = zs[j]
    t = (u - c0) / (cdf[j + 1] - c0)
    return z0 + t * (zs[j + 1] - z0)


@njit
def _lookup(u, cdf, zs, guide):
    # guide length is a power of two, so u * len is exact
    j = guide[int(u * guide.shape[0])]
    last = cdf.shape[0] - 2
    while j < last and cdf[j + 1] <= u:
        j += 1
    c0 = cdf[j]
    z0 = zs[j]
    t = (u - c0) / (cdf[j + 1] - c0)
    return z0 + t * (zs[j + 1] - z0)


def build_guide(cdf: np.ndarray, size: int) -> np.ndarray:
    """Start index for the table scan in each of ``size`` equal-probability buckets."""
    probs = np.arange(size, dtype=np.float64) / size
    guide = np.searchsorted(cdf, probs, side="right") - 1
    return np.clip(guide, 0, cdf.shape[0] - 2).astype(np.int64)


# ---------------------------------------------------------------------------
# Truncated sums (numba scalar versions)
# ---------------------------------------------------------------------------


@njit
def _seq_sum(a, lo, hi):
    acc = 0.0
    for i in range(lo, hi):
        acc += a[i]
    return acc


@njit
def _tsum(scores, k):
    # always sorted then summed in order, so the value is permutation invariant
    d = scores.shape[0]
    s = np.sort(scores)
    return _seq_sum(s, k, d - k)


@njit
def _worst_sorted(s, trim_k, budget, y):
    # adversary minimizes the statistic when y=+1 and maximizes it when y=-1
    if budget > trim_k:
        return -np.inf if y == 1 else np.inf
    d = s.shape[0]
    if y == 1:
        return _seq_sum(s, trim_k - budget, d - budget - trim_k)
    return _seq_sum(s, budget + trim_k, d - trim_k + budget)


@njit
def _worst(scores, trim_k, budget, y):
    if budget == 0:
        return _tsum(scores, trim_k)
    return _worst_sorted(np.sort(scores), trim_k, budget, y)


@njit
def _fill_rows_nb(seed_key, start, n, d, mu, coeffs, cdf, zs, guide, fixed_label, mode,
                  budget, rows, labels, reverted, flips):
    """Write into ``rows[t]`` the score vector whose truncated sum decides trial ``t``."""
    scores = np.empty(d)
    xs = np.empty(d)
    zero_score = _horner(coeffs, -mu) - _horner(coeffs, mu)
    for t in range(n):
        key = _mix64(seed_key + _mix64(np.uint64(start + t + 1) * U_GOLDEN))
        if fixed_label == 0:
            y = 1 if _uniform(key, 0) < 0.5 else -1
        else:
            y = fixed_label
        row = rows[t]
        for i in range(d):
            x = y * mu + _lookup(_uniform(key, 1 + i), cdf, zs, guide)
            xs[i] = x
            scores[i] = _horner(coeffs, x - mu) - _horner(coeffs, x + mu)
        rev = False
        nflip = 0
        if mode == MODE_COUPLING:
            changed = 0
            for i in range(d):
                e = -y * scores[i]
                p = math.exp(e) if e < 0.0 else 1.0
                if _uniform(key, 1 + d + i) >= p:
                    nflip += 1
                    if xs[i] != 0.0:
                        changed += 1
                    row[i] = zero_score
                else:
                    row[i] = scores[i]
            if changed > budget:
                rev = True
                row[:] = scores
        else:
            row[:] = scores
        labels[t] = y
        reverted[t] = rev
        flips[t] = nflip


@njit
def _finish_rows_nb(rows, labels, mode, trim_k, budget, stats, errors):
    """Statistic and error flag per trial from rows already sorted ascending."""
    d = rows.shape[1]
    for t in range(rows.shape[0]):
        y = labels[t]
        if mode == MODE_WORST and budget > 0:
            stat = _worst_sorted(rows[t], trim_k, budget, y)
        else:
            stat = _seq_sum(rows[t], trim_k, d - trim_k)
        stats[t] = stat
        errors[t] = (1 if stat > 0.0 else -1) != y


def _run_trials_nb(seed_key, start, n, d, mu, coeffs, cdf, zs, guide, fixed_label,
                   mode, trim_k, budget, labels, stats, errors, reverted, flips, batch=64):
    # numpy's vectorized row sort is far faster than the sort numba compiles, and any
    # correct sort yields the same ascending values, so sums stay bit-identical
    rows = np.empty((min(batch, n), d))
    for b0 in range(0, n, batch):
        m = min(batch, n - b0)
        block = rows[:m]
        sl = slice(b0, b0 + m)
        _fill_rows_nb(seed_key, start + b0, m, d, mu, coeffs, cdf, zs, guide, fixed_label,
                      mode, budget, block, labels[sl], reverted[sl], flips[sl])
        block.sort(axis=1)
        _finish_rows_nb(block, labels[sl], mode, trim_k, budget, stats[sl], errors[sl])


# ---------------------------------------------------------------------------
# numpy batch path
# ---------------------------------------------------------------------------


def _seq_rows(a: np.ndarray) -> np.ndarray:
    if a.shape[1] == 0:
        return np.zeros(a.shape[0])
    return np.cumsum(a, axis=1)[:, -1]


def tsum_rows_np(scores: np.ndarray, k: int) -> np.ndarray:
    d = scores.shape[1]
    return _seq_rows(np.sort(scores, axis=1)[:, k:d - k])


def worst_rows_np(scores: np.ndarray, trim_k: int, budget: int, y: np.ndarray) -> np.ndarray:
    if budget == 0:
        return tsum_rows_np(scores, trim_k)
    if budget > trim_k:
        return np.where(y == 1, -np.inf, np.inf)
    d = scores.shape[1]
    s = np.sort(scores, axis=1)
    low = _seq_rows(s[:, trim_k - budget:d - budget - trim_k])
    high = _seq_rows(s[:, budget + trim_k:d - trim_k + budget])
    return np.where(y == 1, low, high)


def _run_trials_np(seed_key, start, n, d, mu, coeffs, cdf, zs, guide, fixed_label,
                   mode, trim_k, budget, labels, stats, errors, reverted, flips, batch=32):
    del guide  # searchsorted needs no guide table
    zero_score = horner_np(coeffs, np.float64(-mu)) - horner_np(coeffs, np.float64(mu))
    draw = np.arange(1, d + 1, dtype=np.uint64)
    couple_draw = draw + np.uint64(d)
    for b0 in range(0, n, batch):
        m = min(batch, n - b0)
        tids = np.arange(start + b0 + 1, start + b0 + m + 1, dtype=np.uint64)
        keys = mix64_np(np.uint64(seed_key) + mix64_np(tids * U_GOLDEN))
        if fixed_label == 0:
            u0 = uniforms_np(keys, np.zeros(m, dtype=np.uint64))
            y = np.where(u0 < 0.5, 1, -1)
        else:
            y = np.full(m, fixed_label)
        yf = y.astype(np.float64)[:, None]
        x = yf * mu + lookup_np(uniforms_np(keys[:, None], draw[None, :]), cdf, zs)
        scores = horner_np(coeffs, x - mu) - horner_np(coeffs, x + mu)
        rev = np.zeros(m, dtype=bool)
        nflip = np.zeros(m, dtype=np.int64)
        if mode == MODE_COUPLING:
            p = np.exp(np.minimum(-yf * scores, 0.0))
            flip = uniforms_np(keys[:, None], couple_draw[None, :]) >= p
            nflip = flip.sum(axis=1)
            changed = (flip & (x != 0.0)).sum(axis=1)
            rev = changed > budget
            work = np.where(flip & ~rev[:, None], zero_score, scores)
            stat = tsum_rows_np(work, trim_k)
        elif mode == MODE_WORST:
            stat = worst_rows_np(scores, trim_k, budget, y)
        else:
            stat = tsum_rows_np(scores, trim_k)
        pred = np.where(stat > 0.0, 1, -1)
        sl = slice(b0, b0 + m)
        labels[sl] = y
        stats[sl] = stat
        errors[sl] = pred != y
        reverted[sl] = rev
        flips[sl] = nflip


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialBatch:
    """Per-trial outcomes, indexed by trial number."""

    labels: np.ndarray
    stats: np.ndarray
    errors: np.ndarray
    reverted: np.ndarray
    flips: np.ndarray


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get("L0LAB_WORKERS", "0") or 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return max(1, workers)


def simulate(cell_seed: int, trials: int, d: int, mu: float, coeffs: np.ndarray,
             cdf: np.ndarray, zs: np.ndarray, guide: np.ndarray, *, mode: int = MODE_NONE,
             trim_k: int = 0, budget: int = 0, fixed_label: int = 0,
             workers: int | None = None, backend: str | None = None) -> TrialBatch:
    """Run ``trials`` independent trials; trial ``t`` draws from stream ``(cell_seed, t)``."""
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    kernel = _run_trials_nb if backend == "numba" else _run_trials_np

    labels = np.empty(trials, dtype=np.int64)
    stats = np.empty(trials, dtype=np.float64)
    errors = np.empty(trials, dtype=np.bool_)
    reverted = np.empty(trials, dtype=np.bool_)
    flips = np.empty(trials, dtype=np.int64)
    seed_key = np.uint64(seed_key_int(cell_seed))
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)

    def run(lo: int, hi: int) -> None:
        kernel(seed_key, lo, hi - lo, d, float(mu), coeffs, cdf, zs, guide, int(fixed_label),
               int(mode), int(trim_k), int(budget), labels[lo:hi], stats[lo:hi],
               errors[lo:hi], reverted[lo:hi], flips[lo:hi])

    n_workers = min(resolve_workers(workers), max(1, trials))
    if n_workers == 1:
        run(0, trials)
    else:
        edges = np.linspace(0, trials, 4 * n_workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run, edges[:-1], edges[1:]))
    return TrialBatch(labels, stats, errors, reverted, flips)
