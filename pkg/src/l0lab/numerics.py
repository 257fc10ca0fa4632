"""Shared numerical kernels: adaptive quadrature, normal tail, inverse-CDF tables, random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .errors import InsufficientTailRadius, NonConvergent, NonFinite, NonMonotoneCDF

TAIL_MASS_LIMIT = 1e-12
DEFAULT_GRID_POINTS = 2**14


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration domain ``[-truncation_radius, truncation_radius]`` plus tolerances."""

    truncation_radius: float
    abs_tol: float = 1e-13
    rel_tol: float = 1e-12
    max_subdivisions: int = 200_000

    def __post_init__(self):
        if not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


def _evaluate(f: Callable, x: np.ndarray) -> np.ndarray:
    try:
        y = np.asarray(f(x), dtype=np.float64)
    except TypeError:
        y = None
    if y is None or y.shape != x.shape:
        y = np.array([float(f(float(xi))) for xi in x])
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][0]
        raise NonFinite(f"integrand is not finite at z={bad!r}")
    return y


_ROUNDOFF = 16.0 * np.finfo(np.float64).eps


def _initial_panels(a, b, initial_panels, breakpoints):
    """Left ends and widths of the starting panels: equal panels per piece between edges."""
    edges = [a, *sorted({float(p) for p in breakpoints if a < p < b}), b]
    lefts, widths = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        count = max(4, math.ceil(initial_panels * (hi - lo) / (b - a)))
        w = (hi - lo) / count
        lefts.append(lo + w * np.arange(count))
        widths.append(np.full(count, w))
    return np.concatenate(lefts), np.concatenate(widths)


def _adaptive_simpson(f, a, b, tol, max_subdivisions, initial_panels, breakpoints=()):
    # widths are carried and halved exactly: recomputing them as right - left would
    # leave parent and child estimates inconsistent by roundoff far from the origin
    left, width = _initial_panels(a, b, initial_panels, breakpoints)
    mid = left + 0.5 * width
    fl, fm, fr = _evaluate(f, left), _evaluate(f, mid), _evaluate(f, left + width)
    whole = width / 6.0 * (fl + 4.0 * fm + fr)
    span = b - a
    result = 0.0
    err_total = 0.0
    subdivisions = left.size
    while left.size:
        flm = _evaluate(f, left + 0.25 * width)
        frm = _evaluate(f, mid + 0.25 * width)
        h = width / 12.0
        s_left = h * (fl + 4.0 * flm + fm)
        s_right = h * (fm + 4.0 * frm + fr)
        delta = s_left + s_right - whole
        err = np.abs(delta) / 15.0
        # a correction at rounding level cannot be reduced by further splitting: that
        # covers rounding of the values themselves and of the abscissae (about f' eps |z|)
        xscale = np.maximum(np.abs(left), np.abs(left + width))
        slope = np.abs(fm - fl) + np.abs(fr - fm)
        floor = _ROUNDOFF * (np.abs(s_left) + np.abs(s_right) + xscale * slope)
        ok = (err <= tol * width / span) | (np.abs(delta) <= floor)
        if np.any(ok):
            result += float(np.sum((s_left + s_right + delta / 15.0)[ok]))
            err_total += float(np.sum(err[ok]))
        keep = ~ok
        n_split = int(keep.sum())
        if n_split == 0:
            break
        subdivisions += n_split
        if subdivisions > max_subdivisions:
            raise NonConvergent(
                f"adaptive Simpson exhausted {max_subdivisions} subdivisions on [{a}, {b}]")
        # each unresolved interval becomes its two halves
        half = 0.5 * width[keep]
        width = np.concatenate([half, half])
        left = np.concatenate([left[keep], mid[keep]])
        new_fl = np.concatenate([fl[keep], fm[keep]])
        new_fr = np.concatenate([fm[keep], fr[keep]])
        fm = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([s_left[keep], s_right[keep]])
        fl, fr = new_fl, new_fr
        mid = left + 0.5 * width
    return result, err_total


def integrate(f: Callable, spec: QuadratureSpec, lower: float | None = None,
              upper: float | None = None, initial_panels: int = 32,
              breakpoints: Sequence[float] = ()) -> float:
    """Adaptive Simpson integral of ``f`` over ``[-R, R]`` (or ``[lower, upper]`` inside it).

    ``f`` should accept a numpy array and return an array of the same shape; scalar-only
    callables work too, just slower. ``breakpoints`` inside the interval become edges of
    the starting panels, each piece between them getting its own equal panels; use them
    to point the rule at narrow features the initial panels could step over.
    Raises :class:`NonConvergent` when the subdivision budget runs out and
    :class:`NonFinite` if ``f`` is not finite at a node.
    """
    a = -spec.truncation_radius if lower is None else float(lower)
    b = spec.truncation_radius if upper is None else float(upper)
    if a == b:
        return 0.0
    if a > b:
        return -integrate(f, spec, b, a, initial_panels, breakpoints)
    left, width = _initial_panels(a, b, 4 * initial_panels, breakpoints)
    coarse = _evaluate(f, left + 0.5 * width)
    scale = float(np.sum(np.abs(coarse) * width))
    tol = max(spec.abs_tol, spec.rel_tol * scale)
    for _ in range(3):
        result, err = _adaptive_simpson(f, a, b, tol, spec.max_subdivisions, initial_panels,
                                        breakpoints)
        target = max(spec.abs_tol, spec.rel_tol * abs(result))
        if err <= target:
            return result
        tol = target
    raise NonConvergent(f"error estimate {err:.3e} above tolerance {target:.3e}")


def normal_upper_tail(x: float) -> float:
    """Standard normal complementary CDF."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# inverse-CDF sampling
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _cell_masses(density: Callable, z: np.ndarray) -> np.ndarray:
    half = 0.5 * np.diff(z)
    centre = 0.5 * (z[1:] + z[:-1])
    pts = centre[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = _evaluate(density, pts.ravel()).reshape(pts.shape)
    return half * (vals @ _GL_WEIGHTS)


@dataclass(frozen=True)
class SamplerTable:
    """Piecewise-linear inverse CDF: probability ``cdf[j]`` maps to ``z[j]``."""

    cdf: np.ndarray
    z: np.ndarray
    guide: np.ndarray = field(repr=False)

    @property
    def radius(self) -> float:
        return float(self.z[-1])

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return K.lookup_np(u, self.cdf, self.z)

    def cdf_at(self, z):
        """Numeric CDF implied by the table (linear between nodes)."""
        return np.interp(z, self.z, self.cdf, left=0.0, right=1.0)


def build_inverse_cdf_table(q: Callable, radius: float, grid_points: int = DEFAULT_GRID_POINTS,
                            tail_mass: float | None = None) -> SamplerTable:
    """Tabulate the inverse CDF of density ``q`` on ``[-radius, radius]``.

    The node set is an equal-z grid densified with equal-probability nodes, so the
    tails (where equal-probability cells get wide in z) and the bulk are both resolved.
    ``tail_mass`` is a bound on the probability outside the radius, usually the noise
    model's tail bound; it must not exceed ``1e-12``.
    """
    if tail_mass is not None and not tail_mass <= TAIL_MASS_LIMIT:
        raise InsufficientTailRadius(
            f"tail mass bound {tail_mass:.3e} at radius {radius} exceeds {TAIL_MASS_LIMIT}")
    half = max(grid_points // 2, 2)
    z_eq = np.linspace(-radius, radius, half)
    mass = _cell_masses(q, z_eq)
    if np.any(mass < 0):
        raise NonMonotoneCDF("negative cell mass in cumulative quadrature")
    cdf_eq = np.concatenate([[0.0], np.cumsum(mass)])
    cdf_eq /= cdf_eq[-1]
    p_nodes = np.linspace(0.0, 1.0, half + 1)[1:-1]
    keep = np.concatenate([[True], np.diff(cdf_eq) > 0])
    z_p = np.interp(p_nodes, cdf_eq[keep], z_eq[keep])
    z = np.unique(np.concatenate([z_eq, z_p]))

    mass = _cell_masses(q, z)
    if np.any(mass < 0):
        raise NonMonotoneCDF("negative cell mass in cumulative quadrature")
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    cdf /= cdf[-1]
    if np.any(np.diff(cdf) < 0):
        raise NonMonotoneCDF("cumulative quadrature decreased")
    # far-tail cells can round to zero mass; drop them so the map stays strictly increasing
    strict = np.concatenate([[True], np.diff(cdf) > 0])
    strict[-1] = True
    if cdf[strict][-2] >= 1.0:
        strict[np.flatnonzero(strict)[-2]] = False
    cdf, z = cdf[strict], z[strict]
    cdf[-1] = 1.0
    guide = K.build_guide(cdf, DEFAULT_GRID_POINTS)
    return SamplerTable(cdf=cdf, z=z, guide=guide)


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomStream:
    """Counter-based stream: draw ``j`` is a pure function of (master_seed, stream_id, j)."""

    master_seed: int
    stream_id: int

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v <= K.MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")

    @property
    def key(self) -> int:
        return K.stream_key_int(self.master_seed, self.stream_id)

    def uniforms(self, n: int, offset: int = 0) -> np.ndarray:
        """Draws ``offset .. offset+n-1`` as floats in the open interval (0, 1)."""
        counters = np.arange(offset, offset + n, dtype=np.uint64)
        return K.uniforms_np(np.uint64(self.key), counters)


def derive_stream(master_seed: int, stream_id: int) -> RandomStream:
    return RandomStream(int(master_seed), int(stream_id))
