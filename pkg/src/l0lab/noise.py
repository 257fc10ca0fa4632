"""Exponential-polynomial noise densities ``q(z) = exp(psi(z)) / A``.

``psi`` is given by its raw ascending coefficients ``b_0 .. b_m``; the degree must be
even and the leading coefficient negative. Everything downstream (normalizer, Fisher
information, divergences between shifted copies, tail bounds) is computed numerically
on a finite window ``[-R, R]`` whose radius comes from the closed-form tail bound.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from . import _kernels as K
from .errors import (BelowValidityRadius, NonConvergent, NonNegativeLeadingCoefficient,
                     NormalizationFailure, OddDegree, UnsupportedOrder)
from .numerics import (TAIL_MASS_LIMIT, QuadratureSpec, RandomStream, SamplerTable,
                       build_inverse_cdf_table, derive_stream, integrate)

SUP_GRID_NODES = 64


def _real_roots(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=np.float64), "b")
    if coeffs.size <= 1:
        return np.empty(0)
    roots = P.polyroots(coeffs)
    tol = 1e-7 * (1.0 + np.abs(roots))
    return np.sort(roots[np.abs(roots.imag) <= tol].real)


def _shift(coeffs: np.ndarray, s: float) -> np.ndarray:
    """Coefficients of ``p(z + s)``, computed in exact rational arithmetic then rounded."""
    c = [Fraction(float(v)) for v in coeffs]
    shift = Fraction(float(s))
    # repeated synthetic division (Taylor shift)
    for i in range(len(c) - 1):
        for j in range(len(c) - 2, i - 1, -1):
            c[j] += shift * c[j + 1]
    return np.array([float(v) for v in c])


def parse_coeffs(text: str | Sequence[float]) -> list[float]:
    """Accept ``"b0,b1,...,bm"`` or a JSON array (string or already-parsed list)."""
    if isinstance(text, str):
        s = text.strip()
        if s.startswith("["):
            values = json.loads(s)
        else:
            values = [v for v in s.replace(" ", "").split(",") if v != ""]
    else:
        values = list(text)
    out = [float(v) for v in values]
    if not out:
        raise ValueError("empty coefficient list")
    if not all(math.isfinite(v) for v in out):
        raise ValueError("coefficients must be finite")
    return out


@dataclass(frozen=True)
class AuditReport:
    zeta: float
    a2_value: float
    a3_value: float
    a4_gamma: float
    a4_c4: float
    a4_empirical_exceed_rate: float
    fisher_finite: bool
    d_probe: int = 0
    trials: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class ExpPolyNoise:
    """Validated noise density. Build with :meth:`from_coeffs` (or :func:`new_exp_poly`)."""

    psi_coeffs: tuple[float, ...]
    log_normalizer: float
    fisher_info: float
    truncation_radius: float
    validity_radius: float
    sampler: SamplerTable = field(repr=False)
    psi_max: float = field(repr=False, default=0.0)
    center: float = field(repr=False, default=0.0)
    centered_coeffs: tuple[float, ...] = field(repr=False, default=())
    log_mass: float = field(repr=False, default=0.0)
    landmarks: tuple[float, ...] = field(repr=False, default=())

    # -- construction -------------------------------------------------------

    @classmethod
    def from_coeffs(cls, psi_coeffs: Sequence[float] | str) -> "ExpPolyNoise":
        b = np.trim_zeros(np.asarray(parse_coeffs(psi_coeffs), dtype=np.float64), "b")
        if b.size == 0:
            raise OddDegree("psi is identically zero")
        degree = b.size - 1
        if degree < 2 or degree % 2:
            raise OddDegree(f"psi must have even degree >= 2, got degree {degree}")
        if not b[-1] < 0:
            raise NonNegativeLeadingCoefficient(
                f"leading coefficient of psi must be negative, got {b[-1]}")

        n = degree // 2
        a_lead = -b[-1]
        c1 = _validity_radius(b)
        # psi is evaluated as psi(center) + rel(z - center), with rel exact to rounding
        # and rel(0) = 0; far from the origin this avoids cancellation between large terms
        stationary = _real_roots(P.polyder(b))
        center = float(stationary[np.argmax(P.polyval(stationary, b))])
        rel = _shift(b, center)
        psi_max = float(rel[0])
        rel[0] = 0.0

        marks = _landmarks(rel, center)

        def shifted_density(z):
            return np.exp(K.horner_np(rel, z - center))

        def unnorm_tail(t, log_a):
            return (2.0 / (n * a_lead * t ** (2 * n - 1))
                    * math.exp(-0.5 * a_lead * t ** (2 * n) - log_a))

        # the tail bound needs A and A needs a radius: alternate until the radius settles
        radius = _solve_radius(lambda t: unnorm_tail(t, psi_max), c1, 1e-16)
        log_a = None
        for _ in range(8):
            try:
                mass = integrate(shifted_density, QuadratureSpec(radius, abs_tol=1e-15,
                                                                 rel_tol=1e-13),
                                 breakpoints=marks)
            except NonConvergent as exc:
                raise NormalizationFailure(str(exc)) from exc
            if not (mass > 0 and math.isfinite(mass)):
                raise NormalizationFailure(f"normalizer integral is {mass}")
            log_a = psi_max + math.log(mass)
            needed = _solve_radius(lambda t: unnorm_tail(t, log_a), c1, TAIL_MASS_LIMIT)
            if needed <= radius:
                break
            radius = needed
        else:  # pragma: no cover
            raise NormalizationFailure("truncation radius did not settle")

        # final radius is the tight one; renormalize on exactly that window
        radius = _solve_radius(lambda t: unnorm_tail(t, log_a), c1, TAIL_MASS_LIMIT)
        qspec = QuadratureSpec(radius, abs_tol=1e-15, rel_tol=1e-13)
        mass = integrate(shifted_density, qspec, breakpoints=marks)
        log_mass = math.log(mass)
        log_a = psi_max + log_mass

        def density(z):
            return np.exp(K.horner_np(rel, z - center) - log_mass)

        d1 = P.polyder(rel)
        fisher = integrate(lambda z: K.horner_np(d1, z - center) ** 2 * density(z), qspec,
                           breakpoints=marks)
        tail = (2.0 / (n * a_lead * radius ** (2 * n - 1))
                * math.exp(-0.5 * a_lead * radius ** (2 * n) - log_a))
        sampler = build_inverse_cdf_table(density, radius, tail_mass=tail)
        return cls(psi_coeffs=tuple(float(v) for v in b), log_normalizer=log_a,
                   fisher_info=fisher, truncation_radius=radius, validity_radius=c1,
                   sampler=sampler, psi_max=psi_max, center=center,
                   centered_coeffs=tuple(float(v) for v in rel), log_mass=log_mass,
                   landmarks=marks)

    # -- basic quantities ---------------------------------------------------

    @property
    def coeffs(self) -> np.ndarray:
        return np.asarray(self.psi_coeffs, dtype=np.float64)

    @property
    def degree(self) -> int:
        return len(self.psi_coeffs) - 1

    @property
    def half_degree(self) -> int:
        return self.degree // 2

    @property
    def leading(self) -> float:
        """The positive constant ``a_{2n} = -b_{2n}``."""
        return -self.psi_coeffs[-1]

    @property
    def normalizer(self) -> float:
        """``A``; ``inf`` when it exceeds the float range (``log_normalizer`` stays exact)."""
        return math.exp(self.log_normalizer) if self.log_normalizer < 709.0 else math.inf

    @property
    def is_symmetric(self) -> bool:
        return all(v == 0.0 for v in self.psi_coeffs[1::2])

    def quadrature(self, abs_tol: float = 1e-14, rel_tol: float = 1e-12) -> QuadratureSpec:
        return QuadratureSpec(self.truncation_radius, abs_tol=abs_tol, rel_tol=rel_tol)

    def _integrate(self, f, qspec: QuadratureSpec, lower=None, upper=None, extra=()) -> float:
        """Integrate against the density's scale: split at the mode and its level sets."""
        return integrate(f, qspec, lower, upper, breakpoints=(*self.landmarks, *extra))

    def _psi_rel(self, z):
        """``psi(z) - psi(center)``, evaluated around the mode."""
        z = np.asarray(z, dtype=np.float64)
        return K.horner_np(np.asarray(self.centered_coeffs), z - self.center)

    def psi(self, z):
        return self._psi_rel(z) + self.psi_max

    def log_density(self, z):
        return self._psi_rel(z) - self.log_mass

    def density(self, z):
        return np.exp(self.log_density(z))

    def log_density_derivative(self, z, order: int = 1):
        """Exact ``order``-th derivative of ``psi`` (the normalizer drops out)."""
        if order not in (1, 2, 3):
            raise UnsupportedOrder(f"order must be 1, 2 or 3, got {order!r}")
        p = P.polyder(np.asarray(self.centered_coeffs), order)
        return K.horner_np(p, np.asarray(z, dtype=np.float64) - self.center)

    def fisher_information(self) -> float:
        return self.fisher_info

    # -- divergences between q(. - mu) and q(. + mu) -------------------------

    def kl_shifted(self, mu: float) -> float:
        """KL divergence D(q(. - mu) || q(. + mu)) = E[psi(Z) - psi(Z + 2 mu)].

        The difference is expanded exactly as ``-sum_j (2 mu)^j psi^(j)(Z) / j!``. The
        ``j = 1`` term has mean zero, since E[psi'(Z)] is the integral of q'. Dropping it
        leaves an integrand of the same O(mu^2) size as the answer, with no cancellation.
        """
        mu = float(mu)
        if mu == 0.0:
            return 0.0
        h = 2.0 * mu
        deriv = np.asarray(self.centered_coeffs)
        remainder = np.zeros(1)
        for j in range(1, deriv.shape[0]):
            deriv = P.polyder(deriv)
            if j >= 2:
                remainder = P.polysub(remainder, h**j / math.factorial(j) * deriv)
        val = self._integrate(lambda z: self.density(z) * K.horner_np(remainder, z - self.center),
                              self.quadrature(abs_tol=1e-16, rel_tol=1e-12))
        return max(val, 0.0)

    def tv_shifted(self, mu: float) -> float:
        """Total variation between q(. - mu) and q(. + mu).

        With ``delta(z) = psi(z + mu) - psi(z - mu)`` the integrand is
        ``|q(z - mu) expm1(delta(z))|``. ``delta`` is expanded exactly as
        ``2 sum_{j odd} mu^j psi^(j)(z) / j!``, so small shifts lose no digits. Its real
        roots are the kinks of the integrand, and integrating piecewise between them keeps
        the adaptive rule on smooth pieces.
        """
        mu = float(mu)
        if mu == 0.0:
            return 0.0
        deriv = np.asarray(self.centered_coeffs)
        delta = np.zeros(1)
        for j in range(1, deriv.shape[0]):
            deriv = P.polyder(deriv)
            if j % 2:
                delta = P.polyadd(delta, 2.0 * mu**j / math.factorial(j) * deriv)
        r = self.truncation_radius + abs(mu)
        cuts = [u + self.center for u in _real_roots(delta) if -r < u + self.center < r]
        edges = [-r, *cuts, r]
        qspec = QuadratureSpec(r, abs_tol=1e-15, rel_tol=1e-12)
        marks = [m + s for m in self.landmarks for s in (-mu, mu)]

        def gap(z):
            dz = K.horner_np(delta, z - self.center)
            # expm1 keeps small differences accurate; large ones have no cancellation
            near = -self.density(z - mu) * np.expm1(np.minimum(dz, 1.0))
            far = self.density(z - mu) - self.density(z + mu)
            return np.where(np.abs(dz) < 1.0, near, far)

        total = sum(abs(integrate(gap, qspec, lo, hi, breakpoints=marks))
                    for lo, hi in zip(edges[:-1], edges[1:]))
        return min(0.5 * total, 1.0)

    # -- tails ----------------------------------------------------------------

    def tail_bound(self, t: float) -> float:
        """Upper bound on P(|Z| >= t), valid for t at or beyond the sandwich radius."""
        t = float(t)
        if t < self.validity_radius or t <= 0:
            raise BelowValidityRadius(
                f"t={t} is below the validity radius {self.validity_radius:.6g}")
        n = self.half_degree
        a = self.leading
        # log space: A itself can overflow for strongly shifted modes
        return math.exp(math.log(2.0 / (n * a)) - self.log_normalizer
                        - (2 * n - 1) * math.log(t) - 0.5 * a * t ** (2 * n))

    def tail_mass(self, t: float) -> float:
        """P(|Z| >= t) by quadrature inside the truncation window."""
        r = self.truncation_radius
        if t >= r:
            return 0.0
        qspec = self.quadrature(abs_tol=1e-18)
        return self._integrate(self.density, qspec, t, r) + \
            self._integrate(self.density, qspec, -r, -t)

    # -- sampling -------------------------------------------------------------

    def sample(self, n: int, stream: RandomStream, offset: int = 0) -> np.ndarray:
        return self.sampler(stream.uniforms(n, offset))

    # -- assumption audit ----------------------------------------------------

    def sup_abs_derivative(self, z, order: int, zeta: float) -> np.ndarray:
        """``sup_{t in [z-zeta, z+zeta]} |psi^(order)(t)|`` for each z.

        Candidates are the endpoints, the stationary points of the derivative inside the
        window and a 64-node grid; for a polynomial the first two already give the exact sup.
        """
        z = np.atleast_1d(np.asarray(z, dtype=np.float64)) - self.center
        p = P.polyder(np.asarray(self.centered_coeffs), order)
        grid = np.linspace(-zeta, zeta, SUP_GRID_NODES)
        pts = z[:, None] + grid[None, :]
        best = np.max(np.abs(K.horner_np(p, pts)), axis=1)
        for s in _real_roots(P.polyder(p)):
            inside = np.abs(z - s) <= zeta
            if np.any(inside):
                best = np.where(inside, np.maximum(best, abs(float(P.polyval(s, p)))), best)
        return best

    def assumption4_constants(self) -> tuple[float, float, float]:
        """(gamma, C4, c2) with gamma = 1 - 1/(2n).

        c2 is chosen so that a_{2n} c2^{2n} / 2 = 2; C4 = sum_i |i b_i| c2^{i-1} then bounds
        max_i |psi'(Z_i)| by C4 (log d)^gamma whenever max_i |Z_i| <= c2 (log d)^{1/2n}
        and log d >= 1.
        """
        n = self.half_degree
        c2 = (4.0 / self.leading) ** (1.0 / (2 * n))
        b = self.coeffs
        c4 = sum(abs(i * b[i]) * c2 ** (i - 1) for i in range(1, len(b)))
        return 1.0 - 1.0 / (2 * n), float(c4), float(c2)

    def audit_assumptions(self, zeta: float = 0.5, d_probe: int = 4096, trials: int = 200,
                          seed: int = 0) -> AuditReport:
        if not zeta > 0:
            raise ValueError("zeta must be positive")
        qspec = self.quadrature(abs_tol=1e-12, rel_tol=1e-10)
        a2 = self._integrate(lambda z: self.density(z) * self.sup_abs_derivative(z, 3, zeta),
                             qspec)
        a3 = self._integrate(
            lambda z: self.density(z) * self.sup_abs_derivative(z, 2, zeta) ** 2, qspec)
        gamma, c4, _ = self.assumption4_constants()
        threshold = c4 * math.log(d_probe) ** gamma
        exceed = 0
        for trial in range(trials):
            z = self.sample(d_probe, derive_stream(seed, trial))
            if np.max(np.abs(self.log_density_derivative(z, 1))) > threshold:
                exceed += 1
        return AuditReport(zeta=float(zeta), a2_value=max(a2, 0.0), a3_value=max(a3, 0.0),
                           a4_gamma=gamma, a4_c4=c4,
                           a4_empirical_exceed_rate=exceed / trials if trials else 0.0,
                           fisher_finite=bool(math.isfinite(self.fisher_info) and self.fisher_info > 0),
                           d_probe=int(d_probe), trials=int(trials))


def _landmarks(rel: np.ndarray, center: float) -> tuple[float, ...]:
    """The mode and the points where psi falls 1, 8 and 40 below its maximum.

    These bracket the bulk of the density at its own scale, however narrow the peak.
    """
    marks = {center}
    for drop in (1.0, 8.0, 40.0):
        level = rel.copy()
        level[0] += drop
        marks.update(float(u) + center for u in _real_roots(level))
    return tuple(sorted(marks))


def _validity_radius(b: np.ndarray) -> float:
    """Smallest c1 with -2a z^{2n} <= psi(z) <= -(a/2) z^{2n} for all |z| >= c1."""
    a = -b[-1]
    m = b.size - 1
    upper = b.copy()
    upper[m] += 0.5 * a   # psi + (a/2) z^{2n} <= 0 beyond c1
    lower = b.copy()
    lower[m] += 2.0 * a   # psi + 2a z^{2n} >= 0 beyond c1
    roots = np.concatenate([_real_roots(upper), _real_roots(lower)])
    if roots.size == 0:
        return 0.0
    c1 = float(np.max(np.abs(roots)))
    return c1 * (1.0 + 1e-9) if c1 > 0 else 0.0


def _solve_radius(bound, c1: float, target: float) -> float:
    """Smallest radius (to 1e-9 relative) with ``bound(radius) <= target``: doubling, then bisection."""
    lo = max(c1, 1e-3)
    hi = max(lo, 1.0)
    while bound(hi) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:  # pragma: no cover
            raise NormalizationFailure("could not bracket the truncation radius")
    if bound(lo) <= target:
        return lo
    while hi - lo > 1e-9 * hi:
        mid = 0.5 * (lo + hi)
        if bound(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def new_exp_poly(psi_coeffs: Sequence[float] | str) -> ExpPolyNoise:
    return ExpPolyNoise.from_coeffs(psi_coeffs)


def gaussian(sigma: float = 1.0) -> ExpPolyNoise:
    return new_exp_poly([0.0, 0.0, -0.5 / sigma**2])


def quartic() -> ExpPolyNoise:
    return new_exp_poly([0.0, 0.0, 0.0, 0.0, -1.0])
