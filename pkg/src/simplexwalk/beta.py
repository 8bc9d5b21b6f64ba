"""Symmetric Beta(alpha) laws rescaled to intervals, and their total variation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

__all__ = [
    "Interval",
    "IntervalBeta",
    "QuadratureError",
    "beta_density",
    "sample_interval_beta",
    "sample_symmetric_beta",
    "beta_interval_tv",
    "sticking_ratio_Q",
    "displacement_ratio",
    "ordered_pair_grid",
    "shift_constant",
]

MAX_PANELS = 10**6


class QuadratureError(RuntimeError):
    """The requested accuracy was not reached within the panel budget."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval endpoints must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"interval has lo > hi: [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def degenerate(self) -> bool:
        return self.hi == self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def overlap(self, other: "Interval") -> float:
        return max(0.0, min(self.hi, other.hi) - max(self.lo, other.lo))


@dataclass(frozen=True)
class IntervalBeta:
    alpha: float
    interval: Interval

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")


def _log_norm(alpha: float) -> float:
    return gammaln(2 * alpha) - 2 * gammaln(alpha)


def _density_from_offsets(alpha, log_c, dl, dh, length):
    # dl, dh: distances to the left and right endpoints
    if dl <= 0 or dh <= 0:
        return 0.0
    return math.exp(log_c + (alpha - 1) * (math.log(dl) + math.log(dh)) - (2 * alpha - 1) * math.log(length))


def beta_density(d: IntervalBeta, x: float) -> float:
    """Density of ``d`` at ``x``.

    At an endpoint the value is 0 for alpha > 1, ``1/length`` for alpha = 1
    and ``inf`` (the integrable endpoint singularity) for alpha < 1.
    """
    a, b = d.interval.lo, d.interval.hi
    if d.interval.degenerate:
        raise ValueError(f"point mass at {a} has no density")
    if x < a or x > b:
        return 0.0
    if x == a or x == b:
        if d.alpha > 1:
            return 0.0
        if d.alpha == 1:
            return 1.0 / (b - a)
        return math.inf
    return _density_from_offsets(d.alpha, _log_norm(d.alpha), x - a, b - x, b - a)


def sample_symmetric_beta(alpha: float, rng) -> float:
    """Symmetric Beta(alpha) variate as a ratio of two Gamma(alpha, 1) draws."""
    for _ in range(100):
        g1 = rng.standard_gamma(alpha)
        g2 = rng.standard_gamma(alpha)
        s = g1 + g2
        if s > 0:
            return g1 / s
    raise RuntimeError(f"Gamma({alpha}) pair vanished 100 times in a row")


def sample_interval_beta(d: IntervalBeta, rng) -> float:
    lo, hi = d.interval.lo, d.interval.hi
    if lo == hi:
        return lo
    u = sample_symmetric_beta(d.alpha, rng)
    return min(max(lo + u * (hi - lo), lo), hi)


def _tv_closed_form_uniform(i1: Interval, i2: Interval) -> float:
    return 1.0 - i1.overlap(i2) / max(i1.length, i2.length)


def beta_interval_tv(
    alpha: float,
    i1: Interval,
    i2: Interval,
    tol: float = 1e-9,
    method: str = "auto",
    max_panels: int = MAX_PANELS,
) -> float:
    """Total variation between Beta_alpha(i1) and Beta_alpha(i2).

    ``method="auto"`` uses the closed form for alpha = 1 and adaptive
    quadrature otherwise; ``method="quadrature"`` forces quadrature.
    The symmetric integrand ``|B(i1) - B(i2)| / 2`` is split at the four
    endpoints; for alpha < 1 each panel half is integrated in the variable
    ``s = dist**alpha`` measured from its outer end, which removes the
    endpoint singularity.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if not 0 < tol <= 1e-4:
        raise ValueError(f"tol must lie in (0, 1e-4], got {tol!r}")
    if method not in ("auto", "quadrature", "closed"):
        raise ValueError(f"unknown method {method!r}")
    if i1 == i2:
        return 0.0
    if i1.degenerate or i2.degenerate:
        return 0.0 if (i1.degenerate and i2.degenerate and i1.lo == i2.lo) else 1.0
    if method == "closed" or (method == "auto" and alpha == 1.0):
        if alpha != 1.0:
            raise ValueError("closed form only exists for alpha = 1")
        return _tv_closed_form_uniform(i1, i2)

    log_c = _log_norm(alpha)
    l1, h1, len1 = i1.lo, i1.hi, i1.length
    l2, h2, len2 = i2.lo, i2.hi, i2.length

    def half_gap_at(anchor, offset, sign):
        # point = anchor + sign * offset, written through distances so that
        # tiny offsets near a singular endpoint keep full precision
        f1 = _density_from_offsets(alpha, log_c, (anchor - l1) + sign * offset, (h1 - anchor) - sign * offset, len1)
        f2 = _density_from_offsets(alpha, log_c, (anchor - l2) + sign * offset, (h2 - anchor) - sign * offset, len2)
        return 0.5 * abs(f1 - f2)

    # int [B1 - B2]_+ = 0.5 int |B1 - B2|; the symmetric form makes
    # tv(I1, I2) == tv(I2, I1) bit for bit
    cuts = sorted({l1, h1, l2, h2})
    pieces = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if alpha >= 1:
            pieces.append((lambda x, a=a: half_gap_at(a, x - a, 1.0), a, b))
            continue
        m = 0.5 * (a + b)
        p = 1.0 / alpha
        left = lambda s, a=a: half_gap_at(a, s**p, 1.0) * p * s ** (p - 1) if s > 0 else 0.0
        right = lambda s, b=b: half_gap_at(b, s**p, -1.0) * p * s ** (p - 1) if s > 0 else 0.0
        pieces.append((left, 0.0, (m - a) ** alpha))
        pieces.append((right, 0.0, (b - m) ** alpha))

    if not pieces:
        return 0.0
    share = tol / len(pieces)
    limit = max(1, max_panels // len(pieces))
    total = 0.0
    for fn, a, b in pieces:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(fn, a, b, epsabs=share * 0.5, epsrel=0.0, limit=limit)
        if not err <= share:
            raise QuadratureError(
                f"TV quadrature for alpha={alpha}, I1=[{l1}, {h1}], I2=[{l2}, {h2}] "
                f"reached error {err:.3g} > {share:.3g} on [{a}, {b}] within {limit} panels"
            )
        total += val
    return min(max(total, 0.0), 1.0)


def sticking_ratio_Q(grad_low: float, grad_high: float, midpoint_gap: float) -> float:
    """Proxy ``min(midpoint_gap / max gradient, 1)`` for the non-sticking probability."""
    if grad_low < 0 or grad_high < 0 or midpoint_gap < 0:
        raise ValueError("gradients and midpoint gap must be nonnegative")
    if midpoint_gap == 0:
        return 0.0
    g = max(grad_low, grad_high)
    if g == 0:
        return 1.0
    return min(midpoint_gap / g, 1.0)


def displacement_ratio(i1: Interval, i2: Interval) -> float:
    """``max(|l2 - l1|, |r2 - r1|) / max(|I1|, |I2|)``, capped at 1."""
    g = max(i1.length, i2.length)
    d = max(abs(i2.lo - i1.lo), abs(i2.hi - i1.hi))
    if d == 0:
        return 0.0
    return 1.0 if g == 0 else min(d / g, 1.0)


# Shifts a of the smaller interval and fractions s of the admissible length
# range (1 - a, 1] used for the ordered-pair scan; a = 1 gives disjoint pairs.
GRID_SHIFTS = (0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 0.99, 1.0)
GRID_FRACTIONS = (0.01, 0.25, 0.5, 0.75, 1.0)


def ordered_pair_grid():
    """Ordered pairs ``([0, 1], [a, a + b])`` with ``l1 <= l2`` and ``r1 <= r2``.

    By scaling and symmetry any ordered pair reduces to one whose larger
    interval is [0, 1]; here b ranges over (1 - a, 1].
    """
    pairs = []
    for a in GRID_SHIFTS:
        for s in GRID_FRACTIONS:
            b = (1.0 - a) + s * a if a < 1 else s
            pairs.append((Interval(0.0, 1.0), Interval(a, a + b)))
    return pairs


def shift_constant(alpha: float, ratios, exponent: float, tol: float = 1e-9) -> float:
    """``max TV / r**exponent`` over shifted and stretched copies of [0, 1].

    For each displacement ratio r the pairs ``[0, 1]`` vs ``[r, 1 + r]`` and
    ``[0, 1]`` vs ``[0, 1 + r]`` are scanned; the latter has ratio
    ``r / (1 + r)``, which is the value used for it.
    """
    worst = 0.0
    base = Interval(0.0, 1.0)
    for r in ratios:
        for other in (Interval(r, 1.0 + r), Interval(0.0, 1.0 + r)):
            tv = beta_interval_tv(alpha, base, other, tol=tol)
            worst = max(worst, tv / displacement_ratio(base, other) ** exponent)
    return worst
