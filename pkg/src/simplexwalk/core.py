"""Configurations of ordered particles on [0, N] and exact equilibrium samplers.

A configuration of size ``n`` holds particles ``x_1 <= ... <= x_{n-1}`` with
the implicit walls ``x_0 = 0`` and ``x_n = n``.  When ``pinned`` is false the
right wall ``x_n`` is free and stored as an extra trailing coordinate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Configuration",
    "Increments",
    "OrderRelation",
    "ConfigurationError",
    "validate",
    "increments",
    "from_increments",
    "wedge",
    "vee",
    "identity",
    "sample_equilibrium",
    "sample_pinned_equilibrium",
    "sample_wilson_initial",
    "sample_scaled_dirichlet",
    "compare",
]

_MAX_RESAMPLE = 100


class ConfigurationError(ValueError):
    """Raised for malformed configurations, increments, or size mismatches."""


@dataclass(frozen=True, eq=False)
class Configuration:
    n: int
    positions: np.ndarray
    pinned: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigurationError(f"n must be an integer >= 2, got {self.n!r}")
        pos = np.array(self.positions, dtype=np.float64).reshape(-1)
        expected = self.n - 1 if self.pinned else self.n
        if pos.size != expected:
            raise ConfigurationError(
                f"expected {expected} coordinates for n={self.n} "
                f"(pinned={self.pinned}), got {pos.size}"
            )
        pos.setflags(write=False)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "positions", pos)

    @property
    def right_wall(self) -> float:
        return float(self.n) if self.pinned else float(self.positions[-1])

    def padded(self) -> np.ndarray:
        """Writable array ``[x_0, x_1, ..., x_n]`` including both walls."""
        out = np.empty(self.n + 1)
        out[0] = 0.0
        out[1 : self.n] = self.positions[: self.n - 1]
        out[self.n] = self.right_wall
        return out

    @classmethod
    def from_padded(cls, full, pinned: bool = True) -> "Configuration":
        full = np.asarray(full, dtype=np.float64)
        n = full.size - 1
        return cls(n, full[1:n] if pinned else full[1:], pinned)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.n == other.n
            and self.pinned == other.pinned
            and np.array_equal(self.positions, other.positions)
        )

    def __hash__(self):
        return hash((self.n, self.pinned, self.positions.tobytes()))

    def __repr__(self):
        return f"Configuration(n={self.n}, positions={self.positions.tolist()}, pinned={self.pinned})"


@dataclass(frozen=True)
class Increments:
    eta: np.ndarray


@dataclass(frozen=True)
class OrderRelation:
    coordinate_le: bool
    gradient_le: bool
    coordinate_ge: bool
    gradient_ge: bool

    @property
    def coordinate_incomparable(self) -> bool:
        return not (self.coordinate_le or self.coordinate_ge)

    @property
    def gradient_incomparable(self) -> bool:
        return not (self.gradient_le or self.gradient_ge)


def validate(c: Configuration) -> list[str]:
    """Every violated invariant of ``c``, as readable strings; empty if valid."""
    problems = []
    x = c.positions
    bad = ~np.isfinite(x)
    for i in np.flatnonzero(bad):
        problems.append(f"coordinate {i + 1} is not finite ({x[i]!r})")
    if bad.any():
        return problems
    for i in np.flatnonzero(x < 0):
        problems.append(f"coordinate {i + 1} is negative by {-x[i]:.3g}")
    drops = np.diff(x)
    for i in np.flatnonzero(drops < 0):
        problems.append(
            f"order broken at index {i + 1}: x_{i + 1}={x[i]!r} > x_{i + 2}={x[i + 1]!r} "
            f"(by {-drops[i]:.3g})"
        )
    if c.pinned and x.size and x[-1] > c.n:
        problems.append(
            f"coordinate {x.size} exceeds the wall {c.n} by {x[-1] - c.n:.3g}"
        )
    return problems


def _accumulate(partials: list, x: float) -> None:
    """Add ``x`` to an exact sum held as non-overlapping float partials."""
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


def _ulp_window(d: float, width: int):
    yield d
    up = down = d
    for _ in range(width):
        up = float(np.nextafter(up, np.inf))
        yield up
        if down > 0:
            down = float(np.nextafter(down, -np.inf))
            yield down


def _candidates(partials: list, target: float):
    """Increments a few ulps around the exact gap that land on ``target``.

    Returns (exact hits, closest candidate).  A target can be unreachable
    when every candidate sum is a rounding tie.
    """
    d0 = max(math.fsum([target] + [-p for p in partials]), 0.0)
    hits, closest, best = [], d0, math.inf
    for cand in _ulp_window(d0, 4):
        miss = abs(math.fsum(partials + [cand]) - target)
        if miss == 0:
            hits.append(cand)
        elif miss < best and not hits:
            closest, best = cand, miss
    return hits, (hits[0] if hits else closest)


def increments(c: Configuration) -> Increments:
    """Increments ``eta_k = x_k - x_{k-1}``, k = 1..n.

    Each increment is chosen against the exact running sum of the previous
    ones, so that ``from_increments`` reproduces the positions bit-exactly
    whenever some float increment can; otherwise the miss is one ulp.
    """
    problems = validate(c)
    if problems:
        raise ConfigurationError("; ".join(problems))
    full = c.padded()
    eta = np.empty(c.n)
    partials: list = []
    for k in range(1, c.n + 1):
        target = float(full[k])
        hits, closest = _candidates(partials, target)
        d = closest
        if hits:
            d = hits[0]
            # Several increments may hit; prefer one that keeps the next
            # position reachable, since an exact sum sitting on a rounding
            # tie can make it unreachable.
            if k < c.n and len(hits) > 1:
                for h in hits:
                    trial = list(partials)
                    _accumulate(trial, h)
                    if _candidates(trial, float(full[k + 1]))[0]:
                        d = h
                        break
        eta[k - 1] = d
        _accumulate(partials, d)
    eta.setflags(write=False)
    return Increments(eta)


def from_increments(n: int, eta, pinned: bool = True) -> Configuration:
    eta = np.asarray(eta, dtype=np.float64).reshape(-1)
    if eta.size != n:
        raise ConfigurationError(f"expected {n} increments, got {eta.size}")
    neg = np.flatnonzero(eta < 0)
    if neg.size:
        raise ConfigurationError(f"negative increment at index {neg[0] + 1}: {eta[neg[0]]!r}")
    if pinned:
        total = float(np.sum(eta))
        if abs(total - n) > 1e-9 * n:
            raise ConfigurationError(f"pinned increments must sum to {n}, got {total!r}")
    # Left-to-right prefix sums, accumulated exactly and rounded once each.
    x = np.empty(n)
    partials: list = []
    for k, e in enumerate(eta):
        _accumulate(partials, float(e))
        x[k] = math.fsum(partials)
    return Configuration(n, x[: n - 1] if pinned else x, pinned)


def wedge(n: int) -> Configuration:
    """The maximal configuration, every particle at the right wall."""
    return Configuration(n, np.full(n - 1, float(n)))


def vee(n: int) -> Configuration:
    """The minimal configuration, every particle at 0."""
    return Configuration(n, np.zeros(n - 1))


def identity(n: int) -> Configuration:
    """The flat interface ``x_k = k``."""
    return Configuration(n, np.arange(1, n, dtype=np.float64))


def sample_scaled_dirichlet(m: int, total: float, alpha: float, rng) -> np.ndarray:
    """``m`` i.i.d. Gamma(alpha, 1) variables rescaled to sum to ``total``."""
    for _ in range(_MAX_RESAMPLE):
        g = rng.standard_gamma(alpha, size=m)
        s = g.sum()
        if s > 0:
            return total * g / s
    raise RuntimeError(f"Gamma({alpha}) sum vanished {_MAX_RESAMPLE} times in a row")


def _check(n, alpha):
    if int(n) != n or n < 2:
        raise ConfigurationError(f"n must be an integer >= 2, got {n!r}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")


def sample_equilibrium(n: int, alpha: float, rng) -> Configuration:
    """Exact draw from the equilibrium law: Dirichlet(alpha, ..., alpha) increments scaled to n."""
    _check(n, alpha)
    eta = sample_scaled_dirichlet(n, float(n), alpha, rng)
    # Rounding in the prefix sums can overshoot the wall by an ulp.
    return Configuration(n, np.minimum(np.cumsum(eta)[: n - 1], n))


def sample_pinned_equilibrium(k: int, n: int, alpha: float, rng) -> Configuration:
    """Equilibrium conditioned on ``x_k = n``: the first k increments carry all the mass."""
    _check(n, alpha)
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must lie in 1..{n}, got {k}")
    eta = np.zeros(n)
    eta[:k] = sample_scaled_dirichlet(k, float(n), alpha, rng)
    x = np.minimum(np.cumsum(eta)[: n - 1], n)
    x[k - 1 :] = n
    return Configuration(n, x)


def sample_wilson_initial(n: int, alpha: float, rng) -> Configuration:
    """Random start for the Wilson lower bound: all mass in the first floor(n/2) increments."""
    return sample_pinned_equilibrium(n // 2, n, alpha, rng)


def compare(a: Configuration, b: Configuration) -> OrderRelation:
    if a.n != b.n or a.pinned != b.pinned:
        raise ConfigurationError(
            f"cannot compare n={a.n}/pinned={a.pinned} with n={b.n}/pinned={b.pinned}"
        )
    xa, xb = a.positions, b.positions
    ea, eb = np.diff(a.padded()), np.diff(b.padded())
    return OrderRelation(
        coordinate_le=bool(np.all(xa <= xb)),
        gradient_le=bool(np.all(ea <= eb)),
        coordinate_ge=bool(np.all(xa >= xb)),
        gradient_ge=bool(np.all(ea >= eb)),
    )
