"""Maximal-sticking coupling of two walks, the area process and coalescence.

At an event on site k the two particles resample on their own intervals
``I^a = [a_{k-1}, a_{k+1}]`` and ``I^b = [b_{k-1}, b_{k+1}]``.  A draw
``V ~ Beta(I^a)`` is shared with probability ``min(1, B(I^b)(V) / B(I^a)(V))``;
otherwise ``b_k`` comes from the residual ``[B(I^b) - B(I^a)]_+`` by
rejection.  The two coordinates then coincide with probability exactly
``1 - TV(B(I^a), B(I^b))`` and each side is an exact Beta draw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import Configuration, ConfigurationError, sample_equilibrium, validate
from .dynamics import ObserverSeries, SimulationError, _times
from .observers import resolve
from .streams import map_replicas, replica_rng

__all__ = [
    "CoupledPair",
    "AreaRecord",
    "CouplingBudgetError",
    "maximal_coupled_update",
    "coupled_simulate",
    "area",
    "bracket_rate_bound",
    "area_record",
    "coalescence_time_vs_equilibrium",
    "coalescence_times",
    "baibi_sides",
]


class CouplingBudgetError(SimulationError):
    """The residual rejection loop used up its proposal budget."""


@dataclass(frozen=True, eq=False)
class CoupledPair:
    a: Configuration
    b: Configuration
    alpha: float
    ordered: bool = False

    def __post_init__(self):
        if self.a.n != self.b.n or self.a.pinned != self.b.pinned:
            raise ConfigurationError(
                f"pair mismatch: n={self.a.n}/pinned={self.a.pinned} vs n={self.b.n}/pinned={self.b.pinned}"
            )
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        for side in (self.a, self.b):
            problems = validate(side)
            if problems:
                raise ConfigurationError("; ".join(problems))
        if self.ordered and not np.all(self.a.positions <= self.b.positions):
            raise ConfigurationError("pair flagged as ordered but a <= b fails")

    @classmethod
    def of(cls, a: Configuration, b: Configuration, alpha: float) -> "CoupledPair":
        """Pair with ``ordered`` set when order is guaranteed: a <= b and alpha >= 1."""
        return cls(a, b, alpha, bool(alpha >= 1 and np.all(a.positions <= b.positions)))

    @property
    def n(self) -> int:
        return self.a.n

    @property
    def coalesced(self) -> bool:
        return self.a == self.b


@dataclass(frozen=True)
class AreaRecord:
    time: float
    area: float
    bracket_rate_bound: float
    midpoint_gaps: np.ndarray = field(repr=False)
    grad_a: np.ndarray = field(repr=False)
    grad_b: np.ndarray = field(repr=False)


def _local(pa, pb):
    ga = pa[2:] - pa[:-2]
    gb = pb[2:] - pb[:-2]
    dmid = np.abs(0.5 * (pb[:-2] + pb[2:]) - 0.5 * (pa[:-2] + pa[2:]))
    return dmid, ga, gb


def area(p: CoupledPair) -> float:
    """l1 distance between the two interfaces."""
    return float(np.abs(p.b.positions - p.a.positions).sum())


def bracket_rate_bound(p: CoupledPair) -> float:
    """``sum_k min(dmid_k * G_k, G_k^2)`` with G_k the larger of the two local gradients."""
    dmid, ga, gb = _local(p.a.padded(), p.b.padded())
    g = np.maximum(ga, gb)
    return float(np.minimum(dmid * g, g * g).sum())


def area_record(p: CoupledPair, time: float = 0.0) -> AreaRecord:
    dmid, ga, gb = _local(p.a.padded(), p.b.padded())
    return AreaRecord(time, area(p), bracket_rate_bound(p), dmid, ga, gb)


def _raise_budget(diag, alpha):
    raise CouplingBudgetError(
        f"residual rejection exceeded {_kernels.BUDGET} proposals "
        f"(alpha={alpha}, t={diag[0]:.6g}, site={int(diag[1])}, I^b=[{diag[2]!r}, {diag[3]!r}])"
    )


def maximal_coupled_update(p: CoupledPair, site: int, rng) -> CoupledPair:
    if not 1 <= site <= p.n - 1:
        raise ValueError(f"site must lie in 1..{p.n - 1}, got {site}")
    fa, fb = p.a.padded(), p.b.padded()
    if p.coalesced:
        u = _kernels.draw_beta(rng, float(p.alpha))
        if u < 0:
            raise SimulationError("Gamma pair vanished 100 times")
        v = _kernels._convex(u, fa[site - 1], fa[site + 1])
        va = vb = v
    else:
        va, vb, _, status = _kernels.maximal_pair(
            rng, float(p.alpha), fa[site - 1], fa[site + 1], fb[site - 1], fb[site + 1]
        )
        if status == _kernels.STATUS_BUDGET:
            _raise_budget(np.array([math.nan, site, fb[site - 1], fb[site + 1]]), p.alpha)
        if status != _kernels.STATUS_OK:
            raise SimulationError("Gamma pair vanished 100 times")
    fa[site], fb[site] = va, vb
    a = Configuration.from_padded(fa, p.a.pinned)
    b = Configuration.from_padded(fb, p.b.pinned)
    return CoupledPair(a, b, p.alpha, p.ordered)


def _pair_values(names, out_a, out_b, qv, bint):
    n = out_a.shape[-1] - 1
    cols = []
    for name in names:
        if name == "area":
            cols.append(np.abs(out_b[:, 1:n] - out_a[:, 1:n]).sum(axis=-1))
        elif name == "max_gap":
            cols.append(np.abs(out_b[:, 1:n] - out_a[:, 1:n]).max(axis=-1))
        elif name == "bracket":
            dmid = np.abs(0.5 * (out_b[:, :-2] + out_b[:, 2:]) - 0.5 * (out_a[:, :-2] + out_a[:, 2:]))
            g = np.maximum(out_a[:, 2:] - out_a[:, :-2], out_b[:, 2:] - out_b[:, :-2])
            cols.append(np.minimum(dmid * g, g * g).sum(axis=-1))
        elif name == "qv":
            cols.append(qv.copy())
        elif name == "bound_integral":
            cols.append(bint.copy())
        elif name.startswith(("a.", "b.")):
            side = out_a if name[0] == "a" else out_b
            cols.append(resolve(name[2:], n)(side))
        else:
            raise ValueError(f"unknown pair statistic {name!r}")
    return np.stack(cols, axis=-1) if cols else np.empty((out_a.shape[0], 0))


def _run_pair(a, b, alpha, horizon, phase1_end, ts, rng, track):
    n = a.size - 1
    out_a = np.empty((ts.size, n + 1))
    out_b = np.empty((ts.size, n + 1))
    qv = np.zeros(ts.size)
    bint = np.zeros(ts.size)
    diag = np.zeros(4)
    status, tau, events = _kernels.run_pair(
        a, b, float(alpha), float(horizon), float(phase1_end), ts, rng, out_a, out_b, qv, bint, diag, track
    )
    if status == _kernels.STATUS_BUDGET:
        _raise_budget(diag, alpha)
    if status != _kernels.STATUS_OK:
        raise SimulationError("Gamma pair vanished 100 times")
    return out_a, out_b, qv, bint, (None if tau < 0 else tau), events


def coupled_simulate(
    p: CoupledPair,
    horizon: float,
    observers=("area",),
    sample_times=None,
    rng=None,
) -> ObserverSeries:
    """Evolve ``p`` under the maximal coupling.

    Pair statistics: ``area``, ``max_gap``, ``bracket`` (bound at the sample
    time), ``qv`` (running sum of squared area jumps), ``bound_integral``
    (time integral of the bound) and ``a.<stat>`` / ``b.<stat>`` for any
    single-configuration statistic.  ``extras["tau"]`` is the coalescence
    time, or None if the pair is still apart at the horizon.
    """
    ts = _times(sample_times, horizon)
    rng = np.random.default_rng() if rng is None else rng
    names = tuple(observers)
    track = any(s in ("qv", "bound_integral") for s in names)
    a, b = p.a.padded(), p.b.padded()
    out_a, out_b, qv, bint, tau, events = _run_pair(a, b, p.alpha, horizon, 0.0, ts, rng, track)
    final = CoupledPair(
        Configuration.from_padded(a, p.a.pinned), Configuration.from_padded(b, p.b.pinned), p.alpha, p.ordered
    )
    return ObserverSeries(
        names,
        ts,
        _pair_values(names, out_a, out_b, qv, bint),
        final,
        extras={"tau": tau, "events": events, "states_a": out_a, "states_b": out_b},
    )


def coalescence_time_vs_equilibrium(
    x0: Configuration, alpha: float, phase1_end: float, cap: float, rng
) -> float:
    """Coalescence time of ``x0`` with an equilibrium partner, ``math.inf`` on timeout.

    The partner is drawn from ``rng`` first.  Up to ``phase1_end`` both
    trajectories share every mark; afterwards the maximal coupling runs on
    unordered pairs.
    """
    if not phase1_end >= 0:
        raise ValueError(f"phase1_end must be >= 0, got {phase1_end!r}")
    if not cap > phase1_end:
        raise ValueError(f"cap must exceed phase1_end, got cap={cap!r}, phase1_end={phase1_end!r}")
    partner = sample_equilibrium(x0.n, alpha, rng)
    return _tau(x0.padded(), partner.padded(), alpha, phase1_end, cap, rng)


def _tau(a, b, alpha, phase1_end, cap, rng):
    empty = np.empty(0)
    *_, tau, _ = _run_pair(a, b, alpha, cap, phase1_end, empty, rng, False)
    return math.inf if tau is None else tau


def coalescence_times(
    start, alpha: float, phase1_end: float, cap: float, reps: int, seed: int, tag: int = 0, workers=None
) -> np.ndarray:
    """Coalescence times against equilibrium partners for ``reps`` replicas.

    ``start`` is a Configuration or a callable ``rng -> Configuration`` that
    draws from the replica stream before the partner is drawn.
    """
    if not cap > phase1_end >= 0:
        raise ValueError(f"need cap > phase1_end >= 0, got cap={cap!r}, phase1_end={phase1_end!r}")
    out = np.empty(reps)

    def block(lo, hi):
        for i in range(lo, hi):
            rng = replica_rng(seed, i, tag)
            x0 = start(rng) if callable(start) else start
            partner = sample_equilibrium(x0.n, alpha, rng)
            out[i] = _tau(x0.padded(), partner.padded(), alpha, phase1_end, cap, rng)

    map_replicas(block, reps, workers)
    return out


def baibi_sides(a, b, B: float):
    """Both sides of the deterministic inequality for sorted ``a`` and arbitrary ``b``.

    Returns ``(lhs, rhs)`` with ``lhs = sum a_i min(a_i, b_i)`` and
    ``rhs = sum_{i <= K} a_i^2`` for ``K = floor(sum b / B)``, or
    ``a_1 min(a_1, sum b)`` when K = 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("a and b must be nonempty and of equal length")
    if np.any(np.diff(a) < 0):
        raise ValueError("a must be sorted increasingly")
    if np.any(a <= 0) or np.any(b < 0) or a.max() > B or b.max() > B:
        raise ValueError("need 0 < a_i <= B and 0 <= b_i <= B")
    lhs = float(np.sum(a * np.minimum(a, b)))
    sigma = float(b.sum())
    K = int(math.floor(sigma / B))
    rhs = float(np.sum(a[:K] ** 2)) if K > 0 else float(a[0] * min(a[0], sigma))
    return lhs, rhs
