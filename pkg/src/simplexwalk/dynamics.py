"""Event-driven simulation of the Beta resampling walk.

The n-1 independent rate-one clocks are realized as one clock of rate n-1
with a uniform site.  Each event draws an exponential waiting time, a site
in 1..n-1 and a symmetric Beta(alpha) mark, in that order, even when the
site is censored, so censored and uncensored runs with the same generator
see the same marks.

Sampled values are right-continuous: the value recorded at time t includes
every update at times <= t.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .beta import sample_symmetric_beta
from .core import Configuration, ConfigurationError, validate
from .observers import evaluate
from .streams import map_replicas, replica_rng

__all__ = [
    "UpdateEvent",
    "CensorScheme",
    "ObserverSeries",
    "MeanFieldState",
    "SimulationError",
    "next_event",
    "apply_update",
    "simulate",
    "grand_coupled_simulate",
    "meanfield_simulate",
    "simulate_replicas",
    "meanfield_replicas",
]


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class UpdateEvent:
    time: float
    site: int
    u: float

    def __post_init__(self):
        if not self.time >= 0:
            raise ValueError(f"event time must be >= 0, got {self.time!r}")
        if not 0.0 <= self.u <= 1.0:
            raise ValueError(f"mark must lie in [0, 1], got {self.u!r}")


def _check_n(n):
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")


def next_event(n: int, alpha: float, clock: float, rng) -> UpdateEvent:
    _check_n(n)
    wait = rng.standard_exponential() / (n - 1)
    site = int(rng.integers(1, n))
    u = sample_symmetric_beta(alpha, rng)
    return UpdateEvent(clock + wait, site, u)


def _convex(u, lo, hi):
    return min(max(u * lo + (1.0 - u) * hi, lo), hi)


def apply_update(c: Configuration, site: int, u: float) -> Configuration:
    """Move particle ``site`` to ``u * x_{site-1} + (1 - u) * x_{site+1}``."""
    if not 1 <= site <= c.n - 1:
        raise ValueError(f"site must lie in 1..{c.n - 1}, got {site}")
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"mark must lie in [0, 1], got {u!r}")
    full = c.padded()
    full[site] = _convex(u, full[site - 1], full[site + 1])
    return Configuration.from_padded(full, c.pinned)


@dataclass(frozen=True)
class CensorScheme:
    """Piecewise-constant censored-site sets: ``segments = [(from_time, sites), ...]``.

    The set attached to ``from_time`` applies on ``[from_time, next from_time)``.
    """

    segments: tuple = ((0.0, frozenset()),)

    def __post_init__(self):
        segs = tuple((float(t0), frozenset(int(s) for s in sites)) for t0, sites in self.segments)
        if not segs:
            raise ValueError("censor schedule needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError(f"censor schedule must start at time 0, got {segs[0][0]!r}")
        for (t0, _), (t1, _) in zip(segs[:-1], segs[1:]):
            if not t1 > t0:
                raise ValueError(f"censor segment times must increase strictly: {t0!r} then {t1!r}")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, sites) -> "CensorScheme":
        return cls(((0.0, frozenset(sites)),))

    def censored(self, t: float) -> frozenset:
        current = self.segments[0][1]
        for t0, sites in self.segments:
            if t0 <= t:
                current = sites
        return current

    def arrays(self, n: int):
        starts = np.array([t0 for t0, _ in self.segments])
        mask = np.zeros((len(self.segments), n + 1), dtype=np.bool_)
        for row, (_, sites) in enumerate(self.segments):
            for s in sites:
                if not 1 <= s <= n - 1:
                    raise ValueError(f"censored site {s} outside 1..{n - 1}")
                mask[row, s] = True
        return starts, mask


NO_CENSORING = CensorScheme()


@dataclass(frozen=True, eq=False)
class ObserverSeries:
    names: tuple
    times: np.ndarray
    values: np.ndarray  # shape (len(times), len(names))
    final: object = None
    replica: int = 0
    extras: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


@dataclass(frozen=True, eq=False)
class MeanFieldState:
    eta: np.ndarray

    def __post_init__(self):
        eta = np.array(self.eta, dtype=np.float64).reshape(-1)
        if eta.size < 2:
            raise ValueError("a mean-field state needs at least two increments")
        if not np.all(np.isfinite(eta)) or np.any(eta < 0):
            raise ValueError("mean-field increments must be finite and nonnegative")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @property
    def n(self) -> int:
        return self.eta.size


def _times(sample_times, horizon):
    if not horizon >= 0:
        raise ValueError(f"horizon must be >= 0, got {horizon!r}")
    ts = np.array([horizon] if sample_times is None else sample_times, dtype=np.float64).reshape(-1)
    if ts.size and (ts.min() < 0 or ts.max() > horizon):
        raise ValueError(f"sample times must lie in [0, {horizon}]")
    if np.any(np.diff(ts) < 0):
        raise ValueError("sample times must be sorted")
    return ts


def _check_status(status):
    if status == _kernels.STATUS_GAMMA:
        raise SimulationError("Beta mark could not be drawn: Gamma pair vanished 100 times")


def _python_chains(states, alpha, horizon, ts, starts, mask, rng, out):
    # Reference implementation of _kernels.run_chains; same draw order.
    n = states.shape[1] - 1
    t, ptr, seg = 0.0, 0, 0
    while True:
        t_next = t + rng.standard_exponential() / (n - 1)
        while ptr < ts.size and ts[ptr] < t_next:
            out[ptr] = states
            ptr += 1
        if t_next > horizon:
            return
        t = t_next
        site = int(rng.integers(1, n))
        u = sample_symmetric_beta(alpha, rng)
        while seg + 1 < starts.size and starts[seg + 1] <= t:
            seg += 1
        if mask[seg, site]:
            continue
        for r in range(states.shape[0]):
            states[r, site] = _convex(u, states[r, site - 1], states[r, site + 1])


def _evolve(configs, alpha, horizon, censor, ts, rng, engine):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    n = configs[0].n
    censor = NO_CENSORING if censor is None else censor
    starts, mask = censor.arrays(n)
    states = np.stack([c.padded() for c in configs])
    out = np.empty((ts.size,) + states.shape)
    if engine == "compiled":
        status, _ = _kernels.run_chains(states, float(alpha), float(horizon), ts, starts, mask, rng, out)
        _check_status(status)
    elif engine == "python":
        _python_chains(states, alpha, horizon, ts, starts, mask, rng, out)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return states, out


def simulate(
    initial: Configuration,
    alpha: float,
    horizon: float,
    censor: CensorScheme | None = None,
    observers=("f1",),
    sample_times=None,
    rng=None,
    engine: str = "compiled",
) -> ObserverSeries:
    """Run one trajectory and record ``observers`` at ``sample_times``.

    ``sample_times`` defaults to ``[horizon]``.  ``engine="python"`` selects
    the slow reference loop, which consumes ``rng`` identically.
    """
    problems = validate(initial)
    if problems:
        raise ConfigurationError("; ".join(problems))
    ts = _times(sample_times, horizon)
    rng = np.random.default_rng() if rng is None else rng
    names = tuple(observers)
    states, out = _evolve([initial], alpha, horizon, censor, ts, rng, engine)
    return ObserverSeries(
        names, ts, evaluate(names, out[:, 0]), Configuration.from_padded(states[0], initial.pinned)
    )


def grand_coupled_simulate(
    initials,
    alpha: float,
    horizon: float,
    observers=("f1",),
    sample_times=None,
    rng=None,
    censor: CensorScheme | None = None,
    engine: str = "compiled",
):
    """Drive every configuration in ``initials`` with one shared event stream.

    Returns one series per initial; each carries the sampled padded states in
    ``extras["states"]`` so order relations can be checked afterwards.
    """
    initials = list(initials)
    if not initials:
        raise ValueError("need at least one initial configuration")
    n, pinned = initials[0].n, initials[0].pinned
    for c in initials:
        if c.n != n or c.pinned != pinned:
            raise ConfigurationError(
                f"size mismatch: n={c.n}/pinned={c.pinned} vs n={n}/pinned={pinned}"
            )
        problems = validate(c)
        if problems:
            raise ConfigurationError("; ".join(problems))
    ts = _times(sample_times, horizon)
    rng = np.random.default_rng() if rng is None else rng
    names = tuple(observers)
    states, out = _evolve(initials, alpha, horizon, censor, ts, rng, engine)
    return [
        ObserverSeries(
            names,
            ts,
            evaluate(names, out[:, r]),
            Configuration.from_padded(states[r], pinned),
            replica=r,
            extras={"states": out[:, r].copy()},
        )
        for r in range(len(initials))
    ]


def meanfield_simulate(
    initial: MeanFieldState,
    alpha: float,
    horizon: float,
    observers=("g",),
    sample_times=None,
    rng=None,
) -> ObserverSeries:
    """Exchange process on the complete graph; ``g`` is the sum of squared increments."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    ts = _times(sample_times, horizon)
    rng = np.random.default_rng() if rng is None else rng
    eta = initial.eta.copy()
    out = np.empty((ts.size, eta.size))
    status, events = _kernels.run_meanfield(eta, float(alpha), float(horizon), ts, rng, out)
    _check_status(status)
    names = tuple(observers)
    return ObserverSeries(
        names, ts, _meanfield_eval(names, out), MeanFieldState(eta), extras={"events": events}
    )


def _meanfield_eval(names, out):
    cols = []
    for name in names:
        if name == "g":
            cols.append((out**2).sum(axis=-1))
        elif name == "sum":
            cols.append(out.sum(axis=-1))
        elif name == "max_eta":
            cols.append(out.max(axis=-1))
        elif name.startswith("eta") and name[3:].isdigit() and 1 <= int(name[3:]) <= out.shape[-1]:
            cols.append(out[..., int(name[3:]) - 1])
        else:
            raise ValueError(f"unknown mean-field statistic {name!r}")
    return np.stack(cols, axis=-1)


def simulate_replicas(
    initial,
    alpha: float,
    sample_times,
    reps: int,
    seed: int,
    observers=("f1",),
    censor: CensorScheme | None = None,
    tag: int = 0,
    workers: int | None = None,
) -> np.ndarray:
    """Statistics of ``reps`` independent trajectories, shape (reps, len(times), len(observers)).

    ``initial`` is a Configuration or a callable ``rng -> Configuration``;
    a callable draws from the replica's own stream before the dynamics do.
    """
    ts = _times(sample_times, float(np.max(sample_times)) if len(sample_times) else 0.0)
    horizon = float(ts[-1]) if ts.size else 0.0
    names = tuple(observers)
    result = np.empty((reps, ts.size, len(names)))
    censor = NO_CENSORING if censor is None else censor

    def block(lo, hi):
        for i in range(lo, hi):
            rng = replica_rng(seed, i, tag)
            c = initial(rng) if callable(initial) else initial
            starts, mask = censor.arrays(c.n)
            states = c.padded()[None, :]
            out = np.empty((ts.size, 1, c.n + 1))
            status, _ = _kernels.run_chains(states, float(alpha), horizon, ts, starts, mask, rng, out)
            _check_status(status)
            result[i] = evaluate(names, out[:, 0])

    map_replicas(block, reps, workers)
    return result


def meanfield_replicas(
    initial: MeanFieldState,
    alpha: float,
    sample_times,
    reps: int,
    seed: int,
    tag: int = 0,
    workers: int | None = None,
) -> np.ndarray:
    """Sum of squared increments over replicas, shape (reps, len(times))."""
    ts = _times(sample_times, float(np.max(sample_times)))
    horizon = float(ts[-1])
    result = np.empty((reps, ts.size))

    def block(lo, hi):
        for i in range(lo, hi):
            rng = replica_rng(seed, i, tag)
            eta = initial.eta.copy()
            out = np.empty((ts.size, eta.size))
            status, _ = _kernels.run_meanfield(eta, float(alpha), horizon, ts, rng, out)
            _check_status(status)
            result[i] = (out**2).sum(axis=-1)

    map_replicas(block, reps, workers)
    return result
