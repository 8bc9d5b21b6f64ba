"""Monte Carlo estimators bracketing the distance to equilibrium, and friends.

Every estimator takes a master ``seed``; replica ``i`` of a given estimator
draws from ``replica_rng(seed, i, tag)`` with a tag fixed per role below, so
results do not depend on the number of worker threads.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .core import (
    Configuration,
    identity,
    sample_equilibrium,
    sample_scaled_dirichlet,
    sample_wilson_initial,
    vee,
    wedge,
)
from .coupling import coalescence_times
from .dynamics import CensorScheme, simulate_replicas
from .observers import eigen_weights, special_particles
from .spectral import spectral_gap
from .streams import replica_rng

__all__ = [
    "EstimateWithError",
    "MixingProfile",
    "tv_lower_witness",
    "tv_lower_profile",
    "tv_upper_coupling",
    "mixing_profile",
    "crossing_time",
    "fkg_correlation",
    "fkg_statistic",
    "censoring_domination",
    "separation_witness",
    "separation_profile",
    "special_particle_W",
    "wilson_moments",
    "equilibrium_batch",
    "start_policy",
]

TAG_WILSON = 1
TAG_EQUILIBRIUM = 2
TAG_COUPLING = 3
TAG_FKG = 4
TAG_CENSORED = 5
TAG_FREE = 6
TAG_SEPARATION = 7
TAG_SPECIAL = 8


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    se: float
    reps: int
    seed: int

    def __post_init__(self):
        if not self.se >= 0:
            raise ValueError(f"standard error must be >= 0, got {self.se!r}")
        if self.reps < 1:
            raise ValueError(f"replica count must be >= 1, got {self.reps}")


def _binomial(p, reps):
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)


def _check(n, alpha, reps, min_reps=1):
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if reps < min_reps:
        raise ValueError(f"reps must be >= {min_reps}, got {reps}")


def equilibrium_batch(n: int, alpha: float, reps: int, seed: int, tag: int = TAG_EQUILIBRIUM) -> np.ndarray:
    """``reps`` exact equilibrium draws as padded states, shape (reps, n+1)."""
    rng = replica_rng(seed, 0, tag)
    g = rng.standard_gamma(alpha, size=(reps, n))
    s = g.sum(axis=1)
    for row in np.flatnonzero(s <= 0):
        g[row] = sample_scaled_dirichlet(n, 1.0, alpha, rng)
        s[row] = 1.0
    X = np.zeros((reps, n + 1))
    X[:, 1:] = np.minimum(np.cumsum(n * g / s[:, None], axis=1), n)
    X[:, n] = n
    return X


def _f1(X, n):
    k = np.arange(1, n, dtype=np.float64)
    return (X[..., 1:n] - k) @ eigen_weights(1, n)


def _wilson_paths(n, alpha, times, reps, seed, observers=("f1",), workers=None):
    grid = np.concatenate([[0.0], np.asarray(times, dtype=np.float64)])
    order = np.argsort(grid, kind="stable")
    vals = simulate_replicas(
        lambda rng: sample_wilson_initial(n, alpha, rng),
        alpha,
        grid[order],
        reps,
        seed,
        observers=observers,
        tag=TAG_WILSON,
        workers=workers,
    )
    out = np.empty_like(vals)
    out[:, order] = vals
    return out[:, 0], out[:, 1:]


def tv_lower_profile(n, alpha, times, reps, seed, workers=None):
    """Wilson witness at every time of ``times``; list of EstimateWithError."""
    _check(n, alpha, reps, 100)
    times = np.asarray(times, dtype=np.float64)
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    f0, ft = _wilson_paths(n, alpha, times, reps, seed, workers=workers)
    f0, ft = f0[:, 0], ft[..., 0]
    feq = _f1(equilibrium_batch(n, alpha, reps, seed), n)
    gap = spectral_gap(n)
    out = []
    for i, t in enumerate(times):
        thr = 0.5 * f0.mean() * math.exp(-gap * t)
        p1 = float(np.mean(ft[:, i] >= thr))
        p2 = float(np.mean(feq >= thr))
        se = math.sqrt(_binomial(p1, reps) ** 2 + _binomial(p2, reps) ** 2)
        out.append(EstimateWithError(min(max(p1 - p2, 0.0), 1.0), se, reps, seed))
    return out


def tv_lower_witness(n: int, alpha: float, t: float, reps: int, seed: int, workers=None) -> EstimateWithError:
    """``P(f(X_t) >= thr) - pi(f >= thr)`` from the Wilson start, clamped to [0, 1].

    ``thr`` is half the empirical initial mean of f, propagated by the exact
    eigen-decay ``exp(-gap t)``.
    """
    return tv_lower_profile(n, alpha, [t], reps, seed, workers)[0]


def start_policy(start, n, alpha):
    if isinstance(start, Configuration) or callable(start):
        return start
    policies = {
        "wedge": lambda: wedge(n),
        "vee": lambda: vee(n),
        "identity": lambda: identity(n),
        "wilson": lambda: (lambda rng: sample_wilson_initial(n, alpha, rng)),
        "equilibrium": lambda: (lambda rng: sample_equilibrium(n, alpha, rng)),
    }
    if start not in policies:
        raise ValueError(f"unknown start policy {start!r}; choose from {sorted(policies)}")
    return policies[start]()


def tv_upper_coupling(
    n: int, alpha: float, t: float, start="wedge", reps: int = 1000, seed: int = 0, workers=None
) -> EstimateWithError:
    """``P[tau > t]`` for the two-phase coupling with an equilibrium partner.

    Shared marks run up to ``min(t/2, 4 log n / gap)``, then the maximal
    coupling up to ``t``.  ``start`` is a Configuration, a callable
    ``rng -> Configuration`` or one of ``wedge``, ``vee``, ``wilson``,
    ``equilibrium``.
    """
    _check(n, alpha, reps)
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    policy = start_policy(start, n, alpha)
    if t == 0:
        # nothing can coalesce in zero time: tau > 0 unless the pair starts equal
        apart = 0
        for i in range(reps):
            rng = replica_rng(seed, i, TAG_COUPLING)
            x0 = policy(rng) if callable(policy) else policy
            apart += x0 != sample_equilibrium(n, alpha, rng)
        p = apart / reps
        return EstimateWithError(p, _binomial(p, reps), reps, seed)
    phase1 = min(t / 2.0, 4.0 * math.log(n) / spectral_gap(n))
    tau = coalescence_times(policy, alpha, phase1, t, reps, seed, TAG_COUPLING, workers)
    p = float(np.mean(tau > t))
    return EstimateWithError(p, _binomial(p, reps), reps, seed)


def crossing_time(times, values, level):
    """First time the piecewise-linear profile reaches ``level``; None if never."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    below = np.flatnonzero(values <= level)
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(times[0])
    t0, t1, v0, v1 = times[i - 1], times[i], values[i - 1], values[i]
    return float(t0 + (v0 - level) * (t1 - t0) / (v0 - v1))


LEVELS = (0.75, 0.5, 0.25)


@dataclass(frozen=True)
class MixingProfile:
    times: np.ndarray
    lower: tuple
    upper: tuple
    crossings: dict  # {"lower": {level: t}, "upper": {level: t}}

    def column(self, which: str):
        est = self.lower if which == "lower" else self.upper
        return np.array([e.value for e in est]), np.array([e.se for e in est])


def mixing_profile(
    n: int, alpha: float, time_grid, reps: int, seed: int, upper_reps: int | None = None, workers=None
) -> MixingProfile:
    """Wilson lower bound and coalescence upper bound on a time grid.

    The upper column couples the wedge with an equilibrium partner.  The
    witness set of the lower column is increasing, so by monotonicity its
    excess probability from any start is at most the one from the wedge,
    which the coalescence probability dominates.
    """
    grid = np.asarray(time_grid, dtype=np.float64)
    if np.any(np.diff(grid) < 0):
        raise ValueError("time grid must be sorted")
    lower = tuple(tv_lower_profile(n, alpha, grid, reps, seed, workers))
    ur = reps if upper_reps is None else upper_reps
    upper = tuple(tv_upper_coupling(n, alpha, float(t), "wedge", ur, seed, workers) for t in grid)
    crossings = {
        name: {lvl: crossing_time(grid, [e.value for e in col], lvl) for lvl in LEVELS}
        for name, col in (("lower", lower), ("upper", upper))
    }
    return MixingProfile(grid, lower, upper, crossings)


_IND = re.compile(r"1\[x(\d+)>=([-+0-9.eE]+)\]$")


def fkg_statistic(name: str, n: int):
    """Increasing statistics ``x<k>``, ``xlast``, ``f1``, ``1[x<k>>=c]`` on padded batches.

    A leading ``N-`` gives ``n - stat``, which is decreasing.
    """
    if name.startswith("N-"):
        inner = fkg_statistic(name[2:], n)
        return lambda X: n - inner(X)
    if name == "xlast":
        return lambda X: X[:, n - 1]
    if name == "f1":
        return lambda X: _f1(X, n)
    m = re.match(r"x(\d+)$", name)
    if m and 1 <= int(m.group(1)) <= n - 1:
        k = int(m.group(1))
        return lambda X: X[:, k]
    m = _IND.match(name)
    if m and 1 <= int(m.group(1)) <= n - 1:
        k, c = int(m.group(1)), float(m.group(2))
        return lambda X: (X[:, k] >= c).astype(np.float64)
    raise ValueError(f"unknown statistic {name!r}; expected x<k>, xlast, f1, 1[x<k>>=c] or N-<stat>")


def fkg_correlation(
    n: int, alpha: float, f_name: str, g_name: str, reps: int, seed: int
) -> EstimateWithError:
    """Equilibrium covariance of two registry statistics, with delete-one jackknife error."""
    _check(n, alpha, reps, 3)
    f = fkg_statistic(f_name, n)
    g = fkg_statistic(g_name, n)
    X = equilibrium_batch(n, alpha, reps, seed, TAG_FKG)
    a = f(X)
    b = g(X)
    a = a - a.mean()
    b = b - b.mean()
    m = reps - 1
    sa, sb, sab = a.sum(), b.sum(), (a * b).sum()
    cov = (sab - sa * sb / reps) / m
    loo = ((sab - a * b) - (sa - a) * (sb - b) / m) / (m - 1)
    se = math.sqrt(m / reps * np.sum((loo - loo.mean()) ** 2))
    return EstimateWithError(float(cov), se, reps, seed)


def _censor_sites(n, K, censored):
    if censored == "special":
        return frozenset(int(u) for u in special_particles(n, K))
    if censored == "all":
        return frozenset(range(1, n))
    return frozenset(int(s) for s in censored)


def censoring_domination(
    n: int, alpha: float, K: int, t: float, reps: int, seed: int, censored="special", workers=None
):
    """Per-coordinate ``E_censored[x_k] - E[x_k]`` from the wedge at time t.

    The censored chain never updates the special particles ``floor(i n / K)``
    (or the sites given in ``censored``).  The two chains use independent
    noise.  Returns ``(diff, se)`` arrays over k = 1..n-1.
    """
    _check(n, alpha, reps, 2)
    if not 2 <= K <= n:
        raise ValueError(f"K must lie in 2..{n}, got {K}")
    names = [f"x{k}" for k in range(1, n)]
    scheme = CensorScheme.constant(_censor_sites(n, K, censored))
    xc = simulate_replicas(wedge(n), alpha, [t], reps, seed, names, scheme, TAG_CENSORED, workers)[:, 0]
    xu = simulate_replicas(wedge(n), alpha, [t], reps, seed, names, None, TAG_FREE, workers)[:, 0]
    diff = xc.mean(axis=0) - xu.mean(axis=0)
    se = np.sqrt(xc.var(axis=0, ddof=1) / reps + xu.var(axis=0, ddof=1) / reps)
    return diff, se


def separation_profile(n, alpha, times, reps, seed, workers=None):
    _check(n, alpha, reps)
    mid = n // 2
    x = simulate_replicas(wedge(n), alpha, _sorted(times), reps, seed, [f"x{mid}"], None, TAG_SEPARATION, workers)
    hits = x[..., 0] >= n / 2 + 1
    return [EstimateWithError(float(p), _binomial(float(p), reps), reps, seed) for p in hits.mean(axis=0)]


def separation_witness(n: int, alpha: float, t: float, reps: int, seed: int, workers=None) -> EstimateWithError:
    """``P[X^wedge_{floor(n/2)}(t) >= n/2 + 1]``."""
    return separation_profile(n, alpha, [t], reps, seed, workers)[0]


def _sorted(times):
    ts = np.asarray(times, dtype=np.float64).reshape(-1)
    if np.any(np.diff(ts) < 0):
        raise ValueError("times must be sorted")
    return ts


def _variance_estimate(x, reps, seed):
    c = x - x.mean()
    var = float(np.mean(c**2) * reps / (reps - 1))
    m4 = float(np.mean(c**4))
    return EstimateWithError(var, math.sqrt(max(m4 - var**2, 0.0) / reps), reps, seed)


def special_particle_W(n: int, alpha: float, K: int, times, reps: int, seed: int, workers=None):
    """Mean and variance of ``W = sum_i (x_{u_i} - u_i)`` from the wedge.

    ``times`` may be a scalar or a sorted sequence; returns a list of
    ``(mean, variance)`` EstimateWithError pairs, one per time (or a single
    pair for a scalar).
    """
    _check(n, alpha, reps, 2)
    special_particles(n, K)
    scalar = np.ndim(times) == 0
    ts = _sorted(np.atleast_1d(times))
    w = simulate_replicas(wedge(n), alpha, ts, reps, seed, [f"W{K}"], None, TAG_SPECIAL, workers)[..., 0]
    out = []
    for i in range(ts.size):
        col = w[:, i]
        mean = EstimateWithError(float(col.mean()), float(col.std(ddof=1) / math.sqrt(reps)), reps, seed)
        out.append((mean, _variance_estimate(col, reps, seed)))
    return out[0] if scalar else out


def wilson_moments(n: int, alpha: float, times, reps: int, seed: int, modes=(1, 2, 3), workers=None):
    """``Var[f^(j)(X_t)] j^2 / n^3`` from the Wilson start, shape (len(times), len(modes)).

    Returns ``(scaled_variance, se, initial_f1)``; ``initial_f1`` holds the
    per-replica values of f at time 0.
    """
    _check(n, alpha, reps, 2)
    ts = _sorted(times)
    names = [f"f{j}" for j in modes]
    f0, ft = _wilson_paths(n, alpha, ts, reps, seed, observers=names, workers=workers)
    scale = np.array(modes, dtype=np.float64) ** 2 / n**3
    var = np.empty((ts.size, len(modes)))
    se = np.empty_like(var)
    for i in range(ts.size):
        for jj in range(len(modes)):
            est = _variance_estimate(ft[:, i, jj], reps, seed)
            var[i, jj] = est.value * scale[jj]
            se[i, jj] = est.se * scale[jj]
    return var, se, f0[:, names.index("f1")] if "f1" in names else None
