"""Closed-form eigenstructure, heat-equation means, mean-field gap, decay fits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Configuration

__all__ = [
    "EigenMode",
    "DecayFit",
    "FitError",
    "eigenvalue",
    "spectral_gap",
    "eigen_stat",
    "sine_basis",
    "heat_mean_curve",
    "meanfield_gap",
    "meanfield_stat",
    "meanfield_stationary_mean",
    "fit_decay_rate",
    "fit_decay_from_samples",
]


def _check_mode(j, n):
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    if int(j) != j or not 1 <= j <= n - 1:
        raise ValueError(f"mode index must lie in 1..{n - 1}, got {j!r}")


def eigenvalue(j: int, n: int) -> float:
    _check_mode(j, n)
    return 1.0 - math.cos(j * math.pi / n)


def spectral_gap(n: int) -> float:
    return eigenvalue(1, n)


def sine_basis(n: int) -> np.ndarray:
    """Matrix ``phi[j-1, k-1] = sqrt(2/n) sin(j k pi / n)``, orthonormal and symmetric."""
    k = np.arange(1, n)
    return math.sqrt(2.0 / n) * np.sin(np.outer(k, k) * math.pi / n)


@dataclass(frozen=True)
class EigenMode:
    j: int
    n: int

    def __post_init__(self):
        _check_mode(self.j, self.n)

    @property
    def lam(self) -> float:
        return eigenvalue(self.j, self.n)

    @property
    def basis(self) -> np.ndarray:
        k = np.arange(1, self.n)
        return math.sqrt(2.0 / self.n) * np.sin(self.j * k * math.pi / self.n)


def eigen_stat(j: int, c: Configuration) -> float:
    """``sum_k sin(j pi k / n) (x_k - k)`` over k = 1..n-1."""
    _check_mode(j, c.n)
    k = np.arange(1, c.n)
    return float(np.sin(j * math.pi * k / c.n) @ (c.positions[: c.n - 1] - k))


def heat_mean_curve(x0: Configuration, times) -> np.ndarray:
    """Exact ``E[X_k(t)]`` for k = 1..n-1, shape (len(times), n-1).

    Coordinate means solve the discrete heat equation with rate 1/2 on the
    Laplacian, so mode j decays at ``1 - cos(j pi / n)``.
    """
    if not x0.pinned:
        raise ValueError("the sine expansion needs a pinned right wall")
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    if np.any(t < 0):
        raise ValueError("times must be >= 0")
    n = x0.n
    phi = sine_basis(n)
    k = np.arange(1, n, dtype=np.float64)
    coef = phi @ (x0.positions - k)
    lam = 1.0 - np.cos(np.arange(1, n) * math.pi / n)
    return (coef * np.exp(-np.outer(t, lam))) @ phi + k


def meanfield_gap(n: int, alpha: float) -> float:
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    return (alpha * n + 1.0) / ((2.0 * alpha + 1.0) * n)


def meanfield_stat(s) -> float:
    """Sum of squared increments of a mean-field state (or raw array)."""
    eta = np.asarray(getattr(s, "eta", s), dtype=np.float64)
    return float(eta @ eta)


def meanfield_stationary_mean(n: int, alpha: float, total: float | None = None) -> float:
    """Equilibrium mean of ``sum eta_i^2`` for Dirichlet(alpha) increments scaled to ``total``."""
    total = float(n) if total is None else float(total)
    return total**2 * (alpha + 1.0) / (n * alpha + 1.0)


def _floor(se, m):
    # a deterministic point (e.g. t = 0) carries only rounding noise
    return np.maximum(se, 1e-12 * np.abs(m))


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class DecayFit:
    rate: float
    se: float
    window: tuple
    points: int


def _window(t, m, se, threshold, min_points):
    if se is None:
        keep = m > 0
    else:
        keep = m > threshold * se
    # truncate at the first point where the signal drowns
    stop = int(np.argmin(keep)) if not keep.all() else keep.size
    if stop < min_points:
        raise FitError(
            f"only {stop} leading points have mean > {threshold} s.e.; need at least {min_points}"
        )
    return stop


def _wls_slope(t, y, w):
    tw = np.sum(w * t) / np.sum(w)
    yw = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (t - tw) ** 2)
    slope = np.sum(w * (t - tw) * (y - yw)) / sxx
    return slope, sxx


def fit_decay_rate(times, means, se=None, threshold: float = 5.0, min_points: int = 3) -> DecayFit:
    """Weighted least squares of ``log(mean)`` on ``t``; returns the decay rate.

    Weights are ``(mean / se)^2``, the inverse delta-method variance of
    ``log(mean)``.  Without ``se`` the fit is unweighted and the reported
    error is the residual-based one.  Points are used from the start up to
    the first one whose mean is not above ``threshold`` standard errors.
    """
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    m = np.asarray(means, dtype=np.float64).reshape(-1)
    s = None if se is None else np.asarray(se, dtype=np.float64).reshape(-1)
    if t.size != m.size or (s is not None and s.size != m.size):
        raise ValueError("times, means and se must have equal lengths")
    stop = _window(t, m, s, threshold, min_points)
    t, m = t[:stop], m[:stop]
    y = np.log(m)
    if s is None:
        w = np.ones_like(t)
        slope, sxx = _wls_slope(t, y, w)
        dof = t.size - 2
        resid = y - (np.mean(y) + slope * (t - np.mean(t)))
        var = float(resid @ resid) / dof / sxx if dof > 0 else 0.0
    else:
        w = (m / _floor(s[:stop], m)) ** 2
        slope, sxx = _wls_slope(t, y, w)
        var = 1.0 / sxx
    return DecayFit(float(-slope) + 0.0, math.sqrt(var), (float(t[0]), float(t[-1])), int(t.size))


def fit_decay_from_samples(
    times, samples, center: float = 0.0, threshold: float = 5.0, groups: int = 20
) -> DecayFit:
    """Decay fit from per-replica values ``samples`` (reps, len(times)).

    The values at different times come from the same trajectories and are
    correlated, so the rate's standard error is a delete-one-group jackknife
    over replica blocks rather than the independent-point WLS formula.
    """
    x = np.asarray(samples, dtype=np.float64) - center
    reps = x.shape[0]
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(reps)
    fit = fit_decay_rate(times, mean, se, threshold)
    stop = fit.points
    t = np.asarray(times, dtype=np.float64)[:stop]
    g = min(groups, reps)
    edges = np.linspace(0, reps, g + 1).astype(int)
    sums = np.add.reduceat(x[:, :stop], edges[:-1], axis=0)
    sq = np.add.reduceat(x[:, :stop] ** 2, edges[:-1], axis=0)
    counts = np.diff(edges)
    tot, totsq = sums.sum(axis=0), sq.sum(axis=0)
    rates = np.empty(g)
    for i in range(g):
        c = reps - counts[i]
        mu = (tot - sums[i]) / c
        var = np.maximum(((totsq - sq[i]) - c * mu**2) / (c - 1), 0.0)
        if np.any(mu <= 0):
            raise FitError("a jackknife subsample lost the positive signal; use more replicas")
        slope, _ = _wls_slope(t, np.log(mu), (mu / _floor(np.sqrt(var / c), mu)) ** 2)
        rates[i] = -slope
    jk_se = math.sqrt((g - 1) / g * np.sum((rates - rates.mean()) ** 2))
    return DecayFit(fit.rate, jk_se, fit.window, fit.points)
