"""Compiled event loops.

All kernels act on padded states ``[x_0, x_1, ..., x_n]`` whose end entries
are walls and never change.  Every event draws, in this order,

    standard_exponential, integers(1, n), standard_gamma(alpha) x 2

and the maximal coupling may then draw extra uniforms / Betas.  The pure
Python engine in :mod:`simplexwalk.dynamics` consumes a Generator in the
same order, which is what lets tests compare the two byte for byte.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

BUDGET = 1_000_000
STATUS_OK = 0
STATUS_BUDGET = 1
STATUS_GAMMA = 2


@njit(cache=True, nogil=True)
def draw_beta(rng, alpha):
    # symmetric Beta(alpha) as a Gamma ratio; -1 signals 100 vanishing pairs
    for _ in range(100):
        g1 = rng.standard_gamma(alpha)
        g2 = rng.standard_gamma(alpha)
        s = g1 + g2
        if s > 0.0:
            return g1 / s
    return -1.0


@njit(cache=True, nogil=True)
def _convex(u, lo, hi):
    v = u * lo + (1.0 - u) * hi
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


@njit(cache=True, nogil=True)
def run_chains(states, alpha, horizon, sample_times, censor_starts, censor_mask, rng, out):
    """Evolve ``states`` (m, n+1) under one shared event stream.

    ``out`` has shape (len(sample_times), m, n+1).  Returns (status, events).
    """
    m, n1 = states.shape
    n = n1 - 1
    ns = sample_times.shape[0]
    nseg = censor_starts.shape[0]
    rate = n - 1.0
    t = 0.0
    ptr = 0
    seg = 0
    events = 0
    while True:
        t_next = t + rng.standard_exponential() / rate
        while ptr < ns and sample_times[ptr] < t_next:
            out[ptr] = states
            ptr += 1
        if t_next > horizon:
            break
        t = t_next
        site = rng.integers(1, n)
        u = draw_beta(rng, alpha)
        if u < 0.0:
            return STATUS_GAMMA, events
        events += 1
        while seg + 1 < nseg and censor_starts[seg + 1] <= t:
            seg += 1
        if censor_mask[seg, site]:
            continue
        for r in range(m):
            states[r, site] = _convex(u, states[r, site - 1], states[r, site + 1])
    return STATUS_OK, events


@njit(cache=True, nogil=True)
def _log_kernel(alpha, v, lo, hi):
    # log of the unnormalised Beta density on [lo, hi] at v, -inf outside
    dl = v - lo
    dh = hi - v
    if dl < 0.0 or dh < 0.0:
        return -np.inf
    if alpha == 1.0:
        return -math.log(hi - lo)
    if dl == 0.0 or dh == 0.0:
        return np.inf if alpha < 1.0 else -np.inf
    return (alpha - 1.0) * (math.log(dl) + math.log(dh)) - (2.0 * alpha - 1.0) * math.log(hi - lo)


@njit(cache=True, nogil=True)
def _ratio(alpha, v, lo_num, hi_num, lo_den, hi_den):
    # density ratio B(num)(v) / B(den)(v); the shared normaliser cancels
    ln = _log_kernel(alpha, v, lo_num, hi_num)
    ld = _log_kernel(alpha, v, lo_den, hi_den)
    if ln == -np.inf:
        return 0.0
    if ld == -np.inf or ln == np.inf:
        return np.inf
    if ld == np.inf:
        return 0.0
    return math.exp(ln - ld)


@njit(cache=True, nogil=True)
def maximal_pair(rng, alpha, la, ha, lb, hb):
    """One maximal-coupling draw.  Returns (va, vb, stuck, status)."""
    if la == ha and lb == hb:
        return la, lb, la == lb, STATUS_OK
    if la == lb and ha == hb:
        u = draw_beta(rng, alpha)
        if u < 0.0:
            return la, lb, False, STATUS_GAMMA
        v = _convex(u, la, ha)
        return v, v, True, STATUS_OK
    if la == ha:
        u = draw_beta(rng, alpha)
        if u < 0.0:
            return la, lb, False, STATUS_GAMMA
        return la, _convex(u, lb, hb), False, STATUS_OK
    if lb == hb:
        u = draw_beta(rng, alpha)
        if u < 0.0:
            return la, lb, False, STATUS_GAMMA
        return _convex(u, la, ha), lb, False, STATUS_OK
    u = draw_beta(rng, alpha)
    if u < 0.0:
        return la, lb, False, STATUS_GAMMA
    v = _convex(u, la, ha)
    if rng.random() < _ratio(alpha, v, lb, hb, la, ha):
        return v, v, True, STATUS_OK
    for _ in range(BUDGET):
        w = draw_beta(rng, alpha)
        if w < 0.0:
            return v, lb, False, STATUS_GAMMA
        w = _convex(w, lb, hb)
        if rng.random() < 1.0 - _ratio(alpha, w, la, ha, lb, hb):
            return v, w, False, STATUS_OK
    return v, lb, False, STATUS_BUDGET


@njit(cache=True, nogil=True)
def _bracket_bound(a, b):
    n = a.shape[0] - 1
    total = 0.0
    for k in range(1, n):
        ga = a[k + 1] - a[k - 1]
        gb = b[k + 1] - b[k - 1]
        g = ga if ga > gb else gb
        dmid = abs(0.5 * (b[k - 1] + b[k + 1]) - 0.5 * (a[k - 1] + a[k + 1]))
        d = dmid * g
        total += d if d < g * g else g * g
    return total


@njit(cache=True, nogil=True)
def run_pair(a, b, alpha, horizon, phase1_end, sample_times, rng, out_a, out_b, qv, bint, diag, track):
    """Evolve a pair: shared-mark updates while t <= phase1_end, maximal coupling after.

    Returns (status, tau, events); tau = -1.0 if the pair has not coalesced by
    the horizon.  With ``track`` set, ``qv`` and ``bint`` receive the running
    sum of squared area jumps and the time integral of the bracket bound at
    every sample time.  On a budget failure ``diag`` holds (time, site, lo, hi)
    details of the offending update.
    """
    n = a.shape[0] - 1
    ns = sample_times.shape[0]
    rate = n - 1.0
    ndiff = 0
    for k in range(1, n + 1):
        if a[k] != b[k]:
            ndiff += 1
    tau = 0.0 if ndiff == 0 else -1.0
    q = 0.0
    bi = 0.0
    bound = _bracket_bound(a, b) if track else 0.0
    t = 0.0
    ptr = 0
    events = 0
    while True:
        if ndiff == 0 and ptr == ns:
            break
        t_next = t + rng.standard_exponential() / rate
        while ptr < ns and sample_times[ptr] < t_next:
            out_a[ptr] = a
            out_b[ptr] = b
            if track:
                qv[ptr] = q
                bint[ptr] = bi + bound * (sample_times[ptr] - t)
            ptr += 1
        if t_next > horizon:
            break
        if track:
            bi += bound * (t_next - t)
        t = t_next
        site = rng.integers(1, n)
        events += 1
        old = abs(b[site] - a[site])
        was_equal = a[site] == b[site]
        if ndiff == 0 or t <= phase1_end:
            u = draw_beta(rng, alpha)
            if u < 0.0:
                return STATUS_GAMMA, tau, events
            a[site] = _convex(u, a[site - 1], a[site + 1])
            b[site] = _convex(u, b[site - 1], b[site + 1])
        else:
            va, vb, _, status = maximal_pair(rng, alpha, a[site - 1], a[site + 1], b[site - 1], b[site + 1])
            if status != STATUS_OK:
                diag[0] = t
                diag[1] = site
                diag[2] = b[site - 1]
                diag[3] = b[site + 1]
                return status, tau, events
            a[site] = va
            b[site] = vb
        now_equal = a[site] == b[site]
        if was_equal and not now_equal:
            ndiff += 1
        elif now_equal and not was_equal:
            ndiff -= 1
            if ndiff == 0 and tau < 0.0:
                tau = t
        if track:
            jump = abs(b[site] - a[site]) - old
            q += jump * jump
            bound = _bracket_bound(a, b)
    return STATUS_OK, tau, events


@njit(cache=True, nogil=True)
def run_meanfield(eta, alpha, horizon, sample_times, rng, out):
    """Exchange process: each unordered pair at rate 1/n.  Returns (status, events)."""
    n = eta.shape[0]
    ns = sample_times.shape[0]
    rate = 0.5 * (n - 1.0)
    t = 0.0
    ptr = 0
    events = 0
    while True:
        t_next = t + rng.standard_exponential() / rate
        while ptr < ns and sample_times[ptr] < t_next:
            out[ptr] = eta
            ptr += 1
        if t_next > horizon:
            break
        t = t_next
        i = rng.integers(0, n)
        j = rng.integers(0, n - 1)
        if j >= i:
            j += 1
        if j < i:
            i, j = j, i
        u = draw_beta(rng, alpha)
        if u < 0.0:
            return STATUS_GAMMA, events
        events += 1
        s = eta[i] + eta[j]
        eta[i] = u * s
        eta[j] = s - eta[i]
    return STATUS_OK, events
