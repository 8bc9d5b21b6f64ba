"""Acceptance criteria, one test per criterion at the pinned sizes and tolerances.

Each test records a single pass/fail line that is printed in the terminal
summary.  Criterion 12 is informational and never fails the run.
"""
import functools
import math

import numpy as np
import pytest

from conftest import record
from simplexwalk.beta import (
    Interval,
    IntervalBeta,
    beta_interval_tv,
    ordered_pair_grid,
    sample_interval_beta,
    shift_constant,
    sticking_ratio_Q,
)
from simplexwalk.core import (
    Configuration,
    from_increments,
    identity,
    increments,
    sample_equilibrium,
    sample_pinned_equilibrium,
    vee,
    wedge,
)
from simplexwalk.coupling import CoupledPair, baibi_sides, maximal_coupled_update
from simplexwalk.dynamics import MeanFieldState, grand_coupled_simulate, meanfield_replicas, simulate_replicas
from simplexwalk.estimators import (
    LEVELS,
    crossing_time,
    censoring_domination,
    fkg_correlation,
    mixing_profile,
    tv_lower_witness,
    tv_upper_coupling,
    wilson_moments,
)
from simplexwalk.spectral import (
    eigen_stat,
    eigenvalue,
    fit_decay_from_samples,
    heat_mean_curve,
    meanfield_gap,
    meanfield_stationary_mean,
    sine_basis,
    spectral_gap,
)

pytestmark = pytest.mark.slow

GAP_CELLS = [(8, 1.0), (8, 2.0), (8, 3.0), (16, 1.0), (16, 2.0), (16, 3.0)]
GAP_REPS = 20_000


@functools.lru_cache(maxsize=None)
def _wedge_f(n, alpha):
    times = np.linspace(0.0, 2 * math.log(n) / spectral_gap(n), 12)
    f = simulate_replicas(wedge(n), alpha, times, GAP_REPS, seed=1000 + 10 * n + int(alpha), observers=("f1",))
    return times, f[..., 0]


def test_criterion_01_spectral_gap():
    worst_rel, worst_z, lines = 0.0, 0.0, []
    for n, alpha in GAP_CELLS:
        times, f = _wedge_f(n, alpha)
        gap = spectral_gap(n)
        fit = fit_decay_from_samples(times, f)
        rel = abs(fit.rate - gap) / gap
        z = abs(fit.rate - gap) / fit.se
        worst_rel, worst_z = max(worst_rel, rel), max(worst_z, z)
        lines.append(f"N={n} a={alpha:g}: {fit.rate:.5f} vs {gap:.5f}")
    ok = worst_rel <= 0.05 and worst_z <= 3
    record(1, ok, f"max rel err {worst_rel:.4f} (<= 0.05), max z {worst_z:.2f} (<= 3); " + "; ".join(lines))
    assert ok


def test_criterion_02_pointwise_eigen_decay():
    worst = 0.0
    for n, alpha in GAP_CELLS:
        times, f = _wedge_f(n, alpha)
        exact = eigen_stat(1, wedge(n)) * np.exp(-spectral_gap(n) * times)
        se = f.std(axis=0, ddof=1) / math.sqrt(f.shape[0])
        z = np.abs(f.mean(axis=0) - exact) / np.maximum(se, 1e-12 * np.abs(exact))
        worst = max(worst, float(z.max()))
    ok = worst <= 4
    record(2, ok, f"max pointwise z {worst:.2f} over 6 cells x 12 times (<= 4)")
    assert ok


def test_criterion_03_heat_curve():
    n, reps, ts = 8, 20_000, [1.0, 5.0, 20.0]
    names = tuple(f"x{k}" for k in range(1, n))
    x = simulate_replicas(wedge(n), 1.0, ts, reps, seed=3, observers=names)
    se = x.std(axis=0, ddof=1) / math.sqrt(reps)
    # coordinates that never moved have zero sample variance; n / reps is the resolution floor
    z = np.abs(x.mean(axis=0) - heat_mean_curve(wedge(n), ts)) / np.maximum(se, n / reps)
    worst_bound = -math.inf
    for m in range(2, 65):
        grid = np.linspace(0, 20 / spectral_gap(m), 400)
        a = heat_mean_curve(wedge(m), grid) - np.arange(1, m)
        excess = a - 2 * m * np.exp(-spectral_gap(m) * grid)[:, None]
        worst_bound = max(worst_bound, float(excess.max()))
    ok = z.max() <= 4 and worst_bound <= 1e-9
    record(3, ok, f"max z {z.max():.2f} (<= 4); max of a(t,k) - 2N e^(-gap t) over N <= 64: {worst_bound:.3g} (<= 0)")
    assert ok


def test_criterion_04_meanfield_gap():
    worst, lines = 0.0, []
    for n, alpha in [(2, 1.0), (8, 1.0), (8, 2.0)]:
        gap = meanfield_gap(n, alpha)
        eta = np.zeros(n)
        eta[0] = n
        ts = np.linspace(0, 4 / gap, 12)
        g = meanfield_replicas(MeanFieldState(eta), alpha, ts, 20_000, seed=40 + n + int(alpha))
        fit = fit_decay_from_samples(ts, g, center=meanfield_stationary_mean(n, alpha))
        rel = abs(fit.rate - gap) / gap
        worst = max(worst, rel)
        lines.append(f"({n},{alpha:g}) {fit.rate:.4f} vs {gap:.4f}")
    ok = worst <= 0.05 and meanfield_gap(2, 1.0) == 0.5
    record(4, ok, f"max rel err {worst:.4f} (<= 0.05); " + "; ".join(lines))
    assert ok


def test_criterion_05_beta_tv_numerics():
    rng = np.random.default_rng(5)
    closed_err = 0.0
    for _ in range(100):
        l1, l2 = rng.uniform(-1, 1, 2)
        i1 = Interval(l1, l1 + rng.uniform(0.05, 2))
        i2 = Interval(l2, l2 + rng.uniform(0.05, 2))
        closed = 1 - i1.overlap(i2) / max(i1.length, i2.length)
        closed_err = max(closed_err, abs(beta_interval_tv(1.0, i1, i2, method="quadrature") - closed))

    lo, hi, implication = math.inf, 0.0, True
    qstars = []
    for alpha in (1.0, 2.0, 3.0):
        qstar = beta_interval_tv(alpha, Interval(0, 1), Interval(0.5, 1.5))
        qstars.append(qstar)
        for i1, i2 in ordered_pair_grid():
            q = beta_interval_tv(alpha, i1, i2)
            Q = sticking_ratio_Q(i1.length, i2.length, abs(i2.midpoint - i1.midpoint))
            lo, hi = min(lo, q / Q), max(hi, q / Q)
            if q >= qstar and not max(i1.length, i2.length) >= 2 * i1.overlap(i2):
                implication = False

    ratios = (0.5, 0.2, 0.1, 0.05)
    consts = {a: shift_constant(a, ratios, 1 / a) for a in (0.5, 0.75)}
    bounded = all(math.isfinite(c) and c > 0 for c in consts.values())
    # refinement diagnostic: the 1/alpha constant diverges as r -> 0, the alpha one does not
    fine = (1e-2, 1e-3, 1e-4)
    diag = {a: ([shift_constant(a, [r], 1 / a) for r in fine], [shift_constant(a, [r], a) for r in fine]) for a in (0.5, 0.75)}
    print("alpha<1 refinement, r =", fine)
    for a, (inv, same) in diag.items():
        print(f"  alpha={a}: TV/r^(1/alpha) = {[f'{v:.3g}' for v in inv]}, TV/r^alpha = {[f'{v:.3g}' for v in same]}")

    ok = closed_err <= 1e-6 and 1 / 20 <= lo and hi <= 20 and implication and bounded
    record(
        5,
        ok,
        f"alpha=1 closed-form err {closed_err:.2g} (<= 1e-6); q/Q in [{lo:.3f}, {hi:.3f}] (within [0.05, 20]); "
        f"implication {'holds' if implication else 'fails'} (q* = {', '.join(f'{q:.4f}' for q in qstars)}); "
        f"C_alpha on r in {ratios}: {', '.join(f'{a}: {c:.3g}' for a, c in consts.items())} "
        f"(diverges under refinement, see ledger)",
    )
    assert ok


def _coupling_trials(alpha, ia, ib, reps, seed):
    a = Configuration(4, [ia[0], 0.5 * (ia[0] + ia[1]), ia[1], 10.0], pinned=False)
    b = Configuration(4, [ib[0], 0.5 * (ib[0] + ib[1]), ib[1], 10.0], pinned=False)
    p = CoupledPair(a, b, alpha)
    rng = np.random.default_rng(seed)
    va, vb = np.empty(reps), np.empty(reps)
    for i in range(reps):
        q = maximal_coupled_update(p, 2, rng)
        va[i], vb[i] = q.a.positions[1], q.b.positions[1]
    return va, vb


def _ks_gap(x, y):
    grid = np.sort(np.concatenate([x, y]))
    fx = np.searchsorted(np.sort(x), grid, side="right") / x.size
    fy = np.searchsorted(np.sort(y), grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


STICK_GRID = [
    (1.0, (0, 2), (1, 2)),
    (1.0, (0, 1), (0.3, 1.5)),
    (2.0, (0, 1), (0.5, 1.5)),
    (2.0, (0, 1), (0.05, 1.0)),
    (3.0, (0, 1), (0.1, 0.8)),
    (3.0, (0, 2), (0.5, 2.2)),
    (1.5, (0, 1), (0.9, 1.8)),
    (0.5, (0, 1), (0.2, 1.2)),
    (0.75, (0, 3), (1, 2)),
    (5.0, (0, 1), (0.02, 1.02)),
]


def test_criterion_06_coupling_marginals():
    alpha, ia, ib = 2.0, (0, 1), (0.4, 1.2)
    va, vb = _coupling_trials(alpha, ia, ib, 100_000, 60)
    rng = np.random.default_rng(61)
    ref_a = np.array([sample_interval_beta(IntervalBeta(alpha, Interval(*ia)), rng) for _ in range(100_000)])
    ref_b = np.array([sample_interval_beta(IntervalBeta(alpha, Interval(*ib)), rng) for _ in range(100_000)])
    gap = max(_ks_gap(va, ref_a), _ks_gap(vb, ref_b))
    worst_z = 0.0
    for i, (al, i1, i2) in enumerate(STICK_GRID):
        xa, xb = _coupling_trials(al, i1, i2, 20_000, 62 + i)
        p = 1 - beta_interval_tv(al, Interval(*i1), Interval(*i2))
        z = abs(np.mean(xa == xb) - p) / math.sqrt(p * (1 - p) / xa.size)
        worst_z = max(worst_z, z)
    ok = gap < 0.01 and worst_z <= 3
    record(6, ok, f"max marginal CDF gap {gap:.4f} (< 0.01, 1e5 trials); max stick z {worst_z:.2f} on 10 pairs (<= 3)")
    assert ok


def test_criterion_07_desk_mixing_upper_bound():
    n, lines, ok = 8, [], True
    t = 5 * math.log(n) / spectral_gap(n)
    for alpha in (1.0, 2.0):
        # the wedge and the vee are the extreme starts for the monotone coupling
        for start in ("wedge", "vee"):
            est = tv_upper_coupling(n, alpha, t, start, 2000, seed=70 + int(alpha))
            ok &= est.value <= 0.25 + 3 * est.se
            lines.append(f"a={alpha:g} {start}: {est.value:.4f} +- {est.se:.4f}")
    record(7, ok, "P[tau > 5 log N/gap] at N=8 (<= 0.25 + 3 s.e.): " + "; ".join(lines))
    assert ok


def test_criterion_08_wilson_moments():
    bound = 12 * (1 + 1 / 1.0)
    worst = {}
    for n in (16, 32):
        ts = np.linspace(0, 2 * math.log(n) / spectral_gap(n), 10)
        var, _, _ = wilson_moments(n, 1.0, ts, 4000, seed=80 + n)
        worst[n] = var.max(axis=0)
    witness = tv_lower_witness(32, 1.0, 0.0, 2000, seed=81)
    top = max(float(v.max()) for v in worst.values())
    ok = top <= bound and witness.value >= 0.95
    detail = "; ".join(f"N={n}: j=1,2,3 max {', '.join(f'{x:.3f}' for x in v)}" for n, v in worst.items())
    record(8, ok, f"scaled variances <= recorded constant {bound:g}: {detail}; witness(t=0, N=32) {witness.value:.4f} (>= 0.95)")
    assert ok


def test_criterion_09_fkg():
    worst, lines = math.inf, []
    for n in (8, 16):
        for alpha in (1.0, 2.0):
            est = fkg_correlation(n, alpha, "x1", "xlast", 100_000, seed=90 + n + int(alpha))
            z = est.value / est.se
            worst = min(worst, z)
            lines.append(f"N={n} a={alpha:g}: {est.value:.4f} +- {est.se:.4f}")
    ok = worst >= -3
    record(9, ok, f"min Cov(x1, x_(N-1)) z {worst:.1f} (>= -3); " + "; ".join(lines))
    assert ok


def test_criterion_10_censoring_domination():
    n = 16
    diff, se = censoring_domination(n, 1.0, 4, float(n * n), 10_000, seed=100)
    z = diff / se
    ok = bool(np.all(z >= -3))
    record(10, ok, f"min per-coordinate z {z.min():.2f} (>= -3), N=16 K=4 t=256, 1e4 replicas")
    assert ok


def test_criterion_11_property_suite(tmp_path):
    from simplexwalk.cli import parse_spec, run

    # deterministic replay
    init = lambda rng: sample_equilibrium(8, 1.0, rng)
    r1 = simulate_replicas(init, 1.0, [1.0, 5.0], 300, seed=11, observers=("f1", "x4"), workers=1)
    r2 = simulate_replicas(init, 1.0, [1.0, 5.0], 300, seed=11, observers=("f1", "x4"), workers=6)
    text = "kind = coalesce\nn = 6\nreps = 200\nseed = 5\n"
    run(parse_spec(text=text + f"outdir = {tmp_path / 'a'}\n"))
    run(parse_spec(text=text + f"outdir = {tmp_path / 'b'}\n"))
    replay = r1.tobytes() == r2.tobytes() and (tmp_path / "a" / "coalesce.csv").read_bytes() == (
        tmp_path / "b" / "coalesce.csv"
    ).read_bytes()

    # round-trip on random configurations from the samplers
    rng = np.random.default_rng(110)
    roundtrip = True
    for i in range(100):
        n = int(rng.integers(2, 40))
        alpha = float(rng.choice([0.2, 1.0, 3.0]))
        c = sample_equilibrium(n, alpha, rng) if i % 2 else sample_pinned_equilibrium(int(rng.integers(1, n + 1)), n, alpha, rng)
        roundtrip &= from_increments(n, increments(c).eta) == c

    # order preservation under the grand coupling
    ordered = True
    ts = np.linspace(0, 60, 31)
    for rep in range(1000):
        rng = np.random.default_rng(10_000 + rep)
        mid = sample_equilibrium(8, 1.0, rng)
        series = grand_coupled_simulate([vee(8), mid, wedge(8)], 1.0, 60.0, (), ts, rng)
        s = [x.extras["states"] for x in series]
        ordered &= bool(np.all(s[0] <= s[1]) and np.all(s[1] <= s[2]))

    # deterministic sum inequality on random instances
    rng = np.random.default_rng(111)
    baibi = True
    for _ in range(10_000):
        m = int(rng.integers(1, 15))
        B = float(rng.uniform(0.1, 10))
        a = np.sort(rng.uniform(1e-9, B, m))
        b = rng.uniform(0, B, m) * (rng.random(m) < 0.7)
        lhs, rhs = baibi_sides(a, b, B)
        baibi &= lhs >= rhs - 1e-12 * max(1.0, rhs)

    ortho = max(float(np.max(np.abs(sine_basis(n) @ sine_basis(n).T - np.eye(n - 1)))) for n in (2, 3, 16, 257, 1024))

    ok = replay and roundtrip and ordered and baibi and ortho <= 1e-10
    record(
        11,
        ok,
        f"replay {'ok' if replay else 'FAIL'}; round-trip on 100 sampled configurations {'ok' if roundtrip else 'FAIL'}; "
        f"order over 1e3 replicas {'ok' if ordered else 'FAIL'}; Baibi on 1e4 {'ok' if baibi else 'FAIL'}; "
        f"orthonormality err {ortho:.2g} (<= 1e-10)",
    )
    assert ok


def test_criterion_12_cutoff_sharpening():
    widths, lines, in_window = {}, [], True
    for n in (16, 32):
        scale = n * n * math.log(n) / math.pi**2
        grid = np.linspace(0, 3 * scale, 31)
        prof = mixing_profile(n, 1.0, grid, 4000, seed=120 + n, upper_reps=500)
        lo_win, hi_win = n * n * (math.log(n) - 8) / math.pi**2, 5 * scale
        for col in ("lower", "upper"):
            t_half = prof.crossings[col][0.5]
            in_window &= t_half is not None and lo_win <= t_half <= hi_win
        c = prof.crossings["lower"]
        width = (c[0.25] - c[0.75]) / (n * n * math.log(n)) if None not in (c[0.25], c[0.75]) else math.nan
        widths[n] = width
        lines.append(
            f"N={n}: crossings lower {prof.crossings['lower'][0.5]:.1f}, upper {prof.crossings['upper'][0.5]:.1f} "
            f"in [{lo_win:.1f}, {hi_win:.1f}]; lower width/(N^2 log N) {width:.4f}"
        )
    ok = in_window and widths[32] < widths[16]
    record(12, ok, "; ".join(lines), gate=False)
