import math

import numpy as np
import pytest

from simplexwalk.core import sample_equilibrium, vee, wedge
from simplexwalk.estimators import (
    EstimateWithError,
    crossing_time,
    censoring_domination,
    equilibrium_batch,
    fkg_correlation,
    fkg_statistic,
    mixing_profile,
    separation_profile,
    separation_witness,
    special_particle_W,
    start_policy,
    tv_lower_profile,
    tv_lower_witness,
    tv_upper_coupling,
    wilson_moments,
)
from simplexwalk.spectral import spectral_gap


def test_estimate_validation():
    with pytest.raises(ValueError):
        EstimateWithError(0.5, -0.1, 10, 0)
    with pytest.raises(ValueError):
        EstimateWithError(0.5, 0.1, 0, 0)


def test_equilibrium_batch_law():
    X = equilibrium_batch(6, 2.0, 50_000, seed=1)
    assert np.all(np.diff(X, axis=1) >= 0)
    assert np.all(X[:, 0] == 0) and np.all(X[:, 6] == 6)
    mean = X[:, 1:6].mean(axis=0)
    se = X[:, 1:6].std(axis=0, ddof=1) / math.sqrt(len(X))
    assert np.all(np.abs(mean - np.arange(1, 6)) < 4 * se)


def test_lower_witness_at_zero():
    est = tv_lower_witness(32, 1.0, 0.0, 2000, seed=0)
    assert est.value >= 0.99


def test_lower_witness_late():
    n = 16
    t = 10 * math.log(n) / spectral_gap(n)
    est = tv_lower_witness(n, 1.0, t, 2000, seed=1)
    assert est.value <= 0.05


def test_lower_witness_range_and_reps_check():
    for est in tv_lower_profile(8, 1.0, [0.0, 5.0, 20.0, 80.0], 500, seed=2):
        assert -3 * est.se <= est.value <= 1
        assert est.se <= 0.5
    with pytest.raises(ValueError):
        tv_lower_witness(8, 1.0, 1.0, 99, seed=0)


def test_upper_at_zero():
    assert tv_upper_coupling(8, 1.0, 0.0, "vee", 200, seed=0).value == 1.0


def test_upper_monotone_in_time():
    ts = [5.0, 20.0, 60.0, 150.0]
    ests = [tv_upper_coupling(8, 1.0, t, "wedge", 1000, seed=3) for t in ts]
    for a, b in zip(ests[:-1], ests[1:]):
        assert b.value <= a.value + 3 * math.hypot(a.se, b.se)


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_upper_at_desk_mixing_time(alpha):
    n = 8
    t = 5 * math.log(n) / spectral_gap(n)
    est = tv_upper_coupling(n, alpha, t, "wedge", 2000, seed=4)
    assert est.value <= 0.25 + 3 * est.se


def test_start_policies():
    rng = np.random.default_rng(0)
    assert start_policy("vee", 5, 1.0) == vee(5)
    c = start_policy("equilibrium", 5, 1.0)(rng)
    assert c.n == 5
    with pytest.raises(ValueError):
        start_policy("nope", 5, 1.0)


def test_crossing_time():
    assert crossing_time([0, 1, 2], [1.0, 0.6, 0.2], 0.5) == pytest.approx(1.25)
    assert crossing_time([0, 1], [0.3, 0.1], 0.5) == 0.0
    assert crossing_time([0, 1], [1.0, 0.9], 0.5) is None


def test_mixing_profile_bracket():
    n = 8
    grid = np.array([0.0, 10.0, 25.0, 50.0, 100.0])
    prof = mixing_profile(n, 1.0, grid, 1000, seed=5, upper_reps=500)
    lo, lo_se = prof.column("lower")
    up, up_se = prof.column("upper")
    assert np.all(lo - 3 * lo_se <= up + 3 * up_se)
    for col, se in ((lo, lo_se), (up, up_se)):
        assert np.all(col >= -3 * se) and np.all(col <= 1 + 3 * se)
        assert np.all(np.diff(col) <= 3 * np.hypot(se[:-1], se[1:]))
    assert set(prof.crossings) == {"lower", "upper"}
    with pytest.raises(ValueError):
        mixing_profile(n, 1.0, [5.0, 1.0], 200, seed=0)


def test_lower_crossing_floor_n16():
    n = 16
    grid = np.linspace(0, 4 * math.log(n) / spectral_gap(n), 25)
    lower = tv_lower_profile(n, 1.0, grid, 2000, seed=6)
    t_half = crossing_time(grid, [e.value for e in lower], 0.5)
    # crossing = (log n - C) / (2 gap); the floor n^2 / pi^2 ~ 1 / (2 gap) means C < log n - 1
    assert t_half is not None and t_half > n**2 / math.pi**2
    C = math.log(n) - 2 * spectral_gap(n) * t_half
    assert C < math.log(n) - 1


def test_fkg_examples():
    var = fkg_correlation(8, 1.0, "x1", "x1", 20_000, seed=0)
    assert var.value > 0
    pos = fkg_correlation(8, 1.0, "x1", "x7", 20_000, seed=1)
    assert pos.value >= -3 * pos.se
    neg = fkg_correlation(8, 1.0, "x1", "N-x7", 20_000, seed=1)
    assert neg.value <= 3 * neg.se
    assert neg.value == pytest.approx(-pos.value, rel=1e-9)


def test_fkg_indicator_and_f1():
    est = fkg_correlation(8, 2.0, "1[x4>=4.5]", "f1", 20_000, seed=2)
    assert est.value >= -3 * est.se


def test_fkg_jackknife_matches_brute_force():
    from simplexwalk.estimators import TAG_FKG

    n, reps = 5, 60
    X = equilibrium_batch(n, 1.0, reps, 3, TAG_FKG)
    a, b = X[:, 1], X[:, 4]
    loo = np.array([np.cov(np.delete(a, i), np.delete(b, i))[0, 1] for i in range(reps)])
    se = math.sqrt((reps - 1) / reps * np.sum((loo - loo.mean()) ** 2))
    est = fkg_correlation(n, 1.0, "x1", "x4", reps, seed=3)
    assert est.value == pytest.approx(np.cov(a, b)[0, 1], rel=1e-10)
    assert est.se == pytest.approx(se, rel=1e-8)


def test_fkg_unknown_statistic():
    with pytest.raises(ValueError, match="x99"):
        fkg_statistic("x99", 8)
    with pytest.raises(ValueError, match="foo"):
        fkg_correlation(8, 1.0, "foo", "x1", 100, seed=0)


def test_censoring_at_zero():
    diff, se = censoring_domination(8, 1.0, 4, 0.0, 200, seed=0)
    assert np.all(diff == 0)


def test_full_censoring_gap():
    n = 8
    diff, se = censoring_domination(n, 1.0, 2, 200.0, 4000, seed=1, censored="all")
    assert abs(diff[n // 2 - 1] - n / 2) < 4 * se[n // 2 - 1]


def test_special_censoring_dominates():
    n = 16
    diff, se = censoring_domination(n, 1.0, 4, float(n * n), 4000, seed=2)
    assert np.all(diff >= -3 * se)


def test_separation_examples():
    assert separation_witness(8, 1.0, 0.0, 100, seed=0).value == 1.0
    n = 8
    late = separation_witness(n, 1.0, 30 * math.log(n) / spectral_gap(n), 4000, seed=1)
    eq = equilibrium_batch(n, 1.0, 100_000, seed=2)
    p_eq = np.mean(eq[:, n // 2] >= n / 2 + 1)
    assert p_eq < 0.5
    assert abs(late.value - p_eq) < 4 * math.hypot(late.se, math.sqrt(p_eq * (1 - p_eq) / 100_000))


def test_separation_monotone():
    prof = separation_profile(8, 1.0, np.linspace(0, 80, 9), 4000, seed=3)
    for a, b in zip(prof[:-1], prof[1:]):
        assert b.value <= a.value + 3 * math.hypot(a.se, b.se)


def test_special_W_examples():
    mean, var = special_particle_W(8, 1.0, 2, 0.0, 100, seed=0)
    assert mean.value == 4.0 and var.value == 0.0
    mean, _ = special_particle_W(8, 1.0, 2, 400.0, 4000, seed=1)
    assert abs(mean.value) < 4 * mean.se


def test_special_W_bound():
    n, K = 16, 4
    ts = np.linspace(0, 3 * math.log(n) / spectral_gap(n), 10)
    for t, (mean, _) in zip(ts, special_particle_W(n, 1.0, K, ts, 2000, seed=2)):
        assert mean.value <= 2 * K * n * math.exp(-spectral_gap(n) * t) + 4 * mean.se


def test_wilson_moments_bounded():
    n = 16
    ts = np.linspace(0, 2 * math.log(n) / spectral_gap(n), 6)
    var, se, f0 = wilson_moments(n, 1.0, ts, 2000, seed=3)
    assert var.shape == (6, 3)
    assert np.all(var < 12 * (1 + 1 / 1.0))
    assert f0.min() > 0


def test_estimators_deterministic():
    a = tv_lower_profile(8, 1.0, [1.0, 10.0], 300, seed=9, workers=1)
    b = tv_lower_profile(8, 1.0, [1.0, 10.0], 300, seed=9, workers=4)
    assert a == b
    u1 = tv_upper_coupling(8, 1.0, 30.0, "wedge", 100, seed=9, workers=1)
    u2 = tv_upper_coupling(8, 1.0, 30.0, "wedge", 100, seed=9, workers=3)
    assert u1 == u2
