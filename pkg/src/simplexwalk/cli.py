"""Declarative experiment runner.

Spec files are flat ``key = value`` lines; ``#`` starts a comment and an
optional ``[kind]`` header sets the kind.  Command-line ``--key=value``
flags override the file.  Time grids are either explicit lists
(``times = 0, 1, 5``) or ``linspace(start, stop, count)``.

Replica ``i`` of a run with master seed ``s`` uses
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(tag, i))))``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .beta import (
    Interval,
    beta_interval_tv,
    ordered_pair_grid,
    sticking_ratio_Q,
)
from .core import identity, vee, wedge
from .coupling import coalescence_times
from .dynamics import MeanFieldState, meanfield_replicas, simulate_replicas
from .estimators import (
    censoring_domination,
    fkg_correlation,
    mixing_profile,
    separation_profile,
    start_policy,
    wilson_moments,
)
from .spectral import (
    eigen_stat,
    fit_decay_from_samples,
    heat_mean_curve,
    meanfield_gap,
    meanfield_stationary_mean,
    spectral_gap,
)

KINDS = (
    "gap-decay",
    "heat-curve",
    "meanfield-gap",
    "mixing-profile",
    "coalesce",
    "beta-tv-scan",
    "fkg",
    "censor-dominate",
    "separation",
    "wilson-moments",
)

DEFAULT_REPS = 1000
DEFAULT_ALPHA = 1.0


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    n: int | None = None
    alpha: float = DEFAULT_ALPHA
    times: tuple | None = None
    reps: int = DEFAULT_REPS
    K: int | None = None
    seed: int = 0
    outdir: str = "out"
    start: str = "wedge"
    f: str = "x1"
    g: str = "xlast"
    upper_reps: int | None = None


_TYPES = {
    "kind": str,
    "n": int,
    "alpha": float,
    "times": "grid",
    "reps": int,
    "K": int,
    "seed": int,
    "outdir": str,
    "start": str,
    "f": str,
    "g": str,
    "upper_reps": int,
}
_NEEDS_N = set(KINDS) - {"beta-tv-scan"}
_LINSPACE = re.compile(r"linspace\(\s*([^,]+),\s*([^,]+),\s*([^)]+)\)$")


def _parse_grid(text: str) -> tuple:
    m = _LINSPACE.match(text.strip())
    if m:
        lo, hi, count = float(m.group(1)), float(m.group(2)), int(m.group(3))
        return tuple(float(v) for v in np.linspace(lo, hi, count))
    return tuple(float(v) for v in text.split(",") if v.strip())


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "grid":
            return _parse_grid(raw)
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return kind(raw.strip())
    except ValueError:
        raise SpecError(f"{key}: cannot read {raw!r} as {getattr(kind, '__name__', kind)}") from None


def _read_pairs(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            values["kind"] = line[1:-1].strip()
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = raw
    return values


def _parse_flags(flags) -> dict:
    values = {}
    flags = list(flags)
    i = 0
    while i < len(flags):
        tok = flags[i]
        if not tok.startswith("--"):
            raise SpecError(f"unexpected argument {tok!r}; overrides look like --key=value")
        if "=" in tok:
            key, raw = tok[2:].split("=", 1)
        else:
            if i + 1 >= len(flags):
                raise SpecError(f"{tok[2:]}: missing value")
            key, raw = tok[2:], flags[i + 1]
            i += 1
        values[key] = raw
        i += 1
    return values


def parse_spec(path=None, flags=(), text: str | None = None) -> ExperimentSpec:
    """Build a spec from a file (or ``text``) and ``--key=value`` overrides."""
    raw = {}
    if text is not None:
        raw.update(_read_pairs(text))
    elif path is not None:
        try:
            raw.update(_read_pairs(Path(path).read_text()))
        except OSError as exc:
            raise SpecError(f"cannot read spec file {path}: {exc}") from None
    raw.update(_parse_flags(flags))
    unknown = [k for k in raw if k not in _TYPES]
    if unknown:
        raise SpecError(f"unknown key {unknown[0]!r}")
    values = {k: _convert(k, v) for k, v in raw.items()}
    if "kind" not in values:
        raise SpecError("kind: required field missing")
    if values["kind"] not in KINDS:
        raise SpecError(f"kind: unknown kind {values['kind']!r}; choose from {', '.join(KINDS)}")
    spec = ExperimentSpec(**values)
    _check_spec(spec)
    return spec


def _check_spec(spec: ExperimentSpec) -> None:
    if spec.kind in _NEEDS_N and spec.n is None:
        raise SpecError("n: required field missing")
    if spec.n is not None and spec.n < 2:
        raise SpecError(f"n: must be >= 2, got {spec.n}")
    if spec.kind == "censor-dominate" and spec.K is None:
        raise SpecError("K: required field missing")
    if not spec.alpha > 0:
        raise SpecError(f"alpha: must be positive, got {spec.alpha}")
    if spec.reps < 1:
        raise SpecError(f"reps: must be >= 1, got {spec.reps}")
    if spec.times is not None:
        t = np.array(spec.times)
        if t.size == 0:
            raise SpecError("times: empty grid")
        if np.any(np.diff(t) < 0):
            raise SpecError("times: grid must be sorted")
        if np.any(t < 0):
            raise SpecError("times: must be >= 0")
    if spec.start not in ("wedge", "vee", "identity", "wilson", "equilibrium"):
        raise SpecError(f"start: unknown start {spec.start!r}")


def spec_to_text(spec: ExperimentSpec) -> str:
    """Spec echo that parses back to an equal spec."""
    lines = []
    for fld in fields(spec):
        value = getattr(spec, fld.name)
        if value is None:
            continue
        if fld.name == "times":
            value = ", ".join(repr(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{fld.name} = {value}")
    return "\n".join(lines) + "\n"


def _default_times(spec: ExperimentSpec) -> tuple:
    n = spec.n
    if spec.kind in ("gap-decay", "wilson-moments"):
        return tuple(np.linspace(0.0, 2 * math.log(n) / spectral_gap(n), 12))
    if spec.kind == "heat-curve":
        return (1.0, 5.0, 20.0)
    if spec.kind == "meanfield-gap":
        return tuple(np.linspace(0.0, 4.0 / meanfield_gap(n, spec.alpha), 12))
    if spec.kind in ("mixing-profile", "separation"):
        scale = n * n * math.log(n) / math.pi**2
        return tuple(np.linspace(0.0, 3.0 * scale, 13))
    if spec.kind == "coalesce":
        return tuple(np.linspace(0.0, 5 * math.log(n) / spectral_gap(n), 12))
    if spec.kind == "censor-dominate":
        return (float(n * n),)
    return ()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if v is None:
        return "nan"
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def resolution_se(se, n, reps):
    """Standard error floored at ``n / reps``.

    Coordinates that never moved in any replica have zero sample variance;
    the rule of three bounds the chance of a move by about ``3 / reps`` and
    a move shifts the mean by at most n, so 4 floors cover that resolution.
    """
    return np.maximum(se, n / reps)


def _check(value, threshold, ok):
    return {"value": float(value), "threshold": float(threshold), "pass": bool(ok)}


def _start_config(spec):
    return {"wedge": wedge, "vee": vee, "identity": identity}[spec.start](spec.n)


def _gap_decay(spec, times):
    n = spec.n
    f = simulate_replicas(wedge(n), spec.alpha, times, spec.reps, spec.seed, ["f1"])[..., 0]
    mean = f.mean(axis=0)
    se = f.std(axis=0, ddof=1) / math.sqrt(spec.reps)
    gap = spectral_gap(n)
    analytic = eigen_stat(1, wedge(n)) * np.exp(-gap * np.asarray(times))
    fit = fit_decay_from_samples(times, f)
    z = np.abs(mean - analytic) / np.maximum(se, 1e-12 * np.abs(analytic))
    checks = {
        "fitted_rate_rel_error": _check(abs(fit.rate - gap) / gap, 0.05, abs(fit.rate - gap) <= 0.05 * gap),
        "fitted_rate_z": _check(abs(fit.rate - gap) / fit.se, 3.0, abs(fit.rate - gap) <= 3 * fit.se),
        "pointwise_max_z": _check(z.max(), 4.0, z.max() <= 4.0),
    }
    return ["t", "mean_f", "se", "analytic"], list(zip(times, mean, se, analytic)), checks


def _heat_curve(spec, times):
    n = spec.n
    x0 = _start_config(spec)
    names = [f"x{k}" for k in range(1, n)]
    x = simulate_replicas(x0, spec.alpha, times, spec.reps, spec.seed, names)
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(spec.reps)
    exact = heat_mean_curve(x0, times)
    z = np.abs(mean - exact) / resolution_se(se, n, spec.reps)
    header = ["t"] + [f"mean_x{k}" for k in range(1, n)] + [f"se_x{k}" for k in range(1, n)]
    header += [f"exact_x{k}" for k in range(1, n)]
    rows = [[t, *mean[i], *se[i], *exact[i]] for i, t in enumerate(times)]
    return header, rows, {"max_z": _check(z.max(), 4.0, z.max() <= 4.0)}


def _meanfield(spec, times):
    n, alpha = spec.n, spec.alpha
    eta = np.zeros(n)
    eta[0] = n
    g = meanfield_replicas(MeanFieldState(eta), alpha, times, spec.reps, spec.seed)
    center = meanfield_stationary_mean(n, alpha)
    c = g - center
    mean = c.mean(axis=0)
    se = c.std(axis=0, ddof=1) / math.sqrt(spec.reps)
    gap = meanfield_gap(n, alpha)
    analytic = (n * n - center) * np.exp(-gap * np.asarray(times))
    fit = fit_decay_from_samples(times, g, center=center)
    rel = abs(fit.rate - gap) / gap
    checks = {"fitted_rate_rel_error": _check(rel, 0.05, rel <= 0.05)}
    return ["t", "mean_g_centered", "se", "analytic"], list(zip(times, mean, se, analytic)), checks


def _mixing(spec, times):
    prof = mixing_profile(spec.n, spec.alpha, times, spec.reps, spec.seed, spec.upper_reps)
    lo, lo_se = prof.column("lower")
    up, up_se = prof.column("upper")
    slack = (up + 3 * up_se) - (lo - 3 * lo_se)
    checks = {"bracket_min_slack": _check(slack.min(), 0.0, slack.min() >= 0)}
    for col in ("lower", "upper"):
        t_half = prof.crossings[col][0.5]
        checks[f"{col}_crossing_0.5"] = _check(np.nan if t_half is None else t_half, 0.0, t_half is not None)
    return ["t", "lower", "lower_se", "upper", "upper_se"], list(zip(times, lo, lo_se, up, up_se)), checks


def _coalesce(spec, times):
    n = spec.n
    start = start_policy(spec.start, n, spec.alpha)
    cap = max(times[-1], 1e-12)
    tau = coalescence_times(start, spec.alpha, 0.0, cap, spec.reps, spec.seed)
    p = np.array([np.mean(tau > t) for t in times])
    se = np.sqrt(p * (1 - p) / spec.reps)
    rise = np.max(np.diff(p)) if p.size > 1 else 0.0
    checks = {"survival_nonincreasing": _check(rise, 0.0, rise <= 0)}
    return ["t", "p_tau_gt_t", "se"], list(zip(times, p, se)), checks


def _beta_scan(spec, times):
    rows = []
    ratios = []
    implication_ok = True
    qstar = beta_interval_tv(spec.alpha, Interval(0.0, 1.0), Interval(0.5, 1.5))
    for i1, i2 in ordered_pair_grid():
        tv = beta_interval_tv(spec.alpha, i1, i2)
        Q = sticking_ratio_Q(i1.length, i2.length, abs(i2.midpoint - i1.midpoint))
        ratio = tv / Q if Q > 0 else math.nan
        if Q > 0:
            ratios.append(ratio)
        if tv >= qstar and max(i1.length, i2.length) < 2 * i1.overlap(i2) - 1e-12:
            implication_ok = False
        rows.append((spec.alpha, i1.lo, i1.hi, i2.lo, i2.hi, tv, Q, ratio))
    lo, hi = min(ratios), max(ratios)
    checks = {
        "ratio_min": _check(lo, 1 / 20, lo >= 1 / 20),
        "ratio_max": _check(hi, 20, hi <= 20),
        "overlap_implication": _check(qstar, qstar, implication_ok),
    }
    return ["alpha", "l1", "r1", "l2", "r2", "tv", "Q", "ratio"], rows, checks


def _fkg(spec, times):
    est = fkg_correlation(spec.n, spec.alpha, spec.f, spec.g, spec.reps, spec.seed)
    z = est.value / est.se if est.se > 0 else math.inf
    checks = {"covariance_z": _check(z, -3.0, z >= -3.0)}
    return ["f", "g", "covariance", "se", "reps"], [(spec.f, spec.g, est.value, est.se, est.reps)], checks


def _censor(spec, times):
    rows = []
    zmin = math.inf
    for t in times:
        diff, se = censoring_domination(spec.n, spec.alpha, spec.K, t, spec.reps, spec.seed)
        for k in range(spec.n - 1):
            rows.append((t, k + 1, diff[k], se[k]))
            if se[k] > 0:
                zmin = min(zmin, diff[k] / se[k])
            elif diff[k] < 0:
                zmin = -math.inf
    checks = {"min_z": _check(zmin, -3.0, zmin >= -3.0)}
    return ["t", "k", "diff", "se"], rows, checks


def _separation(spec, times):
    est = separation_profile(spec.n, spec.alpha, times, spec.reps, spec.seed)
    p = np.array([e.value for e in est])
    se = np.array([e.se for e in est])
    rise = np.max((p[1:] - 3 * se[1:]) - (p[:-1] + 3 * se[:-1])) if p.size > 1 else -1.0
    checks = {"nonincreasing_3se": _check(rise, 0.0, rise <= 0)}
    return ["t", "p", "se"], list(zip(times, p, se)), checks


def _wilson(spec, times):
    var, se, _ = wilson_moments(spec.n, spec.alpha, times, spec.reps, spec.seed)
    bound = 12.0 * (1.0 + 1.0 / spec.alpha)
    checks = {"max_scaled_variance": _check(var.max(), bound, var.max() <= bound)}
    rows = [(t, *var[i], *se[i]) for i, t in enumerate(times)]
    return ["t", "var_f1", "var_f2", "var_f3", "se_f1", "se_f2", "se_f3"], rows, checks


_RUNNERS = {
    "gap-decay": _gap_decay,
    "heat-curve": _heat_curve,
    "meanfield-gap": _meanfield,
    "mixing-profile": _mixing,
    "coalesce": _coalesce,
    "beta-tv-scan": _beta_scan,
    "fkg": _fkg,
    "censor-dominate": _censor,
    "separation": _separation,
    "wilson-moments": _wilson,
}


def run(spec: ExperimentSpec) -> dict:
    """Execute ``spec``, write ``<outdir>/<kind>.csv`` and ``summary.json``; return the report."""
    start = time.perf_counter()
    if spec.times is None and spec.kind not in ("beta-tv-scan", "fkg"):
        spec = replace(spec, times=_default_times(spec))
    times = list(spec.times or ())
    header, rows, checks = _RUNNERS[spec.kind](spec, times)
    out = Path(spec.outdir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / f"{spec.kind}.csv"
    _write_csv(table, header, rows)
    report = {
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
        "tables": {spec.kind: str(table)},
        "version": __version__,
        "elapsed_seconds": time.perf_counter() - start,
        "checks": checks,
    }
    (out / "summary.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="simplexwalk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment spec")
    p_run.add_argument("spec_file")
    p_val = sub.add_parser("validate", help="parse a spec and print it with defaults filled in")
    p_val.add_argument("spec_file")
    sub.add_parser("list-kinds", help="print the supported experiment kinds")
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "list-kinds":
            if extra:
                raise SpecError(f"unexpected arguments {extra}")
            print("\n".join(KINDS))
            return 0
        spec = parse_spec(args.spec_file, extra)
        if args.command == "validate":
            sys.stdout.write(spec_to_text(spec))
            return 0
        report = run(spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # hard failure inside a run
        print(f"error: {spec.kind} run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for name, c in report["checks"].items():
        status = "pass" if c["pass"] else "FAIL"
        print(f"{status}  {name}: value={c['value']:.6g} threshold={c['threshold']:.6g}")
    print(f"wrote {report['tables'][spec.kind]} and {Path(spec.outdir) / 'summary.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
