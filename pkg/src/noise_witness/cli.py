"""Command-line entry point: ``noise-witness <command> [options]``.

Every run writes its artifacts plus ``manifest.json`` into ``--out``.  The
manifest holds the fully resolved argument list, so ``noise-witness rerun
manifest.json`` reproduces the same files byte for byte.

Noise amplitudes given as ``--delta`` / ``--drive`` are in volts and are
converted with ``--coupling`` (rad/us per V); pass ``--coupling 1`` to give
them directly in rad/us and rad^2/us^3.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import Preparation, classify, detect_revivals, short_time_exponent, WindowTooSmall
from .correlation import CorrelationSpec, SpinBathSpec, asymmetric_bath_params, corr, corr_rotating_bath
from .curves import CurveFormatError, read_curve_csv
from .fitting import Dataset, FitError, FitProblem, fit, identifiability_report, render_report
from .montecarlo import OracleConvergenceError, chi_quadrature_oracle, ensemble_stats, simulate_ramsey
from .params import DEFAULT_COUPLING, InitialCondition, Kind, Mode, NoiseParams, TimeGrid, ValidationError
from .ramsey import ChiSpec, chi, series_coefficients
from .trajectories import (
    DEFAULT_DT_MARKOVIAN,
    DEFAULT_DT_SECOND_ORDER,
    AsymmetricBathSpec,
    GenSpec,
    generate_block,
    write_ensemble,
)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
SEED_ENV = "NOISE_WITNESS_SEED"
VALIDATE_SIGMAS = 5.0
ORACLE_RTOL = 1e-6
# command-line spellings of fit parameter names
FIT_ALIASES = {"tc": "t_c", "td": "t_d", "ts": "t_s", "ta": "t_a", "tb": "t_b", "drive": "drive_norm", "t2star": "extra_t2star"}


class UsageError(Exception):
    pass


# argument parsing


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text):
    return [FIT_ALIASES.get(v.strip(), v.strip()) for v in text.split(",") if v.strip()]


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}: expected an integer, got {raw!r}") from None


def _add_model(p, required=True):
    g = p.add_argument_group("noise model")
    g.add_argument("--kind", choices=[k.value for k in Kind], required=required)
    g.add_argument("--tc", type=float, help="correlation time t_c (us)")
    g.add_argument("--beta", type=float, help="damping coefficient 2/t_c (1/us); alternative to --tc")
    g.add_argument("--omega0", type=float, help="natural frequency (rad/us), second-order only")
    g.add_argument("--delta", type=float, help="noise amplitude (V unless --coupling 1)")
    g.add_argument("--drive", type=float, help="drive strength A/m^2 (V^2/us^3 unless --coupling 1)")
    g.add_argument("--coupling", type=float, default=DEFAULT_COUPLING, help="rad/us per V (default %(default).6g)")
    g.add_argument("--ic", default="equilibrium", choices=[m.value for m in Mode])
    g.add_argument("--td", type=float, help="quench delay (us)")
    g.add_argument("--ta", type=float, help="correlation time before the switch (us)")
    g.add_argument("--tb", type=float, help="correlation time after the switch (us)")
    g.add_argument("--ts", type=float, help="switch time (us)")
    g.add_argument("--t2star", type=float, help="extra independent dephasing time (us)")


def _add_grid(p, tmax=2.5):
    g = p.add_argument_group("time grid")
    g.add_argument("--dt", type=float, help="grid step (us); default depends on --kind")
    g.add_argument("--tmax", type=float, default=tmax, help="last grid time (us, default %(default)s)")


def _add_run(p, n_default):
    p.add_argument("--n", type=int, default=n_default, help="realizations (default %(default)s)")
    p.add_argument("--seed", type=int, help=f"master seed (default ${SEED_ENV} or 0)")
    p.add_argument("--workers", type=int, default=1, help="worker processes; results do not depend on it")


def _add_bath(p):
    g = p.add_argument_group("physical bath (instead of --kind)")
    g.add_argument("--bath", choices=["rotating", "asymmetric"])
    g.add_argument("--omega-rot", type=float, help="rotating bath precession frequency (rad/us)")
    g.add_argument("--sigma-y", type=float, help="asymmetric bath y-relaxation scale")
    g.add_argument("--A", type=float, help="bath white-noise strength")
    g.add_argument("--method", choices=["exact", "euler"], default="exact")
    g.add_argument("--substeps", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noise-witness", description="Ramsey witnesses of stationary and non-Markovian noise.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", default=".", help="output directory (default: current)")
        return p

    p = command("generate", "noise trajectories or a binary ensemble")
    _add_model(p, required=False)
    _add_bath(p)
    _add_grid(p)
    _add_run(p, 1)

    p = command("correlate", "analytic or empirical two-time correlation")
    _add_model(p)
    _add_grid(p)
    _add_run(p, 10_000)
    p.add_argument("--t1", type=_floats, default=[0.0], help="reference times (us), comma-separated")
    p.add_argument("--empirical", action="store_true", help="estimate from --n seeded realizations")

    p = command("analytic", "chi(t), S(t) and series expansions")
    _add_model(p)
    _add_grid(p)

    p = command("simulate", "Monte Carlo Ramsey curve")
    _add_model(p)
    _add_grid(p)
    _add_run(p, 10_000)
    p.add_argument("--every", type=int, default=1, help="keep every k-th grid point")
    p.add_argument("--independent-points", action="store_true", help="fresh realizations for every output time")

    p = command("oracle", "chi by adaptive quadrature of the correlation")
    _add_model(p)
    p.add_argument("--times", type=_floats, required=True, help="evaluation times (us), comma-separated")
    p.add_argument("--tol", type=float, default=1e-9, help="relative quadrature tolerance")

    p = command("fit", "fit one curve or several jointly")
    p.add_argument("data", nargs="*", help="curve CSV files")
    p.add_argument("--joint", nargs="+", metavar="CSV", help="curve CSV files fitted jointly")
    p.add_argument("--free", type=_names, required=True, help="free parameters, e.g. delta,tc")
    p.add_argument("--share", type=_names, help="parameters shared across curves (default: all free)")
    p.add_argument("--ics", type=lambda s: s.split(","), help="initial condition per curve (default: equilibrium[,quenched])")
    p.add_argument("--init", action="append", default=[], metavar="NAME=VALUE", help="initial value (canonical units)")
    p.add_argument("--bounds", action="append", default=[], metavar="NAME=LO:HI", help="parameter bounds (canonical units)")
    p.add_argument("--seed", type=int, help=f"multistart seed (default ${SEED_ENV} or 0)")
    _add_model(p, required=False)

    p = command("classify", "witness-based regime label")
    p.add_argument("--as-prepared", action="append", default=[], metavar="CSV")
    p.add_argument("--quenched", action="append", default=[], metavar="CSV")

    p = command("validate", "empirical versus analytic correlation of a generator")
    _add_model(p, required=False)
    _add_bath(p)
    _add_grid(p)
    _add_run(p, 10_000)

    p = sub.add_parser("rerun", help="re-execute the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the manifest's directory)")
    return parser


# argument resolution


def _seed(args):
    return args.seed if args.seed is not None else _default_seed()


def _t_c(args):
    if args.tc is not None and args.beta is not None:
        raise UsageError("--tc/--beta: give one, not both")
    if args.beta is not None:
        if not args.beta > 0:
            raise UsageError(f"--beta: must be > 0, got {args.beta}")
        return 2.0 / args.beta
    return args.tc


def params_from_args(args) -> NoiseParams:
    if args.kind is None:
        raise UsageError("--kind: required")
    if (args.delta is None) == (args.drive is None):
        raise UsageError("--delta/--drive: give exactly one")
    t_c = _t_c(args)
    if t_c is None:
        t_c = args.ta if args.ic == Mode.SWITCHED_TC.value else None
    if t_c is None:
        raise UsageError("--tc: required (or --beta)")
    amp = {"delta": args.delta * args.coupling} if args.delta is not None else {"drive_norm": args.drive * args.coupling**2}
    if args.kind == Kind.MARKOVIAN.value:
        if args.omega0 is not None:
            raise UsageError("--omega0: only applies to --kind second-order")
        return NoiseParams.markovian(t_c, **amp)
    if args.omega0 is None:
        raise UsageError("--omega0: required for --kind second-order")
    return NoiseParams.second_order(t_c, args.omega0, **amp)


def ic_from_args(args) -> InitialCondition:
    mode = Mode(args.ic)
    needed = {Mode.DELAYED_QUENCH: ("td",), Mode.SWITCHED_TC: ("ta", "tb", "ts")}.get(mode, ())
    for name in ("td", "ta", "tb", "ts"):
        given = getattr(args, name) is not None
        if name in needed and not given:
            raise UsageError(f"--{name}: required for --ic {mode.value}")
        if given and name not in needed:
            raise UsageError(f"--{name}: does not apply to --ic {mode.value}")
    if mode is Mode.EQUILIBRIUM:
        return InitialCondition.equilibrium()
    if mode is Mode.QUENCHED:
        return InitialCondition.quenched()
    if mode is Mode.DELAYED_QUENCH:
        return InitialCondition.delayed(args.td)
    return InitialCondition.switched(args.ta, args.tb, args.ts)


def chi_spec_from_args(args) -> ChiSpec:
    return ChiSpec(params_from_args(args), ic_from_args(args), args.t2star)


def grid_from_args(args, kind=None) -> TimeGrid:
    dt = args.dt
    if dt is None:
        dt = DEFAULT_DT_MARKOVIAN if (kind or args.kind) == Kind.MARKOVIAN.value else DEFAULT_DT_SECOND_ORDER
    if not (dt > 0 and args.tmax > 0):
        raise UsageError("--dt/--tmax: must be > 0")
    return TimeGrid.spanning(args.tmax, dt)


def source_from_args(args):
    """Generator source and its analytic correlation function."""
    if args.bath is None:
        params, ic = params_from_args(args), ic_from_args(args)
        spec = CorrelationSpec(params, ic)
        return params, ic, lambda t1, t2: corr(spec, t1, t2), params.variance
    if args.kind is not None:
        raise UsageError("--bath/--kind: give one, not both")
    t_c = _t_c(args)
    if t_c is None or args.A is None:
        raise UsageError("--tc and --A: required for a bath")
    ic = ic_from_args(args)
    if args.bath == "rotating":
        if args.omega_rot is None:
            raise UsageError("--omega-rot: required for --bath rotating")
        make = SpinBathSpec.quenched if ic.mode is Mode.QUENCHED else SpinBathSpec.at_equilibrium
        bath = make(args.omega_rot, t_c, args.A)
        return bath, ic, lambda t1, t2: corr_rotating_bath(bath, t1, t2), bath.variance
    if args.omega0 is None or args.sigma_y is None:
        raise UsageError("--omega0 and --sigma-y: required for --bath asymmetric")
    bath = AsymmetricBathSpec(t_c, args.omega0, args.sigma_y, args.A)
    spec = CorrelationSpec(asymmetric_bath_params(t_c, args.omega0, args.sigma_y, args.A), ic)
    return bath, ic, lambda t1, t2: corr(spec, t1, t2), bath.variance


def _gen_spec(args, source, ic, grid):
    method = getattr(args, "method", "exact")
    substeps = getattr(args, "substeps", 1)
    return GenSpec(source, ic, grid, seed=_seed(args), method=method, substeps=substeps)


# output helpers


def _write_table(path: Path, header, columns):
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _finite_or_none(value):
    return value if isinstance(value, (int, float)) and math.isfinite(value) else None


# commands; each returns (exit code, {artifact name: summary}, config)


def cmd_generate(args, out):
    grid = grid_from_args(args, args.kind or Kind.SECOND_ORDER.value)
    source, ic, _, _ = source_from_args(args)
    if args.n < 1:
        raise UsageError(f"--n: must be >= 1, got {args.n}")
    spec = _gen_spec(args, source, ic, grid)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        values = generate_block(spec, range(args.n))
    notes = sorted({str(w.message) for w in caught})
    if args.n == 1:
        _write_table(out / "trajectory.csv", ["t_us", "value"], [grid.times, values[0]])
        files = ["trajectory.csv"]
    else:
        write_ensemble(out / "ensemble.nwens", values, grid.dt, spec.seed)
        files = ["ensemble.nwens"]
    return EXIT_OK, files, {"notes": notes}


def cmd_correlate(args, out):
    grid = grid_from_args(args)
    params, ic = params_from_args(args), ic_from_args(args)
    spec = CorrelationSpec(params, ic)
    refs = [grid.index_of(t) for t in args.t1]
    t = grid.times
    header, columns = ["t_us"], [t]
    if args.empirical:
        stats = ensemble_stats(_gen_spec(args, params, ic, grid), args.n, refs, workers=args.workers)
        for i, k in enumerate(refs):
            header += [f"corr_t1={t[k]!r}", f"stderr_t1={t[k]!r}", f"analytic_t1={t[k]!r}"]
            columns += [stats.corr[i], stats.corr_se[i], corr(spec, t[k], t)]
    else:
        for k in refs:
            header.append(f"corr_t1={t[k]!r}")
            columns.append(corr(spec, t[k], t))
    _write_table(out / "correlation.csv", header, columns)
    return EXIT_OK, ["correlation.csv"], {}


def cmd_analytic(args, out):
    spec = chi_spec_from_args(args)
    grid = grid_from_args(args)
    values = chi(spec, grid.times)
    _write_table(out / "chi.csv", ["t_us", "chi", "signal"], [grid.times, values, np.exp(-values)])
    files = ["chi.csv"]
    if spec.ic.mode is not Mode.SWITCHED_TC:
        coeffs = series_coefficients(spec)
        _write_json(out / "expansions.json", {"short": {str(k): v for k, v in coeffs["short"].items()}, "long": coeffs["long"]})
        files.append("expansions.json")
    return EXIT_OK, files, {}


def cmd_simulate(args, out):
    spec = chi_spec_from_args(args)
    if spec.extra_t2star is not None:
        raise UsageError("--t2star: Monte Carlo simulates the noise only; add extra dephasing analytically")
    grid = grid_from_args(args)
    if args.every < 1:
        raise UsageError(f"--every: must be >= 1, got {args.every}")
    gen = _gen_spec(args, spec.params, spec.ic, grid)
    idx = np.arange(0, grid.n_points, args.every)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curve = simulate_ramsey(gen, args.n, idx, workers=args.workers, independent_points=args.independent_points)
    curve.to_csv(out / "ramsey_mc.csv")
    analytic = np.exp(-chi(spec, curve.times))
    z = np.abs(curve.signal - analytic) / np.maximum(curve.stderr, 1e-300)
    summary = {"max_abs_z_vs_analytic": float(z[1:].max()) if z.size > 1 else 0.0, "notes": sorted({str(w.message) for w in caught})}
    return EXIT_OK, ["ramsey_mc.csv"], summary


def cmd_oracle(args, out):
    spec = chi_spec_from_args(args)
    cspec = CorrelationSpec(spec.params, spec.ic)
    breaks = [spec.ic.t_s] if spec.ic.mode is Mode.SWITCHED_TC else []
    times = np.array(args.times)
    if np.any(times < 0):
        raise UsageError("--times: must be >= 0")
    try:
        quad = np.array([chi_quadrature_oracle(lambda a, b: corr(cspec, a, b), t, tol=args.tol, breakpoints=breaks) for t in times])
    except OracleConvergenceError as exc:
        print(f"oracle: {exc}", file=sys.stderr)
        return EXIT_FAILED, [], {}
    base = ChiSpec(spec.params, spec.ic)
    closed = chi(base, times)
    rel = np.abs(closed - quad) / np.maximum(np.abs(quad), 1e-300)
    _write_table(out / "oracle.csv", ["t_us", "chi_quadrature", "chi_closed_form", "rel_diff"], [times, quad, closed, rel])
    worst = float(rel.max()) if rel.size else 0.0
    code = EXIT_OK if worst <= ORACLE_RTOL else EXIT_FAILED
    print(f"max relative difference {worst:.3g} ({'within' if code == EXIT_OK else 'exceeds'} {ORACLE_RTOL:g})")
    return code, ["oracle.csv"], {"max_rel_diff": worst}


def _key_values(items, what, parse):
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--{what}: expected NAME=VALUE, got {item!r}")
        try:
            out[FIT_ALIASES.get(name.strip(), name.strip())] = parse(value)
        except ValueError:
            raise UsageError(f"--{what}: bad value in {item!r}") from None
    return out


def _bounds(text):
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(text)
    return float(lo), float(hi)


def cmd_fit(args, out):
    files = list(args.data) + list(args.joint or [])
    if not files:
        raise UsageError("data: give at least one curve CSV (positional or --joint)")
    ics = args.ics or (["equilibrium", "quenched"][: len(files)] if len(files) > 1 else [args.ic])
    if len(ics) != len(files):
        raise UsageError(f"--ics: expected {len(files)} entries, got {len(ics)}")
    curves = [read_curve_csv(f) for f in files]
    kind = args.kind or Kind.MARKOVIAN.value
    # templates only fix what is not free; the grid search finds the rest
    base = argparse.Namespace(**vars(args))
    base.kind = kind
    if base.tc is None and base.beta is None:
        base.tc = 1.0
    if base.delta is None and base.drive is None:
        base.delta, base.coupling = 1.0, 1.0
    if kind == Kind.SECOND_ORDER.value and base.omega0 is None:
        base.omega0 = 1.0
    datasets = []
    for curve, ic_name in zip(curves, ics):
        ns = argparse.Namespace(**vars(base))
        ns.ic = ic_name
        mode = Mode(ic_name)
        for name, default in (("td", 0.0), ("ta", 1.0), ("tb", 1.0), ("ts", 0.0)):
            applies = (mode is Mode.DELAYED_QUENCH and name == "td") or (mode is Mode.SWITCHED_TC and name != "td")
            if not applies:
                setattr(ns, name, None)
            elif getattr(ns, name) is None:
                setattr(ns, name, default)
        datasets.append(Dataset(curve, chi_spec_from_args(ns)))
    share = args.share if args.share is not None else args.free
    problem = FitProblem(
        datasets,
        tuple(args.free),
        frozenset(share),
        bounds=_key_values(args.bounds, "bounds", _bounds),
        initial=_key_values(args.init, "init", float),
    )
    try:
        result = fit(problem, seed=_seed(args))
    except FitError as exc:
        _write_json(out / "fit.json", {"error": str(exc), "best": exc.best, "report": exc.report})
        print(f"fit: {exc}", file=sys.stderr)
        return EXIT_FAILED, ["fit.json"], {}
    rows = identifiability_report(problem, result)
    report = render_report(rows)
    (out / "fit_report.txt").write_text(report)
    data = result.to_dict()
    data["identifiability"] = [
        {"name": r.name, "dependency": r.dependency, "t_score": _finite_or_none(r.t_score), "p_value": r.p_value, "identified": r.identified}
        for r in rows
    ]
    _write_json(out / "fit.json", data)
    print(report, end="")
    return EXIT_OK, ["fit.json", "fit_report.txt"], {}


def cmd_classify(args, out):
    items = [(read_curve_csv(f), Preparation.AS_PREPARED) for f in args.as_prepared]
    items += [(read_curve_csv(f), Preparation.QUENCHED) for f in args.quenched]
    if not items:
        raise UsageError("--as-prepared/--quenched: give at least one curve")
    label = classify(items)
    data = label.to_dict()
    data["curves"] = []
    for (curve, prep), name in zip(items, args.as_prepared + args.quenched):
        entry = {"file": name, "preparation": prep.value}
        try:
            k = short_time_exponent(curve.renormalized())
            entry["exponent"] = {"value": k.value, "stderr": k.stderr, "points": k.n_points}
        except WindowTooSmall as exc:
            entry["exponent"] = {"error": str(exc)}
        if len(curve) >= 50:
            entry["revivals"] = [{"time": t, "prominence": p} for t, p in detect_revivals(curve.renormalized())]
        data["curves"].append(entry)
    _write_json(out / "classification.json", data)
    print(label.verdict())
    return EXIT_OK, ["classification.json"], {}


def cmd_validate(args, out):
    grid = grid_from_args(args, args.kind or Kind.SECOND_ORDER.value)
    source, ic, corr_fn, variance = source_from_args(args)
    if args.n < 100:
        raise UsageError(f"--n: need >= 100 realizations, got {args.n}")
    refs = sorted({0, grid.n_points // 2, grid.n_points - 1})
    stats = ensemble_stats(_gen_spec(args, source, ic, grid), args.n, refs, workers=args.workers)
    t = grid.times
    analytic = np.array([corr_fn(t[k], t) for k in refs])
    floor = 1e-12 * variance
    z = np.abs(stats.corr - analytic) / (stats.corr_se + floor)
    worst = float(z.max())
    passed = worst <= VALIDATE_SIGMAS
    header = ["t_us"]
    columns = [t]
    for i, k in enumerate(refs):
        header += [f"empirical_t1={t[k]!r}", f"stderr_t1={t[k]!r}", f"analytic_t1={t[k]!r}"]
        columns += [stats.corr[i], stats.corr_se[i], analytic[i]]
    _write_table(out / "validation.csv", header, columns)
    report = {
        "passed": passed,
        "max_deviation_in_se": worst,
        "threshold_in_se": VALIDATE_SIGMAS,
        "n_realizations": args.n,
        "reference_times": [float(t[k]) for k in refs],
    }
    _write_json(out / "validation.json", report)
    print(f"{'PASS' if passed else 'FAIL'}: max deviation {worst:.3g} SE (threshold {VALIDATE_SIGMAS:g} SE) over {t.size} points x {len(refs)} reference times")
    return (EXIT_OK if passed else EXIT_FAILED), ["validation.csv", "validation.json"], report


COMMANDS = {
    "generate": cmd_generate,
    "correlate": cmd_correlate,
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "fit": cmd_fit,
    "classify": cmd_classify,
    "validate": cmd_validate,
}


# manifest


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _resolved_argv(argv, args):
    """The argument list with the seed pinned and --out removed."""
    items = list(argv)
    cleaned = []
    skip = False
    for i, item in enumerate(items):
        if skip:
            skip = False
            continue
        if item == "--out":
            skip = True
            continue
        if item.startswith("--out="):
            continue
        cleaned.append(item)
    if hasattr(args, "seed") and args.seed is None:
        cleaned += ["--seed", str(_seed(args))]
    return cleaned


def _config(args):
    skip = {"out", "workers", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_manifest(out, argv, args, files, summary, code):
    config = _config(args)
    if hasattr(args, "seed"):
        config["seed"] = _seed(args)
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    manifest = {
        "tool": "noise-witness",
        "version": __version__,
        "command": args.command,
        "argv": _resolved_argv(argv, args),
        "config": json.loads(blob),
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "seed": config.get("seed"),
        "exit_code": code,
        "outputs": {name: _sha256(out / name) for name in files},
        "summary": summary,
    }
    _write_json(out / "manifest.json", manifest)


def _rerun(args):
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
        argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"manifest: cannot read {path}: {exc}") from None
    out = args.out if args.out is not None else str(path.parent)
    return run(argv + ["--out", out])


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "rerun":
            return _rerun(args)
        if getattr(args, "workers", 1) < 1:
            raise UsageError(f"--workers: must be >= 1, got {args.workers}")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code, files, summary = COMMANDS[args.command](args, out)
    except (UsageError, ValidationError, CurveFormatError) as exc:
        print(f"noise-witness {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"noise-witness {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _write_manifest(out, argv, args, files, summary, code)
    return code


def main() -> None:
    sys.exit(run())
