"""Weighted least-squares fits of Ramsey curves and identifiability diagnostics.

Residuals live in signal space, (S_model - S_data) / stderr, with unit
weights when a curve has no error bars.  Each fit seeds a coarse log-spaced
grid search, then runs a bounded trust-region Gauss-Newton solver from
several jittered starts and keeps the best objective.

Parameter covariance uses the error bars as absolute when every dataset has
them; otherwise it is scaled by the residual variance.  The dependency of a
parameter, 1 - 1/(C_ii (C^-1)_ii), is 0 when it is uncorrelated with the
others and approaches 1 when another combination of parameters can mimic it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .curves import RamseyCurve
from .params import Mode, ValidationError
from .ramsey import ChiSpec, chi

PARAMETER_NAMES = (
    "delta",
    "t_c",
    "drive_norm",
    "omega0",
    "t_d",
    "t_s",
    "t_a",
    "t_b",
    "extra_t2star",
    "coupling",
    "amplitude_scale",
)
TIME_PARAMS = {"t_c", "t_d", "t_s", "t_a", "t_b", "extra_t2star"}
IC_PARAMS = {"t_d", "t_s", "t_a", "t_b"}
N_STARTS = 8
GRID_CANDIDATES = 5
MAX_GRID = 4096
SINGULAR_COND = 1e14
TIE_RTOL = 1e-9
LOG_FLOOR = 1e-12
# fitted in linear coordinates; all other parameters are positive scales
LOCATION_PARAMS = {"t_s", "t_d", "amplitude_scale"}
PLATEAU_WINDOW = 20
PLATEAU_RTOL = 1e-10


class FitError(RuntimeError):
    """Base class for fit failures; carries whatever was learned so far."""

    def __init__(self, message, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report


class FitConvergenceError(FitError):
    pass


class UnidentifiableError(FitError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    curve: RamseyCurve
    template: ChiSpec


@dataclass(frozen=True, eq=False)
class FitProblem:
    """Datasets plus the parameters to estimate.

    Free parameters listed in ``shared`` take one value across all datasets;
    the others get one value per dataset, reported as ``name@i``.
    ``bounds`` and ``initial`` are keyed the same way (a bare name applies to
    every dataset).
    """

    datasets: tuple
    free: tuple
    shared: frozenset = frozenset()
    bounds: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "free", tuple(self.free))
        object.__setattr__(self, "shared", frozenset(self.shared))
        if not self.datasets:
            raise ValidationError("datasets: at least one dataset is required")
        for name in self.free:
            if name not in PARAMETER_NAMES:
                raise ValidationError(f"free: unknown parameter {name!r}")
        if len(set(self.free)) != len(self.free):
            raise ValidationError("free: duplicate parameter names")
        if "delta" in self.free and "drive_norm" in self.free:
            raise ValidationError("free: delta and drive_norm are mutually derived; free at most one")
        extra = self.shared - set(self.free)
        if extra:
            raise ValidationError(f"shared: {', '.join(sorted(extra))} not among the free parameters")
        for name in self.free:
            if not any(_applies(name, d.template) for d in self.datasets):
                raise ValidationError(f"free: {name} does not enter any dataset's model")

    @property
    def n_data(self) -> int:
        return sum(len(d.curve) for d in self.datasets)

    def slots(self):
        """(key, name, dataset indices) for each entry of the parameter vector."""
        out = []
        single = len(self.datasets) == 1
        for name in self.free:
            users = [i for i, d in enumerate(self.datasets) if _applies(name, d.template)]
            if name in self.shared or single:
                out.append((name, name, tuple(users)))
            else:
                out.extend((f"{name}@{i}", name, (i,)) for i in users)
        return out

    def to_dict(self) -> dict:
        return {
            "datasets": [
                {"curve": d.curve.to_dict(), "template": d.template.to_dict()} for d in self.datasets
            ],
            "free": list(self.free),
            "shared": sorted(self.shared),
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "initial": dict(self.initial),
        }


def _applies(name, template: ChiSpec) -> bool:
    mode = template.ic.mode
    if name == "t_d":
        return mode is Mode.DELAYED_QUENCH
    if name in ("t_s", "t_a", "t_b"):
        return mode is Mode.SWITCHED_TC
    if name == "omega0":
        return template.params.omega0 is not None
    if name == "t_c":
        return mode is not Mode.SWITCHED_TC
    return True


def build_spec(template: ChiSpec, values: dict) -> tuple[ChiSpec, float]:
    """Model spec and signal amplitude for one dataset given parameter values."""
    params, ic = template.params, template.ic
    noise = {k: values[k] for k in ("delta", "drive_norm", "t_c", "omega0") if k in values}
    coupling = values.get("coupling")
    if coupling is not None:
        if "delta" in noise or (params.anchor == "delta" and "drive_norm" not in noise):
            noise["delta"] = coupling * noise.get("delta", params.delta)
        else:
            noise["drive_norm"] = coupling**2 * noise.get("drive_norm", params.drive_norm)
    if noise:
        params = params.with_values(**noise)
    changes = {k: values[k] for k in IC_PARAMS if k in values}
    if changes:
        ic = ic.with_values(**changes)
    t2 = values.get("extra_t2star", template.extra_t2star)
    return ChiSpec(params, ic, t2), values.get("amplitude_scale", 1.0)


def model_signal(template: ChiSpec, values: dict, times) -> np.ndarray:
    spec, amplitude = build_spec(template, values)
    return amplitude * np.exp(-chi(spec, times))


@dataclass(frozen=True, eq=False)
class FitResult:
    names: tuple
    estimates: dict
    stderr: dict
    covariance: np.ndarray
    t_scores: dict
    p_values: dict
    dependency: dict
    reduced_chi2: float
    dof: int
    absolute_sigma: bool
    convergence: dict

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "estimates": self.estimates,
            "stderr": self.stderr,
            "covariance": self.covariance.tolist(),
            "t_scores": self.t_scores,
            "p_values": self.p_values,
            "dependency": self.dependency,
            "reduced_chi2": self.reduced_chi2,
            "dof": self.dof,
            "absolute_sigma": self.absolute_sigma,
            "convergence": self.convergence,
        }


class _Objective:
    def __init__(self, problem: FitProblem):
        self.problem = problem
        self.slots = problem.slots()
        self.absolute = all(d.curve.stderr is not None for d in problem.datasets)
        self.sigmas = []
        for d in problem.datasets:
            if d.curve.stderr is None:
                self.sigmas.append(np.ones(len(d.curve)))
            else:
                err = d.curve.stderr
                positive = err[err > 0]
                floor = 0.1 * np.median(positive) if positive.size else 1.0
                self.sigmas.append(np.maximum(err, floor))
        self.trace = []

    def values_for(self, x, i):
        return {name: x[j] for j, (_, name, users) in enumerate(self.slots) if i in users}

    def residuals(self, x):
        parts = []
        for i, d in enumerate(self.problem.datasets):
            try:
                model = model_signal(d.template, self.values_for(x, i), d.curve.times)
            except ValidationError:
                return np.full(self.problem.n_data, 1e6)
            parts.append((model - d.curve.signal) / self.sigmas[i])
        r = np.concatenate(parts)
        return np.where(np.isfinite(r), r, 1e6)

    def cost(self, x):
        r = self.residuals(x)
        return float(r @ r)


def default_bounds(problem: FitProblem) -> dict:
    times = np.concatenate([d.curve.times for d in problem.datasets])
    uniq = np.unique(times)
    spacing = float(np.min(np.diff(uniq))) if uniq.size > 1 else float(uniq[0] or 1.0)
    t_max = float(uniq.max())
    freq_max = math.pi / spacing
    return {
        "time": (spacing, 1e3 * t_max),
        "t_s": (0.0, t_max),
        "t_d": (0.0, 1e3 * t_max),
        "frequency": (0.0, freq_max),
        "drive_norm": (0.0, freq_max**2 / spacing),
        "coupling": (0.0, 1e3),
        "amplitude_scale": (0.0, 2.0),
    }


def _bounds_for(problem, key, name, defaults):
    for k in (key, name):
        if k in problem.bounds:
            lo, hi = (float(v) for v in problem.bounds[k])
            break
    else:
        if name in ("t_s", "t_d", "drive_norm", "coupling", "amplitude_scale"):
            lo, hi = defaults[name]
        elif name in TIME_PARAMS:
            lo, hi = defaults["time"]
        else:
            lo, hi = defaults["frequency"]
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValidationError(f"bounds: {key} needs finite lo < hi, got ({lo}, {hi})")
    return lo, hi


def _candidates(lo, hi, n=GRID_CANDIDATES):
    low = lo if lo > 0 else hi * 1e-4
    return np.geomspace(low, hi, n + 2)[1:-1]


def _fd_jacobian(fun, x, lo, hi):
    """Central differences, one-sided where a step would leave the box."""
    cols = []
    for j in range(x.size):
        h = 1e-6 * max(abs(x[j]), 1e-6 * (hi[j] - lo[j]))
        up, down = min(x[j] + h, hi[j]), max(x[j] - h, lo[j])
        xu, xd = x.copy(), x.copy()
        xu[j], xd[j] = up, down
        cols.append((fun(xu) - fun(xd)) / (up - down))
    return np.column_stack(cols)


def _solve(obj, x0, lo, hi, max_nfev, logged):
    """Trust-region least squares, in log coordinates where ``logged`` is set.

    Scale-free coordinates turn the curved valleys of nearly degenerate
    parameter pairs into straight ones, which the solver follows far faster.
    """
    trace = []
    lo_z = np.where(logged, np.log(np.maximum(lo, hi * LOG_FLOOR)), lo)
    hi_z = np.where(logged, np.log(hi), hi)

    def to_x(z):
        x = np.array(z, dtype=float)
        x[logged] = np.exp(x[logged])
        return x

    def fun(z):
        r = obj.residuals(to_x(z))
        c = float(r @ r)
        if not trace or c < trace[-1]:
            trace.append(c)
        return r

    def jac(z):
        return _fd_jacobian(lambda v: obj.residuals(to_x(v)), z, lo_z, hi_z)

    z0 = np.where(logged, np.log(np.maximum(x0, np.exp(lo_z))), x0)
    # keep starts strictly inside the box, as the trust-region solver requires
    span = hi_z - lo_z
    z0 = np.clip(z0, lo_z + 1e-10 * span, hi_z - 1e-10 * span)
    res = optimize.least_squares(
        fun,
        z0,
        jac=jac,
        bounds=(lo_z, hi_z),
        method="trf",
        x_scale="jac",
        ftol=1e-12,
        xtol=1e-12,
        gtol=1e-12,
        max_nfev=max_nfev,
    )
    res.x = np.clip(to_x(res.x), lo, hi)
    return res, trace


def _plateaued(trace) -> bool:
    """True when the objective stopped improving before the budget ran out."""
    if len(trace) < PLATEAU_WINDOW + 1:
        return False
    old, new = trace[-PLATEAU_WINDOW - 1], trace[-1]
    return old - new <= PLATEAU_RTOL * max(new, 1e-300)


def fit(problem: FitProblem, *, seed: int = 0, max_nfev: int = 400) -> FitResult:
    """Estimate the free parameters of ``problem``.

    Raises :class:`FitConvergenceError` when no start converges and
    :class:`UnidentifiableError` when the normal equations are singular.
    """
    obj = _Objective(problem)
    slots = obj.slots
    p = len(slots)
    if p == 0:
        raise ValidationError("free: no free parameters")
    if problem.n_data < 5 * p:
        raise ValidationError(f"datasets: need >= {5 * p} points for {p} free parameters, got {problem.n_data}")
    defaults = default_bounds(problem)
    box = [_bounds_for(problem, key, name, defaults) for key, name, _ in slots]
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])

    grid = [_candidates(a, b) for a, b in box]
    logged = np.array([name not in LOCATION_PARAMS for _, name, _ in slots]) & (lo >= 0)
    if GRID_CANDIDATES**p > MAX_GRID:
        # too many combinations: vary one parameter at a time around the centre
        centre = np.array([g[len(g) // 2] for g in grid])
        points = [centre]
        for j, g in enumerate(grid):
            for v in g:
                pt = centre.copy()
                pt[j] = v
                points.append(pt)
    else:
        points = [np.array(pt) for pt in itertools.product(*grid)]
    costs = [obj.cost(pt) for pt in points]
    ranked = [points[i] for i in np.argsort(costs, kind="stable")]
    base = ranked[0]
    given = {key: problem.initial.get(key, problem.initial.get(name)) for key, name, _ in slots}
    if all(v is not None for v in given.values()):
        init = np.array([float(given[k]) for k, _, _ in slots])
        if obj.cost(init) <= obj.cost(base):
            base = init

    rng = np.random.default_rng(seed)
    # jitter the grid search runners-up rather than only the best point, so separate valleys each get a start
    centres = [pt for pt in ranked if pt is not base][: N_STARTS - 1]
    centres += [base] * (N_STARTS - 1 - len(centres))
    starts = [base] + [c * np.exp(0.5 * rng.standard_normal(p)) + (c == 0) * (hi - lo) * 1e-3 for c in centres]
    runs = []
    for x0 in starts:
        res, trace = _solve(obj, x0, lo, hi, max_nfev, logged)
        runs.append((float(2 * res.cost), float(np.linalg.norm(res.x)), res, trace))
    converged = [run for run in runs if run[2].status > 0 or _plateaued(run[3])]
    if not converged:
        best = min(runs, key=lambda run: run[0])[2]
        raise FitConvergenceError(
            "fit did not converge within the evaluation budget",
            best={k: float(v) for (k, _, _), v in zip(slots, best.x)},
        )
    best_obj = min(run[0] for run in converged)
    ties = [run for run in converged if run[0] <= best_obj * (1 + TIE_RTOL) + 1e-300]
    objective, _, res, trace = min(ties, key=lambda run: run[1])

    names = tuple(k for k, _, _ in slots)
    estimates = {k: float(v) for k, v in zip(names, res.x)}
    r = obj.residuals(res.x)
    jac = _fd_jacobian(obj.residuals, res.x, lo, hi)
    dof = problem.n_data - p
    chi2 = float(r @ r)
    reduced = chi2 / dof if dof > 0 else math.nan
    convergence = {
        "status": int(res.status),
        "message": res.message,
        "nfev": int(res.nfev),
        "objective": chi2,
        "trace": trace,
        "starts": [{"objective": run[0], "status": int(run[2].status)} for run in runs],
    }
    info = jac.T @ jac
    norms = np.sqrt(np.diag(info))
    singular = np.any(norms == 0) or np.linalg.cond(info / np.outer(norms, norms)) > SINGULAR_COND
    if singular:
        report = {k: 1.0 if n == 0 else None for k, n in zip(names, norms)}
        raise UnidentifiableError(
            "unidentifiable in this regime: singular normal equations", best=estimates, report=report
        )
    scaled = info / np.outer(norms, norms)
    scaled_inv = np.linalg.inv(scaled)
    cov = scaled_inv / np.outer(norms, norms)
    if not obj.absolute:
        cov = cov * (chi2 / dof if dof > 0 else math.nan)
    cov = (cov + cov.T) / 2
    dependency = {k: float(min(max(1.0 - 1.0 / scaled_inv[j, j], 0.0), 1.0)) for j, k in enumerate(names)}
    if p == 1:
        dependency = {names[0]: 0.0}
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    t_scores = {k: float(estimates[k] / s) if s > 0 else math.inf for k, s in zip(names, se)}
    p_values = {k: float(2 * stats.t.sf(abs(t), dof)) if dof > 0 else math.nan for k, t in t_scores.items()}
    return FitResult(
        names,
        estimates,
        {k: float(s) for k, s in zip(names, se)},
        cov,
        t_scores,
        p_values,
        dependency,
        reduced,
        dof,
        obj.absolute,
        convergence,
    )


@dataclass(frozen=True)
class IdentifiabilityRow:
    name: str
    estimate: float
    stderr: float
    t_score: float
    p_value: float
    dependency: float
    identified: bool


def identifiability_report(problem: FitProblem, result: FitResult, *, p_max=0.05, dependency_max=0.99):
    """Flag parameters whose t-test is insignificant or whose dependency is near 1."""
    rows = []
    for k in result.names:
        p, d = result.p_values[k], result.dependency[k]
        rows.append(
            IdentifiabilityRow(
                k,
                result.estimates[k],
                result.stderr[k],
                result.t_scores[k],
                p,
                d,
                identified=not (p > p_max or d > dependency_max),
            )
        )
    return rows


def render_report(rows, injected: dict | None = None) -> str:
    """Fixed-layout table of injected versus fitted values."""
    header = f"{'parameter':<16}{'injected':>12}{'fitted':>14}{'stderr':>12}{'t':>10}{'p':>10}{'dependency':>12}  verdict"
    lines = [header, "-" * len(header)]
    for row in rows:
        inj = injected.get(row.name) if injected else None
        inj_text = f"{inj:>12.5g}" if inj is not None else f"{'-':>12}"
        verdict = "identified" if row.identified else "UNIDENTIFIED"
        lines.append(
            f"{row.name:<16}{inj_text}{row.estimate:>14.6g}{row.stderr:>12.3g}{row.t_score:>10.3g}"
            f"{row.p_value:>10.3g}{row.dependency:>12.5f}  {verdict}"
        )
    return "\n".join(lines) + "\n"
