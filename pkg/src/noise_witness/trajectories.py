"""Seeded generation of noise trajectories.

Every realization draws from its own Philox counter-based stream keyed by
(seed, realization_index), so a trajectory does not depend on how many
realizations are generated alongside it, in what order, or on which worker.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.linalg import expm

from .correlation import SpinBathSpec
from .params import (
    InitialCondition,
    Kind,
    Mode,
    NoiseParams,
    Regime,
    TimeGrid,
    ValidationError,
    derive,
)

DEFAULT_DT_MARKOVIAN = 0.004
DEFAULT_DT_SECOND_ORDER = 0.001
MAX_SEED = 2**64


class GridWarning(UserWarning):
    """A requested time was snapped to the generation grid."""


def stream(seed: int, realization_index: int) -> np.random.Generator:
    """Random stream for one realization; the 128-bit Philox key packs both integers."""
    seed, realization_index = int(seed), int(realization_index)
    if not 0 <= seed < MAX_SEED:
        raise ValidationError(f"seed: must be in [0, 2^64), got {seed}")
    if not 0 <= realization_index < MAX_SEED:
        raise ValidationError(f"realization_index: must be in [0, 2^64), got {realization_index}")
    return np.random.Generator(np.random.Philox(key=seed + (realization_index << 64)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    values: np.ndarray
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise ValueError("values must have one entry per grid point")
        if not np.all(np.isfinite(values)):
            raise ValueError("trajectory values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def to_csv(self, path=None) -> str:
        lines = ["t_us,n"]
        lines += [f"{t!r},{v!r}" for t, v in zip(self.times.tolist(), self.values.tolist())]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass(frozen=True)
class AsymmetricBathSpec:
    """Bath whose x axis neither relaxes nor fluctuates; noise enters only along y.

    The equivalent second-order model has effective mass 1 / (omega0 sigma_y).
    """

    t_c: float
    omega0: float
    sigma_y: float
    A: float

    def __post_init__(self):
        for name in ("t_c", "omega0", "sigma_y"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name}: must be > 0, got {getattr(self, name)}")
        if self.A < 0:
            raise ValidationError(f"A: must be >= 0, got {self.A}")

    @property
    def variance(self) -> float:
        return self.A * self.sigma_y**2 * self.t_c / 4.0


@dataclass(frozen=True)
class GenSpec:
    """Everything that determines an ensemble of trajectories.

    ``source`` is a NoiseParams, SpinBathSpec or AsymmetricBathSpec.  Bath
    sources use ``ic`` only to choose between an equilibrium start and a start
    from zero (a SpinBathSpec carries its own initial covariance instead).
    ``method`` selects the bath integrator: "exact" Gaussian transitions or
    "euler" (Euler-Maruyama with ``substeps`` sub-steps per grid step).
    """

    source: object
    ic: InitialCondition
    grid: TimeGrid
    seed: int = 0
    method: str = "exact"
    substeps: int = 1

    def __post_init__(self):
        if self.method not in ("exact", "euler"):
            raise ValidationError(f"method: expected 'exact' or 'euler', got {self.method!r}")
        if int(self.substeps) < 1:
            raise ValidationError(f"substeps: must be >= 1, got {self.substeps}")
        stream(self.seed, 0)


def generate(spec: GenSpec, realization_index: int = 0) -> Trajectory:
    values, notes = _dispatch(spec, [realization_index])
    return Trajectory(spec.grid, values[0], notes)


def generate_block(spec: GenSpec, indices) -> np.ndarray:
    """Values of several realizations as a (len(indices), n_points) array."""
    return _dispatch(spec, list(indices))[0]


def _dispatch(spec, indices):
    src = spec.source
    if isinstance(src, NoiseParams):
        if src.kind is Kind.MARKOVIAN:
            return _markovian_block(src, spec.ic, spec.grid, spec.seed, indices)
        return _second_order_block(src, spec.ic, spec.grid, spec.seed, indices), ()
    if isinstance(src, SpinBathSpec):
        return _rotating_block(src, spec.grid, spec.seed, indices, spec.method, spec.substeps), ()
    if isinstance(src, AsymmetricBathSpec):
        return _asymmetric_block(src, spec.ic, spec.grid, spec.seed, indices, spec.method, spec.substeps), ()
    raise ValidationError(f"source: unsupported type {type(src).__name__}")


# Markovian: average of M retain-or-resample sequences


def sequence_count(t_c: float, dt: float) -> int:
    m = int(round(t_c / dt))
    if m < 1:
        raise ValidationError(f"dt: grid too coarse for t_c (t_c/dt = {t_c / dt:.3g} rounds to 0 sequences)")
    return m


def _snap(value, dt, name, notes):
    k = int(round(value / dt))
    if abs(k * dt - value) > 1e-9 * max(dt, abs(value)):
        msg = f"{name}={value:g} us is not on the dt={dt:g} us grid; snapped to {k * dt:g} us"
        warnings.warn(msg, GridWarning, stacklevel=4)
        notes.append(msg)
    return k


@dataclass
class _MarkovPlan:
    n_points: int
    m: int
    retain: np.ndarray  # retain probability of the step into point k (index 0 unused)
    sigma: np.ndarray  # per-sequence resample deviation at point k
    start_sd: float  # per-sequence deviation of the first point
    drop: int = 0
    notes: list = field(default_factory=list)


def _markov_plan(params, ic, grid):
    notes = []
    dt = grid.dt
    drop = 0
    if ic.mode is Mode.SWITCHED_TC:
        m = sequence_count(ic.t_a, dt)
        n = grid.n_points
        ks = _snap(ic.t_s, dt, "t_s", notes)
        k = np.arange(n)
        retain = np.where(k <= ks, math.exp(-dt / ic.t_a), math.exp(-dt / ic.t_b))
        sigma = np.full(n, params.delta * math.sqrt(m))
        return _MarkovPlan(n, m, retain, sigma, params.delta * math.sqrt(m), 0, notes)
    m = sequence_count(params.t_c, dt)
    if ic.mode is Mode.DELAYED_QUENCH:
        drop = _snap(ic.t_d, dt, "t_d", notes)
    n = grid.n_points + drop
    p = math.exp(-dt / params.t_c)
    retain = np.full(n, p)
    sd = params.delta * math.sqrt(m)
    if ic.mode is Mode.EQUILIBRIUM:
        return _MarkovPlan(n, m, retain, np.full(n, sd), sd, 0, notes)
    # quenched: resample variance keeps Var n(t_k) = delta^2 (1 - p^(2k))
    k = np.arange(n)
    sigma = sd * np.sqrt(1.0 + p ** np.maximum(2 * k - 1, 0))
    return _MarkovPlan(n, m, retain, sigma, 0.0, drop, notes)


def _markov_one(plan, rng):
    n, m = plan.n_points, plan.m
    steps = n - 1
    # renewal cells (sequence j, step k) are iid Bernoulli(1 - retain[k]); draw the
    # renewed cells directly, one block per distinct retain probability
    ids = []
    for lo, hi in _constant_runs(plan.retain, 1, n):
        q = 1.0 - plan.retain[lo]
        width = hi - lo
        count = rng.binomial(m * width, q)
        cells = rng.choice(m * width, size=count, replace=False)
        ids.append((cells // width) * steps + (cells % width) + (lo - 1))
    cells = np.sort(np.concatenate(ids)) if ids else np.zeros(0, dtype=np.int64)
    seq = cells // steps
    step = cells % steps + 1
    new = plan.sigma[step] * rng.standard_normal(cells.size)
    first = np.ones(cells.size, dtype=bool)
    first[1:] = seq[1:] != seq[:-1]
    prev = np.empty(cells.size)
    prev[1:] = new[:-1]
    renewed = int(first.sum())
    if plan.start_sd > 0:
        starts = plan.start_sd * rng.standard_normal(renewed)
        rest = plan.start_sd * math.sqrt(m - renewed) * rng.standard_normal()
        prev[first] = starts
        total0 = starts.sum() + rest
    else:
        prev[first] = 0.0
        total0 = 0.0
    increments = np.bincount(step, weights=new - prev, minlength=n)
    increments[0] = total0
    return np.cumsum(increments)[plan.drop :] / m


def _constant_runs(values, start, stop):
    runs = []
    lo = start
    for k in range(start + 1, stop + 1):
        if k == stop or values[k] != values[lo]:
            runs.append((lo, k))
            lo = k
    return runs


def _markovian_block(params, ic, grid, seed, indices):
    plan = _markov_plan(params, ic, grid)
    out = np.empty((len(indices), grid.n_points))
    for row, index in enumerate(indices):
        out[row] = _markov_one(plan, stream(seed, index))
    return out, tuple(plan.notes)


def gen_markovian(params: NoiseParams, ic: InitialCondition, grid: TimeGrid, seed: int, realization_index: int = 0) -> Trajectory:
    if params.kind is not Kind.MARKOVIAN:
        raise ValidationError("kind: gen_markovian needs a Markovian model")
    return generate(GenSpec(params, ic, grid, seed), realization_index)


# second order: Riemann-sum convolution of Lorentzian driving with the Green's function


def riemann_dt_limit(omega0: float) -> float:
    return 2.0 * math.pi / (10.0 * omega0)


def _check_second_order(params, ic, grid):
    if params.kind is not Kind.SECOND_ORDER:
        raise ValidationError("kind: needs a second-order model")
    regime = derive(params)
    if regime.regime is not Regime.UNDERDAMPED:
        raise ValidationError(f"omega0: generation needs an underdamped model, got {regime.regime.value}")
    if ic.mode not in (Mode.EQUILIBRIUM, Mode.QUENCHED):
        raise ValidationError(f"mode: unsupported combination second-order + {ic.mode.value}")
    if grid.dt > riemann_dt_limit(params.omega0) * (1 + 1e-12):
        raise ValidationError(
            f"dt: Riemann sum not converged (dt={grid.dt:g} us > 2 pi / (10 omega0) = {riemann_dt_limit(params.omega0):g} us)"
        )
    return regime.Omega


def lorentzian_driving(rng, n_points, dt, drive):
    """Exponentially correlated driving with correlation time dt.

    A single retain-or-resample sequence with retain probability 1/e.  The
    per-point variance (drive/dt)(1-p)/(1+p) makes the lag sum of the
    discrete covariance, times dt, equal the white-noise strength ``drive``.
    """
    p = math.exp(-1.0)
    sd = math.sqrt(drive / dt * (1.0 - p) / (1.0 + p))
    fresh = sd * rng.standard_normal(n_points)
    keep = rng.random(n_points) < p
    keep[0] = False
    # index of the most recent resampled point at or before each step
    last = np.where(keep, 0, np.arange(n_points))
    np.maximum.accumulate(last, out=last)
    return fresh[last]


def _second_order_block(params, ic, grid, seed, indices):
    omega = _check_second_order(params, ic, grid)
    n, dt = grid.n_points, grid.dt
    t = grid.times
    green = np.sin(omega * t) * np.exp(-t / params.t_c) / omega
    size = next_fast_len(2 * n - 1, real=True)
    green_hat = rfft(green, size)
    drive = np.empty((len(indices), n))
    starts = np.zeros((len(indices), 2))
    for row, index in enumerate(indices):
        rng = stream(seed, index)
        drive[row] = lorentzian_driving(rng, n, dt, params.drive_norm)
        if ic.mode is Mode.EQUILIBRIUM:
            starts[row] = rng.standard_normal(2) * (params.delta, params.omega0 * params.delta)
    out = np.empty_like(drive)
    # rows are transformed one at a time so a trajectory never depends on its batch
    for row in range(len(indices)):
        out[row] = dt * irfft(rfft(drive[row], size) * green_hat, size)[:n]
    out[:, 0] = 0.0  # empty Riemann sum; removes FFT round-off
    if ic.mode is Mode.EQUILIBRIUM:
        out += homogeneous_solution(starts[:, :1], starts[:, 1:], t[None, :], params)
    return out


def gen_second_order(params: NoiseParams, ic: InitialCondition, grid: TimeGrid, seed: int, realization_index: int = 0) -> Trajectory:
    return generate(GenSpec(params, ic, grid, seed), realization_index)


def homogeneous_solution(n0, n0p, t, params: NoiseParams):
    """Free decay of the oscillator from n(0) = n0, n'(0) = n0p.

    Valid in all three damping regimes and continuous across the critical
    boundary: sin(x)/x and sinh(x)/x are evaluated without division by zero.
    """
    if params.kind is not Kind.SECOND_ORDER:
        raise ValidationError("kind: needs a second-order model")
    t = np.asarray(t, dtype=float)
    a = 1.0 / params.t_c
    w0 = params.omega0
    gap = (w0 - a) * (w0 + a)
    decay = np.exp(-a * t)
    if gap >= 0:
        freq = math.sqrt(gap)
        osc = np.cos(freq * t)
        sin_over = t * np.sinc(freq * t / math.pi)
    else:
        freq = math.sqrt(-gap)
        osc = np.cosh(freq * t)
        x = freq * t
        sin_over = np.where(np.abs(x) < 1e-4, t * (1 + x * x / 6), np.sinh(x) / np.where(freq == 0, 1.0, freq))
    return (n0 * osc + (n0p + a * n0) * sin_over) * decay


# two-dimensional bath models


def _cholesky2(cov):
    """Lower-triangular square root of a 2x2 PSD matrix, tolerating singular input."""
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _bath_check(freq, grid, name):
    if freq > 0 and grid.dt > riemann_dt_limit(freq) * (1 + 1e-12):
        raise ValidationError(f"dt: grid too coarse for {name} (needs dt <= 2 pi / (10 * {name}))")


def _propagate(phi, noise_root, start, normals):
    """Run x_{k+1} = phi x_k + noise_root z_k for many realizations, elementwise."""
    r, steps = normals.shape[0], normals.shape[1]
    x = np.empty((r, steps + 1))
    cx, cy = start[:, 0].copy(), start[:, 1].copy()
    x[:, 0] = cx
    (p00, p01), (p10, p11) = phi
    (l00, l01), (l10, l11) = noise_root
    for k in range(steps):
        z0, z1 = normals[:, k, 0], normals[:, k, 1]
        nx = p00 * cx + p01 * cy + l00 * z0 + l01 * z1
        ny = p10 * cx + p11 * cy + l10 * z0 + l11 * z1
        cx, cy = nx, ny
        x[:, k + 1] = cx
    return x


def _bath_draws(seed, indices, start_root, steps):
    starts = np.empty((len(indices), 2))
    normals = np.empty((len(indices), steps, 2))
    for row, index in enumerate(indices):
        rng = stream(seed, index)
        starts[row] = start_root @ rng.standard_normal(2)
        normals[row] = rng.standard_normal((steps, 2))
    return starts, normals


def _euler_transition(drift, diffusion, h, substeps):
    """Euler-Maruyama over ``substeps`` sub-steps, written as one linear Gaussian map."""
    hs = h / substeps
    step = np.eye(2) + drift * hs
    phi = np.linalg.matrix_power(step, substeps)
    cov = np.zeros((2, 2))
    for _ in range(substeps):
        cov = step @ cov @ step.T + diffusion * hs
    return phi, cov


def _rotating_block(spec, grid, seed, indices, method, substeps):
    _bath_check(abs(spec.omega_rot), grid, "Omega_rot")
    h, w, a = grid.dt, spec.omega_rot, 1.0 / spec.t_c
    xx, yy, xy = spec.init_cov
    start_root = _cholesky2([[xx, xy], [xy, yy]])
    if method == "exact":
        decay = math.exp(-a * h)
        c, s = math.cos(w * h), math.sin(w * h)
        phi = decay * np.array([[c, s], [-s, c]])
        cov = spec.variance * -math.expm1(-2 * a * h) * np.eye(2)
    else:
        drift = np.array([[-a, w], [-w, -a]])
        phi, cov = _euler_transition(drift, spec.A * np.eye(2), h, substeps)
    starts, normals = _bath_draws(seed, indices, start_root, grid.n_points - 1)
    return _propagate(phi, _cholesky2(cov), starts, normals)


def _asymmetric_matrices(spec, h):
    a2 = 2.0 / spec.t_c
    drift = np.array([[0.0, spec.omega0], [-spec.omega0, -a2]])
    diffusion = np.array([[0.0, 0.0], [0.0, spec.A * spec.sigma_y**2]])
    return drift, diffusion


def _exact_transition(drift, diffusion, h):
    """Discrete transition and noise covariance of a linear SDE (Van Loan)."""
    block = np.zeros((4, 4))
    block[:2, :2] = -drift
    block[:2, 2:] = diffusion
    block[2:, 2:] = drift.T
    e = expm(block * h)
    phi = e[2:, 2:].T
    cov = phi @ e[:2, 2:]
    return phi, (cov + cov.T) / 2


def _asymmetric_block(spec, ic, grid, seed, indices, method, substeps):
    _bath_check(spec.omega0, grid, "omega0")
    drift, diffusion = _asymmetric_matrices(spec, grid.dt)
    if method == "exact":
        phi, cov = _exact_transition(drift, diffusion, grid.dt)
    else:
        phi, cov = _euler_transition(drift, diffusion, grid.dt, substeps)
    if ic.mode is Mode.EQUILIBRIUM:
        sd = math.sqrt(spec.variance)
        start_root = np.diag([sd, sd])  # Iy = n'/omega0 has the same spread as Ix
    elif ic.mode is Mode.QUENCHED:
        start_root = np.zeros((2, 2))
    else:
        raise ValidationError(f"mode: unsupported combination asymmetric bath + {ic.mode.value}")
    starts, normals = _bath_draws(seed, indices, start_root, grid.n_points - 1)
    return _propagate(phi, _cholesky2(cov), starts, normals)


def gen_rotating_bath(spec: SpinBathSpec, grid: TimeGrid, seed: int, realization_index: int = 0, method="exact", substeps=1) -> Trajectory:
    return generate(GenSpec(spec, InitialCondition.equilibrium(), grid, seed, method, substeps), realization_index)


def gen_asymmetric_bath(spec: AsymmetricBathSpec, ic: InitialCondition, grid: TimeGrid, seed: int, realization_index: int = 0, method="exact", substeps=1) -> Trajectory:
    return generate(GenSpec(spec, ic, grid, seed, method, substeps), realization_index)


# binary ensemble format

_MAGIC = b"NWENS001"
_HEADER = struct.Struct("<8sdQQQ")


def write_ensemble(path, values: np.ndarray, dt: float, seed: int) -> None:
    """Header (magic, dt, n_points, n_realizations, seed) then row-major little-endian float64."""
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ValueError("ensemble values must be 2-D (realizations, points)")
    r, n = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, float(dt), n, r, int(seed)))
        fh.write(values.tobytes())


def read_ensemble(path) -> tuple[np.ndarray, dict]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated ensemble header")
    magic, dt, n, r, seed = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an ensemble file")
    body = data[_HEADER.size :]
    if len(body) != 8 * n * r:
        raise ValueError(f"{path}: expected {n * r} values, found {len(body) // 8}")
    values = np.frombuffer(body, dtype="<f8").reshape(r, n).astype(float)
    return values, {"dt": dt, "n_points": n, "n_realizations": r, "seed": seed}
