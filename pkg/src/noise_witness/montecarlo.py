"""Ensemble Ramsey simulation, empirical correlations and the quadrature oracle."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .curves import Provenance, RamseyCurve
from .trajectories import GenSpec, Trajectory, generate_block

DEFAULT_REALIZATIONS = 10_000
EXPERIMENT_REALIZATIONS = 100
CHUNK = 500


def phase_paths(values: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal running integral of each row, starting at 0."""
    values = np.asarray(values, dtype=float)
    csum = np.cumsum(values, axis=-1)
    return dt * (csum - 0.5 * (values[..., :1] + values))


def accumulate_phase(traj: Trajectory, t_index: int) -> float:
    if not 0 <= t_index < traj.grid.n_points:
        raise IndexError(f"t_index {t_index} outside 0..{traj.grid.n_points - 1}")
    return float(phase_paths(traj.values[: t_index + 1], traj.grid.dt)[-1])


class RunningMoments:
    """Mean and sum of squared deviations per column, merged chunk by chunk.

    Chunks are always merged in index order, so the result depends only on the
    chunk boundaries, never on which worker produced a chunk.
    """

    def __init__(self, width: int):
        self.n = 0
        self.mean = np.zeros(width)
        self.m2 = np.zeros(width)

    def add(self, block: np.ndarray) -> None:
        block = np.ascontiguousarray(np.asarray(block, dtype=float).T)  # pairwise sums along rows
        k = block.shape[1]
        if k == 0:
            return
        mean = block.sum(axis=1) / k
        m2 = ((block - mean[:, None]) ** 2).sum(axis=1)
        total = self.n + k
        delta = mean - self.mean
        self.mean = self.mean + delta * (k / total)
        self.m2 = self.m2 + m2 + delta**2 * (self.n * k / total)
        self.n = total

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / (self.n - 1)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance / self.n)


def _chunks(start, n, size):
    return [range(lo, min(lo + size, start + n)) for lo in range(start, start + n, size)]


def _map_chunks(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return map(fn, jobs)
    pool = ProcessPoolExecutor(max_workers=workers)
    return _closing(pool, pool.map(fn, jobs))


def _closing(pool, results):
    with pool:
        yield from results


def _cos_phase_block(job):
    spec, indices, out_idx = job
    values = generate_block(spec, indices)
    return np.cos(phase_paths(values, spec.grid.dt)[:, out_idx])


def simulate_ramsey(
    spec: GenSpec,
    n_realizations: int = DEFAULT_REALIZATIONS,
    output_indices=None,
    *,
    start_index: int = 0,
    workers: int = 1,
    chunk_size: int = CHUNK,
    independent_points: bool = False,
) -> RamseyCurve:
    """Monte Carlo Ramsey curve: mean of cos(phase) over realizations, with its standard error.

    By default every output time reuses the same realizations, so errors are
    correlated along the curve.  With ``independent_points`` each output time
    gets its own ``n_realizations`` fresh realizations, as in an experiment
    that injects new noise for every evolution time.
    """
    if n_realizations < 2:
        raise ValueError("n_realizations: must be >= 2")
    out_idx = np.arange(spec.grid.n_points) if output_indices is None else np.asarray(output_indices, dtype=int)
    if np.any(out_idx < 0) or np.any(out_idx >= spec.grid.n_points):
        raise IndexError("output_indices: outside the grid")
    times = spec.grid.times[out_idx]
    if not independent_points:
        jobs = [(spec, block, out_idx) for block in _chunks(start_index, n_realizations, chunk_size)]
        moments = RunningMoments(out_idx.size)
        for block in _map_chunks(_cos_phase_block, jobs, workers):
            moments.add(block)
        return RamseyCurve(times, moments.mean, moments.stderr, Provenance.MONTE_CARLO)
    jobs = []
    for j, k in enumerate(out_idx):
        first = start_index + j * n_realizations
        jobs += [(spec, block, np.array([k])) for block in _chunks(first, n_realizations, chunk_size)]
    per_point = [RunningMoments(1) for _ in out_idx]
    owner = [j for j in range(out_idx.size) for _ in _chunks(0, n_realizations, chunk_size)]
    for j, block in zip(owner, _map_chunks(_cos_phase_block, jobs, workers)):
        per_point[j].add(block)
    mean = np.array([m.mean[0] for m in per_point])
    stderr = np.array([m.stderr[0] for m in per_point])
    return RamseyCurve(times, mean, stderr, Provenance.MONTE_CARLO)


def empirical_correlation(ensemble: np.ndarray, t1_index: int, t2_index: int) -> tuple[float, float]:
    """Sample mean of n(t1) n(t2) over realizations and its standard error."""
    ensemble = np.asarray(ensemble, dtype=float)
    r, n = ensemble.shape
    if r < 100:
        raise ValueError(f"ensemble: need >= 100 realizations, got {r}")
    for name, idx in (("t1_index", t1_index), ("t2_index", t2_index)):
        if not 0 <= idx < n:
            raise IndexError(f"{name} {idx} outside 0..{n - 1}")
    prod = ensemble[:, t1_index] * ensemble[:, t2_index]
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(r))


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Per-point moments plus two-time correlations against reference points.

    ``corr[i, k]`` estimates <n(t_ref_i) n(t_k)> and ``corr_se`` its standard error.
    """

    n_realizations: int
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    ref_indices: np.ndarray
    corr: np.ndarray
    corr_se: np.ndarray


def _stats_block(job):
    spec, indices, refs = job
    values = generate_block(spec, indices)
    prods = (values[:, refs][:, :, None] * values[:, None, :]).reshape(len(indices), -1)
    return np.concatenate([values, prods], axis=1)


def ensemble_stats(spec: GenSpec, n_realizations: int, ref_indices=(0,), *, workers=1, chunk_size=CHUNK) -> EnsembleStats:
    """Stream realizations through moment accumulators without storing the ensemble."""
    refs = np.asarray(ref_indices, dtype=int)
    n = spec.grid.n_points
    moments = RunningMoments(n * (1 + refs.size))
    jobs = [(spec, block, refs) for block in _chunks(0, n_realizations, chunk_size)]
    for block in _map_chunks(_stats_block, jobs, workers):
        moments.add(block)
    se = moments.stderr
    return EnsembleStats(
        n_realizations,
        spec.grid.times,
        moments.mean[:n],
        moments.variance[:n],
        refs,
        moments.mean[n:].reshape(refs.size, n),
        se[n:].reshape(refs.size, n),
    )


# quadrature oracle

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


class OracleConvergenceError(RuntimeError):
    def __init__(self, estimate, change, tol):
        super().__init__(f"quadrature did not reach rel. tol {tol:g}; best estimate {estimate!r} (last change {change:.3g})")
        self.estimate = estimate


def _panel_rule(lo, hi, panels):
    """Gauss-Legendre nodes/weights on [lo, hi] split into equal panels; broadcasts over lo, hi."""
    lo = np.asarray(lo, dtype=float)[..., None]
    width = (np.asarray(hi, dtype=float)[..., None] - lo) / panels
    left = lo + width * np.arange(panels)
    nodes = left[..., :, None] + width[..., :, None] * (_GL_NODES + 1) / 2
    weights = np.broadcast_to(width[..., :, None] * _GL_WEIGHTS / 2, nodes.shape)
    shape = nodes.shape[:-2] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def _segments(t, breakpoints):
    cuts = sorted({0.0, float(t), *(float(b) for b in breakpoints if 0.0 < b < t)})
    return list(zip(cuts[:-1], cuts[1:]))


def _triangle_rule(corr_fn, t, panels, breakpoints):
    total = 0.0
    for lo, hi in _segments(t, breakpoints):
        t1, w1 = _panel_rule(lo, hi, panels)
        inner = np.zeros_like(t1)
        for b_lo, b_hi in _segments(t, breakpoints):
            a = np.minimum(b_lo, t1)
            b = np.minimum(b_hi, t1)
            t2, w2 = _panel_rule(a, b, panels)
            inner += np.sum(w2 * corr_fn(t1[:, None], t2), axis=1)
        total += float(np.sum(w1 * inner))
    return total


def chi_quadrature_oracle(corr_fn, t: float, tol: float = 1e-7, breakpoints=(), max_panels: int = 512) -> float:
    """Integral of corr_fn(t1, t2) over 0 <= t2 <= t1 <= t by refined Gauss-Legendre panels.

    Panels double until two successive estimates agree to ``tol`` relative.
    ``breakpoints`` are times where the integrand has a kink.
    """
    if not 0 < tol <= 1e-3:
        raise ValueError(f"tol: must be in (0, 1e-3], got {tol}")
    if t < 0:
        raise ValueError("t: must be >= 0")
    if t == 0:
        return 0.0
    panels = 1
    prev = _triangle_rule(corr_fn, t, panels, breakpoints)
    change = math.inf
    while panels < max_panels:
        panels *= 2
        cur = _triangle_rule(corr_fn, t, panels, breakpoints)
        change = abs(cur - prev)
        if change <= tol * abs(cur) or change == 0.0:
            return cur
        prev = cur
    raise OracleConvergenceError(prev, change, tol)
