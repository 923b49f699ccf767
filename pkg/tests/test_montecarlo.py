import math

import numpy as np
import pytest

from noise_witness.correlation import CorrelationSpec, corr
from noise_witness.curves import Provenance
from noise_witness.montecarlo import (
    OracleConvergenceError,
    RunningMoments,
    accumulate_phase,
    chi_quadrature_oracle,
    empirical_correlation,
    phase_paths,
    simulate_ramsey,
)
from noise_witness.params import InitialCondition, NoiseParams, TimeGrid
from noise_witness.ramsey import ChiSpec, chi
from noise_witness.trajectories import GenSpec, Trajectory

MARKOV = NoiseParams.markovian(0.5, delta=2.0)
SPEC = GenSpec(MARKOV, InitialCondition.equilibrium(), TimeGrid(0.01, 101), seed=5)


def test_phase_paths_integrate_exactly_for_linear_signals():
    dt = 0.1
    t = np.arange(11) * dt
    np.testing.assert_allclose(phase_paths(np.full(11, 3.0), dt), 3.0 * t, atol=1e-14)
    np.testing.assert_allclose(phase_paths(2 * t, dt), t**2, atol=1e-14)


def test_phase_paths_converge_for_cosine():
    dt = 1e-3
    t = np.arange(3001) * dt
    np.testing.assert_allclose(phase_paths(np.cos(t), dt), np.sin(t), atol=1e-6)


def test_accumulate_phase_bounds():
    traj = Trajectory(TimeGrid(0.1, 5), np.ones(5))
    assert accumulate_phase(traj, 4) == pytest.approx(0.4)
    with pytest.raises(IndexError):
        accumulate_phase(traj, 5)


def test_running_moments_match_numpy_for_any_chunking():
    data = np.random.default_rng(0).normal(size=(103, 4))
    for cuts in ([103], [1, 50, 52], [10] * 10 + [3]):
        m, start = RunningMoments(4), 0
        for size in cuts:
            m.add(data[start : start + size])
            start += size
        np.testing.assert_allclose(m.mean, data.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(m.variance, data.var(axis=0, ddof=1), rtol=1e-12)


def test_simulation_independent_of_chunking_and_workers():
    a = simulate_ramsey(SPEC, 300, chunk_size=64)
    b = simulate_ramsey(SPEC, 300, chunk_size=300)
    c = simulate_ramsey(SPEC, 300, chunk_size=64, workers=2)
    np.testing.assert_allclose(a.signal, b.signal, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(a.signal, c.signal)
    np.testing.assert_array_equal(a.stderr, c.stderr)
    assert a.provenance is Provenance.MONTE_CARLO


def test_simulation_of_zero_noise_is_flat():
    spec = GenSpec(NoiseParams.markovian(0.5, delta=0.0), InitialCondition.equilibrium(), TimeGrid(0.01, 50))
    curve = simulate_ramsey(spec, 20)
    np.testing.assert_array_equal(curve.signal, 1.0)
    np.testing.assert_array_equal(curve.stderr, 0.0)


def test_simulation_tracks_the_closed_form():
    curve = simulate_ramsey(SPEC, 2000, output_indices=[0, 25, 50, 100])
    exact = np.exp(-chi(ChiSpec(MARKOV, InitialCondition.equilibrium()), curve.times))
    z = np.abs(curve.signal - exact)[1:] / curve.stderr[1:]
    assert np.all(z < 5)
    assert curve.signal[0] == 1.0


def test_independent_points_use_fresh_realizations():
    shared = simulate_ramsey(SPEC, 200, output_indices=[20, 40])
    fresh = simulate_ramsey(SPEC, 200, output_indices=[20, 40], independent_points=True)
    assert shared.signal[0] == fresh.signal[0]  # first point draws the same realizations
    assert shared.signal[1] != fresh.signal[1]
    again = simulate_ramsey(SPEC, 200, output_indices=[20, 40], independent_points=True, chunk_size=37)
    np.testing.assert_allclose(fresh.signal, again.signal, atol=1e-15)


def test_simulation_argument_checks():
    with pytest.raises(ValueError, match="n_realizations"):
        simulate_ramsey(SPEC, 1)
    with pytest.raises(IndexError):
        simulate_ramsey(SPEC, 10, output_indices=[200])


def test_empirical_correlation():
    ens = np.random.default_rng(1).normal(size=(400, 3))
    c, se = empirical_correlation(ens, 1, 1)
    assert abs(c - 1) < 5 * se
    with pytest.raises(ValueError, match="100 realizations"):
        empirical_correlation(ens[:99], 0, 1)
    with pytest.raises(IndexError, match="t2_index"):
        empirical_correlation(ens, 0, 3)


def test_oracle_on_constant_correlation():
    assert chi_quadrature_oracle(lambda a, b: 3.0 + 0 * a * b, 2.0) == pytest.approx(6.0, rel=1e-12)
    assert chi_quadrature_oracle(lambda a, b: 1.0 + 0 * a, 0.0) == 0.0


def test_oracle_on_markovian_correlation():
    spec = CorrelationSpec(MARKOV, InitialCondition.quenched())
    value = chi_quadrature_oracle(lambda a, b: corr(spec, a, b), 1.3, tol=1e-10)
    assert value == pytest.approx(chi(ChiSpec(MARKOV, InitialCondition.quenched()), 1.3), rel=1e-8)


def test_oracle_reports_non_convergence():
    with pytest.raises(OracleConvergenceError) as info:
        chi_quadrature_oracle(lambda a, b: np.sign(np.sin(40 * a)) + 0 * b, 1.0, tol=1e-12, max_panels=4)
    assert math.isfinite(info.value.estimate)
    with pytest.raises(ValueError, match="tol"):
        chi_quadrature_oracle(lambda a, b: a, 1.0, tol=0.1)
