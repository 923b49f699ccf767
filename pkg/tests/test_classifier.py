import json
import math

import numpy as np
import pytest

from noise_witness.classifier import (
    Memory,
    Preparation,
    Stationarity,
    WindowTooSmall,
    classify,
    detect_revivals,
    long_time_offset,
    noise_floor,
    revival_curvature,
    short_time_exponent,
)
from noise_witness.curves import RamseyCurve
from noise_witness.params import DEFAULT_COUPLING as C
from noise_witness.params import InitialCondition, NoiseParams, TimeGrid
from noise_witness.ramsey import ChiSpec, ramsey_signal, revival_peak_times

EQ, QU = InitialCondition.equilibrium(), InitialCondition.quenched()
MARKOV = NoiseParams.markovian(2.5, delta=0.1 * C)
UNDER = NoiseParams.second_order(80.0, 6.0, drive_norm=0.054 * C * C)
DENSE = np.linspace(0, 2.5, 25001)


def _curve(params, ic, times=DENSE):
    return ramsey_signal(ChiSpec(params, ic), times)


@pytest.mark.parametrize(
    "params, ic, k, tol",
    [
        (MARKOV, EQ, 2.0, 0.1),
        (MARKOV, QU, 3.0, 0.1),
        (NoiseParams.second_order(20.0, 0.3, drive_norm=0.054 * C * C), QU, 5.0, 0.15),
    ],
    ids=["markov-eq", "markov-qu", "under-qu"],
)
def test_short_time_exponents(params, ic, k, tol):
    exponent = short_time_exponent(_curve(params, ic))
    assert abs(exponent.value - k) <= tol
    assert exponent.consistent_with(k)
    assert exponent.n_points >= 6


def test_exponent_approaches_leading_order_as_window_shrinks():
    curve = _curve(MARKOV, QU)
    wide, narrow = (short_time_exponent(curve, (1e-3, hi)).value for hi in (0.1, 0.02))
    assert abs(narrow - 3.0) < abs(wide - 3.0)


def test_window_too_small():
    coarse = _curve(MARKOV, EQ, np.linspace(0, 2.5, 11))
    with pytest.raises(WindowTooSmall, match="window too small"):
        short_time_exponent(coarse)


def test_revivals_at_equilibrium_peak_near_the_oscillation_period():
    grid = TimeGrid(0.001, 2501)
    peaks = detect_revivals(_curve(UNDER, EQ, grid.times))
    first = revival_peak_times(ChiSpec(UNDER, EQ), 1)[0]
    assert peaks and abs(peaks[0][0] - first) <= grid.dt
    assert [t for t, _ in peaks] == sorted(t for t, _ in peaks)


@pytest.mark.parametrize("params, ic", [(MARKOV, EQ), (UNDER, QU)], ids=["markov-eq", "under-qu"])
def test_no_revivals_without_equilibrium_oscillations(params, ic):
    assert detect_revivals(_curve(params, ic, np.linspace(0, 2.5, 2501))) == []


def test_revival_detection_needs_enough_points():
    with pytest.raises(ValueError, match="50 points"):
        detect_revivals(_curve(MARKOV, EQ, np.linspace(0, 1, 49)))


def test_equilibrium_underdamped_is_stationary_and_non_markovian():
    label = classify([_curve(UNDER, EQ, TimeGrid(0.001, 2501).times)])
    assert (label.stationarity, label.memory) == (Stationarity.STATIONARY, Memory.NON_MARKOVIAN)
    assert any(e.witness == "revival peaks" and e.value > 0 for e in label.evidence)


def test_quenched_markovian_as_prepared():
    label = classify([_curve(MARKOV, QU)])
    assert (label.stationarity, label.memory) == (Stationarity.NON_STATIONARY, Memory.MARKOVIAN)


def test_quenched_underdamped_pair():
    under = NoiseParams.second_order(20.0, 0.3, drive_norm=0.054 * C * C)
    label = classify([(_curve(under, EQ), Preparation.AS_PREPARED), (_curve(under, QU), "quenched-prepared")])
    assert label.stationarity is Stationarity.STATIONARY
    assert label.memory is Memory.NON_MARKOVIAN


def test_flat_curve_is_inconclusive():
    label = classify([RamseyCurve(np.linspace(0, 1, 100), np.ones(100))])
    assert (label.stationarity, label.memory) == (Stationarity.INCONCLUSIVE, Memory.INCONCLUSIVE)


@pytest.mark.parametrize("scale", [0.9, 0.95, 1.05, 1.1])
def test_labels_survive_rescaling(scale):
    for params, ic in ((MARKOV, EQ), (MARKOV, QU)):
        curve = _curve(params, ic)
        scaled = RamseyCurve(curve.times, scale * curve.signal)
        a, b = classify([scaled]), classify([curve])
        assert (a.stationarity, a.memory) == (b.stationarity, b.memory)
        assert [e.value for e in a.evidence] == pytest.approx([e.value for e in b.evidence], rel=1e-9)


def test_label_serializes_with_evidence():
    label = classify([_curve(MARKOV, QU)])
    data = json.loads(json.dumps(label.to_dict()))
    assert data["stationarity"] == "NonStationary" and data["evidence"]
    assert "stationarity: NonStationary" in label.verdict()


def test_classify_needs_a_curve():
    with pytest.raises(ValueError, match="at least one"):
        classify([])


def test_noise_floor():
    t = np.linspace(0, 1, 2000)
    noisy = RamseyCurve(t, np.exp(-t) + 0.01 * np.random.default_rng(2).standard_normal(t.size))
    assert noise_floor(noisy) == pytest.approx(0.01, rel=0.1)
    assert noise_floor(RamseyCurve(t, np.ones_like(t), np.full(t.size, 0.03))) == 0.03


def test_curvature_and_offset_diagnostics():
    t = np.linspace(0, 2, 201)
    curve = RamseyCurve(t, np.exp(-0.5 * t - 0.2))
    slope, offset = long_time_offset(curve, 1.0)
    assert slope == pytest.approx(0.5) and offset == pytest.approx(0.2)
    parabola = RamseyCurve(t, t**2)
    [(_, d2)] = revival_curvature(parabola, [1.0])
    assert d2 == pytest.approx(2.0)
    with pytest.raises(ValueError):
        long_time_offset(curve, 5.0)
