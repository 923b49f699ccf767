import json
import math

import numpy as np
import pytest

from noise_witness.curves import RamseyCurve
from noise_witness.fitting import (
    Dataset,
    FitProblem,
    UnidentifiableError,
    _plateaued,
    fit,
    identifiability_report,
    model_signal,
    render_report,
)
from noise_witness.params import InitialCondition, NoiseParams, ValidationError
from noise_witness.ramsey import ChiSpec

EQ, QU = InitialCondition.equilibrium(), InitialCondition.quenched()
TRUTH = NoiseParams.markovian(2.0, delta=1.5)
TIMES = np.linspace(0.0, 3.0, 61)


def _dataset(ic, params=TRUTH, noise=0.0, seed=0, template_params=None):
    signal = model_signal(ChiSpec(params, ic), {}, TIMES)
    stderr = None
    if noise:
        signal = signal + noise * np.random.default_rng(seed).standard_normal(TIMES.size)
        stderr = np.full(TIMES.size, noise)
    guess = template_params or NoiseParams.markovian(1.0, delta=1.0)
    return Dataset(RamseyCurve(TIMES, signal, stderr), ChiSpec(guess, ic))


def test_single_parameter_fit_recovers_truth_with_zero_dependency():
    problem = FitProblem([_dataset(EQ, template_params=NoiseParams.markovian(2.0, delta=1.0))], free=["delta"])
    result = fit(problem)
    assert result.estimates["delta"] == pytest.approx(1.5, rel=1e-6)
    assert result.dependency == {"delta": 0.0}


def test_joint_fit_recovers_shared_parameters():
    data = [_dataset(ic, noise=0.002, seed=i) for i, ic in enumerate((EQ, QU))]
    result = fit(FitProblem(data, free=["delta", "t_c"], shared={"delta", "t_c"}))
    for name, truth in (("delta", 1.5), ("t_c", 2.0)):
        assert abs(result.estimates[name] - truth) < 5 * result.stderr[name]
    assert result.absolute_sigma
    assert 0 < result.dependency["t_c"] < 0.99


def test_unshared_parameters_get_one_slot_per_dataset():
    data = [_dataset(EQ), _dataset(QU)]
    problem = FitProblem(data, free=["delta", "t_c"], shared={"t_c"})
    assert [key for key, _, _ in problem.slots()] == ["delta@0", "delta@1", "t_c"]


def test_degenerate_parameters_are_unidentifiable():
    # in the white-noise limit only the product delta^2 t_c is visible
    long_tc = NoiseParams.markovian(1e-4, delta=100.0)
    times = np.linspace(0, 3, 40)
    curve = RamseyCurve(times, model_signal(ChiSpec(long_tc, EQ), {}, times))
    problem = FitProblem(
        [Dataset(curve, ChiSpec(long_tc, EQ))],
        free=["delta", "t_c"],
        bounds={"t_c": (1e-6, 1e-3), "delta": (1.0, 1e4)},
    )
    result = fit(problem)
    rows = {r.name: r for r in identifiability_report(problem, result)}
    assert rows["t_c"].dependency > 0.99
    assert not rows["t_c"].identified and not rows["delta"].identified


def test_parameter_without_effect_is_singular():
    # a T2* far beyond the record leaves no trace in the curve
    data = _dataset(EQ)
    problem = FitProblem([data], free=["delta", "extra_t2star"], bounds={"extra_t2star": (1e12, 1e13)})
    with pytest.raises(UnidentifiableError, match="singular") as info:
        fit(problem)
    assert set(info.value.best) == {"delta", "extra_t2star"}


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(free=["nope"]), "unknown parameter"),
        (dict(free=["delta", "delta"]), "duplicate"),
        (dict(free=["delta", "drive_norm"]), "mutually derived"),
        (dict(free=["delta"], shared={"t_c"}), "not among the free"),
        (dict(free=["t_d"]), "does not enter"),
    ],
)
def test_problem_validation(kwargs, match):
    with pytest.raises(ValidationError, match=match):
        FitProblem([_dataset(EQ)], **kwargs)


def test_too_few_points():
    short = Dataset(RamseyCurve(TIMES[:8], np.ones(8)), ChiSpec(TRUTH, EQ))
    with pytest.raises(ValidationError, match="need >= 10 points"):
        fit(FitProblem([short], free=["delta", "t_c"]))


def test_bad_bounds():
    with pytest.raises(ValidationError, match="finite lo < hi"):
        fit(FitProblem([_dataset(EQ)], free=["delta"], bounds={"delta": (2.0, 1.0)}))


def test_report_and_serialization():
    problem = FitProblem([_dataset(EQ, noise=0.002)], free=["delta", "t_c"])
    result = fit(problem)
    rows = identifiability_report(problem, result)
    text = render_report(rows, {"delta": 1.5, "t_c": 2.0})
    assert text.splitlines()[0].startswith("parameter")
    assert len(text.splitlines()) == 4
    json.dumps(result.to_dict())
    json.dumps(problem.to_dict())


def test_fit_is_deterministic_for_a_seed():
    problem = FitProblem([_dataset(QU, noise=0.003)], free=["delta", "t_c"])
    assert fit(problem, seed=4).estimates == fit(problem, seed=4).estimates


def test_plateau_detection():
    assert not _plateaued([5.0, 4.0])
    assert _plateaued([10.0] + [1.0] * 25)
    assert not _plateaued(list(np.geomspace(10, 1, 30)))


def test_amplitude_scale_and_delay_fit():
    ic = InitialCondition.delayed(0.4)
    truth = model_signal(ChiSpec(TRUTH, ic), {"amplitude_scale": 0.9}, TIMES)
    data = Dataset(RamseyCurve(TIMES, truth), ChiSpec(TRUTH, InitialCondition.delayed(0.1)))
    result = fit(FitProblem([data], free=["t_d", "amplitude_scale"]))
    assert result.estimates["t_d"] == pytest.approx(0.4, rel=1e-4)
    assert result.estimates["amplitude_scale"] == pytest.approx(0.9, rel=1e-6)
    assert math.isfinite(result.reduced_chi2)


@pytest.mark.parametrize("t_c", [1.25, 2.5, 5.0, 10.0])
def test_noiseless_quenched_curves_recover_t_c(t_c):
    truth = NoiseParams.markovian(t_c, delta=1.5)
    data = _dataset(QU, params=truth, template_params=NoiseParams.markovian(1.0, delta=1.5))
    assert fit(FitProblem([data], free=["t_c"])).estimates["t_c"] == pytest.approx(t_c, rel=1e-4)


def test_scaling_all_errors_only_scales_the_covariance():
    data = _dataset(QU, noise=0.003, seed=7)
    curve = data.curve
    scaled = Dataset(RamseyCurve(curve.times, curve.signal, 3 * curve.stderr), data.template)
    a = fit(FitProblem([data], free=["delta", "t_c"]))
    b = fit(FitProblem([scaled], free=["delta", "t_c"]))
    for name in ("delta", "t_c"):
        assert b.estimates[name] == pytest.approx(a.estimates[name], rel=1e-6)
        assert b.stderr[name] == pytest.approx(3 * a.stderr[name], rel=1e-4)


def test_objective_trace_is_nonincreasing():
    result = fit(FitProblem([_dataset(QU, noise=0.003)], free=["delta", "t_c"]))
    trace = result.convergence["trace"]
    assert len(trace) > 1 and all(b <= a for a, b in zip(trace, trace[1:]))


@pytest.mark.parametrize("seed", range(3))
def test_joint_fit_carries_more_information_than_equilibrium_alone(seed):
    truth = NoiseParams.markovian(10.0, delta=5.0)
    data = [_dataset(ic, params=truth, noise=0.01, seed=seed + 10 * i) for i, ic in enumerate((EQ, QU))]
    free = ("drive_norm", "t_c")
    solo = fit(FitProblem(data[:1], free)).dependency["t_c"]
    joint = fit(FitProblem(data, free, shared=free)).dependency["t_c"]
    assert joint < solo
