import math

import pytest
from hypothesis import given, strategies as st

from noise_witness.params import (
    DEFAULT_COUPLING,
    InitialCondition,
    Kind,
    Mode,
    NoiseParams,
    Regime,
    TimeGrid,
    ValidationError,
    derive,
    effective_frequency,
    validate,
)

positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


def test_coupling_maps_the_calibration_point():
    # 0.45 V of drive shows up as a 3.6 MHz oscillation
    assert DEFAULT_COUPLING * 0.45 == pytest.approx(2 * math.pi * 3.6)


@given(positive, positive)
def test_markovian_delta_and_drive_are_mutually_derived(t_c, delta):
    p = NoiseParams.markovian(t_c, delta=delta)
    q = NoiseParams.markovian(t_c, drive_norm=p.drive_norm)
    assert q.delta == pytest.approx(delta, rel=1e-12)
    assert p.delta**2 == pytest.approx(t_c * p.drive_norm / 2, rel=1e-12)


@given(positive, positive, positive)
def test_second_order_delta_and_drive_are_mutually_derived(t_c, omega0, drive):
    p = NoiseParams.second_order(t_c, omega0, drive_norm=drive)
    assert p.delta**2 == pytest.approx(t_c * drive / (4 * omega0**2), rel=1e-12)
    q = NoiseParams.second_order(t_c, omega0, delta=p.delta)
    assert q.drive_norm == pytest.approx(drive, rel=1e-12)


def test_lab_second_order_variance(underdamped_lab):
    assert underdamped_lab.delta**2 == pytest.approx(20.0 * 0.054 * DEFAULT_COUPLING**2 / 144.0)


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(kind="markovian", t_c=0.0, delta=1.0), "t_c"),
        (dict(kind="markovian", t_c=-1.0, delta=1.0), "t_c"),
        (dict(kind="markovian", t_c=1.0), "delta"),
        (dict(kind="markovian", t_c=1.0, delta=1.0, drive_norm=1.0), "delta"),
        (dict(kind="markovian", t_c=1.0, delta=-1.0), "delta"),
        (dict(kind="markovian", t_c=1.0, delta=1.0, omega0=2.0), "omega0"),
        (dict(kind="second-order", t_c=1.0, delta=1.0), "omega0"),
        (dict(kind="second-order", t_c=1.0, delta=1.0, omega0=0.0), "omega0"),
        (dict(kind="third-order", t_c=1.0, delta=1.0), "kind"),
        (dict(kind="markovian", t_c=float("nan"), delta=1.0), "t_c"),
    ],
)
def test_invalid_params_name_the_field(kwargs, field):
    with pytest.raises(ValidationError, match=field):
        NoiseParams(**kwargs)


def test_with_values_keeps_the_anchor():
    p = NoiseParams.markovian(2.0, delta=3.0)
    q = p.with_values(t_c=4.0)
    assert q.delta == 3.0 and q.drive_norm == pytest.approx(9.0 / 2.0)
    r = NoiseParams.markovian(2.0, drive_norm=5.0).with_values(t_c=4.0)
    assert r.drive_norm == 5.0 and r.delta == pytest.approx(math.sqrt(10.0))
    assert p.with_values(drive_norm=1.0).anchor == "drive_norm"


def test_params_round_trip_and_reject_unknown_fields():
    p = NoiseParams.second_order(20.0, 6.0, drive_norm=3.0)
    assert NoiseParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValidationError, match="unknown field"):
        NoiseParams.from_dict({**p.to_dict(), "mass": 1.0})


def test_regimes():
    d = derive(NoiseParams.second_order(20.0, 6.0, delta=1.0))
    assert d.regime is Regime.UNDERDAMPED
    assert d.Omega == pytest.approx(math.sqrt(36 - 0.0025))
    assert d.Omega == pytest.approx(5.99979, abs=1e-5)
    assert derive(NoiseParams.second_order(1.0, 1.0, delta=1.0)).regime is Regime.CRITICAL
    over = derive(NoiseParams.second_order(1.0, 0.5, delta=1.0))
    assert over.regime is Regime.OVERDAMPED and over.alpha == pytest.approx(math.sqrt(0.75))
    with pytest.raises(ValidationError, match="not a second-order model"):
        derive(NoiseParams.markovian(1.0, delta=1.0))


def test_critical_boundary_uses_relative_tolerance():
    assert derive(NoiseParams.second_order(1.0, 1.0 + 1e-10, delta=1.0)).regime is Regime.CRITICAL
    assert derive(NoiseParams.second_order(1.0, 1.0 + 1e-6, delta=1.0)).regime is Regime.UNDERDAMPED


def test_validate_rejects_out_of_scope_combinations():
    so = NoiseParams.second_order(20.0, 6.0, delta=1.0)
    with pytest.raises(ValidationError, match="unsupported combination"):
        validate(so, InitialCondition.switched(1.0, 2.0, 0.5))
    with pytest.raises(ValidationError, match="unsupported combination"):
        validate(so, InitialCondition.delayed(0.5))
    with pytest.raises(ValidationError, match="out of scope"):
        validate(NoiseParams.second_order(1.0, 0.5, delta=1.0), InitialCondition.equilibrium())
    validate(NoiseParams.markovian(0.015, delta=1.0), InitialCondition.switched(0.015, 0.15, 0.248))
    with pytest.raises(ValidationError, match="not underdamped"):
        effective_frequency(NoiseParams.second_order(1.0, 0.5, delta=1.0))


def test_quench_weight_limits():
    assert InitialCondition.delayed(0.0).quench_weight(2.0) == 1.0
    assert InitialCondition.delayed(1e6).quench_weight(2.0) == 0.0
    assert InitialCondition.delayed(1.0).quench_weight(2.0) == pytest.approx(math.exp(-1.0))
    assert InitialCondition.quenched().quench_weight(2.0) == 1.0
    assert InitialCondition.equilibrium().quench_weight(2.0) == 0.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(mode="delayed-quench"),
        dict(mode="delayed-quench", t_d=-1.0),
        dict(mode="switched-tc", t_a=1.0, t_b=0.0, t_s=1.0),
        dict(mode="switched-tc", t_a=1.0, t_b=1.0),
        dict(mode="equilibrium", t_d=1.0),
        dict(mode="quenched", t_s=1.0),
        dict(mode="sideways"),
    ],
)
def test_invalid_initial_conditions(kwargs):
    with pytest.raises(ValidationError):
        InitialCondition(**kwargs)


def test_initial_condition_round_trip():
    ic = InitialCondition.switched(0.015, 0.15, 0.248)
    assert InitialCondition.from_dict(ic.to_dict()) == ic
    assert ic.mode is Mode.SWITCHED_TC


def test_time_grid():
    g = TimeGrid.spanning(2.5, 0.004)
    assert g.n_points == 626 and g.t_max == pytest.approx(2.5)
    assert g.index_of(0.248) == 62
    assert TimeGrid.from_dict(g.to_dict()) == g
    with pytest.raises(ValidationError, match="dt"):
        TimeGrid(0.0, 5)
    with pytest.raises(ValidationError, match="n_points"):
        TimeGrid(0.1, 0)


def test_kind_parses_from_text():
    assert NoiseParams("second-order", 1.0, delta=1.0, omega0=3.0).kind is Kind.SECOND_ORDER
