"""Parameter types, unit conventions and regime checks.

Units throughout the package: time in microseconds, the noise amplitude
n(t) and its standard deviation in rad/us, normalized driving strength in
rad^2/us^3 and all frequencies as angular frequencies in rad/us.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

CRITICAL_RTOL = 1e-9

# rad/us per volt: a 0.45 V offset produced a 3.6 MHz (cyclic) precession
DEFAULT_COUPLING = 2.0 * math.pi * 3.6 / 0.45


class ValidationError(ValueError):
    """Raised when parameters or their combination are not supported."""


class Kind(str, Enum):
    MARKOVIAN = "markovian"
    SECOND_ORDER = "second-order"


class Regime(str, Enum):
    UNDERDAMPED = "underdamped"
    CRITICAL = "critical"
    OVERDAMPED = "overdamped"


class Mode(str, Enum):
    EQUILIBRIUM = "equilibrium"
    QUENCHED = "quenched"
    DELAYED_QUENCH = "delayed-quench"
    SWITCHED_TC = "switched-tc"


def _parse_enum(cls, value, name):
    try:
        return cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ValidationError(f"{name}: expected one of {choices}, got {value!r}") from None


def _finite(name, value):
    if value is None:
        return None
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name}: must be finite, got {value}")
    return value


@dataclass(frozen=True)
class NoiseParams:
    """Physical parameters of one noise model.

    Exactly one of ``delta`` and ``drive_norm`` is given; the other is derived
    from the equilibrium-variance relation of the chosen kind.  The supplied
    one is remembered as the anchor, so :meth:`with_values` keeps it fixed
    when ``t_c`` or ``omega0`` change.
    """

    kind: Kind
    t_c: float
    delta: float | None = None
    drive_norm: float | None = None
    omega0: float | None = None
    anchor: str = field(default="", compare=False)

    def __post_init__(self):
        kind = _parse_enum(Kind, self.kind, "kind")
        object.__setattr__(self, "kind", kind)
        t_c = _finite("t_c", self.t_c)
        if t_c is None or t_c <= 0:
            raise ValidationError(f"t_c: must be > 0, got {self.t_c}")
        object.__setattr__(self, "t_c", t_c)
        omega0 = _finite("omega0", self.omega0)
        if kind is Kind.SECOND_ORDER:
            if omega0 is None:
                raise ValidationError("omega0: required for a second-order model")
            if omega0 <= 0:
                raise ValidationError(
                    f"omega0: must be > 0 for a second-order model (no confining force), got {omega0}"
                )
        elif omega0 is not None:
            raise ValidationError("omega0: only meaningful for a second-order model")
        object.__setattr__(self, "omega0", omega0)

        delta = _finite("delta", self.delta)
        drive = _finite("drive_norm", self.drive_norm)
        anchor = self.anchor
        if not anchor:
            if (delta is None) == (drive is None):
                raise ValidationError("exactly one of delta and drive_norm must be supplied")
            anchor = "delta" if delta is not None else "drive_norm"
        if anchor not in ("delta", "drive_norm"):
            raise ValidationError(f"anchor: expected 'delta' or 'drive_norm', got {anchor!r}")
        object.__setattr__(self, "anchor", anchor)
        scale = self._variance_per_drive()
        if anchor == "delta":
            if delta is None or delta < 0:
                raise ValidationError(f"delta: must be >= 0, got {delta}")
            drive = delta * delta / scale
        else:
            if drive is None or drive < 0:
                raise ValidationError(f"drive_norm: must be >= 0, got {drive}")
            delta = math.sqrt(drive * scale)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "drive_norm", drive)

    def _variance_per_drive(self) -> float:
        if self.kind is Kind.MARKOVIAN:
            return self.t_c / 2.0
        return self.t_c / (4.0 * self.omega0**2)

    @property
    def variance(self) -> float:
        return self.delta**2

    def with_values(self, **changes) -> NoiseParams:
        """Copy with some fields changed, re-deriving the non-anchor quantity.

        Setting ``delta`` or ``drive_norm`` explicitly makes it the new anchor.
        """
        anchor = self.anchor
        if "delta" in changes and "drive_norm" in changes:
            raise ValidationError("exactly one of delta and drive_norm must be supplied")
        if "delta" in changes:
            anchor = "delta"
        elif "drive_norm" in changes:
            anchor = "drive_norm"
        base = {
            "kind": self.kind,
            "t_c": self.t_c,
            "omega0": self.omega0,
            anchor: getattr(self, anchor),
        }
        base.update(changes)
        base.pop("drive_norm" if anchor == "delta" else "delta", None)
        return NoiseParams(**base)

    @classmethod
    def markovian(cls, t_c, *, delta=None, drive_norm=None) -> NoiseParams:
        return cls(Kind.MARKOVIAN, t_c, delta=delta, drive_norm=drive_norm)

    @classmethod
    def second_order(cls, t_c, omega0, *, delta=None, drive_norm=None) -> NoiseParams:
        return cls(Kind.SECOND_ORDER, t_c, delta=delta, drive_norm=drive_norm, omega0=omega0)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "t_c": self.t_c}
        if self.omega0 is not None:
            out["omega0"] = self.omega0
        out[self.anchor] = getattr(self, self.anchor)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> NoiseParams:
        _reject_unknown(data, {"kind", "delta", "t_c", "omega0", "drive_norm"}, "NoiseParams")
        if "kind" not in data or "t_c" not in data:
            raise ValidationError("NoiseParams: fields 'kind' and 't_c' are required")
        return cls(
            data["kind"],
            data["t_c"],
            delta=data.get("delta"),
            drive_norm=data.get("drive_norm"),
            omega0=data.get("omega0"),
        )


@dataclass(frozen=True)
class DampingRegime:
    regime: Regime
    Omega: float = 0.0
    alpha: float = 0.0


def derive(params: NoiseParams) -> DampingRegime:
    """Classify a second-order model and compute its effective frequency."""
    if params.kind is not Kind.SECOND_ORDER:
        raise ValidationError("not a second-order model")
    w0, inv_tc = params.omega0, 1.0 / params.t_c
    product = w0 * params.t_c
    if abs(product - 1.0) < CRITICAL_RTOL:
        return DampingRegime(Regime.CRITICAL)
    # difference of squares factored to keep precision near the boundary
    gap = (w0 - inv_tc) * (w0 + inv_tc)
    if product > 1.0:
        return DampingRegime(Regime.UNDERDAMPED, Omega=math.sqrt(gap))
    return DampingRegime(Regime.OVERDAMPED, alpha=math.sqrt(-gap))


@dataclass(frozen=True)
class InitialCondition:
    """How the noise process is prepared relative to the start of sensing."""

    mode: Mode = Mode.EQUILIBRIUM
    t_d: float | None = None
    t_a: float | None = None
    t_b: float | None = None
    t_s: float | None = None

    def __post_init__(self):
        mode = _parse_enum(Mode, self.mode, "mode")
        object.__setattr__(self, "mode", mode)
        for name in ("t_d", "t_a", "t_b", "t_s"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if mode is Mode.DELAYED_QUENCH:
            if self.t_d is None or self.t_d < 0:
                raise ValidationError(f"t_d: must be >= 0 for a delayed quench, got {self.t_d}")
        elif self.t_d is not None:
            raise ValidationError("t_d: only meaningful for a delayed quench")
        if mode is Mode.SWITCHED_TC:
            for name in ("t_a", "t_b"):
                value = getattr(self, name)
                if value is None or value <= 0:
                    raise ValidationError(f"{name}: must be > 0 for a switched correlation time, got {value}")
            if self.t_s is None or self.t_s < 0:
                raise ValidationError(f"t_s: must be >= 0 for a switched correlation time, got {self.t_s}")
        elif any(getattr(self, n) is not None for n in ("t_a", "t_b", "t_s")):
            raise ValidationError("t_a, t_b, t_s: only meaningful for a switched correlation time")

    @classmethod
    def equilibrium(cls) -> InitialCondition:
        return cls(Mode.EQUILIBRIUM)

    @classmethod
    def quenched(cls) -> InitialCondition:
        return cls(Mode.QUENCHED)

    @classmethod
    def delayed(cls, t_d) -> InitialCondition:
        return cls(Mode.DELAYED_QUENCH, t_d=t_d)

    @classmethod
    def switched(cls, t_a, t_b, t_s) -> InitialCondition:
        return cls(Mode.SWITCHED_TC, t_a=t_a, t_b=t_b, t_s=t_s)

    def quench_weight(self, t_c: float) -> float:
        """Weight Q = exp(-2 t_d / t_c) of the quench transient (1 quenched, 0 equilibrium)."""
        if self.mode is Mode.QUENCHED:
            return 1.0
        if self.mode is Mode.DELAYED_QUENCH:
            return math.exp(-2.0 * self.t_d / t_c)
        return 0.0

    def with_values(self, **changes) -> InitialCondition:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {"mode": self.mode.value}
        for name in ("t_d", "t_a", "t_b", "t_s"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> InitialCondition:
        _reject_unknown(data, {"mode", "t_d", "t_a", "t_b", "t_s"}, "InitialCondition")
        return cls(**data)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * dt for k = 0 .. n_points - 1."""

    dt: float
    n_points: int

    def __post_init__(self):
        dt = _finite("dt", self.dt)
        if dt is None or dt <= 0:
            raise ValidationError(f"dt: must be > 0, got {self.dt}")
        if int(self.n_points) != self.n_points or self.n_points < 1:
            raise ValidationError(f"n_points: must be a positive integer, got {self.n_points}")
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "n_points", int(self.n_points))

    @classmethod
    def spanning(cls, t_max: float, dt: float) -> TimeGrid:
        """Smallest grid with spacing dt whose last point reaches t_max."""
        return cls(dt, int(math.ceil(t_max / dt - 1e-9)) + 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dt

    @property
    def t_max(self) -> float:
        return (self.n_points - 1) * self.dt

    def index_of(self, t: float) -> int:
        """Nearest grid index to time t."""
        return int(round(t / self.dt))

    def to_dict(self) -> dict:
        return {"dt": self.dt, "n_points": self.n_points}

    @classmethod
    def from_dict(cls, data: dict) -> TimeGrid:
        _reject_unknown(data, {"dt", "n_points"}, "TimeGrid")
        return cls(**data)


def _reject_unknown(data, allowed, what):
    if not isinstance(data, dict):
        raise ValidationError(f"{what}: expected a JSON object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ValidationError(f"{what}: unknown field(s) {', '.join(unknown)}")


def validate(params: NoiseParams, ic: InitialCondition) -> None:
    """Check that a (params, initial condition) pair has an analytic branch.

    Raises :class:`ValidationError` naming the offending field otherwise.
    """
    if params.kind is Kind.MARKOVIAN:
        return
    if ic.mode in (Mode.SWITCHED_TC, Mode.DELAYED_QUENCH):
        raise ValidationError(f"mode: unsupported combination {params.kind.value} + {ic.mode.value}")
    regime = derive(params).regime
    if regime is not Regime.UNDERDAMPED:
        raise ValidationError(f"omega0: closed form out of scope for a {regime.value} model")


def effective_frequency(params: NoiseParams) -> float:
    """Omega of an underdamped second-order model; raises otherwise."""
    regime = derive(params)
    if regime.regime is not Regime.UNDERDAMPED:
        raise ValidationError(f"omega0: model is {regime.regime.value}, not underdamped")
    return regime.Omega
