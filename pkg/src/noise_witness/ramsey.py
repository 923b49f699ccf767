"""Attenuation factor chi(t) and the Ramsey signal S(t) = exp(-chi(t)).

chi(t) is the double integral of the noise correlation function over the
triangle 0 <= t2 <= t1 <= t.  Every branch is evaluated in a form that stays
accurate as t -> 0, where the textbook closed forms lose all digits to
cancellation: the Markovian branches through the phi-functions
phi_k(z) = (e^z - sum_{j<k} z^j / j!) / z^k, the underdamped branches through
a power series of the damped-oscillator response for max(omega0, 2/t_c) t <= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from math import factorial

import numpy as np

from .curves import Provenance, RamseyCurve
from .params import (
    InitialCondition,
    Kind,
    Mode,
    NoiseParams,
    TimeGrid,
    ValidationError,
    derive,
    effective_frequency,
    validate,
    Regime,
)

SERIES_TERMS = 40


class SeriesOrder(str, Enum):
    SHORT_TIME = "short"
    LONG_TIME = "long"


@dataclass(frozen=True)
class ChiSpec:
    params: NoiseParams
    ic: InitialCondition
    extra_t2star: float | None = None

    def __post_init__(self):
        validate(self.params, self.ic)
        if self.extra_t2star is not None and not self.extra_t2star > 0:
            raise ValidationError(f"extra_t2star: must be > 0, got {self.extra_t2star}")

    def to_dict(self) -> dict:
        out = {"params": self.params.to_dict(), "ic": self.ic.to_dict()}
        if self.extra_t2star is not None:
            out["extra_t2star"] = self.extra_t2star
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ChiSpec:
        unknown = set(data) - {"params", "ic", "extra_t2star"}
        if unknown:
            raise ValidationError(f"ChiSpec: unknown field(s) {', '.join(sorted(unknown))}")
        return cls(
            NoiseParams.from_dict(data["params"]),
            InitialCondition.from_dict(data.get("ic", {"mode": "equilibrium"})),
            data.get("extra_t2star"),
        )


def phi(k: int, z):
    """phi_k(z) = (e^z - sum_{j<k} z^j/j!) / z^k, accurate for all real z."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1.0
    series = np.zeros_like(z)
    for j in reversed(range(24)):
        series = series * z + 1.0 / factorial(j + k)
    zs = np.where(small, 1.0, z)
    head = sum(zs**j / factorial(j) for j in range(k))
    direct = (np.exp(zs) - head) / zs**k
    return np.where(small, series, direct)


def _ou_chi(var, tc, t):
    """chi of a stationary exponential correlation var*exp(-|tau|/tc)."""
    x = t / tc
    return var * t * t * phi(2, -x)


def _ou_quench_chi(var, tc, t):
    x = t / tc
    return var * tc * tc * x**3 * (4.0 * phi(3, -2.0 * x) - 2.0 * phi(3, -x))


def _markovian_chi(params, ic, t):
    var, tc = params.delta**2, params.t_c
    if ic.mode is Mode.SWITCHED_TC:
        ta, tb, ts = ic.t_a, ic.t_b, ic.t_s
        before = np.minimum(t, ts)
        after = np.maximum(t - ts, 0.0)
        cross = var * ta * tb * -math.expm1(-ts / ta) * -np.expm1(-after / tb)
        return _ou_chi(var, ta, before) + _ou_chi(var, tb, after) + cross
    q = ic.quench_weight(tc)
    out = _ou_chi(var, tc, t)
    if q:
        out = (1.0 - q) * out + q * _ou_quench_chi(var, tc, t)
    return out


def _response_coefficients(params, n_terms=SERIES_TERMS):
    """Taylor coefficients of g(u), the normalized equilibrium correlation.

    g solves g'' + (2/t_c) g' + omega0^2 g = 0 with g(0) = 1, g'(0) = 0.
    """
    rate, w2 = 2.0 / params.t_c, params.omega0**2
    c = np.zeros(n_terms)
    c[0] = 1.0
    for k in range(n_terms - 2):
        c[k + 2] = -(rate * (k + 1) * c[k + 1] + w2 * c[k]) / ((k + 2) * (k + 1))
    return c


def _poly(coeffs, t):
    out = np.zeros_like(t)
    for c in coeffs[::-1]:
        out = out * t + c
    return out


def _underdamped_series(params, quenched, t):
    c = _response_coefficients(params)
    var = params.delta**2
    k = np.arange(c.size)
    if not quenched:
        # chi = var * sum c_k t^(k+2) / ((k+1)(k+2))
        return var * t * t * _poly(c / ((k + 1) * (k + 2)), t)
    h = -c
    h[0] = 0.0
    h2 = np.convolve(h, h)[: c.size]
    # chi = (2 var / (t_c omega0^2)) * integral_0^t h(u)^2 du
    integral = t * _poly(h2 / (k + 1), t)
    return 2.0 * var / (params.t_c * params.omega0**2) * integral


def _underdamped_closed(params, quenched, t):
    var, w0 = params.delta**2, params.omega0
    a = 1.0 / params.t_c
    omega = effective_frequency(params)
    w2, w4 = w0 * w0, w0**4
    cos = np.cos(omega * t)
    sin_over = t * np.sinc(omega * t / math.pi)  # sin(omega t) / omega
    decay = np.exp(-a * t)
    if not quenched:
        return (
            2.0 * var * a * t / w2
            - var / w4 * ((omega**2 - 3 * a * a) * cos + (3 * omega**2 - a * a) * a * sin_over) * decay
            + var * (omega**2 - 3 * a * a) / w4
        )
    g = decay * (cos + a * sin_over)
    g_prime = -w2 * sin_over * decay
    int_g = (2.0 * a * (1.0 - g) - g_prime) / w2
    e2 = decay * decay
    one_minus_e2 = -np.expm1(-2.0 * a * t)
    cos2 = np.cos(2.0 * omega * t)
    sc = sin_over * cos
    int_g2 = (
        one_minus_e2 / (2.0 * a)
        + 2.0 * a * ((1.0 - e2 * cos2) - 2.0 * a * e2 * sc) / (4.0 * w2)
        + (a * a - omega**2) * (one_minus_e2 - 2.0 * a * a * e2 * sin_over**2 - 2.0 * a * e2 * sc) / (4.0 * a * w2)
    )
    return 2.0 * var * a / w2 * (t - 2.0 * int_g + int_g2)


def _underdamped_chi(params, ic, t):
    quenched = ic.mode is Mode.QUENCHED
    scale = max(params.omega0, 2.0 / params.t_c)
    near = t * scale <= 1.0
    out = np.empty_like(t)
    if np.any(near):
        out[near] = _underdamped_series(params, quenched, t[near])
    if np.any(~near):
        out[~near] = _underdamped_closed(params, quenched, t[~near])
    return out


def chi(spec: ChiSpec, t):
    """Attenuation factor chi(t) (dimensionless); broadcasts over t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t: must be >= 0")
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if spec.params.kind is Kind.MARKOVIAN:
        out = _markovian_chi(spec.params, spec.ic, t)
    else:
        out = _underdamped_chi(spec.params, spec.ic, t)
    if spec.extra_t2star is not None:
        out = out + t / spec.extra_t2star
    return out[0] if scalar else out


def series_coefficients(spec: ChiSpec) -> dict:
    """Short-time power-law terms and long-time slope/offset of chi.

    ``short`` maps a power of t to its coefficient, ``long`` holds the
    asymptote chi ~ slope * t + offset.  The independent-dephasing channel,
    if present, contributes its exact linear term to both.
    """
    p, ic = spec.params, spec.ic
    var, tc = p.delta**2, p.t_c
    if p.kind is Kind.MARKOVIAN:
        if ic.mode is Mode.SWITCHED_TC:
            raise ValidationError("mode: no tabulated expansion for a switched correlation time")
        q = ic.quench_weight(tc)
        short = {2: (1 - q) * var / 2, 3: -(1 - q) * var / (6 * tc) + q * var / (3 * tc)}
        long = {"slope": var * tc, "offset": -(1 + q / 2) * var * tc * tc}
    else:
        w0, a = p.omega0, 1.0 / tc
        omega = effective_frequency(p)
        slope = 2 * var * a / w0**2
        if ic.mode is Mode.QUENCHED:
            short = {5: var * w0**2 / (10 * tc)}
            long = {"slope": slope, "offset": var * (omega**2 - 11 * a * a) / (2 * w0**4)}
        else:
            short = {2: var / 2, 4: -var * w0**2 / 24, 5: var * w0**2 / (60 * tc)}
            long = {"slope": slope, "offset": var * (omega**2 - 3 * a * a) / w0**4}
    short = {k: v for k, v in short.items() if v != 0.0}
    if spec.extra_t2star is not None:
        short[1] = short.get(1, 0.0) + 1.0 / spec.extra_t2star
        long["slope"] += 1.0 / spec.extra_t2star
    return {"short": dict(sorted(short.items())), "long": long}


def chi_series(spec: ChiSpec, t, order: SeriesOrder):
    """Evaluate the short- or long-time expansion of chi."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t: must be >= 0")
    coeffs = series_coefficients(spec)
    if SeriesOrder(order) is SeriesOrder.SHORT_TIME:
        return sum(c * t**k for k, c in coeffs["short"].items())
    return coeffs["long"]["slope"] * t + coeffs["long"]["offset"]


def leading_power(spec: ChiSpec) -> int:
    """Lowest power of t in the short-time expansion, ignoring extra dephasing."""
    stripped = ChiSpec(spec.params, spec.ic)
    return min(series_coefficients(stripped)["short"])


def ramsey_signal(spec: ChiSpec, grid) -> RamseyCurve:
    """Analytic Ramsey curve on a TimeGrid or an array of times."""
    times = grid.times if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    return RamseyCurve(times, np.exp(-chi(spec, times)), None, Provenance.ANALYTIC)


def revival_peak_times(spec: ChiSpec, k_max: int) -> list[float]:
    """Times 2 pi k / Omega, k = 1..k_max, where equilibrium revivals peak."""
    p = spec.params
    if p.kind is not Kind.SECOND_ORDER or spec.ic.mode is not Mode.EQUILIBRIUM:
        raise ValidationError("revival peaks need an underdamped second-order model at equilibrium")
    if derive(p).regime is not Regime.UNDERDAMPED:
        raise ValidationError("omega0: model is not underdamped")
    omega = effective_frequency(p)
    return [2.0 * math.pi * k / omega for k in range(1, int(k_max) + 1)]
