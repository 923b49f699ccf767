"""Closed-form two-time correlation functions and spectral densities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import (
    InitialCondition,
    Kind,
    Mode,
    NoiseParams,
    ValidationError,
    effective_frequency,
    validate,
)


@dataclass(frozen=True)
class CorrelationSpec:
    params: NoiseParams
    ic: InitialCondition

    def __post_init__(self):
        validate(self.params, self.ic)


def corr(spec: CorrelationSpec, t1, t2):
    """<n(t1) n(t2)> in rad^2/us^2.  Broadcasts over array inputs."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t1 < 0) or np.any(t2 < 0):
        raise ValueError("t1, t2: times must be >= 0")
    p, ic = spec.params, spec.ic
    var = p.delta**2
    if p.kind is Kind.MARKOVIAN:
        if ic.mode is Mode.SWITCHED_TC:
            return _switched(var, ic, t1, t2)
        out = var * np.exp(-np.abs(t1 - t2) / p.t_c)
        q = ic.quench_weight(p.t_c)
        if q:
            out = out - q * var * np.exp(-(t1 + t2) / p.t_c)
        return out
    omega = effective_frequency(p)
    rate = 1.0 / p.t_c
    lag = np.abs(t1 - t2)
    out = var * (np.cos(omega * lag) + rate * np.sin(omega * lag) / omega) * np.exp(-rate * lag)
    if ic.mode is Mode.QUENCHED:
        total = t1 + t2
        transient = (
            (p.omega0 / omega) ** 2 * np.cos(omega * (t1 - t2))
            - (rate / omega) ** 2 * np.cos(omega * total)
            + rate / omega * np.sin(omega * total)
        )
        out = out - var * transient * np.exp(-rate * total)
    return out


def _switched(var, ic, t1, t2):
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    ts, ta, tb = ic.t_s, ic.t_a, ic.t_b
    before = np.minimum(hi, ts) - np.minimum(lo, ts)
    after = np.maximum(hi, ts) - np.maximum(lo, ts)
    return var * np.exp(-before / ta - after / tb)


def spectral_density(params: NoiseParams, omega):
    """Equilibrium spectral density, normalized so its integral over all omega is delta^2."""
    omega = np.asarray(omega, dtype=float)
    var, tc = params.delta**2, params.t_c
    if params.kind is Kind.MARKOVIAN:
        return var / math.pi * tc / (1.0 + (tc * omega) ** 2)
    w0 = params.omega0
    denom = (omega**2 - w0**2) ** 2 + 4.0 * omega**2 / tc**2
    return 2.0 * var * w0**2 / (math.pi * tc) / denom


def spectral_peak(params: NoiseParams) -> float:
    """Non-negative frequency at which the equilibrium spectral density peaks."""
    if params.kind is Kind.MARKOVIAN:
        return 0.0
    sq = params.omega0**2 - 2.0 / params.t_c**2
    return math.sqrt(sq) if sq > 0 else 0.0


def _omega_coth(omega, temperature):
    """omega * coth(omega / 2T), with the omega -> 0 limit 2T."""
    x = np.asarray(omega, dtype=float) / (2.0 * temperature)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    exact = 2.0 * temperature * safe / np.tanh(safe)
    series = 2.0 * temperature * (1.0 + x**2 / 3.0)
    return np.where(small, series, exact)


def qho_spectral_density(mass, t_c, omega0, temperature, omega):
    """Stationary position spectrum of an ohmically damped quantum oscillator."""
    if temperature <= 0:
        raise ValidationError(f"T: must be > 0, got {temperature}")
    omega = np.asarray(omega, dtype=float)
    denom = (omega**2 - omega0**2) ** 2 + 4.0 * omega**2 / t_c**2
    return 2.0 / (mass * t_c) * _omega_coth(omega, temperature) / denom


def qho_classical_ratio(mass, t_c, omega0, temperature, omega):
    """Quantum spectrum over its classical counterpart; tends to 1 when omega << T.

    The classical model uses the equipartition drive A = 2 Gamma T with
    Gamma = 2 m / t_c, and the quantum spectrum is compared with 2 pi times
    the classical density because the two use different Fourier conventions.
    """
    classical = NoiseParams.second_order(t_c, omega0, drive_norm=4.0 * temperature / (mass * t_c))
    return qho_spectral_density(mass, t_c, omega0, temperature, omega) / (
        2.0 * math.pi * spectral_density(classical, omega)
    )


@dataclass(frozen=True)
class SpinBathSpec:
    """Precessing, relaxing 2D bath magnetization driven by isotropic white noise.

    ``init_cov`` holds (<Ix0^2>, <Iy0^2>, <Ix0 Iy0>).
    """

    omega_rot: float
    t_c: float
    A: float
    init_cov: tuple[float, float, float]

    def __post_init__(self):
        if self.t_c <= 0:
            raise ValidationError(f"t_c: must be > 0, got {self.t_c}")
        if self.A < 0:
            raise ValidationError(f"A: must be >= 0, got {self.A}")
        xx, yy, xy = (float(v) for v in self.init_cov)
        object.__setattr__(self, "init_cov", (xx, yy, xy))
        tol = 1e-12 * max(abs(xx), abs(yy), 1.0)
        if xx < -tol or yy < -tol or xx * yy - xy * xy < -tol * max(abs(xx), abs(yy), 1.0):
            raise ValidationError("init_cov: must be positive semi-definite")

    @property
    def variance(self) -> float:
        """Stationary variance of each component, A t_c / 2."""
        return self.A * self.t_c / 2.0

    @classmethod
    def at_equilibrium(cls, omega_rot, t_c, A) -> SpinBathSpec:
        var = A * t_c / 2.0
        return cls(omega_rot, t_c, A, (var, var, 0.0))

    @classmethod
    def quenched(cls, omega_rot, t_c, A) -> SpinBathSpec:
        return cls(omega_rot, t_c, A, (0.0, 0.0, 0.0))


def corr_rotating_bath(spec: SpinBathSpec, t1, t2):
    """<Ix(t1) Ix(t2)> for the rotating bath, stationary part plus initial transient."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    w, rate, var = spec.omega_rot, 1.0 / spec.t_c, spec.variance
    xx, yy, xy = spec.init_cov
    stationary = var * np.exp(-rate * np.abs(t2 - t1)) * np.cos(w * (t2 - t1))
    total = t1 + t2
    transient = (
        ((xx + yy) / 2.0 - var) * np.cos(w * (t1 - t2))
        + (xx - yy) / 2.0 * np.cos(w * total)
        + xy * np.sin(w * total)
    )
    return stationary + np.exp(-rate * total) * transient


def asymmetric_bath_params(t_c, omega0, sigma_y, A) -> NoiseParams:
    """Second-order model equivalent to the asymmetric bath.

    The effective mass is 1 / (omega0 sigma_y), so A / m^2 = A (omega0 sigma_y)^2.
    """
    if sigma_y <= 0:
        raise ValidationError(f"sigma_y: must be > 0, got {sigma_y}")
    return NoiseParams.second_order(t_c, omega0, drive_norm=A * (omega0 * sigma_y) ** 2)
