"""Witnesses read directly off a Ramsey curve.

Two witnesses feed the classification.  The short-time exponent k of
chi ~ t^k separates stationary (k = 2) from freshly prepared noise (k >= 3),
and among the latter memoryless (k = 3) from inertial (k = 5) noise.
Collapse-and-revival peaks only appear for underdamped noise at equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import signal as sps

from .curves import RamseyCurve

CHI_WINDOW = (1e-3, 0.1)
MIN_WINDOW_POINTS = 6
MIN_REVIVAL_POINTS = 50
SMOOTHING_POINTS = 5
PROMINENCE_FACTOR = 3.0
SE_FACTOR = 2.0


class WindowTooSmall(ValueError):
    pass


class Stationarity(str, Enum):
    STATIONARY = "Stationary"
    NON_STATIONARY = "NonStationary"
    INCONCLUSIVE = "Inconclusive"


class Memory(str, Enum):
    MARKOVIAN = "Markovian"
    NON_MARKOVIAN = "NonMarkovian"
    INCONCLUSIVE = "Inconclusive"


class Preparation(str, Enum):
    AS_PREPARED = "as-prepared"
    QUENCHED = "quenched-prepared"


@dataclass(frozen=True)
class Evidence:
    witness: str
    value: float
    threshold: str

    def to_dict(self) -> dict:
        return {"witness": self.witness, "value": self.value, "threshold": self.threshold}


@dataclass(frozen=True)
class Exponent:
    value: float
    stderr: float
    n_points: int
    window: tuple[float, float]

    def consistent_with(self, k: float) -> bool:
        return abs(self.value - k) <= SE_FACTOR * self.stderr


@dataclass(frozen=True)
class RegimeLabel:
    stationarity: Stationarity
    memory: Memory
    evidence: list[Evidence] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stationarity": self.stationarity.value,
            "memory": self.memory.value,
            "evidence": [e.to_dict() for e in self.evidence],
        }

    def verdict(self) -> str:
        lines = [f"stationarity: {self.stationarity.value}", f"memory: {self.memory.value}"]
        lines += [f"  {e.witness} = {e.value:.4g} ({e.threshold})" for e in self.evidence]
        return "\n".join(lines)


def noise_floor(curve: RamseyCurve) -> float:
    """Typical per-point noise: median stderr, else a robust second-difference estimate."""
    if curve.stderr is not None:
        return float(np.median(curve.stderr))
    if len(curve) < 3:
        return 0.0
    # second differences of white noise have std sqrt(6) sigma; 1.4826 turns a MAD into a std
    return float(1.4826 * np.median(np.abs(np.diff(curve.signal, 2))) / math.sqrt(6))


def _regress(log_t, log_chi, weights):
    slope_coeffs, cov = np.polyfit(log_t, log_chi, 1, w=weights, cov="unscaled")
    resid = log_chi - np.polyval(slope_coeffs, log_t)
    dof = log_t.size - 2
    # analytic curves have no stated errors; their residuals carry the curvature instead
    scale = float(np.sum((weights * resid) ** 2) / dof) if dof > 0 else 0.0
    return float(slope_coeffs[0]), math.sqrt(max(cov[0, 0] * max(scale, 0.0), 0.0))


def _window_fit(curve, lo, hi):
    t, s = curve.times, curve.signal
    with np.errstate(divide="ignore", invalid="ignore"):
        chi_hat = -np.log(s)
    keep = (t > 0) & np.isfinite(chi_hat) & (chi_hat >= lo) & (chi_hat <= hi)
    # only the initial decay: stop at the first point past the window
    beyond = np.nonzero((t > 0) & ~(chi_hat <= hi))[0]
    if beyond.size:
        keep[beyond[0]:] = False
    n = int(keep.sum())
    if n < MIN_WINDOW_POINTS:
        raise WindowTooSmall(f"window too small: {n} points with chi in [{lo:.3g}, {hi:.3g}], need {MIN_WINDOW_POINTS}")
    if curve.stderr is not None:
        # d log chi = dS / (S chi)
        sigma = np.maximum(curve.stderr[keep], 1e-300) / (s[keep] * chi_hat[keep])
        weights = 1.0 / sigma
    else:
        weights = np.ones(n)
    slope, se = _regress(np.log(t[keep]), np.log(chi_hat[keep]), weights)
    return slope, se, n


def short_time_exponent(curve: RamseyCurve, window=CHI_WINDOW) -> Exponent:
    """Slope of log(-log S) against log t over the early-decay window.

    The stated error adds in quadrature the regression error and a
    systematic term for the next-order bend of the curve.  That term comes
    from the shift of the slope when the window's upper edge is halved,
    extrapolated to a zero-width window on the assumption that the
    correction is one power of t higher than the leading term.
    """
    lo = max(PROMINENCE_FACTOR * noise_floor(curve), window[0])
    hi = window[1]
    slope, se, n = _window_fit(curve, lo, hi)
    try:
        half, _, _ = _window_fit(curve, lo, max(hi / 2, lo * 1.0001))
        # a correction ~ t ~ chi^(1/k) shrinks by 2^(-1/k) per halving
        systematic = abs(half - slope) / (1.0 - 2.0 ** (-1.0 / max(slope, 1.0)))
    except WindowTooSmall:
        systematic = 0.0
    return Exponent(slope, math.hypot(se, systematic), n, (lo, hi))


def _smooth(values, width=SMOOTHING_POINTS):
    """Centered moving average; the ends use the shorter available window."""
    kernel = np.ones(width)
    total = np.convolve(values, kernel, mode="same")
    count = np.convolve(np.ones_like(values), kernel, mode="same")
    return total / count


def detect_revivals(curve: RamseyCurve) -> list[tuple[float, float]]:
    """(time, prominence) of revival peaks in the smoothed signal, sorted by time."""
    if len(curve) < MIN_REVIVAL_POINTS:
        raise ValueError(f"curve: need >= {MIN_REVIVAL_POINTS} points for revival detection, got {len(curve)}")
    smooth = _smooth(curve.signal)
    if curve.stderr is not None:
        scale = curve.stderr
    else:
        scale = np.full(len(curve), float(np.median(np.abs(np.diff(curve.signal)))))
    peaks, props = sps.find_peaks(smooth, prominence=0.0)
    found = [
        (float(curve.times[i]), float(p))
        for i, p in zip(peaks, props["prominences"])
        if p > PROMINENCE_FACTOR * scale[i] and p > 0
    ]
    return sorted(found)


def revival_curvature(curve: RamseyCurve, peak_times) -> list[tuple[float, float]]:
    """Second finite difference of S at each requested time (nearest grid point).

    Reported as a diagnostic of how close a quench is to the measurement
    start; it is not used by :func:`classify`.
    """
    t, s = curve.times, curve.signal
    out = []
    for tp in peak_times:
        i = int(np.argmin(np.abs(t - tp)))
        if 0 < i < t.size - 1:
            h1, h2 = t[i] - t[i - 1], t[i + 1] - t[i]
            d2 = 2.0 * (h1 * s[i + 1] - (h1 + h2) * s[i] + h2 * s[i - 1]) / (h1 * h2 * (h1 + h2))
            out.append((float(t[i]), float(d2)))
    return out


def long_time_offset(curve: RamseyCurve, t_min: float) -> tuple[float, float]:
    """Slope and intercept of a straight line through -log S for t >= t_min.

    Only meaningful on an absolutely calibrated curve, so it is reported,
    not used to classify.
    """
    t, s = curve.times, curve.signal
    keep = (t >= t_min) & (s > 0)
    if keep.sum() < 2:
        raise ValueError("t_min: fewer than two usable points beyond it")
    slope, offset = np.polyfit(t[keep], -np.log(s[keep]), 1)
    return float(slope), float(offset)


def classify(curves) -> RegimeLabel:
    """Label the noise from curves given as (RamseyCurve, Preparation) pairs.

    A bare RamseyCurve counts as as-prepared.  An as-prepared curve that turns
    out non-stationary also serves as the quenched-exponent witness.
    """
    items = [(c, Preparation.AS_PREPARED) if isinstance(c, RamseyCurve) else (c[0], Preparation(c[1])) for c in curves]
    if not items:
        raise ValueError("curves: need at least one curve")
    evidence = []
    stationarity = Stationarity.INCONCLUSIVE
    quench_exponents = []
    revivals = False

    for curve, prep in items:
        curve = curve.renormalized()
        try:
            k = short_time_exponent(curve)
        except WindowTooSmall:
            k = None
        if k is not None:
            if prep is Preparation.QUENCHED:
                quench_exponents.append(k)
                evidence.append(Evidence("quenched short-time exponent", k.value, f"3 (Markovian) or >= 4 (non-Markovian) within {SE_FACTOR:g} SE = {SE_FACTOR * k.stderr:.3g}"))
            elif stationarity is Stationarity.INCONCLUSIVE:
                above_two = k.value - SE_FACTOR * k.stderr > 2.0
                if above_two and k.value + SE_FACTOR * k.stderr >= 3.0:
                    stationarity = Stationarity.NON_STATIONARY
                    quench_exponents.append(k)
                elif k.consistent_with(2.0):
                    stationarity = Stationarity.STATIONARY
                evidence.append(Evidence("as-prepared short-time exponent", k.value, f"2 stationary, >= 3 non-stationary within {SE_FACTOR:g} SE = {SE_FACTOR * k.stderr:.3g}"))
        if len(curve) >= MIN_REVIVAL_POINTS:
            peaks = detect_revivals(curve)
            evidence.append(Evidence("revival peaks", float(len(peaks)), f"> 0 peaks with prominence > {PROMINENCE_FACTOR:g} x noise"))
            revivals = revivals or bool(peaks)

    memory = Memory.INCONCLUSIVE
    inertial = [k for k in quench_exponents if k.value + SE_FACTOR * k.stderr >= 4.0 and k.value - SE_FACTOR * k.stderr > 3.0]
    if revivals or inertial:
        memory = Memory.NON_MARKOVIAN
    elif any(k.consistent_with(3.0) for k in quench_exponents):
        memory = Memory.MARKOVIAN
    return RegimeLabel(stationarity, memory, evidence)
