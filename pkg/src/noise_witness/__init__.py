"""Stationarity and memory witnesses for qubit dephasing noise.

Analytic attenuation factors, seeded noise generators, Monte Carlo Ramsey
curves, joint fits with identifiability diagnostics and a witness-based
classifier.  Times are in microseconds, noise amplitudes in rad/us.
"""

__version__ = "0.1.0"

from .classifier import RegimeLabel, classify, detect_revivals, short_time_exponent
from .correlation import CorrelationSpec, SpinBathSpec, corr, corr_rotating_bath
from .curves import RamseyCurve, read_curve_csv
from .fitting import Dataset, FitProblem, fit, identifiability_report
from .montecarlo import chi_quadrature_oracle, ensemble_stats, simulate_ramsey
from .params import DEFAULT_COUPLING, InitialCondition, Kind, Mode, NoiseParams, TimeGrid, ValidationError
from .ramsey import ChiSpec, chi, chi_series, ramsey_signal, series_coefficients
from .trajectories import AsymmetricBathSpec, GenSpec, generate, generate_block

__all__ = [
    "AsymmetricBathSpec",
    "ChiSpec",
    "CorrelationSpec",
    "DEFAULT_COUPLING",
    "Dataset",
    "FitProblem",
    "GenSpec",
    "InitialCondition",
    "Kind",
    "Mode",
    "NoiseParams",
    "RamseyCurve",
    "RegimeLabel",
    "SpinBathSpec",
    "TimeGrid",
    "ValidationError",
    "chi",
    "chi_quadrature_oracle",
    "chi_series",
    "classify",
    "corr",
    "corr_rotating_bath",
    "detect_revivals",
    "ensemble_stats",
    "fit",
    "generate",
    "generate_block",
    "identifiability_report",
    "ramsey_signal",
    "read_curve_csv",
    "series_coefficients",
    "short_time_exponent",
    "simulate_ramsey",
]
