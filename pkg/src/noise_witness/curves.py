"""Ramsey curve container and its CSV/JSON forms."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np


class Provenance(str, Enum):
    ANALYTIC = "analytic"
    MONTE_CARLO = "monte-carlo"
    EXTERNAL = "external"


class CurveFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RamseyCurve:
    times: np.ndarray
    signal: np.ndarray
    stderr: np.ndarray | None = None
    provenance: Provenance = Provenance.ANALYTIC

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        signal = np.asarray(self.signal, dtype=float)
        if times.ndim != 1 or times.shape != signal.shape:
            raise ValueError("times and signal must be 1-D arrays of equal length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "signal", signal)
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if self.stderr is not None:
            stderr = np.asarray(self.stderr, dtype=float)
            if stderr.shape != times.shape:
                raise ValueError("stderr must match the length of times")
            object.__setattr__(self, "stderr", stderr)
        elif self.provenance is Provenance.MONTE_CARLO:
            raise ValueError("a Monte Carlo curve needs per-point stderr")

    def __len__(self):
        return self.times.size

    def renormalized(self, scale: float | None = None) -> RamseyCurve:
        """Affine readout renormalization, dividing by ``scale`` (default: max signal)."""
        scale = float(np.max(self.signal)) if scale is None else float(scale)
        if not scale > 0:
            raise ValueError("renormalization scale must be > 0")
        stderr = None if self.stderr is None else self.stderr / scale
        return RamseyCurve(self.times, self.signal / scale, stderr, self.provenance)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if self.stderr is None:
            writer.writerow(["t_us", "signal"])
            rows = zip(self.times, self.signal)
        else:
            writer.writerow(["t_us", "signal", "stderr"])
            rows = zip(self.times, self.signal, self.stderr)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_dict(self) -> dict:
        out = {
            "provenance": self.provenance.value,
            "times": self.times.tolist(),
            "signal": self.signal.tolist(),
        }
        if self.stderr is not None:
            out["stderr"] = self.stderr.tolist()
        return out


def read_curve_csv(path, provenance=Provenance.EXTERNAL) -> RamseyCurve:
    """Read (t_us, signal[, stderr]) rows; a header row is optional.

    Malformed rows raise :class:`CurveFormatError` naming the line number.
    """
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    times, signal, stderr = [], [], []
    width = None
    for lineno, row in enumerate(rows, start=1):
        cells = [c.strip() for c in row]
        if not cells or all(not c for c in cells) or cells[0].startswith("#"):
            continue
        try:
            values = [float(c) for c in cells]
        except ValueError:
            if lineno == 1 or not times and cells[0].lower().startswith("t"):
                continue
            raise CurveFormatError(f"{path}:{lineno}: non-numeric value in row {row}") from None
        if len(values) not in (2, 3):
            raise CurveFormatError(f"{path}:{lineno}: expected 2 or 3 columns, got {len(values)}")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise CurveFormatError(f"{path}:{lineno}: expected {width} columns, got {len(values)}")
        if not all(math.isfinite(v) for v in values):
            raise CurveFormatError(f"{path}:{lineno}: non-finite value")
        if values[0] < 0:
            raise CurveFormatError(f"{path}:{lineno}: negative time")
        if width == 3 and values[2] < 0:
            raise CurveFormatError(f"{path}:{lineno}: stderr must be >= 0")
        if times and values[0] <= times[-1]:
            raise CurveFormatError(f"{path}:{lineno}: times must be strictly increasing")
        times.append(values[0])
        signal.append(values[1])
        if width == 3:
            stderr.append(values[2])
    if not times:
        raise CurveFormatError(f"{path}: no data rows")
    return RamseyCurve(np.array(times), np.array(signal), np.array(stderr) if stderr else None, provenance)
