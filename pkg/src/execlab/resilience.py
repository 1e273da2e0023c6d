"""Impact-dependent resilience curves.

The recovery speed of the book is a smooth, positive function of the
current impact. Calibration produces sampled knots (impact, speed); this
module interpolates them with a monotonicity-preserving piecewise cubic
(Fritsch-Carlson slopes) and extends the result by

  * even symmetry, ``rho(-x) = rho(x)`` (calibration only probes positive
    impacts; the simulator's buy/sell symmetry justifies the mirror), and
  * clamping to the terminal knot values beyond the knot range.

End slopes of the interpolant are set to zero so the clamped extension is
continuously differentiable; differentiability is what the strategy
equations consume through ``rho_prime``. The analytic derivative of the
cubic is used everywhere - never finite differences - so assumption checks
and solver evaluations see the same function.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

_CSV_MAGIC = "# resilience_curve_v1"


def _monotone_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson tangents with zero end slopes (monotone, C1-clampable)."""
    h = np.diff(x)
    d = np.diff(y) / h
    m = np.zeros_like(y)
    for i in range(1, len(y) - 1):
        if d[i - 1] * d[i] <= 0.0:
            m[i] = 0.0
        else:
            w1 = 2.0 * h[i] + h[i - 1]
            w2 = h[i] + 2.0 * h[i - 1]
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i])
    return m


@dataclass(frozen=True)
class ResilienceCurve:
    """Positive, continuously differentiable recovery-speed function."""

    knots: np.ndarray
    rho_values: np.ndarray
    _slopes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=np.float64)
        rho = np.asarray(self.rho_values, dtype=np.float64)
        if knots.ndim != 1 or rho.shape != knots.shape or knots.size == 0:
            raise ConfigError("knots and rho_values must be matching non-empty 1-d arrays")
        if knots.size > 1 and not np.all(np.diff(knots) > 0):
            raise ConfigError("knots must be strictly increasing")
        if not np.all(knots >= 0.0):
            raise ConfigError("knots must be non-negative (the curve is even-extended)")
        if not np.all(rho > 0.0) or not np.isfinite(rho).all():
            raise ConfigError("resilience values must be strictly positive and finite")
        slopes = np.zeros_like(rho) if knots.size == 1 else _monotone_slopes(knots, rho)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "rho_values", rho)
        object.__setattr__(self, "_slopes", slopes)

    @classmethod
    def constant(cls, rho: float) -> "ResilienceCurve":
        """Impact-independent recovery at speed rho (the classical case)."""
        return cls(np.array([0.0]), np.array([float(rho)]))

    @property
    def lower_bound(self) -> float:
        """k: smallest value the curve attains."""
        return float(self.rho_values.min())

    @property
    def upper_bound(self) -> float:
        """K: largest value the curve attains."""
        return float(self.rho_values.max())

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.rho_values == self.rho_values[0]))

    def _hermite(self, z: np.ndarray, deriv: bool) -> np.ndarray:
        x, y, m = self.knots, self.rho_values, self._slopes
        idx = np.clip(np.searchsorted(x, z, side="right") - 1, 0, len(x) - 2)
        h = x[idx + 1] - x[idx]
        t = (z - x[idx]) / h
        y0, y1, m0, m1 = y[idx], y[idx + 1], m[idx], m[idx + 1]
        if deriv:
            return (
                (6.0 * t * t - 6.0 * t) * (y0 - y1) / h
                + (3.0 * t * t - 4.0 * t + 1.0) * m0
                + (3.0 * t * t - 2.0 * t) * m1
            )
        return (
            (2.0 * t**3 - 3.0 * t * t + 1.0) * y0
            + (t**3 - 2.0 * t * t + t) * h * m0
            + (-2.0 * t**3 + 3.0 * t * t) * y1
            + (t**3 - t * t) * h * m1
        )

    def rho(self, x):
        """Recovery speed at impact x (even extension, clamped beyond knots)."""
        z = np.abs(np.asarray(x, dtype=np.float64))
        if self.knots.size == 1:
            out = np.full_like(z, self.rho_values[0])
        else:
            out = self._hermite(np.clip(z, self.knots[0], self.knots[-1]), deriv=False)
        return out if out.ndim else float(out)

    def rho_prime(self, x):
        """Analytic derivative of ``rho`` (zero in the clamped regions)."""
        x = np.asarray(x, dtype=np.float64)
        z = np.abs(x)
        if self.knots.size == 1:
            out = np.zeros_like(z)
        else:
            inside = (z > self.knots[0]) & (z < self.knots[-1])
            out = np.where(
                inside,
                self._hermite(np.clip(z, self.knots[0], self.knots[-1]), deriv=True)
                * np.sign(x),
                0.0,
            )
        return out if out.ndim else float(out)

    # -- serialization: CSV of knots plus a JSON sidecar with the tangents ----

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{_CSV_MAGIC}\n")
            fh.write("knot,rho\n")
            for k, r in zip(self.knots, self.rho_values):
                fh.write(f"{float(k)!r},{float(r)!r}\n")
        sidecar = {
            "format": "resilience_curve_v1",
            "interpolant": "monotone_cubic_hermite",
            "extension": "even_symmetric_clamped",
            "slopes": self._slopes.tolist(),
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ResilienceCurve":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith(_CSV_MAGIC):
            raise ConfigError(f"{path}: not a resilience curve file")
        try:
            rows = [tuple(map(float, ln.split(","))) for ln in lines[2:] if ln.strip()]
            knots = np.array([r[0] for r in rows])
            rho = np.array([r[1] for r in rows])
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}: malformed resilience curve: {exc}") from exc
        return cls(knots, rho)
