"""Step-function order-book shapes and their exact integral transforms.

A shape table holds the density of available volume at integer price
offsets from the best quote: a right-continuous step function ``f`` with
unit-width cells on a contiguous integer grid, extended by a constant
``tail_value`` beyond the measured support on both sides. The constant
tails keep the cumulative volume ``F`` unbounded in both directions, which
the strategy equations require, without inventing structure the data does
not show.

All integrals are evaluated in piecewise closed form (never by
quadrature):

    F(x)  = integral of f from 0 to x          (volume at price offset x)
    Ft(x) = integral of s*f(s) from 0 to x     (impact cost kernel)
    G(y)  = Ft(F^-1(y))                        (cost as a function of volume)

``F`` is strictly increasing, so ``F^-1`` is well defined everywhere; the
round trip ``F(F^-1(y)) == y`` holds to machine precision.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

_CSV_MAGIC = "# shape_table_v1"


@dataclass(frozen=True)
class ShapeTable:
    """Right-continuous step shape on a contiguous integer offset grid.

    ``values[i]`` is the density on the cell ``[offsets[i], offsets[i]+1)``;
    outside ``[offsets[0], offsets[-1]+1)`` the density is ``tail_value``.
    """

    offsets: np.ndarray
    values: np.ndarray
    tail_value: float

    # breakpoints and cumulative integrals, anchored so F(0) = Ft(0) = 0
    _bp: np.ndarray = field(init=False, repr=False, compare=False)
    _cumF: np.ndarray = field(init=False, repr=False, compare=False)
    _cumFt: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        offsets = np.asarray(self.offsets, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if offsets.ndim != 1 or values.shape != offsets.shape or offsets.size == 0:
            raise ConfigError("offsets and values must be matching non-empty 1-d arrays")
        if np.any(np.diff(offsets) != 1):
            raise ConfigError("offset grid must be contiguous integers")
        if not np.all(values > 0.0) or not np.isfinite(values).all():
            raise ConfigError("shape values must be strictly positive and finite")
        if not (self.tail_value > 0.0 and np.isfinite(self.tail_value)):
            raise ConfigError("tail_value must be strictly positive and finite")

        bp = np.arange(offsets[0], offsets[-1] + 2, dtype=np.float64)
        cumF = np.concatenate(([0.0], np.cumsum(values)))
        cumFt = np.concatenate(([0.0], np.cumsum(values * (bp[1:] ** 2 - bp[:-1] ** 2) / 2.0)))
        # re-anchor so that integrals start at 0, i.e. F(0) = 0
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_bp", bp)
        object.__setattr__(self, "_cumF", cumF - self._eval_cum(bp, cumF, values, 0.0, order=1))
        object.__setattr__(self, "_cumFt", cumFt - self._eval_cum(bp, cumFt, values, 0.0, order=2))

    # -- construction helpers ------------------------------------------------

    @classmethod
    def block(cls, value: float = 1.0) -> "ShapeTable":
        """Constant shape f == value on all of R (the block-shaped book)."""
        return cls(np.array([0]), np.array([float(value)]), float(value))

    @classmethod
    def from_values(cls, start_offset: int, values, tail_value: float | None = None) -> "ShapeTable":
        values = np.asarray(values, dtype=np.float64)
        offsets = np.arange(start_offset, start_offset + values.size, dtype=np.int64)
        if tail_value is None:
            tail_value = float(values[-1])
        return cls(offsets, values, float(tail_value))

    # -- evaluation ----------------------------------------------------------

    def _eval_cum(self, bp, cum, values, x, order: int):
        """Piecewise closed-form integral from bp[0] to x (order 1: f, 2: s*f)."""
        x = np.asarray(x, dtype=np.float64)
        lo, hi = bp[0], bp[-1]
        tail = self.tail_value

        idx = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, len(values) - 1)
        left = bp[idx]
        dens = values[idx]
        if order == 1:
            inner = cum[idx] + dens * (x - left)
            below = cum[0] + tail * (x - lo)
            above = cum[-1] + tail * (x - hi)
        else:
            inner = cum[idx] + dens * (x * x - left * left) / 2.0
            below = cum[0] + tail * (x * x - lo * lo) / 2.0
            above = cum[-1] + tail * (x * x - hi * hi) / 2.0
        out = np.where(x < lo, below, np.where(x >= hi, above, inner))
        return out if out.ndim else float(out)

    def f(self, x):
        """Density at offset x (right-continuous step lookup)."""
        x = np.asarray(x, dtype=np.float64)
        idx = np.clip(np.searchsorted(self._bp, x, side="right") - 1, 0, len(self.values) - 1)
        out = np.where((x < self._bp[0]) | (x >= self._bp[-1]), self.tail_value, self.values[idx])
        return out if out.ndim else float(out)

    def F(self, x):
        """Cumulative volume: integral of f from 0 to x."""
        return self._eval_cum(self._bp, self._cumF, self.values, x, order=1)

    def F_inverse(self, y):
        """Price offset holding volume y: the unique x with F(x) = y."""
        y = np.asarray(y, dtype=np.float64)
        cum = self._cumF
        idx = np.clip(np.searchsorted(cum, y, side="right") - 1, 0, len(self.values) - 1)
        inner = self._bp[idx] + (y - cum[idx]) / self.values[idx]
        below = self._bp[0] + (y - cum[0]) / self.tail_value
        above = self._bp[-1] + (y - cum[-1]) / self.tail_value
        out = np.where(y < cum[0], below, np.where(y >= cum[-1], above, inner))
        return out if out.ndim else float(out)

    def F_tilde(self, x):
        """First-moment integral of f from 0 to x."""
        return self._eval_cum(self._bp, self._cumFt, self.values, x, order=2)

    def G(self, y):
        """Impact cost of consuming volume y from a fresh book: Ft(F^-1(y))."""
        return self.F_tilde(self.F_inverse(y))

    # -- serialization -------------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{_CSV_MAGIC} tail_value={self.tail_value!r}\n")
            fh.write("offset,f_value\n")
            for o, v in zip(self.offsets, self.values):
                fh.write(f"{o},{float(v)!r}\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ShapeTable":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.splitlines()
        if not lines or not lines[0].startswith(_CSV_MAGIC):
            raise ConfigError(f"{path}: not a shape table file")
        try:
            tail = float(lines[0].split("tail_value=", 1)[1])
            body = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"{path}: malformed shape table: {exc}") from exc
        return cls(body[:, 0].astype(np.int64), body[:, 1], tail)
