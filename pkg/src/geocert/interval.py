"""Scalar interval arithmetic with outward rounding.

Only the handful of operations needed to enclose inverse spatial transforms
and their parameter derivatives are provided.
"""
from __future__ import annotations

import math

_INF = math.inf


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _sum_down(a: float, b: float) -> float:
    # adding zero is exact
    return a + b if a == 0.0 or b == 0.0 else _down(a + b)


def _sum_up(a: float, b: float) -> float:
    return a + b if a == 0.0 or b == 0.0 else _up(a + b)


def _prod(a: float, b: float, rnd) -> float:
    # products with a zero or unit factor are exact
    if a == 0.0 or b == 0.0:
        return 0.0
    if abs(a) == 1.0 or abs(b) == 1.0:
        return a * b
    return rnd(a * b)


class Interval:
    __slots__ = ("lo", "hi")
    # make numpy scalars defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, lo, hi=None):
        lo = float(lo)
        hi = lo if hi is None else float(hi)
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    @staticmethod
    def _coerce(other) -> "Interval":
        return other if isinstance(other, Interval) else Interval(other)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def mag(self) -> float:
        """Largest absolute value in the interval."""
        return max(abs(self.lo), abs(self.hi))

    def contains(self, x, tol=0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def hull(self, other) -> "Interval":
        other = self._coerce(other)
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def __add__(self, other):
        o = self._coerce(other)
        return Interval(_sum_down(self.lo, o.lo), _sum_up(self.hi, o.hi))

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        o = self._coerce(other)
        return Interval(_sum_down(self.lo, -o.hi), _sum_up(self.hi, -o.lo))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        pairs = [(a, b) for a in (self.lo, self.hi) for b in (o.lo, o.hi)]
        lo = min(_prod(a, b, _down) for a, b in pairs)
        hi = max(_prod(a, b, _up) for a, b in pairs)
        return Interval(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o.lo <= 0.0 <= o.hi:
            raise ZeroDivisionError("interval divisor contains zero")
        qs = (self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi)
        return Interval(_down(min(qs)), _up(max(qs)))

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def sqr(self) -> "Interval":
        if self.lo >= 0:
            return Interval(_down(self.lo * self.lo), _up(self.hi * self.hi))
        if self.hi <= 0:
            return Interval(_down(self.hi * self.hi), _up(self.lo * self.lo))
        return Interval(0.0, _up(max(self.lo * self.lo, self.hi * self.hi)))

    def cos(self) -> "Interval":
        return _trig_range(math.cos, self.lo, self.hi, 0.0)

    def sin(self) -> "Interval":
        # sin(x) = cos(x - pi/2); extrema of sin sit at pi/2 + k*pi
        return _trig_range(math.sin, self.lo, self.hi, 0.5 * math.pi)

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __eq__(self, other):
        return isinstance(other, Interval) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))


def _trig_range(fn, lo: float, hi: float, phase: float) -> Interval:
    if hi - lo >= 2 * math.pi:
        return Interval(-1.0, 1.0)
    a, b = fn(lo), fn(hi)
    vmin, vmax = min(a, b), max(a, b)
    # maxima at phase + 2k*pi, minima at phase + (2k+1)*pi
    k = math.ceil((lo - phase) / math.pi)
    while phase + k * math.pi <= hi:
        if k % 2 == 0:
            vmax = 1.0
        else:
            vmin = -1.0
        k += 1
    return Interval(max(-1.0, _down(vmin)), min(1.0, _up(vmax)))


def icos(x):
    import numpy as np

    return x.cos() if isinstance(x, Interval) else np.cos(x)


def isin(x):
    import numpy as np

    return x.sin() if isinstance(x, Interval) else np.sin(x)
