"""Outward-rounded interval arithmetic over binary64.

Each operation first evaluates its endpoint formulas in ordinary
round-to-nearest arithmetic and then widens every bound outward by one
adjacent float unless the bound is provably exact.  Soundness rests on the
fact that the correctly rounded-down value of a real result r is either
fl(r) or the float just below fl(r), and symmetrically for rounding up; the
FPU rounding mode is never touched.  Overflowed bounds widen to +/-infinity
instead of raising, so an infinite endpoint always means "the true bound
lies beyond the largest finite float".

The module-level widening hooks can be swapped (``install_rounding``) on a
platform that offers trustworthy directed rounding; every consumer and test
accepts any sound enclosure, so the default 1-ULP scheme is merely the
portable choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    DimensionMismatch,
    DivisorSpansZero,
    NegativeOperand,
)
from .fp_core import MAX_FINITE, Direction, next_after

_INF = math.inf


def _down_1ulp(x: float) -> float:
    if math.isinf(x):
        # A +inf round-to-nearest result means the true value exceeds
        # MAX_FINITE, so MAX_FINITE is a sound lower bound.
        return MAX_FINITE if x > 0.0 else x
    if x == -MAX_FINITE:
        return -_INF
    return next_after(x, Direction.DOWN)


def _up_1ulp(x: float) -> float:
    if math.isinf(x):
        return -MAX_FINITE if x < 0.0 else x
    if x == MAX_FINITE:
        return _INF
    return next_after(x, Direction.UP)


_widen_down = _down_1ulp
_widen_up = _up_1ulp


def install_rounding(down, up) -> None:
    """Replace the outward-widening pair (internal hook, default 1 ULP).

    `down(x)`/`up(x)` receive a round-to-nearest result and must return a
    float certainly below/above the exact real value it came from.
    """
    global _widen_down, _widen_up
    _widen_down = down
    _widen_up = up


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = self.lo, self.hi
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval bounds cannot be NaN")
        if lo == _INF or hi == -_INF:
            raise ValueError("empty interval: only -inf lo / +inf hi allowed")
        if lo > hi:
            raise ValueError(f"inverted interval [{lo!r}, {hi!r}]")

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"


def singleton(x: float) -> Interval:
    x = float(x)
    if math.isnan(x):
        raise ValueError("interval bounds cannot be NaN")
    return Interval(x, x)


def singletons(xs) -> list[Interval]:
    return [singleton(float(x)) for x in xs]


def _sum_exact(a: float, b: float, s: float) -> bool:
    # Knuth TwoSum residual; any overflow in the transform means "not
    # provably exact", which only costs an unneeded 1-ULP widening.
    if not math.isfinite(s):
        return False
    bb = s - a
    aa = s - bb
    if not (math.isfinite(bb) and math.isfinite(aa)):
        return False
    return (a - aa) + (b - bb) == 0.0


_TWO53 = 9007199254740992.0  # 2**53


def _product_exact(a: float, b: float, p: float) -> bool:
    if a == 0.0 or b == 0.0:
        return True
    if not math.isfinite(p):
        return False
    ma, ea = math.frexp(a)
    mb, eb = math.frexp(b)
    sig = int(ma * _TWO53) * int(mb * _TWO53)
    t = (sig & -sig).bit_length() - 1
    if (abs(sig) >> t).bit_length() > 53:
        return False
    # p is finite, so only loss into the subnormal range remains possible.
    return (ea - 53) + (eb - 53) + t >= -1074


def _bound_lo(rn: float, exact: bool) -> float:
    return rn if exact else _widen_down(rn)


def _bound_hi(rn: float, exact: bool) -> float:
    return rn if exact else _widen_up(rn)


def iv_add(a: Interval, b: Interval) -> Interval:
    lo = a.lo + b.lo
    hi = a.hi + b.hi
    return Interval(_bound_lo(lo, _sum_exact(a.lo, b.lo, lo)),
                    _bound_hi(hi, _sum_exact(a.hi, b.hi, hi)))


def iv_sub(a: Interval, b: Interval) -> Interval:
    lo = a.lo - b.hi
    hi = a.hi - b.lo
    return Interval(_bound_lo(lo, _sum_exact(a.lo, -b.hi, lo)),
                    _bound_hi(hi, _sum_exact(a.hi, -b.lo, hi)))


def _prod_rn(x: float, y: float) -> float:
    # An infinite bound stands for an unknown huge finite value, so its
    # product with an exact zero is exactly zero, not NaN.
    if (x == 0.0 and math.isinf(y)) or (y == 0.0 and math.isinf(x)):
        return 0.0
    return x * y


def iv_mul(a: Interval, b: Interval) -> Interval:
    lo = _INF
    hi = -_INF
    for x, y in ((a.lo, b.lo), (a.lo, b.hi), (a.hi, b.lo), (a.hi, b.hi)):
        p = _prod_rn(x, y)
        exact = _product_exact(x, y, p)
        pl = _bound_lo(p, exact)
        ph = _bound_hi(p, exact)
        if pl < lo:
            lo = pl
        if ph > hi:
            hi = ph
    return Interval(lo, hi)


def iv_div(a: Interval, b: Interval) -> Interval:
    if b.lo <= 0.0 <= b.hi:
        raise DivisorSpansZero(f"divisor {b!r} contains zero")
    lo = _INF
    hi = -_INF
    for x, y in ((a.lo, b.lo), (a.lo, b.hi), (a.hi, b.lo), (a.hi, b.hi)):
        q = x / y if not (math.isinf(x) and math.isinf(y)) else math.nan
        if math.isnan(q):
            # huge/huge with unknown magnitudes: no information either way
            return Interval(-_INF, _INF)
        exact = x == 0.0
        ql = _bound_lo(q, exact)
        qh = _bound_hi(q, exact)
        if ql < lo:
            lo = ql
        if qh > hi:
            hi = qh
    return Interval(lo, hi)


def _sqrt_exact(a: float, r: float) -> bool:
    if a == 0.0:
        return True
    if not math.isfinite(r):
        return False
    return Fraction(r) * Fraction(r) == Fraction(a)


def iv_sqrt(a: Interval) -> Interval:
    if a.lo < 0.0:
        raise NegativeOperand(f"sqrt of {a!r}")
    rlo = math.sqrt(a.lo)
    rhi = math.sqrt(a.hi) if a.hi != _INF else _INF
    lo = _bound_lo(rlo, _sqrt_exact(a.lo, rlo))
    hi = _bound_hi(rhi, True if rhi == _INF else _sqrt_exact(a.hi, rhi))
    return Interval(max(lo, 0.0), hi)  # square roots are nonnegative


def iv_abs(a: Interval) -> Interval:
    # Negation is exact, so no widening is ever needed here.
    if a.lo >= 0.0:
        return Interval(a.lo, a.hi)
    if a.hi <= 0.0:
        return Interval(-a.hi, -a.lo)
    return Interval(0.0, max(-a.lo, a.hi))


def iv_dot(a: list[Interval], b: list[Interval]) -> Interval:
    if len(a) != len(b):
        raise DimensionMismatch(f"dot of lengths {len(a)} and {len(b)}")
    acc = Interval(0.0, 0.0)
    for x, y in zip(a, b):
        acc = iv_add(acc, iv_mul(x, y))
    return acc


def iv_norm2(a: list[Interval]) -> Interval:
    acc = Interval(0.0, 0.0)
    for x in a:
        m = iv_abs(x)
        acc = iv_add(acc, iv_mul(m, m))
    # Widening may push the accumulated bound a hair below zero even though
    # the true sum of squares cannot be negative.
    if acc.lo < 0.0:
        acc = Interval(0.0, acc.hi)
    return iv_sqrt(acc)
