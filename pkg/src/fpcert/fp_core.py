"""ULP-level float primitives: adjacent-float stepping and fixed-order vector arithmetic.

Stepping is done on IEEE-754 binary64 bit patterns rather than through a math
library so results are identical on every platform.  Values move through the
subnormal range and across zero like ordinary adjacent floats; stepping out of
the finite range is an error.

``dot_lr`` and ``norm_lr`` define the victim arithmetic used throughout: plain
round-to-nearest evaluation with a fixed left-to-right reduction order.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteInput, Overflow
from . import _kernels

SIGN_MASK = 0x8000_0000_0000_0000
EXP_MASK = 0x7FF0_0000_0000_0000
MAX_FINITE = math.ldexp(2.0 - 2.0 ** -52, 1023)  # 1.7976931348623157e308
MIN_SUBNORMAL = 5e-324


class Direction(enum.Enum):
    UP = 1
    DOWN = -1


@dataclass(frozen=True)
class FloatStep:
    """A pending move of `count` adjacent floats from `value` toward `direction`."""

    value: float
    direction: Direction
    count: int

    def apply(self) -> float:
        return step_n(self.value, self.direction, self.count)


def _bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def _float(b: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", b))[0]


def next_after(x: float, direction: Direction) -> float:
    """Adjacent binary64 float of `x` toward `direction`.

    Raises NonFiniteInput for NaN/inf operands and Overflow when the step
    would leave the finite range.
    """
    x = float(x)
    if not math.isfinite(x):
        raise NonFiniteInput(f"cannot step from {x!r}")
    up = direction is Direction.UP
    if x == 0.0:
        return MIN_SUBNORMAL if up else -MIN_SUBNORMAL
    b = _bits(x)
    # Sign-magnitude ordinal: magnitude grows away from zero.
    grow = up == (x > 0.0)
    if grow:
        b += 1
        if b & EXP_MASK == EXP_MASK:  # stepped onto the infinity pattern
            raise Overflow(f"step {'up' if up else 'down'} from {x!r} is not finite")
    else:
        b -= 1
    return _float(b)


def step_n(x: float, direction: Direction, n: int) -> float:
    """Result of applying next_after `n` times."""
    if n < 0:
        raise ValueError("step count must be nonnegative")
    for _ in range(n):
        x = next_after(x, direction)
    return x


def ulps_between(a: float, b: float) -> int:
    """Signed count of adjacent-float steps from `a` to `b`."""
    return _ordinal(b) - _ordinal(a)


def _ordinal(x: float) -> int:
    if not math.isfinite(x):
        raise NonFiniteInput(f"no ordinal for {x!r}")
    b = _bits(x)
    if b & SIGN_MASK:
        return -(b ^ SIGN_MASK)
    return b


def dot_lr(a, b) -> float:
    """Left-to-right round-to-nearest dot product (the victim evaluation order)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("dot_lr needs two equal-length vectors")
    return float(_kernels.dot_lr(a, b))


def norm_lr(a) -> float:
    """sqrt of the left-to-right sum of squares, all round-to-nearest."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    return float(_kernels.norm_lr(a))


def _dot_lr_py(a, b) -> float:
    # Definitional reference for dot_lr; kept interpreter-only on purpose.
    acc = 0.0
    for x, y in zip(a, b):
        acc = acc + float(x) * float(y)
    return acc


def _norm_lr_py(a) -> float:
    acc = 0.0
    for x in a:
        x = float(x)
        acc = acc + x * x
    return math.sqrt(acc)


def sign(x: float) -> float:
    """Victim sign convention: sign(0) = +1."""
    return -1.0 if x < 0.0 else 1.0
