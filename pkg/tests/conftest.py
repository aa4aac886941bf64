"""Shared helpers: exact rational comparisons used as containment oracles.

Floats convert exactly to p/q with q a power of two, so containment checks
against exact real arithmetic reduce to integer cross-multiplication; no
arbitrary-precision float library is needed and no rounding is introduced.
"""

import math
from fractions import Fraction

import numpy as np


def rat_of(x: float) -> Fraction:
    return Fraction(*x.as_integer_ratio())


def float_leq_rat(f: float, r: Fraction) -> bool:
    """f <= r exactly, treating -inf as always-below and +inf as never-below."""
    if f == -math.inf:
        return True
    if f == math.inf:
        return False
    return rat_of(f) <= r


def rat_leq_float(r: Fraction, f: float) -> bool:
    if f == math.inf:
        return True
    if f == -math.inf:
        return False
    return r <= rat_of(f)


def interval_contains_rat(iv, r: Fraction) -> bool:
    return float_leq_rat(iv.lo, r) and rat_leq_float(r, iv.hi)


def interval_contains_sqrt_of(iv, r: Fraction) -> bool:
    """lo <= sqrt(r) <= hi via squared integer comparisons; needs r >= 0."""
    assert r >= 0
    lo = max(iv.lo, 0.0)
    lo_ok = rat_of(lo) ** 2 <= r if lo != math.inf else False
    if iv.hi == math.inf:
        hi_ok = True
    elif iv.hi < 0:
        hi_ok = False
    else:
        hi_ok = rat_of(iv.hi) ** 2 >= r
    return lo_ok and hi_ok


def exact_dot(w, x) -> Fraction:
    acc = Fraction(0)
    for wi, xi in zip(w, x):
        acc += rat_of(float(wi)) * rat_of(float(xi))
    return acc


def exact_sumsq(w) -> Fraction:
    acc = Fraction(0)
    for wi in w:
        acc += rat_of(float(wi)) * rat_of(float(wi))
    return acc


def random_finite_floats(rng: np.random.Generator, n: int) -> np.ndarray:
    """Mixed-scale finite float64 sample: half bit-pattern draws, half moderate."""
    bits = rng.integers(0, 2 ** 64, size=n, dtype=np.uint64)
    vals = bits.view(np.float64).copy()
    bad = ~np.isfinite(vals)
    vals[bad] = rng.uniform(-1e6, 1e6, int(bad.sum()))
    moderate = rng.uniform(-1e3, 1e3, n)
    pick = rng.random(n) < 0.5
    vals[pick] = moderate[pick]
    return vals
