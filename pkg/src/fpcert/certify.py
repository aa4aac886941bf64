"""Certified L2 radii for linear and ReLU classifiers.

Two flavors live side by side.  The "exact" radius is the victim computation:
round-to-nearest, left-to-right, exactly as a straightforward implementation
would write it, and therefore attackable through its rounding.  The "sound"
radius reruns the same formula on outward-rounded intervals; its lower bound
survives any round-to-nearest rounding of the victim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InternalInvariant, InvalidBracket, ZeroWeightNorm
from .fp_core import dot_lr, norm_lr, ulps_between
from .interval import Interval, iv_abs, iv_add, iv_div, iv_dot, iv_norm2, singleton, singletons
from .models import LinearModel, ReluNetwork, linearize, patterns_equal

MAX_BISECTIONS = 64


@dataclass(frozen=True)
class CertificateReport:
    """One input's radii: victim value, sound bracket, attack-refined estimate."""

    r_tilde: float
    r_lo: float
    r_hi: float
    r_hat: float | None = None

    def __post_init__(self):
        if not (self.r_lo >= 0.0 and self.r_tilde >= 0.0 and self.r_hi >= 0.0):
            raise InternalInvariant("radii must be nonnegative")
        if not (self.r_lo <= self.r_tilde <= self.r_hi):
            raise InternalInvariant("r_tilde outside [r_lo, r_hi]")
        if self.r_hat is not None and not (self.r_lo <= self.r_hat <= self.r_hi):
            raise InternalInvariant("r_hat outside [r_lo, r_hi]")

    def csv_row(self, model_id: str, input_id: str) -> list:
        hat = "" if self.r_hat is None else repr(self.r_hat)
        return [model_id, input_id, repr(self.r_tilde), repr(self.r_lo), repr(self.r_hi), hat]

    @staticmethod
    def csv_header() -> list:
        return ["model_id", "input_id", "r_tilde", "r_lo", "r_hi", "r_hat"]


def exact_radius_linear(m: LinearModel, x) -> float:
    """|w.x + b| / ||w|| in round-to-nearest floats; the attackable victim."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    den = norm_lr(m.w)
    if den == 0.0:
        raise ZeroWeightNorm("weight vector has zero float norm")
    return abs(dot_lr(m.w, x) + m.b) / den


def sound_radius_linear(m: LinearModel, x) -> tuple:
    """Bounds (r_lo, r_hi) containing every round-to-nearest evaluation.

    The lower bound is clamped at 0 since a radius is nonnegative by
    definition even when the enclosure of the numerator dips below zero.
    Underflow can pull the norm enclosure's lower bound to exact zero even
    though the true norm is positive; the quotient's upper bound is then
    unbounded, and the lower bound divides by the norm's upper bound instead.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    num = iv_abs(iv_add(iv_dot(singletons(m.w), singletons(x)), singleton(m.b)))
    den = iv_norm2(singletons(m.w))
    if den.hi == 0.0:
        raise ZeroWeightNorm("weight vector has zero norm")
    if den.lo == 0.0:
        lo = iv_div(Interval(num.lo, num.lo), Interval(den.hi, den.hi)).lo
        return (max(lo, 0.0), math.inf)
    r = iv_div(num, den)
    return (max(r.lo, 0.0), r.hi)


def exact_radius_relu_matched(
    net: ReluNetwork,
    x,
    l: int,
    t: int,
    pattern_x=None,
    pattern_endpoint=None,
):
    """Radius |nu.x + nu_hat| / ||nu|| of the local linearization at x.

    The formula is only meaningful while the ReLU activation pattern stays
    fixed, so when the caller supplies the pattern observed at the attack
    endpoint it is compared against x's own; a mismatch returns None.  The
    caller owns producing that evidence (this module never runs the attack).
    """
    lin = linearize(net, x)
    if pattern_x is None:
        pattern_x = lin.activation_pattern
    if pattern_endpoint is not None and not patterns_equal(pattern_x, pattern_endpoint):
        return None
    nu = lin.tau[t] - lin.tau[l]
    den = norm_lr(nu)
    if den == 0.0:
        raise ZeroWeightNorm("score-difference direction has zero float norm")
    num = abs(dot_lr(nu, np.ascontiguousarray(x, dtype=np.float64)) + (lin.tau_hat[t] - lin.tau_hat[l]))
    return num / den


def rhat_search(m: LinearModel, x, bounds: tuple, budget: tuple, domain=None, seed: int = 0, oracle=None) -> float:
    """Largest radius in [r_lo, r_hi] the rounding-search attack cannot break.

    oracle(r) must return True when an adversarial example with float norm
    <= r exists; the default oracle is attack_linear at threshold r.  The
    lower bound is trusted as safe (it is the sound certificate), so the
    search returns the largest *tested* safe radius, starting from r_hi and
    bisecting until the bracket is two adjacent floats or 64 rounds pass.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise InvalidBracket(f"bad radius bracket [{lo}, {hi}]")

    if oracle is None:
        from .attack import AttackBudget, attack_linear

        if isinstance(budget, AttackBudget):
            b = budget
        else:
            n_total, n_side = budget
            b = AttackBudget(n_neighbors_total=int(n_total), n_steps_per_side=int(n_side), seed=seed)

        def oracle(r: float) -> bool:
            return attack_linear(m, x, b, domain=domain, threshold=r) is not None

    if lo == hi or not oracle(hi):
        return hi
    for _ in range(MAX_BISECTIONS):
        if ulps_between(lo, hi) <= 1:
            break
        mid = lo + (hi - lo) / 2.0
        if not (lo < mid < hi):
            break
        if oracle(mid):
            hi = mid
        else:
            lo = mid
    return lo
