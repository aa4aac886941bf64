"""Rounding-search attack on certified radii.

The attack scales a perturbation direction onto the radius sphere, then
samples ULP-adjacent neighbors of that perturbation looking for one whose
round-to-nearest norm lands strictly inside the radius while the predicted
label flips.  A norm that ties the radius exactly sits on the claimed
boundary, not inside it, so ties never count as successes; every reported
perturbation therefore also passes the victim's `norm <= radius` check with
room to spare.  "Not found" is reported as None.

Candidate order is deterministic: per-coordinate candidate tables are fixed
and index draws come from a seeded PCG64 stream consumed in CHUNK-row blocks,
so a larger budget extends, never reshuffles, a smaller one, and every driver
replays the exact search order of fp_neighbors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .certify import exact_radius_linear, exact_radius_relu_matched
from .errors import AbstainedTarget, DomainError, NonFiniteInput, ZeroDirection
from .fp_core import Direction, dot_lr, norm_lr, sign, step_n
from .models import LinearModel, ReluNetwork, linearize, relu_forward, runner_up
from .smoothing import SmoothingConfig, _draw_noise, abstain_pvalue, smooth_certify

CHUNK = 4096


@dataclass(frozen=True)
class AttackBudget:
    n_neighbors_total: int = 1000
    n_steps_per_side: int = 2
    seed: int = 0
    max_pgd_iters: int = 10 ** 6
    pgd_step: float = 1e-5

    def __post_init__(self):
        if self.n_neighbors_total < 1 or self.n_steps_per_side < 1 or self.max_pgd_iters < 1:
            raise DomainError("attack budget counts must be positive")
        if not (self.pgd_step > 0.0 and math.isfinite(self.pgd_step)):
            raise DomainError(f"pgd_step must be a positive finite float, got {self.pgd_step}")


@dataclass(frozen=True)
class AttackResult:
    x_prime: np.ndarray
    delta_prime: np.ndarray
    delta_norm: float
    threshold: float
    label_before: int
    label_after: int
    candidates_tested: int

    def __post_init__(self):
        if not self.delta_norm <= self.threshold:
            raise DomainError("reported perturbation norm exceeds the threshold")
        if self.label_after == self.label_before:
            raise DomainError("reported success without a label change")


@dataclass(frozen=True)
class ReluAttackOutcome:
    """attack_relu_exact verdict plus the evidence behind it.

    result is None whenever the radius could not be certified (PGD failed or
    the endpoint's activation pattern differs from x's) or no candidate hit.
    """

    result: AttackResult | None
    pgd_converged: bool
    pattern_matched: bool | None
    radius: float | None
    target: int


def scale_to_radius(nu, radius: float, sign_to_boundary: int) -> np.ndarray:
    """sign * (radius / ||nu||) * nu in round-to-nearest floats."""
    nu = np.ascontiguousarray(nu, dtype=np.float64)
    if radius < 0.0 or not math.isfinite(radius):
        raise DomainError(f"radius must be finite and nonnegative, got {radius}")
    den = norm_lr(nu)
    if den == 0.0:
        raise ZeroDirection("cannot scale a zero-norm direction")
    return (float(sign_to_boundary) * (radius / den)) * nu


def _candidate_table(delta: np.ndarray, n_side: int) -> np.ndarray:
    """Per-coordinate candidates [n down .. seed .. n up], 2n+1 distinct floats."""
    d = delta.shape[0]
    table = np.empty((d, 2 * n_side + 1))
    for j in range(d):
        v = float(delta[j])
        table[j, n_side] = v
        for k in range(1, n_side + 1):
            table[j, n_side - k] = step_n(v, Direction.DOWN, k)
            table[j, n_side + k] = step_n(v, Direction.UP, k)
    return table


def _index_chunks(rng: np.random.Generator, n_total: int, dim: int, n_cols: int):
    """Yield (base_row, idx) blocks of the shared candidate-index stream."""
    base = 0
    while base < n_total:
        m = min(CHUNK, n_total - base)
        yield base, rng.integers(0, n_cols, size=(m, dim), dtype=np.int64)
        base += m


def _neighbor_plan(delta, budget: AttackBudget):
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    if not np.all(np.isfinite(delta)):
        raise NonFiniteInput("neighbor seed must be finite")
    table = _candidate_table(delta, budget.n_steps_per_side)
    rng = np.random.default_rng(budget.seed)
    return delta, table, _index_chunks(rng, budget.n_neighbors_total, delta.shape[0], table.shape[1])


def fp_neighbors(delta, budget: AttackBudget) -> np.ndarray:
    """The N sampled neighbor perturbations, in search order, as an (N, D) array."""
    delta, table, chunks = _neighbor_plan(delta, budget)
    d = delta.shape[0]
    out = np.empty((budget.n_neighbors_total, d))
    cols = np.arange(d)[None, :]
    for base, idx in chunks:
        out[base:base + idx.shape[0]] = table[cols, idx]
    return out


def _domain_args(domain):
    if domain is None:
        return -math.inf, math.inf, False
    vmin, vmax = float(domain[0]), float(domain[1])
    if not vmin <= vmax:
        raise DomainError(f"empty clipping domain [{vmin}, {vmax}]")
    return vmin, vmax, True


def _clip(x, domain):
    if domain is None:
        return x
    return np.clip(x, float(domain[0]), float(domain[1]))


def relu_pgd_trace(net: ReluNetwork, x, l: int, t: int, budget: AttackBudget, domain):
    """Raw PGD run: (status, iterations, final point); statuses in _kernels."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    flatw, flatb, woff, boff, dims = net.packed()
    vmin, vmax, clip_on = _domain_args(domain)
    return _kernels.relu_pgd_core(
        x, flatw, flatb, woff, boff, dims, l, t,
        budget.pgd_step, vmin, vmax, clip_on, budget.max_pgd_iters,
    )


def relu_pgd(net: ReluNetwork, x, l: int, t: int, budget: AttackBudget, domain):
    """Cumulative perturbation x' - x once the label flips to t, else None."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    status, _, x_adv = relu_pgd_trace(net, x, l, t, budget, domain)
    if status == _kernels.PGD_DEAD:
        raise ZeroDirection("all ReLUs inactive: score difference has zero direction")
    if status != _kernels.PGD_HIT:
        return None
    return x_adv - x


def _rebuild(table, idxrow, x, domain, threshold, label_before, label_after, tested) -> AttackResult:
    delta_prime = table[np.arange(x.shape[0]), idxrow]
    x_prime = _clip(x + delta_prime, domain)
    return AttackResult(
        x_prime=x_prime,
        delta_prime=delta_prime,
        delta_norm=norm_lr(x_prime - x),
        threshold=threshold,
        label_before=label_before,
        label_after=label_after,
        candidates_tested=tested,
    )


def attack_linear(m: LinearModel, x, budget: AttackBudget, domain=None, threshold=None):
    """First sampled neighbor with float norm strictly below threshold that flips the sign.

    threshold defaults to the victim radius; passing the sound lower bound
    instead turns this into the mitigation check.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    s = dot_lr(m.w, x) + m.b
    thr = exact_radius_linear(m, x) if threshold is None else float(threshold)
    if not math.isfinite(thr):
        return None
    nu = -sign(s) * m.w  # exact sign flip, pointing at the decision boundary
    delta, table, chunks = _neighbor_plan(scale_to_radius(nu, thr, +1), budget)
    vmin, vmax, clip_on = _domain_args(domain)
    before_pos = s >= 0.0
    for base, idx in chunks:
        first, _ = _kernels.scan_linear(table, idx, x, m.w, m.b, vmin, vmax, clip_on, thr, before_pos)
        if first >= 0:
            return _rebuild(table, idx[first], x, domain, thr,
                            1 if before_pos else -1, -1 if before_pos else 1,
                            base + first + 1)
    return None


def attack_relu_exact(net: ReluNetwork, x, budget: AttackBudget, domain=None) -> ReluAttackOutcome:
    """Attack the matched-pattern radius of a ReLU net.

    PGD supplies the endpoint whose activation pattern must match x's for the
    radius to be exact; the neighbor search is then seeded from the local
    score-difference direction scaled onto that radius.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    scores, l = relu_forward(net, x)
    t = runner_up(scores, l)
    status, _, x_adv = relu_pgd_trace(net, x, l, t, budget, domain)
    if status != _kernels.PGD_HIT:
        return ReluAttackOutcome(None, False, None, None, t)
    lin = linearize(net, x)
    radius = exact_radius_relu_matched(
        net, x, l, t,
        pattern_x=lin.activation_pattern,
        pattern_endpoint=linearize(net, x_adv).activation_pattern,
    )
    if radius is None:
        return ReluAttackOutcome(None, True, False, None, t)
    if not math.isfinite(radius):
        return ReluAttackOutcome(None, True, True, radius, t)
    nu = lin.tau[t] - lin.tau[l]
    delta, table, chunks = _neighbor_plan(scale_to_radius(nu, radius, +1), budget)
    flatw, flatb, woff, boff, dims = net.packed()
    vmin, vmax, clip_on = _domain_args(domain)
    for base, idx in chunks:
        first, _ = _kernels.scan_relu(table, idx, x, flatw, flatb, woff, boff, dims,
                                      l, vmin, vmax, clip_on, radius)
        if first >= 0:
            _, label_after = relu_forward(net, _clip(x + table[np.arange(x.shape[0]), idx[first]], domain))
            result = _rebuild(table, idx[first], x, domain, radius, l, label_after, base + first + 1)
            return ReluAttackOutcome(result, True, True, radius, t)
    return ReluAttackOutcome(None, True, True, radius, t)


def attack_smoothed(net: ReluNetwork, x, cfg: SmoothingConfig, budget: AttackBudget, domain=None):
    """Attack a randomized-smoothing certificate.

    PGD against the base classifier provides the direction; candidates are
    judged by the smoothed classifier replayed with the certification noise,
    and a flip means a confident prediction different from the certified
    label (an abstention is not a flip).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    cert = smooth_certify(net, x, cfg)
    if cert.radius is None:
        raise AbstainedTarget(f"no certified radius at this input (p_a_lower={cert.p_a_lower})")
    scores, l = relu_forward(net, x)
    t = runner_up(scores, l)
    status, _, x_adv = relu_pgd_trace(net, x, l, t, budget, domain)
    if status != _kernels.PGD_HIT:
        return None
    d_pgd = x_adv - x
    if norm_lr(d_pgd) == 0.0:
        return None
    delta, table, chunks = _neighbor_plan(scale_to_radius(d_pgd, cert.radius, +1), budget)
    noise = _draw_noise(net.input_dim, cfg)
    flatw, flatb, woff, boff, dims = net.packed()
    vmin, vmax, clip_on = _domain_args(domain)
    for base, idx in chunks:
        norms, tops, top_counts, run_counts = _kernels.scan_smoothed(
            table, idx, x, noise, flatw, flatb, woff, boff, dims,
            vmin, vmax, clip_on, cert.radius,
        )
        for r in range(idx.shape[0]):
            if tops[r] < 0 or tops[r] == cert.label:
                continue
            if abstain_pvalue(int(top_counts[r]), int(run_counts[r])) <= cfg.alpha:
                return _rebuild(table, idx[r], x, domain, cert.radius,
                                cert.label, int(tops[r]), base + r + 1)
    return None
