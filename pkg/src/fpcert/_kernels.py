"""Compiled scalar-order kernels.

Every reduction here is an explicit left-to-right loop compiled without
fastmath, so no library may reassociate, vectorize, or fuse the float ops.
Results are therefore bit-identical across calls, batch shapes, and worker
processes, which the attack replay and determinism contracts rely on.

Network weights travel as flat arrays plus offset tables (one entry per
layer) so a single kernel handles any depth.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def dot_lr(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


@njit(cache=True)
def norm_lr(a):
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * a[i]
    return math.sqrt(acc)


@njit(cache=True)
def _forward_scores(x, flatw, flatb, woff, boff, dims, out):
    nlayers = dims.shape[0] - 1
    cur = x.copy()
    for i in range(nlayers):
        din = dims[i]
        dout = dims[i + 1]
        nxt = np.empty(dout)
        for u in range(dout):
            acc = 0.0
            base = woff[i] + u * din
            for j in range(din):
                acc += flatw[base + j] * cur[j]
            acc += flatb[boff[i] + u]
            if i < nlayers - 1 and acc <= 0.0:
                acc = 0.0  # hidden ReLU
            nxt[u] = acc
        cur = nxt
    for k in range(out.shape[0]):
        out[k] = cur[k]


@njit(cache=True)
def _argmax(scores):
    best = 0
    for k in range(1, scores.shape[0]):
        if scores[k] > scores[best]:
            best = k
    return best


@njit(cache=True)
def forward_batch(X, flatw, flatb, woff, boff, dims, scores_out):
    for r in range(X.shape[0]):
        _forward_scores(X[r], flatw, flatb, woff, boff, dims, scores_out[r])


@njit(cache=True)
def forward_labels(X, flatw, flatb, woff, boff, dims, labels_out):
    k_out = dims[dims.shape[0] - 1]
    scores = np.empty(k_out)
    for r in range(X.shape[0]):
        _forward_scores(X[r], flatw, flatb, woff, boff, dims, scores)
        labels_out[r] = _argmax(scores)


@njit(cache=True)
def linearize_core(x, flatw, flatb, woff, boff, dims):
    """Collapse the piecewise-linear region around x.

    Returns (tau, tau_hat, masks): tau is (K x D) with the product composed
    right-to-left starting from the first layer, tau_hat follows the
    recurrence b <- tau_i^T b + bias_i, and masks holds one 0.0/1.0 entry per
    hidden unit (strict h > 0).
    """
    n = dims.shape[0] - 1
    d0 = dims[0]
    total_hidden = 0
    for i in range(1, n):
        total_hidden += dims[i]
    masks = np.empty(total_hidden)

    cur = x.copy()
    moff = 0
    for i in range(n - 1):
        din = dims[i]
        dout = dims[i + 1]
        nxt = np.empty(dout)
        for u in range(dout):
            acc = 0.0
            base = woff[i] + u * din
            for j in range(din):
                acc += flatw[base + j] * cur[j]
            acc += flatb[boff[i] + u]
            if acc > 0.0:
                masks[moff + u] = 1.0
                nxt[u] = acc
            else:
                masks[moff + u] = 0.0
                nxt[u] = 0.0
        moff += dout
        cur = nxt

    tau = np.empty((dims[1], d0))
    for u in range(dims[1]):
        base = woff[0] + u * d0
        for c in range(d0):
            tau[u, c] = flatw[base + c]
    tau_hat = np.empty(dims[1])
    for u in range(dims[1]):
        tau_hat[u] = flatb[boff[0] + u]

    moff = 0
    for i in range(1, n):
        din = dims[i]
        dout = dims[i + 1]
        tau2 = np.empty((dout, d0))
        hat2 = np.empty(dout)
        for r in range(dout):
            base = woff[i] + r * din
            for c in range(d0):
                acc = 0.0
                for k in range(din):
                    acc += (flatw[base + k] * masks[moff + k]) * tau[k, c]
                tau2[r, c] = acc
            accb = 0.0
            for k in range(din):
                accb += (flatw[base + k] * masks[moff + k]) * tau_hat[k]
            accb += flatb[boff[i] + r]
            hat2[r] = accb
        moff += din
        tau = tau2
        tau_hat = hat2
    return tau, tau_hat, masks


PGD_HIT = 0
PGD_EXHAUSTED = 1
PGD_DEAD = 2


@njit(cache=True)
def relu_pgd_core(x0, flatw, flatb, woff, boff, dims, l, t, step,
                  vmin, vmax, clip_on, max_iters):
    d0 = dims[0]
    k_out = dims[dims.shape[0] - 1]
    x = x0.copy()
    scores = np.empty(k_out)
    nu = np.empty(d0)
    it = 0
    while it < max_iters:
        tau, _, _ = linearize_core(x, flatw, flatb, woff, boff, dims)
        for j in range(d0):
            nu[j] = tau[t, j] - tau[l, j]
        nrm = norm_lr(nu)
        if nrm == 0.0:
            return PGD_DEAD, it, x
        scale = step / nrm
        for j in range(d0):
            v = x[j] + scale * nu[j]
            if clip_on:
                if v < vmin:
                    v = vmin
                elif v > vmax:
                    v = vmax
            x[j] = v
        it += 1
        _forward_scores(x, flatw, flatb, woff, boff, dims, scores)
        if _argmax(scores) == t:
            return PGD_HIT, it, x
    return PGD_EXHAUSTED, it, x


@njit(cache=True)
def _gather_candidate(table, idxrow, x, vmin, vmax, clip_on, xp, delta):
    """Build one sampled candidate, clip, and return the realized norm."""
    d = x.shape[0]
    for j in range(d):
        v = x[j] + table[j, idxrow[j]]
        if clip_on:
            if v < vmin:
                v = vmin
            elif v > vmax:
                v = vmax
        xp[j] = v
        delta[j] = v - x[j]
    return norm_lr(delta)


@njit(cache=True)
def scan_linear(table, idx, x, w, b, vmin, vmax, clip_on, thr, label_before_pos):
    """First sampled candidate with norm strictly below thr that flips the sign.

    A candidate whose recomputed norm ties thr exactly sits on the claimed
    boundary rather than inside it, so ties are rejected.
    Returns (first_hit_row, hit_count) over the idx chunk; -1 when none hit.
    """
    d = x.shape[0]
    xp = np.empty(d)
    delta = np.empty(d)
    first = -1
    hits = 0
    for r in range(idx.shape[0]):
        nd = _gather_candidate(table, idx[r], x, vmin, vmax, clip_on, xp, delta)
        if nd < thr:
            s = dot_lr(w, xp) + b
            if (s >= 0.0) != label_before_pos:
                hits += 1
                if first < 0:
                    first = r
    return first, hits


@njit(cache=True)
def scan_relu(table, idx, x, flatw, flatb, woff, boff, dims,
              label_before, vmin, vmax, clip_on, thr):
    d = x.shape[0]
    k_out = dims[dims.shape[0] - 1]
    xp = np.empty(d)
    delta = np.empty(d)
    scores = np.empty(k_out)
    first = -1
    hits = 0
    for r in range(idx.shape[0]):
        nd = _gather_candidate(table, idx[r], x, vmin, vmax, clip_on, xp, delta)
        if nd < thr:
            _forward_scores(xp, flatw, flatb, woff, boff, dims, scores)
            if _argmax(scores) != label_before:
                hits += 1
                if first < 0:
                    first = r
    return first, hits


@njit(cache=True)
def scan_smoothed(table, idx, x, noise, flatw, flatb, woff, boff, dims,
                  vmin, vmax, clip_on, thr):
    """Vote tallies for every candidate strictly within the norm threshold.

    noise is the (M x D) scaled Gaussian sample shared by every candidate.
    Rows failing the norm test (ties included) get top = -1.
    """
    n_cand = idx.shape[0]
    m_votes = noise.shape[0]
    d = x.shape[0]
    k_out = dims[dims.shape[0] - 1]
    xp = np.empty(d)
    delta = np.empty(d)
    noisy = np.empty(d)
    scores = np.empty(k_out)
    counts = np.empty(k_out, dtype=np.int64)
    norms = np.empty(n_cand)
    tops = np.full(n_cand, -1, dtype=np.int64)
    top_counts = np.zeros(n_cand, dtype=np.int64)
    run_counts = np.zeros(n_cand, dtype=np.int64)
    for r in range(n_cand):
        nd = _gather_candidate(table, idx[r], x, vmin, vmax, clip_on, xp, delta)
        norms[r] = nd
        if nd >= thr:
            continue
        for k in range(k_out):
            counts[k] = 0
        for m in range(m_votes):
            for j in range(d):
                noisy[j] = xp[j] + noise[m, j]
            _forward_scores(noisy, flatw, flatb, woff, boff, dims, scores)
            counts[_argmax(scores)] += 1
        top = 0
        for k in range(1, k_out):
            if counts[k] > counts[top]:
                top = k
        runner = 0 if top != 0 else 1
        for k in range(k_out):
            if k != top and counts[k] > counts[runner]:
                runner = k
        tops[r] = top
        top_counts[r] = counts[top]
        run_counts[r] = counts[runner]
    return norms, tops, top_counts, run_counts


@njit(cache=True)
def vote_counts(x, noise, flatw, flatb, woff, boff, dims):
    """Class vote tally for one point under the shared noise sample."""
    m_votes = noise.shape[0]
    d = x.shape[0]
    k_out = dims[dims.shape[0] - 1]
    noisy = np.empty(d)
    scores = np.empty(k_out)
    counts = np.zeros(k_out, dtype=np.int64)
    for m in range(m_votes):
        for j in range(d):
            noisy[j] = x[j] + noise[m, j]
        _forward_scores(noisy, flatw, flatb, woff, boff, dims, scores)
        counts[_argmax(scores)] += 1
    return counts
