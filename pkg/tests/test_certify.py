"""Victim radii, sound radius bounds, and the bisection refinement."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import exact_dot, exact_sumsq, rat_of
from fpcert.attack import AttackBudget
from fpcert.certify import (
    MAX_BISECTIONS,
    CertificateReport,
    exact_radius_linear,
    exact_radius_relu_matched,
    rhat_search,
    sound_radius_linear,
)
from fpcert.data_io import gen_random_linear_case
from fpcert.errors import InternalInvariant, InvalidBracket, ZeroWeightNorm
from fpcert.fp_core import ulps_between
from fpcert.models import LinearModel, ReluNetwork, linearize, relu_forward, runner_up

coords = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e6, max_value=1e6)


class TestExactRadiusLinear:
    def test_hand_case(self):
        m = LinearModel(np.array([3.0, 4.0]), 0.0)
        assert exact_radius_linear(m, np.array([5.0, 0.0])) == 3.0

    def test_zero_weight_norm_rejected(self):
        with pytest.raises(ZeroWeightNorm):
            exact_radius_linear(LinearModel(np.array([0.0]), 1.0), np.array([1.0]))

    def test_radius_zero_on_the_boundary(self):
        m = LinearModel(np.array([1.0]), 0.0)
        assert exact_radius_linear(m, np.array([0.0])) == 0.0


class TestSoundRadiusLinear:
    def test_sandwiches_the_victim_value(self):
        m = LinearModel(np.array([3.0, 4.0]), 0.0)
        x = np.array([5.0, 0.0])
        lo, hi = sound_radius_linear(m, x)
        assert lo <= exact_radius_linear(m, x) <= hi

    def test_lower_bound_clamped_nonnegative(self):
        m = LinearModel(np.array([1.0]), 0.0)
        lo, hi = sound_radius_linear(m, np.array([1e-300]))
        assert lo >= 0.0

    @given(st.lists(coords, min_size=1, max_size=16), st.data())
    @settings(max_examples=300, deadline=None)
    def test_sandwich_randomized(self, ws, data):
        if all(w == 0.0 for w in ws):
            return
        xs = data.draw(st.lists(coords, min_size=len(ws), max_size=len(ws)))
        b = data.draw(coords)
        m = LinearModel(np.array(ws), b)
        x = np.array(xs)
        lo, hi = sound_radius_linear(m, x)
        assert 0.0 <= lo <= hi
        try:
            r_tilde = exact_radius_linear(m, x)
        except ZeroWeightNorm:
            return  # float norm underflowed to zero: no victim value to sandwich
        assert lo <= r_tilde <= hi

    def test_contains_the_exact_real_radius(self):
        # exact rational check: lo^2 * S <= N^2 and N^2 <= hi^2 * S
        rng = np.random.default_rng(8)
        for _ in range(200):
            d = int(rng.integers(1, 20))
            w = rng.uniform(-1, 1, d)
            x = rng.uniform(-1, 1, d)
            b = float(rng.uniform(-1, 1))
            lo, hi = sound_radius_linear(LinearModel(w, b), x)
            num = exact_dot(w, x) + rat_of(b)
            ssq = exact_sumsq(w)
            assert rat_of(lo) ** 2 * ssq <= num ** 2
            assert math.isinf(hi) or num ** 2 <= rat_of(hi) ** 2 * ssq


class TestReluRadius:
    def test_hand_case(self):
        # identity hidden layer, output rows (1,0) and (0,1): argmax flips
        # across the diagonal, and the matched radius is |x0-x1|/sqrt(2)
        w1 = np.eye(2)
        b1 = np.array([1.0, 1.0])  # keeps both units strictly active near x
        w2 = np.array([[1.0, 0.0], [0.0, 1.0]])
        b2 = np.zeros(2)
        net = ReluNetwork(((w1, b1), (w2, b2)))
        x = np.array([4.0, 1.0])
        scores, l = relu_forward(net, x)
        t = runner_up(scores, l)
        r = exact_radius_relu_matched(net, x, l, t)
        nu = np.array([-1.0, 1.0])
        expected = abs(np.dot(nu, x)) / math.sqrt(2.0)
        assert r == pytest.approx(expected, rel=1e-12)

    def test_pattern_mismatch_returns_none(self):
        net = ReluNetwork(((np.eye(2), np.array([1.0, 1.0])), (np.eye(2), np.zeros(2))))
        x = np.array([4.0, 1.0])
        lin = linearize(net, x)
        other = ((not lin.activation_pattern[0][0],) + lin.activation_pattern[0][1:],)
        assert exact_radius_relu_matched(net, x, 0, 1, pattern_endpoint=other) is None

    def test_matching_endpoint_pattern_keeps_the_radius(self):
        net = ReluNetwork(((np.eye(2), np.array([1.0, 1.0])), (np.eye(2), np.zeros(2))))
        x = np.array([4.0, 1.0])
        lin = linearize(net, x)
        r_default = exact_radius_relu_matched(net, x, 0, 1)
        r_explicit = exact_radius_relu_matched(net, x, 0, 1, pattern_endpoint=lin.activation_pattern)
        assert r_default == r_explicit


class TestCertificateReport:
    def test_orders_validated(self):
        with pytest.raises(InternalInvariant):
            CertificateReport(r_tilde=1.0, r_lo=2.0, r_hi=3.0)
        with pytest.raises(InternalInvariant):
            CertificateReport(r_tilde=1.0, r_lo=0.5, r_hi=2.0, r_hat=5.0)

    def test_csv_row_roundtrips_floats(self):
        rep = CertificateReport(r_tilde=1.5, r_lo=1.25, r_hi=1.75, r_hat=None)
        row = rep.csv_row("m", "0")
        assert row[2] == repr(1.5) and row[5] == ""
        assert len(CertificateReport.csv_header()) == len(row)


class TestRhatSearch:
    def test_invalid_bracket_rejected(self):
        m = LinearModel(np.array([1.0]), 0.0)
        with pytest.raises(InvalidBracket):
            rhat_search(m, np.array([1.0]), (2.0, 1.0), (10, 1))
        with pytest.raises(InvalidBracket):
            rhat_search(m, np.array([1.0]), (0.0, math.inf), (10, 1))

    def test_vacuous_oracle_returns_upper_bound(self):
        m = LinearModel(np.array([1.0]), 0.0)
        r = rhat_search(m, np.array([1.0]), (0.5, 2.0), (10, 1), oracle=lambda _: False)
        assert r == 2.0

    def test_bisection_converges_to_oracle_threshold(self):
        # oracle breaks any radius above 1.3; search must stop just under it
        m = LinearModel(np.array([1.0]), 0.0)
        r = rhat_search(m, np.array([2.0]), (0.0, 2.0), (10, 1), oracle=lambda t: t > 1.3)
        assert r <= 1.3
        assert 1.3 - r < 1e-12

    def test_degenerate_bracket_short_circuits(self):
        m = LinearModel(np.array([1.0]), 0.0)
        calls = []

        def oracle(t):
            calls.append(t)
            return True

        assert rhat_search(m, np.array([1.0]), (1.0, 1.0), (10, 1), oracle=oracle) == 1.0
        assert calls == []

    def test_accepts_attack_budget_directly(self):
        m, x = gen_random_linear_case(6, np.random.SeedSequence(0))
        lo, hi = sound_radius_linear(m, x)
        budget = AttackBudget(n_neighbors_total=64, n_steps_per_side=2, seed=1)
        r1 = rhat_search(m, x, (lo, hi), budget)
        r2 = rhat_search(m, x, (lo, hi), (64, 2), seed=1)
        assert r1 == r2

    def test_refined_radius_lands_on_both_sides_of_the_victim(self):
        below = above = viol = 0
        for t in range(100):
            m, x = gen_random_linear_case(30, np.random.SeedSequence(7, spawn_key=(30, t, 0)))
            rt = exact_radius_linear(m, x)
            lo, hi = sound_radius_linear(m, x)
            rh = rhat_search(m, x, (lo, hi), AttackBudget(n_neighbors_total=900, n_steps_per_side=2, seed=t))
            viol += not (lo <= rh <= hi)
            below += rh < rt
            above += rh > rt
        assert viol == 0
        assert below >= 15 and above >= 15
