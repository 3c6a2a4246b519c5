"""Rate-formula tests.

High-precision expected values were computed with mpmath (40 digits):
    C(2+sqrt(3)) = 1.121232781918536969...
    C(4)         = 1.160964047443681173...
"""

import numpy as np
import pytest

from ehrelay import (
    BROADCAST,
    MULTI_ACCESS,
    BranchUndefinedError,
    ChannelParams,
    active_rate,
    c_awgn,
    cap_proportional,
    cap_relay_only,
    cap_source_only,
    capacity_min,
    rate_broadcast,
    rate_multi_access,
    rho_maxmin,
    weighted_rate,
    weighted_rate_grad,
)

C_2_SQRT3 = 1.1212327819185368   # C(2+sqrt(3)), mpmath
C_4 = 1.160964047443681          # C(4) = 0.5*log2(5), mpmath

CH = ChannelParams(a=2.0, b=1.0, noise=1.0)


class TestCAwgn:
    def test_zero(self):
        assert c_awgn(0.0) == 0.0

    def test_exact_one(self):
        assert c_awgn(3.0) == 1.0

    def test_high_precision(self):
        assert c_awgn(2.0 + np.sqrt(3.0)) == pytest.approx(C_2_SQRT3, abs=1e-15)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            c_awgn(-1e-9)
        with pytest.raises(ValueError):
            c_awgn(np.inf)
        with pytest.raises(ValueError):
            c_awgn(np.nan)

    def test_monotone_concave(self):
        x = np.linspace(0.0, 50.0, 400)
        y = c_awgn(x)
        assert np.all(np.diff(y) > 0)
        assert np.all(np.diff(y, 2) < 1e-15)


class TestMultiAccess:
    def test_worked_value(self):
        # radicands: sqrt(2) + sqrt(6), squared = 8 + 4*sqrt(3); /4 = 2+sqrt(3)
        assert rate_multi_access(CH, 1.0, 2.0) == pytest.approx(C_2_SQRT3, abs=1e-15)

    def test_relay_silent_collapses_to_direct(self):
        assert rate_multi_access(CH, 1.0, 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_zero_source_limit(self):
        assert rate_multi_access(CH, 0.0, 1.0) == 0.0

    def test_small_gain_rejected(self):
        ch = ChannelParams(a=0.9, b=1.0, noise=1.0)
        with pytest.raises(BranchUndefinedError):
            rate_multi_access(ch, 1.0, 1.0)

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            rate_multi_access(CH, -1.0, 1.0)

    def test_vectorized_matches_scalar(self):
        p1 = np.array([0.0, 0.5, 1.0, 2.0])
        p2 = np.array([1.0, 0.0, 2.0, 3.0])
        vec = rate_multi_access(CH, p1, p2)
        for i in range(len(p1)):
            assert vec[i] == rate_multi_access(CH, float(p1[i]), float(p2[i]))


class TestBroadcast:
    def test_worked_value(self):
        assert rate_broadcast(CH, 1.0) == pytest.approx(C_4, abs=1e-15)

    def test_weak_gain_uses_unity(self):
        ch = ChannelParams(a=0.5, b=1.0, noise=1.0)
        assert rate_broadcast(ch, 3.0) == pytest.approx(1.0, abs=1e-15)

    def test_zero_power(self):
        assert rate_broadcast(CH, 0.0) == 0.0


class TestCapacityMin:
    def test_multi_access_active(self):
        rb = capacity_min(CH, 1.0, 2.0)
        assert rb.tag == MULTI_ACCESS
        assert rb.active == pytest.approx(C_2_SQRT3, abs=1e-15)
        assert rb.broadcast == pytest.approx(C_4, abs=1e-15)

    def test_small_gain_always_broadcast(self):
        ch = ChannelParams(a=0.5, b=1.0, noise=1.0)
        rb = capacity_min(ch, 3.0, 7.0)
        assert rb.tag == BROADCAST
        assert rb.active == pytest.approx(1.0, abs=1e-15)
        assert rb.multi_access is None

    def test_relay_silent(self):
        rb = capacity_min(CH, 1.0, 0.0)
        assert rb.tag == MULTI_ACCESS
        assert rb.active == pytest.approx(0.5, abs=1e-15)

    def test_zero_source(self):
        rb = capacity_min(CH, 0.0, 1.0)
        assert rb.tag == BROADCAST
        assert rb.active == 0.0

    def test_active_is_min_inside_condition_region(self):
        # provable via Cauchy-Schwarz for b = 1 under the branch condition
        rng = np.random.default_rng(0)
        for _ in range(300):
            a = rng.uniform(1.01, 3.0)
            ch = ChannelParams(a=a, b=1.0, noise=rng.uniform(0.5, 2.0))
            p1 = rng.uniform(0.01, 10.0)
            p2 = rng.uniform(0.0, (a * a - 1.0) * p1)
            rb = capacity_min(ch, p1, p2)
            assert rb.tag == MULTI_ACCESS
            assert rb.active <= min(rb.multi_access, rb.broadcast) + 1e-12
            assert rb.active == pytest.approx(min(rb.multi_access, rb.broadcast), abs=1e-12)


class TestWeightedRate:
    def test_endpoints(self):
        assert weighted_rate(CH, 1.0, 2.0, 1.0) == rate_multi_access(CH, 1.0, 2.0)
        assert weighted_rate(CH, 1.0, 2.0, 0.0) == rate_broadcast(CH, 1.0)

    def test_midpoint(self):
        expect = 0.5 * (C_2_SQRT3 + C_4)
        assert weighted_rate(CH, 1.0, 2.0, 0.5) == pytest.approx(expect, abs=1e-15)

    def test_domain(self):
        with pytest.raises(ValueError):
            weighted_rate(CH, 1.0, 2.0, 1.5)
        ch = ChannelParams(a=0.9, b=1.0, noise=1.0)
        with pytest.raises(BranchUndefinedError):
            weighted_rate(ch, 1.0, 2.0, 0.5)
        assert weighted_rate(ch, 3.0, 2.0, 0.0) == rate_broadcast(ch, 3.0)


class TestSpecializations:
    def test_proportional_worked(self):
        assert cap_proportional(CH, 1.0, 2.0) == pytest.approx(C_2_SQRT3, abs=1e-15)

    def test_relay_only_silent(self):
        assert cap_relay_only(CH, 1.0, 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_source_only_zero(self):
        assert cap_source_only(CH, 0.0, 1.0) == 0.0

    def test_specialization_consistency(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            a = rng.uniform(0.5, 3.0)
            ch = ChannelParams(a=a, b=rng.uniform(0.5, 2.0), noise=rng.uniform(0.5, 2.0))
            p1 = rng.uniform(0.0, 10.0)
            p2 = rng.uniform(0.0, 10.0)
            gamma = rng.uniform(0.1, 10.0)
            base = capacity_min(ch, p1, p2).active
            assert cap_relay_only(ch, p1, p2) == pytest.approx(base, abs=1e-12)
            assert cap_source_only(ch, p1, p2) == pytest.approx(base, abs=1e-12)
            expect = capacity_min(ch, p1, gamma * p1).active
            assert cap_proportional(ch, p1, gamma) == pytest.approx(expect, abs=1e-12)


class TestProperties:
    def test_monotone_in_source_power(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = rng.uniform(0.5, 3.0)
            ch = ChannelParams(a=a, b=1.0, noise=rng.uniform(0.5, 2.0))
            p2 = rng.uniform(0.0, 8.0)
            grid = np.sort(rng.uniform(0.0, 10.0, size=60))
            vals = active_rate(ch, grid, np.full_like(grid, p2))
            assert np.all(np.diff(vals) >= -1e-10)

    def test_monotone_in_source_power_general_b_reported(self):
        # the branch formulas do not meet at the switch point when b != 1,
        # so a downward jump can occur there; measured, not asserted
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(50):
            a = rng.uniform(1.01, 3.0)
            ch = ChannelParams(a=a, b=rng.uniform(0.5, 2.0), noise=rng.uniform(0.5, 2.0))
            p2 = rng.uniform(0.0, 8.0)
            grid = np.sort(rng.uniform(0.0, 10.0, size=60))
            vals = active_rate(ch, grid, np.full_like(grid, p2))
            worst = max(worst, -float(np.min(np.diff(vals))))
        if worst > 1e-10:
            print("\nlargest rate drop in p1 across the branch switch (b != 1): %.3e"
                  % worst)

    def test_midpoint_concavity_condition_region_b1(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(300):
            a = rng.uniform(1.01, 3.0)
            ch = ChannelParams(a=a, b=1.0, noise=rng.uniform(0.5, 2.0))
            lam = rng.uniform(0.0, 1.0)
            pts = []
            for _ in range(2):
                p1 = rng.uniform(0.05, 10.0)
                p2 = rng.uniform(0.0, (a * a - 1.0) * p1)
                pts.append((p1, p2))
            mid = (0.5 * (pts[0][0] + pts[1][0]), 0.5 * (pts[0][1] + pts[1][1]))
            f = [weighted_rate(ch, p, q, lam) for p, q in (pts[0], pts[1], mid)]
            worst = max(worst, 0.5 * (f[0] + f[1]) - f[2])
        assert worst <= 1e-9

    def test_midpoint_concavity_general_b_reported(self):
        # outside b = 1 the claim is only measured, never asserted
        rng = np.random.default_rng(4)
        violations = []
        for _ in range(300):
            a = rng.uniform(1.01, 3.0)
            ch = ChannelParams(a=a, b=rng.uniform(0.5, 2.0), noise=1.0)
            lam = rng.uniform(0.0, 1.0)
            p = rng.uniform(0.01, 10.0, size=2)
            q = rng.uniform(0.0, 10.0, size=2)
            mid = weighted_rate(ch, 0.5 * (p[0] + p[1]), 0.5 * (q[0] + q[1]), lam)
            avg = 0.5 * (weighted_rate(ch, p[0], q[0], lam)
                         + weighted_rate(ch, p[1], q[1], lam))
            if avg - mid > 1e-9:
                violations.append((ch.a, ch.b, float(avg - mid)))
        if violations:
            print("\nmidpoint concavity violations for general b: %d/300, worst %.3e"
                  % (len(violations), max(v[2] for v in violations)))

    def test_branch_continuity_at_b1_boundary(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a = rng.uniform(1.01, 3.0)
            ch = ChannelParams(a=a, b=1.0, noise=rng.uniform(0.5, 2.0))
            p1 = rng.uniform(0.05, 10.0)
            p2 = (a * a - 1.0) * p1
            ma = rate_multi_access(ch, p1, p2)
            bc = rate_broadcast(ch, p1)
            assert abs(ma - bc) <= 1e-9

    def test_rho_oracle_agreement(self):
        rng = np.random.default_rng(6)
        for _ in range(60):
            a = rng.uniform(1.01, 3.0)
            ch = ChannelParams(a=a, b=1.0, noise=rng.uniform(0.5, 2.0))
            p1 = rng.uniform(0.05, 10.0)
            p2 = rng.uniform(0.0, (a * a - 1.0) * p1)
            closed = capacity_min(ch, p1, p2).active
            assert abs(closed - rho_maxmin(ch, p1, p2, 10 ** 5)) <= 1e-5


class TestGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            a = rng.uniform(1.01, 3.0)
            ch = ChannelParams(a=a, b=rng.uniform(0.5, 1.5), noise=rng.uniform(0.5, 2.0))
            lam = rng.uniform(0.0, 1.0)
            p1 = rng.uniform(0.1, 8.0)
            p2 = rng.uniform(0.05, 8.0)
            d1, d2 = weighted_rate_grad(ch, p1, p2, lam)
            h = 1e-6
            fd1 = (weighted_rate(ch, p1 + h, p2, lam)
                   - weighted_rate(ch, p1 - h, p2, lam)) / (2 * h)
            fd2 = (weighted_rate(ch, p1, p2 + h, lam)
                   - weighted_rate(ch, p1, p2 - h, lam)) / (2 * h)
            assert float(d1) == pytest.approx(fd1, rel=2e-5, abs=2e-7)
            assert float(d2) == pytest.approx(fd2, rel=2e-5, abs=2e-7)
