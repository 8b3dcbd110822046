import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decopt import stepsize, topology
from decopt.errors import ParameterError
from decopt.stepsize import (
    GrowthPolicy,
    LocalStepsizeState,
    SigmaSchedule,
    StepsizeParams,
    StepsizeState,
    curvature_global,
    curvature_local,
    curvature_guard,
    gamma_ratio_bound,
    local_candidate,
    local_candidate_strongly_convex,
    local_min_consensus,
    local_tilde,
    select_alpha_convex,
    select_alpha_strongly_convex,
    sigma_value,
)


def convex_params(c1=1.0, c2=1.0, growth=None):
    return StepsizeParams(
        mode=stepsize.MODE_CONVEX,
        c1=c1,
        c2=c2,
        growth=growth or GrowthPolicy(),
        sigma=SigmaSchedule(kind="constant", sigma_bar=1.0),
    )


def sc_params(c1=0.5, c2=0.99, sigma=0.2, growth=None):
    return StepsizeParams(
        mode=stepsize.MODE_STRONGLY_CONVEX,
        c1=c1,
        c2=c2,
        growth=growth or GrowthPolicy(kind="ratio_power", beta1=10, beta2=1),
        sigma=SigmaSchedule(kind="inverse_alpha_sq", sigma=sigma),
    )


class TestCurvature:
    def test_zero_displacement(self):
        x = np.ones((3, 2))
        g = np.ones((3, 2))
        assert curvature_global(g, g * 2, x, x) == 0.0

    def test_constant_curvature_scalar(self):
        # single agent, f(x) = (L/2) x^2: quotient is exactly L
        lval = 3.7
        x_now, x_prev = np.array([[2.0]]), np.array([[0.5]])
        assert curvature_global(lval * x_now, lval * x_prev, x_now, x_prev) == pytest.approx(
            lval, abs=1e-15
        )

    @given(st.integers(min_value=0, max_value=2_000))
    @settings(max_examples=25, deadline=None)
    def test_quadratic_rayleigh_bound(self, seed):
        # per-agent quadratics grad = Q x: proxy never exceeds lambda_max(Q)
        rng = np.random.default_rng(seed)
        q = rng.standard_normal((4, 4))
        q = q @ q.T
        lam_max = np.linalg.eigvalsh(q).max()
        x_now, x_prev = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
        proxy = curvature_global(x_now @ q, x_prev @ q, x_now, x_prev)
        assert proxy <= lam_max + 1e-9

    def test_matches_per_agent_aggregate(self):
        rng = np.random.default_rng(0)
        g_now, g_prev = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        x_now, x_prev = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        agg = math.sqrt(
            np.sum((g_now - g_prev) ** 2) / np.sum((x_now - x_prev) ** 2)
        )
        assert curvature_global(g_now, g_prev, x_now, x_prev) == pytest.approx(agg, rel=1e-14)

    def test_local_convention(self):
        x_now = np.array([[1.0, 0.0], [2.0, 2.0]])
        x_prev = np.array([[1.0, 0.0], [1.0, 2.0]])
        g_now = np.array([[5.0, 0.0], [4.0, 2.0]])
        g_prev = np.array([[1.0, 0.0], [1.0, 2.0]])
        lk = curvature_local(g_now, g_prev, x_now, x_prev)
        assert lk[0] == 0.0  # agent 0 did not move: convention
        assert lk[1] == pytest.approx(3.0, abs=1e-14)


class TestConvexSelection:
    def test_curvature_guard_binds(self):
        state = StepsizeState(alpha_prev=100.0, gamma_prev=1.0, k=1)
        alpha, gamma = select_alpha_convex(0.0, 2.0, state, convex_params())
        assert alpha == pytest.approx(0.5, abs=1e-15)
        assert gamma == pytest.approx(0.005, abs=1e-15)

    def test_curvature_guard_arithmetic(self):
        state = StepsizeState(alpha_prev=100.0, gamma_prev=1.0, k=1)
        alpha, _ = select_alpha_convex(3.0, 8.0, state, convex_params())
        assert alpha == pytest.approx(1.0 / 8.0, abs=1e-15)

    def test_ratio_guard_binds(self):
        state = StepsizeState(alpha_prev=0.1, gamma_prev=1.0, k=1)
        alpha, gamma = select_alpha_convex(0.0, 1e-12, state, convex_params(c2=1.0))
        assert alpha == pytest.approx(math.sqrt(2.0) * 0.1, rel=1e-14)
        assert gamma == pytest.approx(math.sqrt(2.0), rel=1e-14)

    def test_growth_cap_binds(self):
        growth = GrowthPolicy(kind="additive", a=1e-4)
        state = StepsizeState(alpha_prev=0.1, gamma_prev=1.0, k=1)
        alpha, _ = select_alpha_convex(0.0, 1e-12, state, convex_params(growth=growth))
        assert alpha == pytest.approx(0.1 + 1e-4, rel=1e-14)

    @given(
        st.integers(min_value=0, max_value=5_000),
        st.integers(min_value=1, max_value=60),
    )
    @settings(max_examples=40, deadline=None)
    def test_certificates_on_random_paths(self, seed, steps):
        # every emitted triple satisfies the descent certificates
        rng = np.random.default_rng(seed)
        params = convex_params(c1=0.9, c2=0.9)
        sigma_bar = params.sigma.sigma_bar
        state = StepsizeState(alpha_prev=10.0 ** rng.uniform(-4, 0), gamma_prev=1.0, k=1)
        emitted = []
        for k in range(1, steps + 1):
            l_k = rng.uniform(0.0, 50.0)
            alpha, gamma = select_alpha_convex(l_k, sigma_bar, state, params)
            # curvature certificate
            assert alpha <= curvature_guard(l_k, sigma_bar, params.c1) + 1e-15
            # two-term form with the optimizing zeta
            zeta = 0.5 * (math.sqrt(l_k**2 + 2 * sigma_bar / params.c1) - l_k)
            assert alpha <= 1.0 / (2.0 * (l_k + zeta)) + 1e-12
            assert alpha <= zeta / sigma_bar + 1e-12
            emitted.append((alpha, gamma))
            state = StepsizeState(alpha_prev=alpha, gamma_prev=gamma, k=k + 1)
        # ratio certificate across consecutive selections
        for (a0, g0), (a1, g1) in zip(emitted, emitted[1:]):
            assert (2 + 2 * g0) * a0 - 2 * g1 * a1 >= -1e-12
        # bounded ratio
        bound = gamma_ratio_bound(params.c2)
        assert all(g <= bound + 1e-12 for _, g in emitted)

    @given(st.integers(min_value=0, max_value=5_000))
    @settings(max_examples=30, deadline=None)
    def test_lower_bound_under_curvature_ceiling(self, seed):
        # if L_k never exceeds l_hat, alpha never falls below the floor
        rng = np.random.default_rng(seed)
        params = convex_params(c1=0.9, c2=0.9)
        l_hat = rng.uniform(0.5, 20.0)
        alpha0 = 10.0 ** rng.uniform(-4, -1)
        floor = min(alpha0, curvature_guard(l_hat, params.sigma.sigma_bar, params.c1))
        state = StepsizeState(alpha_prev=alpha0, gamma_prev=1.0, k=1)
        for k in range(1, 80):
            alpha, gamma = select_alpha_convex(
                rng.uniform(0, l_hat), params.sigma.sigma_bar, state, params
            )
            assert alpha >= floor - 1e-12
            state = StepsizeState(alpha_prev=alpha, gamma_prev=gamma, k=k + 1)

    def test_golden_ratio_bound_value(self):
        assert gamma_ratio_bound(1.0) == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-15)

    def test_determinism(self):
        state = StepsizeState(alpha_prev=0.123, gamma_prev=1.1, k=5)
        a1 = select_alpha_convex(2.5, 1.0, state, convex_params())
        a2 = select_alpha_convex(2.5, 1.0, state, convex_params())
        assert a1 == a2


class TestStronglyConvexSelection:
    def test_closed_form_binds(self):
        state = StepsizeState(alpha_prev=100.0, gamma_prev=1.0, k=1)
        alpha, _ = select_alpha_strongly_convex(1.0, state, sc_params(c1=0.5, sigma=0.2))
        assert alpha == pytest.approx(0.1, abs=1e-15)

    def test_zero_curvature_falls_to_growth(self):
        params = sc_params()
        state = StepsizeState(alpha_prev=0.2, gamma_prev=1.0, k=3)
        alpha, _ = select_alpha_strongly_convex(0.0, state, params)
        expected = min(
            math.sqrt(1 + params.c2) * 0.2, params.growth.cap(0.2, 3)
        )
        assert alpha == pytest.approx(expected, rel=1e-15)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=100, deadline=None)
    def test_equivalence_with_implicit_guard(self, seed):
        # alpha = (1/2 - sigma/c1)/L solves alpha = 1/(sqrt(L^2 + 2 sigma_k/c1) + L)
        # with sigma_k = sigma / alpha^2; check the inequality numerically
        rng = np.random.default_rng(seed)
        c1 = rng.uniform(0.05, 1.0)
        sigma = rng.uniform(0.01, 0.49) * c1 / 2 * 2  # in (0, c1/2) after scaling
        sigma = rng.uniform(0.02, 0.98) * (c1 / 2)
        l_k = 10.0 ** rng.uniform(-2, 3)
        alpha = (0.5 - sigma / c1) / l_k
        sigma_k = sigma / alpha**2
        guard = curvature_guard(l_k, sigma_k, c1)
        assert alpha <= guard * (1 + 1e-12)
        assert alpha >= guard * (1 - 1e-12)

    def test_mode_mismatch(self):
        state = StepsizeState(alpha_prev=0.1)
        with pytest.raises(ParameterError):
            select_alpha_strongly_convex(1.0, state, convex_params())

    def test_sigma_range_enforced(self):
        with pytest.raises(ParameterError):
            sc_params(c1=0.5, sigma=0.3)  # needs sigma < 0.25


class TestLocalRules:
    def test_candidate_arithmetic(self):
        assert local_candidate(0.0, 2.0, 1.0) == pytest.approx(0.5, abs=1e-15)
        assert local_candidate(3.0, 8.0, 1.0) == pytest.approx(1 / 8, abs=1e-15)

    def test_candidate_strongly_convex(self):
        assert local_candidate_strongly_convex(2.0, 0.2, 0.5) == pytest.approx(0.05, abs=1e-15)
        assert local_candidate_strongly_convex(0.0, 0.2, 0.5) is None

    def local_params(self, a=0.01, eta=0.9, c2=0.5):
        return StepsizeParams(
            mode=stepsize.MODE_LOCAL,
            c1=1.0,
            c2=c2,
            eta=eta,
            growth=GrowthPolicy(kind="additive", a=a),
            sigma=SigmaSchedule(kind="constant", sigma_bar=1.0),
        )

    def test_tilde_decrease_branch(self):
        params = self.local_params(a=0.01, eta=0.9)
        # cap at k=1 is 0.1 + 0.01 = 0.11; candidate 0.05 <= cap: shrink
        tilde = local_tilde(0.05, 0.1, 1.0, params, k=1)
        assert tilde == pytest.approx(min(0.09, 0.05), abs=1e-15)

    def test_tilde_growth_branch(self):
        params = self.local_params(a=0.01, eta=0.9, c2=0.5)
        tilde = local_tilde(0.5, 0.1, 1.0, params, k=1)
        assert tilde == pytest.approx(min(0.11, math.sqrt(1.5) * 0.1), rel=1e-14)
        assert tilde == pytest.approx(0.11, rel=1e-14)

    def test_tilde_boundary_is_decrease(self):
        params = self.local_params(a=0.01, eta=0.9)
        cap = params.growth.cap(0.1, 1)
        tilde = local_tilde(cap, 0.1, 1.0, params, k=1)
        assert tilde == pytest.approx(min(0.09, cap), abs=1e-15)

    def test_tilde_absent_candidate(self):
        params = self.local_params(a=0.01, c2=0.5)
        tilde = local_tilde(None, 0.1, 1.0, params, k=1)
        assert tilde == pytest.approx(0.11, rel=1e-14)

    def test_tilde_never_exceeds_guards_when_shrinking(self):
        params = self.local_params()
        rng = np.random.default_rng(0)
        for _ in range(200):
            alpha_prev = 10.0 ** rng.uniform(-3, 0)
            gamma_prev = rng.uniform(0.5, 1.6)
            hat = 10.0 ** rng.uniform(-3, 0)
            k = int(rng.integers(1, 50))
            tilde = local_tilde(hat, alpha_prev, gamma_prev, params, k)
            cap = params.growth.cap(alpha_prev, k)
            if hat <= cap and params.eta * alpha_prev <= hat:
                assert tilde <= min(
                    hat, math.sqrt(1 + params.c2 * gamma_prev) * alpha_prev, cap
                ) + 1e-15
            assert tilde > 0

    def test_min_consensus_line(self):
        g = topology.make_line_graph(3)
        tilde = np.array([0.1, 0.5, 0.2])
        alpha, gamma = local_min_consensus(tilde, g.neighbor_mask(), np.full(3, 0.25))
        np.testing.assert_allclose(alpha, [0.1, 0.1, 0.2], atol=1e-15)
        np.testing.assert_allclose(gamma, tilde / 0.25, atol=1e-15)

    def test_min_consensus_identity_when_equal(self):
        g = topology.make_ring_graph(4)
        tilde = np.full(4, 0.3)
        alpha, _ = local_min_consensus(tilde, g.neighbor_mask(), np.full(4, 0.3))
        np.testing.assert_allclose(alpha, tilde, atol=1e-15)

    def test_min_consensus_complete_graph(self):
        m = 5
        g = topology.Graph(m, frozenset((i, j) for i in range(m) for j in range(i + 1, m)))
        rng = np.random.default_rng(1)
        tilde = rng.uniform(0.01, 1.0, size=m)
        alpha, _ = local_min_consensus(tilde, g.neighbor_mask(), np.ones(m))
        np.testing.assert_allclose(alpha, np.full(m, tilde.min()), atol=1e-15)

    @given(st.integers(min_value=0, max_value=1_000))
    @settings(max_examples=25, deadline=None)
    def test_min_consensus_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        g = topology.make_erdos_renyi(7, 0.4, seed=seed)
        tilde = rng.uniform(0.01, 1.0, size=7)
        alpha, _ = local_min_consensus(tilde, g.neighbor_mask(), np.ones(7))
        for i in range(7):
            hood = {i, *g.neighbors(i)}
            assert alpha[i] == pytest.approx(min(tilde[j] for j in hood), abs=0)

    def test_min_propagates_in_diameter_rounds(self):
        g = topology.make_line_graph(6)
        mask = g.neighbor_mask()
        vals = np.array([0.9, 0.8, 0.7, 0.6, 0.5, 0.05])
        for _ in range(g.diameter):
            vals, _ = local_min_consensus(vals, mask, np.ones(6))
        np.testing.assert_allclose(vals, np.full(6, 0.05), atol=0)


class TestSchedulesAndPolicies:
    def test_sigma_values(self):
        assert sigma_value(SigmaSchedule(kind="constant", sigma_bar=2.0), 0.5) == 2.0
        inv = SigmaSchedule(kind="inverse_alpha_sq", sigma=0.2)
        assert sigma_value(inv, 0.1) == pytest.approx(20.0, rel=1e-15)
        # product sigma_k * alpha_k reduces to sigma / alpha
        assert sigma_value(inv, 0.1) * 0.1 == pytest.approx(2.0, rel=1e-15)

    def test_growth_unbounded(self):
        assert GrowthPolicy().cap(0.3, 5) is None

    def test_growth_additive_summable(self):
        pol = GrowthPolicy(kind="additive", a=6 / math.pi**2)
        increments = [pol.cap(0.0, k) for k in range(1, 200_000)]
        assert sum(increments) == pytest.approx(1.0, abs=1e-4)

    def test_growth_ratio_power(self):
        pol = GrowthPolicy(kind="ratio_power", beta1=10, beta2=1)
        assert pol.cap(1.0, 1) == pytest.approx(11 / 2, rel=1e-15)
        for k in range(1, 40):
            assert pol.cap(0.7, k) >= 0.7

    def test_growth_validation(self):
        with pytest.raises(ParameterError):
            GrowthPolicy(kind="ratio_power", beta1=0.5)
        with pytest.raises(ParameterError):
            GrowthPolicy(kind="additive", a=-1.0)
        with pytest.raises(ParameterError):
            GrowthPolicy(kind="typo")

    def test_params_validation(self):
        with pytest.raises(ParameterError):
            StepsizeParams(mode="local", eta=1.5, growth=GrowthPolicy(kind="additive"))
        with pytest.raises(ParameterError):
            StepsizeParams(mode="local", growth=GrowthPolicy())  # needs additive
        with pytest.raises(ParameterError):
            StepsizeParams(c1=0.0)
        with pytest.raises(ParameterError):
            StepsizeParams(mode="strongly_convex_global", sigma=SigmaSchedule())

    def test_local_state_uniform(self):
        st_local = LocalStepsizeState.uniform(4, 1e-3)
        np.testing.assert_allclose(st_local.alpha_prev, np.full(4, 1e-3))
        np.testing.assert_allclose(st_local.gamma_prev, np.ones(4))

    def test_sigma0(self):
        params = sc_params(sigma=0.2)
        params = StepsizeParams(
            mode=stepsize.MODE_STRONGLY_CONVEX,
            c1=0.5,
            alpha0=0.1,
            growth=GrowthPolicy(kind="ratio_power"),
            sigma=SigmaSchedule(kind="inverse_alpha_sq", sigma=0.2),
        )
        assert params.sigma0() == pytest.approx(0.2 / 0.01, rel=1e-15)
