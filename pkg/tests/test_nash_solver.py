"""Closed-form n-player equilibrium against hand arithmetic, reductions,
best responses, and the independent fixed-point route."""
import math

import numpy as np
import pytest

from fpgame import (
    AgentType,
    ConsumptionPath,
    DegenerateConsumption,
    DegenerateMarket,
    DomainError,
    best_response,
    fixed_point_nash,
    nash_pi,
    solve_aggregates,
    solve_nash,
    theta_crit_single_stock,
)
from conftest import draw_population

# Two-player instance small enough to solve by hand.
HAND_AGENTS = [
    AgentType(delta=2.0, theta=0.5, epsilon=1.0, mu=0.1, nu=0.1, sigma=0.2),
    AgentType(delta=0.5, theta=1.0, epsilon=2.0, mu=0.2, nu=0.2, sigma=0.3),
]
# Hand derivation, n = 2 so every leave-one-out mean is the other agent:
#   A_1 = 1 + 0.5 (1-2)   = 1/2          A_2 = 1 + 1.0 (1-0.5) = 3/2
#   D_1 = 0.01 + 0.04/2   = 0.03         D_2 = 0.04 + 0.09 3/2 = 0.175
#   phi = (2 0.1 0.2/0.03 + 0.5 0.2 0.3/0.175)/2 = (4/3 + 6/35)/2 = 79/105
#   psi = 0.5 (-1) 0.04/0.03 + 0.5 0.09/0.175    = -2/3 + 9/35   = -43/105
#   sigma_pi_bar = phi/(1 - psi) = (79/105)/(148/105) = 79/148
#   pi_1 = (0.5 0.2 (-1) 2 (79/148) + 0.2)/0.03  = (13.8/148)/0.03 = 115/37
#   pi_2 = (1.0 0.3 (0.5) 2 (79/148) + 0.1)/0.175 = (38.5/148)/0.175 = 55/37
# log lam solves the pair ll_i = -d_i log(eps_i) + th_i (1-d_i) ll_j:
#   ll_1 = 0.5 (-1) ll_2,  ll_2 = -0.5 log 2 + 0.5 ll_1
#   -> ll_1 = log(2)/5, ll_2 = -0.4 log 2
HAND_SIGMA_PI_BAR = 79.0 / 148.0
HAND_PI = (115.0 / 37.0, 55.0 / 37.0)
HAND_LAM = (2.0 ** 0.2, 2.0 ** -0.4)


class TestHandInstance:
    def test_aggregates(self):
        agg = solve_aggregates(HAND_AGENTS)
        assert agg.phi_sigma_n == pytest.approx(79.0 / 105.0, rel=1e-14)
        assert agg.psi_sigma_n == pytest.approx(-43.0 / 105.0, rel=1e-14)
        assert agg.sigma_pi_bar == pytest.approx(HAND_SIGMA_PI_BAR, rel=1e-14)

    def test_pi(self):
        pi = nash_pi(HAND_AGENTS)
        assert pi[0] == pytest.approx(HAND_PI[0], rel=1e-14)
        assert pi[1] == pytest.approx(HAND_PI[1], rel=1e-14)

    def test_lam(self):
        eq = solve_nash(HAND_AGENTS, kappa=1.5)
        assert eq.lam[0] == pytest.approx(HAND_LAM[0], rel=1e-13)
        assert eq.lam[1] == pytest.approx(HAND_LAM[1], rel=1e-13)

    def test_beta_fixed_point_identity(self):
        # beta must solve beta_i = th_i (1-d_i) beta_j - d_i rho_i
        eq = solve_nash(HAND_AGENTS, kappa=1.5)
        b, r = eq.beta, eq.rho
        assert b[0] == pytest.approx(0.5 * (1 - 2.0) * b[1] - 2.0 * r[0], rel=1e-12)
        assert b[1] == pytest.approx(1.0 * (1 - 0.5) * b[0] - 0.5 * r[1], rel=1e-12)

    def test_loo_views(self):
        agg = solve_aggregates(HAND_AGENTS)
        sp = np.array([a.sigma for a in HAND_AGENTS]) * agg.pi
        assert agg.sigma_pi_loo[0] == pytest.approx(sp[1], rel=1e-14)
        assert agg.sigma_pi_loo[1] == pytest.approx(sp[0], rel=1e-14)


class TestMertonReduction:
    def test_no_competition_closed_form(self):
        agents = [
            AgentType(delta=2.0, theta=0.0, epsilon=1.0, mu=0.1, nu=0.1, sigma=0.2),
            AgentType(delta=0.5, theta=0.0, epsilon=2.0, mu=0.2, nu=0.2, sigma=0.3),
            AgentType(delta=3.0, theta=0.0, epsilon=0.5, mu=0.15, nu=0.0, sigma=0.25),
        ]
        eq = solve_nash(agents, kappa=1.5)
        for i, a in enumerate(agents):
            Sig = a.nu**2 + a.sigma**2
            assert eq.pi[i] == pytest.approx(a.mu * a.delta / Sig, rel=1e-14)
            assert eq.lam[i] == pytest.approx(a.epsilon ** (-a.delta), rel=1e-14)
            assert eq.beta[i] == pytest.approx(
                (1.0 - a.delta) * a.delta * a.mu**2 / (2.0 * Sig), rel=1e-13
            )


class TestThetaCrit:
    def test_hand_value(self):
        # n=3 identical agents, delta=2, theta=0.5, one shared stock:
        # A = 3/4, T = 3 (0.5 (-1)/(3/4))/2 = -1, so (1-T)/(sum(d/A)/2)
        # = 2/(3 (8/3)/2) = 1/2
        agents = [AgentType(delta=2.0, theta=0.5, mu=0.1, nu=0.0, sigma=0.3)] * 3
        assert theta_crit_single_stock(agents) == pytest.approx(0.5, rel=1e-14)

    def test_requires_single_stock(self):
        agents = [
            AgentType(delta=2.0, theta=0.5, mu=0.1, nu=0.0, sigma=0.3),
            AgentType(delta=2.0, theta=0.5, mu=0.2, nu=0.0, sigma=0.3),
        ]
        with pytest.raises(DomainError):
            theta_crit_single_stock(agents)

    def test_attached_to_equilibrium(self):
        agents = [AgentType(delta=2.0, theta=0.5, mu=0.1, nu=0.0, sigma=0.3)] * 3
        assert solve_nash(agents, 1.5).theta_crit == pytest.approx(0.5, rel=1e-14)
        assert solve_nash(HAND_AGENTS, 1.5).theta_crit is None


class TestBestResponse:
    def test_self_consistent_at_equilibrium(self, het_eq):
        for i, agent in enumerate(het_eq.agents):
            others = [
                (het_eq.agents[j], s.pi, s.consumption)
                for j, s in enumerate(het_eq.strategies)
                if j != i
            ]
            br = best_response(agent, het_eq.kappa, others)
            assert br.pi == pytest.approx(float(het_eq.pi[i]), rel=1e-12)
            assert br.rho == pytest.approx(float(het_eq.rho[i]), rel=1e-12)
            own = het_eq.consumption(i)
            f = het_eq.f_factor(i)
            for t in (0.0, 0.4, 1.1):
                assert br.consumption(t) == pytest.approx(own.value(t), rel=1e-9)
                assert br.f(t) == pytest.approx(f(t), rel=1e-9)

    def test_quadrature_against_closed_kernel(self):
        # constant opponents make the consumption ODE solvable by hand:
        # with q = (1-kappa) d, a = rho + th (1-1/d) c0 and
        # b = eps^{-d} c0^{th (1-d)}/d, the kernel is
        # k(t) = e^{-q a t} (1 + b/a) - b/a
        agent = AgentType(delta=0.5, theta=0.8, epsilon=1.2, mu=0.1, nu=0.1, sigma=0.3)
        c0 = 0.7
        const = ConsumptionPath(lam=c0, beta=c0, kappa=1.8)
        others = [
            (AgentType(delta=2.0, theta=0.3, mu=0.12, nu=0.05, sigma=0.25), 0.5, const),
            (AgentType(delta=0.7, theta=0.6, mu=0.09, nu=0.1, sigma=0.2), 0.6, const),
        ]
        kappa = 1.8
        br = best_response(agent, kappa, others)
        d, th, eps = agent.delta, agent.theta, agent.epsilon
        q = (1.0 - kappa) * d
        a = br.rho + th * (1.0 - 1.0 / d) * c0
        b = eps ** (-d) * c0 ** (th * (1.0 - d)) / d
        for t in (0.3, 0.9, 1.7):
            k = math.exp(-q * a * t) * (1.0 + b / a) - b / a
            assert br.f(t) == pytest.approx(k ** (1.0 / q), rel=1e-9)
            expected_c = eps ** (-d) * c0 ** (th * (1.0 - d)) / k
            assert br.consumption(t) == pytest.approx(expected_c, rel=1e-9)

    def test_kappa_one_branch(self):
        agent = AgentType(delta=0.5, theta=0.8, epsilon=1.2, mu=0.1, nu=0.1, sigma=0.3)
        const = ConsumptionPath(lam=0.7, beta=0.7, kappa=1.0)
        others = [(AgentType(delta=2.0, theta=0.3, sigma=0.25), 0.5, const)]
        br = best_response(agent, 1.0, others)
        expected = 1.2 ** (-0.5) * 0.7 ** (0.8 * 0.5)
        for t in (0.0, 0.6):
            assert br.consumption(t) == pytest.approx(expected, rel=1e-12)
        assert br.f(0.0) == 1.0

    def test_needs_opponents(self):
        with pytest.raises(DomainError):
            best_response(AgentType(), 1.5, [])


class TestFixedPointRoute:
    def test_matches_closed_form(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            agents, eq = draw_population(rng, n, kappa=1.5)
            fp = fixed_point_nash(agents, kappa=1.5)
            assert np.max(np.abs(fp.pi - eq.pi)) < 1e-9
            assert np.max(np.abs(np.log(fp.lam) - np.log(eq.lam))) < 1e-9
            assert np.max(np.abs(fp.beta - eq.beta)) < 1e-9

    def test_rejects_single_agent(self):
        with pytest.raises(DomainError):
            fixed_point_nash([AgentType()], kappa=1.5)


class TestInvariances:
    def test_initial_wealth_scale(self):
        scaled = [
            AgentType(**{**a.as_dict(), "x0": 7.0 * a.x0}) for a in HAND_AGENTS
        ]
        eq1 = solve_nash(HAND_AGENTS, kappa=1.5)
        eq2 = solve_nash(scaled, kappa=1.5)
        assert np.array_equal(eq1.pi, eq2.pi)
        assert np.array_equal(eq1.lam, eq2.lam)
        assert np.array_equal(eq1.beta, eq2.beta)

    def test_kappa_moves_only_curve_shape(self):
        eq1 = solve_nash(HAND_AGENTS, kappa=0.5)
        eq2 = solve_nash(HAND_AGENTS, kappa=2.5)
        assert np.array_equal(eq1.pi, eq2.pi)
        assert np.array_equal(eq1.lam, eq2.lam)
        assert np.array_equal(eq1.beta, eq2.beta)
        assert eq1.consumption(0).kappa == 0.5
        assert eq2.consumption(0).kappa == 2.5


class TestDegeneracies:
    def test_singular_aggregation(self):
        agents = [AgentType(delta=1e-16, theta=1.0, mu=0.1, nu=0.0, sigma=0.3)] * 2
        with pytest.raises(DegenerateMarket):
            solve_nash(agents, kappa=1.5)

    def test_singular_consumption_system(self):
        # nu > 0 keeps the aggregation regular while the consumption
        # system coefficient sum still hits one
        agents = [AgentType(delta=1e-16, theta=1.0, mu=0.1, nu=0.3, sigma=0.3)] * 2
        with pytest.raises(DegenerateConsumption):
            solve_nash(agents, kappa=1.5)

    def test_needs_two_agents(self):
        with pytest.raises(DomainError):
            solve_nash([AgentType()], kappa=1.5)
