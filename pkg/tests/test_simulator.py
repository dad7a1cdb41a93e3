"""Path generation exactness, reproducibility, and the martingale tests."""
import math

import numpy as np
import pytest

from fpgame import (
    AgentType,
    BlowUpHorizon,
    ConsumptionPath,
    DomainError,
    EquilibriumStrategy,
    Perturbation,
    SimConfig,
    mf_consistency_test,
    q_drift_test,
    relative_wealth,
    simulate_wealth,
    solve_nash,
)


def _const_strategy(pi, c):
    return EquilibriumStrategy(pi=pi, consumption=ConsumptionPath(lam=c, beta=c, kappa=1.5))


class TestSimConfig:
    def test_default_steps(self):
        assert SimConfig(horizon=1.0).n_steps == 500
        assert SimConfig(horizon=1.0, dt=0.01).n_steps == 100
        assert SimConfig(horizon=2.0, dt=0.01).dt_eff == pytest.approx(0.01)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"horizon": 0.0},
            {"dt": -0.1},
            {"n_paths": 0},
            {"n_common": 0},
            {"scheme": "euler"},
            {"threads": 0},
        ],
    )
    def test_rejects_bad_config(self, kwargs):
        with pytest.raises(DomainError):
            SimConfig(**kwargs)


class TestSimulateWealth:
    def test_deterministic_path_is_exact(self):
        # pi = 0 removes all randomness; consumption enters through its
        # exact integral, so X = x0 exp(-I(t)) to machine precision
        a = AgentType(x0=1.7, delta=2.0, theta=0.0, sigma=0.3)
        s = EquilibriumStrategy(pi=0.0, consumption=ConsumptionPath(0.7, 0.4, 1.6))
        cfg = SimConfig(horizon=1.0, dt=1.0 / 50, n_paths=4, seed=1)
        ens = simulate_wealth([a], [s], cfg)
        expected = 1.7 * np.exp(-s.consumption.integral(ens.times))
        assert np.max(np.abs(ens.X[:, :, 0] - expected)) < 1e-14

    def test_terminal_law_moments(self):
        # constant controls give log X_T ~ N(log x0 + (pi mu - c
        # - pi^2 Sigma/2) T, pi^2 Sigma T); check both moments at 4 sigma
        a = AgentType(x0=1.0, delta=2.0, theta=0.0, mu=0.12, nu=0.15, sigma=0.3)
        pi, c, T = 0.8, 0.5, 1.0
        n = 40_000
        cfg = SimConfig(horizon=T, dt=1.0 / 50, n_paths=n, seed=7, threads=2)
        ens = simulate_wealth([a], [_const_strategy(pi, c)], cfg)
        logx = np.log(ens.X[:, -1, 0])
        Sig = a.nu**2 + a.sigma**2
        mean = (pi * a.mu - c - 0.5 * pi**2 * Sig) * T
        var = pi**2 * Sig * T
        assert abs(logx.mean() - mean) < 4.0 * math.sqrt(var / n)
        # variance of the sample variance for Gaussians is 2 var^2/(n-1)
        assert abs(logx.var(ddof=1) - var) < 4.0 * var * math.sqrt(2.0 / (n - 1))

    def test_deterministic_in_seed_and_threads(self, het_eq):
        cfg1 = SimConfig(horizon=1.0, dt=0.02, n_paths=6000, seed=3, threads=1)
        cfg4 = SimConfig(horizon=1.0, dt=0.02, n_paths=6000, seed=3, threads=4)
        e1 = simulate_wealth(het_eq.agents, het_eq.strategies, cfg1)
        e1b = simulate_wealth(het_eq.agents, het_eq.strategies, cfg1)
        e4 = simulate_wealth(het_eq.agents, het_eq.strategies, cfg4)
        assert np.array_equal(e1.X, e1b.X)
        assert np.array_equal(e1.X, e4.X)
        other = simulate_wealth(
            het_eq.agents, het_eq.strategies,
            SimConfig(horizon=1.0, dt=0.02, n_paths=6000, seed=4),
        )
        assert not np.array_equal(e1.X, other.X)

    def test_antithetic_pairs_mirror_exactly(self):
        # consecutive antithetic paths cancel every Gaussian increment:
        # log X_even + log X_odd = 2 (log x0 + total drift)
        a = AgentType(x0=1.3, delta=2.0, theta=0.0, mu=0.12, nu=0.15, sigma=0.3)
        pi, c = 0.8, 0.5
        s = _const_strategy(pi, c)
        cfg = SimConfig(horizon=1.0, dt=0.05, n_paths=64, seed=5, antithetic=True)
        ens = simulate_wealth([a], [s], cfg)
        Sig = a.nu**2 + a.sigma**2
        total = math.log(1.3) + (pi * a.mu - 0.5 * pi**2 * Sig) * 1.0 - s.consumption.integral(1.0)
        pair_sum = np.log(ens.X[0::2, -1, 0]) + np.log(ens.X[1::2, -1, 0])
        assert np.max(np.abs(pair_sum - 2.0 * total)) < 1e-12

    def test_save_times(self):
        a = AgentType()
        s = _const_strategy(0.5, 0.6)
        cfg = SimConfig(horizon=2.0, dt=0.01, n_paths=8, seed=0)
        ens = simulate_wealth([a], [s], cfg, save_times=[0.0, 0.5, 2.0])
        assert np.allclose(ens.times, [0.0, 0.5, 2.0])
        assert ens.X.shape == (8, 3, 1)

    def test_blow_up_before_horizon_rejected(self):
        a = AgentType()
        s = EquilibriumStrategy(pi=0.1, consumption=ConsumptionPath(2.0, 1.0, 0.0))
        with pytest.raises(BlowUpHorizon):
            simulate_wealth([a], [s], SimConfig(horizon=1.0, n_paths=4))

    def test_strategy_count_must_match(self):
        with pytest.raises(DomainError):
            simulate_wealth([AgentType()], [], SimConfig(n_paths=4))

    def test_q_attachment(self, homog_eq):
        cfg = SimConfig(horizon=1.0, dt=0.05, n_paths=100, seed=2)
        ens = simulate_wealth(homog_eq.agents, homog_eq.strategies, cfg, fields=homog_eq)
        assert ens.q is not None and ens.q.shape == ens.X.shape
        # at t=0 the running integral vanishes and Q = f(0) xhat^p / p
        p = 1.0 - 1.0 / homog_eq.agents[0].delta
        assert np.allclose(ens.q[:, 0, :], 1.0 / p, rtol=1e-12)


class TestRelativeWealth:
    def test_two_agent_recompute(self, het_eq):
        cfg = SimConfig(horizon=1.0, dt=0.1, n_paths=50, seed=9)
        ens = simulate_wealth(het_eq.agents, het_eq.strategies, cfg)
        i = 1
        theta = het_eq.agents[i].theta
        logx = np.log(ens.X)
        loo = (logx.sum(axis=2) - logx[:, :, i]) / (len(het_eq.agents) - 1)
        expected = np.exp(logx[:, :, i] - theta * loo)
        assert np.allclose(relative_wealth(ens, i), expected, rtol=1e-13)

    def test_needs_two_agents(self):
        ens = simulate_wealth(
            [AgentType()], [_const_strategy(0.5, 0.6)], SimConfig(n_paths=4, dt=0.5)
        )
        with pytest.raises(DomainError):
            relative_wealth(ens, 0)


class TestQDriftTest:
    def test_optimum_plausible_and_deviation_penalized(self, het_eq):
        cfg = SimConfig(horizon=1.0, dt=1.0 / 100, n_paths=20_000, seed=11, threads=2)
        opt = q_drift_test(het_eq, cfg)
        assert opt.drift.shape == (3, 4)
        assert np.all(np.abs(opt.z) < 4.0)
        pert = q_drift_test(het_eq, cfg, perturb=Perturbation(agent=1, c_scale=2.0))
        assert np.all(pert.below_zero()[1])

    def test_pi_perturbation_moves_one_agent(self, het_eq):
        cfg = SimConfig(horizon=1.0, dt=1.0 / 100, n_paths=20_000, seed=11, threads=2)
        pert = q_drift_test(het_eq, cfg, perturb=Perturbation(agent=0, dpi=0.5))
        assert np.all(pert.z[0] < -4.0)

    def test_rejects_unknown_equilibrium(self):
        with pytest.raises(DomainError):
            q_drift_test(object(), SimConfig(n_paths=4))


class TestMfConsistency:
    def test_geometric_average_matches_analytic(self, twopoint_law, twopoint_eq):
        cfg = SimConfig(
            horizon=1.0, dt=1.0 / 50, n_paths=8192, n_common=8, seed=0, threads=2
        )
        res = mf_consistency_test(twopoint_law, twopoint_eq, cfg)
        assert res.mc_log_mean.shape == (8, 11)
        # 88 standard normal comparisons: all within 5 sigma
        assert res.max_z < 5.0
        assert res.max_discrepancy < 0.01

    def test_holds_for_suboptimal_profile(self, twopoint_law, twopoint_eq):
        # the averaging identity is a property of the dynamics, not of
        # optimality: any constant investment profile satisfies it
        def strat(z):
            return _const_strategy(0.25, 0.55)

        cfg = SimConfig(
            horizon=1.0, dt=1.0 / 50, n_paths=8192, n_common=4, seed=1, threads=2
        )
        res = mf_consistency_test(twopoint_law, twopoint_eq, cfg, strategies=strat)
        assert res.max_z < 5.0
