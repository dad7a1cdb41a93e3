"""Monte Carlo verification of the equilibria.

Wealth follows exact log-Euler steps: with constant investment fractions
the log dynamics are Gaussian per step, and consumption enters through
its closed-form integral over the step, so every step is exact in law and
paths stay positive.  The only discretization left is the trapezoid
accumulation of the running consumption-utility integral inside Q.
Randomness comes from counter-based Philox streams seeded per fixed-size
path block, which makes every estimate independent of the thread count
and reproducible byte-for-byte.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core_types import AgentType, Discrete, EquilibriumStrategy, sample_types
from .errors import BlowUpHorizon, DomainError
from .mfg_solver import MfgEquilibrium
from .nash_solver import NashEquilibrium

__all__ = [
    "SimConfig",
    "PathEnsemble",
    "Perturbation",
    "DriftTest",
    "MfConsistency",
    "simulate_wealth",
    "relative_wealth",
    "q_drift_test",
    "mf_consistency_test",
]

BLOCK = 4096

# stream tags keep the RNG domains of independent purposes disjoint
_TAG_PATHS = 0
_TAG_COMMON = 1
_TAG_TYPES = 2
_TAG_IDIO = 3


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 1.0
    dt: Optional[float] = None
    n_paths: int = 100_000
    n_common: int = 64
    seed: int = 0
    scheme: str = "log_euler"
    antithetic: bool = False
    threads: int = 1

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if self.dt is not None and not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.n_paths < 1 or self.n_common < 1:
            raise DomainError("path counts must be >= 1")
        if self.scheme != "log_euler":
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")

    @property
    def n_steps(self) -> int:
        if self.dt is None:
            return 500
        return max(1, round(self.horizon / self.dt))

    @property
    def dt_eff(self) -> float:
        return self.horizon / self.n_steps


@dataclass(frozen=True)
class PathEnsemble:
    times: np.ndarray
    X: np.ndarray  # (n_paths, n_times, n_agents)
    agents: tuple
    config: SimConfig
    q: Optional[np.ndarray] = None  # same shape as X when fields were attached


@dataclass(frozen=True)
class Perturbation:
    """Deviation of a single agent from the equilibrium strategy."""

    agent: int
    dpi: float = 0.0
    c_scale: float = 1.0


def _block_ranges(n_paths):
    return [(lo, min(lo + BLOCK, n_paths)) for lo in range(0, n_paths, BLOCK)]


def _block_generators(seed, tag, n_blocks):
    root = np.random.SeedSequence(entropy=(int(seed), int(tag)))
    return [np.random.Generator(np.random.Philox(s)) for s in root.spawn(n_blocks)]


def _draw_normals(gen, m, cols, antithetic):
    if not antithetic:
        return gen.standard_normal((m, cols))
    half = gen.standard_normal(((m + 1) // 2, cols))
    z = np.empty((m, cols))
    z[0::2] = half
    z[1::2] = -half[: m // 2]
    return z


def _run_blocks(task: Callable[[int, int, int], None], ranges, threads):
    if threads <= 1:
        for b, (lo, hi) in enumerate(ranges):
            task(b, lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        list(ex.map(lambda ib: task(ib[0], *ib[1]), enumerate(ranges)))


def _check_blowup(strategies, horizon):
    for i, s in enumerate(strategies):
        ts = s.consumption.t_star()
        if ts is not None and ts <= horizon:
            raise BlowUpHorizon(
                f"agent {i} consumption blows up at t*={ts:.6g} <= horizon {horizon}"
            )


def _save_indices(n_steps, save_times, horizon):
    ts_grid = np.arange(n_steps + 1) * (horizon / n_steps)
    if save_times is None:
        idx = np.unique(np.round(np.linspace(0, n_steps, 11)).astype(int))
    else:
        idx = np.unique(
            [int(round(t / horizon * n_steps)) for t in np.asarray(save_times)]
        )
    return idx, ts_grid


def _field_grids(equilibrium, agents, strategies, ts_grid):
    """Per-agent f, g, and control-consumption grids for Q accumulation.

    f and g come from the equilibrium field; the hat-consumption uses the
    strategy actually played (so perturbed controls move hat-c but not f).
    """
    n = len(agents)
    kappa = equilibrium.kappa
    c_strat = np.stack([s.consumption.value(ts_grid) for s in strategies])
    f_grid = np.stack(
        [
            np.array([equilibrium.f_factor(i)(t) for t in ts_grid])
            for i in range(n)
        ]
    )
    g_grid = f_grid**kappa
    logc = np.log(c_strat)
    chat = np.empty_like(c_strat)
    for i, a in enumerate(agents):
        if n > 1:
            loo = (logc.sum(axis=0) - logc[i]) / (n - 1)
        else:
            loo = 0.0
        chat[i] = np.exp(logc[i] - a.theta * loo)
    return c_strat, f_grid, g_grid, chat


def simulate_wealth(
    agents: Sequence[AgentType],
    strategies: Sequence[EquilibriumStrategy],
    config: SimConfig,
    fields: Optional[NashEquilibrium] = None,
    save_times: Optional[Sequence[float]] = None,
) -> PathEnsemble:
    """Simulate all agents' wealth; attach Q values when `fields` is given.

    Q_i(t) = U_i(Xhat_i, t) + integral of V_i(chat_i Xhat_i, s) ds, with the
    integral accumulated by the trapezoid rule along every step and U, V
    evaluated with the equilibrium time factors from `fields`.
    """
    agents = tuple(agents)
    strategies = tuple(strategies)
    n = len(agents)
    if len(strategies) != n:
        raise DomainError("one strategy per agent required")
    _check_blowup(strategies, config.horizon)
    n_steps, dt = config.n_steps, config.dt_eff
    save_idx, ts_grid = _save_indices(n_steps, save_times, config.horizon)

    pi = np.array([s.pi for s in strategies])
    mu, nu, sg = (np.array([getattr(a, k) for a in agents]) for k in ("mu", "nu", "sigma"))
    x0 = np.array([a.x0 for a in agents])
    theta = np.array([a.theta for a in agents])
    delta = np.array([a.delta for a in agents])
    p = 1.0 - 1.0 / delta
    eps = np.array([a.epsilon for a in agents])

    # consumption enters through its exact integral over each step, so the
    # log-wealth increment is exact in law for constant pi
    c_int = np.stack([s.consumption.integral(ts_grid) for s in strategies])
    drift = (pi * mu - 0.5 * pi**2 * (nu**2 + sg**2)) * dt - np.diff(c_int, axis=1).T
    vol_w = pi * nu * math.sqrt(dt)
    vol_b = pi * sg * math.sqrt(dt)

    with_q = fields is not None
    if with_q:
        _, f_grid, g_grid, chat = _field_grids(fields, agents, strategies, ts_grid)
        u_coef = f_grid / p[:, None]
        v_coef = (1.0 / eps[:, None]) * chat ** p[:, None] * g_grid / p[:, None]
        th_w = theta / (n - 1) if n > 1 else np.zeros(n)

    ranges = _block_ranges(config.n_paths)
    gens = _block_generators(config.seed, _TAG_PATHS, len(ranges))
    X_out = np.empty((config.n_paths, len(save_idx), n))
    Q_out = np.empty_like(X_out) if with_q else None
    save_pos = {int(j): k for k, j in enumerate(save_idx)}

    def xhat_pow(logx):
        s = logx.sum(axis=1, keepdims=True)
        loghat = logx * (1.0 + th_w) - th_w * s
        return np.exp(p * loghat)

    def task(b, lo, hi):
        m = hi - lo
        gen = gens[b]
        logx = np.tile(np.log(x0), (m, 1))
        if with_q:
            hp = xhat_pow(logx)
            acc = np.zeros((m, n))
            vprev = v_coef[:, 0] * hp
        if 0 in save_pos:
            X_out[lo:hi, save_pos[0]] = np.exp(logx)
            if with_q:
                Q_out[lo:hi, save_pos[0]] = u_coef[:, 0] * hp
        for j in range(n_steps):
            z = _draw_normals(gen, m, n + 1, config.antithetic)
            logx += drift[j] + vol_w * z[:, :n] + vol_b * z[:, n : n + 1]
            if with_q:
                hp = xhat_pow(logx)
                vnew = v_coef[:, j + 1] * hp
                acc += 0.5 * dt * (vprev + vnew)
                vprev = vnew
            k = save_pos.get(j + 1)
            if k is not None:
                X_out[lo:hi, k] = np.exp(logx)
                if with_q:
                    Q_out[lo:hi, k] = u_coef[:, j + 1] * hp + acc

    _run_blocks(task, ranges, config.threads)
    return PathEnsemble(
        times=ts_grid[save_idx], X=X_out, agents=agents, config=config, q=Q_out
    )


def relative_wealth(ensemble: PathEnsemble, i: int) -> np.ndarray:
    """Xhat_i along saved times: X_i divided by the geometric average of the
    others raised to theta_i."""
    n = len(ensemble.agents)
    if n < 2:
        raise DomainError("relative wealth needs n >= 2")
    logx = np.log(ensemble.X)
    loo = (logx.sum(axis=2) - logx[:, :, i]) / (n - 1)
    return np.exp(logx[:, :, i] - ensemble.agents[i].theta * loo)


@dataclass(frozen=True)
class DriftTest:
    """Per-agent drift estimates of Q over consecutive checkpoint windows."""

    window_ends: np.ndarray  # (k,)
    drift: np.ndarray  # (n_agents, k)
    se: np.ndarray  # (n_agents, k)
    n_paths: int

    @property
    def z(self) -> np.ndarray:
        return self.drift / self.se

    def contains_zero(self, level: float = 1.96) -> np.ndarray:
        return np.abs(self.drift) <= level * self.se

    def below_zero(self, n_se: float = 4.0) -> np.ndarray:
        return self.drift < -n_se * self.se


def _drift_from_q(q, times):
    dq = np.diff(q, axis=1)  # (paths, k, n)
    widths = np.diff(times)
    mean = dq.mean(axis=0) / widths[:, None]
    se = dq.std(axis=0, ddof=1) / math.sqrt(q.shape[0]) / widths[:, None]
    return mean.T, se.T


def q_drift_test(
    equilibrium,
    config: SimConfig,
    perturb: Optional[Perturbation] = None,
    n_checkpoints: int = 4,
) -> DriftTest:
    """Estimate the drift of Q between checkpoints, with standard errors.

    At the equilibrium the drift is zero (martingale property); any
    admissible deviation makes it negative (supermartingale).  `perturb`
    shifts one agent's investment by dpi and/or scales their consumption
    curve by c_scale while the field stays at the equilibrium.
    """
    save_times = np.linspace(0.0, config.horizon, n_checkpoints + 1)
    if isinstance(equilibrium, NashEquilibrium):
        q = _q_paths_nash(equilibrium, config, perturb, save_times)
    elif isinstance(equilibrium, MfgEquilibrium):
        q = _q_paths_mfg(equilibrium, config, perturb, save_times)
    else:
        raise DomainError(f"unsupported equilibrium object: {equilibrium!r}")
    drift, se = _drift_from_q(q, save_times)
    return DriftTest(
        window_ends=save_times[1:], drift=drift, se=se, n_paths=config.n_paths
    )


def _q_paths_nash(eq: NashEquilibrium, config, perturb, save_times):
    agents = eq.agents
    n = len(agents)
    strategies = list(eq.strategies)
    if perturb is not None:
        s = strategies[perturb.agent]
        new_pi = s.pi + perturb.dpi
        strategies[perturb.agent] = EquilibriumStrategy(
            pi=new_pi, consumption=s.consumption
        )
    _check_blowup(strategies, config.horizon)
    n_steps, dt = config.n_steps, config.dt_eff
    save_idx, ts_grid = _save_indices(n_steps, save_times, config.horizon)

    pi = np.array([s.pi for s in strategies])
    mu, nu, sg = (np.array([getattr(a, k) for a in agents]) for k in ("mu", "nu", "sigma"))
    x0 = np.array([a.x0 for a in agents])
    theta = np.array([a.theta for a in agents])
    delta = np.array([a.delta for a in agents])
    p = 1.0 - 1.0 / delta
    eps = np.array([a.epsilon for a in agents])

    c_eq = np.stack([s.consumption.value(ts_grid) for s in eq.strategies])
    c_strat = c_eq.copy()
    if perturb is not None and perturb.c_scale != 1.0:
        c_strat[perturb.agent] *= perturb.c_scale

    f_grid = np.stack(
        [np.array([eq.f_factor(i)(t) for t in ts_grid]) for i in range(n)]
    )
    g_grid = f_grid**eq.kappa
    logc = np.log(c_strat)
    th_w = theta / (n - 1)
    loo_logc = (logc.sum(axis=0) - logc) / (n - 1)
    chat = np.exp(logc - theta[:, None] * loo_logc)

    u_coef = f_grid / p[:, None]
    v_coef = (1.0 / eps[:, None]) * chat ** p[:, None] * g_grid / p[:, None]

    c_int = np.stack([s.consumption.integral(ts_grid) for s in eq.strategies])
    if perturb is not None and perturb.c_scale != 1.0:
        c_int[perturb.agent] *= perturb.c_scale
    drift = (pi * mu - 0.5 * pi**2 * (nu**2 + sg**2)) * dt - np.diff(c_int, axis=1).T
    vol_w = pi * nu * math.sqrt(dt)
    vol_b = pi * sg * math.sqrt(dt)

    ranges = _block_ranges(config.n_paths)
    gens = _block_generators(config.seed, _TAG_PATHS, len(ranges))
    Q_out = np.empty((config.n_paths, len(save_idx), n))
    save_pos = {int(j): k for k, j in enumerate(save_idx)}

    def task(b, lo, hi):
        m = hi - lo
        gen = gens[b]
        logx = np.tile(np.log(x0), (m, 1))
        s = logx.sum(axis=1, keepdims=True)
        hp = np.exp(p * (logx * (1.0 + th_w) - th_w * s))
        acc = np.zeros((m, n))
        vprev = v_coef[:, 0] * hp
        Q_out[lo:hi, 0] = u_coef[:, 0] * hp
        for j in range(n_steps):
            z = _draw_normals(gen, m, n + 1, config.antithetic)
            logx += drift[j] + vol_w * z[:, :n] + vol_b * z[:, n : n + 1]
            s = logx.sum(axis=1, keepdims=True)
            hp = np.exp(p * (logx * (1.0 + th_w) - th_w * s))
            vnew = v_coef[:, j + 1] * hp
            acc += 0.5 * dt * (vprev + vnew)
            vprev = vnew
            k = save_pos.get(j + 1)
            if k is not None:
                Q_out[lo:hi, k] = u_coef[:, j + 1] * hp + acc

    _run_blocks(task, ranges, config.threads)
    return Q_out


def _q_paths_mfg(eq: MfgEquilibrium, config, perturb, save_times):
    if not isinstance(eq.distribution, Discrete):
        raise DomainError("drift test needs a finitely supported type law")
    atoms = eq.distribution.atoms
    weights = np.asarray(eq.distribution.weights)
    n = len(atoms)
    strategies = [eq.strategy(a) for a in atoms]
    pi = np.array([s.pi for s in strategies])
    if perturb is not None:
        pi[perturb.agent] += perturb.dpi
    _check_blowup(strategies, config.horizon)
    n_steps, dt = config.n_steps, config.dt_eff
    save_idx, ts_grid = _save_indices(n_steps, save_times, config.horizon)

    mu = np.array([a.mu for a in atoms])
    nu = np.array([a.nu for a in atoms])
    sg = np.array([a.sigma for a in atoms])
    x0 = np.array([a.x0 for a in atoms])
    theta = np.array([a.theta for a in atoms])
    delta = np.array([a.delta for a in atoms])
    p = 1.0 - 1.0 / delta
    eps = np.array([a.epsilon for a in atoms])

    c_eq = np.stack([s.consumption.value(ts_grid) for s in strategies])
    c_strat = c_eq.copy()
    if perturb is not None and perturb.c_scale != 1.0:
        c_strat[perturb.agent] *= perturb.c_scale

    mom = eq.moments
    log_xbar0 = float(eq.distribution.expect(lambda z: math.log(z.x0)))
    cbar_int = np.array([eq.cons_mean_integral(t) for t in ts_grid])
    xbar_drift = (mom.mu_pi_bar - 0.5 * mom.Sigma_pi_sq_bar) * ts_grid - cbar_int
    ctil = np.array([eq.cons_geo(t) for t in ts_grid])

    f_grid = np.stack(
        [np.array([eq.f_factor(a)(t) for t in ts_grid]) for a in atoms]
    )
    g_grid = f_grid**eq.kappa
    chat = c_strat / ctil[None, :] ** theta[:, None]
    u_coef = f_grid / p[:, None]
    v_coef = (1.0 / eps[:, None]) * chat ** p[:, None] * g_grid / p[:, None]

    c_int = np.stack([s.consumption.integral(ts_grid) for s in strategies])
    if perturb is not None and perturb.c_scale != 1.0:
        c_int[perturb.agent] *= perturb.c_scale
    drift = (pi * mu - 0.5 * pi**2 * (nu**2 + sg**2)) * dt - np.diff(c_int, axis=1).T
    sqdt = math.sqrt(dt)
    vol_w = pi * nu * sqdt
    vol_b = pi * sg  # applied to db, which already carries sqrt(dt)
    spb = mom.sigma_pi_bar

    ranges = _block_ranges(config.n_paths)
    gens = _block_generators(config.seed, _TAG_PATHS, len(ranges))
    Q_out = np.empty((config.n_paths, len(save_idx), n))
    save_pos = {int(j): k for k, j in enumerate(save_idx)}

    def task(b, lo, hi):
        m = hi - lo
        gen = gens[b]
        logx = np.tile(np.log(x0), (m, 1))
        bpath = np.zeros((m, 1))
        loghat = logx - theta * (log_xbar0 + xbar_drift[0] + spb * bpath)
        hp = np.exp(p * loghat)
        acc = np.zeros((m, n))
        vprev = v_coef[:, 0] * hp
        Q_out[lo:hi, 0] = u_coef[:, 0] * hp
        for j in range(n_steps):
            z = _draw_normals(gen, m, n + 1, config.antithetic)
            db = z[:, n : n + 1] * sqdt
            bpath += db
            logx += drift[j] + vol_w * z[:, :n] + vol_b * db
            loghat = logx - theta * (log_xbar0 + xbar_drift[j + 1] + spb * bpath)
            hp = np.exp(p * loghat)
            vnew = v_coef[:, j + 1] * hp
            acc += 0.5 * dt * (vprev + vnew)
            vprev = vnew
            k = save_pos.get(j + 1)
            if k is not None:
                Q_out[lo:hi, k] = u_coef[:, j + 1] * hp + acc

    _run_blocks(task, ranges, config.threads)
    return Q_out


@dataclass(frozen=True)
class MfConsistency:
    """Nested-MC check of the geometric-average fixed point."""

    times: np.ndarray
    max_discrepancy: float  # wealth units, max over common paths and times
    max_z: float  # discrepancy over nested-MC standard error, log domain
    mc_log_mean: np.ndarray  # (n_common, n_times)
    analytic_log: np.ndarray  # (n_common, n_times)


def mf_consistency_test(
    d: Discrete,
    equilibrium: MfgEquilibrium,
    config: SimConfig,
    strategies: Optional[Callable[[AgentType], EquilibriumStrategy]] = None,
) -> MfConsistency:
    """Compare exp E[log X_t | B] from nested MC with the analytic average.

    `config.n_common` common-noise paths each carry `config.n_paths`
    idiosyncratic paths with i.i.d. type draws.  `strategies` overrides the
    equilibrium strategy map (the averaging identity holds for any constant
    investment profile, optimal or not).
    """
    if not isinstance(d, Discrete):
        raise DomainError("consistency test needs a finitely supported law")
    strat = strategies if strategies is not None else equilibrium.strategy
    atoms = d.atoms
    smap = [strat(a) for a in atoms]
    _check_blowup(smap, config.horizon)
    n_steps, dt = config.n_steps, config.dt_eff
    save_idx, ts_grid = _save_indices(n_steps, None, config.horizon)
    save_pos = {int(j): k for k, j in enumerate(save_idx)}
    n_t = len(save_idx)
    sqdt = math.sqrt(dt)

    pis = np.array([s.pi for s in smap])
    c_ints = np.stack([s.consumption.integral(ts_grid) for s in smap])
    mus = np.array([a.mu for a in atoms])
    nus = np.array([a.nu for a in atoms])
    sgs = np.array([a.sigma for a in atoms])
    x0s = np.array([a.x0 for a in atoms])
    w = np.asarray(d.weights)

    # population aggregates for the played profile
    spb = float(np.sum(w * sgs * pis))
    mpb = float(np.sum(w * mus * pis))
    tpb = float(np.sum(w * (nus**2 + sgs**2) * pis**2))
    log_x0 = float(np.sum(w * np.log(x0s)))
    cbar_int = w @ c_ints

    drift_k = (pis * mus - 0.5 * pis**2 * (nus**2 + sgs**2)) * dt - np.diff(c_ints, axis=1).T

    b_gen = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=(int(config.seed), _TAG_COMMON)))
    )
    dB = b_gen.standard_normal((config.n_common, n_steps)) * sqdt
    B = np.concatenate(
        [np.zeros((config.n_common, 1)), np.cumsum(dB, axis=1)], axis=1
    )
    analytic_log = (
        log_x0
        + (mpb - 0.5 * tpb) * ts_grid[save_idx]
        - cbar_int[save_idx]
        + spb * B[:, save_idx]
    )

    mc_mean = np.empty((config.n_common, n_t))
    mc_se = np.empty((config.n_common, n_t))

    def one_common(c_idx):
        type_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(int(config.seed), _TAG_TYPES, c_idx))
        )
        t_idx = type_rng.choice(len(atoms), size=config.n_paths, p=w)
        acc_sum = np.zeros(n_t)
        acc_sq = np.zeros(n_t)
        ranges = _block_ranges(config.n_paths)
        root = np.random.SeedSequence(entropy=(int(config.seed), _TAG_IDIO, c_idx))
        seeds = root.spawn(len(ranges))
        for b, (lo, hi) in enumerate(ranges):
            gen = np.random.Generator(np.random.Philox(seeds[b]))
            m = hi - lo
            kinds = t_idx[lo:hi]
            logx = np.log(x0s[kinds])
            vw = pis[kinds] * nus[kinds] * sqdt
            vb = pis[kinds] * sgs[kinds]
            block_vals = np.empty((m, n_t))
            if 0 in save_pos:
                block_vals[:, save_pos[0]] = logx
            for j in range(n_steps):
                zw = _draw_normals(gen, m, 1, config.antithetic)[:, 0]
                logx = logx + drift_k[j, kinds] + vw * zw + vb * dB[c_idx, j]
                k = save_pos.get(j + 1)
                if k is not None:
                    block_vals[:, k] = logx
            acc_sum += block_vals.sum(axis=0)
            acc_sq += (block_vals**2).sum(axis=0)
        mean = acc_sum / config.n_paths
        var = (acc_sq - config.n_paths * mean**2) / (config.n_paths - 1)
        mc_mean[c_idx] = mean
        mc_se[c_idx] = np.sqrt(np.maximum(var, 0.0) / config.n_paths)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            list(ex.map(one_common, range(config.n_common)))
    else:
        for c_idx in range(config.n_common):
            one_common(c_idx)

    diff = mc_mean - analytic_log
    zs = np.abs(diff) / np.where(mc_se > 0, mc_se, np.inf)
    disc = np.abs(np.exp(mc_mean) - np.exp(analytic_log))
    return MfConsistency(
        times=ts_grid[save_idx],
        max_discrepancy=float(disc.max()),
        max_z=float(zs.max()),
        mc_log_mean=mc_mean,
        analytic_log=analytic_log,
    )
