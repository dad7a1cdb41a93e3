"""Closed-form n-player equilibrium and its best-response verification route.

The closed route solves the aggregation identities for sigma-pi-bar, then
reads off per-agent investment fractions, drift constants rho, and the
consumption parameters (lam, beta) from explicit formulas.  The oracle
route iterates the per-agent best-response maps (damped Picard, with a
probe-and-solve fallback for instances where the affine iteration is
expanding) and must land on the same equilibrium.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core_types import (
    AgentType,
    ConsumptionPath,
    EquilibriumStrategy,
    validate_agent,
)
from .errors import (
    DegenerateConsumption,
    DegenerateMarket,
    DomainError,
    NoConvergence,
    QuadratureError,
)
from .forward_fields import FTimeFactor, PdeCoefficients

__all__ = [
    "NPlayerAggregates",
    "NashEquilibrium",
    "BestResponse",
    "solve_aggregates",
    "nash_pi",
    "nash_rho",
    "nash_lambda_beta",
    "nash_consumption",
    "solve_nash",
    "best_response",
    "fixed_point_nash",
    "theta_crit_single_stock",
]

DEGENERACY_TOL = 1e-14


def _arrays(agents: Sequence[AgentType]):
    d = np.array([a.delta for a in agents])
    th = np.array([a.theta for a in agents])
    eps = np.array([a.epsilon for a in agents])
    mu = np.array([a.mu for a in agents])
    nu = np.array([a.nu for a in agents])
    sg = np.array([a.sigma for a in agents])
    return d, th, eps, mu, nu, sg


@dataclass(frozen=True)
class NPlayerAggregates:
    """Population averages of the equilibrium profile plus leave-one-out views.

    Leave-one-out entries follow the identity bar^{-i} = (n bar - own_i)/(n-1).
    """

    n: int
    phi_sigma_n: float
    psi_sigma_n: float
    sigma_pi_bar: float
    mu_pi_bar: float
    nu_pi_sq_bar: float
    Sigma_pi_sq_bar: float
    pi: np.ndarray
    sigma_pi_loo: np.ndarray
    mu_pi_loo: np.ndarray
    nu_pi_sq_loo: np.ndarray
    Sigma_pi_sq_loo: np.ndarray


def _aggregates_from_pi(agents, pi) -> NPlayerAggregates:
    """Direct averages of a given investment profile (no equilibrium algebra)."""
    n = len(agents)
    d, th, eps, mu, nu, sg = _arrays(agents)
    D = nu**2 + sg**2 * (1.0 + th * (1.0 - d) / (n - 1))
    phi = float(np.mean(d * sg * mu / D))
    psi = float(np.sum(th * (1.0 - d) * sg**2 / D) / (n - 1))
    sp, mp = sg * pi, mu * pi
    vp, tp = (nu * pi) ** 2, (nu**2 + sg**2) * pi**2
    loo = lambda x: (np.sum(x) - x) / (n - 1)
    return NPlayerAggregates(
        n=n,
        phi_sigma_n=phi,
        psi_sigma_n=psi,
        sigma_pi_bar=float(np.mean(sp)),
        mu_pi_bar=float(np.mean(mp)),
        nu_pi_sq_bar=float(np.mean(vp)),
        Sigma_pi_sq_bar=float(np.mean(tp)),
        pi=np.asarray(pi, dtype=float),
        sigma_pi_loo=loo(sp),
        mu_pi_loo=loo(mp),
        nu_pi_sq_loo=loo(vp),
        Sigma_pi_sq_loo=loo(tp),
    )


def solve_aggregates(agents: Sequence[AgentType]) -> NPlayerAggregates:
    """Closed-form equilibrium aggregates; raises DegenerateMarket at psi=1."""
    n = len(agents)
    if n < 2:
        raise DomainError("finite game needs n >= 2 agents")
    for a in agents:
        validate_agent(a)
    d, th, eps, mu, nu, sg = _arrays(agents)
    D = nu**2 + sg**2 * (1.0 + th * (1.0 - d) / (n - 1))
    phi = float(np.mean(d * sg * mu / D))
    psi = float(np.sum(th * (1.0 - d) * sg**2 / D) / (n - 1))
    if abs(1.0 - psi) < DEGENERACY_TOL:
        raise DegenerateMarket(f"psi_sigma_n = {psi!r}: aggregation is singular")
    spb = phi / (1.0 - psi)
    pi = (th * sg * (1.0 - d) * (n / (n - 1)) * spb + mu * d) / D
    return _aggregates_from_pi(agents, pi)


def nash_pi(agents: Sequence[AgentType]) -> np.ndarray:
    return solve_aggregates(agents).pi


def _rho_single(agent: AgentType, S, M, P, V, w) -> float:
    """Drift constant given surrounding-population averages.

    S, M, P, V are the averages of sigma*pi, mu*pi, (nu^2+sigma^2)*pi^2,
    (nu*pi)^2 over the relevant population; w is the interaction weight
    (1/(n-1) finite game, 0 mean field).
    """
    d, th, sg = agent.delta, agent.theta, agent.sigma
    Sig = agent.nu**2 + agent.sigma**2
    m = agent.mu - th * sg * S
    br = (
        th * (M - sg * S * m / Sig - P / 2.0)
        - th**2 / 2.0 * (S**2 + w * V)
        - d * m**2 / (2.0 * Sig)
        - ((th * S) ** 2 * (sg**2 / Sig - 1.0) - th**2 * w * V) / (2.0 * d)
    )
    return -(1.0 - 1.0 / d) * br


def nash_rho(agents: Sequence[AgentType], agg: NPlayerAggregates) -> np.ndarray:
    w = 1.0 / (agg.n - 1)
    return np.array(
        [
            _rho_single(
                a,
                agg.sigma_pi_loo[i],
                agg.mu_pi_loo[i],
                agg.Sigma_pi_sq_loo[i],
                agg.nu_pi_sq_loo[i],
                w,
            )
            for i, a in enumerate(agents)
        ]
    )


def nash_lambda_beta(agents: Sequence[AgentType], rhos: np.ndarray):
    """Per-agent (lam_i, beta_i) from the aggregation solve.

    Raises DegenerateConsumption when the interaction average
    (1/(n-1)) sum theta_k (1-delta_k)/A_k hits 1.
    """
    n = len(agents)
    d, th, eps, mu, nu, sg = _arrays(agents)
    rhos = np.asarray(rhos, dtype=float)
    A = 1.0 + th * (1.0 - d) / (n - 1)
    Tbar = float(np.sum(th * (1.0 - d) / A) / (n - 1))
    if abs(Tbar - 1.0) < DEGENERACY_TOL:
        raise DegenerateConsumption(f"interaction average {Tbar!r}: system singular")
    Etil = float(np.mean(d * np.log(eps) / A))
    rdb = float(np.mean(rhos * d / A))
    scale = (n / (n - 1)) * th * (1.0 - d) / (Tbar - 1.0)
    log_lam = (-d * np.log(eps) + scale * Etil) / A
    beta = (scale * rdb - rhos * d) / A
    return [(float(l), float(b)) for l, b in zip(np.exp(log_lam), beta)]


def nash_consumption(lam: float, beta: float, kappa: float) -> ConsumptionPath:
    return ConsumptionPath(lam=lam, beta=beta, kappa=kappa)


@dataclass(frozen=True)
class NashEquilibrium:
    agents: tuple
    kappa: float
    strategies: tuple
    rho: np.ndarray
    lam: np.ndarray
    beta: np.ndarray
    aggregates: NPlayerAggregates
    theta_crit: Optional[float] = None

    @property
    def pi(self) -> np.ndarray:
        return self.aggregates.pi

    def consumption(self, i: int) -> ConsumptionPath:
        return self.strategies[i].consumption

    def others_mean_integral(self, i: int) -> Callable[[float], float]:
        others = [s.consumption for k, s in enumerate(self.strategies) if k != i]
        return lambda t: sum(c.integral(t) for c in others) / len(others)

    def f_factor(self, i: int) -> FTimeFactor:
        a = self.agents[i]
        return FTimeFactor(
            rho=float(self.rho[i]),
            delta=a.delta,
            theta=a.theta,
            own=self.consumption(i),
            others_mean_integral=self.others_mean_integral(i),
        )

    def pde_coefficients(self, i: int) -> PdeCoefficients:
        agg = self.aggregates
        others = [s.consumption for k, s in enumerate(self.strategies) if k != i]
        n1 = len(others)

        def cons_mean(t):
            return sum(c.value(t) for c in others) / n1

        def cons_geo(t):
            return math.exp(sum(math.log(c.value(t)) for c in others) / n1)

        return PdeCoefficients(
            mu_pi=float(agg.mu_pi_loo[i]),
            sigma_pi=float(agg.sigma_pi_loo[i]),
            nu_pi_sq=float(agg.nu_pi_sq_loo[i]),
            total_pi_sq=float(agg.Sigma_pi_sq_loo[i]),
            w=1.0 / (agg.n - 1),
            cons_mean=cons_mean,
            cons_geo=cons_geo,
        )


def _is_single_stock(agents) -> bool:
    mu0, sg0 = agents[0].mu, agents[0].sigma
    return all(a.mu == mu0 and a.sigma == sg0 and a.nu == 0.0 for a in agents)


def _assemble(agents, kappa, agg) -> NashEquilibrium:
    rho = nash_rho(agents, agg)
    lb = nash_lambda_beta(agents, rho)
    lam = np.array([l for l, _ in lb])
    beta = np.array([b for _, b in lb])
    strategies = tuple(
        EquilibriumStrategy(pi=float(agg.pi[i]), consumption=nash_consumption(lam[i], beta[i], kappa))
        for i in range(len(agents))
    )
    tc = theta_crit_single_stock(agents) if _is_single_stock(agents) else None
    return NashEquilibrium(
        agents=tuple(agents),
        kappa=kappa,
        strategies=strategies,
        rho=rho,
        lam=lam,
        beta=beta,
        aggregates=agg,
        theta_crit=tc,
    )


def solve_nash(agents: Sequence[AgentType], kappa: float) -> NashEquilibrium:
    """Full closed-form equilibrium for a finite population."""
    return _assemble(agents, kappa, solve_aggregates(agents))


def theta_crit_single_stock(agents: Sequence[AgentType]) -> float:
    """Critical competition threshold for a shared-stock population."""
    if not _is_single_stock(agents):
        raise DomainError("theta_crit requires identical (mu, sigma) and nu = 0")
    n = len(agents)
    d, th, eps, mu, nu, sg = _arrays(agents)
    A = 1.0 + th * (1.0 - d) / (n - 1)
    num = 1.0 - float(np.sum(th * (1.0 - d) / A)) / (n - 1)
    den = float(np.sum(d / A)) / (n - 1)
    return num / den


# ---------------------------------------------------------------------------
# Best-response route


def _adaptive_simpson(fn, a, b, tol=1e-11, max_depth=48):
    """Recursive Simpson quadrature with absolute tolerance."""

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lmid, rmid = 0.5 * (lo + mid), 0.5 * (mid + hi)
        fl, fr = fn(lmid), fn(rmid)
        left = simpson(lo, mid, flo, fl, fmid)
        right = simpson(mid, hi, fmid, fr, fhi)
        if depth >= max_depth:
            raise QuadratureError(f"Simpson depth {max_depth} exhausted on [{lo},{hi}]")
        if abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, mid, flo, fl, fmid, left, eps / 2.0, depth + 1) + recurse(
            mid, hi, fmid, fr, fhi, right, eps / 2.0, depth + 1
        )

    if a == b:
        return 0.0
    fa, fm, fb = fn(a), fn(0.5 * (a + b)), fn(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)


@dataclass(frozen=True)
class BestResponse:
    pi: float
    consumption: Callable[[float], float]
    f: Callable[[float], float]
    g: Callable[[float], float]
    rho: float


def best_response(agent: AgentType, kappa_i: float, others) -> BestResponse:
    """Single agent's optimal reply to fixed opponent strategies.

    `others` is a list of (AgentType, pi, ConsumptionPath) triples for the
    remaining agents.  Investment comes from the first-order condition;
    consumption solves the induced Bernoulli ODE via the substitution
    k(t) = f(t)^{(1-kappa_i) delta}, evaluated with adaptive Simpson
    quadrature (this route accepts a per-agent kappa_i).
    """
    validate_agent(agent)
    if not others:
        raise DomainError("best_response needs at least one opponent")
    n1 = len(others)
    w = 1.0 / n1
    d, th, eps = agent.delta, agent.theta, agent.epsilon
    Sig = agent.nu**2 + agent.sigma**2

    S = sum(o.sigma * p for o, p, _ in others) / n1
    M = sum(o.mu * p for o, p, _ in others) / n1
    P = sum((o.nu**2 + o.sigma**2) * p**2 for o, p, _ in others) / n1
    V = sum((o.nu * p) ** 2 for o, p, _ in others) / n1
    pi = (th * agent.sigma * S * (1.0 - d) + agent.mu * d) / Sig
    rho = _rho_single(agent, S, M, P, V, w)

    paths = [c for _, _, c in others]

    def others_integral(t):
        return sum(c.integral(t) for c in paths) * w

    def cbar_integral(t):
        return others_integral(t)

    def ctilde(t):
        return math.exp(sum(math.log(c.value(t)) for c in paths) * w)

    def A_int(t):
        return rho * t + th * (1.0 - 1.0 / d) * cbar_integral(t)

    def b_coeff(s):
        return eps ** (-d) / d * ctilde(s) ** (th * (1.0 - d))

    if kappa_i == 1.0:
        # kappa -> 1 limit of the general branch: k(t) == 1, f from the
        # integral representation, consumption free of f entirely.
        def consumption(t):
            return eps ** (-d) * ctilde(t) ** (th * (1.0 - d))

        def f_fn(t):
            own_int = _adaptive_simpson(consumption, 0.0, t) if t != 0.0 else 0.0
            return math.exp(-A_int(t) - own_int / d)

        return BestResponse(pi=float(pi), consumption=consumption, f=f_fn, g=f_fn, rho=rho)

    q = (1.0 - kappa_i) * d

    def k_fn(t):
        integ = _adaptive_simpson(lambda s: math.exp(q * A_int(s)) * b_coeff(s), 0.0, t)
        return math.exp(-q * A_int(t)) * (1.0 - q * integ)

    def consumption(t):
        return eps ** (-d) * ctilde(t) ** (th * (1.0 - d)) / k_fn(t)

    def f_fn(t):
        return k_fn(t) ** (1.0 / q)

    def g_fn(t):
        return f_fn(t) ** kappa_i

    return BestResponse(pi=float(pi), consumption=consumption, f=f_fn, g=g_fn, rho=rho)


def _probe_affine(mapping, dim):
    """Recover (A, b) of an affine map by dim+1 evaluations."""
    b = mapping(np.zeros(dim))
    cols = []
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        cols.append(mapping(e) - b)
    return np.column_stack(cols), b


def _solve_affine_fixed_point(mapping, dim):
    A, b = _probe_affine(mapping, dim)
    try:
        x = np.linalg.solve(np.eye(dim) - A, b)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"affine fixed-point solve singular: {exc}") from exc
    return x


def _iterate(mapping, x0, tol, max_iter, damping=0.5):
    """Damped Picard with a probe-and-solve fallback for expanding maps."""
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(max_iter):
        nxt = (1.0 - damping) * x + damping * mapping(x)
        delta = float(np.max(np.abs(nxt - x)))
        x = nxt
        if not np.all(np.isfinite(x)):
            break
        if delta < tol:
            return x
    x = _solve_affine_fixed_point(mapping, len(x))
    resid = float(np.max(np.abs(mapping(x) - x)))
    if not np.isfinite(resid) or resid > 100.0 * tol:
        raise NoConvergence(
            f"best-response iteration stalled (fixed-point residual {resid:.3e})"
        )
    return x


def fixed_point_nash(
    agents: Sequence[AgentType],
    kappa: float,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> NashEquilibrium:
    """Equilibrium by iterating best responses; independent of solve_aggregates.

    Investment, log(lam), and beta each satisfy an affine best-response map;
    the iteration composes them in that order, recomputing the drift
    constants from the current profile by direct leave-one-out sums.
    """
    n = len(agents)
    if n < 2:
        raise DomainError("finite game needs n >= 2 agents")
    for a in agents:
        validate_agent(a)
    d, th, eps, mu, nu, sg = _arrays(agents)
    Sig = nu**2 + sg**2

    def pi_map(pi):
        loo = (np.sum(sg * pi) - sg * pi) / (n - 1)
        return (th * sg * loo * (1.0 - d) + mu * d) / Sig

    pi = _iterate(pi_map, mu * d / Sig, tol, max_iter)
    agg = _aggregates_from_pi(agents, pi)
    rho = nash_rho(agents, agg)

    def loglam_map(ll):
        loo = (np.sum(ll) - ll) / (n - 1)
        return -d * np.log(eps) + th * (1.0 - d) * loo

    def beta_map(b):
        loo = (np.sum(b) - b) / (n - 1)
        return th * (1.0 - d) * loo - d * rho

    log_lam = _iterate(loglam_map, -d * np.log(eps), tol, max_iter)
    beta = _iterate(beta_map, -d * rho, tol, max_iter)

    lam = np.exp(log_lam)
    strategies = tuple(
        EquilibriumStrategy(
            pi=float(pi[i]),
            consumption=ConsumptionPath(lam=float(lam[i]), beta=float(beta[i]), kappa=kappa),
        )
        for i in range(n)
    )
    tc = theta_crit_single_stock(agents) if _is_single_stock(agents) else None
    return NashEquilibrium(
        agents=tuple(agents),
        kappa=kappa,
        strategies=strategies,
        rho=rho,
        lam=lam,
        beta=beta,
        aggregates=agg,
        theta_crit=tc,
    )
