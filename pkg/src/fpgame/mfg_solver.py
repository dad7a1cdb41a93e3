"""Mean-field equilibrium over a type distribution and n -> infinity checks.

Moment constants are exact weighted sums for finitely supported laws and
Monte Carlo averages (with standard errors) for sampled laws.  The
equilibrium strategy is exposed as a function of the agent type, so any
draw from the law can be evaluated lazily.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core_types import (
    AgentType,
    ConsumptionPath,
    Discrete,
    EquilibriumStrategy,
    Sampler,
    TypeDistribution,
    sample_types,
)
from .errors import DegenerateConsumption, DegenerateMarket, DomainError
from .forward_fields import FTimeFactor, PdeCoefficients
from .nash_solver import _rho_single, solve_nash

__all__ = [
    "MfgMoments",
    "MfgEquilibrium",
    "ConvergenceTable",
    "mfg_moments",
    "mfg_pi",
    "mfg_rho",
    "mfg_lambda_beta",
    "mfg_consumption",
    "mfg_theta_crit",
    "solve_mfg",
    "convergence_study",
]

DEGENERACY_TOL = 1e-14


@dataclass(frozen=True)
class MfgMoments:
    psi_sigma: float
    phi_sigma: float
    psi_mu: float
    phi_mu: float
    sigma_pi_bar: float
    mu_pi_bar: float
    Sigma_pi_sq_bar: float
    eps_tilde: float
    rho_delta_bar: float
    theta_one_minus_delta_bar: float
    stderr: Optional[dict] = None


def _moment_fns():
    Sg = lambda z: z.nu**2 + z.sigma**2
    return {
        "psi_sigma": lambda z: z.theta * (1 - z.delta) * z.sigma**2 / Sg(z),
        "phi_sigma": lambda z: z.delta * z.mu * z.sigma / Sg(z),
        "psi_mu": lambda z: z.theta * (1 - z.delta) * z.mu * z.sigma / Sg(z),
        "phi_mu": lambda z: z.delta * z.mu**2 / Sg(z),
        "theta_one_minus_delta_bar": lambda z: z.theta * (1 - z.delta),
        "delta_log_eps": lambda z: z.delta * math.log(z.epsilon),
    }


def mfg_moments(
    d: TypeDistribution, mc_samples: int = 100_000, seed: int = 0
) -> MfgMoments:
    """Population moment constants; exact for Discrete, MC for Sampler."""
    fns = _moment_fns()
    if isinstance(d, Discrete):
        expect = d.expect
        stderr = None
    elif isinstance(d, Sampler):
        draws = sample_types(d, mc_samples, seed)

        def expect(fn):
            return float(np.mean([fn(z) for z in draws]))

        def se_of(fn):
            vals = np.array([fn(z) for z in draws])
            return float(vals.std(ddof=1) / math.sqrt(len(vals)))

        stderr = {name: se_of(fn) for name, fn in fns.items()}
    else:
        raise DomainError(f"not a type distribution: {d!r}")

    psi_sigma = expect(fns["psi_sigma"])
    if abs(1.0 - psi_sigma) < DEGENERACY_TOL:
        raise DegenerateMarket(f"psi_sigma = {psi_sigma!r}: no strong equilibrium")
    phi_sigma = expect(fns["phi_sigma"])
    psi_mu = expect(fns["psi_mu"])
    phi_mu = expect(fns["phi_mu"])
    spb = phi_sigma / (1.0 - psi_sigma)
    mu_pi_bar = spb * psi_mu + phi_mu

    def pi_of(z):
        return (z.theta * (1 - z.delta) * z.sigma * spb + z.mu * z.delta) / (
            z.nu**2 + z.sigma**2
        )

    Sigma_pi_sq_bar = expect(lambda z: (z.nu**2 + z.sigma**2) * pi_of(z) ** 2)

    def rho_of(z):
        return _rho_single(z, spb, mu_pi_bar, Sigma_pi_sq_bar, 0.0, 0.0)

    rho_delta_bar = expect(lambda z: rho_of(z) * z.delta)
    eps_tilde = math.exp(expect(fns["delta_log_eps"]))
    tmd = expect(fns["theta_one_minus_delta_bar"])
    if stderr is not None:
        stderr["Sigma_pi_sq_bar"] = se_of(
            lambda z: (z.nu**2 + z.sigma**2) * pi_of(z) ** 2
        )
        stderr["rho_delta_bar"] = se_of(lambda z: rho_of(z) * z.delta)
    return MfgMoments(
        psi_sigma=psi_sigma,
        phi_sigma=phi_sigma,
        psi_mu=psi_mu,
        phi_mu=phi_mu,
        sigma_pi_bar=spb,
        mu_pi_bar=mu_pi_bar,
        Sigma_pi_sq_bar=Sigma_pi_sq_bar,
        eps_tilde=eps_tilde,
        rho_delta_bar=rho_delta_bar,
        theta_one_minus_delta_bar=tmd,
        stderr=stderr,
    )


def mfg_pi(z: AgentType, moments: MfgMoments) -> float:
    return (
        z.theta * (1 - z.delta) * z.sigma * moments.sigma_pi_bar + z.mu * z.delta
    ) / (z.nu**2 + z.sigma**2)


def mfg_rho(z: AgentType, moments: MfgMoments) -> float:
    return _rho_single(
        z, moments.sigma_pi_bar, moments.mu_pi_bar, moments.Sigma_pi_sq_bar, 0.0, 0.0
    )


def mfg_lambda_beta(z: AgentType, moments: MfgMoments):
    tmd = moments.theta_one_minus_delta_bar
    if abs(tmd - 1.0) < DEGENERACY_TOL:
        raise DegenerateConsumption(
            f"E[theta(1-delta)] = {tmd!r}: consumption system singular"
        )
    scale = z.theta * (1 - z.delta) / (tmd - 1.0)
    lam = z.epsilon ** (-z.delta) * moments.eps_tilde**scale
    beta = scale * moments.rho_delta_bar - mfg_rho(z, moments) * z.delta
    return float(lam), float(beta)


def mfg_consumption(lam: float, beta: float, kappa: float) -> ConsumptionPath:
    return ConsumptionPath(lam=lam, beta=beta, kappa=kappa)


def mfg_theta_crit(d: Discrete) -> float:
    """Critical competition threshold, single-stock laws only."""
    if not isinstance(d, Discrete):
        raise DomainError("theta_crit implemented for finitely supported laws")
    mu0, sg0 = d.atoms[0].mu, d.atoms[0].sigma
    if not all(a.mu == mu0 and a.sigma == sg0 and a.nu == 0.0 for a in d.atoms):
        raise DomainError("theta_crit requires identical (mu, sigma) and nu = 0")
    tmd = d.expect(lambda z: z.theta * (1 - z.delta))
    return (1.0 - tmd) / d.expect(lambda z: z.delta)


@dataclass(frozen=True)
class MfgEquilibrium:
    distribution: TypeDistribution
    kappa: float
    moments: MfgMoments
    theta_crit: Optional[float] = None

    def pi(self, z: AgentType) -> float:
        return mfg_pi(z, self.moments)

    def rho(self, z: AgentType) -> float:
        return mfg_rho(z, self.moments)

    def lambda_beta(self, z: AgentType):
        return mfg_lambda_beta(z, self.moments)

    def strategy(self, z: AgentType) -> EquilibriumStrategy:
        lam, beta = self.lambda_beta(z)
        return EquilibriumStrategy(
            pi=self.pi(z), consumption=mfg_consumption(lam, beta, self.kappa)
        )

    # population consumption functionals (finitely supported laws)

    def _atom_paths(self):
        if not isinstance(self.distribution, Discrete):
            raise DomainError("population consumption needs a Discrete law")
        d = self.distribution
        return [
            (self.strategy(a).consumption, w) for a, w in zip(d.atoms, d.weights)
        ]

    def cons_mean(self, t: float) -> float:
        return sum(w * c.value(t) for c, w in self._atom_paths())

    def cons_geo(self, t: float) -> float:
        return math.exp(sum(w * math.log(c.value(t)) for c, w in self._atom_paths()))

    def cons_mean_integral(self, t: float) -> float:
        return sum(w * c.integral(t) for c, w in self._atom_paths())

    def f_factor(self, z: AgentType) -> FTimeFactor:
        lam, beta = self.lambda_beta(z)
        return FTimeFactor(
            rho=self.rho(z),
            delta=z.delta,
            theta=z.theta,
            own=mfg_consumption(lam, beta, self.kappa),
            others_mean_integral=self.cons_mean_integral,
        )

    def pde_coefficients(self) -> PdeCoefficients:
        # w = 0 in the mean field, so the idiosyncratic-square entry is unused
        m = self.moments
        return PdeCoefficients(
            mu_pi=m.mu_pi_bar,
            sigma_pi=m.sigma_pi_bar,
            nu_pi_sq=0.0,
            total_pi_sq=m.Sigma_pi_sq_bar,
            w=0.0,
            cons_mean=self.cons_mean,
            cons_geo=self.cons_geo,
        )


def solve_mfg(
    d: TypeDistribution, kappa: float, mc_samples: int = 100_000, seed: int = 0
) -> MfgEquilibrium:
    moments = mfg_moments(d, mc_samples=mc_samples, seed=seed)
    tc = None
    if isinstance(d, Discrete):
        mu0, sg0 = d.atoms[0].mu, d.atoms[0].sigma
        if all(a.mu == mu0 and a.sigma == sg0 and a.nu == 0.0 for a in d.atoms):
            tc = mfg_theta_crit(d)
    return MfgEquilibrium(distribution=d, kappa=kappa, moments=moments, theta_crit=tc)


@dataclass(frozen=True)
class ConvergenceTable:
    ns: tuple
    pi_error: tuple
    c_error: tuple
    exponent_pi: Optional[float]
    exponent_c: Optional[float]


def _fit_exponent(ns, errs):
    errs = np.asarray(errs)
    if np.any(errs <= 0):
        return None
    return float(np.polyfit(np.log(ns), np.log(errs), 1)[0])


def convergence_study(
    d: TypeDistribution,
    ns: Sequence[int],
    seed: int = 0,
    kappa: float = 1.5,
    reps: int = 20,
    t_grid: Sequence[float] = (0.0, 0.25, 0.5),
) -> ConvergenceTable:
    """Sup-type error of the n-player equilibrium against the mean field.

    Common random numbers across the nested n values: each repetition draws
    max(ns) types once and the n-player games use prefixes of that draw.
    """
    ns = sorted(int(n) for n in ns)
    if ns[0] < 2:
        raise DomainError("n-player comparison needs n >= 2")
    eq = solve_mfg(d, kappa)
    master = np.random.SeedSequence(seed)
    rep_seeds = master.generate_state(reps)
    pi_err = {n: 0.0 for n in ns}
    c_err = {n: 0.0 for n in ns}
    for r in range(reps):
        pool = sample_types(d, ns[-1], int(rep_seeds[r]))
        for n in ns:
            agents = pool[:n]
            neq = solve_nash(agents, kappa)
            pe, ce = 0.0, 0.0
            for i, z in enumerate(agents):
                pe = max(pe, abs(neq.pi[i] - eq.pi(z)))
                c_n = neq.consumption(i)
                c_m = eq.strategy(z).consumption
                for t in t_grid:
                    ce = max(ce, abs(c_n.value(t) - c_m.value(t)))
            pi_err[n] += pe / reps
            c_err[n] += ce / reps
    pi_list = tuple(pi_err[n] for n in ns)
    c_list = tuple(c_err[n] for n in ns)
    return ConvergenceTable(
        ns=tuple(ns),
        pi_error=pi_list,
        c_error=c_list,
        exponent_pi=_fit_exponent(ns, pi_list),
        exponent_c=_fit_exponent(ns, c_list),
    )
