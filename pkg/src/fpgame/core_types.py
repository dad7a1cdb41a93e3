"""Domain types shared by the n-player and mean-field solvers.

An agent is the tuple (x0, delta, theta, epsilon, mu, nu, sigma): initial
wealth, risk tolerance, competition weight, wealth-vs-consumption weight,
stock drift, idiosyncratic volatility, common volatility.  Equilibrium
consumption per unit wealth is always a two-parameter curve (lam, beta)
shaped by the market consumption intensity kappa.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable, Union

import numpy as np

from .errors import BlowUpHorizon, DomainError

__all__ = [
    "AgentType",
    "MarketConfig",
    "Discrete",
    "Sampler",
    "TypeDistribution",
    "ConsumptionPath",
    "EquilibriumStrategy",
    "validate_agent",
    "sample_types",
]


@dataclass(frozen=True)
class AgentType:
    x0: float = 1.0
    delta: float = 2.0
    theta: float = 0.0
    epsilon: float = 1.0
    mu: float = 0.1
    nu: float = 0.0
    sigma: float = 0.3

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentType":
        return validate_agent(cls(**d))


def validate_agent(a: AgentType) -> AgentType:
    """Range-check every field; returns the agent unchanged if admissible."""
    if not a.x0 > 0:
        raise DomainError(f"x0 must be positive, got {a.x0}")
    if not a.delta > 0:
        raise DomainError(f"delta must be positive, got {a.delta}")
    if a.delta == 1:
        raise DomainError("delta=1 excluded (logarithmic branch not covered)")
    if not 0 <= a.theta <= 1:
        raise DomainError(f"theta must lie in [0,1], got {a.theta}")
    if not a.epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {a.epsilon}")
    if not a.mu > 0:
        raise DomainError(f"mu must be positive, got {a.mu}")
    if a.nu < 0 or a.sigma < 0:
        raise DomainError("volatilities must be nonnegative")
    if a.sigma + a.nu <= 0:
        raise DomainError("sigma+nu must be positive")
    return a


@dataclass(frozen=True)
class MarketConfig:
    """kappa is shared by every agent in one equilibrium computation."""

    kappa: float
    n_agents: int | None = None


@dataclass(frozen=True)
class Discrete:
    """Finitely supported type law. Weights normalized if off by <= 1e-9."""

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.atoms) != len(self.weights) or not self.atoms:
            raise DomainError("atoms and weights must be equal-length and nonempty")
        for a in self.atoms:
            validate_agent(a)
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise DomainError("weights must be nonnegative")
        s = w.sum()
        if abs(s - 1.0) > 1e-9:
            raise DomainError(f"weights sum to {s!r}, expected 1 within 1e-9")
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "weights", tuple(float(x) for x in w / s))

    def expect(self, fn) -> float:
        return float(sum(w * fn(a) for a, w in zip(self.atoms, self.weights)))

    def as_dict(self) -> dict:
        return {
            "atoms": [a.as_dict() for a in self.atoms],
            "weights": list(self.weights),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Discrete":
        return cls(
            atoms=tuple(AgentType.from_dict(a) for a in d["atoms"]),
            weights=tuple(d["weights"]),
        )


@dataclass(frozen=True)
class Sampler:
    """Type law given by a generator: draw(rng) returns one AgentType."""

    draw: Callable[[np.random.Generator], AgentType]


TypeDistribution = Union[Discrete, Sampler]


def sample_types(d: TypeDistribution, n: int, seed: int) -> list:
    """n i.i.d. draws from the type law, deterministic in seed."""
    if n < 1:
        raise DomainError("need n >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if isinstance(d, Discrete):
        idx = rng.choice(len(d.atoms), size=n, p=np.asarray(d.weights))
        return [d.atoms[i] for i in idx]
    if isinstance(d, Sampler):
        return [validate_agent(d.draw(rng)) for _ in range(n)]
    raise DomainError(f"not a type distribution: {d!r}")


@dataclass(frozen=True)
class ConsumptionPath:
    """Equilibrium consumption rate per unit wealth.

    c(t) = (1/beta + (1/lam - 1/beta) e^{-(kappa-1) beta t})^{-1}   beta != 0
    c(t) = ((kappa-1) t + 1/lam)^{-1}                               beta == 0
    c(t) = lam                                                      kappa == 1

    c(0) = lam in every branch.  The curve blows up in finite time
    iff kappa < 1 and beta < lam.
    """

    lam: float
    beta: float
    kappa: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"lam must be positive, got {self.lam}")
        if not math.isfinite(self.beta):
            raise DomainError("beta must be finite")

    def _denominator(self, t):
        t = np.asarray(t, dtype=float)
        if self.kappa == 1.0:
            return np.full_like(t, 1.0 / self.lam)
        if self.beta == 0.0:
            return (self.kappa - 1.0) * t + 1.0 / self.lam
        a = (self.kappa - 1.0) * self.beta * t
        # two algebraically equal forms, each stable where the other is not:
        # near a = 0 the display form cancels in 1/beta, so use the
        # rearrangement e^{-a}/lam + (kappa-1) t (-expm1(-a)/a), which also
        # reduces exactly to the beta = 0 branch when a underflows; for
        # a << 0 that rearrangement cancels between two growing terms while
        # the display form keeps its coefficient exact (zero at beta = lam)
        safe = np.where(a == 0.0, 1.0, a)
        with np.errstate(over="ignore", invalid="ignore"):
            ratio = np.where(a == 0.0, 1.0, -np.expm1(-a) / safe)
            rearranged = np.exp(-a) / self.lam + (self.kappa - 1.0) * t * ratio
            display = 1.0 / self.beta + (
                1.0 / self.lam - 1.0 / self.beta
            ) * np.exp(-a)
        return np.where(a >= -0.5, rearranged, display)

    def value(self, t):
        """c(t); raises BlowUpHorizon at or past the blow-up time."""
        den = self._denominator(t)
        if np.any(den <= 0):
            raise BlowUpHorizon(
                f"consumption curve not defined at t={t!r} (t* = {self.t_star()})"
            )
        out = 1.0 / den
        return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

    __call__ = value

    def integral(self, t):
        """Exact integral of c over [0, t]."""
        tt = np.asarray(t, dtype=float)
        if self.kappa == 1.0:
            out = self.lam * tt
        elif self.beta == 0.0:
            arg = self.lam * (self.kappa - 1.0) * tt
            if np.any(arg <= -1):
                raise BlowUpHorizon(f"integral diverges before t={t!r}")
            out = np.log1p(arg) / (self.kappa - 1.0)
        else:
            # lam/beta expm1(a) rewritten as lam (kappa-1) t expm1(a)/a: no
            # overflow as beta -> 0, and an underflowing a reduces exactly
            # to the beta = 0 branch
            a = (self.kappa - 1.0) * self.beta * tt
            safe = np.where(a == 0.0, 1.0, a)
            ratio = np.where(a == 0.0, 1.0, np.expm1(a) / safe)
            arg = self.lam * (self.kappa - 1.0) * tt * ratio
            if np.any(arg <= -1):
                raise BlowUpHorizon(f"integral diverges before t={t!r}")
            out = np.log1p(arg) / (self.kappa - 1.0)
        return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

    def derivative(self, t):
        """c'(t) = (kappa - 1) c (beta - c), exact in every branch."""
        c = self.value(t)
        return (self.kappa - 1.0) * c * (self.beta - c)

    def blows_up(self) -> bool:
        return self.kappa < 1.0 and self.beta < self.lam

    def t_star(self):
        """Finite blow-up time, or None when the curve lives forever."""
        if not self.blows_up():
            return None
        if self.beta == 0.0:
            return 1.0 / ((1.0 - self.kappa) * self.lam)
        # -log1p(-beta/lam) = log(lam/(lam-beta)), stable for small beta
        return -math.log1p(-self.beta / self.lam) / ((1.0 - self.kappa) * self.beta)


@dataclass(frozen=True)
class EquilibriumStrategy:
    """Constant investment fraction plus a consumption curve."""

    pi: float
    consumption: ConsumptionPath

    def __post_init__(self):
        if not math.isfinite(self.pi):
            raise DomainError("pi must be finite")
