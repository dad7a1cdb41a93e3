"""Separable power performance fields and their consistency residuals.

The wealth field is U(x,t) = scale * x^p / p * f(t) with p = 1 - 1/delta;
the consumption field V uses scale 1/epsilon and time factor g = f^kappa.
Residual checks evaluate the consumption ODE system and the best-response
PDE on closed-form inputs, with the time derivative taken by five-point
central differences so the check stays independent of the solver algebra.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .core_types import AgentType, ConsumptionPath
from .errors import DomainError, KappaOneError

__all__ = [
    "PowerField",
    "FTimeFactor",
    "PdeCoefficients",
    "eval_U",
    "fenchel_legendre_V",
    "f_from_consumption",
    "ode_residual",
    "pde_residual",
]

FD_STEP = 1e-5


@dataclass(frozen=True)
class PowerField:
    """CRRA-type field scale * x^(1-1/delta)/(1-1/delta) * time_factor(t)."""

    delta: float
    scale: float
    time_factor: Callable[[float], float]

    @property
    def exponent(self) -> float:
        return 1.0 - 1.0 / self.delta


@dataclass(frozen=True)
class FTimeFactor:
    """Wealth-field time factor in integral form.

    f(t) = exp(-rho t - theta (1-1/delta) * I_others(t) - I_own(t)/delta)

    where I_own integrates the agent's own consumption curve and I_others
    integrates the arithmetic average of the other agents' curves (the
    population average in the mean-field case).  f(0) = 1 by construction.
    """

    rho: float
    delta: float
    theta: float
    own: ConsumptionPath
    others_mean_integral: Optional[Callable[[float], float]] = None

    def __call__(self, t: float) -> float:
        expo = -self.rho * t - self.own.integral(t) / self.delta
        if self.theta != 0.0 and self.others_mean_integral is not None:
            expo -= self.theta * (1.0 - 1.0 / self.delta) * self.others_mean_integral(t)
        return math.exp(expo)


def eval_U(field: PowerField, x: float, t: float) -> float:
    if x <= 0:
        raise DomainError(f"field defined for positive wealth only, got x={x}")
    p = field.exponent
    return field.scale * x**p / p * field.time_factor(t)


def fenchel_legendre_V(field: PowerField, y: float, t: float) -> float:
    """sup_x { V(x,t) - y x } for the power field, in closed form.

    The maximizer is x* = (y/(scale g))^{-delta}; the value reduces to
    y^(1-delta) (scale g)^delta / (delta - 1).
    """
    if y <= 0:
        raise DomainError(f"dual variable must be positive, got y={y}")
    sg = field.scale * field.time_factor(t)
    return y ** (1.0 - field.delta) * sg**field.delta / (field.delta - 1.0)


def f_from_consumption(
    c: ConsumptionPath,
    agent: AgentType,
    kappa: float,
    tilde_c: Optional[Callable[[float], float]],
    t: float,
) -> float:
    """Recover f(t) algebraically from the consumption curve.

    f(t) = (c_t^{1/delta} tilde_c(t)^{theta (1-1/delta)} epsilon)^{1/(kappa-1)}

    tilde_c is the geometric average of the other agents' consumption
    (ignored when theta = 0).  Only valid off the kappa = 1 branch.
    """
    if kappa == 1.0:
        raise KappaOneError("f is not recoverable from c when kappa=1")
    base = c.value(t) ** (1.0 / agent.delta) * agent.epsilon
    if agent.theta != 0.0:
        if tilde_c is None:
            raise DomainError("tilde_c required when theta != 0")
        base *= tilde_c(t) ** (agent.theta * (1.0 - 1.0 / agent.delta))
    return base ** (1.0 / (kappa - 1.0))


def _central_fd(fn: Callable[[float], float], t: float, h: float) -> float:
    # five-point fourth-order stencil: steep time factors (decay rates in
    # the tens) leave second-order truncation above the residual tolerance
    return (
        fn(t - 2.0 * h) - 8.0 * fn(t - h) + 8.0 * fn(t + h) - fn(t + 2.0 * h)
    ) / (12.0 * h)


def ode_residual(
    f: Callable[[float], float],
    c: ConsumptionPath,
    agent: AgentType,
    rho: float,
    others: list,
    t: float,
    h: Optional[float] = None,
) -> float:
    """Absolute residual of the consumption-system ODE for f at time t.

    |f' + (rho + theta (1-1/delta) cbar(t)) f
        + (epsilon^{-delta}/delta) ctilde(t)^{theta (1-delta)} f^{(kappa-1) delta + 1}|

    cbar / ctilde are the arithmetic / geometric averages of the curves in
    `others` (empty list allowed when theta = 0).  f' is a central finite
    difference with step h, default 1e-5 * max(1, t).
    """
    if h is None:
        h = FD_STEP * max(1.0, abs(t))
    d, th, eps = agent.delta, agent.theta, agent.epsilon
    fp = _central_fd(f, t, h)
    ft = f(t)
    if others and th != 0.0:
        vals = [o.value(t) for o in others]
        cbar = sum(vals) / len(vals)
        ctil = math.exp(sum(math.log(v) for v in vals) / len(vals))
    else:
        cbar, ctil = 0.0, 1.0
    lin = rho + th * (1.0 - 1.0 / d) * cbar
    power = (c.kappa - 1.0) * d + 1.0
    src = eps ** (-d) / d * ctil ** (th * (1.0 - d)) * ft**power
    return abs(fp + lin * ft + src)


@dataclass(frozen=True)
class PdeCoefficients:
    """Population aggregates entering the best-response PDE.

    Averages run over the reference population: leave-one-out averages in
    the n-player game (with w = 1/(n-1)), plain expectations in the mean
    field (w = 0).
    """

    mu_pi: float
    sigma_pi: float
    nu_pi_sq: float
    total_pi_sq: float
    w: float
    cons_mean: Callable[[float], float]
    cons_geo: Callable[[float], float]


def pde_residual(
    agent: AgentType,
    kappa: float,
    f: Callable[[float], float],
    coeffs: PdeCoefficients,
    x: float,
    t: float,
    h: Optional[float] = None,
) -> float:
    """Absolute residual of the consistency PDE at (x, t).

    U_t = K1 x U_x + K2 U_x^2/U_xx + K3 x^2 U_xx
          - theta cbar(t) x U_x - FL_V(U_x ctilde(t)^theta, t)

    with U in separable power form (analytic x-derivatives, finite
    difference in t) and K1..K3 assembled from the supplied aggregates.
    """
    if x <= 0:
        raise DomainError(f"x must be positive, got {x}")
    if h is None:
        h = FD_STEP * max(1.0, abs(t))
    d, th, eps = agent.delta, agent.theta, agent.epsilon
    Sg = agent.nu**2 + agent.sigma**2
    p = 1.0 - 1.0 / d
    S, M, P, V = coeffs.sigma_pi, coeffs.mu_pi, coeffs.total_pi_sq, coeffs.nu_pi_sq
    m = agent.mu - th * agent.sigma * S
    k1 = (
        th * M
        - th * agent.sigma * S * m / Sg
        - 0.5 * th * P
        - 0.5 * th**2 * (S**2 + coeffs.w * V)
    )
    k2 = m**2 / (2.0 * Sg)
    k3 = 0.5 * ((th * S) ** 2 * (agent.sigma**2 / Sg - 1.0) - th**2 * coeffs.w * V)

    ft = f(t)
    u_t = x**p / p * _central_fd(f, t, h)
    u_x = x ** (p - 1.0) * ft
    u_xx = (p - 1.0) * x ** (p - 2.0) * ft
    vfield = PowerField(delta=d, scale=1.0 / eps, time_factor=lambda s: f(s) ** kappa)
    dual = fenchel_legendre_V(vfield, u_x * coeffs.cons_geo(t) ** th, t)
    rhs = (
        k1 * x * u_x
        + k2 * u_x**2 / u_xx
        + k3 * x**2 * u_xx
        - th * coeffs.cons_mean(t) * x * u_x
        - dual
    )
    return abs(u_t - rhs)
