"""Qualitative behaviour of equilibrium consumption curves.

Every curve c(t) = (1/beta + (1/lam - 1/beta) e^{-(kappa-1) beta t})^{-1}
falls into one of a handful of regimes depending on kappa vs 1 and beta vs
lam: constant, monotone convergence, or finite-time blow-up of the closed
form.  `classify` returns the regime; `eis` and `elasticity_of_conformity`
quantify the consumption response to the population's curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .core_types import ConsumptionPath
from .errors import DegenerateElasticity, DomainError, MismatchError

__all__ = [
    "RegimeReport",
    "classify",
    "monotonicity_check",
    "eis",
    "elasticity_of_conformity",
]

PathLike = Union[ConsumptionPath, Callable[[float], float]]


@dataclass(frozen=True)
class RegimeReport:
    admissible: bool
    strong_equilibrium: bool
    # ("constant", level) | ("converges_to", limit) | ("finite_time_blow_up", t_star)
    asymptote: Tuple[str, float]
    monotonicity: str  # "increasing" | "decreasing" | "constant"

    def label(self) -> str:
        kind, value = self.asymptote
        if kind == "constant":
            return f"constant {value:.6g}"
        if kind == "converges_to":
            verb = "decreases" if self.monotonicity == "decreasing" else "increases"
            return f"{verb} to {value:.6g}"
        return f"blows up at t*={value:.6g}"


def _denominator_direct(lam, beta, kappa, t):
    """Blow-up denominator straight from the display, no rearrangement.

    Kept independent of ConsumptionPath's log1p-based evaluator so the
    bisection root is a genuinely separate route to t*.
    """
    if beta == 0.0:
        return 1.0 / lam + (kappa - 1.0) * t
    coeff = 1.0 / lam - 1.0 / beta
    try:
        e = math.exp(-(kappa - 1.0) * beta * t)
    except OverflowError:
        return math.copysign(math.inf, coeff)
    return 1.0 / beta + coeff * e


def _bisect_blowup(c: ConsumptionPath) -> float:
    lo, hi = 0.0, 1e-3
    for _ in range(600):
        if _denominator_direct(c.lam, c.beta, c.kappa, hi) < 0.0:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise MismatchError("no sign change found for blow-up denominator")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _denominator_direct(c.lam, c.beta, c.kappa, mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, lo):
            break
    return 0.5 * (lo + hi)


def classify(c: ConsumptionPath) -> RegimeReport:
    """Regime of the closed-form curve.

    The only inadmissible combination is kappa < 1 with beta = 0 (the curve
    blows up and the equilibrium construction excludes it); other blow-up
    cells remain admissible up to t*.  Strong equilibria are kappa >= 1 or
    kappa < 1 with beta > lam.
    """
    lam, beta, kap = c.lam, c.beta, c.kappa
    if kap == 1.0 or beta == lam:
        mono = "constant"
    elif (kap - 1.0) * (beta - lam) > 0.0:
        mono = "increasing"
    else:
        mono = "decreasing"

    if kap == 1.0 or beta == lam:
        return RegimeReport(True, kap >= 1.0, ("constant", lam), mono)
    if kap > 1.0:
        limit = beta if beta > 0.0 else 0.0
        return RegimeReport(True, True, ("converges_to", limit), mono)
    if beta > lam:
        return RegimeReport(True, True, ("converges_to", 0.0), mono)

    analytic = c.t_star()
    numeric = _bisect_blowup(c)
    if abs(numeric - analytic) > 1e-10 * max(1.0, abs(analytic)):
        raise MismatchError(
            f"blow-up roots disagree: bisection {numeric!r} vs closed form {analytic!r}"
        )
    return RegimeReport(beta != 0.0, False, ("finite_time_blow_up", analytic), mono)


def monotonicity_check(c: ConsumptionPath, grid) -> str:
    """Confirm the classified monotonicity on a sampled grid.

    Raises MismatchError when the sampled values contradict classify();
    returns the confirmed monotonicity string otherwise.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise DomainError("grid must contain at least two times")
    vals = c.value(grid)
    diffs = np.diff(vals)
    tol = 1e-12 * float(np.max(np.abs(vals)))
    report = classify(c)
    claim = report.monotonicity
    if claim == "constant":
        ok = bool(np.all(np.abs(diffs) <= tol))
    elif claim == "increasing":
        ok = bool(np.all(diffs >= -tol) and np.any(diffs > tol))
    else:
        ok = bool(np.all(diffs <= tol) and np.any(diffs < -tol))
    if not ok:
        raise MismatchError(
            f"sampled values do not look {claim} (diff range "
            f"[{diffs.min():.3e}, {diffs.max():.3e}])"
        )
    return claim


def _growth_rate(path: PathLike, t: float, fd_step: float) -> float:
    if isinstance(path, ConsumptionPath):
        return path.derivative(t) / path.value(t)
    lo = math.log(path(t - fd_step))
    hi = math.log(path(t + fd_step))
    return (hi - lo) / (2.0 * fd_step)


def elasticity_of_conformity(
    c: PathLike, c_tilde: PathLike, t: float, h: Optional[float] = None
) -> float:
    """gamma_t: response of own consumption growth to the population's.

    Both growth rates are treated as functions of time and differentiated
    over the same window [t, t+h]; gamma_t is the ratio of the two
    increments.  Identical paths give exactly 1.
    """
    if h is None:
        h = 1e-4 * max(1.0, t)
    fd_step = 0.125 * h
    num = _growth_rate(c, t + h, fd_step) - _growth_rate(c, t, fd_step)
    den = _growth_rate(c_tilde, t + h, fd_step) - _growth_rate(c_tilde, t, fd_step)
    if abs(den) < 1e-12:
        raise DegenerateElasticity(
            f"population growth-rate increment {den:.3e} below 1e-12"
        )
    if num == den:
        return 1.0
    return num / den


def eis(
    c: PathLike,
    c_tilde: PathLike,
    kappa: float,
    theta: float,
    delta: float,
    t: float,
    h: Optional[float] = None,
) -> float:
    """Elasticity of intertemporal substitution at time t.

    Without competition the value is (1-kappa)*delta for all t; competition
    scales it by 1/(1 + kappa*theta*(1-delta)/gamma_t).  The gamma_t
    estimate is only computed when its coefficient is nonzero, so the
    theta=0, kappa=0, and kappa=1 identities hold exactly.
    """
    base = (1.0 - kappa) * delta
    if base == 0.0:
        return 0.0
    coeff = kappa * theta * (1.0 - delta)
    if coeff == 0.0:
        return base
    gamma = elasticity_of_conformity(c, c_tilde, t, h)
    return base / (1.0 + coeff / gamma)
