"""Error taxonomy shared across solver, analysis, and simulation layers."""


class FpgameError(Exception):
    """Base class for all package errors."""


class DomainError(FpgameError):
    """Parameter outside its admissible range, or a malformed input object."""


class KappaOneError(FpgameError):
    """Operation requested on the kappa=1 branch where the closed form degenerates."""


class DegenerateMarket(FpgameError):
    """Aggregation constant psi^sigma equals 1: no equilibrium exists."""


class DegenerateConsumption(FpgameError):
    """Population average of theta*(1-delta) equals 1: lambda/beta system is singular."""


class NoConvergence(FpgameError):
    """Fixed-point iteration failed to reach tolerance; instance may be near-degenerate."""


class QuadratureError(FpgameError):
    """Numerical integration failed its accuracy target."""


class MismatchError(FpgameError):
    """Two supposedly equivalent computations disagree beyond tolerance."""


class DegenerateElasticity(FpgameError):
    """Conformity elasticity undefined: reference growth-rate differential is ~0."""


class BlowUpHorizon(FpgameError):
    """Requested time at or past the finite-time blow-up of a consumption path."""
