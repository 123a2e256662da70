"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3 and resolution alarms with 4.
"""


class CouetteError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 3


class ConfigurationError(CouetteError, ValueError):
    exit_code = 2


class NumericalError(CouetteError, ArithmeticError):
    exit_code = 3


class EigenvalueHitError(NumericalError):
    """Shifted operator is singular at the requested spectral parameter."""

    def __init__(self, message, lam=None):
        super().__init__(message)
        self.lam = lam


class BlowUpError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SaturationError(NumericalError):
    """Special-function evaluation would overflow double precision."""


class PoleError(NumericalError):
    pass


class ConditioningError(NumericalError):
    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class CFLError(NumericalError):
    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class BracketError(NumericalError):
    pass


class ContractError(CouetteError):
    exit_code = 2


class ResolutionError(CouetteError):
    exit_code = 4


class ResolutionWarning(UserWarning):
    """Grid is coarser than the boundary-layer rule asks for."""
