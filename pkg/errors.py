"""
Exception hierarchy for lmflow.
"""


class LMFlowError(Exception):
    """Base class for every error raised by lmflow"""


class ConfigurationError(LMFlowError):
    """Invalid run or experiment configuration"""


class SingularMatrixError(LMFlowError):
    """I + (h/2) D Q could not be factored; h is too large for this (D, Q)"""


class StationaryPointError(LMFlowError):
    """The gradient vanishes at the current iterate"""


class RootFailureError(LMFlowError):
    """The multiplier equation could not be solved"""


class NoBracketError(RootFailureError):
    """No sign change was found before the bracket search gave up"""


class DegenerateError(RootFailureError):
    """The multiplier equation is identically zero along the search ray"""


class MissingConstantError(LMFlowError):
    """A constant needed for a bound (L, mu, f*, x*) is unknown"""


class LineSearchError(LMFlowError):
    """A backtracking line search hit its multiplication cap"""


class StalledError(LMFlowError):
    """No trial step resolves a decrease of f in floating point"""
