"""
Exception hierarchy for the sde_taylor package.
"""


class SdeTaylorError(Exception):
    pass


class ParameterError(SdeTaylorError, ValueError):
    """Thrown if arguments fail some basic sanity checks"""
    pass


class ConfigError(SdeTaylorError):
    """Configuration limit exceeded or malformed config file"""
    pass


class ProfileError(SdeTaylorError, ValueError):
    """Weight profile is not one of the families the schemes use"""
    pass


class CoefficientUnavailableError(SdeTaylorError):
    pass


class CacheError(SdeTaylorError):
    """Coefficient cache could not be read or written"""
    pass


class DependencyError(SdeTaylorError):
    """A lower-order integral needed by a conversion formula is not configured"""
    pass


class DivergenceError(SdeTaylorError):
    """Non-finite state produced by a scheme step"""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class PatternNotClosedFormError(SdeTaylorError):
    """No exact mean-square error formula for this index pattern"""
    pass


class ToleranceUnreachableError(SdeTaylorError):
    """select_q ran past its limit without meeting the target"""

    def __init__(self, message, q_limit=None, best_error=None, target=None):
        super().__init__(message)
        self.q_limit = q_limit
        self.best_error = best_error
        self.target = target


class UnsupportedRequestError(SdeTaylorError):
    """Request the harness cannot serve, e.g. a model with no exact solution"""
    pass
