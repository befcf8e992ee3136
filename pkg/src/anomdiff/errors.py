"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class AnomdiffError(Exception):
    exit_code = 1


class ConfigError(AnomdiffError):
    """Configuration file violates the schema; ``key_path`` names the offending key."""

    exit_code = 2

    def __init__(self, message, key_path=None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)


class ParameterDomainError(AnomdiffError, ValueError):
    exit_code = 2


class InputError(AnomdiffError, ValueError):
    exit_code = 3


class DataQualityError(AnomdiffError):
    exit_code = 3


class AnalysisError(AnomdiffError):
    exit_code = 3


class NumericAccuracyError(AnomdiffError, ArithmeticError):
    """Quadrature did not reach the requested accuracy."""

    exit_code = 4

    def __init__(self, message, error_estimate=None):
        self.error_estimate = error_estimate
        super().__init__(message)


class FitFailure(AnomdiffError):
    """Optimizer did not converge. ``best`` holds the last iterate."""

    exit_code = 4

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class IntegratorError(AnomdiffError):
    """Raised when a trajectory integrator breaks a conservation or monotonicity invariant."""

    exit_code = 4

    def __init__(self, message, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class ResourceError(AnomdiffError):
    exit_code = 4
