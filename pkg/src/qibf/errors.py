"""Exception types shared across the package."""


class QibfError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(QibfError, ValueError):
    """An operand's shape does not match the model at the given step."""

    def __init__(self, operand, expected, actual, k=None):
        self.operand = operand
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        self.k = k
        at = f" at step {k}" if k is not None else ""
        super().__init__(
            f"{operand}{at}: expected shape {self.expected}, got {self.actual}"
        )


class DegenerateDensityError(QibfError, ArithmeticError):
    """A grid density lost essentially all of its mass.

    Usually means the support of the posterior left the fixed grid; widen
    the grid (more points or a larger half-width) and rerun.
    """

    def __init__(self, message, mass=None):
        self.mass = mass
        super().__init__(message)


class SingularGainError(QibfError, ArithmeticError):
    """The predictor gain is (numerically) zero, so the transition density
    over the prediction-error axis degenerates."""


class UnsupportedDimensionError(QibfError, ValueError):
    """Grid receivers only support scalar state and output."""


class LloydMaxConvergenceError(QibfError, RuntimeError):
    """Lloyd iteration failed to converge; carries the last iterate."""

    def __init__(self, message, last_quantizer=None):
        self.last_quantizer = last_quantizer
        super().__init__(message)


class InvalidQuantizerError(QibfError, ValueError):
    """A quantizer cell has zero probability under the working density."""


class OracleDegenerateError(QibfError, ArithmeticError):
    """The particle oracle's effective sample size collapsed."""


class ConfigError(QibfError, ValueError):
    """An experiment configuration failed validation."""


class ExperimentError(QibfError, RuntimeError):
    """A module failure during an experiment run, tagged with method and step."""

    def __init__(self, method, k, cause):
        self.method = method
        self.k = k
        self.cause = cause
        super().__init__(f"method {method} failed at step {k}: {cause}")
