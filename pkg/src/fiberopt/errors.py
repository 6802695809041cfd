"""Exception types shared across the package."""


class FiberOptError(Exception):
    """Base class for all package errors."""


class SingularTensor(FiberOptError):
    """A fourth-order tensor (or its 2x2 contraction) could not be inverted."""


class InvalidMaterial(FiberOptError):
    """Material parameters violate a physical precondition."""


class SolverFailure(FiberOptError):
    """A sparse factorization or linear solve failed."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class QuadratureFailure(FiberOptError):
    """Adaptive quadrature did not reach its tolerance within the depth limit."""


class DegenerateFraction(FiberOptError):
    """Smoothed characteristic normalisation underflowed."""


class ParseError(FiberOptError):
    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(FiberOptError):
    def __init__(self, key, reason):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason
