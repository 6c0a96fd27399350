"""Exception types raised across the package."""


class ArgumentError(ValueError):
    """Invalid argument (bad dimension, length mismatch, ...)."""


class MeshParseError(ValueError):
    """Malformed mesh file; ``lineno`` is 1-based."""

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class AssemblyError(RuntimeError):
    pass


class ModelError(ValueError):
    """Problem data inconsistent with the requested operation."""


class DefinitenessError(ArithmeticError):
    """CG met a direction of nonpositive curvature.

    Attributes
    ----------
    direction : ndarray
        The search direction ``p`` with ``(p, A p) <= 0``.
    curvature : float
        The value of ``(p, A p)``.
    """

    def __init__(self, direction, curvature, message=None):
        if message is None:
            message = f"nonpositive curvature {curvature:.3e} in CG"
        super().__init__(message)
        self.direction = direction
        self.curvature = curvature


class SecondOrderConditionError(DefinitenessError):
    """Reduced Hessian not positive definite on the inactive set."""

    def __init__(self, direction, curvature, iteration=None):
        msg = f"reduced Hessian has nonpositive curvature {curvature:.3e}"
        if iteration is not None:
            msg = f"ssn iteration {iteration}: {msg}"
        super().__init__(direction, curvature, msg)
        self.iteration = iteration


class NonconvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    residual : float
        Last residual (or step) norm observed.
    iteration : int or None
        Outer SSN iteration during which the failure happened, if known.
    """

    def __init__(self, message, residual=float("nan"), iteration=None):
        super().__init__(message)
        self.residual = residual
        self.iteration = iteration


class ConfigError(ValueError):
    pass
