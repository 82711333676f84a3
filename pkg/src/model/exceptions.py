class NonHermitianError(ValueError):
    """Raised when a matrix that must be Hermitian is not, within tolerance."""


class SymbolError(ValueError):
    """Raised when a symbol or one of its components violates its invariants."""


class GridSizeError(ValueError):
    """Raised when a grid is malformed or an assembly exceeds the size guards."""


class EllipticityError(ValueError):
    """Raised when a quadratic-form field is not uniformly positive definite."""


class FitError(ValueError):
    """Raised when a power-law fit has too few usable samples."""


class BoundaryContactError(ValueError):
    """Raised when a sampled sublevel set touches the sampling bounds."""


class DegenerateExtremumError(ValueError):
    """Raised when an extremum has a singular or indefinite Hessian."""


class ElasticityError(ValueError):
    """Raised for invalid Lame parameters or stiffness fields."""


class ConfigError(ValueError):
    """Raised when a model description cannot be parsed."""


class ProjectorError(RuntimeError):
    """Raised when a contour integral cannot be evaluated reliably."""


class QuadratureError(RuntimeError):
    """Raised when a sphere quadrature does not converge under node doubling."""


class EigenSolverError(RuntimeError):
    """Raised when an eigensolver fails to converge."""


class ReductionError(RuntimeError):
    """Raised when a closed-form eigenvector fails verification."""
