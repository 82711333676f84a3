from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from model.exceptions import EllipticityError

DEFAULT_NORMALIZATION = '(2pi)^-d phase-space factor; h_+^d'
PRINTED_NORMALIZATION = 'bare measure; h_+^(d/2)'


@dataclass(frozen=True)
class DirectionFunction:
    """
    Function on the unit sphere S^(d-1), vectorized over leading axes.

    A scalar field maps (..., d) -> (...); a form-valued field maps
    (..., d) -> (..., d, d) symmetric positive definite matrices.
    """
    d: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    form_valued: bool = False
    label: str = ''

    def __call__(self, omega: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        value = np.asarray(self.evaluator(omega), dtype=float)
        shape = omega.shape[:-1] + ((self.d, self.d) if self.form_valued else ())
        return np.broadcast_to(value, shape)

    def ellipticity_constant(self, omega: np.ndarray) -> float:
        """
        Smallest eigenvalue of the form over the sampled directions.

        Raises:
            EllipticityError: If the field is not form valued, not symmetric
                or not positive definite at some sampled direction.
        """
        if not self.form_valued:
            raise EllipticityError(f'{self.label or "field"} is not form valued')
        forms = self(omega)
        if np.max(np.abs(forms - np.swapaxes(forms, -1, -2))) > 1e-12 * max(1.0, float(np.max(np.abs(forms)))):
            raise EllipticityError(f'{self.label or "form"} is not symmetric')
        lowest = np.linalg.eigvalsh(forms)[..., 0]
        index = int(np.argmin(lowest))
        if lowest.reshape(-1)[index] <= 0:
            direction = np.asarray(omega).reshape(-1, self.d)[index]
            raise EllipticityError(
                f'{self.label or "form"} is not positive definite at direction {np.round(direction, 12).tolist()}: '
                f'lowest eigenvalue {lowest.reshape(-1)[index]:.6g}'
            )
        return float(lowest.min())

    def scaled(self, factor: float) -> 'DirectionFunction':
        return DirectionFunction(
            d=self.d,
            evaluator=lambda omega: factor * np.asarray(self.evaluator(omega), dtype=float),
            form_valued=self.form_valued,
            label=f'{factor:g}*{self.label}'
        )


def constant_direction_function(d: int, value: float | np.ndarray, form_valued: bool = False, label: str = '') -> DirectionFunction:
    """Direction function that ignores the direction; a scalar form value means value * I."""
    if form_valued:
        matrix = np.asarray(value, dtype=float)
        matrix = matrix * np.eye(d) if matrix.ndim == 0 else matrix
        return DirectionFunction(d=d, evaluator=lambda omega: np.broadcast_to(matrix, np.shape(omega)[:-1] + (d, d)), form_valued=True, label=label or f'const{matrix.tolist()}')
    scalar = float(value)
    return DirectionFunction(d=d, evaluator=lambda omega: np.full(np.shape(omega)[:-1], scalar), label=label or f'const{scalar:g}')


@dataclass(frozen=True)
class ScalarHamiltonian:
    """
    Classical Hamiltonian H(x, xi), vectorized over leading axes.

    With branches > 1 the evaluator returns (..., branches): the eigenvalue
    branches of a matrix Hamiltonian, whose sublevel indicators are summed.
    """
    d: int
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    branches: int = 1
    label: str = ''

    def __call__(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.asarray(self.evaluator(x, xi), dtype=float)

    def rescaled(self, s: float) -> 'ScalarHamiltonian':
        """H_s(x, xi) = H(x / s, xi)."""
        return ScalarHamiltonian(
            d=self.d,
            evaluator=lambda x, xi: self.evaluator(np.asarray(x) / s, xi),
            branches=self.branches,
            label=f'{self.label}(x/{s:g})'
        )


@dataclass(frozen=True)
class PhaseSpaceBounds:
    """Sampling region: the ball |x| <= x_radius times the ellipsoid xi^T M xi <= xi_radius^2."""
    x_radius: float
    xi_radius: float
    metric: np.ndarray | None = None

    def __post_init__(self):
        if not (self.x_radius > 0 and self.xi_radius > 0):
            raise ValueError(f'Sampling radii must be positive, got {self.x_radius}, {self.xi_radius}')

    def scaled_x(self, s: float) -> 'PhaseSpaceBounds':
        return PhaseSpaceBounds(x_radius=self.x_radius * s, xi_radius=self.xi_radius, metric=self.metric)


@dataclass(frozen=True)
class CoefficientReport:
    """Predicted pair (C, theta) with provenance."""
    C: float
    theta: float
    method: str
    stderr: float = 0.0
    normalization: str = DEFAULT_NORMALIZATION
    seeds: tuple[int, ...] = ()
    nodes: int = 0
    samples: int = 0
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError(f'stderr must be non-negative, got {self.stderr}')

    def to_dict(self) -> dict:
        return {
            'C': self.C,
            'theta': self.theta,
            'method': self.method,
            'stderr': self.stderr,
            'normalization': self.normalization,
            'seeds': list(self.seeds),
            'nodes': self.nodes,
            'samples': self.samples,
            'notes': list(self.notes)
        }


@dataclass(frozen=True)
class PhaseVolumeEstimate:
    """Merged Monte-Carlo tallies before normalization."""
    volume: float
    stderr: float
    accepted: float
    samples: int
    shell: float
    shell_fraction: float
    seeds: tuple[int, ...] = field(default_factory=tuple)
