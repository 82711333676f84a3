from dataclasses import dataclass
from typing import Callable

import numpy as np

from model.exceptions import ElasticityError


@dataclass(frozen=True)
class LamePoint:
    """Lame constants at a boundary point; requires mu > 0 and 2 mu + lambda > 0."""
    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ElasticityError(f'Shear modulus must be positive, got mu = {self.mu}')
        if not 2.0 * self.mu + self.lam > 0:
            raise ElasticityError(f'2*mu + lambda must be positive, got {2.0 * self.mu + self.lam}')


@dataclass(frozen=True)
class KappaField:
    """
    Stiffness ratio kappa(x) on the chart square [-w, w]^2.

    The evaluator maps (..., 2) -> (...). The Hessian at the declared
    extremum is taken by finite differences when not supplied.
    """
    evaluator: Callable[[np.ndarray], np.ndarray]
    chart_half_width: float = 1.0
    maximizer: tuple[float, float] | None = None
    hessian: np.ndarray | None = None
    label: str = 'kappa'

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.evaluator(x), dtype=float), x.shape[:-1])

    def rescaled(self, s: float) -> 'KappaField':
        """Same field in chart coordinates y = x / s."""
        return KappaField(
            evaluator=lambda y: self.evaluator(np.asarray(y) * s),
            chart_half_width=self.chart_half_width / s,
            maximizer=None if self.maximizer is None else tuple(np.asarray(self.maximizer) / s),
            hessian=None if self.hessian is None else np.asarray(self.hessian) * s * s,
            label=f'{self.label}(x*{s:g})'
        )


@dataclass(frozen=True)
class NPOrderRecord:
    """Accumulation order at an extremum of kappa, with the data the coefficient depends on."""
    theta: float
    dimension: int
    extremum: str
    tip: float
    hessian: np.ndarray
    depends_on: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            'theta': self.theta,
            'dimension': self.dimension,
            'extremum': self.extremum,
            'tip': self.tip,
            'hessian': np.asarray(self.hessian).tolist(),
            'depends_on': list(self.depends_on)
        }
