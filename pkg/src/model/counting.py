from dataclasses import dataclass, field

import numpy as np

SIDES = ('above', 'below')


@dataclass(frozen=True)
class CountingFunction:
    """
    Eigenvalues beyond distance t from an essential-spectrum tip.

    side='above' counts #{lambda > reference + t}, side='below' counts
    #{lambda < reference - t}; both inequalities are strict. Queries with
    t < resolution_floor are answered but flagged.
    """
    eigenvalues: np.ndarray
    reference: float
    side: str
    resolution_floor: float = 0.0

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f'side must be one of {SIDES}, got {self.side!r}')
        object.__setattr__(self, 'eigenvalues', np.sort(np.asarray(self.eigenvalues, dtype=float)))

    def count(self, t: float) -> int:
        if not t > 0:
            raise ValueError(f'Counting needs t > 0, got {t}')
        if self.side == 'above':
            return int(self.eigenvalues.size - np.searchsorted(self.eigenvalues, self.reference + t, side='right'))
        return int(np.searchsorted(self.eigenvalues, self.reference - t, side='left'))

    def is_flagged(self, t: float) -> bool:
        return t < self.resolution_floor


@dataclass(frozen=True)
class FitResult:
    """Least-squares power law n ~ C t^(-theta) on a log-log window."""
    C: float
    theta: float
    window: tuple[float, float]
    r_squared: float
    point_count: int
    intercept_stderr: float = 0.0
    slope_stderr: float = 0.0
    notes: tuple[str, ...] = field(default_factory=tuple)

    def confidence_interval(self, z: float = 1.96) -> tuple[float, float]:
        """Interval for C from the intercept standard error."""
        spread = z * self.intercept_stderr
        return self.C * float(np.exp(-spread)), self.C * float(np.exp(spread))

    def confidence_width(self, z: float = 1.96) -> float:
        low, high = self.confidence_interval(z)
        return high - low

    def to_dict(self) -> dict:
        return {
            'C': self.C,
            'theta': self.theta,
            'window': list(self.window),
            'r_squared': self.r_squared,
            'point_count': self.point_count,
            'intercept_stderr': self.intercept_stderr,
            'slope_stderr': self.slope_stderr,
            'notes': list(self.notes)
        }
