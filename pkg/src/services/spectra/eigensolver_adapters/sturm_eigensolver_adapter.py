import numpy as np
from numba import njit

from model.exceptions import EigenSolverError
from model.operator import HermitianOperator
from services.spectra.eigensolver_adapters.abstract_eigensolver_adapter import AbstractEigensolverAdapter

BISECTION_STEPS = 200


@njit(cache=True)
def _negative_pivots(diagonal, off_diagonal_sq, shift, pivmin):
    """Number of negative pivots of the LDL^T factorization of T - shift I."""
    count = 0
    q = diagonal[0] - shift
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        count += 1
    for i in range(1, diagonal.shape[0]):
        q = diagonal[i] - shift - off_diagonal_sq[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


@njit(cache=True)
def _bisect_all(diagonal, off_diagonal_sq, pivmin, lower, upper, rtol):
    size = diagonal.shape[0]
    values = np.empty(size)
    for k in range(size):
        low = lower
        high = upper
        for _ in range(BISECTION_STEPS):
            middle = 0.5 * (low + high)
            if _negative_pivots(diagonal, off_diagonal_sq, middle, pivmin) > k:
                high = middle
            else:
                low = middle
            if high - low <= rtol * max(abs(low), abs(high), 1.0):
                break
        values[k] = 0.5 * (low + high)
    return values


class SturmEigensolverAdapter(AbstractEigensolverAdapter):
    """
    Sturm-sequence engine for symmetric tridiagonal operators.

    Counting is exact for the discrete operator and costs one O(M) pass,
    which keeps 1D grids with millions of points tractable.
    """

    def __init__(self, rtol: float = 1e-14):
        self._rtol = rtol

    def supports(self, op: HermitianOperator) -> bool:
        return op.is_tridiagonal

    def _arrays(self, op: HermitianOperator) -> tuple[np.ndarray, np.ndarray, float]:
        if not self.supports(op):
            raise EigenSolverError(f'Sturm counting needs a tridiagonal operator, got storage {op.storage} with bandwidth {op.bandwidth}')
        diagonal = np.ascontiguousarray(np.real(op.data[1]), dtype=float)
        off_diagonal_sq = np.ascontiguousarray(np.abs(op.data[0, 1:]) ** 2, dtype=float)
        largest = float(off_diagonal_sq.max()) if off_diagonal_sq.size else 0.0
        pivmin = np.finfo(float).tiny * max(1.0, largest)
        return diagonal, off_diagonal_sq, pivmin

    def count_below(self, op: HermitianOperator, shift: float) -> int:
        diagonal, off_diagonal_sq, pivmin = self._arrays(op)
        return int(_negative_pivots(diagonal, off_diagonal_sq, float(shift), pivmin))

    def eigenvalues(self, op: HermitianOperator) -> np.ndarray:
        """All eigenvalues by bisection inside the Gershgorin interval."""
        diagonal, off_diagonal_sq, pivmin = self._arrays(op)
        off = np.sqrt(off_diagonal_sq)
        radius = np.zeros_like(diagonal)
        radius[:-1] += off
        radius[1:] += off
        lower = float(np.min(diagonal - radius))
        upper = float(np.max(diagonal + radius))
        span = max(upper - lower, 1.0)
        return _bisect_all(diagonal, off_diagonal_sq, pivmin, lower - 1e-12 * span, upper + 1e-12 * span, self._rtol)
