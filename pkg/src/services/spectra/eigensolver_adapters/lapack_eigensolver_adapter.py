import numpy as np
from scipy import linalg

from model.exceptions import EigenSolverError
from model.operator import HermitianOperator
from services.spectra.eigensolver_adapters.abstract_eigensolver_adapter import AbstractEigensolverAdapter


class LapackEigensolverAdapter(AbstractEigensolverAdapter):
    """
    Full eigendecompositions through scipy's LAPACK drivers: heevr/syevr for
    dense storage, stemr for tridiagonal and hbevd/sbevd for banded storage.
    """

    def supports(self, op: HermitianOperator) -> bool:
        return op.storage in ('dense', 'banded')

    def eigenvalues(self, op: HermitianOperator) -> np.ndarray:
        try:
            if op.storage == 'dense':
                values = linalg.eigvalsh(op.data, driver='evr', check_finite=True)
            elif op.is_tridiagonal and np.isrealobj(op.data):
                values = linalg.eigvalsh_tridiagonal(op.data[1], op.data[0, 1:], lapack_driver='stemr')
            else:
                values = linalg.eig_banded(op.data, lower=False, eigvals_only=True)
        except (linalg.LinAlgError, ValueError) as e:
            raise EigenSolverError(
                f'LAPACK eigensolver failed on {op.source_id} (storage {op.storage}, size {op.size}, bandwidth {op.bandwidth}): {e}'
            ) from e
        return np.sort(np.asarray(values, dtype=float))

    def count_below(self, op: HermitianOperator, shift: float) -> int:
        return int(np.searchsorted(self.eigenvalues(op), shift, side='left'))
