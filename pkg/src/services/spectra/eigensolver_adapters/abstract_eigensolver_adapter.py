from abc import ABC, abstractmethod

import numpy as np

from model.operator import HermitianOperator


class AbstractEigensolverAdapter(ABC):
    """
    Interface of the eigen-engines used by the spectrum service.

    Adapters report whether they can handle an operator's storage and
    return ascending eigenvalues or exact counts below a shift.
    """

    @abstractmethod
    def supports(self, op: HermitianOperator) -> bool:
        """
        Tell whether the adapter can process the operator's storage.

        Args:
            op (HermitianOperator): Assembled operator

        Returns:
            bool: True when eigenvalues and counts are available for op
        """
        ...

    @abstractmethod
    def eigenvalues(self, op: HermitianOperator) -> np.ndarray:
        """
        Compute all eigenvalues of the operator.

        Args:
            op (HermitianOperator): Assembled operator

        Returns:
            np.ndarray: Eigenvalues in ascending order
        """
        ...

    @abstractmethod
    def count_below(self, op: HermitianOperator, shift: float) -> int:
        """
        Count eigenvalues strictly below a shift.

        Args:
            op (HermitianOperator): Assembled operator
            shift (float): Spectral shift

        Returns:
            int: Number of eigenvalues < shift
        """
        ...
