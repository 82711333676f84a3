from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from model.exceptions import NonHermitianError, SymbolError

HERMITIAN_TOL = 1e-12

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]
PolynomialTerms = Mapping[tuple[tuple[int, ...], tuple[int, ...]], object]


def hermitian_defect(m: np.ndarray) -> float:
    """
    Relative distance of a matrix (or a stack of matrices) from its adjoint.

    Args:
        m (np.ndarray): Array of shape (..., N, N).

    Returns:
        float: max over the stack of ||m - m*||_F / ||m||_F (0 for the zero matrix).
    """
    m = np.asarray(m)
    diff = np.linalg.norm(m - np.conj(np.swapaxes(m, -1, -2)), axis=(-2, -1))
    scale = np.linalg.norm(m, axis=(-2, -1))
    ratio = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), diff)
    return float(np.max(ratio)) if ratio.size else 0.0


def as_hermitian_matrix(m: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """
    Validate a square matrix as Hermitian and return its Hermitian part.

    Args:
        m (np.ndarray): Square complex matrix.
        tol (float): Relative tolerance on ||m - m*|| / ||m||.

    Returns:
        np.ndarray: (m + m*) / 2 as complex128.

    Raises:
        NonHermitianError: If m is not square or its defect exceeds tol.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise NonHermitianError(f'Expected a non-empty square matrix, got shape {m.shape}')
    defect = hermitian_defect(m)
    if defect > tol:
        raise NonHermitianError(f'Matrix is not Hermitian: relative defect ||m - m*||/||m|| = {defect:.3e} > {tol:.1e}')
    return 0.5 * (m + m.conj().T)


def unit_directions(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Split covectors into norms and unit directions; the direction at 0 is e_1.
    """
    xi = np.asarray(xi, dtype=float)
    norm = np.linalg.norm(xi, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    omega = xi / safe[..., None]
    if np.any(norm == 0):
        e1 = np.zeros(xi.shape[-1])
        e1[0] = 1.0
        omega = np.where((norm == 0)[..., None], e1, omega)
    return norm, omega


def evaluate_polynomial(terms: PolynomialTerms, x: np.ndarray, xi: np.ndarray, N: int) -> np.ndarray:
    """Evaluate {(x exponents, xi exponents): coefficient} on broadcast points, shape (..., N, N)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(x.shape[:-1] + (N, N), dtype=complex)
    for (px, pxi), coefficient in terms.items():
        monomial = np.ones(x.shape[:-1])
        for j, power in enumerate(px):
            if power:
                monomial = monomial * x[..., j] ** power
        for j, power in enumerate(pxi):
            if power:
                monomial = monomial * xi[..., j] ** power
        out += monomial[..., None, None] * np.broadcast_to(np.asarray(coefficient, dtype=complex), (N, N))
    return out


@dataclass(frozen=True)
class SymbolComponent:
    """
    One term of a polyhomogeneous symbol.

    The evaluator is vectorized: it receives x and xi broadcast to a common
    shape (..., d) and returns an array of shape (..., N, N). For homogeneous
    components it is the exact homogeneous function of order `order`; the
    owning PolyhomSymbol applies the regularization near xi = 0.
    Non-homogeneous components (multiplication symbols, polynomials) are
    evaluated as given and may carry a positive nominal order.
    """
    order: int
    evaluator: Evaluator
    homogeneous: bool = True
    polynomial: PolynomialTerms | None = None
    label: str = ''

    def __post_init__(self):
        if self.homogeneous and self.order > 0:
            raise SymbolError(f'Homogeneous component {self.label!r} has positive order {self.order}')

    @classmethod
    def from_polynomial(cls, order: int, terms: PolynomialTerms, N: int = 1, label: str = '') -> 'SymbolComponent':
        """
        Build a non-homogeneous component from a polynomial in (x, xi).

        Args:
            order (int): Nominal order (the xi-degree of the polynomial).
            terms (Mapping): {(x exponents, xi exponents): scalar or N x N coefficient}.
            N (int): Fiber dimension.
            label (str): Name used in diagnostics.

        Returns:
            SymbolComponent: Component whose derivatives can be taken analytically.
        """
        frozen = {(tuple(px), tuple(pxi)): np.asarray(c, dtype=complex) for (px, pxi), c in terms.items()}
        return cls(
            order=order,
            evaluator=lambda x, xi: evaluate_polynomial(frozen, x, xi, N),
            homogeneous=False,
            polynomial=frozen,
            label=label
        )


def scalar_component(order: int, func: Callable[[np.ndarray, np.ndarray], np.ndarray], homogeneous: bool = True, label: str = '') -> SymbolComponent:
    """Wrap a scalar function f(x, xi) -> (...) as a 1x1 component."""
    def evaluator(x, xi):
        value = np.asarray(func(x, xi), dtype=complex)
        value = np.broadcast_to(value, np.broadcast_shapes(np.shape(x)[:-1], np.shape(xi)[:-1]))
        return value[..., None, None]
    return SymbolComponent(order=order, evaluator=evaluator, homogeneous=homogeneous, label=label)


@dataclass(frozen=True)
class PolyhomSymbol:
    """
    Matrix-valued symbol a(x, xi) = sum of components with decreasing orders.

    Homogeneous components of order v are evaluated as
    f(x, xi/|xi|) * (s^2 + |xi|^2)^(v/2) with s = regularization_scale.
    """
    d: int
    N: int
    components: tuple[SymbolComponent, ...]
    regularization_scale: float = 1.0
    hermitian: bool = True
    symbol_id: str = 'symbol'
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'components', tuple(self.components))
        if self.d not in (1, 2, 3):
            raise SymbolError(f'Unsupported dimension d = {self.d}')
        if self.N < 1:
            raise SymbolError(f'Fiber dimension must be positive, got N = {self.N}')
        if not self.components:
            raise SymbolError('A symbol needs at least one component')
        if self.regularization_scale <= 0:
            raise SymbolError(f'regularization_scale must be positive, got {self.regularization_scale}')
        orders = [component.order for component in self.components]
        if any(a <= b for a, b in zip(orders, orders[1:])):
            raise SymbolError(f'Component orders must be unique and strictly decreasing, got {orders}')
        if all(component.homogeneous for component in self.components) and orders[0] != 0:
            raise SymbolError(f'A homogeneous expansion must start at order 0, got {orders[0]}')

    @property
    def orders(self) -> list[int]:
        return [component.order for component in self.components]

    def component(self, order: int) -> SymbolComponent | None:
        for component in self.components:
            if component.order == order:
                return component
        return None

    def component_value(self, component: SymbolComponent, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        shape = x.shape[:-1] + (self.N, self.N)
        if not component.homogeneous:
            return np.broadcast_to(np.asarray(component.evaluator(x, xi), dtype=complex), shape)
        norm, omega = unit_directions(xi)
        value = np.broadcast_to(np.asarray(component.evaluator(x, omega), dtype=complex), shape)
        if component.order == 0:
            return value
        weight = (self.regularization_scale ** 2 + norm ** 2) ** (component.order / 2.0)
        return value * weight[..., None, None]

    def evaluate(self, x: np.ndarray, xi: np.ndarray, orders: list[int] | None = None) -> np.ndarray:
        """
        Evaluate the (regularized) symbol on broadcast points.

        Args:
            x (np.ndarray): Points, shape (..., d).
            xi (np.ndarray): Covectors, shape (..., d).
            orders (list[int] | None): Restrict the sum to these component orders.

        Returns:
            np.ndarray: Values of shape (..., N, N).
        """
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        if x.shape[-1] != self.d:
            raise SymbolError(f'Expected points of dimension {self.d}, got {x.shape[-1]}')
        total = np.zeros(x.shape[:-1] + (self.N, self.N), dtype=complex)
        for component in self.components:
            if orders is None or component.order in orders:
                total += self.component_value(component, x, xi)
        return total

    def principal(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return self.evaluate(x, xi, orders=[self.components[0].order])


@dataclass(frozen=True)
class EigenBranchSet:
    """Eigenvalues sorted non-increasing with orthonormal eigenvectors as columns."""
    values: np.ndarray
    vectors: np.ndarray

    def projector(self, indices: list[int]) -> np.ndarray:
        selected = self.vectors[:, indices]
        return selected @ selected.conj().T


@dataclass(frozen=True)
class Contour:
    """Circle in the complex plane used for trapezoid contour quadrature."""
    center: complex
    radius: float
    nodes: int = 64

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f'Contour radius must be positive, got {self.radius}')
        if self.nodes < 8:
            raise ValueError(f'Contour needs at least 8 nodes, got {self.nodes}')

    def quadrature(self, nodes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """
        Counter-clockwise trapezoid rule on the circle.

        Returns:
            tuple[np.ndarray, np.ndarray]: (zeta, w) such that
            (2*pi*i)^-1 * integral of f(zeta) d zeta ~ sum_k w_k f(zeta_k).
        """
        count = nodes or self.nodes
        phase = np.exp(2j * np.pi * np.arange(count) / count)
        zeta = self.center + self.radius * phase
        weights = self.radius * phase / count
        return zeta, weights
