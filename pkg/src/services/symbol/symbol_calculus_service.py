from math import factorial
import itertools

import numpy as np
from scipy import linalg

from model.exceptions import ProjectorError, SymbolError
from model.symbol import (
    Contour,
    EigenBranchSet,
    HERMITIAN_TOL,
    PolyhomSymbol,
    SymbolComponent,
    as_hermitian_matrix,
    evaluate_polynomial,
    hermitian_defect,
)
from services.symbol.finite_difference import (
    mixed_partial,
    polynomial_derivative,
    richardson_mixed_xi_x_sum,
)
from utils.log.log_utils import LogUtils

PROJECTOR_RESIDUAL_TOL = 1e-8
CONTOUR_CLEARANCE = 1e-8
MAX_CONTOUR_NODES = 1024
SUBPRINCIPAL_STEP = 1e-4
PHASE_TIE_TOL = 1e-10


class SymbolCalculusService:
    """
    Pointwise calculus on matrix-valued polyhomogeneous symbols.

    Covers eigenvalue branches, spectral projectors (contour and
    eigendecomposition), the subprincipal symbol, conversion between the
    left and Weyl presentations and the order -1 resolvent correction.
    All methods are pure functions of their arguments.
    """

    def __init__(self, log_utils: LogUtils):
        self._logger = log_utils.get_logger(__name__)

    def eigen_branches(self, m: np.ndarray, tol: float = HERMITIAN_TOL) -> EigenBranchSet:
        """
        Eigenvalues sorted non-increasing with phase-normalized eigenvectors.

        Each eigenvector is rotated so that its largest-magnitude component
        (lowest index on ties) is real and non-negative.

        Args:
            m (np.ndarray): Hermitian matrix.
            tol (float): Relative Hermitian tolerance.

        Returns:
            EigenBranchSet: values (mu_1 >= ... >= mu_N) and column eigenvectors.

        Raises:
            NonHermitianError: If m is not Hermitian within tol.
        """
        hermitian = as_hermitian_matrix(m, tol)
        values, vectors = linalg.eigh(hermitian)
        order = np.argsort(-values, kind='stable')
        values = values[order]
        vectors = vectors[:, order].astype(complex)
        for column in range(vectors.shape[1]):
            magnitudes = np.abs(vectors[:, column])
            pivot = int(np.flatnonzero(magnitudes >= magnitudes.max() * (1.0 - PHASE_TIE_TOL))[0])
            entry = vectors[pivot, column]
            vectors[:, column] *= np.conj(entry) / abs(entry)
            vectors[pivot, column] = abs(entry)
        return EigenBranchSet(values=values, vectors=vectors)

    def branch_projector(self, m: np.ndarray, indices: list[int]) -> np.ndarray:
        """Orthogonal projector onto the eigenvectors of the given branch indices."""
        return self.eigen_branches(m).projector(indices)

    def _check_contour_clearance(self, eigenvalues: np.ndarray, c: Contour) -> None:
        distances = np.abs(np.abs(eigenvalues - c.center) - c.radius)
        index = int(np.argmin(distances))
        if distances[index] <= CONTOUR_CLEARANCE * c.radius:
            raise ProjectorError(
                f'Eigenvalue {eigenvalues[index]:.12g} lies within {distances[index]:.3e} of the contour '
                f'(center {c.center}, radius {c.radius})'
            )

    def _contour_integral(self, integrand, c: Contour, nodes: int) -> np.ndarray:
        zeta, weights = c.quadrature(nodes)
        return np.einsum('k,kij->ij', weights, integrand(zeta))

    def riesz_projector(self, m: np.ndarray, c: Contour) -> np.ndarray:
        """
        Spectral projector (2 pi i)^-1 * contour integral of (zeta - m)^-1 d zeta.

        The circle is traversed counter-clockwise with the trapezoid rule;
        nodes start at c.nodes and double until the idempotency residual is
        below 1e-8 and the result no longer changes, or 1024 nodes are used.

        Args:
            m (np.ndarray): Hermitian matrix.
            c (Contour): Circle enclosing the target eigenvalue cluster.

        Returns:
            np.ndarray: Hermitian projector onto the enclosed eigenvectors.

        Raises:
            ProjectorError: If an eigenvalue lies on or near the circle, or the
                residual ||P^2 - P|| stays above 1e-8.
        """
        hermitian = as_hermitian_matrix(m)
        self._check_contour_clearance(linalg.eigvalsh(hermitian), c)
        identity = np.eye(hermitian.shape[0])

        def resolvent(zeta):
            return np.linalg.inv(zeta[:, None, None] * identity - hermitian)

        nodes = c.nodes
        previous = None
        while True:
            projector = self._contour_integral(resolvent, c, nodes)
            projector = 0.5 * (projector + projector.conj().T)
            residual = float(np.linalg.norm(projector @ projector - projector))
            settled = previous is not None and np.linalg.norm(projector - previous) <= 1e-12 * max(1.0, np.linalg.norm(projector))
            if residual <= PROJECTOR_RESIDUAL_TOL and settled:
                return projector
            if nodes >= MAX_CONTOUR_NODES:
                if residual <= PROJECTOR_RESIDUAL_TOL:
                    return projector
                raise ProjectorError(f'Contour quadrature did not converge: ||P^2 - P|| = {residual:.3e} at {nodes} nodes')
            previous = projector
            nodes *= 2

    def resolvent_correction(
        self,
        a0: np.ndarray,
        b: np.ndarray,
        da0_dx: list[np.ndarray],
        da0_dxi: list[np.ndarray],
        c: Contour
    ) -> np.ndarray:
        """
        Order -1 correction (2 pi i)^-1 * contour integral of c(zeta) d zeta.

        c(zeta) = -R q R with R = (a0 - zeta)^-1 and
        q = b + (1/2i) sum_j (d_xj a0) R (d_xij a0).

        Args:
            a0 (np.ndarray): Principal symbol value.
            b (np.ndarray): Order -1 symbol value.
            da0_dx (list[np.ndarray]): x-derivatives of a0.
            da0_dxi (list[np.ndarray]): xi-derivatives of a0.
            c (Contour): Circle separating the target cluster of a0.

        Returns:
            np.ndarray: The correction matrix.

        Raises:
            ProjectorError: As riesz_projector.
        """
        a0 = as_hermitian_matrix(a0)
        b = np.asarray(b, dtype=complex)
        if len(da0_dx) != len(da0_dxi):
            raise SymbolError(f'Derivative lists differ in length: {len(da0_dx)} vs {len(da0_dxi)}')
        self._check_contour_clearance(linalg.eigvalsh(a0), c)
        identity = np.eye(a0.shape[0])
        dx = [np.asarray(item, dtype=complex) for item in da0_dx]
        dxi = [np.asarray(item, dtype=complex) for item in da0_dxi]

        def integrand(zeta):
            resolvent = np.linalg.inv(a0 - zeta[:, None, None] * identity)
            q = np.broadcast_to(b, resolvent.shape).copy()
            for left, right in zip(dx, dxi):
                q += (left @ resolvent @ right) / 2j
            return -resolvent @ q @ resolvent

        nodes = c.nodes
        previous = self._contour_integral(integrand, c, nodes)
        while nodes < MAX_CONTOUR_NODES:
            nodes *= 2
            current = self._contour_integral(integrand, c, nodes)
            if np.linalg.norm(current - previous) <= 1e-12 * max(1.0, np.linalg.norm(current)):
                return current
            previous = current
        raise ProjectorError(f'Resolvent correction did not settle within {MAX_CONTOUR_NODES} nodes')

    def subprincipal_symbol(self, s: PolyhomSymbol, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """
        a_-1(x, xi) + (1/2i) sum_j d_xij d_xj a_0(x, xi).

        Mixed derivatives use central differences with step
        1e-4 * max(1, |xi|) and one Richardson extrapolation. A symbol
        without an order -1 component contributes a zero a_-1.

        Raises:
            SymbolError: If xi = 0 or the symbol has no order 0 component.
        """
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        norm = float(np.linalg.norm(xi))
        if norm == 0.0:
            raise SymbolError('The subprincipal symbol is singular at xi = 0')
        principal = s.component(0)
        if principal is None:
            raise SymbolError(f'Symbol {s.symbol_id} has no order 0 component')
        step = SUBPRINCIPAL_STEP * max(1.0, norm)

        def a0(points, covectors):
            return s.component_value(principal, points, covectors)

        correction = richardson_mixed_xi_x_sum(a0, x, xi, step) / 2j
        lower = s.component(-1)
        base = np.zeros((s.N, s.N), dtype=complex) if lower is None else s.component_value(lower, x, xi)
        return base + correction

    def convert_quantization(self, s: PolyhomSymbol, direction: str, order_cutoff: int) -> PolyhomSymbol:
        """
        Apply the Weyl/left derivative series truncated at order_cutoff.

        left_to_weyl: a_W = sum_alpha (1/alpha!) (-1/2)^|alpha| d_xi^alpha D_x^alpha a_l,
        weyl_to_left uses (+1/2)^|alpha|, with D = -i d. The alpha-term of a
        component of order v has order v - |alpha| and is kept when that
        order is >= order_cutoff. Polynomial components are differentiated
        exactly, all others by finite differences.

        Args:
            s (PolyhomSymbol): Symbol in the source presentation.
            direction (str): 'weyl_to_left' or 'left_to_weyl'.
            order_cutoff (int): Lowest kept order, at least -2.

        Returns:
            PolyhomSymbol: Symbol in the target presentation.
        """
        if direction not in ('weyl_to_left', 'left_to_weyl'):
            raise SymbolError(f'Unknown conversion direction {direction!r}')
        if order_cutoff < -2:
            raise SymbolError(f'order_cutoff must be >= -2, got {order_cutoff}')
        sign = 0.5 if direction == 'weyl_to_left' else -0.5

        grouped: dict[int, list[tuple[SymbolComponent, tuple[int, ...], complex]]] = {}
        for component in s.components:
            max_alpha = component.order - order_cutoff
            if max_alpha < 0:
                continue
            for alpha in itertools.product(range(max_alpha + 1), repeat=s.d):
                size = sum(alpha)
                if size > max_alpha:
                    continue
                alpha_factorial = np.prod([factorial(a) for a in alpha])
                weight = sign ** size * (-1j) ** size / alpha_factorial
                grouped.setdefault(component.order - size, []).append((component, alpha, weight))

        components = []
        corrected = False
        for order in sorted(grouped, reverse=True):
            parts = grouped[order]
            corrected = corrected or any(sum(alpha) for _, alpha, _ in parts)
            components.append(self._merge_terms(s, order, parts))
        self._logger.info(f'Converted {s.symbol_id} ({direction}) to orders {[c.order for c in components]}')
        return PolyhomSymbol(
            d=s.d,
            N=s.N,
            components=tuple(components),
            regularization_scale=s.regularization_scale,
            hermitian=s.hermitian and not corrected,
            symbol_id=f'{s.symbol_id}:{direction}',
            meta={**s.meta, 'conversion': direction, 'order_cutoff': order_cutoff}
        )

    def _merge_terms(self, s: PolyhomSymbol, order: int, parts: list) -> SymbolComponent:
        if all(component.polynomial is not None for component, _, _ in parts):
            terms: dict = {}
            for component, alpha, weight in parts:
                for key, value in polynomial_derivative(component.polynomial, alpha, alpha).items():
                    terms[key] = terms.get(key, 0) + weight * value
            return SymbolComponent.from_polynomial(order, terms, s.N, label=f'order {order}')

        homogeneous = all(component.homogeneous for component, _, _ in parts)

        def derivative_term(component, alpha, weight):
            if component.polynomial is not None:
                terms = polynomial_derivative(component.polynomial, alpha, alpha)
                return lambda x, xi: weight * evaluate_polynomial(terms, x, xi, s.N)
            if homogeneous or not component.homogeneous:
                raw = component.evaluator
            else:
                raw = lambda x, xi, c=component: s.component_value(c, x, xi)
            if not any(alpha):
                return lambda x, xi: weight * np.asarray(raw(x, xi), dtype=complex)
            return lambda x, xi: weight * mixed_partial(raw, x, xi, alpha, alpha)

        terms = [derivative_term(component, alpha, weight) for component, alpha, weight in parts]

        def evaluator(x, xi):
            return sum(term(x, xi) for term in terms)

        return SymbolComponent(order=order, evaluator=evaluator, homogeneous=homogeneous, label=f'order {order}')

    def essential_spectrum(self, s: PolyhomSymbol, x_samples: np.ndarray, omega_samples: np.ndarray, merge_tol: float = 1e-12) -> list[tuple[float, float]]:
        """
        Union of the per-branch ranges of the principal symbol over the samples.

        Args:
            s (PolyhomSymbol): Symbol whose order 0 component is sampled.
            x_samples (np.ndarray): Points, shape (P, d).
            omega_samples (np.ndarray): Unit covectors, shape (Q, d).
            merge_tol (float): Gap below which intervals are merged.

        Returns:
            list[tuple[float, float]]: Disjoint closed intervals in increasing order.
        """
        x_samples = np.atleast_2d(np.asarray(x_samples, dtype=float))
        omega_samples = np.atleast_2d(np.asarray(omega_samples, dtype=float))
        if x_samples.size == 0 or omega_samples.size == 0:
            raise ValueError('Sample sets must be nonempty')
        values = s.principal(x_samples[:, None, :], omega_samples[None, :, :])
        defect = hermitian_defect(values)
        if defect > 1e-10:
            self._logger.warning(f'Principal symbol of {s.symbol_id} has Hermitian defect {defect:.3e}')
        branches = np.linalg.eigvalsh(0.5 * (values + np.conj(np.swapaxes(values, -1, -2)))).reshape(-1, s.N)
        intervals = sorted((float(branches[:, k].min()), float(branches[:, k].max())) for k in range(s.N))
        merged = [list(intervals[0])]
        for low, high in intervals[1:]:
            if low <= merged[-1][1] + merge_tol:
                merged[-1][1] = max(merged[-1][1], high)
            else:
                merged.append([low, high])
        return [(low, high) for low, high in merged]

    def check_homogeneity(self, component: SymbolComponent, d: int, samples: int = 64, seed: int = 0, rtol: float = 1e-10) -> float:
        """
        Sample evaluator(x, tau xi) = tau^v evaluator(x, xi) for |xi| >= 1, tau > 0.

        Returns:
            float: Largest relative deviation found.

        Raises:
            SymbolError: If the deviation exceeds rtol.
        """
        if not component.homogeneous:
            raise SymbolError(f'Component {component.label!r} is not declared homogeneous')
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1.0, 1.0, size=(samples, d))
        xi = rng.normal(size=(samples, d))
        xi *= (rng.uniform(1.0, 10.0, size=samples) / np.linalg.norm(xi, axis=-1))[:, None]
        tau = rng.uniform(0.25, 4.0, size=samples)
        scaled = np.asarray(component.evaluator(x, xi * tau[:, None]), dtype=complex)
        base = np.asarray(component.evaluator(x, xi), dtype=complex) * (tau ** component.order)[:, None, None]
        scale = np.maximum(np.abs(base).max(axis=(-2, -1)), 1e-300)
        deviation = float(np.max(np.abs(scaled - base).max(axis=(-2, -1)) / scale))
        if deviation > rtol:
            raise SymbolError(f'Component {component.label!r} is not homogeneous of order {component.order}: deviation {deviation:.3e}')
        return deviation
