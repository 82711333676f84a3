import numpy as np

from model.elasticity import KappaField, LamePoint, NPOrderRecord
from model.exceptions import DegenerateExtremumError, ElasticityError, ReductionError
from model.symbol import PolyhomSymbol, SymbolComponent, unit_directions
from services.symbol.symbol_calculus_service import SymbolCalculusService
from utils.log.log_utils import LogUtils

UNIT_TOL = 1e-12
OVERLAP_TOL = 1e-10
HESSIAN_STEP = 1e-4
DEGENERACY_TOL = 1e-8
MIN_SPECTRUM_SAMPLES = 100
PRINCIPAL_CONVENTION = 'kappa(x) * r(omega), omega = xi/|xi|'


def rotation_generator(omega: np.ndarray) -> np.ndarray:
    """r(omega) = i [[0, 0, -w1], [0, 0, -w2], [w1, w2, 0]], vectorized over leading axes."""
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape[:-1] + (3, 3), dtype=complex)
    out[..., 0, 2] = -1j * omega[..., 0]
    out[..., 1, 2] = -1j * omega[..., 1]
    out[..., 2, 0] = 1j * omega[..., 0]
    out[..., 2, 1] = 1j * omega[..., 1]
    return out


class NPElasticityService:
    """
    Symbol-level machinery of the elastic Neumann-Poincare operator on a
    surface: the Lame-to-kappa map, the 3x3 principal symbol with its
    eigenvector branches, the essential spectrum and the accumulation order
    at a nondegenerate extremum of kappa.
    """

    def __init__(self, symbol_calculus_service: SymbolCalculusService, log_utils: LogUtils):
        self._symbol_calculus_service = symbol_calculus_service
        self._logger = log_utils.get_logger(__name__)

    def lame_to_kappa(self, p: LamePoint) -> float:
        return p.mu / (2.0 * (2.0 * p.mu + p.lam))

    def _unit(self, omega: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (2,):
            raise ElasticityError(f'Expected a covector direction in R^2, got shape {omega.shape}')
        if abs(np.linalg.norm(omega) - 1.0) > UNIT_TOL:
            raise ElasticityError(f'Direction {omega.tolist()} is not a unit vector (norm {np.linalg.norm(omega):.15g})')
        return omega

    def np_principal_symbol(self, kappa: float, omega: np.ndarray) -> np.ndarray:
        """
        kappa * r(omega), a Hermitian traceless 3x3 matrix with eigenvalues (kappa, 0, -kappa).

        Raises:
            ElasticityError: If omega is not a unit vector of R^2.
        """
        return kappa * rotation_generator(self._unit(omega))

    def np_eigenvectors(self, omega: np.ndarray) -> dict[int, np.ndarray]:
        """
        Eigenvectors of r(omega) keyed by eigenvalue +1, 0, -1.

        The closed forms are checked against a numerical eigendecomposition.

        Raises:
            ReductionError: If a closed form does not match the computed branch.
        """
        w1, w2 = self._unit(omega)
        formulas = {
            1: np.array([-1j * w1, -1j * w2, 1.0]) / np.sqrt(2.0),
            0: np.array([-w2, w1, 0.0], dtype=complex),
            -1: np.array([1j * w1, 1j * w2, 1.0]) / np.sqrt(2.0)
        }
        branches = self._symbol_calculus_service.eigen_branches(rotation_generator(np.array([w1, w2])))
        for column, label in enumerate((1, 0, -1)):
            if abs(branches.values[column] - label) > 1e-12:
                raise ReductionError(f'Eigenvalue {branches.values[column]:.15g} where {label} was expected at omega = {[w1, w2]}')
            overlap = abs(np.vdot(branches.vectors[:, column], formulas[label]))
            if overlap < 1.0 - OVERLAP_TOL:
                raise ReductionError(f'Eigenvector formula for eigenvalue {label} fails at omega = {[w1, w2]}: overlap {overlap:.15g}')
        return formulas

    def _chart_samples(self, field: KappaField, samples: int, seed: int) -> np.ndarray:
        w = field.chart_half_width
        points = np.random.default_rng(seed).uniform(-w, w, size=(samples, 2))
        extra = [np.zeros(2)]
        if field.maximizer is not None:
            extra.append(np.asarray(field.maximizer, dtype=float))
        return np.concatenate([points, np.stack(extra)])

    def np_essential_spectrum(self, field: KappaField, samples: int = 1000, seed: int = 0) -> list[tuple[float, float]]:
        """
        {0} together with the symmetric pair of ranges of +/- kappa over the chart.

        Returns:
            list[tuple[float, float]]: [(-k+, -k-), (0, 0), (k-, k+)].

        Raises:
            ValueError: If fewer than 100 samples are requested.
            ElasticityError: If a sampled kappa leaves (0, 1/2).
        """
        if samples < MIN_SPECTRUM_SAMPLES:
            raise ValueError(f'Need at least {MIN_SPECTRUM_SAMPLES} samples, got {samples}')
        values = field(self._chart_samples(field, samples, seed))
        outside = (values <= 0) | (values >= 0.5)
        if outside.any():
            raise ElasticityError(f'{field.label} leaves (0, 1/2): sampled range [{values.min():.6g}, {values.max():.6g}]')
        low, high = float(values.min()), float(values.max())
        self._logger.info(f'Essential spectrum of {field.label}: kappa in [{low:.6g}, {high:.6g}]')
        return [(-high, -low), (0.0, 0.0), (low, high)]

    def _hessian(self, field: KappaField, point: np.ndarray) -> np.ndarray:
        step = HESSIAN_STEP * max(1.0, field.chart_half_width)
        hessian = np.empty((2, 2))
        basis = np.eye(2) * step
        for i in range(2):
            for j in range(2):
                hessian[i, j] = (
                    field(point + basis[i] + basis[j]) - field(point + basis[i] - basis[j])
                    - field(point - basis[i] + basis[j]) + field(point - basis[i] - basis[j])
                ) / (4.0 * step * step)
        return 0.5 * (hessian + hessian.T)

    def np_predicted_order(self, field: KappaField, side: str = 'maximum') -> NPOrderRecord:
        """
        Accumulation order theta = d/2 = 1 at the declared extremum of kappa.

        The default is the upper tip at a maximum with a negative definite
        Hessian; side='minimum' asks for the lower tip at a minimum instead.
        The coefficient itself is not computed; the record lists what it depends on.

        Raises:
            ElasticityError: If no extremum is declared, side is unknown or the
                Hessian has the definite sign of the other side.
            DegenerateExtremumError: If the Hessian is singular or indefinite.
        """
        if side not in ('maximum', 'minimum'):
            raise ElasticityError(f'Unknown extremum side {side!r}, expected maximum or minimum')
        if field.maximizer is None:
            raise ElasticityError(f'{field.label} declares no extremum')
        point = np.asarray(field.maximizer, dtype=float)
        hessian = np.asarray(field.hessian, dtype=float) if field.hessian is not None else self._hessian(field, point)
        curvatures = np.linalg.eigvalsh(hessian)
        scale = max(1.0, float(np.max(np.abs(curvatures))))
        if np.min(np.abs(curvatures)) <= DEGENERACY_TOL * scale:
            raise DegenerateExtremumError(
                f'Hessian of {field.label} at {point.tolist()} is degenerate (eigenvalues {curvatures.tolist()}); '
                f'the order t^(-1) only holds at nondegenerate extrema, degenerate ones follow a modified exponent'
            )
        if curvatures[0] < 0 < curvatures[1]:
            raise DegenerateExtremumError(f'{point.tolist()} is a saddle of {field.label} (Hessian eigenvalues {curvatures.tolist()})')
        extremum = 'maximum' if curvatures[1] < 0 else 'minimum'
        if extremum != side:
            raise ElasticityError(f'{point.tolist()} is a {extremum} of {field.label}, not a {side} (Hessian eigenvalues {curvatures.tolist()})')
        return NPOrderRecord(
            theta=1.0,
            dimension=2,
            extremum=extremum,
            tip=float(field(point)),
            hessian=hessian,
            depends_on=(
                f'Hessian of kappa at the {extremum}',
                'principal curvatures of the surface at the extremum',
                'subprincipal symbol of the operator at the extremum'
            )
        )

    def np_symbol(self, field: KappaField) -> PolyhomSymbol:
        """The principal symbol as an order 0 matrix symbol on the chart (d = 2, N = 3)."""
        component = SymbolComponent(
            order=0,
            evaluator=lambda x, xi: field(x)[..., None, None] * rotation_generator(unit_directions(xi)[1]),
            label=f'{field.label}*r'
        )
        return PolyhomSymbol(
            d=2,
            N=3,
            components=(component,),
            symbol_id=f'np[{field.label}]',
            meta={'principal_convention': PRINCIPAL_CONVENTION}
        )
