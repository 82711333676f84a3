from dataclasses import replace

import numpy as np

from model.coefficient import CoefficientReport, DirectionFunction, constant_direction_function
from model.exceptions import SymbolError
from model.operator import SchrodingerSpec, cutoff
from model.problem import ModelDefinition, ModelProblem, ScalarModelConfig, VectorModelConfig
from model.symbol import PolyhomSymbol, SymbolComponent, unit_directions
from services.asymptotics.coefficient_service import CoefficientService
from services.asymptotics.sphere_quadrature import sphere_rule
from services.symbol.symbol_calculus_service import SymbolCalculusService
from utils.log.log_utils import LogUtils

PROJECTOR_TOL = 1e-10
PROFILE_TOL = 1e-12
# |xi| at which the effective vector subsymbol is read off
EFFECTIVE_RADIUS = 1e4
SETTING_SAMPLES = 256
DEFAULT_SETTING_RADIUS = 0.5
HYDROGEN_GRIDS = ((2.0e3, 200_000), (2.0e4, 2_000_000))


def twisted_projector(omega: np.ndarray) -> np.ndarray:
    """p1(omega) = v+ v+* with v+ = (-i w1, -i w2, 1) / sqrt(2), the +1 branch of the elastic symbol."""
    omega = np.asarray(omega, dtype=float)
    vector = np.stack([-1j * omega[..., 0], -1j * omega[..., 1], np.ones(omega.shape[:-1])], axis=-1) / np.sqrt(2.0)
    return vector[..., :, None] * np.conj(vector[..., None, :])


def block_projector(N: int):
    """Constant projector onto the first fiber coordinate."""
    matrix = np.zeros((N, N), dtype=complex)
    matrix[0, 0] = 1.0

    def projector(omega: np.ndarray) -> np.ndarray:
        return np.broadcast_to(matrix, np.shape(omega)[:-1] + (N, N))
    return projector


class ModelBuilderService:
    """
    Builds the model problems driven through the experiment pipeline.

    Scalar and vector zero-order models carry their symbol, the tip 1 of the
    essential spectrum (counted from above) and the coefficient expected
    from the phase-space formula with the roles of x and xi exchanged.
    Schrodinger models carry their spec and count below 0.
    """

    def __init__(
        self,
        symbol_calculus_service: SymbolCalculusService,
        coefficient_service: CoefficientService,
        log_utils: LogUtils
    ):
        self._symbol_calculus_service = symbol_calculus_service
        self._coefficient_service = coefficient_service
        self._logger = log_utils.get_logger(__name__)

    def _sphere_points(self, d: int) -> np.ndarray:
        points, _ = sphere_rule(d, 3 if d > 1 else 0)
        return points

    def _scalar_components(self, config: ScalarModelConfig) -> tuple[SymbolComponent, SymbolComponent]:
        g, h = config.g, config.h
        profile = config.subsymbol_profile
        if profile is not None:
            at_origin = float(np.asarray(profile(np.zeros((1, config.d))), dtype=float).reshape(-1)[0])
            if abs(at_origin - 1.0) > PROFILE_TOL:
                raise SymbolError(f'Subsymbol profile must equal 1 at x = 0, got {at_origin}')
        delta = config.surgery_radius
        depth = config.surgery_depth

        def principal(x, xi):
            _, omega = unit_directions(xi)
            quadratic = np.einsum('...i,...ij,...j->...', x, g(omega), x)
            value = 1.0 / (1.0 + quadratic)
            if delta is not None:
                value = value * (1.0 - depth * (1.0 - cutoff(np.linalg.norm(x, axis=-1), delta, 2.0 * delta)))
            return value[..., None, None].astype(complex)

        def subsymbol(x, xi):
            norm, omega = unit_directions(xi)
            value = h(omega) / np.where(norm > 0, norm, 1.0)
            if profile is not None and not config.freeze_subsymbol:
                value = value * np.asarray(profile(x), dtype=float)
            return value[..., None, None].astype(complex)

        return (
            SymbolComponent(order=0, evaluator=principal, label=f'1/(1+x.{g.label}x)'),
            SymbolComponent(order=-1, evaluator=subsymbol, label=f'{h.label}/|xi|')
        )

    def _check_positive(self, h: DirectionFunction, d: int) -> float:
        values = h(self._sphere_points(d))
        if np.min(values) <= 0:
            raise SymbolError(f'Subsymbol amplitude {h.label} must be strictly positive, minimum {np.min(values):.6g}')
        return float(np.max(values))

    def check_setting(self, s: PolyhomSymbol, tip: float = 1.0, radius: float = DEFAULT_SETTING_RADIUS, seed: int = 0) -> dict:
        """
        Sampled check of the nondegenerate-maximum shape of the principal symbol at x = 0:
        tip - a0 >= gamma0 |x|^2 inside the ball and a0 <= tip - gap outside it.

        Returns:
            dict: Measured gamma0, gap and the radius used.

        Raises:
            SymbolError: If either measured constant is not positive.
        """
        rng = np.random.default_rng(seed)
        d = s.d
        directions = rng.standard_normal((SETTING_SAMPLES, d))
        directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
        covectors = rng.standard_normal((SETTING_SAMPLES, d))
        radii = radius * rng.uniform(1e-3, 1.0, SETTING_SAMPLES)
        inner = directions * radii[:, None]
        inner_values = np.linalg.eigvalsh(s.principal(inner, covectors))[..., -1]
        gamma0 = float(np.min((tip - inner_values) / radii ** 2))
        outer = directions * (radius * rng.uniform(1.0, 4.0, SETTING_SAMPLES))[:, None]
        outer_values = np.linalg.eigvalsh(s.principal(outer, covectors))[..., -1]
        gap = float(tip - np.max(outer_values))
        if not (gamma0 > 0 and gap > 0):
            raise SymbolError(f'{s.symbol_id} has no nondegenerate maximum {tip} at x = 0: gamma0 = {gamma0:.4g}, gap = {gap:.4g}')
        return {'gamma0': gamma0, 'gap': gap, 'setting_radius': radius}

    def build_scalar_model(self, config: ScalarModelConfig) -> ModelProblem:
        """
        Scalar model a = 1/(1 + x.g(w)x) + h(w) profile(x) (1 + |xi|^2)^(-1/2), w = xi/|xi|.

        Args:
            config (ScalarModelConfig): Model inputs.

        Returns:
            ModelProblem: Kind scalar_psdo with tip (1, above) and the expected coefficient
            of the pair (g, h) read as (kinetic form, potential amplitude).

        Raises:
            SymbolError: If d is not 1 or 2, h is not strictly positive or the profile is not 1 at 0.
            EllipticityError: If g is not positive definite.
        """
        if config.d not in (1, 2):
            raise SymbolError(f'Scalar models are built for d = 1 or 2, got {config.d}')
        h_max = self._check_positive(config.h, config.d)
        config.g.ellipticity_constant(self._sphere_points(config.d))
        principal, subsymbol = self._scalar_components(config)
        symbol = PolyhomSymbol(
            d=config.d,
            N=1,
            components=(principal, subsymbol),
            symbol_id=config.model_id,
            meta={'kind': 'scalar_psdo', 'frozen': config.freeze_subsymbol, 'surgery_radius': config.surgery_radius}
        )
        parameters = self.check_setting(symbol, radius=config.surgery_radius or DEFAULT_SETTING_RADIUS)
        expected = self._coefficient_service.closed_form_coefficient(config.g, config.h, config.d)
        self._logger.info(f'Built scalar model {config.model_id}: d={config.d}, expected C = {expected.C:.6g}, theta = {expected.theta:g}')
        return ModelProblem(
            model_id=config.model_id,
            kind='scalar_psdo',
            d=config.d,
            tip_reference=1.0,
            tip_side='above',
            symbol=symbol,
            quantization=config.quantization,
            grids=config.grids,
            expected=expected,
            fit_window=config.fit_window,
            potential_scale=h_max,
            parameters=parameters
        )

    def _check_projector(self, projector, d: int, N: int) -> None:
        points = self._sphere_points(d)
        matrices = np.asarray(projector(points), dtype=complex)
        if matrices.shape != points.shape[:-1] + (N, N):
            raise SymbolError(f'Projector family returns shape {matrices.shape}, expected {points.shape[:-1] + (N, N)}')
        idempotent = np.max(np.abs(matrices @ matrices - matrices))
        adjoint = np.max(np.abs(matrices - np.conj(np.swapaxes(matrices, -1, -2))))
        rank = np.max(np.abs(np.trace(matrices, axis1=-2, axis2=-1) - 1.0))
        if max(idempotent, adjoint, rank) > PROJECTOR_TOL:
            raise SymbolError(
                f'p1 is not a rank-one orthogonal projector: |P^2 - P| = {idempotent:.3e}, '
                f'|P - P*| = {adjoint:.3e}, |tr P - 1| = {rank:.3e}'
            )

    def _effective_subsymbol(self, s: PolyhomSymbol) -> DirectionFunction:
        """h_eff(w) = Re e1* a_sub(0, R w) e1 * R with e1 the top eigenvector of the principal symbol at (0, w)."""
        origin = np.zeros(s.d)

        def evaluator(omega: np.ndarray) -> np.ndarray:
            flat = np.asarray(omega, dtype=float).reshape(-1, s.d)
            values = np.empty(flat.shape[0])
            for k, direction in enumerate(flat):
                branch = self._symbol_calculus_service.eigen_branches(s.principal(origin, direction)).vectors[:, 0]
                sub = self._symbol_calculus_service.subprincipal_symbol(s, origin, EFFECTIVE_RADIUS * direction)
                values[k] = EFFECTIVE_RADIUS * float(np.real(np.vdot(branch, sub @ branch)))
            return values.reshape(np.shape(omega)[:-1])
        return DirectionFunction(d=s.d, evaluator=evaluator, label=f'h_eff[{s.symbol_id}]')

    def build_vector_model(self, config: VectorModelConfig) -> ModelProblem:
        """
        Vector model mu1(x, xi) p1(w) + (1 - 2r)(I - p1(w)).

        mu1 is the scalar model glued to 0 outside |x| <= glue_radius; the
        complementary branch sits at the constant level 1 - 2r.

        Raises:
            SymbolError: If N < 2 or p1 is not a rank-one projector on the sampled directions.
        """
        scalar = config.scalar
        d, N = scalar.d, config.N
        if N < 2:
            raise SymbolError(f'Vector models need N >= 2, got {N}')
        self._check_projector(config.projector, d, N)
        h_max = self._check_positive(scalar.h, d)
        scalar.g.ellipticity_constant(self._sphere_points(d))
        principal, subsymbol = self._scalar_components(scalar)
        projector = config.projector
        radius = config.glue_radius
        level = 1.0 - config.complement_offset
        identity = np.eye(N)

        def glue(x):
            if radius is None:
                return np.ones(np.shape(x)[:-1])
            return cutoff(np.linalg.norm(x, axis=-1), 0.5 * radius, radius)

        def vector_principal(x, xi):
            _, omega = unit_directions(xi)
            p1 = projector(omega)
            branch = glue(x)[..., None, None] * principal.evaluator(x, xi)
            return branch * p1 + level * (identity - p1)

        def vector_subsymbol(x, xi):
            _, omega = unit_directions(xi)
            return glue(x)[..., None, None] * subsymbol.evaluator(x, xi) * projector(omega)

        symbol = PolyhomSymbol(
            d=d,
            N=N,
            components=(
                SymbolComponent(order=0, evaluator=vector_principal, label=f'mu1 p1 + {level:g}(I - p1)'),
                SymbolComponent(order=-1, evaluator=vector_subsymbol, label=f'{scalar.h.label}/|xi| p1')
            ),
            symbol_id=config.model_id,
            meta={'kind': 'vector_psdo', 'twisted': config.twisted, 'complement_level': level}
        )
        parameters = self.check_setting(symbol, radius=scalar.surgery_radius or DEFAULT_SETTING_RADIUS)
        parameters['complement_level'] = level
        closed = self._coefficient_service.closed_form_coefficient(scalar.g, self._effective_subsymbol(symbol), d)
        notes = ('effective subsymbol e1* a_sub e1; only theta is meaningful for a twisted projector',) if config.twisted else ()
        expected = CoefficientReport(C=closed.C, theta=closed.theta, method=closed.method, normalization=closed.normalization, nodes=closed.nodes, notes=notes)
        self._logger.info(f'Built vector model {config.model_id}: N={N}, expected C = {expected.C:.6g}, theta = {expected.theta:g}')
        return ModelProblem(
            model_id=config.model_id,
            kind='vector_psdo',
            d=d,
            tip_reference=1.0,
            tip_side='above',
            symbol=symbol,
            quantization=scalar.quantization,
            grids=scalar.grids,
            expected=expected,
            fit_window=scalar.fit_window,
            potential_scale=h_max,
            parameters=parameters
        )

    def build_schrodinger_model(
        self,
        spec: SchrodingerSpec,
        grids: tuple[tuple[float, int], ...] = (),
        fit_window: tuple[float, float] | None = None,
        model_id: str | None = None
    ) -> ModelProblem:
        """Schrodinger model counted below 0, expected coefficient from the Coulomb-type tail."""
        points = self._sphere_points(spec.d)
        gamma0 = spec.a2.ellipticity_constant(points)
        amplitude = spec.h.scaled(spec.coupling)
        expected = self._coefficient_service.closed_form_coefficient(spec.a2, amplitude, spec.d)
        h_max = float(np.max(np.maximum(amplitude(points), 0.0)))
        return ModelProblem(
            model_id=model_id or spec.spec_id,
            kind='schrodinger',
            d=spec.d,
            tip_reference=0.0,
            tip_side='below',
            spec=spec,
            quantization='schrodinger',
            grids=grids,
            expected=expected,
            fit_window=fit_window,
            potential_scale=h_max,
            parameters={'gamma0': gamma0}
        )

    def build_hydrogen_model(
        self,
        q: float = 1.0,
        grids: tuple[tuple[float, int], ...] = HYDROGEN_GRIDS,
        fit_window: tuple[float, float] | None = None
    ) -> ModelProblem:
        """
        -Laplace - q/|x| in R^3 with its closed-form spectrum injected.

        Levels of the ladder only set the resolution floor; nothing is assembled.
        """
        spec = SchrodingerSpec(
            d=3,
            a2=constant_direction_function(3, 1.0, form_valued=True, label='I'),
            h=constant_direction_function(3, q, label=f'{q:g}'),
            spec_id=f'hydrogen[q={q:g}]'
        )
        model = self.build_schrodinger_model(spec, grids=grids, fit_window=fit_window)
        return ModelProblem(
            model_id=model.model_id,
            kind='schrodinger',
            d=3,
            tip_reference=0.0,
            tip_side='below',
            spec=spec,
            quantization='schrodinger',
            grids=grids,
            expected=model.expected,
            exact_spectrum=lambda t_min: self._coefficient_service.hydrogen_spectrum(t_min, q),
            fit_window=fit_window,
            potential_scale=q,
            parameters=model.parameters
        )

    def build_from_definition(self, definition: ModelDefinition) -> ModelProblem:
        """
        Model problem described by a parsed model file.

        Raises:
            SymbolError: For an [np]-only definition, which describes no counted operator.
        """
        if definition.kind == 'scalar_psdo':
            model = self.build_scalar_model(definition.scalar)
        elif definition.kind == 'vector_psdo':
            model = self.build_vector_model(definition.vector)
        elif definition.kind == 'schrodinger':
            model = self.build_schrodinger_model(definition.spec, grids=definition.grids, fit_window=definition.fit_window, model_id=definition.model_id)
        elif definition.kind == 'hydrogen':
            grids = definition.grids or HYDROGEN_GRIDS
            model = self.build_hydrogen_model(q=definition.q, grids=grids, fit_window=definition.fit_window)
        else:
            raise SymbolError(f'Model {definition.model_id} of kind {definition.kind} has no operator to count')
        return replace(model, storage=definition.storage)

    def coefficient_fields(self, definition: ModelDefinition) -> tuple[DirectionFunction, DirectionFunction, int]:
        """(kinetic form, potential amplitude, d) entering the predicted coefficient of a model file."""
        if definition.kind == 'schrodinger':
            return definition.spec.a2, definition.spec.h.scaled(definition.spec.coupling), definition.d
        if definition.kind == 'hydrogen':
            return (
                constant_direction_function(3, 1.0, form_valued=True, label='I'),
                constant_direction_function(3, definition.q, label=f'{definition.q:g}'),
                3
            )
        if definition.kind == 'scalar_psdo':
            return definition.scalar.g, definition.scalar.h, definition.d
        if definition.kind == 'vector_psdo':
            return definition.vector.scalar.g, definition.vector.scalar.h, definition.d
        raise SymbolError(f'Model {definition.model_id} of kind {definition.kind} has no coefficient fields')
