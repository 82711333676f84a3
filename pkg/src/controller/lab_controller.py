import numpy as np
import pandas as pd

from controller.experiment_controller import ExperimentController
from controller.verification_controller import VerificationController
from model.coefficient import CoefficientReport, PhaseSpaceBounds, constant_direction_function
from model.counting import FitResult
from model.elasticity import KappaField, LamePoint
from model.operator import HermitianOperator
from model.problem import ExperimentReport, LevelResult, ModelDefinition, VerificationReport
from model.process_object import ProcessObject
from services.asymptotics.coefficient_service import CoefficientService
from services.elasticity.np_elasticity_service import NPElasticityService
from services.models.model_builder_service import ModelBuilderService
from services.pipeline.assembly_service import AssemblyService
from services.spectra.spectrum_service import SpectrumService
from utils.log.log_utils import LogUtils

COEFFICIENT_METHODS = ('closed', 'radial', 'mc')


class LabController:
    """
    Entry point behind the command-line subcommands.

    Each method takes parsed inputs (a model definition, grid sizes, sample
    tables) and returns the domain result; reading and writing files is left
    to the caller.
    """

    def __init__(
        self,
        model_builder_service: ModelBuilderService,
        coefficient_service: CoefficientService,
        spectrum_service: SpectrumService,
        assembly_service: AssemblyService,
        np_elasticity_service: NPElasticityService,
        experiment_controller: ExperimentController,
        verification_controller: VerificationController,
        log_utils: LogUtils
    ):
        self._model_builder_service = model_builder_service
        self._coefficient_service = coefficient_service
        self._spectrum_service = spectrum_service
        self._assembly_service = assembly_service
        self._np_elasticity_service = np_elasticity_service
        self._experiment_controller = experiment_controller
        self._verification_controller = verification_controller
        self._logger = log_utils.get_logger(__name__)

    def coefficient(
        self,
        definition: ModelDefinition | None = None,
        d: int = 3,
        method: str = 'closed',
        samples: int | None = None,
        seed: int | None = None,
        printed: bool = False
    ) -> CoefficientReport:
        """
        Predicted (C, theta) of a model file, or of a2 = I, h = 1 in dimension d.

        Args:
            definition (ModelDefinition | None): Parsed model file.
            d (int): Dimension used without a model file.
            method (str): closed, radial or mc.
            samples (int | None): Monte-Carlo samples; the file's [mc] value by default.
            seed (int | None): Monte-Carlo seed; the first seed of the file by default.
            printed (bool): Closed form with the bare measure and exponent d/2.

        Raises:
            ValueError: On an unknown method.
        """
        if method not in COEFFICIENT_METHODS:
            raise ValueError(f'Unknown coefficient method {method!r}; expected one of {COEFFICIENT_METHODS}')
        if definition is None:
            a2 = constant_direction_function(d, 1.0, form_valued=True, label='I')
            h = constant_direction_function(d, 1.0, label='1')
        else:
            a2, h, d = self._model_builder_service.coefficient_fields(definition)
        service = self._coefficient_service
        if method == 'closed':
            return service.closed_form_coefficient(a2, h, d, printed=printed)
        if method == 'radial':
            return service.radial_quadrature_coefficient(a2, h, d)

        mc = definition.mc if definition is not None else None
        H, bounds = service.capped_tail(a2, h, d, kinetic_cap=None if mc is None else mc.kinetic_cap)
        if mc is not None and (mc.x_radius or mc.xi_radius):
            bounds = PhaseSpaceBounds(x_radius=mc.x_radius or bounds.x_radius, xi_radius=mc.xi_radius or bounds.xi_radius)
        samples = samples or (mc.samples if mc is not None else 1_000_000)
        seed = seed if seed is not None else (mc.seeds[0] if mc is not None and mc.seeds else 0)
        return service.phase_volume_mc(H, d, samples, bounds, seed=seed)

    def spectrum(self, definition: ModelDefinition, L: float, n: int, keep_eigenvalues: bool = False) -> LevelResult:
        """Assemble, solve and count one grid level of a model file."""
        model = self._model_builder_service.build_from_definition(definition)
        return self._experiment_controller.run_level(model, 0, L, n, keep_eigenvalues=keep_eigenvalues)

    def run(self, definition: ModelDefinition, seeds: tuple[int, ...] = ()) -> ExperimentReport:
        """Run the grid ladder declared in a model file."""
        model = self._model_builder_service.build_from_definition(definition)
        return self._experiment_controller.run_experiment(model, seeds=seeds)

    def fit(self, samples: pd.DataFrame, window: tuple[float, float] | None = None, resolution_floor: float | None = None) -> FitResult:
        """
        Power-law fit of stored counting samples.

        Without a window the best one-decade window above the floor is used;
        the floor defaults to the smallest unflagged t.
        """
        trusted = samples[~samples['flagged']]
        if window is None:
            floor = resolution_floor or float(trusted['t'].min())
            window = self._spectrum_service.auto_window(trusted, floor)
        return self._spectrum_service.fit_power_law(samples, window)

    def np_constant(self, lam: float, mu: float) -> dict:
        """kappa and the three-point essential spectrum of a homogeneous body."""
        kappa = self._np_elasticity_service.lame_to_kappa(LamePoint(lam=lam, mu=mu))
        field = KappaField(evaluator=lambda x: np.full(np.shape(x)[:-1], kappa), label=f'kappa[lambda={lam:g},mu={mu:g}]')
        return {
            'kappa': kappa,
            'essential_spectrum': self._np_elasticity_service.np_essential_spectrum(field),
            'order': None
        }

    def np_field(self, field: KappaField, samples: int = 1000, seed: int = 0) -> dict:
        """Essential spectrum of a kappa field and, with a declared extremum, its accumulation order."""
        order = None
        if field.maximizer is not None:
            order = self._np_elasticity_service.np_predicted_order(field).to_dict()
        return {
            'label': field.label,
            'essential_spectrum': self._np_elasticity_service.np_essential_spectrum(field, samples=samples, seed=seed),
            'order': order
        }

    def export(self, definition: ModelDefinition, L: float, n: int) -> HermitianOperator:
        """
        Assembled operator of a model file at one grid size.

        Raises:
            ValueError: For models whose spectrum is injected in closed form.
        """
        model = self._model_builder_service.build_from_definition(definition)
        process_object = self._assembly_service.handle_request(ProcessObject(model=model, L=L, n=n, storage=model.storage))
        if process_object['operator'] is None:
            raise ValueError(f'Model {model.model_id} has a closed-form spectrum and no operator to export')
        return process_object['operator']

    def verify(self, criteria: list[int] | None = None, quick: bool = False, seed: int = 0) -> VerificationReport:
        return self._verification_controller.verify_suite(criteria=criteria, quick=quick, seed=seed)
