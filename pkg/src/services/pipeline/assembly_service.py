from model.process_object import ProcessObject
from model.problem import ModelProblem
from services.quantize.quantization_service import QuantizationService
from services.spectra.spectrum_service import SpectrumService
from utils.log.log_utils import LogUtils


class AssemblyService:
    """
    First pipeline stage: grid, operator and resolution floor of one level.
    """

    def __init__(
        self,
        quantization_service: QuantizationService,
        spectrum_service: SpectrumService,
        log_utils: LogUtils
    ):
        self._quantization_service = quantization_service
        self._spectrum_service = spectrum_service
        self._logger = log_utils.get_logger(__name__)

    def _resolution_floor(self, model: ModelProblem, L: float, n: int) -> float:
        if model.kind == 'schrodinger':
            return self._spectrum_service.schrodinger_resolution_floor(model.spec, L, n, model.parameters.get('gamma0', 1.0))
        return self._spectrum_service.psdo_resolution_floor(model.potential_scale, L, n)

    def handle_request(self, process_object: ProcessObject) -> ProcessObject:
        """
        Reads 'model', 'L', 'n' (and optionally 'storage'); writes 'grid',
        'operator', 'size' and 'resolution_floor'.

        Models with an injected exact spectrum get no operator.
        """
        model: ModelProblem = process_object['model']
        L, n = process_object['L'], process_object['n']
        process_object['resolution_floor'] = self._resolution_floor(model, L, n)

        if model.exact_spectrum is not None:
            process_object['grid'] = None
            process_object['operator'] = None
            process_object['size'] = 0
            return process_object

        if model.kind == 'schrodinger':
            grid = self._quantization_service.make_grid(model.d, L, n, dense=False)
            operator = self._quantization_service.assemble_schrodinger(model.spec, grid, storage=process_object.get('storage'))
        else:
            grid = self._quantization_service.make_grid(model.d, L, n, fiber_dim=model.symbol.N)
            operator = self._quantization_service.assemble_operator(model.symbol, grid, q=model.quantization)

        process_object['grid'] = grid
        process_object['operator'] = operator
        process_object['size'] = operator.size
        return process_object
