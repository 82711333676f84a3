from model.operator import DENSE_SIZE_LIMIT
from model.process_object import ProcessObject
from model.problem import ModelProblem
from services.spectra.spectrum_service import SpectrumService
from utils.log.log_utils import LogUtils


class SolveService:
    """
    Second pipeline stage: eigenvalues of the level operator.

    Tridiagonal operators above `sturm_threshold` are not diagonalized; the
    counting stage then uses Sturm counts on the operator directly.
    """

    def __init__(self, spectrum_service: SpectrumService, log_utils: LogUtils, sturm_threshold: int = DENSE_SIZE_LIMIT):
        self._spectrum_service = spectrum_service
        self._sturm_threshold = sturm_threshold
        self._logger = log_utils.get_logger(__name__)

    def handle_request(self, process_object: ProcessObject) -> ProcessObject:
        """Writes 'eigenvalues' (None on the Sturm path) and 'counting_mode'."""
        model: ModelProblem = process_object['model']
        operator = process_object['operator']

        if model.exact_spectrum is not None:
            t_min = process_object['resolution_floor'] / 10.0
            process_object['eigenvalues'] = model.exact_spectrum(t_min)
            process_object['counting_mode'] = 'exact'
        elif operator.is_tridiagonal and operator.size > self._sturm_threshold:
            self._logger.info(f'Level n={process_object["n"]} of {model.model_id}: Sturm counting on size {operator.size}')
            process_object['eigenvalues'] = None
            process_object['counting_mode'] = 'sturm'
        else:
            process_object['eigenvalues'] = self._spectrum_service.eigenvalues(operator)
            process_object['counting_mode'] = 'eigenvalues'
        return process_object
