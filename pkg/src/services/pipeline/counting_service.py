import numpy as np
import pandas as pd

from model.exceptions import FitError
from model.process_object import ProcessObject
from model.problem import ModelProblem
from services.spectra.spectrum_service import SpectrumService
from utils.log.log_utils import LogUtils


class CountingService:
    """
    Last pipeline stage: counting samples on the t grid and the power-law fit.
    """

    def __init__(self, spectrum_service: SpectrumService, log_utils: LogUtils):
        self._spectrum_service = spectrum_service
        self._logger = log_utils.get_logger(__name__)

    def _t_max(self, model: ModelProblem, eigenvalues: np.ndarray | None) -> float:
        if eigenvalues is None or eigenvalues.size == 0:
            return model.potential_scale
        if model.tip_side == 'above':
            return float(eigenvalues.max() - model.tip_reference)
        return float(model.tip_reference - eigenvalues.min())

    def _samples(self, process_object: ProcessObject, ts: np.ndarray) -> pd.DataFrame:
        model: ModelProblem = process_object['model']
        floor = process_object['resolution_floor']
        if process_object['counting_mode'] == 'sturm':
            counts = self._spectrum_service.sturm_counts(process_object['operator'], ts)
            process_object['counting_function'] = None
            return pd.DataFrame({'t': ts, 'n': counts, 'flagged': ts < floor})
        cf = self._spectrum_service.make_counting_function(process_object['eigenvalues'], model.tip_reference, model.tip_side, floor)
        process_object['counting_function'] = cf
        return self._spectrum_service.counting_samples(cf, ts)

    def handle_request(self, process_object: ProcessObject) -> ProcessObject:
        """
        Reads 'model', 'resolution_floor', 'counting_mode', 'eigenvalues' and an optional
        fixed grid 'ts'; writes 'samples', 'fit' and 'note'.

        A level with nothing countable above the floor gets a note and no fit.
        """
        model: ModelProblem = process_object['model']
        floor = process_object['resolution_floor']
        process_object['note'] = ''
        process_object['fit'] = None

        ts = process_object.get('ts')
        if ts is None:
            t_max = self._t_max(model, process_object.get('eigenvalues'))
            if not t_max > floor:
                process_object['samples'] = pd.DataFrame({'t': [], 'n': [], 'flagged': []})
                process_object['counting_function'] = None
                process_object['note'] = f'no eigenvalue beyond the tip above the resolution floor {floor:.4g}'
                self._logger.warning(f'{model.model_id} at n={process_object["n"]}: {process_object["note"]}')
                return process_object
            ts = self._spectrum_service.t_grid(floor, t_max)
        samples = self._samples(process_object, np.asarray(ts, dtype=float))
        process_object['samples'] = samples

        try:
            trusted = samples[~samples['flagged']]
            window = model.fit_window or self._spectrum_service.auto_window(trusted, floor)
            process_object['fit'] = self._spectrum_service.fit_power_law(samples, window)
        except FitError as e:
            process_object['note'] = f'no fit: {e}'
            self._logger.warning(f'{model.model_id} at n={process_object["n"]}: {process_object["note"]}')
        return process_object
