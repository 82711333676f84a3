import json

import numpy as np
import pandas as pd

SAMPLE_COLUMNS = ['t', 'n', 'flagged']


def _plain(value):
    """Recursively turn numpy scalars and arrays into JSON-native values."""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return _plain(float(value))
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value


class ReportAdapter:
    """
    Adapter persisting counting samples as CSV and reports as JSON.

    JSON is written with sorted keys and no timestamps, so repeated seeded
    runs produce identical bytes.
    """

    def to_json(self, report: dict) -> str:
        return json.dumps(_plain(report), sort_keys=True, indent=2)

    def write_json(self, report: dict, path: str) -> None:
        with open(path, 'w') as file:
            file.write(self.to_json(report))
            file.write('\n')

    def read_json(self, path: str) -> dict:
        with open(path, 'r') as file:
            return json.load(file)

    def write_samples(self, samples: pd.DataFrame, path: str) -> None:
        samples[SAMPLE_COLUMNS].to_csv(path, index=False)

    def read_samples(self, path: str) -> pd.DataFrame:
        """
        Read a counting-sample CSV; a missing flagged column is filled with False.

        Raises:
            ValueError: If the t or n column is missing.
        """
        samples = pd.read_csv(path)
        missing = {'t', 'n'} - set(samples.columns)
        if missing:
            raise ValueError(f'{path} lacks columns {sorted(missing)}')
        if 'flagged' not in samples.columns:
            samples['flagged'] = False
        return samples[SAMPLE_COLUMNS].astype({'t': float, 'n': float, 'flagged': bool})
