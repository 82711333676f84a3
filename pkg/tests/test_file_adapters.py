import json

import numpy as np
import pandas as pd
import pytest

from model.operator import Grid, HermitianOperator
from utils.file.adapters.operator_binary_adapter import HEADER, OperatorBinaryAdapter
from utils.file.adapters.report_adapter import ReportAdapter

# payload is stored as complex64
SINGLE_TOL = 1e-6


def _banded() -> HermitianOperator:
    data = np.array([[0.0, 0.5 - 0.25j, 0.5, 0.5 + 0.1j], [2.0, 2.0, 1.0, 3.0]], dtype=complex)
    return HermitianOperator(size=4, storage='banded', data=data, grid=Grid(d=1, L=2.0, n=4), fiber_dim=1, quantization='schrodinger', source_id='band', bandwidth=1)


def _dense() -> HermitianOperator:
    rng = np.random.default_rng(2)
    m = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    m = 0.5 * (m + m.conj().T)
    return HermitianOperator(size=6, storage='dense', data=m, grid=Grid(d=1, L=1.0, n=3), fiber_dim=2, quantization='weyl', source_id='dense')


@pytest.mark.parametrize('op', [_banded(), _dense()], ids=['banded', 'dense'])
def test_operator_bytes(op):
    adapter = OperatorBinaryAdapter()
    content = adapter.to_bytes(op)
    assert content[:4] == b'SPTP'
    assert len(content) == HEADER.size + 8 * op.data.size
    restored = adapter.from_bytes(content)
    assert (restored.storage, restored.size, restored.fiber_dim, restored.quantization, restored.bandwidth) == (op.storage, op.size, op.fiber_dim, op.quantization, op.bandwidth)
    assert restored.grid == op.grid
    np.testing.assert_allclose(restored.data, op.data, rtol=0, atol=SINGLE_TOL)


def test_operator_file(tmp_path):
    adapter = OperatorBinaryAdapter()
    path = str(tmp_path / 'op.sptp')
    written = adapter.write(_banded(), path)
    assert written == (tmp_path / 'op.sptp').stat().st_size
    np.testing.assert_allclose(adapter.read(path).to_dense(), _banded().to_dense(), rtol=0, atol=SINGLE_TOL)


def test_operator_bytes_rejects_bad_content():
    adapter = OperatorBinaryAdapter()
    content = adapter.to_bytes(_banded())
    with pytest.raises(ValueError, match='magic'):
        adapter.from_bytes(b'XXXX' + content[4:])
    with pytest.raises(ValueError, match='version'):
        adapter.from_bytes(content[:4] + (9).to_bytes(2, 'little') + content[6:])
    with pytest.raises(ValueError, match='payload'):
        adapter.from_bytes(content[:-8])
    with pytest.raises(ValueError, match='too short'):
        adapter.from_bytes(content[:10])


def test_report_json():
    adapter = ReportAdapter()
    report = {'b': np.float64(np.inf), 'a': [np.int64(3), np.bool_(True)], 'c': np.array([0.5, 1.5]), 'd': (1, -np.inf)}
    text = adapter.to_json(report)
    assert list(json.loads(text)) == ['a', 'b', 'c', 'd']
    assert json.loads(text) == {'a': [3, True], 'b': 'inf', 'c': [0.5, 1.5], 'd': [1, '-inf']}


def test_report_json_file(tmp_path):
    adapter = ReportAdapter()
    path = str(tmp_path / 'report.json')
    adapter.write_json({'seed': 3, 'passed': True}, path)
    assert adapter.read_json(path) == {'passed': True, 'seed': 3}
    assert (tmp_path / 'report.json').read_text().endswith('\n')


def test_samples_csv(tmp_path):
    adapter = ReportAdapter()
    path = str(tmp_path / 'samples.csv')
    samples = pd.DataFrame({'t': [0.01, 0.1], 'n': [12, 3], 'flagged': [True, False], 'extra': [1, 2]})
    adapter.write_samples(samples, path)
    restored = adapter.read_samples(path)
    assert list(restored.columns) == ['t', 'n', 'flagged']
    assert restored['n'].tolist() == [12.0, 3.0]
    assert restored['flagged'].tolist() == [True, False]


def test_samples_csv_defaults_and_errors(tmp_path):
    adapter = ReportAdapter()
    plain = tmp_path / 'plain.csv'
    plain.write_text('t,n\n0.1,4\n0.2,2\n')
    assert adapter.read_samples(str(plain))['flagged'].tolist() == [False, False]
    broken = tmp_path / 'broken.csv'
    broken.write_text('t,count\n0.1,4\n')
    with pytest.raises(ValueError, match='lacks columns'):
        adapter.read_samples(str(broken))
