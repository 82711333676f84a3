import numpy as np
import pandas as pd
import pytest

from model.elasticity import KappaField
from utils.config.model_config_adapter import ModelConfigAdapter

SCALAR_MODEL = '[model]\nkind = scalar_psdo\nid = scalar-1d\nd = 1\n[grid]\nladder = 4:32, 4:48\n'
COULOMB_MODEL = '[model]\nkind = schrodinger\nid = coulomb\nd = 1\nh = 1\n[grid]\nladder = 20:200, 40:400\n'


def _definition(text: str):
    return ModelConfigAdapter().read_text(text)


def test_coefficient_closed_and_radial(lab):
    closed = lab.coefficient(d=3)
    np.testing.assert_allclose([closed.C, closed.theta], [1.0 / 24.0, 1.5], rtol=1e-10)
    radial = lab.coefficient(d=3, method='radial')
    np.testing.assert_allclose(radial.C, closed.C, rtol=1e-5)
    hydrogen = lab.coefficient(_definition('[model]\nkind = hydrogen\nq = 2\n'))
    np.testing.assert_allclose(hydrogen.C, 8.0 / 24.0, rtol=1e-10)


def test_coefficient_monte_carlo(lab):
    report = lab.coefficient(d=3, method='mc', samples=2_000_000, seed=5)
    assert report.stderr > 0
    np.testing.assert_allclose(report.C, 1.0 / 24.0, rtol=0.1)
    assert lab.coefficient(d=3, method='mc', samples=200_000, seed=5).C == lab.coefficient(d=3, method='mc', samples=200_000, seed=5).C


def test_coefficient_unknown_method(lab):
    with pytest.raises(ValueError, match='Unknown coefficient method'):
        lab.coefficient(d=1, method='guess')


def test_spectrum(lab):
    level = lab.spectrum(_definition(SCALAR_MODEL), 4.0, 32, keep_eigenvalues=True)
    assert level.size == 32
    assert level.eigenvalues.size == 32
    assert list(level.samples.columns) == ['t', 'n', 'flagged']


def test_run(lab):
    report = lab.run(_definition(COULOMB_MODEL), seeds=(1,))
    assert report.model_id == 'coulomb'
    assert [level.n for level in report.levels] == [200, 400]
    assert report.seeds == (1,)


def test_fit(lab):
    ts = np.logspace(-3.0, 0.0, 37)
    samples = pd.DataFrame({'t': ts, 'n': 5.0 / ts, 'flagged': ts < 1e-2})
    fit = lab.fit(samples)
    assert fit.window[0] >= 1e-2 * (1 - 1e-12)
    np.testing.assert_allclose([fit.C, fit.theta], [5.0, 1.0], rtol=1e-10)
    fixed = lab.fit(samples, window=(1e-3, 1e-1))
    assert fixed.window == (1e-3, 1e-1)


def test_np_constant(lab):
    result = lab.np_constant(1.0, 1.0)
    np.testing.assert_allclose(result['kappa'], 1.0 / 6.0, rtol=0, atol=1e-12)
    (neg_low, neg_high), zero, (low, high) = result['essential_spectrum']
    np.testing.assert_allclose([low, high, neg_low, neg_high], [1.0 / 6.0, 1.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0], rtol=0, atol=1e-12)
    assert zero == (0.0, 0.0)
    assert result['order'] is None


def test_np_field(lab):
    bump = KappaField(evaluator=lambda x: 0.25 - 0.05 * np.sum(x * x, axis=-1), maximizer=(0.0, 0.0), label='bump')
    result = lab.np_field(bump)
    assert result['label'] == 'bump'
    assert result['order']['theta'] == 1.0
    assert result['order']['extremum'] == 'maximum'
    assert lab.np_field(KappaField(evaluator=bump.evaluator))['order'] is None


def test_export(lab):
    op = lab.export(_definition(COULOMB_MODEL), 20.0, 200)
    assert (op.size, op.storage, op.bandwidth) == (200, 'banded', 1)
    with pytest.raises(ValueError, match='closed-form spectrum'):
        lab.export(_definition('[model]\nkind = hydrogen\n'), 10.0, 64)


def test_verify(lab):
    report = lab.verify(criteria=[5], quick=True, seed=2)
    assert report.passed
    assert report.seed == 2
