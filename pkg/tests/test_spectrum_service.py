import numpy as np
import pandas as pd
import pytest

from model.coefficient import DirectionFunction, constant_direction_function
from model.exceptions import FitError
from model.operator import Grid, HermitianOperator, SchrodingerSpec
from services.spectra.spectrum_service import TAIL_GRADIENT

TOL = 1e-10


def _dense(values) -> HermitianOperator:
    matrix = np.diag(np.asarray(values, dtype=complex))
    return HermitianOperator(size=matrix.shape[0], storage='dense', data=matrix, grid=Grid(d=1, L=1.0, n=8), fiber_dim=1, quantization='custom', source_id='diag')


def _power_law_samples(C: float, theta: float, ts) -> pd.DataFrame:
    ts = np.asarray(ts, dtype=float)
    return pd.DataFrame({'t': ts, 'n': C * ts ** -theta, 'flagged': np.zeros(ts.size, dtype=bool)})


def _coulomb_spec(c0: float, c1: float, a: float) -> SchrodingerSpec:
    return SchrodingerSpec(
        d=1,
        a2=constant_direction_function(1, a, form_valued=True),
        h=DirectionFunction(d=1, evaluator=lambda w: c0 + c1 * w[..., 0], label=f'{c0:.3f}+{c1:.3f}w1'),
        spec_id='coulomb-1d'
    )


def test_eigenvalues_sorted(spectrum_service):
    np.testing.assert_allclose(spectrum_service.eigenvalues(_dense([3.0, 1.0, 2.0])), [1.0, 2.0, 3.0], rtol=0, atol=TOL)


def test_counting_above_tip(spectrum_service):
    cf = spectrum_service.make_counting_function(np.array([1.5, 1.2, 1.05, 0.9]), 1.0, 'above')
    assert spectrum_service.counting(cf, 0.1) == 2


def test_hydrogen_multiplicities(spectrum_service, coefficient_service):
    t = 1.0 / 36.0 - 1e-9
    cf = spectrum_service.make_counting_function(coefficient_service.hydrogen_spectrum(t), 0.0, 'below')
    assert spectrum_service.counting(cf, t) == 14


def test_counting_samples_flags(spectrum_service):
    cf = spectrum_service.make_counting_function(np.array([-1.0, -0.1, -0.01]), 0.0, 'below', resolution_floor=0.05)
    samples = spectrum_service.counting_samples(cf, [0.5, 0.005, 0.05])
    assert list(samples.columns) == ['t', 'n', 'flagged']
    np.testing.assert_allclose(samples['t'], [0.005, 0.05, 0.5], rtol=0, atol=0)
    assert samples['n'].tolist() == [3, 2, 1]
    assert samples['flagged'].tolist() == [True, False, False]


def test_exact_power_law_fits(spectrum_service):
    ts = [0.5, 0.2, 0.1, 0.05, 0.02]
    fit = spectrum_service.fit_power_law(_power_law_samples(5.0, 1.0, ts), (0.02, 0.5))
    np.testing.assert_allclose([fit.C, fit.theta, fit.r_squared], [5.0, 1.0, 1.0], rtol=1e-10)
    assert fit.point_count == 5

    fit = spectrum_service.fit_power_law([(t, 2.0 * t ** -0.5) for t in ts], (0.02, 0.5))
    np.testing.assert_allclose([fit.C, fit.theta], [2.0, 0.5], rtol=1e-10)


def test_fit_scale_equivariance(spectrum_service):
    ts = np.logspace(-3.0, -1.0, 12)
    rng = np.random.default_rng(4)
    n = np.round(0.7 * ts ** -1.3 * (1.0 + 0.05 * rng.standard_normal(ts.size)))
    samples = pd.DataFrame({'t': ts, 'n': n})
    base = spectrum_service.fit_power_law(samples, (1e-3, 1e-1))
    scaled = spectrum_service.fit_power_law(samples.assign(n=3.0 * n), (1e-3, 1e-1))
    np.testing.assert_allclose(scaled.C, 3.0 * base.C, rtol=1e-12)
    np.testing.assert_allclose(scaled.theta, base.theta, rtol=1e-12)


def test_fit_drops_zero_counts(spectrum_service):
    ts = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02]
    samples = _power_law_samples(5.0, 1.0, ts)
    samples.loc[0, 'n'] = 0.0
    fit = spectrum_service.fit_power_law(samples, (0.02, 1.0))
    assert fit.notes == ('dropped 1 samples with n = 0',)
    np.testing.assert_allclose(fit.C, 5.0, rtol=1e-10)


def test_fit_needs_five_points(spectrum_service):
    with pytest.raises(FitError, match='need 5'):
        spectrum_service.fit_power_law(_power_law_samples(1.0, 1.0, [0.1, 0.2, 0.3, 0.4]), (0.1, 0.4))
    with pytest.raises(FitError):
        spectrum_service.fit_power_law(_power_law_samples(1.0, 1.0, [0.1, 0.2]), (0.4, 0.1))


def test_hydrogen_counting_fit(spectrum_service, coefficient_service):
    ts = 10.0 ** (-6.0 + np.arange(25) / 12.0)
    fit = spectrum_service.fit_power_law([(t, coefficient_service.hydrogen_counting(t)) for t in ts], (1e-6, 1e-4))
    assert 1.47 <= fit.theta <= 1.53
    # the fitted law reproduces n ~ t^(-3/2) / 24 inside the window
    np.testing.assert_allclose(fit.C * 1e-5 ** -fit.theta, 1e-5 ** -1.5 / 24.0, rtol=0.05)


def test_hydrogen_counting_fit_two_decades(spectrum_service, coefficient_service):
    ts = 10.0 ** (-4.0 + (np.arange(24) + 0.5) / 12.0)
    fit = spectrum_service.fit_power_law([(t, coefficient_service.hydrogen_counting(t)) for t in ts], (1e-4, 1e-2))
    assert abs(fit.theta / 1.5 - 1.0) <= 0.05
    assert abs(fit.C * 24.0 - 1.0) <= 0.10


def test_auto_window_above_floor(spectrum_service):
    ts = np.logspace(-4.0, 0.0, 49)
    window = spectrum_service.auto_window(_power_law_samples(10.0, 1.0, ts), 1e-3)
    assert window[0] >= 1e-3 * (1 - 1e-12)
    np.testing.assert_allclose(window[1] / window[0], 10.0, rtol=1e-12)
    with pytest.raises(FitError):
        spectrum_service.auto_window(pd.DataFrame({'t': ts, 'n': np.zeros(ts.size)}), 1e-3)


def test_t_grid(spectrum_service):
    ts = spectrum_service.t_grid(1e-3, 1.0)
    np.testing.assert_allclose(ts[0], 1e-4, rtol=1e-12)
    np.testing.assert_allclose(ts[1] / ts[0], 10.0 ** (1.0 / 12.0), rtol=1e-12)
    assert ts[-1] <= 1.0 * (1 + 1e-12)
    with pytest.raises(FitError):
        spectrum_service.t_grid(1.0, 0.5)


def test_counting_below(spectrum_service):
    m = np.diag([-3.0, -1.0, 0.5])
    assert spectrum_service.counting_below(m, [0.5, 2.0, 5.0]).tolist() == [2, 1, 0]


def test_sturm_matches_dense(spectrum_service, quantization_service):
    rng = np.random.default_rng(7)
    L, n = 20.0, 400
    grid = quantization_service.make_grid(1, L, n, dense=False)
    for _ in range(20):
        c0 = rng.uniform(0.5, 1.5)
        spec = _coulomb_spec(c0, rng.uniform(-0.25, 0.25) * c0, rng.uniform(0.5, 2.0))
        values = np.linalg.eigvalsh(quantization_service.assemble_schrodinger(spec, grid).to_dense())
        for t in rng.uniform(0.005, 0.2, 3):
            expected = int(np.count_nonzero(values < -t))
            assert spectrum_service.sturm_count_1d(spec, t, L, n) == expected


def test_sturm_count_free_operator(spectrum_service):
    spec = SchrodingerSpec(
        d=1,
        a2=constant_direction_function(1, 1.0, form_valued=True),
        h=constant_direction_function(1, 0.0)
    )
    assert spectrum_service.sturm_count_1d(spec, 1e-6, 50.0, 1000) == 0


def test_sturm_count_arguments(spectrum_service):
    spec = _coulomb_spec(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        spectrum_service.sturm_count_1d(spec, 0.0, 10.0, 100)
    spec_2d = SchrodingerSpec(d=2, a2=constant_direction_function(2, 1.0, form_valued=True), h=constant_direction_function(2, 1.0))
    with pytest.raises(ValueError, match='d = 1'):
        spectrum_service.sturm_count_1d(spec_2d, 0.1, 10.0, 100)


def test_sturm_counts_are_monotone(spectrum_service, quantization_service):
    grid = quantization_service.make_grid(1, 50.0, 2000, dense=False)
    op = quantization_service.assemble_schrodinger(_coulomb_spec(1.0, 0.0, 1.0), grid)
    counts = spectrum_service.sturm_counts(op, np.logspace(-3.0, -0.5, 20))
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[0] > counts[-1]


def test_resolution_floors(spectrum_service):
    spec = _coulomb_spec(1.0, 0.0, 1.0)
    coarse = spectrum_service.schrodinger_resolution_floor(spec, 100.0, 1000, 1.0)
    fine = spectrum_service.schrodinger_resolution_floor(spec, 1000.0, 100_000, 1.0)
    np.testing.assert_allclose([coarse, fine], [0.2 * TAIL_GRADIENT, 0.02 * TAIL_GRADIENT], rtol=1e-12)
    np.testing.assert_allclose(coarse, 0.07698, rtol=1e-4)
    free = spectrum_service.schrodinger_resolution_floor(_coulomb_spec(0.0, 0.0, 1.0), 100.0, 1000, 2.0)
    np.testing.assert_allclose(free, 2.0 * (np.pi / 200.0) ** 2, rtol=1e-12)
    assert spectrum_service.psdo_resolution_floor(1.0, 4.0, 128) < spectrum_service.psdo_resolution_floor(1.0, 4.0, 64)
