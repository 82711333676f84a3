from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from controller.experiment_controller import ExperimentController
from model.coefficient import constant_direction_function
from model.exceptions import SymbolError
from model.operator import SchrodingerSpec
from model.problem import ScalarModelConfig
from services.pipeline.counting_service import CountingService
from services.pipeline.solve_service import SolveService

HYDROGEN_TS = 10.0 ** (-4.0 + (np.arange(24) + 0.5) / 12.0)


def _scalar_config(grids=((4.0, 32), (4.0, 48))) -> ScalarModelConfig:
    return ScalarModelConfig(
        d=1,
        g=constant_direction_function(1, 1.0, form_valued=True, label='I'),
        h=constant_direction_function(1, 1.0),
        model_id='scalar-1d',
        grids=grids
    )


def _coulomb_spec(h: float = 1.0) -> SchrodingerSpec:
    return SchrodingerSpec(
        d=1,
        a2=constant_direction_function(1, 1.0, form_valued=True),
        h=constant_direction_function(1, h),
        spec_id=f'coulomb-{h:g}'
    )


@pytest.fixture
def sturm_experiment_controller(model_builder_service, assembly_service, spectrum_service, pool_executor, log_utils):
    return ExperimentController(
        model_builder_service=model_builder_service,
        assembly_service=assembly_service,
        solve_service=SolveService(spectrum_service=spectrum_service, log_utils=log_utils, sturm_threshold=100),
        counting_service=CountingService(spectrum_service=spectrum_service, log_utils=log_utils),
        experiment_pool_executor=pool_executor,
        log_utils=log_utils
    )


def test_ladder_needs_two_levels(experiment_controller, model_builder_service):
    model = model_builder_service.build_scalar_model(_scalar_config())
    with pytest.raises(ValueError, match='two levels'):
        experiment_controller.run_experiment(model, grids=((4.0, 32),))


def test_level_failure_is_wrapped(experiment_controller, model_builder_service):
    model = model_builder_service.build_scalar_model(_scalar_config())
    with pytest.raises(RuntimeError, match='Fail in experiment scalar-1d'):
        experiment_controller.run_experiment(model, grids=((4.0, 32), (4.0, 6)))


def test_scalar_experiment(experiment_controller, model_builder_service, spectrum_service):
    model = model_builder_service.build_scalar_model(_scalar_config())
    report = experiment_controller.run_experiment(model, keep_eigenvalues=True, seeds=(7,))
    assert report.model_id == 'scalar-1d'
    assert [level.index for level in report.levels] == [0, 1]
    assert [level.size for level in report.levels] == [32, 48]
    assert report.seeds == (7,)
    np.testing.assert_allclose(report.predicted.C, 1.0, rtol=1e-12)
    for level in report.levels:
        assert list(level.samples.columns) == ['t', 'n', 'flagged']
        assert level.eigenvalues.size == level.size
        np.testing.assert_allclose(level.resolution_floor, spectrum_service.psdo_resolution_floor(1.0, level.L, level.n), rtol=1e-12)
        assert (level.fit is None) == bool(level.note)
    assert set(report.trend) == {'c_ratio', 'theta_ratio', 'c_ratio_improves', 'theta_ratio_improves'}
    assert 'runtime' not in report.to_dict(include_runtime=False)


def test_hydrogen_experiment(experiment_controller, model_builder_service):
    model = model_builder_service.build_hydrogen_model(fit_window=(1e-4, 1e-2))
    report = experiment_controller.run_experiment(model, ts=HYDROGEN_TS)
    for level in report.levels:
        assert level.size == 0
        assert 0.9 <= level.c_ratio <= 1.1
        assert 0.95 <= level.theta_ratio <= 1.05
    first, second = report.levels
    assert first.samples['n'].tolist() == second.samples['n'].tolist()


def test_flip_exchanges_sides(experiment_controller, model_builder_service):
    model = model_builder_service.build_scalar_model(_scalar_config())
    flipped = experiment_controller.flip(model)
    assert (flipped.tip_reference, flipped.tip_side) == (0.0, 'below')
    assert flipped.symbol.meta['flipped']
    ts = np.logspace(-2.0, -0.3, 10)
    direct = experiment_controller.run_level(model, 0, 4.0, 32, ts=ts, keep_eigenvalues=True)
    mirrored = experiment_controller.run_level(flipped, 0, 4.0, 32, ts=ts, keep_eigenvalues=True)
    assert direct.samples['n'].tolist() == mirrored.samples['n'].tolist()
    np.testing.assert_allclose(np.sort(1.0 - mirrored.eigenvalues), direct.eigenvalues, rtol=0, atol=1e-10)


def test_flip_needs_symbol(experiment_controller, model_builder_service):
    with pytest.raises(SymbolError):
        experiment_controller.flip(model_builder_service.build_hydrogen_model())


def test_free_operator_gets_a_note(experiment_controller, model_builder_service):
    model = model_builder_service.build_schrodinger_model(_coulomb_spec(0.0), grids=((20.0, 200), (40.0, 400)))
    report = experiment_controller.run_experiment(model)
    for level in report.levels:
        assert level.fit is None
        assert level.samples.empty
        assert 'no eigenvalue beyond the tip' in level.note
        assert level.c_ratio is None


def test_sturm_path_matches_eigenvalues(experiment_controller, sturm_experiment_controller, model_builder_service):
    model = model_builder_service.build_schrodinger_model(_coulomb_spec(), grids=((20.0, 200), (40.0, 400)))
    ts = np.logspace(-2.0, -0.5, 12)
    dense = experiment_controller.run_experiment(model, ts=ts, keep_eigenvalues=True)
    sturm = sturm_experiment_controller.run_experiment(model, ts=ts, keep_eigenvalues=True)
    for a, b in zip(dense.levels, sturm.levels):
        assert b.eigenvalues is None
        assert a.eigenvalues is not None
        assert a.samples['n'].tolist() == b.samples['n'].tolist()


RULE_TS = np.array([0.1, 0.2, 0.4, 0.8])
RULE_COUNTS = np.array([8, 4, 2, 1])


def _count_table(differing: list[int]):
    def run_experiment(model, ts=None, **kwargs):
        cut = model.model_id.endswith(':surgery')
        levels = []
        for k in differing:
            n = RULE_COUNTS - (cut & (np.arange(RULE_COUNTS.size) < k))
            levels.append(SimpleNamespace(samples=pd.DataFrame({'t': RULE_TS, 'n': n})))
        return SimpleNamespace(levels=levels)
    return run_experiment


@pytest.mark.parametrize('differing, thresholds, passed', [
    ([0, 0], [0.1, 0.1], True),
    ([1, 0], [0.2, 0.1], True),
    ([2, 1], [0.4, 0.2], True),
    ([3, 2, 1], [0.8, 0.4, 0.2], True),
    ([2, 2], [0.4, 0.4], False),
    ([1, 2], [0.2, 0.4], False),
    ([3, 1, 2], [0.8, 0.2, 0.4], False),
    ([2, 4], [0.4, np.inf], False),
    ([4, 4], [np.inf, np.inf], False)
])
def test_localization_needs_decreasing_thresholds(experiment_controller, monkeypatch, differing, thresholds, passed):
    monkeypatch.setattr(experiment_controller, 'run_experiment', _count_table(differing))
    result = experiment_controller.localization_check(_scalar_config(), 1.0, RULE_TS)
    assert result['thresholds'] == thresholds
    assert result['passed'] is passed


@pytest.mark.slow
def test_localization_check(experiment_controller):
    ts = np.logspace(-1.5, 0.0, 19)
    # the surgery only touches the outer eighth of the box, where the states above the tip carry no weight
    result = experiment_controller.localization_check(_scalar_config(grids=((4.0, 64), (4.0, 96))), 3.5, ts)
    assert result['surgery_radius'] == 3.5
    np.testing.assert_allclose(result['thresholds'], [ts[0], ts[0]], rtol=1e-12)
    assert result['passed'] is True


@pytest.mark.slow
def test_freezing_check(experiment_controller):
    config = ScalarModelConfig(
        d=1,
        g=constant_direction_function(1, 1.0, form_valued=True),
        h=constant_direction_function(1, 1.0),
        model_id='profile-1d',
        grids=((4.0, 64), (4.0, 96)),
        subsymbol_profile=lambda x: np.exp(-1e-4 * np.sum(np.asarray(x) ** 2, axis=-1))
    )
    result = experiment_controller.freezing_check(config)
    assert result['model_id'] == 'profile-1d'
    assert abs(result['C_frozen'] - result['C']) < result['confidence_width']
    assert result['passed'] is True
