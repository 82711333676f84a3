import numpy as np
import pytest

from model.coefficient import DirectionFunction, constant_direction_function
from model.exceptions import EllipticityError, SymbolError
from model.operator import SchrodingerSpec
from model.problem import ModelDefinition, ScalarModelConfig, VectorModelConfig
from model.symbol import PolyhomSymbol, scalar_component
from services.models.model_builder_service import HYDROGEN_GRIDS, block_projector, twisted_projector

TOL = 1e-10


def _scalar_config(d: int = 1, h: float = 1.0, **kwargs) -> ScalarModelConfig:
    return ScalarModelConfig(
        d=d,
        g=constant_direction_function(d, 1.0, form_valued=True, label='I'),
        h=constant_direction_function(d, h),
        model_id=kwargs.pop('model_id', f'scalar-{d}d'),
        **kwargs
    )


def test_scalar_model(model_builder_service):
    model = model_builder_service.build_scalar_model(_scalar_config(grids=((4.0, 32), (8.0, 64))))
    assert model.kind == 'scalar_psdo'
    assert (model.tip_reference, model.tip_side) == (1.0, 'above')
    assert model.symbol.orders == [0, -1]
    np.testing.assert_allclose([model.expected.C, model.expected.theta], [1.0, 0.5], rtol=1e-12)
    assert model.parameters['gamma0'] > 0
    assert model.parameters['gap'] > 0
    assert model.grids == ((4.0, 32), (8.0, 64))


def test_scalar_model_symbol_values(model_builder_service):
    model = model_builder_service.build_scalar_model(_scalar_config(d=2, h=0.5))
    x = np.array([0.5, 1.0])
    xi = np.array([3.0, 4.0])
    value = model.symbol.evaluate(x, xi)[0, 0]
    np.testing.assert_allclose(value, 1.0 / 2.25 + 0.5 / np.sqrt(26.0), rtol=0, atol=TOL)


def test_scalar_model_checks(model_builder_service):
    with pytest.raises(SymbolError, match='d = 1 or 2'):
        model_builder_service.build_scalar_model(_scalar_config(d=3))
    with pytest.raises(SymbolError, match='strictly positive'):
        model_builder_service.build_scalar_model(_scalar_config(h=-1.0))
    with pytest.raises(SymbolError, match='profile'):
        model_builder_service.build_scalar_model(_scalar_config(subsymbol_profile=lambda x: 2.0 + 0.0 * x[..., 0]))
    indefinite = ScalarModelConfig(d=1, g=constant_direction_function(1, -1.0, form_valued=True), h=constant_direction_function(1, 1.0))
    with pytest.raises(EllipticityError):
        model_builder_service.build_scalar_model(indefinite)


def test_frozen_profile(model_builder_service):
    profile = lambda x: np.exp(-np.sum(x * x, axis=-1))
    live = model_builder_service.build_scalar_model(_scalar_config(subsymbol_profile=profile))
    frozen = model_builder_service.build_scalar_model(_scalar_config(subsymbol_profile=profile, freeze_subsymbol=True))
    x, xi = np.array([1.0]), np.array([2.0])
    lower = live.symbol.evaluate(x, xi, orders=[-1])[0, 0]
    np.testing.assert_allclose(lower, np.exp(-1.0) / np.sqrt(5.0), rtol=0, atol=TOL)
    np.testing.assert_allclose(frozen.symbol.evaluate(x, xi, orders=[-1])[0, 0], 1.0 / np.sqrt(5.0), rtol=0, atol=TOL)


def test_surgery_keeps_the_core(model_builder_service):
    model = model_builder_service.build_scalar_model(_scalar_config(surgery_radius=0.5))
    base = model_builder_service.build_scalar_model(_scalar_config())
    xi = np.array([1.0])
    np.testing.assert_allclose(model.symbol.principal(np.array([0.3]), xi), base.symbol.principal(np.array([0.3]), xi), rtol=0, atol=TOL)
    np.testing.assert_allclose(model.symbol.principal(np.array([2.0]), xi), 0.5 * base.symbol.principal(np.array([2.0]), xi), rtol=0, atol=TOL)


def test_check_setting_rejects_minimum(model_builder_service):
    s = PolyhomSymbol(d=1, N=1, components=(scalar_component(0, lambda x, w: 1.0 + x[..., 0] ** 2),), symbol_id='well')
    with pytest.raises(SymbolError, match='nondegenerate maximum'):
        model_builder_service.check_setting(s)


def test_projectors():
    omega = np.array([[0.6, 0.8], [1.0, 0.0], [-0.28, 0.96]])
    for p in (twisted_projector(omega), block_projector(3)(omega)):
        assert p.shape == (3, 3, 3)
        np.testing.assert_allclose(p @ p, p, rtol=0, atol=TOL)
        np.testing.assert_allclose(np.trace(p, axis1=-2, axis2=-1), 1.0, rtol=0, atol=TOL)


def test_block_vector_model(model_builder_service, quantization_service):
    scalar_config = _scalar_config()
    vector = model_builder_service.build_vector_model(VectorModelConfig(scalar=scalar_config, N=2, projector=block_projector(2), model_id='block'))
    scalar = model_builder_service.build_scalar_model(scalar_config)
    assert vector.kind == 'vector_psdo'
    assert vector.parameters['complement_level'] == -0.5
    np.testing.assert_allclose(vector.expected.C, scalar.expected.C, rtol=1e-6)

    grid = quantization_service.make_grid(1, 4.0, 32, fiber_dim=2)
    scalar_values = np.linalg.eigvalsh(quantization_service.assemble_operator(scalar.symbol, grid).data)
    vector_values = np.linalg.eigvalsh(quantization_service.assemble_operator(vector.symbol, grid).data)
    expected = np.sort(np.concatenate([scalar_values, np.full(32, -0.5)]))
    np.testing.assert_allclose(vector_values, expected, rtol=0, atol=TOL)


def test_twisted_vector_model(model_builder_service):
    scalar_config = _scalar_config(d=2)
    model = model_builder_service.build_vector_model(VectorModelConfig(scalar=scalar_config, N=3, projector=twisted_projector, twisted=True))
    closed = model_builder_service.build_scalar_model(scalar_config).expected
    np.testing.assert_allclose(model.expected.C, closed.C, rtol=1e-6)
    assert model.expected.notes


def test_vector_model_checks(model_builder_service):
    with pytest.raises(SymbolError, match='N >= 2'):
        model_builder_service.build_vector_model(VectorModelConfig(scalar=_scalar_config(), N=1, projector=block_projector(1)))
    identity = lambda omega: np.broadcast_to(np.eye(2, dtype=complex), np.shape(omega)[:-1] + (2, 2))
    with pytest.raises(SymbolError, match='rank-one'):
        model_builder_service.build_vector_model(VectorModelConfig(scalar=_scalar_config(), N=2, projector=identity))


def test_schrodinger_model(model_builder_service):
    spec = SchrodingerSpec(
        d=1,
        a2=constant_direction_function(1, 1.0, form_valued=True),
        h=constant_direction_function(1, 1.0),
        coupling=2.0,
        spec_id='coulomb'
    )
    model = model_builder_service.build_schrodinger_model(spec, grids=((50.0, 1000), (100.0, 2000)))
    assert (model.kind, model.tip_reference, model.tip_side, model.quantization) == ('schrodinger', 0.0, 'below', 'schrodinger')
    np.testing.assert_allclose(model.expected.C, 2.0, rtol=1e-12)
    np.testing.assert_allclose(model.parameters['gamma0'], 1.0, rtol=0, atol=TOL)
    assert model.potential_scale == 2.0


def test_hydrogen_model(model_builder_service):
    model = model_builder_service.build_hydrogen_model()
    assert model.grids == HYDROGEN_GRIDS
    np.testing.assert_allclose(model.expected.C, 1.0 / 24.0, rtol=1e-10)
    assert np.count_nonzero(model.exact_spectrum(0.01) < -0.01) == 30
    stronger = model_builder_service.build_hydrogen_model(q=2.0)
    np.testing.assert_allclose(stronger.expected.C, 8.0 / 24.0, rtol=1e-10)


def test_build_from_definition(model_builder_service):
    spec = SchrodingerSpec(d=1, a2=constant_direction_function(1, 1.0, form_valued=True), h=constant_direction_function(1, 1.0))
    definition = ModelDefinition(kind='schrodinger', model_id='coulomb', d=1, spec=spec, grids=((50.0, 1000), (100.0, 2000)), storage='dense')
    model = model_builder_service.build_from_definition(definition)
    assert model.model_id == 'coulomb'
    assert model.storage == 'dense'
    assert model.grids == definition.grids
    with pytest.raises(SymbolError, match='no operator'):
        model_builder_service.build_from_definition(ModelDefinition(kind='np', model_id='np', d=2))


def test_coefficient_fields(model_builder_service):
    a2, h, d = model_builder_service.coefficient_fields(ModelDefinition(kind='hydrogen', model_id='h', d=3, q=3.0))
    assert d == 3
    np.testing.assert_allclose(h(np.array([[0.0, 0.0, 1.0]])), [3.0], rtol=0, atol=TOL)
    np.testing.assert_allclose(a2(np.array([[0.0, 0.0, 1.0]]))[0], np.eye(3), rtol=0, atol=TOL)
    spec = SchrodingerSpec(d=1, a2=constant_direction_function(1, 1.0, form_valued=True), h=DirectionFunction(d=1, evaluator=lambda w: 1.0 + 0.5 * w[..., 0]), coupling=2.0)
    _, scaled, _ = model_builder_service.coefficient_fields(ModelDefinition(kind='schrodinger', model_id='s', d=1, spec=spec))
    np.testing.assert_allclose(scaled(np.array([[1.0], [-1.0]])), [3.0, 1.0], rtol=0, atol=TOL)
    with pytest.raises(SymbolError):
        model_builder_service.coefficient_fields(ModelDefinition(kind='np', model_id='np', d=2))
