import numpy as np
import pytest

from model.coefficient import constant_direction_function
from model.exceptions import EllipticityError, GridSizeError, SymbolError
from model.operator import SchrodingerSpec
from model.symbol import PolyhomSymbol, SymbolComponent, scalar_component
from services.quantize.quantization_service import SYMMETRIZATION_WARNING

TOL = 1e-10
DEFECT_TOL = 1e-13


def _multiplication_symbol(d: int, func) -> PolyhomSymbol:
    return PolyhomSymbol(d=d, N=1, components=(scalar_component(0, lambda x, xi: func(x), homogeneous=False, label='v(x)'),))


def _laplace_spec(d: int, h: float = 0.0) -> SchrodingerSpec:
    return SchrodingerSpec(
        d=d,
        a2=constant_direction_function(d, 1.0, form_valued=True, label='I'),
        h=constant_direction_function(d, h, label=f'{h:g}'),
        spec_id=f'laplace-{d}d'
    )


@pytest.mark.parametrize('d, n, q', [(1, 16, 'weyl'), (1, 16, 'left'), (2, 8, 'weyl'), (2, 8, 'left')])
def test_identity_symbol(quantization_service, d, n, q):
    grid = quantization_service.make_grid(d, 5.0, n)
    op = quantization_service.assemble_operator(_multiplication_symbol(d, lambda x: 1.0), grid, q=q)
    assert op.size == n ** d
    np.testing.assert_allclose(op.data, np.eye(op.size), rtol=0, atol=TOL)


@pytest.mark.parametrize('q', ['weyl', 'left'])
def test_multiplication_symbol_is_diagonal(quantization_service, q):
    grid = quantization_service.make_grid(1, 4.0, 32)
    op = quantization_service.assemble_operator(_multiplication_symbol(1, lambda x: np.cos(x[..., 0])), grid, q=q)
    np.testing.assert_allclose(op.data, np.diag(np.cos(grid.nodes_1d)), rtol=0, atol=TOL)


def test_multiplication_symbol_2d(quantization_service):
    grid = quantization_service.make_grid(2, 3.0, 8)
    op = quantization_service.assemble_operator(_multiplication_symbol(2, lambda x: x[..., 0] - 2.0 * x[..., 1]), grid)
    nodes = grid.nodes
    np.testing.assert_allclose(op.data, np.diag(nodes[:, 0] - 2.0 * nodes[:, 1]), rtol=0, atol=TOL)


def test_fourier_multiplier_spectrum(quantization_service):
    grid = quantization_service.make_grid(1, 2.0, 16)
    s = PolyhomSymbol(d=1, N=1, components=(SymbolComponent.from_polynomial(2, {((0,), (2,)): 1.0}),))
    op = quantization_service.assemble_operator(s, grid)
    expected = np.sort(grid.frequencies_1d ** 2)
    np.testing.assert_allclose(np.linalg.eigvalsh(op.data), expected, rtol=0, atol=TOL * expected.max())


def test_assembled_operator_is_hermitian(quantization_service):
    grid = quantization_service.make_grid(1, 4.0, 24)
    s = PolyhomSymbol(
        d=1,
        N=1,
        components=(
            scalar_component(0, lambda x, w: 1.0 / (1.0 + x[..., 0] ** 2)),
            scalar_component(-1, lambda x, w: 1.0 + 0.0 * w[..., 0])
        )
    )
    op = quantization_service.assemble_operator(s, grid)
    np.testing.assert_allclose(op.data, op.data.conj().T, rtol=0, atol=1e-14)
    assert op.meta['symmetrized']
    assert op.meta['symmetrization_defect'] >= 0.0


def _frequency_symbol(func) -> PolyhomSymbol:
    return PolyhomSymbol(d=1, N=1, components=(scalar_component(0, lambda x, xi: func(xi[..., 0]), homogeneous=False, label='w(xi)'),))


def test_weyl_symmetrization_defect_under_refinement(quantization_service):
    s = PolyhomSymbol(
        d=1,
        N=1,
        components=(scalar_component(0, lambda x, xi: 1.0 / (1.0 + x[..., 0] ** 2) + np.cos(x[..., 0]) * np.exp(-xi[..., 0] ** 2), homogeneous=False),)
    )
    defects = [
        quantization_service.assemble_operator(s, quantization_service.make_grid(1, 4.0, n)).meta['symmetrization_defect']
        for n in (32, 64)
    ]
    # a real symbol gives a Hermitian Weyl matrix up to rounding at every n
    assert max(defects) <= DEFECT_TOL
    assert defects[1] <= max(defects[0] / 2.0, DEFECT_TOL)
    left = quantization_service.assemble_operator(s, quantization_service.make_grid(1, 4.0, 32), q='left')
    assert left.meta['symmetrization_defect'] > SYMMETRIZATION_WARNING
    assert left.meta['warnings']


def _commutator_norm(quantization_service, grid, v, w) -> float:
    V = quantization_service.assemble_operator(_multiplication_symbol(1, v), grid).data
    W = quantization_service.assemble_operator(_frequency_symbol(w), grid).data
    return float(np.linalg.norm(V @ W - W @ V, 2))


def test_multiplication_and_multiplier_commute_when_one_is_constant(quantization_service):
    grid = quantization_service.make_grid(1, 16.0, 256)
    gaussian = lambda y: np.exp(-(y / 2.0) ** 2)
    assert _commutator_norm(quantization_service, grid, lambda x: 1.0, gaussian) <= TOL
    assert _commutator_norm(quantization_service, grid, lambda x: gaussian(x[..., 0]), lambda xi: 2.0 + 0.0 * xi) <= TOL
    assert _commutator_norm(quantization_service, grid, lambda x: gaussian(x[..., 0]), gaussian) > 1e-2


def test_commutator_shrinks_for_slower_symbols(quantization_service):
    grid = quantization_service.make_grid(1, 16.0, 256)
    norms = [
        _commutator_norm(quantization_service, grid, lambda x, s=s: np.exp(-(x[..., 0] / s) ** 2), lambda xi, s=s: np.exp(-(xi / s) ** 2))
        for s in (2.0, 4.0)
    ]
    # the leading term is the Poisson bracket v'(x) w'(xi), which drops by 4 when both scales double
    assert norms[1] * 1.5 <= norms[0]


def test_assembly_checks(quantization_service):
    grid = quantization_service.make_grid(1, 1.0, 8)
    with pytest.raises(SymbolError):
        quantization_service.assemble_operator(_multiplication_symbol(1, lambda x: 1.0), grid, q='anti')
    with pytest.raises(SymbolError):
        quantization_service.assemble_operator(_multiplication_symbol(2, lambda x: 1.0), grid)
    with pytest.raises(GridSizeError):
        quantization_service.make_grid(2, 1.0, 160)


def test_dirichlet_laplacian_closed_form(quantization_service):
    n, L = 200, 10.0
    grid = quantization_service.make_grid(1, L, n, dense=False)
    op = quantization_service.assemble_schrodinger(_laplace_spec(1), grid)
    assert op.is_tridiagonal
    spacing = 2.0 * L / (n + 1)
    k = np.arange(1, n + 1)
    expected = 4.0 / spacing ** 2 * np.sin(k * np.pi / (2.0 * (n + 1))) ** 2
    values = np.linalg.eigvalsh(op.to_dense())
    np.testing.assert_allclose(values, np.sort(expected), rtol=1e-10, atol=1e-10)


def test_kinetic_part_is_positive(quantization_service):
    grid = quantization_service.make_grid(2, 4.0, 12, dense=False)
    spec = SchrodingerSpec(
        d=2,
        a2=constant_direction_function(2, np.array([[2.0, 0.5], [0.5, 1.0]]), form_valued=True),
        h=constant_direction_function(2, 0.0),
        spec_id='aniso'
    )
    values = np.linalg.eigvalsh(quantization_service.assemble_schrodinger(spec, grid, storage='dense').data)
    assert values.min() > -1e-10 * values.max()


def test_attractive_potential_binds(quantization_service):
    grid = quantization_service.make_grid(1, 10.0, 200, dense=False)
    op = quantization_service.assemble_schrodinger(_laplace_spec(1, h=1.0), grid)
    assert np.linalg.eigvalsh(op.to_dense()).min() < 0.0
    assert op.meta['potential_min'] < 0.0


def test_banded_matches_dense(quantization_service):
    grid = quantization_service.make_grid(2, 5.0, 8, dense=False)
    spec = _laplace_spec(2, h=1.0)
    banded = quantization_service.assemble_schrodinger(spec, grid, storage='banded')
    dense = quantization_service.assemble_schrodinger(spec, grid, storage='dense')
    assert banded.bandwidth == 8
    np.testing.assert_allclose(banded.to_dense(), dense.data, rtol=0, atol=1e-12)


def test_non_elliptic_form(quantization_service):
    spec = SchrodingerSpec(d=1, a2=constant_direction_function(1, -1.0, form_valued=True, label='-1'), h=constant_direction_function(1, 1.0))
    grid = quantization_service.make_grid(1, 1.0, 8, dense=False)
    with pytest.raises(EllipticityError, match='direction'):
        quantization_service.assemble_schrodinger(spec, grid)
