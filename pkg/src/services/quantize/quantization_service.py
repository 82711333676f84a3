import time

import numpy as np
from scipy import sparse

from model.coefficient import DirectionFunction
from model.exceptions import EllipticityError, GridSizeError, SymbolError
from model.operator import (
    BANDED_SIZE_LIMIT,
    DENSE_SIZE_LIMIT,
    TRIDIAGONAL_SIZE_LIMIT,
    Grid,
    HermitianOperator,
    SchrodingerSpec,
    make_grid,
    smooth_ramp,
)
from model.symbol import PolyhomSymbol
from services.asymptotics.sphere_quadrature import sphere_mean, sphere_rule
from utils.log.log_utils import LogUtils

SYMMETRIZATION_WARNING = 1e-3
ELLIPTICITY_SAMPLES = 64


class QuantizationService:
    """
    Assembles finite matrices from symbols and Schrodinger specifications.

    Pseudodifferential operators live on the periodic grid with entries
    (1/n^d) sum_xi exp(i (x_j - x_k).xi) a(anchor, xi), where the anchor is
    x_j (left) or (x_j + x_k)/2 (Weyl). Schrodinger operators use a
    divergence-form finite-difference scheme with Dirichlet walls.
    """

    def __init__(self, log_utils: LogUtils):
        self._logger = log_utils.get_logger(__name__)

    def make_grid(self, d: int, L: float, n: int, fiber_dim: int = 1, dense: bool = True) -> Grid:
        return make_grid(d, L, n, fiber_dim=fiber_dim, dense=dense)

    def _anchor_axis(self, g: Grid, q: str) -> np.ndarray:
        if q == 'weyl':
            return -g.L + (g.L / g.n) * np.arange(2 * g.n - 1)
        return g.nodes_1d

    def _pair_indices(self, g: Grid, q: str, s1: int) -> tuple[np.ndarray, np.ndarray]:
        if q == 'weyl':
            j1 = np.arange(max(0, s1 - g.n + 1), min(s1, g.n - 1) + 1)
            return j1, s1 - j1
        return np.full(g.n, s1), np.arange(g.n)

    def _rest_indices(self, g: Grid, q: str) -> tuple[np.ndarray, np.ndarray]:
        """
        For the trailing d-1 axes: flattened anchor index and flattened
        wrapped offset (j - k) mod n for every (row, column) pair, shape (R, R).
        """
        rest = g.d - 1
        if rest == 0:
            return np.zeros((1, 1), dtype=np.intp), np.zeros((1, 1), dtype=np.intp)
        n = g.n
        anchors = 2 * n - 1 if q == 'weyl' else n
        multi = np.stack(np.meshgrid(*([np.arange(n)] * rest), indexing='ij'), axis=-1).reshape(-1, rest)
        j = multi[:, None, :]
        k = multi[None, :, :]
        anchor = j + k if q == 'weyl' else np.broadcast_to(j, (multi.shape[0], multi.shape[0], rest))
        offset = (j - k) % n
        anchor_flat = np.ravel_multi_index(tuple(np.moveaxis(anchor, -1, 0)), (anchors,) * rest)
        offset_flat = np.ravel_multi_index(tuple(np.moveaxis(offset, -1, 0)), (n,) * rest)
        return anchor_flat, offset_flat

    def assemble_operator(self, s: PolyhomSymbol, g: Grid, q: str = 'weyl', symmetrize: bool = True) -> HermitianOperator:
        """
        Assemble the Weyl or left quantization of a symbol on a periodic grid.

        The kernel for every anchor is the inverse FFT of the symbol sampled
        at the lattice frequencies; anchors of the leading axis are processed
        one at a time.

        Args:
            s (PolyhomSymbol): Symbol with s.d == g.d.
            g (Grid): Periodic grid.
            q (str): 'weyl' or 'left'.
            symmetrize (bool): Replace A by (A + A*)/2 (the defect is recorded either way).

        Returns:
            HermitianOperator: Dense operator of size n^d * N; rows are ordered (node, fiber).

        Raises:
            GridSizeError: If the dense size guard is exceeded.
            SymbolError: On a dimension mismatch or unknown quantization.
        """
        if q not in ('weyl', 'left'):
            raise SymbolError(f'Unknown quantization {q!r}')
        if s.d != g.d:
            raise SymbolError(f'Symbol dimension {s.d} does not match grid dimension {g.d}')
        n, d, N = g.n, g.d, s.N
        M = n ** d * N
        if M > DENSE_SIZE_LIMIT:
            raise GridSizeError(f'Dense assembly of size {M} exceeds the guard {DENSE_SIZE_LIMIT}')
        start = time.perf_counter()

        anchor_axis = self._anchor_axis(g, q)
        S = anchor_axis.size
        R = n ** (d - 1)
        rest_anchor, rest_offset = self._rest_indices(g, q)
        rest_points = Grid._lattice(anchor_axis, d - 1) if d > 1 else np.zeros((1, 0))
        freq = Grid._lattice(g.fft_frequencies_1d, d)

        tensor = np.zeros((n, R, N, n, R, N), dtype=complex)
        for s1 in range(S):
            anchors = np.concatenate([np.full((rest_points.shape[0], 1), anchor_axis[s1]), rest_points], axis=1)
            values = s.evaluate(anchors[:, None, :], freq[None, :, :])
            values = values.reshape((rest_points.shape[0],) + (n,) * d + (N, N))
            kernel = np.fft.ifftn(values, axes=tuple(range(1, d + 1)))
            kernel = kernel.reshape(rest_points.shape[0], n, R, N, N)
            j1, k1 = self._pair_indices(g, q, s1)
            offset1 = (j1 - k1) % n
            block = kernel[rest_anchor[None], offset1[:, None, None], rest_offset[None]]
            tensor[j1, :, :, k1, :, :] = block.transpose(0, 1, 3, 2, 4)

        matrix = tensor.reshape(M, M)
        norm = float(np.linalg.norm(matrix))
        defect = float(np.linalg.norm(matrix - matrix.conj().T)) / 2.0
        relative = defect / norm if norm > 0 else 0.0
        warnings = []
        if relative > SYMMETRIZATION_WARNING:
            message = f'Symmetrization defect {relative:.3e} of {s.symbol_id} exceeds {SYMMETRIZATION_WARNING:g}: symbol too rough for the grid'
            self._logger.warning(message)
            warnings.append(message)
        if symmetrize:
            matrix = 0.5 * (matrix + matrix.conj().T)

        self._logger.info(f'Assembled {q} operator of {s.symbol_id}: size {M}, defect {relative:.3e}, {time.perf_counter() - start:.2f}s')
        return HermitianOperator(
            size=M,
            storage='dense',
            data=matrix,
            grid=g,
            fiber_dim=N,
            quantization=q,
            source_id=s.symbol_id,
            meta={
                'symmetrization_defect': relative,
                'symmetrized': symmetrize,
                'warnings': warnings,
                'd': d,
                'n': n,
                'L': g.L
            }
        )

    def _smoothed_field(self, field: DirectionFunction, x: np.ndarray, radius: float) -> np.ndarray:
        """Blend f(x/|x|) with its sphere mean inside |x| <= radius."""
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        omega = x / safe[..., None]
        if np.any(r == 0):
            e1 = np.zeros(x.shape[-1])
            e1[0] = 1.0
            omega = np.where((r == 0)[..., None], e1, omega)
        weight = smooth_ramp(r / radius)
        mean = sphere_mean(field, field.d)
        value = field(omega)
        if field.form_valued:
            return weight[..., None, None] * value + (1.0 - weight[..., None, None]) * mean
        return weight * value + (1.0 - weight) * mean

    def _difference_matrices(self, n: int, d: int) -> list[sparse.csr_matrix]:
        """
        Backward differences from the n^d interior nodes to the (n+1)^d
        staggered points, with zero Dirichlet values outside the box.
        """
        one_d = sparse.diags([np.ones(n), -np.ones(n)], [0, -1], shape=(n + 1, n), format='csr')
        pad = sparse.eye(n + 1, n, format='csr')
        matrices = []
        for axis in range(d):
            factors = [one_d if k == axis else pad for k in range(d)]
            matrix = factors[0]
            for factor in factors[1:]:
                matrix = sparse.kron(matrix, factor, format='csr')
            matrices.append(matrix)
        return matrices

    def assemble_schrodinger(self, spec: SchrodingerSpec, g: Grid, storage: str | None = None) -> HermitianOperator:
        """
        Dirichlet finite-difference matrix of -div(a2 grad) - h (1 + |x|^2)^(-1/2).

        The quadratic form is sum over staggered points of (D u)^T W (D u)
        with backward differences D and the form W evaluated at cell
        centres, so the kinetic part is positive semi-definite.

        Args:
            spec (SchrodingerSpec): Coefficient fields.
            g (Grid): Box [-L, L]^d with n interior points per axis.
            storage (str | None): 'banded' (default, tridiagonal in 1D) or 'dense'.

        Returns:
            HermitianOperator: Real symmetric operator.

        Raises:
            EllipticityError: If a2 is not positive definite at a sampled direction.
            GridSizeError: If the size guards are exceeded.
        """
        if spec.d != g.d:
            raise SymbolError(f'Spec dimension {spec.d} does not match grid dimension {g.d}')
        n, d = g.n, g.d
        M = n ** d
        storage = storage or 'banded'
        limit = DENSE_SIZE_LIMIT if storage == 'dense' else (TRIDIAGONAL_SIZE_LIMIT if d == 1 else BANDED_SIZE_LIMIT)
        if M > limit:
            raise GridSizeError(f'Schrodinger assembly of size {M} exceeds the {storage} guard {limit}')
        start = time.perf_counter()

        directions, _ = sphere_rule(d, 1) if d > 1 else sphere_rule(1, 0)
        if d > 1:
            samples = np.random.default_rng(0).normal(size=(ELLIPTICITY_SAMPLES, d))
            directions = np.concatenate([directions, samples / np.linalg.norm(samples, axis=-1, keepdims=True)])
        gamma0 = spec.a2.ellipticity_constant(directions)

        h = g.dirichlet_spacing
        staggered_axis = -g.L + h * (np.arange(n + 1) + 0.5)
        centres = Grid._lattice(staggered_axis, d)
        forms = self._smoothed_field(spec.a2, centres, spec.smoothing_radius)
        lowest = np.linalg.eigvalsh(forms).min() if d > 1 else float(forms.min())
        if lowest <= 0:
            raise EllipticityError(f'Smoothed form is not positive definite (lowest eigenvalue {lowest:.6g})')

        differences = self._difference_matrices(n, d)
        kinetic = sparse.csr_matrix((M, M))
        for j in range(d):
            for k in range(d):
                weight = sparse.diags(forms[:, j, k])
                kinetic = kinetic + differences[j].T @ weight @ differences[k]
        kinetic = kinetic / (h * h)

        nodes = g.dirichlet_nodes
        amplitude = self._smoothed_field(spec.h, nodes, spec.smoothing_radius)
        potential = -spec.coupling * amplitude / np.sqrt(1.0 + np.sum(nodes * nodes, axis=-1))
        matrix = (kinetic + sparse.diags(potential)).tocsr()
        matrix.sum_duplicates()

        coo = matrix.tocoo()
        bandwidth = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
        if storage == 'dense':
            data = matrix.toarray()
            bandwidth = 0
        else:
            data = np.zeros((bandwidth + 1, M))
            upper = coo.col >= coo.row
            data[bandwidth + coo.row[upper] - coo.col[upper], coo.col[upper]] = coo.data[upper]

        self._logger.info(f'Assembled Schrodinger operator {spec.spec_id}: d={d}, size {M}, bandwidth {bandwidth}, {time.perf_counter() - start:.2f}s')
        return HermitianOperator(
            size=M,
            storage=storage,
            data=data,
            grid=g,
            fiber_dim=1,
            quantization='schrodinger',
            source_id=spec.spec_id,
            bandwidth=bandwidth,
            meta={
                'ellipticity_constant': gamma0,
                'coupling': spec.coupling,
                'potential_min': float(potential.min()),
                'd': d,
                'n': n,
                'L': g.L
            }
        )
