from dataclasses import dataclass, field

import numpy as np

from model.exceptions import GridSizeError
from model.coefficient import DirectionFunction

DENSE_SIZE_LIMIT = 20_000
TRIDIAGONAL_SIZE_LIMIT = 2_000_000
BANDED_SIZE_LIMIT = 250_000

STORAGE_TAGS = {'dense': 0, 'banded': 1}
QUANTIZATION_TAGS = {'weyl': 0, 'left': 1, 'schrodinger': 2, 'custom': 3}


@dataclass(frozen=True)
class Grid:
    """
    Truncated discretization of R^d on the box [-L, L)^d.

    Periodic nodes are x_j = -L + 2L j / n and frequencies (pi / L) k with
    k in [-n/2, n/2). The Dirichlet lattice used by differential operators
    holds the n interior points of [-L, L] with spacing 2L / (n + 1).
    Multi-indices are flattened in C order (first axis slowest).
    """
    d: int
    L: float
    n: int

    @property
    def spacing(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def frequency_spacing(self) -> float:
        return np.pi / self.L

    @property
    def points(self) -> int:
        return self.n ** self.d

    @property
    def nodes_1d(self) -> np.ndarray:
        return -self.L + self.spacing * np.arange(self.n)

    @property
    def frequencies_1d(self) -> np.ndarray:
        return self.frequency_spacing * np.arange(-self.n // 2, self.n // 2)

    @property
    def fft_frequencies_1d(self) -> np.ndarray:
        """Frequencies in FFT storage order (index k holds k mod n)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    @property
    def dirichlet_spacing(self) -> float:
        return 2.0 * self.L / (self.n + 1)

    @property
    def dirichlet_nodes_1d(self) -> np.ndarray:
        return -self.L + self.dirichlet_spacing * np.arange(1, self.n + 1)

    @staticmethod
    def _lattice(axis: np.ndarray, d: int) -> np.ndarray:
        mesh = np.meshgrid(*([axis] * d), indexing='ij')
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def nodes(self) -> np.ndarray:
        return self._lattice(self.nodes_1d, self.d)

    @property
    def frequencies(self) -> np.ndarray:
        return self._lattice(self.frequencies_1d, self.d)

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        return self._lattice(self.dirichlet_nodes_1d, self.d)


def make_grid(d: int, L: float, n: int, fiber_dim: int = 1, dense: bool = True) -> Grid:
    """
    Validate and build a Grid.

    Args:
        d (int): Dimension, one of 1, 2, 3.
        L (float): Box half-width.
        n (int): Points per axis, even and at least 8.
        fiber_dim (int): Fiber dimension N entering the dense size guard.
        dense (bool): Apply the dense guard n^d * N <= 20000.

    Returns:
        Grid: The validated grid.

    Raises:
        GridSizeError: On malformed parameters or an exceeded size guard.
    """
    if d not in (1, 2, 3):
        raise GridSizeError(f'Dimension must be 1, 2 or 3, got {d}')
    if not L > 0:
        raise GridSizeError(f'Box half-width must be positive, got L = {L}')
    if n < 8 or n % 2:
        raise GridSizeError(f'Points per axis must be even and >= 8, got n = {n}')
    size = n ** d * fiber_dim
    if dense and size > DENSE_SIZE_LIMIT:
        raise GridSizeError(
            f'Dense assembly of size {size} exceeds the guard {DENSE_SIZE_LIMIT}; '
            f'use the banded Schrodinger path or the 1D tridiagonal/Sturm path'
        )
    return Grid(d=d, L=float(L), n=int(n))


@dataclass(frozen=True)
class HermitianOperator:
    """
    Assembled finite Hermitian matrix.

    Dense storage keeps the full (M, M) matrix. Banded storage keeps the
    LAPACK upper band form ab[u + i - j, j] = A[i, j] with u = bandwidth,
    so a tridiagonal operator is banded with bandwidth 1.
    """
    size: int
    storage: str
    data: np.ndarray
    grid: Grid
    fiber_dim: int
    quantization: str
    source_id: str
    bandwidth: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.storage not in STORAGE_TAGS:
            raise ValueError(f'Unknown storage {self.storage!r}')

    @property
    def is_tridiagonal(self) -> bool:
        return self.storage == 'banded' and self.bandwidth == 1

    @property
    def diagonal(self) -> np.ndarray:
        if self.storage == 'dense':
            return np.diag(self.data).copy()
        return self.data[self.bandwidth].copy()

    def to_dense(self) -> np.ndarray:
        if self.storage == 'dense':
            return self.data.copy()
        u, M = self.bandwidth, self.size
        dense = np.zeros((M, M), dtype=self.data.dtype)
        for offset in range(u + 1):
            band = self.data[u - offset, offset:]
            dense[np.arange(M - offset), np.arange(offset, M)] = band
            if offset:
                dense[np.arange(offset, M), np.arange(M - offset)] = np.conj(band)
        return dense

    def flipped(self, level: float = 1.0) -> 'HermitianOperator':
        """Return level * I - A with the same storage."""
        data = -self.data
        if self.storage == 'dense':
            data = data + level * np.eye(self.size, dtype=data.dtype)
        else:
            data = data.copy()
            data[self.bandwidth] += level
        meta = dict(self.meta)
        meta['flipped_at'] = level
        return HermitianOperator(
            size=self.size,
            storage=self.storage,
            data=data,
            grid=self.grid,
            fiber_dim=self.fiber_dim,
            quantization=self.quantization,
            source_id=f'{level:g}-{self.source_id}',
            bandwidth=self.bandwidth,
            meta=meta
        )


@dataclass(frozen=True)
class SchrodingerSpec:
    """
    Operator -div(a2(x/|x|) grad) - coupling * h(x/|x|) * (1 + |x|^2)^(-1/2).

    Both direction fields are blended with their sphere mean inside
    |x| <= smoothing_radius so the coefficients are smooth at the origin.
    """
    d: int
    a2: DirectionFunction
    h: DirectionFunction
    coupling: float = 1.0
    smoothing_radius: float = 1.0
    spec_id: str = 'schrodinger'

    def scaled_potential(self, factor: float) -> 'SchrodingerSpec':
        return SchrodingerSpec(
            d=self.d,
            a2=self.a2,
            h=self.h,
            coupling=self.coupling * factor,
            smoothing_radius=self.smoothing_radius,
            spec_id=f'{self.spec_id}*{factor:g}'
        )


def smooth_ramp(s: np.ndarray) -> np.ndarray:
    """C^1 ramp equal to 0 at s <= 0 and 1 at s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def cutoff(r: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """Smooth cut-off equal to 1 for r <= inner and 0 for r >= outer."""
    return 1.0 - smooth_ramp((np.asarray(r, dtype=float) - inner) / (outer - inner))
