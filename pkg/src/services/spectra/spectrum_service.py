import time
from typing import Iterable

import numpy as np
import pandas as pd
from scipy import linalg, stats

from model.counting import CountingFunction, FitResult
from model.exceptions import FitError
from model.operator import HermitianOperator, SchrodingerSpec
from services.asymptotics.sphere_quadrature import sphere_rule
from services.quantize.quantization_service import QuantizationService
from services.spectra.eigensolver_adapters.abstract_eigensolver_adapter import AbstractEigensolverAdapter
from utils.log.log_utils import LogUtils

MIN_FIT_POINTS = 5
POINTS_PER_DECADE = 12
# max over r of r (1 + r^2)^(-3/2), the slope of the Coulomb-type tail
TAIL_GRADIENT = 0.3849001794597505


class SpectrumService:
    """
    Spectra of assembled operators, counting functions near a tip of the
    essential spectrum and power-law fits n(t) ~ C t^(-theta).
    """

    def __init__(
        self,
        eigensolver_adapter: AbstractEigensolverAdapter,
        sturm_adapter: AbstractEigensolverAdapter,
        quantization_service: QuantizationService,
        log_utils: LogUtils
    ):
        """
        Args:
            eigensolver_adapter (AbstractEigensolverAdapter): Full-spectrum engine for every storage.
            sturm_adapter (AbstractEigensolverAdapter): Counting engine for tridiagonal operators.
            quantization_service (QuantizationService): Used to assemble 1D operators for Sturm counts.
            log_utils (LogUtils): Logging utility instance.
        """
        self._eigensolver_adapter = eigensolver_adapter
        self._sturm_adapter = sturm_adapter
        self._quantization_service = quantization_service
        self._logger = log_utils.get_logger(__name__)

    def eigenvalues(self, op: HermitianOperator) -> np.ndarray:
        """
        All eigenvalues of the operator in ascending order.

        Raises:
            EigenSolverError: If the engine does not converge.
        """
        start = time.perf_counter()
        values = self._eigensolver_adapter.eigenvalues(op)
        self._logger.info(f'Solved {op.source_id}: size {op.size}, storage {op.storage}, {time.perf_counter() - start:.2f}s')
        return np.sort(np.asarray(values, dtype=float))

    def make_counting_function(self, eigenvalues: np.ndarray, reference: float, side: str, resolution_floor: float = 0.0) -> CountingFunction:
        return CountingFunction(eigenvalues=eigenvalues, reference=reference, side=side, resolution_floor=resolution_floor)

    def counting(self, cf: CountingFunction, t: float) -> int:
        """Strict count beyond reference +/- t; queries below the resolution floor are answered with a warning."""
        if cf.is_flagged(t):
            self._logger.warning(f'Counting at t = {t:.4g} below the resolution floor {cf.resolution_floor:.4g}')
        return cf.count(t)

    def counting_samples(self, cf: CountingFunction, ts: Iterable[float]) -> pd.DataFrame:
        """
        Evaluate the counting function on a t grid.

        Returns:
            pd.DataFrame: Columns t, n, flagged sorted by t.
        """
        ts = np.sort(np.asarray(list(ts), dtype=float))
        flagged = ts < cf.resolution_floor
        if flagged.any():
            self._logger.warning(f'{int(flagged.sum())} of {ts.size} counting samples lie below the resolution floor {cf.resolution_floor:.4g}')
        return pd.DataFrame({
            't': ts,
            'n': [cf.count(t) for t in ts],
            'flagged': flagged
        })

    def counting_below(self, m: np.ndarray, ts) -> np.ndarray:
        """#{lambda < -t} of a Hermitian matrix for every t, from one eigenvalue computation."""
        eigenvalues = linalg.eigvalsh(m)
        return np.array([int(np.count_nonzero(eigenvalues < -t)) for t in np.atleast_1d(ts)])

    def sturm_counts(self, op: HermitianOperator, ts: Iterable[float]) -> list[int]:
        """#{lambda < -t} for every t, one Sturm pass per value."""
        return [self._sturm_adapter.count_below(op, -float(t)) for t in ts]

    def sturm_count_1d(self, spec: SchrodingerSpec, t: float, L: float, n: int) -> int:
        """
        Number of eigenvalues below -t of the 1D Dirichlet finite-difference operator.

        Raises:
            ValueError: If spec.d != 1 or t <= 0.
        """
        if spec.d != 1:
            raise ValueError(f'Sturm counting needs d = 1, got d = {spec.d}')
        if not t > 0:
            raise ValueError(f'Counting needs t > 0, got {t}')
        grid = self._quantization_service.make_grid(1, L, n, dense=False)
        op = self._quantization_service.assemble_schrodinger(spec, grid, storage='banded')
        return self._sturm_adapter.count_below(op, -float(t))

    def schrodinger_resolution_floor(self, spec: SchrodingerSpec, L: float, n: int, gamma0: float) -> float:
        """
        Smallest t at which a Dirichlet box [-L, L]^d with n points per axis
        still resolves #{lambda < -t}.

        The floor is max(2L/n * |grad V|, (pi / (2L))^2 * gamma0): the change of
        the potential across one grid step against the lowest box mode. |grad V|
        is the largest slope of the regularized tail, TAIL_GRADIENT * coupling * max h_+.
        """
        h_max = self._direction_maximum(spec.h, spec.d) * spec.coupling
        return max(2.0 * L / n * TAIL_GRADIENT * h_max, (np.pi / (2.0 * L)) ** 2 * gamma0)

    def psdo_resolution_floor(self, h_max: float, L: float, n: int) -> float:
        """Size of the order -1 term h / |xi| at the largest frequency of the grid, doubled."""
        xi_max = np.pi * n / (2.0 * L)
        return 2.0 * h_max / xi_max

    def _direction_maximum(self, field, d: int) -> float:
        points, _ = sphere_rule(d, 4 if d > 1 else 0)
        return float(np.max(np.maximum(field(points), 0.0)))

    def t_grid(self, resolution_floor: float, t_max: float, per_decade: int = POINTS_PER_DECADE, below_decades: float = 1.0) -> np.ndarray:
        """
        Geometric t grid from one decade below the floor up to t_max.

        The points under the floor are kept so reports show where resolution is lost.
        """
        if not (resolution_floor > 0 and t_max > resolution_floor):
            raise FitError(f'Empty t range: floor {resolution_floor:.4g}, t_max {t_max:.4g}')
        low = np.log10(resolution_floor) - below_decades
        high = np.log10(t_max)
        count = int(np.floor((high - low) * per_decade)) + 1
        return 10.0 ** (low + np.arange(count) / per_decade)

    def _samples_array(self, samples) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(samples, pd.DataFrame):
            return samples['t'].to_numpy(dtype=float), samples['n'].to_numpy(dtype=float)
        pairs = np.asarray(list(samples), dtype=float).reshape(-1, 2)
        return pairs[:, 0], pairs[:, 1]

    def fit_power_law(self, samples, window: tuple[float, float]) -> FitResult:
        """
        Least squares of log n against log t inside the window.

        Args:
            samples (pd.DataFrame | Iterable[tuple[float, float]]): (t, n) pairs.
            window (tuple[float, float]): Closed interval [t_lo, t_hi].

        Returns:
            FitResult: C = exp(intercept), theta = -slope.

        Raises:
            FitError: On an empty window or fewer than 5 points with n >= 1.
        """
        lo, hi = float(window[0]), float(window[1])
        if not 0 < lo < hi:
            raise FitError(f'Invalid fit window [{lo}, {hi}]')
        t, n = self._samples_array(samples)
        inside = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
        notes = []
        zero = inside & (n < 1)
        if zero.any():
            notes.append(f'dropped {int(zero.sum())} samples with n = 0')
        keep = inside & (n >= 1)
        count = int(keep.sum())
        if count < MIN_FIT_POINTS:
            raise FitError(f'Only {count} usable samples in window [{lo:.4g}, {hi:.4g}], need {MIN_FIT_POINTS}')
        if np.unique(t[keep]).size < 2:
            raise FitError(f'All samples in window [{lo:.4g}, {hi:.4g}] share one t value')
        regression = stats.linregress(np.log(t[keep]), np.log(n[keep]))
        r_squared = float(regression.rvalue ** 2) if np.isfinite(regression.rvalue) else 0.0
        fit = FitResult(
            C=float(np.exp(regression.intercept)),
            theta=float(-regression.slope),
            window=(lo, hi),
            r_squared=r_squared,
            point_count=count,
            intercept_stderr=float(regression.intercept_stderr),
            slope_stderr=float(regression.stderr),
            notes=tuple(notes)
        )
        self._logger.info(f'Fit on [{lo:.4g}, {hi:.4g}]: C = {fit.C:.6g}, theta = {fit.theta:.4f}, r2 = {fit.r_squared:.4f}, {count} points')
        return fit

    def auto_window(self, samples, resolution_floor: float, decades: float = 1.0, per_decade: int = POINTS_PER_DECADE) -> tuple[float, float]:
        """
        Pick the fit window: among windows of the given width starting at or
        above the floor, the one with the best r^2.

        Raises:
            FitError: If no candidate holds enough nonzero samples.
        """
        t, n = self._samples_array(samples)
        usable = t[n >= 1]
        if usable.size == 0:
            raise FitError('No nonzero counting samples to fit')
        top = float(usable.max())
        best = None
        for k in range(int(np.ceil(np.log10(max(top, resolution_floor) / resolution_floor) * per_decade)) + 1):
            lo = resolution_floor * 10.0 ** (k / per_decade)
            hi = lo * 10.0 ** decades
            if hi > top * (1 + 1e-12) and best is not None:
                break
            inside = (t >= lo) & (t <= hi) & (n >= 1)
            if inside.sum() < MIN_FIT_POINTS or np.unique(n[inside]).size < 2:
                continue
            r_squared = stats.linregress(np.log(t[inside]), np.log(n[inside])).rvalue ** 2
            if best is None or r_squared > best[0]:
                best = (float(r_squared), (lo, hi))
        if best is None:
            raise FitError(f'No window above the floor {resolution_floor:.4g} holds {MIN_FIT_POINTS} nonzero samples')
        return best[1]
