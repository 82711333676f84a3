from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable

import numpy as np
import pandas as pd
from scipy import integrate, special

from model.coefficient import (
    DEFAULT_NORMALIZATION,
    PRINTED_NORMALIZATION,
    CoefficientReport,
    DirectionFunction,
    PhaseSpaceBounds,
    PhaseVolumeEstimate,
    ScalarHamiltonian,
)
from model.exceptions import BoundaryContactError, EllipticityError
from services.asymptotics.sphere_quadrature import integrate_sphere, sphere_rule
from utils.log.log_utils import LogUtils

MC_BATCH = 1 << 18
SHELL_WIDTH = 0.01
BOUNDS_MARGIN = 1.05
# cap on sqrt(xi^T a2 xi); the part of the tail set above it is below 1% of C
KINETIC_CAPS = {1: 1000.0, 2: 30.0, 3: 6.0}


class CoefficientService:
    """
    Predicted asymptotic pairs (C, theta) of the counting function.

    Three routes are offered: the closed form built from the sphere integral
    of det(a2)^(-1/2) h_+^d, a radial quadrature of the xi slice volumes and a
    Monte-Carlo estimate of the phase volume {H + 1 < 0}. All of them carry
    the (2 pi)^(-d) phase-space factor.
    """

    def __init__(self, mc_pool_executor: ThreadPoolExecutor, log_utils: LogUtils):
        self._mc_pool_executor = mc_pool_executor
        self._logger = log_utils.get_logger(__name__)

    def geometry_constants(self, d: int) -> tuple[float, float]:
        """
        Volume of the unit ball and B(d/2 + 1, d/2), both through log-Gamma.

        Returns:
            tuple[float, float]: (Omega_d, Beta).
        """
        if d < 1:
            raise ValueError(f'Dimension must be positive, got {d}')
        ball = float(np.exp(0.5 * d * np.log(np.pi) - special.gammaln(0.5 * d + 1.0)))
        beta = float(np.exp(special.betaln(0.5 * d + 1.0, 0.5 * d)))
        return ball, beta

    def slice_volume(self, a2: np.ndarray, c: float) -> float:
        """
        Volume of {xi : xi^T a2 xi < c}.

        Raises:
            EllipticityError: If a2 is not symmetric positive definite.
        """
        a2 = np.atleast_2d(np.asarray(a2, dtype=float))
        if np.max(np.abs(a2 - a2.T)) > 1e-12 * max(1.0, float(np.max(np.abs(a2)))):
            raise EllipticityError(f'Form is not symmetric: {a2.tolist()}')
        lowest = float(np.linalg.eigvalsh(a2)[0])
        if lowest <= 0:
            raise EllipticityError(f'Form is not positive definite: lowest eigenvalue {lowest:.6g}')
        if c <= 0:
            return 0.0
        ball, _ = self.geometry_constants(a2.shape[0])
        return ball * float(np.linalg.det(a2)) ** -0.5 * c ** (0.5 * a2.shape[0])

    def _check_form(self, a2: DirectionFunction, d: int) -> float:
        points, _ = sphere_rule(d, 4 if d > 1 else 0)
        return a2.ellipticity_constant(points)

    def _direction_integrand(self, a2: DirectionFunction, h: DirectionFunction, exponent: float) -> Callable[[np.ndarray], np.ndarray]:
        def integrand(omega: np.ndarray) -> np.ndarray:
            forms = a2(omega)
            return np.linalg.det(forms) ** -0.5 * np.maximum(h(omega), 0.0) ** exponent
        return integrand

    def closed_form_coefficient(self, a2: DirectionFunction, h: DirectionFunction, d: int, printed: bool = False) -> CoefficientReport:
        """
        C = (2 pi)^(-d) Omega_d B(d/2 + 1, d/2) * integral over S^(d-1) of det(a2)^(-1/2) h_+^d.

        The exponent d on h_+ comes from the radial integral of (h/r - 1)_+^(d/2) r^(d-1);
        with printed=True the bare-measure form with exponent d/2 is returned instead
        and the report says so.

        Args:
            a2 (DirectionFunction): Form-valued kinetic coefficient.
            h (DirectionFunction): Potential amplitude.
            d (int): Dimension.
            printed (bool): Use the bare measure and exponent d/2.

        Returns:
            CoefficientReport: Method closed_form, theta = d/2.

        Raises:
            EllipticityError: If a2 is not positive definite on the sphere.
            QuadratureError: If node doubling does not converge.
        """
        self._check_form(a2, d)
        ball, beta = self.geometry_constants(d)
        exponent = 0.5 * d if printed else float(d)
        integral, nodes = integrate_sphere(self._direction_integrand(a2, h, exponent), d)
        C = ball * beta * integral
        if not printed:
            C *= (2.0 * np.pi) ** -d
        self._logger.info(f'Closed-form coefficient d={d}: C = {C:.8g} ({nodes} sphere nodes)')
        return CoefficientReport(
            C=float(C),
            theta=0.5 * d,
            method='closed_form',
            normalization=PRINTED_NORMALIZATION if printed else DEFAULT_NORMALIZATION,
            nodes=nodes
        )

    def radial_quadrature_coefficient(self, a2: DirectionFunction, h: DirectionFunction, d: int) -> CoefficientReport:
        """
        Same coefficient as closed_form_coefficient, integrating the slice
        volumes over |x| numerically instead of using the Beta function.
        """
        self._check_form(a2, d)
        ball, _ = self.geometry_constants(d)

        def radial(omega: np.ndarray) -> np.ndarray:
            amplitudes = np.maximum(h(omega), 0.0)
            values = np.empty(amplitudes.shape)
            for i, amplitude in enumerate(amplitudes.reshape(-1)):
                if amplitude <= 0:
                    values.reshape(-1)[i] = 0.0
                    continue
                value, _ = integrate.quad(lambda r: (amplitude / r - 1.0) ** (0.5 * d) * r ** (d - 1), 0.0, amplitude, limit=200)
                values.reshape(-1)[i] = value
            return np.linalg.det(a2(omega)) ** -0.5 * values

        integral, nodes = integrate_sphere(radial, d, rtol=1e-6)
        C = (2.0 * np.pi) ** -d * ball * integral
        return CoefficientReport(C=float(C), theta=0.5 * d, method='radial_quadrature', nodes=nodes)

    def tail_hamiltonian(self, a2: DirectionFunction, h: DirectionFunction, d: int, kinetic_cap: float | None = None) -> ScalarHamiltonian:
        """
        H(x, xi) = xi^T a2(x/|x|) xi - h(x/|x|) / |x|.

        With a kinetic cap, H is +inf wherever xi^T a2 xi > cap^2, so the
        sublevel sets stay bounded in xi.
        """
        def evaluator(x, xi):
            r = np.linalg.norm(x, axis=-1)
            omega = x / np.where(r > 0, r, 1.0)[..., None]
            kinetic = np.einsum('...i,...ij,...j->...', xi, a2(omega), xi)
            values = kinetic - h(omega) / r
            if kinetic_cap is not None:
                values = np.where(kinetic > kinetic_cap ** 2, np.inf, values)
            return values
        label = f'tail[{a2.label},{h.label}]' if kinetic_cap is None else f'tail[{a2.label},{h.label},cap={kinetic_cap:g}]'
        return ScalarHamiltonian(d=d, evaluator=evaluator, label=label)

    def default_bounds(self, a2: DirectionFunction, h: DirectionFunction, d: int, kinetic_cap: float | None = None) -> PhaseSpaceBounds:
        """
        Ball |x| <= 1.05 max h_+ times a xi ball of radius 1.05 cap / sqrt(gamma0).

        Both radii clear the capped tail set by more than the 1% shell, so
        phase_volume_mc on tail_hamiltonian with the same cap never sees a
        shell acceptance.
        """
        points, _ = sphere_rule(d, 4 if d > 1 else 0)
        gamma0 = a2.ellipticity_constant(points)
        h_max = float(np.max(np.maximum(h(points), 0.0)))
        cap = kinetic_cap or KINETIC_CAPS[d]
        return PhaseSpaceBounds(x_radius=BOUNDS_MARGIN * max(h_max, 1e-12), xi_radius=BOUNDS_MARGIN * cap / np.sqrt(gamma0))

    def capped_tail(
        self,
        a2: DirectionFunction,
        h: DirectionFunction,
        d: int,
        kinetic_cap: float | None = None
    ) -> tuple[ScalarHamiltonian, PhaseSpaceBounds]:
        """Tail Hamiltonian and default bounds sharing one kinetic cap (KINETIC_CAPS[d] unless given)."""
        cap = kinetic_cap or KINETIC_CAPS[d]
        return self.tail_hamiltonian(a2, h, d, kinetic_cap=cap), self.default_bounds(a2, h, d, kinetic_cap=cap)

    def _uniform_ball(self, rng: np.random.Generator, count: int, d: int) -> np.ndarray:
        direction = rng.standard_normal((count, d))
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        return direction * rng.random(count)[:, None] ** (1.0 / d)

    def _run_stream(
        self,
        stream_id: int,
        H: ScalarHamiltonian,
        d: int,
        samples: int,
        bounds: PhaseSpaceBounds,
        seed_sequence: np.random.SeedSequence,
        level: float
    ) -> dict:
        rng = np.random.default_rng(seed_sequence)
        metric_root = None
        if bounds.metric is not None:
            values, vectors = np.linalg.eigh(np.asarray(bounds.metric, dtype=float))
            metric_root = vectors @ np.diag(values ** -0.5) @ vectors.T
        total = 0.0
        total_sq = 0.0
        shell = 0.0
        done = 0
        while done < samples:
            count = min(MC_BATCH, samples - done)
            unit_x = self._uniform_ball(rng, count, d)
            unit_xi = self._uniform_ball(rng, count, d)
            x = bounds.x_radius * unit_x
            xi = bounds.xi_radius * (unit_xi if metric_root is None else unit_xi @ metric_root.T)
            values = H(x, xi) + level
            hits = (values < 0).astype(float)
            if H.branches > 1:
                hits = hits.reshape(count, H.branches).sum(axis=-1)
            near = (np.linalg.norm(unit_x, axis=-1) > 1.0 - SHELL_WIDTH) | (np.linalg.norm(unit_xi, axis=-1) > 1.0 - SHELL_WIDTH)
            total += float(hits.sum())
            total_sq += float(np.dot(hits, hits))
            shell += float(hits[near].sum())
            done += count
        return {'stream_id': stream_id, 'samples': samples, 'total': total, 'total_sq': total_sq, 'shell': shell}

    def _box_volume(self, d: int, bounds: PhaseSpaceBounds) -> float:
        ball, _ = self.geometry_constants(d)
        volume = ball * bounds.x_radius ** d * ball * bounds.xi_radius ** d
        if bounds.metric is not None:
            volume *= float(np.linalg.det(np.asarray(bounds.metric, dtype=float))) ** -0.5
        return volume

    def phase_volume(
        self,
        H: ScalarHamiltonian,
        d: int,
        samples: int,
        bounds: PhaseSpaceBounds,
        seed: int = 0,
        streams: int = 4,
        level: float = 1.0
    ) -> PhaseVolumeEstimate:
        """
        Monte-Carlo measure of {(x, xi) : H(x, xi) + level < 0} inside the bounds.

        Streams come from SeedSequence(seed).spawn(streams), run on the pool
        and are merged in stream order, so the estimate depends on the seed only.
        """
        if samples < streams:
            raise ValueError(f'Need at least one sample per stream, got {samples} samples for {streams} streams')
        children = np.random.SeedSequence(seed).spawn(streams)
        shares = [samples // streams + (1 if k < samples % streams else 0) for k in range(streams)]
        futures = [
            self._mc_pool_executor.submit(self._run_stream, k, H, d, shares[k], bounds, children[k], level)
            for k in range(streams)
        ]
        results = sorted([future.result() for future in as_completed(futures)], key=lambda r: r['stream_id'])

        total = sum(r['total'] for r in results)
        total_sq = sum(r['total_sq'] for r in results)
        shell = sum(r['shell'] for r in results)
        mean = total / samples
        variance = max(total_sq / samples - mean * mean, 0.0)
        box = self._box_volume(d, bounds)
        return PhaseVolumeEstimate(
            volume=box * mean,
            stderr=box * float(np.sqrt(variance / samples)),
            accepted=total,
            samples=samples,
            shell=shell,
            shell_fraction=shell / total if total > 0 else 0.0,
            seeds=(seed,)
        )

    def phase_volume_mc(
        self,
        H: ScalarHamiltonian,
        d: int,
        samples: int,
        bounds: PhaseSpaceBounds,
        seed: int = 0,
        streams: int = 4,
        level: float = 1.0
    ) -> CoefficientReport:
        """
        Coefficient (2 pi)^(-d) meas{H + level < 0} by Monte-Carlo.

        Args:
            H (ScalarHamiltonian): Hamiltonian; with branches > 1 the indicators are summed.
            d (int): Dimension.
            samples (int): Total number of samples.
            bounds (PhaseSpaceBounds): Sampling region that must contain the set.
            seed (int): Root seed.
            streams (int): Independent streams run on the pool.
            level (float): Level of the sublevel set.

        Returns:
            CoefficientReport: Method monte_carlo with the propagated standard error.

        Raises:
            BoundaryContactError: If any accepted sample lies in the outer 1% of
                either radius. Tail sets need a kinetic cap, see capped_tail.
        """
        estimate = self.phase_volume(H, d, samples, bounds, seed=seed, streams=streams, level=level)
        factor = (2.0 * np.pi) ** -d
        if estimate.accepted == 0:
            bound = 3.0 * self._box_volume(d, bounds) / samples * factor
            self._logger.warning(f'No accepted samples for {H.label}: C = 0, 95% upper bound {bound:.3g}')
            return CoefficientReport(
                C=0.0,
                theta=0.5 * d,
                method='monte_carlo',
                stderr=bound,
                seeds=(seed,),
                samples=samples,
                notes=('zero acceptances; stderr is the rule-of-three upper bound',)
            )
        if estimate.shell > 0:
            raise BoundaryContactError(
                f'{int(estimate.shell)} accepted samples ({estimate.shell_fraction:.3e} of the accepted) lie in the outer {SHELL_WIDTH:.0%} of the bounds '
                f'(x radius {bounds.x_radius:g}, xi radius {bounds.xi_radius:g}); enlarge the bounds'
            )
        self._logger.info(
            f'Phase volume of {H.label}: {int(estimate.accepted)} accepted of {samples}, '
            f'C = {estimate.volume * factor:.6g} +/- {estimate.stderr * factor:.2g}'
        )
        return CoefficientReport(
            C=estimate.volume * factor,
            theta=0.5 * d,
            method='monte_carlo',
            stderr=estimate.stderr * factor,
            seeds=(seed,),
            samples=samples
        )

    def predicted_counting(self, report: CoefficientReport, t: float) -> float:
        return report.C * t ** -report.theta

    def modified_exponent(self, d: int, kappa: float, l: float = 2.0) -> float:
        """theta = d (1 - kappa) / (kappa l) for |xi|^l - h |x|^(-2 kappa); d/2 at kappa = 1/2, l = 2."""
        if not 0 < kappa < 1:
            raise ValueError(f'kappa must lie in (0, 1), got {kappa}')
        return d * (1.0 - kappa) / (kappa * l)

    def phase_volume_scan(
        self,
        H: ScalarHamiltonian,
        d: int,
        ts: list[float],
        samples: int,
        bounds: Callable[[float], PhaseSpaceBounds],
        seed: int = 0,
        streams: int = 4
    ) -> pd.DataFrame:
        """
        Phase volumes of {H < -t} for several t.

        Returns:
            pd.DataFrame: Columns t, volume, stderr; volumes already carry (2 pi)^(-d).
        """
        rows = []
        factor = (2.0 * np.pi) ** -d
        for t in ts:
            estimate = self.phase_volume(H, d, samples, bounds(t), seed=seed, streams=streams, level=t)
            rows.append({'t': t, 'volume': estimate.volume * factor, 'stderr': estimate.stderr * factor})
        return pd.DataFrame(rows)

    def hydrogen_spectrum(self, t_min: float, q: float = 1.0) -> np.ndarray:
        """
        Negative eigenvalues -q^2 / (4 k^2) of -Laplace - q/|x| in R^3, each
        repeated k^2 times, for every level that can lie below -t_min.
        """
        if not t_min > 0:
            raise ValueError(f'Need t_min > 0, got {t_min}')
        top = int(np.ceil(q / (2.0 * np.sqrt(t_min)))) + 1
        levels = np.arange(1, top + 1)
        return np.sort(np.repeat(-q * q / (4.0 * levels.astype(float) ** 2), levels ** 2))

    def hydrogen_counting(self, t: float, q: float = 1.0) -> int:
        """#{eigenvalues < -t} of the hydrogen operator: sum of k^2 over k < q / (2 sqrt t)."""
        if not t > 0:
            raise ValueError(f'Counting needs t > 0, got {t}')
        bound = q / (2.0 * np.sqrt(t))
        top = int(np.ceil(bound)) - 1
        return int(sum(k * k for k in range(1, top + 1)))
