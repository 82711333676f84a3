import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace

import numpy as np

from model.exceptions import SymbolError
from model.process_object import ProcessObject
from model.problem import ExperimentReport, LevelResult, ModelProblem, ScalarModelConfig
from model.symbol import PolyhomSymbol, SymbolComponent
from services.models.model_builder_service import ModelBuilderService
from services.pipeline.assembly_service import AssemblyService
from services.pipeline.counting_service import CountingService
from services.pipeline.solve_service import SolveService
from utils.log.log_utils import LogUtils


class ExperimentController:
    """
    Controller running model problems across grid ladders.

    Each level goes through the assembly, solve and counting stages; levels
    are processed concurrently and merged in ladder order. The controller
    also hosts the spectral flip and the localization and freezing checks.
    """

    def __init__(
        self,
        model_builder_service: ModelBuilderService,
        assembly_service: AssemblyService,
        solve_service: SolveService,
        counting_service: CountingService,
        experiment_pool_executor: ThreadPoolExecutor,
        log_utils: LogUtils
    ):
        """
        Args:
            model_builder_service (ModelBuilderService): Builds scalar and vector models for the checks.
            assembly_service (AssemblyService): Grid and operator stage.
            solve_service (SolveService): Eigenvalue stage.
            counting_service (CountingService): Counting and fit stage.
            experiment_pool_executor (ThreadPoolExecutor): Pool running grid levels.
            log_utils (LogUtils): Logging utility instance.
        """
        self._model_builder_service = model_builder_service
        self._assembly_service = assembly_service
        self._solve_service = solve_service
        self._counting_service = counting_service
        self._experiment_pool_executor = experiment_pool_executor
        self._logger = log_utils.get_logger(__name__)

    def run_level(self, model: ModelProblem, index: int, L: float, n: int, ts: np.ndarray | None = None, keep_eigenvalues: bool = False) -> LevelResult:
        """Assemble, solve, count and fit one grid level."""
        self._logger.info(f'Running {model.model_id} level {index}: L = {L:g}, n = {n}')
        process_object = ProcessObject(model=model, index=index, L=L, n=n, ts=ts, storage=model.storage)
        process_object = self._assembly_service.handle_request(process_object=process_object)
        process_object = self._solve_service.handle_request(process_object=process_object)
        process_object = self._counting_service.handle_request(process_object=process_object)

        fit = process_object['fit']
        expected = model.expected
        c_ratio = theta_ratio = None
        if fit is not None and expected is not None:
            c_ratio = fit.C / expected.C if expected.C > 0 else None
            theta_ratio = fit.theta / expected.theta
        return LevelResult(
            index=index,
            L=float(L),
            n=int(n),
            size=int(process_object['size']),
            resolution_floor=float(process_object['resolution_floor']),
            samples=process_object['samples'],
            fit=fit,
            c_ratio=c_ratio,
            theta_ratio=theta_ratio,
            note=process_object['note'],
            eigenvalues=process_object['eigenvalues'] if keep_eigenvalues else None
        )

    def _trend(self, levels: list[LevelResult]) -> dict:
        def improving(values):
            distances = [abs(v - 1.0) for v in values if v is not None]
            if len(distances) < 2 or len(distances) != len(values):
                return None
            return all(b <= a for a, b in zip(distances, distances[1:]))

        c_ratios = [level.c_ratio for level in levels]
        theta_ratios = [level.theta_ratio for level in levels]
        return {
            'c_ratio': c_ratios,
            'theta_ratio': theta_ratios,
            'c_ratio_improves': improving(c_ratios),
            'theta_ratio_improves': improving(theta_ratios)
        }

    def run_experiment(
        self,
        model: ModelProblem,
        grids: tuple[tuple[float, int], ...] | None = None,
        ts: np.ndarray | None = None,
        keep_eigenvalues: bool = False,
        seeds: tuple[int, ...] = ()
    ) -> ExperimentReport:
        """
        Assemble, solve, count and fit the model on every level of a grid ladder.

        Args:
            model (ModelProblem): Model to run.
            grids (tuple[tuple[float, int], ...] | None): Ladder of (L, n); defaults to model.grids.
            ts (np.ndarray | None): Fixed t grid shared by all levels; by default each level
                builds a geometric grid from its own resolution floor.
            keep_eigenvalues (bool): Keep the spectra in the level results.
            seeds (tuple[int, ...]): Seeds recorded in the report.

        Returns:
            ExperimentReport: Levels in ladder order with agreement ratios and their trend.

        Raises:
            ValueError: If the ladder has fewer than two levels.
            RuntimeError: If a level fails.
        """
        grids = tuple(grids or model.grids)
        if len(grids) < 2:
            raise ValueError(f'A grid ladder needs at least two levels, got {len(grids)}')
        start = time.perf_counter()
        try:
            level_futures = [
                self._experiment_pool_executor.submit(self.run_level, model, index, L, n, ts, keep_eigenvalues)
                for index, (L, n) in enumerate(grids)
            ]
            levels = sorted([future.result() for future in as_completed(level_futures)], key=lambda level: level.index)
        except Exception as e:
            raise RuntimeError(f'Fail in experiment {model.model_id}: {e}') from e

        report = ExperimentReport(
            model_id=model.model_id,
            levels=levels,
            predicted=model.expected,
            trend=self._trend(levels),
            seeds=seeds,
            runtime=time.perf_counter() - start
        )
        self._logger.info(f'Experiment {model.model_id} done in {report.runtime:.1f}s: trend {report.trend}')
        return report

    def flip(self, model: ModelProblem) -> ModelProblem:
        """
        The model of I - A: symbol I - a0 with the lower-order terms negated
        and the tip moved to 1 - tau on the opposite side.

        Raises:
            SymbolError: For models without a symbol.
        """
        if model.symbol is None:
            raise SymbolError(f'Model {model.model_id} has no symbol to flip')
        s = model.symbol
        identity = np.eye(s.N)

        def flipped_principal(component):
            return lambda x, xi: identity - component.evaluator(x, xi)

        def negated(component):
            return lambda x, xi: -np.asarray(component.evaluator(x, xi), dtype=complex)

        components = []
        for component in s.components:
            evaluator = flipped_principal(component) if component.order == 0 else negated(component)
            components.append(SymbolComponent(
                order=component.order,
                evaluator=evaluator,
                homogeneous=component.homogeneous,
                label=f'flip[{component.label}]'
            ))
        symbol = PolyhomSymbol(
            d=s.d,
            N=s.N,
            components=tuple(components),
            regularization_scale=s.regularization_scale,
            hermitian=s.hermitian,
            symbol_id=f'flip[{s.symbol_id}]',
            meta={**s.meta, 'flipped': True}
        )
        return replace(
            model,
            model_id=f'flip[{model.model_id}]',
            symbol=symbol,
            tip_reference=1.0 - model.tip_reference,
            tip_side='below' if model.tip_side == 'above' else 'above'
        )

    def _threshold(self, ts: np.ndarray, first, second) -> float:
        differ = np.flatnonzero(first['n'].to_numpy() != second['n'].to_numpy())
        if differ.size == 0:
            return float(ts[0])
        last = int(differ.max())
        return float(ts[last + 1]) if last + 1 < ts.size else float('inf')

    def localization_check(self, config: ScalarModelConfig, surgery_radius: float, ts: np.ndarray, surgery_depth: float = 0.5) -> dict:
        """
        Compare a scalar model with its surgery outside |x| <= surgery_radius.

        Per level the threshold is the smallest t of the grid above which the
        two counting functions agree exactly (inf when they never do). The
        check passes when the thresholds never grow along the ladder and the
        finest one is strictly below the coarsest, or already at the smallest
        t of the grid.
        """
        ts = np.sort(np.asarray(ts, dtype=float))
        base = self._model_builder_service.build_scalar_model(config)
        cut = self._model_builder_service.build_scalar_model(replace(
            config,
            model_id=f'{config.model_id}:surgery',
            surgery_radius=surgery_radius,
            surgery_depth=surgery_depth
        ))
        base_report = self.run_experiment(base, ts=ts)
        cut_report = self.run_experiment(cut, ts=ts)
        thresholds = [
            self._threshold(ts, a.samples, b.samples)
            for a, b in zip(base_report.levels, cut_report.levels)
        ]
        finest, coarsest = thresholds[-1], thresholds[0]
        monotone = all(b <= a for a, b in zip(thresholds, thresholds[1:]))
        passed = bool(np.isfinite(finest) and monotone and (finest < coarsest or finest == ts[0]))
        self._logger.info(f'Localization check of {config.model_id}: thresholds {thresholds}, passed {passed}')
        return {
            'model_id': config.model_id,
            'surgery_radius': surgery_radius,
            'thresholds': thresholds,
            'passed': passed
        }

    def freezing_check(self, config: ScalarModelConfig) -> dict:
        """
        Fit the model with its x-dependent subsymbol and with the subsymbol
        frozen at x = 0, on the same windows; pass when the fitted C moves by
        less than the confidence width of the finest fit.
        """
        live = self._model_builder_service.build_scalar_model(replace(config, freeze_subsymbol=False))
        live_report = self.run_experiment(live)
        finest = live_report.finest
        if finest.fit is None:
            return {'model_id': config.model_id, 'passed': False, 'note': finest.note or 'no fit on the finest level'}
        frozen = self._model_builder_service.build_scalar_model(replace(
            config,
            model_id=f'{config.model_id}:frozen',
            freeze_subsymbol=True,
            fit_window=finest.fit.window
        ))
        frozen_report = self.run_experiment(frozen)
        frozen_fit = frozen_report.finest.fit
        if frozen_fit is None:
            return {'model_id': config.model_id, 'passed': False, 'note': frozen_report.finest.note}
        change = abs(frozen_fit.C - finest.fit.C)
        width = finest.fit.confidence_width()
        passed = bool(change < width)
        self._logger.info(f'Freezing check of {config.model_id}: |dC| = {change:.4g}, width {width:.4g}, passed {passed}')
        return {
            'model_id': config.model_id,
            'C': finest.fit.C,
            'C_frozen': frozen_fit.C,
            'confidence_width': width,
            'window': list(finest.fit.window),
            'passed': passed
        }
