from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

from model.coefficient import CoefficientReport, DirectionFunction
from model.counting import FitResult
from model.elasticity import KappaField
from model.operator import SchrodingerSpec
from model.symbol import PolyhomSymbol

MODEL_KINDS = ('scalar_psdo', 'vector_psdo', 'schrodinger')


@dataclass(frozen=True)
class ScalarModelConfig:
    """
    Inputs of the scalar zero-order model.

    The principal symbol is 1 / (1 + x.g(w)x) with w = xi/|xi| and the
    order -1 term is h(w) * profile(x) * (1 + |xi|^2)^(-1/2).
    """
    d: int
    g: DirectionFunction
    h: DirectionFunction
    model_id: str = 'scalar'
    grids: tuple[tuple[float, int], ...] = ()
    quantization: str = 'weyl'
    subsymbol_profile: Callable[[np.ndarray], np.ndarray] | None = None
    freeze_subsymbol: bool = False
    surgery_radius: float | None = None
    surgery_depth: float = 0.5
    fit_window: tuple[float, float] | None = None


@dataclass(frozen=True)
class VectorModelConfig:
    """
    Inputs of the vector model: the scalar branch, a projector family p1(w)
    acting on C^N and the offset 2r placing the complementary branch at 1 - 2r.
    """
    scalar: ScalarModelConfig
    N: int
    projector: Callable[[np.ndarray], np.ndarray]
    complement_offset: float = 1.5
    glue_radius: float | None = None
    model_id: str = 'vector'
    twisted: bool = False


@dataclass(frozen=True)
class ModelProblem:
    """
    A model operator with its essential-spectrum tip and expected coefficient.

    `exact_spectrum`, when set, maps a smallest sampled t to a closed-form
    eigenvalue list and replaces assembly and solving.
    """
    model_id: str
    kind: str
    d: int
    tip_reference: float
    tip_side: str
    symbol: PolyhomSymbol | None = None
    spec: SchrodingerSpec | None = None
    quantization: str = 'weyl'
    grids: tuple[tuple[float, int], ...] = ()
    expected: CoefficientReport | None = None
    exact_spectrum: Callable[[float], np.ndarray] | None = None
    fit_window: tuple[float, float] | None = None
    potential_scale: float = 1.0
    parameters: dict = field(default_factory=dict)
    storage: str | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f'kind must be one of {MODEL_KINDS}, got {self.kind!r}')
        if self.tip_side not in ('above', 'below'):
            raise ValueError(f'tip side must be above or below, got {self.tip_side!r}')


@dataclass
class LevelResult:
    """Outcome of one grid level of an experiment."""
    index: int
    L: float
    n: int
    size: int
    resolution_floor: float
    samples: pd.DataFrame
    fit: FitResult | None = None
    c_ratio: float | None = None
    theta_ratio: float | None = None
    note: str = ''
    eigenvalues: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            'index': self.index,
            'L': self.L,
            'n': self.n,
            'size': self.size,
            'resolution_floor': self.resolution_floor,
            'samples': self.samples.to_dict(orient='records'),
            'fit': None if self.fit is None else self.fit.to_dict(),
            'c_ratio': self.c_ratio,
            'theta_ratio': self.theta_ratio,
            'note': self.note
        }


@dataclass
class ExperimentReport:
    """Counting samples, fits and agreement ratios across a grid ladder."""
    model_id: str
    levels: list[LevelResult]
    predicted: CoefficientReport | None
    trend: dict = field(default_factory=dict)
    seeds: tuple[int, ...] = ()
    runtime: float = 0.0

    @property
    def finest(self) -> LevelResult:
        return self.levels[-1]

    def to_dict(self, include_runtime: bool = True) -> dict:
        report = {
            'model_id': self.model_id,
            'levels': [level.to_dict() for level in self.levels],
            'predicted': None if self.predicted is None else self.predicted.to_dict(),
            'trend': self.trend,
            'seeds': list(self.seeds)
        }
        if include_runtime:
            report['runtime'] = self.runtime
        return report


@dataclass(frozen=True)
class MonteCarloSettings:
    samples: int = 1_000_000
    seeds: tuple[int, ...] = (0,)
    kinetic_cap: float | None = None
    x_radius: float | None = None
    xi_radius: float | None = None


@dataclass(frozen=True)
class ModelDefinition:
    """
    Everything a model file declares.

    `kind` is one of MODEL_KINDS, 'hydrogen' or 'np'; only the matching
    configuration fields are set.
    """
    kind: str
    model_id: str
    d: int
    scalar: ScalarModelConfig | None = None
    vector: VectorModelConfig | None = None
    spec: SchrodingerSpec | None = None
    q: float = 1.0
    grids: tuple[tuple[float, int], ...] = ()
    fit_window: tuple[float, float] | None = None
    storage: str | None = None
    mc: MonteCarloSettings = field(default_factory=MonteCarloSettings)
    kappa_field: KappaField | None = None


@dataclass
class CriterionResult:
    """One row of the verification table."""
    criterion: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    runtime: float = 0.0

    def to_dict(self) -> dict:
        return {
            'criterion': self.criterion,
            'name': self.name,
            'passed': self.passed,
            'details': self.details
        }


@dataclass
class VerificationReport:
    """
    Outcome of the verification suite.

    The JSON form leaves out runtimes, so two runs with the same seed and
    settings serialize identically.
    """
    rows: list[CriterionResult]
    seed: int
    quick: bool

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def to_dict(self) -> dict:
        return {
            'passed': self.passed,
            'seed': self.seed,
            'quick': self.quick,
            'criteria': [row.to_dict() for row in self.rows]
        }

    def to_table(self) -> pd.DataFrame:
        return pd.DataFrame([
            {
                'criterion': row.criterion,
                'name': row.name,
                'status': 'PASS' if row.passed else 'FAIL',
                'runtime_s': round(row.runtime, 1)
            }
            for row in self.rows
        ])
