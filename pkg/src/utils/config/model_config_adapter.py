import configparser
from typing import Callable

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from model.coefficient import DirectionFunction
from model.elasticity import KappaField
from model.exceptions import ConfigError
from model.operator import SchrodingerSpec
from model.problem import (
    ModelDefinition,
    MonteCarloSettings,
    ScalarModelConfig,
    VectorModelConfig,
)
from services.models.model_builder_service import block_projector, twisted_projector

MODEL_FILE_KINDS = ('scalar_psdo', 'vector_psdo', 'schrodinger', 'hydrogen', 'np')

ALLOWED_FUNCTIONS = {
    'sin': sp.sin,
    'cos': sp.cos,
    'tan': sp.tan,
    'exp': sp.exp,
    'log': sp.log,
    'sqrt': sp.sqrt,
    'tanh': sp.tanh,
    'atan': sp.atan,
    'atan2': sp.atan2,
    'Abs': sp.Abs,
    'abs': sp.Abs,
    'Min': sp.Min,
    'Max': sp.Max,
    'pi': sp.pi,
    'E': sp.E
}

PARSER_GLOBALS = {
    '__builtins__': {},
    'Integer': sp.Integer,
    'Float': sp.Float,
    'Rational': sp.Rational,
    'Symbol': sp.Symbol,
    'Function': sp.Function,
    **ALLOWED_FUNCTIONS
}


class ModelConfigAdapter:
    """
    Adapter reading model files: INI text with sections [model], [grid],
    [fit], [mc] and [np].

    Closed-form fields are expression strings compiled with sympy into
    vectorized numpy callables. Direction fields use w1..wd (and phi in
    d = 2), spatial fields use x1..xd and r = |x|.
    """

    def _parse(self, text: str, variables: list[str], what: str):
        local = {name: sp.Symbol(name, real=True) for name in variables}
        try:
            parsed = parse_expr(text, local_dict=local, global_dict=dict(PARSER_GLOBALS), transformations=standard_transformations)
        except Exception as e:
            raise ConfigError(f'Cannot parse {what} = {text!r}: {e}') from e
        entries = parsed if isinstance(parsed, (list, tuple)) else [parsed]
        for entry in np.asarray(entries, dtype=object).ravel():
            entry = sp.sympify(entry)
            unknown = {str(s) for s in entry.free_symbols} - set(variables)
            if unknown:
                raise ConfigError(f'{what} uses unknown names {sorted(unknown)}; allowed: {variables}')
            undefined = entry.atoms(AppliedUndef)
            if undefined:
                raise ConfigError(f'{what} calls unknown functions {sorted(str(u.func) for u in undefined)}')
        return parsed, [local[name] for name in variables]

    def _compile(self, expr, symbols: list) -> Callable[..., np.ndarray]:
        function = sp.lambdify(symbols, sp.sympify(expr), 'numpy')

        def evaluate(*args):
            shape = np.broadcast_shapes(*[np.shape(a) for a in args]) if args else ()
            return np.broadcast_to(np.asarray(function(*args), dtype=float), shape)
        return evaluate

    def _direction_variables(self, d: int) -> list[str]:
        return [f'w{k + 1}' for k in range(d)] + (['phi'] if d == 2 else [])

    def _direction_args(self, omega: np.ndarray, d: int) -> list[np.ndarray]:
        args = [omega[..., k] for k in range(d)]
        if d == 2:
            args.append(np.arctan2(omega[..., 1], omega[..., 0]))
        return args

    def direction_function(self, text: str, d: int, form_valued: bool = False, label: str = '') -> DirectionFunction:
        """
        Compile a direction field.

        A form-valued field accepts a scalar expression (times the identity)
        or a nested d x d list of expressions.

        Raises:
            ConfigError: On syntax errors, unknown names or a wrong matrix shape.
        """
        parsed, symbols = self._parse(text, self._direction_variables(d), label or 'field')
        label = label or text
        if not isinstance(parsed, (list, tuple)):
            compiled = self._compile(parsed, symbols)
            if not form_valued:
                return DirectionFunction(d=d, evaluator=lambda omega: compiled(*self._direction_args(omega, d)), label=label)
            identity = np.eye(d)
            return DirectionFunction(
                d=d,
                evaluator=lambda omega: compiled(*self._direction_args(omega, d))[..., None, None] * identity,
                form_valued=True,
                label=label
            )
        if not form_valued:
            raise ConfigError(f'{label} must be a scalar expression')
        rows = [list(row) if isinstance(row, (list, tuple)) else None for row in parsed]
        if len(rows) != d or any(row is None or len(row) != d for row in rows):
            raise ConfigError(f'{label} must be a {d}x{d} nested list, got {text!r}')
        entries = [[self._compile(entry, symbols) for entry in row] for row in rows]

        def evaluator(omega):
            args = self._direction_args(omega, d)
            return np.stack([np.stack([entry(*args) for entry in row], axis=-1) for row in entries], axis=-2)
        return DirectionFunction(d=d, evaluator=evaluator, form_valued=True, label=label)

    def spatial_function(self, text: str, d: int, label: str = '') -> Callable[[np.ndarray], np.ndarray]:
        """Compile an expression over x1..xd and r = |x| into a function of points (..., d)."""
        variables = [f'x{k + 1}' for k in range(d)] + ['r']
        parsed, symbols = self._parse(text, variables, label or 'field')
        if isinstance(parsed, (list, tuple)):
            raise ConfigError(f'{label or text} must be a scalar expression')
        compiled = self._compile(parsed, symbols)

        def evaluate(x):
            x = np.asarray(x, dtype=float)
            return compiled(*[x[..., k] for k in range(d)], np.linalg.norm(x, axis=-1))
        return evaluate

    def _float(self, section: configparser.SectionProxy, key: str, default: float | None = None) -> float | None:
        raw = section.get(key, fallback=None)
        if raw is None or raw.strip() == '':
            return default
        try:
            return float(sp.sympify(raw, locals=ALLOWED_FUNCTIONS))
        except (sp.SympifyError, TypeError) as e:
            raise ConfigError(f'[{section.name}] {key} = {raw!r} is not a number') from e

    def _int(self, section: configparser.SectionProxy, key: str, default: int) -> int:
        try:
            return section.getint(key, fallback=default)
        except ValueError as e:
            raise ConfigError(f'[{section.name}] {key} must be an integer') from e

    def parse_ladder(self, text: str) -> tuple[tuple[float, int], ...]:
        """'L:n, L:n, ...' -> ((L, n), ...)."""
        ladder = []
        for item in text.split(','):
            item = item.strip()
            if not item:
                continue
            try:
                L, n = item.split(':')
                ladder.append((float(L), int(float(n))))
            except ValueError as e:
                raise ConfigError(f'Grid ladder entries must read L:n, got {item!r}') from e
        return tuple(ladder)

    def parse_window(self, text: str | None) -> tuple[float, float] | None:
        if text is None or not text.strip():
            return None
        try:
            lo, hi = (float(part) for part in text.split(','))
        except ValueError as e:
            raise ConfigError(f'Fit window must read lo, hi, got {text!r}') from e
        if not 0 < lo < hi:
            raise ConfigError(f'Fit window needs 0 < lo < hi, got {text!r}')
        return lo, hi

    def _kappa_field(self, section: configparser.SectionProxy) -> KappaField:
        if 'kappa' in section:
            kappa = self.spatial_function(section['kappa'], 2, 'kappa')
        elif 'lambda' in section and 'mu' in section:
            lam = self.spatial_function(section['lambda'], 2, 'lambda')
            mu = self.spatial_function(section['mu'], 2, 'mu')

            def kappa(x):
                m = mu(x)
                return m / (2.0 * (2.0 * m + lam(x)))
        else:
            raise ConfigError('[np] needs kappa or both lambda and mu')
        maximizer = section.get('maximizer', fallback=None)
        hessian = section.get('hessian', fallback=None)
        return KappaField(
            evaluator=kappa,
            chart_half_width=self._float(section, 'chart_half_width', 1.0),
            maximizer=None if maximizer is None else tuple(float(v) for v in maximizer.split(',')),
            hessian=None if hessian is None else np.asarray([float(v) for v in hessian.split(',')]).reshape(2, 2),
            label=section.get('label', fallback='kappa')
        )

    def _mc_settings(self, parser: configparser.ConfigParser) -> MonteCarloSettings:
        if not parser.has_section('mc'):
            return MonteCarloSettings()
        section = parser['mc']
        seeds = section.get('seeds', fallback='0')
        return MonteCarloSettings(
            samples=int(self._float(section, 'samples', 1_000_000)),
            seeds=tuple(int(s) for s in seeds.split(',') if s.strip()),
            kinetic_cap=self._float(section, 'kinetic_cap'),
            x_radius=self._float(section, 'x_radius'),
            xi_radius=self._float(section, 'xi_radius')
        )

    def _scalar_config(self, section: configparser.SectionProxy, d: int, model_id: str, grids, window) -> ScalarModelConfig:
        profile = section.get('profile', fallback=None)
        return ScalarModelConfig(
            d=d,
            g=self.direction_function(section.get('g', fallback='1'), d, form_valued=True, label='g'),
            h=self.direction_function(section.get('h', fallback='1'), d, label='h'),
            model_id=model_id,
            grids=grids,
            quantization=section.get('quantization', fallback='weyl'),
            subsymbol_profile=None if profile is None else self.spatial_function(profile, d, 'profile'),
            freeze_subsymbol=section.getboolean('freeze', fallback=False),
            surgery_radius=self._float(section, 'surgery_radius'),
            surgery_depth=self._float(section, 'surgery_depth', 0.5),
            fit_window=window
        )

    def read_text(self, text: str, source: str = '<string>') -> ModelDefinition:
        """
        Parse a model file body.

        Raises:
            ConfigError: On a missing section, an unknown kind or a malformed value.
        """
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text, source=source)
        except configparser.Error as e:
            raise ConfigError(f'Malformed model file {source}: {e}') from e

        if not parser.has_section('model'):
            if parser.has_section('np'):
                return ModelDefinition(kind='np', model_id=source, d=2, kappa_field=self._kappa_field(parser['np']))
            raise ConfigError(f'{source} has no [model] section')
        section = parser['model']
        kind = section.get('kind', fallback='scalar_psdo')
        if kind not in MODEL_FILE_KINDS:
            raise ConfigError(f'Unknown model kind {kind!r}; expected one of {MODEL_FILE_KINDS}')
        model_id = section.get('id', fallback=kind)
        d = self._int(section, 'd', 3 if kind == 'hydrogen' else 1)
        if d not in (1, 2, 3):
            raise ConfigError(f'd must be 1, 2 or 3, got {d}')

        grids = ()
        storage = None
        if parser.has_section('grid'):
            grids = self.parse_ladder(parser['grid'].get('ladder', fallback=''))
            storage = parser['grid'].get('storage', fallback=None)
        window = self.parse_window(parser['fit'].get('window', fallback=None)) if parser.has_section('fit') else None
        mc = self._mc_settings(parser)
        kappa_field = self._kappa_field(parser['np']) if parser.has_section('np') else None
        common = {'kind': kind, 'model_id': model_id, 'd': d, 'grids': grids, 'fit_window': window, 'storage': storage, 'mc': mc, 'kappa_field': kappa_field}

        if kind == 'scalar_psdo':
            return ModelDefinition(scalar=self._scalar_config(section, d, model_id, grids, window), **common)
        if kind == 'vector_psdo':
            N = self._int(section, 'N', 2)
            projector_name = section.get('projector', fallback='block')
            if projector_name == 'twisted':
                if d != 2 or N != 3:
                    raise ConfigError('The twisted projector needs d = 2 and N = 3')
                projector = twisted_projector
            elif projector_name == 'block':
                projector = block_projector(N)
            else:
                raise ConfigError(f'Unknown projector {projector_name!r}; expected block or twisted')
            vector = VectorModelConfig(
                scalar=self._scalar_config(section, d, model_id, grids, window),
                N=N,
                projector=projector,
                complement_offset=self._float(section, 'complement_offset', 1.5),
                glue_radius=self._float(section, 'glue_radius'),
                model_id=model_id,
                twisted=projector_name == 'twisted'
            )
            return ModelDefinition(vector=vector, **common)
        if kind == 'hydrogen':
            return ModelDefinition(q=self._float(section, 'q', 1.0), **{**common, 'd': 3})
        spec = SchrodingerSpec(
            d=d,
            a2=self.direction_function(section.get('a2', fallback='1'), d, form_valued=True, label='a2'),
            h=self.direction_function(section.get('h', fallback='1'), d, label='h'),
            coupling=self._float(section, 'coupling', 1.0),
            smoothing_radius=self._float(section, 'smoothing_radius', 1.0),
            spec_id=model_id
        )
        return ModelDefinition(spec=spec, **common)

    def read(self, path: str) -> ModelDefinition:
        try:
            with open(path, 'r') as file:
                text = file.read()
        except OSError as e:
            raise ConfigError(f'Cannot read model file {path}: {e}') from e
        return self.read_text(text, source=path)

