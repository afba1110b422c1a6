"""
Command line interface: one click group with a subcommand per task.
Parameters come from an optional JSON config file (--config), overridden by
the flags given on the command line.
"""

import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd

from columnar_homog import _version, utils
from columnar_homog.cell_solver import estimate_pw_constant, homogenize, homogenize_via_pi
from columnar_homog.checks import run_checks
from columnar_homog.exceptions import (
    AcceptanceError,
    DegenerateContrastError,
    HomogError,
    SolverError,
    ValidationError,
)
from columnar_homog.geometry import (
    CellGeometry,
    RhoField,
    parse_schedule,
    rasterize,
    save_indicator,
)
from columnar_homog.homog_formulas import ORACLES, LimitParams
from columnar_homog.linsolve import SolverSettings
from columnar_homog.macro_validate import (
    KINDS as MACRO_KINDS,
    MAX_GRID,
    SourceTerm,
    run_macro_validation,
)
from columnar_homog.sweep import (
    ORACLE_KINDS,
    check_conditions,
    run_sweep,
    sweep_verdicts,
    write_report_csv,
    write_summary_json,
)
from columnar_homog.tensor_core import PhasePair

logger = logging.getLogger('columnar_homog.cli')

PROG_NAME = 'columnar_homog.py'
ERROR_PREFIX = 'columnar-homog'
MACRO_ENERGY_TOL = 1e-8
# raised by numpy and scipy factorizations, reported as solver failures
NUMERICAL_ERRORS = (RuntimeError, ArithmeticError, np.linalg.LinAlgError)
# reported in the summary, never fatal
TREND_VERDICTS = ('error_vs_limit', 'transversal_error_vs_limit')
FLOAT_FIELDS = (
    'alpha1', 'beta1', 'alpha2', 'beta2', 'contrast', 'shape_param', 'rtol',
)
INT_FIELDS = (
    'resolution', 'macro_resolution', 'seed', 'restart', 'max_iter_factor', 'workers',
)


@dataclass
class RunConfig:
    """
    Parameters of a run. For `cell` and `pw`, alpha2/beta2 are the inclusion
    phase itself; for `sweep` and `oracle` they are the rescaled limits, and
    `macro` takes the inclusion phase as contrast * alpha1 with beta2.
    """

    geometry: str = 'disk:0.25'
    schedule: str = 'circular:0.2,0.1,0.05'
    example: str = 'circular'
    alpha1: float = 1.0
    beta1: float = 0.0
    alpha2: float = 1.0
    beta2: float = 0.0
    h: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    resolution: int = 64
    resolutions: Optional[Tuple[int, ...]] = None
    rho: str = 'constant:1'
    rescale_rho: bool = False
    point: Tuple[float, float] = (0.5, 0.5)
    oracle: str = 'auto'
    epsilons: Tuple[float, ...] = (0.25, 0.125)
    contrast: float = 100.0
    macro_kind: str = 'frame'
    shape_param: float = 1 / 6
    macro_resolution: int = MAX_GRID
    source: str = '1'
    export: bool = False
    with_pw: bool = True
    include_timing: bool = False
    seed: int = 0
    quick: bool = False
    rtol: Optional[float] = None
    restart: Optional[int] = None
    max_iter_factor: Optional[int] = None
    workers: int = dataclasses.field(default_factory=lambda: os.cpu_count() or 1)
    out_dir: Optional[str] = None

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_json(cls, fpath: str) -> 'RunConfig':
        try:
            with open(fpath) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f'Cannot read config {fpath}: {e}')
        if not isinstance(data, dict):
            raise ValidationError(f'Config {fpath} must hold a JSON object')
        unknown = sorted(set(data) - set(cls.field_names()))
        if unknown:
            raise ValidationError(f'Unknown config keys in {fpath}: {", ".join(unknown)}')
        return cls().merged(data)

    def merged(self, overrides: Dict[str, Any]) -> 'RunConfig':
        """Copy with every non-None override applied"""
        values = {k: v for k, v in overrides.items() if v is not None}
        try:
            for name in FLOAT_FIELDS:
                if name in values:
                    values[name] = float(values[name])
            for name in INT_FIELDS:
                if name in values:
                    values[name] = int(values[name])
        except (TypeError, ValueError) as e:
            raise ValidationError(f'Bad numeric config value: {e}')
        for name in ('h', 'point', 'epsilons'):
            if name in values:
                values[name] = utils.parse_floats(values[name])
        if values.get('resolutions') is not None:
            values['resolutions'] = tuple(int(n) for n in utils.parse_floats(values['resolutions']))
        return dataclasses.replace(self, **values)

    def validate(self) -> 'RunConfig':
        if not self.alpha1 > 0:
            raise ValidationError(f'alpha1 must be positive, got {self.alpha1}')
        if not self.alpha2 > 0:
            raise ValidationError(f'alpha2 must be positive, got {self.alpha2}')
        if len(self.h) != 3:
            raise ValidationError(f'h needs 3 components, got {self.h}')
        if len(self.point) != 2:
            raise ValidationError(f'point needs 2 components, got {self.point}')
        if self.resolution < 4:
            raise ValidationError(f'resolution must be at least 4, got {self.resolution}')
        if self.workers < 1:
            raise ValidationError(f'workers must be at least 1, got {self.workers}')
        if self.oracle not in ORACLE_KINDS:
            raise ValidationError(f'oracle must be one of {ORACLE_KINDS}, got {self.oracle}')
        if self.example not in ORACLES:
            raise ValidationError(f'example must be one of {list(ORACLES)}, got {self.example}')
        if self.macro_kind not in MACRO_KINDS:
            raise ValidationError(f'macro_kind must be one of {MACRO_KINDS}')
        if not self.contrast >= 1:
            raise ValidationError(f'contrast must be at least 1, got {self.contrast}')
        return self

    def settings(self) -> Optional[SolverSettings]:
        """Solver settings, or None when no tolerance was configured"""
        values = {
            name: getattr(self, name)
            for name in ('rtol', 'restart', 'max_iter_factor')
            if getattr(self, name) is not None
        }
        return SolverSettings(**values) if values else None

    def output_dir(self) -> str:
        return self.out_dir or utils.default_out_dir()


def load_config(config_path: Optional[str], overrides: Dict[str, Any]) -> RunConfig:
    config = RunConfig.from_json(config_path) if config_path else RunConfig()
    return config.merged(overrides).validate()


def _options(*names: str):
    """Attach the shared options with the given names"""

    def decorator(func):
        for name in reversed(names):
            func = OPTIONS[name](func)
        return click.option(
            '--config',
            'config_path',
            callback=utils.get_validation_callback(ext='json', must_exist=True),
            help='JSON file with run parameters; flags override its values.',
        )(func)

    return decorator


OPTIONS = {
    'geometry': click.option(
        '--geometry',
        help='cell geometry: disk:<r>, frame:<t>, laminate:<w> or file:<path>.',
    ),
    'schedule': click.option(
        '--schedule',
        help='contrast schedule: circular:<eps,...> or grid:<t,...>.',
    ),
    'alpha1': click.option('--alpha1', type=float, help='matrix conductivity.'),
    'beta1': click.option('--beta1', type=float, help='matrix Hall coefficient.'),
    'alpha2': click.option('--alpha2', type=float, help='inclusion conductivity.'),
    'beta2': click.option('--beta2', type=float, help='inclusion Hall coefficient.'),
    'h': click.option(
        '--h', 'h', callback=utils.get_vector_callback(3), help='magnetic field h1,h2,h3.'
    ),
    'resolution': click.option(
        '--N', 'resolution', type=int, help='cell grid size (N x N elements).'
    ),
    'resolutions': click.option(
        '--resolutions', help='comma-separated cell grid size per sweep stage.'
    ),
    'rho': click.option(
        '--rho', help='density: constant:<v>, affine:<g1>,<g2> or cosine:<a>,<k>.'
    ),
    'rescale_rho': click.option(
        '--rescale-rho', 'rescale_rho', is_flag=True, default=None,
        help='rescale rho to unit mean instead of rejecting it.',
    ),
    'point': click.option(
        '--point', callback=utils.get_vector_callback(2), help="macroscopic point x1,x2."
    ),
    'oracle': click.option(
        '--oracle', type=click.Choice(ORACLE_KINDS), help='reference for the limit error.'
    ),
    'example': click.option(
        '--example', type=click.Choice(sorted(ORACLES)), help='closed-form limit to evaluate.'
    ),
    'epsilons': click.option('--epsilons', help='comma-separated periods.'),
    'contrast': click.option(
        '--contrast', type=float, help='inclusion to matrix conductivity ratio.'
    ),
    'macro_kind': click.option(
        '--kind', 'macro_kind', type=click.Choice(MACRO_KINDS), help='microstructure.'
    ),
    'shape_param': click.option(
        '--shape', 'shape_param', type=float, help='frame thickness or fibre radius.'
    ),
    'macro_resolution': click.option(
        '--macro-N', 'macro_resolution', type=int, help='3D grid cells per axis.'
    ),
    'source': click.option(
        '--source', help="separable polynomial source, e.g. '1' or '0,1;1;1'."
    ),
    'export': click.option(
        '--export', is_flag=True, default=None, help='write binary solution grids.'
    ),
    'with_pw': click.option(
        '--pw/--no-pw', 'with_pw', default=None, help='estimate the PW constant per stage.'
    ),
    'include_timing': click.option(
        '--timing', 'include_timing', is_flag=True, default=None,
        help='add wall times to the CSV report.',
    ),
    'seed': click.option('--seed', type=int, help='random seed of the checks.'),
    'quick': click.option(
        '--quick', is_flag=True, default=None, help='skip the checks that solve PDEs.'
    ),
    'rtol': click.option('--rtol', type=float, help='GMRES relative tolerance.'),
    'restart': click.option('--restart', type=int, help='GMRES restart length.'),
    'max_iter_factor': click.option(
        '--max-iter-factor', 'max_iter_factor', type=int,
        help='GMRES iteration budget per unknown count.',
    ),
    'workers': click.option(
        '--workers', type=int, help='parallel processes, defaults to the number of cores.'
    ),
    'out_dir': click.option(
        '--out-dir',
        'out_dir',
        help=f'output directory, defaults to ${utils.OUT_DIR_ENV} or ./{utils.DEFAULT_OUT_DIR}.',
    ),
}


def _limit_params(config: RunConfig) -> LimitParams:
    return LimitParams(config.alpha1, config.beta1, config.alpha2, config.beta2, config.h)


def _echo_tensor(title: str, matrix: Any):
    click.echo(f'{title}:')
    click.echo(utils.fmt_matrix(matrix))


@click.group()
@click.version_option(_version.__version__, prog_name=PROG_NAME)
def cli():
    """
    Numerical homogenization of high-contrast columnar composites in a
    magnetic field
    """
    utils.init_logging(PROG_NAME)


@cli.command()
@_options(
    'geometry', 'alpha1', 'beta1', 'alpha2', 'beta2', 'h', 'resolution', 'rtol',
    'restart', 'max_iter_factor',
)
def cell(config_path: Optional[str], **overrides):
    """
    Homogenize one cell by the direct and the Pi route
    """
    config = load_config(config_path, overrides)
    field = rasterize(CellGeometry.parse(config.geometry), config.resolution)
    phases = PhasePair(config.alpha1, config.beta1, config.alpha2, config.beta2)
    settings = config.settings()
    direct = homogenize(field, phases, config.h, settings)
    click.echo(f'raster_fraction: {utils.fmt_float(field.raster_fraction)}')
    _echo_tensor('direct', direct.sigma3d.matrix)
    try:
        via_pi = homogenize_via_pi(field, phases, config.h, settings)
    except DegenerateContrastError as e:
        click.echo(f'pi: unavailable ({e})')
        return
    _echo_tensor('pi', via_pi.sigma3d.matrix)
    discrepancy = utils.relative_max_error(via_pi.sigma3d.matrix, direct.sigma3d.matrix)
    click.echo(f'route_discrepancy: {utils.fmt_float(discrepancy)}')


@cli.command()
@_options(
    'schedule', 'alpha1', 'beta1', 'alpha2', 'beta2', 'h', 'resolutions', 'rho',
    'rescale_rho', 'point', 'oracle', 'with_pw', 'include_timing', 'rtol', 'restart',
    'max_iter_factor', 'workers', 'out_dir',
)
def sweep(config_path: Optional[str], **overrides):
    """
    Run a contrast schedule through the cell solver and compare every stage
    with the limit tensor
    """
    config = load_config(config_path, overrides)
    out_dir = utils.safe_mkdir(config.output_dir())
    utils.init_logging('sweep', out_dir)
    schedule = parse_schedule(config.schedule, config.alpha2, config.beta2)
    rho = RhoField.parse(config.rho).normalized(config.rescale_rho)
    conditions = check_conditions(schedule, config.alpha1)
    report = run_sweep(
        schedule,
        _limit_params(config),
        rho=rho,
        point=config.point,
        resolutions=config.resolutions,
        oracle=config.oracle,
        settings=config.settings(),
        workers=config.workers,
        with_pw=config.with_pw,
    )
    verdicts = conditions + sweep_verdicts(report)
    csv_path = write_report_csv(
        report, os.path.join(out_dir, 'sweep.csv'), config.include_timing
    )
    json_path = write_summary_json(
        report, verdicts, os.path.join(out_dir, 'sweep_summary.json')
    )
    for verdict in verdicts:
        status = 'ok' if verdict.passed else 'FAILED'
        click.echo(f'{verdict.name}: {status} final={utils.fmt_float(verdict.final)}')
    click.echo(f'report: {csv_path}')
    click.echo(f'summary: {json_path}')
    failed = [v for v in verdicts if not v.passed and v.name not in TREND_VERDICTS]
    if failed:
        raise AcceptanceError(failed[0].name, f'values {failed[0].values}')


@cli.command()
@_options('example', 'alpha1', 'beta1', 'alpha2', 'beta2', 'h', 'rho', 'point')
def oracle(config_path: Optional[str], **overrides):
    """
    Evaluate a closed-form limit tensor at a macroscopic point
    """
    config = load_config(config_path, overrides)
    rho = float(RhoField.parse(config.rho)(*config.point))
    tensor = ORACLES[config.example](_limit_params(config), rho)
    click.echo(utils.fmt_matrix(tensor.matrix))


@cli.command()
@_options('geometry', 'alpha1', 'alpha2', 'resolution', 'seed')
def pw(config_path: Optional[str], **overrides):
    """
    Poincare-Wirtinger constant of the alpha-weighted cell
    """
    config = load_config(config_path, overrides)
    field = rasterize(CellGeometry.parse(config.geometry), config.resolution)
    estimate = estimate_pw_constant(
        field, config.alpha1, config.alpha2, config.settings(), seed=config.seed
    )
    click.echo(f'pw_constant: {utils.fmt_float(estimate.c_value)}')
    click.echo(f'eigen_residual: {utils.fmt_float(estimate.eigen_residual)}')
    click.echo(f'iterations: {estimate.iterations}')


@cli.command()
@_options(
    'macro_kind', 'epsilons', 'shape_param', 'alpha1', 'beta1', 'contrast', 'beta2',
    'h', 'source', 'rho', 'rescale_rho', 'macro_resolution', 'export', 'rtol', 'restart',
    'max_iter_factor', 'workers', 'out_dir',
)
def macro(config_path: Optional[str], **overrides):
    """
    Compare fine-scale and homogenized Dirichlet solutions on the unit cube
    """
    config = load_config(config_path, overrides)
    out_dir = utils.safe_mkdir(config.output_dir())
    utils.init_logging('macro', out_dir)
    rho = RhoField.parse(config.rho).normalized(config.rescale_rho)
    rows = run_macro_validation(
        epsilons=config.epsilons,
        kind=config.macro_kind,
        shape_param=config.shape_param,
        alpha1=config.alpha1,
        beta1=config.beta1,
        contrast=config.contrast,
        beta2n=config.beta2,
        h=config.h,
        source=SourceTerm.parse(config.source),
        rho=None if rho.kind == 'constant' else rho,
        resolution=config.macro_resolution,
        settings=config.settings(),
        workers=config.workers,
        export_dir=out_dir if config.export else None,
    )
    frame = pd.DataFrame.from_records(
        [{k: v for k, v in row.items() if k != 'sigma_star'} for row in rows]
    )
    csv_path = os.path.join(out_dir, 'macro.csv')
    frame.to_csv(csv_path, index=False, float_format='%.17g')
    for row in rows:
        click.echo(
            f'eps={utils.fmt_float(row["epsilon"])} '
            f'l2={utils.fmt_float(row["l2_error"])} h1={utils.fmt_float(row["h1_error"])}'
        )
    click.echo(f'report: {csv_path}')
    for row in rows:
        defect = max(row['energy_defect_fine'], row['energy_defect_hom'])
        if defect > MACRO_ENERGY_TOL:
            raise AcceptanceError(
                'energy_identity', f'eps={row["epsilon"]}: defect {defect:.3e}'
            )


@cli.command()
@_options('seed', 'quick', 'rtol', 'restart', 'max_iter_factor')
def verify(config_path: Optional[str], **overrides):
    """
    Run the invariant suite, stopping at the first violation
    """
    config = load_config(config_path, overrides)
    passed = run_checks(config.seed, config.settings(), config.quick)
    click.echo(f'verify: ok ({", ".join(passed)})')


@cli.command()
@_options('geometry', 'resolution')
@click.option('--output', 'output_path', help='grid file to write.')
def grid(config_path: Optional[str], output_path: Optional[str], **overrides):
    """
    Rasterize a cell geometry, optionally writing it as a grid file
    """
    config = load_config(config_path, overrides)
    geometry = CellGeometry.parse(config.geometry)
    field = rasterize(geometry, config.resolution)
    click.echo(f'geometry: {geometry.label}')
    click.echo(f'raster_fraction: {utils.fmt_float(field.raster_fraction)}')
    if geometry.exact_area is not None:
        click.echo(f'exact_fraction: {utils.fmt_float(geometry.exact_area)}')
    if output_path:
        save_indicator(field, output_path)
        click.echo(f'grid: {output_path}')


def _report_error(kind: str, message: str):
    sys.stderr.write(f'{ERROR_PREFIX}:{kind}: {message}\n')


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line and map errors to exit codes: 2 for invalid input,
    3 for solver failures, 4 for failed acceptance checks
    """
    try:
        cli.main(args=list(argv) if argv is not None else None,
                 prog_name=PROG_NAME, standalone_mode=False)
    except HomogError as e:
        _report_error(e.kind, str(e))
        return e.exit_code
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        _report_error('validation', e.format_message())
        return ValidationError.exit_code
    except click.exceptions.Abort:
        return 1
    except NUMERICAL_ERRORS as e:
        logger.debug('Numerical failure', exc_info=True)
        _report_error(SolverError.kind, f'{type(e).__name__}: {e}')
        return SolverError.exit_code
    return 0
