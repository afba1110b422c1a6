"""
Drive a contrast schedule through the cell solver, compare each stage with
the closed-form limit and summarize the trends.
"""

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from columnar_homog import utils
from columnar_homog.cell_solver import (
    TabulatedSigma0,
    estimate_pw_constant,
    homogenize,
    homogenize_transversal,
    homogenize_via_pi,
)
from columnar_homog.exceptions import (
    DegenerateContrastError,
    ResolutionError,
    ValidationError,
)
from columnar_homog.geometry import (
    CellGeometry,
    ContrastSchedule,
    RhoField,
    Stage,
    modulated_geometry,
    rasterize,
)
from columnar_homog.homog_formulas import (
    LimitParams,
    assemble_effective,
    oracle_for,
    transversal_limit,
)
from columnar_homog.linsolve import SolverSettings
from columnar_homog.tensor_core import (
    EffectiveTensor,
    PerturbedConductivity,
    PhasePair,
    TransversalBlock,
    realize_sigma,
)

logger = logging.getLogger('columnar_homog.sweep')

MIN_N = 64
MAX_N = 512
DISK_MIN_CELLS = 4
FRAME_MIN_CELLS = 2
ROUTE_TOL = 1e-7
CONSTANCY_TOL = 1e-12
MONOTONICITY_TOL = 1e-8
ORACLE_KINDS = ('auto', 'homogeneous', 'tabulated')
DEFAULT_POINT = (0.5, 0.5)


def resolution_for(kind: str, shape_param: float) -> int:
    """N = max(64, ceil(4 / r) or ceil(4 / t)), capped at 512"""
    return min(MAX_N, max(MIN_N, math.ceil(4 / shape_param)))


def is_resolved(kind: str, shape_param: float, N: int) -> bool:
    if kind == 'disk':
        return shape_param * N >= DISK_MIN_CELLS
    if kind == 'frame':
        return shape_param * N >= FRAME_MIN_CELLS
    return True


@dataclass
class SweepRow:
    stage: Stage
    resolution: int
    rho: float
    status: str = 'ok'
    raster_fraction: float = float('nan')
    sigma2d: Optional[np.ndarray] = None
    direct: Optional[EffectiveTensor] = None
    pi: Optional[EffectiveTensor] = None
    oracle: Optional[EffectiveTensor] = None
    error_direct: float = float('nan')
    error_pi: float = float('nan')
    error_transversal: float = float('nan')
    route_discrepancy: float = float('nan')
    pw_constant: float = float('nan')
    pw_rescaled: float = float('nan')
    iterations: int = 0
    wall_time: float = 0.0

    @property
    def computed(self) -> bool:
        return self.status == 'ok'


@dataclass
class SweepReport:
    kind: str
    params: LimitParams
    oracle: str
    rows: List[SweepRow] = field(default_factory=list)
    diagnostic_name: str = ''

    def computed_rows(self) -> List[SweepRow]:
        return [row for row in self.rows if row.computed]


@dataclass
class ConvergenceVerdict:
    """
    Trend of one metric across stages; the log-log slope against the stage
    shape parameter is only reported with at least three stages
    """

    name: str
    values: List[float]
    monotone_decreasing: bool
    final: float
    slope: Optional[float] = None
    passed: bool = True

    def as_dict(self) -> Dict:
        return {
            'name': self.name,
            'values': self.values,
            'monotone_decreasing': self.monotone_decreasing,
            'final': self.final,
            'slope': self.slope,
            'passed': self.passed,
        }


def _is_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def make_verdict(
    name: str,
    values: Sequence[float],
    xs: Optional[Sequence[float]] = None,
    passed: Optional[bool] = None,
) -> ConvergenceVerdict:
    values = [float(v) for v in values]
    decreasing = _is_decreasing(values)
    return ConvergenceVerdict(
        name=name,
        values=values,
        monotone_decreasing=decreasing,
        final=values[-1] if values else float('nan'),
        slope=utils.loglog_slope(xs, values) if xs is not None else None,
        passed=decreasing if passed is None else passed,
    )


def _stage_oracle(
    oracle: str,
    kind: str,
    params: LimitParams,
    rho: float,
    stage: Stage,
    field_: Any,
    settings: SolverSettings,
) -> EffectiveTensor:
    if oracle == 'homogeneous':
        return EffectiveTensor(
            realize_sigma(PerturbedConductivity(params.alpha1, params.beta1, params.h))
        )
    if oracle == 'tabulated' or kind not in ('disk', 'frame'):
        sigma0 = TabulatedSigma0(field_, stage.scale_n, settings)
        return assemble_effective(transversal_limit(sigma0, params), rho, params)
    return oracle_for(kind, params, rho)


def run_stage(
    stage: Stage,
    kind: str,
    params: LimitParams,
    rho_field: Optional[RhoField] = None,
    point: Sequence[float] = DEFAULT_POINT,
    N: Optional[int] = None,
    oracle: str = 'auto',
    settings: Optional[SolverSettings] = None,
    with_pw: bool = True,
    geometry: Optional[CellGeometry] = None,
) -> SweepRow:
    """Homogenize one stage by both routes and compare with the limit"""
    settings = settings or SolverSettings()
    start = time.time()
    rho = 1.0 if rho_field is None else float(rho_field(*point))
    if geometry is None:
        geometry = modulated_geometry(kind, rho_field, stage.shape_param, point)
    if N is None:
        N = resolution_for(kind, geometry.param or stage.shape_param)
    row = SweepRow(stage=stage, resolution=N, rho=rho)
    if not is_resolved(kind, geometry.param or 0.0, N):
        logger.warning(
            f'Stage {stage.index}: {geometry.label} is under-resolved at N={N}, skipping'
        )
        row.status = 'under-resolved'
        return row

    field_ = rasterize(geometry, N)
    phases = PhasePair(params.alpha1, params.beta1, stage.alpha2n, stage.beta2n)
    direct = homogenize(field_, phases, params.h, settings)
    row.raster_fraction = field_.raster_fraction
    row.sigma2d = direct.sigma2d
    row.direct = direct.sigma3d
    row.iterations = direct.iterations
    try:
        via_pi = homogenize_via_pi(field_, phases, params.h, settings)
        row.pi = via_pi.sigma3d
        row.route_discrepancy = utils.relative_max_error(
            via_pi.sigma3d.matrix, direct.sigma3d.matrix
        )
    except DegenerateContrastError as e:
        logger.warning(f'Stage {stage.index}: Pi route unavailable: {e}')

    row.oracle = _stage_oracle(oracle, kind, params, rho, stage, field_, settings)
    row.error_direct = utils.relative_max_error(row.direct.matrix, row.oracle.matrix)
    if row.pi is not None:
        row.error_pi = utils.relative_max_error(row.pi.matrix, row.oracle.matrix)
    row.error_transversal = utils.relative_max_error(
        row.sigma2d, row.oracle.transversal
    )
    if with_pw:
        pw = estimate_pw_constant(field_, params.alpha1, stage.alpha2n, settings)
        row.pw_constant = pw.c_value
        row.pw_rescaled = pw.rescaled(stage.epsilon)
    row.wall_time = time.time() - start
    logger.info(
        f'Stage {stage.index} ({geometry.label}, N={N}): error vs limit '
        f'{row.error_direct:.3e}, route discrepancy {row.route_discrepancy:.3e}, '
        f'{row.wall_time:.1f}s'
    )
    return row


def _run_stage_star(kwargs: Dict) -> SweepRow:
    return run_stage(**kwargs)


def run_sweep(
    schedule: ContrastSchedule,
    params: LimitParams,
    rho: Optional[RhoField] = None,
    point: Sequence[float] = DEFAULT_POINT,
    resolutions: Optional[Sequence[int]] = None,
    oracle: str = 'auto',
    settings: Optional[SolverSettings] = None,
    workers: int = 1,
    with_pw: bool = True,
) -> SweepReport:
    """
    Homogenize every stage of the schedule and compare with the limit tensor
    :param schedule: contrast schedule; its kind selects the geometry
    :param params: matrix phase, rescaled inclusion limits and h
    :param rho: density modulating the cell at the sample point
    :param point: macroscopic point x' the cell represents
    :param resolutions: grid size per stage, defaults to the resolution policy
    :param oracle: 'auto' (closed form by geometry), 'homogeneous' (sigma1(h))
        or 'tabulated' (general assembly with a numerically tabulated sigma0*)
    :param workers: number of parallel stage processes
    """
    if oracle not in ORACLE_KINDS:
        raise ValidationError(f'Unknown oracle {oracle}, expected one of {ORACLE_KINDS}')
    if resolutions is not None and len(resolutions) != len(schedule):
        raise ValidationError(
            f'Got {len(resolutions)} resolutions for {len(schedule)} stages'
        )
    tasks = [
        dict(
            stage=stage,
            kind=schedule.kind,
            params=params,
            rho_field=rho,
            point=tuple(point),
            N=None if resolutions is None else int(resolutions[k]),
            oracle=oracle,
            settings=settings,
            with_pw=with_pw,
        )
        for k, stage in enumerate(schedule.stages)
    ]
    logger.info(
        f'Running {len(tasks)} {schedule.kind} stages with {workers} worker(s)'
    )
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_stage_star, tasks))
    else:
        rows = [_run_stage_star(task) for task in tasks]
    return SweepReport(schedule.kind, params, oracle, rows, schedule.diagnostic_name)


def sweep_verdicts(report: SweepReport) -> List[ConvergenceVerdict]:
    """Trend of the limit error and the route discrepancy bound"""
    rows = report.computed_rows()
    if not rows:
        return []
    shapes = [row.stage.shape_param for row in rows]
    verdicts = [
        make_verdict('error_vs_limit', [row.error_direct for row in rows], shapes),
        make_verdict(
            'transversal_error_vs_limit', [row.error_transversal for row in rows], shapes
        ),
    ]
    discrepancies = [row.route_discrepancy for row in rows if row.pi is not None]
    if discrepancies:
        verdicts.append(
            make_verdict(
                'route_discrepancy',
                discrepancies,
                passed=max(discrepancies) <= ROUTE_TOL,
            )
        )
    return verdicts


def check_conditions(
    schedule: ContrastSchedule, alpha1: float
) -> List[ConvergenceVerdict]:
    """
    Verdicts on the scaling conditions of a schedule: eps^2 |ln r| -> 0 for
    fibres, constancy of scale_n alpha2n and scale_n beta2n, and boundedness
    of the cell average alpha1 (1 - theta_n) + alpha2n theta_n
    """
    stages = schedule.stages
    verdicts = []
    if schedule.kind == 'disk':
        verdicts.append(
            make_verdict(
                'eps2_log_r',
                [s.epsilon ** 2 * abs(math.log(s.shape_param)) for s in stages],
            )
        )
    for name, target, attr in (
        ('scale_alpha2_constant', schedule.alpha2, 'alpha2n'),
        ('scale_beta2_constant', schedule.beta2, 'beta2n'),
    ):
        values = [s.scale_n * getattr(s, attr) for s in stages]
        reference = max(abs(target), 1.0)
        drift = max(abs(v - target) for v in values) / reference
        verdicts.append(
            make_verdict(name, values, passed=drift <= CONSTANCY_TOL)
        )
    means = [alpha1 * (1 - s.theta_n) + s.alpha2n * s.theta_n for s in stages]
    bound = alpha1 + abs(schedule.alpha2)
    verdicts.append(
        make_verdict(
            'mean_alpha_bounded',
            means,
            passed=max(means) <= bound * (1 + CONSTANCY_TOL),
        )
    )
    return verdicts


def monotonicity_test(
    t_small: float,
    t_large: float,
    contrast: float,
    N: int,
    alpha1: float = 1.0,
    settings: Optional[SolverSettings] = None,
) -> ConvergenceVerdict:
    """
    Nested frames t_small <= t_large with symmetric phases alpha1 and
    contrast * alpha1: the homogenized quadratic forms must be ordered
    """
    if not 0 < t_small <= t_large < 0.5:
        raise ValidationError(
            f'Need 0 < t_small <= t_large < 1/2, got {t_small}, {t_large}'
        )
    if not contrast >= 1:
        raise ValidationError(f'Contrast must be at least 1, got {contrast}')
    if t_small * N < FRAME_MIN_CELLS:
        raise ResolutionError(
            f'Frame t={t_small} needs at least {FRAME_MIN_CELLS} cells, N={N} is too small'
        )
    sig1 = TransversalBlock(alpha1)
    sig2 = TransversalBlock(alpha1 * contrast)
    small = homogenize_transversal(rasterize(CellGeometry.frame(t_small), N), sig1, sig2, settings)
    large = homogenize_transversal(rasterize(CellGeometry.frame(t_large), N), sig1, sig2, settings)
    diff = large - small
    smallest = float(np.min(np.linalg.eigvalsh(0.5 * (diff + diff.T))))
    return ConvergenceVerdict(
        name='monotonicity',
        values=[smallest],
        monotone_decreasing=False,
        final=smallest,
        passed=smallest >= -MONOTONICITY_TOL,
    )


ENTRY_NAMES = [f'{i}{j}' for i in range(1, 4) for j in range(1, 4)]


def _tensor_columns(prefix: str, tensor: Optional[EffectiveTensor]) -> Dict:
    values = (
        tensor.matrix.ravel() if tensor is not None else np.full(9, np.nan)
    )
    return {f'{prefix}_{name}': value for name, value in zip(ENTRY_NAMES, values)}


def report_frame(report: SweepReport, include_timing: bool = False) -> pd.DataFrame:
    """One row per stage, in stage order"""
    records = []
    for row in report.rows:
        stage = row.stage
        record = {
            'stage': stage.index,
            'epsilon': stage.epsilon,
            'shape_param': stage.shape_param,
            'theta_n': stage.theta_n,
            'alpha2n': stage.alpha2n,
            'beta2n': stage.beta2n,
            'N': row.resolution,
            'rho': row.rho,
            'status': row.status,
            'raster_fraction': row.raster_fraction,
        }
        record.update(_tensor_columns('direct', row.direct))
        record.update(_tensor_columns('pi', row.pi))
        record.update(_tensor_columns('oracle', row.oracle))
        record.update(
            {
                'error_direct': row.error_direct,
                'error_pi': row.error_pi,
                'error_transversal': row.error_transversal,
                'route_discrepancy': row.route_discrepancy,
                'pw_constant': row.pw_constant,
                'pw_rescaled': row.pw_rescaled,
                'diagnostic': stage.diagnostic,
                'iterations': row.iterations,
            }
        )
        if include_timing:
            record['wall_time'] = row.wall_time
        records.append(record)
    return pd.DataFrame.from_records(records)


def write_report_csv(
    report: SweepReport, fpath: str, include_timing: bool = False
) -> str:
    utils.safe_mkdir(os.path.dirname(os.path.abspath(fpath)))
    report_frame(report, include_timing).to_csv(
        fpath, index=False, float_format='%.17g'
    )
    return fpath


def write_summary_json(
    report: SweepReport,
    verdicts: Sequence[ConvergenceVerdict],
    fpath: str,
) -> str:
    params = report.params
    summary = {
        'kind': report.kind,
        'oracle': report.oracle,
        'params': {
            'alpha1': params.alpha1,
            'beta1': params.beta1,
            'alpha2': params.alpha2,
            'beta2': params.beta2,
            'h': list(params.h),
        },
        'diagnostic': report.diagnostic_name,
        'stages': len(report.rows),
        'flagged_stages': [
            row.stage.index for row in report.rows if not row.computed
        ],
        'verdicts': [verdict.as_dict() for verdict in verdicts],
        'passed': all(verdict.passed for verdict in verdicts),
    }
    return utils.write_json(summary, fpath)
