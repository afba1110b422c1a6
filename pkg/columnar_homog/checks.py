"""
Invariant suite behind the `verify` command. Every check raises
AcceptanceError naming the invariant on the first violation; random
parameters come from a seeded generator.
"""

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np

from columnar_homog import macro_validate
from columnar_homog.cell_solver import (
    estimate_pw_constant,
    homogenize,
    homogenize_transversal,
    homogenize_via_pi,
)
from columnar_homog.exceptions import AcceptanceError
from columnar_homog.geometry import CellGeometry, circular_schedule, grid_schedule, rasterize
from columnar_homog.homog_formulas import (
    LimitParams,
    assemble_effective,
    circular_sigma0,
    finite_difference_sensitivity,
    grid_sigma0,
    h_sensitivity,
    oracle_circular,
    oracle_grid,
    transformed_limits,
    transversal_limit,
)
from columnar_homog.linsolve import SolverSettings
from columnar_homog.sweep import check_conditions, monotonicity_test
from columnar_homog.tensor_core import (
    J,
    PerturbedConductivity,
    PhasePair,
    TransversalBlock,
    interface_match,
    pi_conjugate,
    pi_limits,
    realize_sigma,
    transformed_blocks,
)

logger = logging.getLogger('columnar_homog.checks')

CLOSED_FORM_TOL = 1e-12
ROUTE_TOL = 1e-7
DISCRETE_TOL = 1e-8
PW_TOL = 0.02
SENSITIVITY_TOL = 1e-6
RASTER_SIZES = (16, 64, 256)


def _require(condition: bool, invariant: str, message: str):
    if not condition:
        raise AcceptanceError(invariant, message)


def _max_diff(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _random_params(rng: np.random.Generator) -> LimitParams:
    return LimitParams(
        alpha1=rng.uniform(0.5, 2.0),
        beta1=rng.uniform(-1.0, 1.0),
        alpha2=rng.uniform(0.5, 3.0),
        beta2=rng.uniform(-1.0, 1.0),
        h=tuple(rng.uniform(-1.0, 1.0, 3)),
    )


def check_tensor_core(rng: np.random.Generator):
    for _ in range(5):
        alpha, beta = rng.uniform(0.1, 3.0), rng.uniform(-2.0, 2.0)
        h = rng.uniform(-1.0, 1.0, 3)
        sigma = realize_sigma(PerturbedConductivity(alpha, beta, h))
        _require(
            _max_diff(0.5 * (sigma + sigma.T), alpha * np.eye(3)) <= CLOSED_FORM_TOL,
            'symmetric_part',
            f'symmetric part of sigma(h) differs from {alpha} I',
        )
        sig1, sig2 = PhasePair(1.0, beta, alpha + 1.5, -beta).blocks(h)
        pair = interface_match(sig1, sig2, beta, -beta, h)
        _require(
            abs(np.linalg.det(pair.Pi) - 1) <= CLOSED_FORM_TOL
            and abs(np.linalg.det(pair.PiHat) - 1) <= CLOSED_FORM_TOL,
            'pi_unimodular',
            'det Pi or det PiHat differs from 1',
        )
        p1, q1, _ = transformed_blocks(sig1.matrix, 1.0, beta, h, pair)
        p2, q2, _ = transformed_blocks(sig2.matrix, alpha + 1.5, -beta, h, pair)
        _require(
            max(_max_diff(p1, p2), _max_diff(q1, q2)) <= 1e-10,
            'interface_match',
            f'transformed off-diagonal blocks differ between phases: {p1}, {p2}',
        )


def check_closed_forms(rng: np.random.Generator):
    for _ in range(5):
        p = _random_params(rng)
        rho = rng.uniform(0.5, 1.5)
        for name, oracle, sigma0 in (
            ('circular', oracle_circular, circular_sigma0()),
            ('grid', oracle_grid, grid_sigma0(rho)),
        ):
            general = assemble_effective(transversal_limit(sigma0, p), rho, p)
            closed = oracle(p, rho)
            scale = max(1.0, float(np.max(np.abs(closed.matrix))))
            _require(
                _max_diff(general.matrix, closed.matrix) <= CLOSED_FORM_TOL * scale,
                f'{name}_closed_form',
                f'general assembly and closed form differ at {p}, rho={rho}',
            )
            flipped = oracle(p.with_h(tuple(-x for x in p.h)), rho)
            _require(
                _max_diff(flipped.matrix, closed.matrix.T) <= CLOSED_FORM_TOL * scale,
                f'{name}_onsager',
                'sigma*(-h) differs from sigma*(h)^T',
            )
            sigma_t = general.transversal
            pair = pi_limits(p.alpha2, p.beta2, p.h)
            conjugated = pi_conjugate(general.matrix, pair)
            p_prime, q_prime, a_prime = transformed_limits(p, sigma_t, rho)
            _require(
                max(
                    _max_diff(conjugated[:2, 2], p_prime),
                    _max_diff(conjugated[2, :2], q_prime),
                    abs(conjugated[2, 2] - a_prime),
                )
                <= 1e-10 * scale,
                f'{name}_transformed_limits',
                'Pi sigma* PiHat does not match the transformed limit blocks',
            )
            analytic = h_sensitivity(name, p, rho)
            numeric = finite_difference_sensitivity(name, p, rho)
            _require(
                _max_diff(analytic, numeric) <= SENSITIVITY_TOL * scale,
                f'{name}_h_sensitivity',
                'analytic field derivatives differ from central differences',
            )


def check_schedules():
    alpha2, beta2 = 2.0, 1.0
    for schedule in (
        circular_schedule([0.2, 0.1, 0.05], alpha2, beta2),
        grid_schedule([0.125, 0.0625, 0.03125], alpha2, beta2),
    ):
        for verdict in check_conditions(schedule, 1.0):
            _require(
                verdict.passed,
                verdict.name,
                f'{schedule.kind} schedule: {verdict.values}',
            )
        for stage in schedule:
            scale = stage.scale_n
            _require(
                abs(scale * stage.alpha2n - alpha2) <= CLOSED_FORM_TOL * alpha2
                and abs(scale * stage.beta2n - beta2) <= CLOSED_FORM_TOL * beta2,
                'schedule_scaling',
                f'{schedule.kind} stage {stage.shape_param}: rescaled contrast '
                f'{scale * stage.alpha2n} differs from {alpha2}',
            )


def check_raster():
    errors = []
    for n in RASTER_SIZES:
        field = rasterize(CellGeometry.disk(0.25), n)
        errors.append(abs(field.raster_fraction - field.exact_fraction))
    _require(
        errors[-1] < errors[0],
        'raster_fraction',
        f'disk raster fraction errors {errors} do not shrink with N',
    )


def check_transversal(rng: np.random.Generator, settings: SolverSettings):
    field = rasterize(CellGeometry.disk(0.25), 32)
    sig1 = TransversalBlock(1.0, rng.uniform(-1.0, 1.0))
    sig2 = TransversalBlock(5.0, rng.uniform(-3.0, 3.0))
    base = homogenize_transversal(field, sig1, sig2, settings)
    scale = float(np.max(np.abs(base)))

    c = rng.uniform(-2.0, 2.0)
    shifted = homogenize_transversal(field, sig1.shifted(c), sig2.shifted(c), settings)
    _require(
        _max_diff(shifted, base + c * J) <= DISCRETE_TOL * scale,
        'constant_shift',
        f'adding {c} J to both phases did not add {c} J to the homogenized block',
    )

    adjoint = homogenize_transversal(field, sig1.transpose(), sig2.transpose(), settings)
    _require(
        _max_diff(adjoint, base.T) <= DISCRETE_TOL * scale,
        'adjoint',
        'transposed phases do not give the transposed homogenized block',
    )

    symmetric = homogenize_transversal(
        field, TransversalBlock(1.0), TransversalBlock(5.0), settings
    )
    f = field.raster_fraction
    arithmetic = (1 - f) * 1.0 + f * 5.0
    harmonic = 1 / ((1 - f) / 1.0 + f / 5.0)
    for angle in rng.uniform(0.0, np.pi, 3):
        e = np.array([np.cos(angle), np.sin(angle)])
        energy = float(e @ symmetric @ e)
        _require(
            harmonic - DISCRETE_TOL <= energy <= arithmetic + DISCRETE_TOL,
            'voigt_reuss',
            f'directional value {energy} outside [{harmonic}, {arithmetic}]',
        )


def check_cell_solver(rng: np.random.Generator, settings: SolverSettings):
    h = tuple(rng.uniform(-1.0, 1.0, 3))
    field = rasterize(CellGeometry.disk(0.25), 16)
    same = homogenize(field, PhasePair(1.3, 0.4, 1.3, 0.4), h, settings)
    sigma1 = realize_sigma(PerturbedConductivity(1.3, 0.4, h))
    _require(
        _max_diff(same.sigma3d.matrix, sigma1) <= DISCRETE_TOL,
        'homogeneous_identity',
        'single-phase cell does not reproduce sigma1(h)',
    )

    laminate = rasterize(CellGeometry.laminate(0.5), 16)
    sigma2d = homogenize_transversal(
        laminate, TransversalBlock(1.0), TransversalBlock(10.0), settings
    )
    _require(
        _max_diff(sigma2d, np.diag([20 / 11, 5.5])) <= DISCRETE_TOL,
        'laminate_bounds',
        f'laminate tensor {sigma2d.tolist()} is not diag(20/11, 11/2)',
    )

    field = rasterize(CellGeometry.disk(0.25), 32)
    phases = PhasePair(1.0, 0.5, 4.0, -1.0)
    direct = homogenize(field, phases, h, settings)
    via_pi = homogenize_via_pi(field, phases, h, settings)
    scale = float(np.max(np.abs(direct.sigma3d.matrix)))
    _require(
        _max_diff(direct.sigma3d.matrix, via_pi.sigma3d.matrix) <= ROUTE_TOL * scale,
        'route_agreement',
        'direct and Pi routes disagree',
    )
    flipped = homogenize(field, phases, tuple(-x for x in h), settings)
    _require(
        _max_diff(flipped.sigma3d.matrix, direct.sigma3d.matrix.T) <= DISCRETE_TOL * scale,
        'discrete_onsager',
        'homogenized sigma*(-h) differs from sigma*(h)^T',
    )

    pw = estimate_pw_constant(rasterize(CellGeometry.disk(0.25), 32), 1.0, 1.0, settings)
    expected = 1 / (4 * np.pi ** 2)
    _require(
        abs(pw.c_value - expected) <= PW_TOL * expected,
        'pw_homogeneous',
        f'PW constant {pw.c_value} differs from 1/(4 pi^2) = {expected}',
    )

    verdict = monotonicity_test(0.125, 0.25, 10.0, 32, settings=settings)
    _require(
        verdict.passed,
        'monotonicity',
        f'nested frames give an unordered tensor pair, eigenvalue {verdict.final}',
    )


def check_macro():
    problem = macro_validate.make_problem(
        'homogeneous', 0.5, 0.0, 1.0, 0.0, 1.0, 0.0
    )
    solution = macro_validate.solve_fine(problem, (8, 8, 8))
    defect = macro_validate.energy_identity(solution)
    _require(
        defect <= DISCRETE_TOL,
        'energy_identity',
        f'bilinear form and load differ by {defect:.3e}',
    )
    _require(
        float(solution.u.min()) >= -DISCRETE_TOL,
        'maximum_principle',
        'non-negative load gave a negative solution',
    )
    boundary = np.concatenate(
        [
            solution.u[[0, -1]].ravel(),
            solution.u[:, [0, -1]].ravel(),
            solution.u[:, :, [0, -1]].ravel(),
        ]
    )
    _require(not np.any(boundary), 'dirichlet_boundary', 'boundary values are not zero')


def run_checks(
    seed: int = 0, settings: Optional[SolverSettings] = None, quick: bool = False
) -> List[str]:
    """
    Run the invariant suite in order
    :param quick: skip the checks that solve cell or macro problems
    :return: names of the passed groups
    """
    settings = settings or SolverSettings()
    rng = np.random.default_rng(seed)
    groups: List[Tuple[str, Callable]] = [
        ('tensor_core', lambda: check_tensor_core(rng)),
        ('closed_forms', lambda: check_closed_forms(rng)),
        ('schedules', check_schedules),
        ('raster', check_raster),
    ]
    if not quick:
        groups += [
            ('transversal', lambda: check_transversal(rng, settings)),
            ('cell_solver', lambda: check_cell_solver(rng, settings)),
            ('macro', check_macro),
        ]
    passed = []
    for name, check in groups:
        logger.info(f'Checking {name}')
        check()
        passed.append(name)
    return passed
