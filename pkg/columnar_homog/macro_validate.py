"""
Fine-scale versus homogenized Dirichlet problems on the unit cube:
    -div(sigma(h) grad u) = f in (0, 1)^3,  u = 0 on the boundary,
with a columnar coefficient sigma(h)(x1, x2), discretized by trilinear
elements on a uniform grid.

Solutions are stored as (Nz + 1, Ny + 1, Nx + 1) nodal arrays, x fastest.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse.linalg import spsolve

from columnar_homog import fem, utils
from columnar_homog.cell_solver import homogenize
from columnar_homog.exceptions import (
    IncompatibleGridError,
    ResolutionError,
    SolverError,
    ValidationError,
)
from columnar_homog.geometry import (
    CellGeometry,
    PhaseField,
    RhoField,
    Stage,
    macro_phase_indicator,
    rasterize,
)
from columnar_homog.linsolve import SolverSettings, solve_nonsymmetric
from columnar_homog.tensor_core import (
    EffectiveTensor,
    PerturbedConductivity,
    PhasePair,
    realize_sigma,
)

logger = logging.getLogger('columnar_homog.macro_validate')

MAX_GRID = 48
MAX_CONTRAST = 1e3
MACRO_RTOL = 1e-12
MIN_CELLS_ACROSS = 2
DEFAULT_FRAME_T = 1 / 6
KINDS = ('frame', 'disk', 'homogeneous')


@dataclass(frozen=True)
class SourceTerm:
    """
    Separable source f(x) = p1(x1) p2(x2) p3(x3), polynomial coefficients
    lowest degree first
    """

    x1: Tuple[float, ...] = (1.0,)
    x2: Tuple[float, ...] = (1.0,)
    x3: Tuple[float, ...] = (1.0,)

    @classmethod
    def parse(cls, spec: str) -> 'SourceTerm':
        """'1' or '0,1;1;1' (x1 factor; x2 factor; x3 factor)"""
        parts = str(spec).split(';')
        if len(parts) == 1:
            parts = parts + ['1', '1']
        if len(parts) != 3:
            raise ValidationError(f'Source {spec!r} must have 1 or 3 factors')
        return cls(*(utils.parse_floats(part) for part in parts))

    def __call__(self, x1: Any, x2: Any, x3: Any) -> np.ndarray:
        poly = np.polynomial.polynomial.polyval
        return poly(x1, self.x1) * poly(x2, self.x2) * poly(x3, self.x3)

    @property
    def is_nonnegative_constant(self) -> bool:
        return all(len(c) == 1 and c[0] >= 0 for c in (self.x1, self.x2, self.x3))


@dataclass(frozen=True)
class MacroProblem:
    """
    eps-periodic columnar microstructure of the given kind at one contrast
    stage; kind 'homogeneous' uses the matrix phase everywhere
    """

    kind: str
    epsilon: float
    stage: Stage
    alpha1: float
    beta1: float
    h: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    source: SourceTerm = field(default_factory=SourceTerm)
    rho: Optional[RhoField] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f'Unknown microstructure {self.kind}, expected {KINDS}')
        if not self.alpha1 > 0:
            raise ValidationError(f'alpha1 must be positive, got {self.alpha1}')
        cells = 1 / self.epsilon if self.epsilon > 0 else 0
        if not self.epsilon > 0 or abs(cells - round(cells)) > 1e-9:
            raise ValidationError(
                f'epsilon must divide the unit square evenly, got {self.epsilon}'
            )
        if self.stage.alpha2n / self.alpha1 > MAX_CONTRAST:
            raise ValidationError(
                f'Contrast {self.stage.alpha2n / self.alpha1:g} exceeds {MAX_CONTRAST:g}'
            )
        object.__setattr__(self, 'h', tuple(float(x) for x in self.h))

    @property
    def phases(self) -> PhasePair:
        return PhasePair(self.alpha1, self.beta1, self.stage.alpha2n, self.stage.beta2n)


def make_problem(
    kind: str,
    epsilon: float,
    shape_param: float,
    alpha1: float,
    beta1: float,
    alpha2n: float,
    beta2n: float,
    h: Sequence[float] = (0.0, 0.0, 0.0),
    source: Optional[SourceTerm] = None,
    rho: Optional[RhoField] = None,
) -> MacroProblem:
    if kind == 'frame':
        theta = CellGeometry.frame(shape_param).exact_area
    elif kind == 'disk':
        theta = CellGeometry.disk(shape_param).exact_area
    else:
        theta = 0.0
    stage = Stage(0, epsilon, shape_param, alpha2n, beta2n, theta, 1.0, alpha2n)
    return MacroProblem(
        kind, epsilon, stage, alpha1, beta1, tuple(h), source or SourceTerm(), rho
    )


@dataclass(frozen=True, eq=False)
class MacroSolution:
    u: np.ndarray
    residual: float
    iterations: int
    energy: float
    load: float

    @property
    def resolution(self) -> Tuple[int, int, int]:
        nz, ny, nx = self.u.shape
        return nx - 1, ny - 1, nz - 1

    def energy_defect(self) -> float:
        return energy_identity(self)


@dataclass(frozen=True)
class CompareResult:
    l2: float
    h1: float


def _check_resolution(resolution: Sequence[int]) -> Tuple[int, int, int]:
    resolution = tuple(int(n) for n in resolution)
    if len(resolution) != 3 or min(resolution) < 2:
        raise ValidationError(f'Need three grid sizes >= 2, got {resolution}')
    if max(resolution) > MAX_GRID:
        raise ValidationError(f'3D grids are limited to {MAX_GRID} cells per axis')
    return resolution


def _element_centres(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def _solve(
    plane_coefficients: np.ndarray,
    resolution: Tuple[int, int, int],
    source: SourceTerm,
    settings: SolverSettings,
    direct: bool,
    label: str,
) -> MacroSolution:
    """
    :param plane_coefficients: (P, 3, 3) tensors, P = 1 or Nx * Ny, element
        (i, j, k) uses entry (i + Nx j) % P
    """
    nx, ny, nz = resolution
    element = fem.q1_element((1.0 / nx, 1.0 / ny, 1.0 / nz))
    conn = fem.element_connectivity(resolution, periodic=False)
    n = fem.node_count(resolution, periodic=False)
    n_elements = len(conn)
    plane_matrices = element.matrices(plane_coefficients)
    matrices = plane_matrices[np.arange(n_elements) % len(plane_matrices)]
    stiffness = fem.assemble_matrix(conn, matrices, n)

    zc, yc, xc = np.meshgrid(
        _element_centres(nz), _element_centres(ny), _element_centres(nx), indexing='ij'
    )
    f_elements = source(xc.ravel(), yc.ravel(), zc.ravel())
    load = fem.assemble_vector(
        conn, f_elements[:, None] * element.mass.sum(axis=1)[None, :], n
    )

    c, b, a = (idx.ravel() for idx in np.indices((nz + 1, ny + 1, nx + 1)))
    interior = (a > 0) & (a < nx) & (b > 0) & (b < ny) & (c > 0) & (c < nz)
    k_ii = stiffness[interior][:, interior]
    b_i = load[interior]
    if direct:
        x = spsolve(k_ii.tocsc(), b_i)
        if not np.all(np.isfinite(x)):
            raise SolverError(f'{label}: direct solve returned non-finite values')
        residual = float(np.linalg.norm(b_i - k_ii @ x) / max(np.linalg.norm(b_i), 1e-300))
        iterations = 0
    else:
        result = solve_nonsymmetric(
            k_ii, b_i, settings, budget=settings.max_iter_factor * max(resolution), label=label
        )
        x, residual, iterations = result.x, result.residual, result.iterations
    u = np.zeros(n)
    u[interior] = x
    energy = float(x @ (k_ii @ x))
    work = float(b_i @ x)
    logger.info(
        f'{label}: {len(x)} unknowns, residual {residual:.2e}, {iterations} iterations'
    )
    return MacroSolution(u.reshape(nz + 1, ny + 1, nx + 1), residual, iterations, energy, work)


def _settings(settings: Optional[SolverSettings]) -> SolverSettings:
    return settings or SolverSettings(rtol=MACRO_RTOL)


def solve_fine(
    problem: MacroProblem,
    resolution: Sequence[int],
    settings: Optional[SolverSettings] = None,
    direct: bool = False,
) -> MacroSolution:
    """
    Trilinear solve with the eps-periodic columnar coefficient sigma_n(h)(x1, x2)
    """
    resolution = _check_resolution(resolution)
    nx, ny, _ = resolution
    sigma1 = realize_sigma(PerturbedConductivity(problem.alpha1, problem.beta1, problem.h))
    if problem.kind == 'homogeneous':
        return _solve(
            sigma1[None], resolution, problem.source, _settings(settings), direct, 'fine'
        )
    for count in (nx, ny):
        per_cell = count * problem.epsilon
        if abs(per_cell - round(per_cell)) > 1e-9:
            raise ResolutionError(
                f'{count} cells per axis do not fit eps={problem.epsilon} evenly'
            )
        thickness = problem.stage.shape_param * per_cell
        across = 2 * thickness
        if across < MIN_CELLS_ACROSS:
            raise ResolutionError(
                f'{problem.kind} feature spans {across:g} < {MIN_CELLS_ACROSS} cells '
                f'at {count} cells per axis'
            )
    sigma2 = realize_sigma(
        PerturbedConductivity(problem.stage.alpha2n, problem.stage.beta2n, problem.h)
    )
    x2, x1 = np.meshgrid(_element_centres(ny), _element_centres(nx), indexing='ij')
    inclusion = macro_phase_indicator(
        problem.kind,
        problem.epsilon,
        problem.rho,
        problem.stage.shape_param,
        x1.ravel(),
        x2.ravel(),
    )
    plane = np.where(inclusion[:, None, None], sigma2[None], sigma1[None])
    logger.info(
        f'Fine problem eps={problem.epsilon}: inclusion fraction {inclusion.mean():.4f}'
    )
    return _solve(plane, resolution, problem.source, _settings(settings), direct, 'fine')


SigmaStar = Union[EffectiveTensor, Callable[[float, float], EffectiveTensor]]


def solve_homogenized(
    sigma_star: SigmaStar,
    source: Optional[SourceTerm],
    resolution: Sequence[int],
    settings: Optional[SolverSettings] = None,
    direct: bool = False,
) -> MacroSolution:
    """
    :param sigma_star: constant tensor, or x' -> tensor for a column-wise
        varying coefficient
    """
    resolution = _check_resolution(resolution)
    nx, ny, _ = resolution
    if isinstance(sigma_star, EffectiveTensor):
        plane = sigma_star.matrix[None]
    else:
        plane = np.array(
            [
                sigma_star(x1, x2).matrix
                for x2 in _element_centres(ny)
                for x1 in _element_centres(nx)
            ]
        )
    smallest = np.min(np.linalg.eigvalsh(0.5 * (plane + np.transpose(plane, (0, 2, 1)))))
    if not smallest > 0:
        raise ValidationError(f'Homogenized tensor is not coercive: {smallest}')
    return _solve(
        plane,
        resolution,
        source or SourceTerm(),
        _settings(settings),
        direct,
        'homogenized',
    )


def energy_identity(solution: MacroSolution) -> float:
    """Relative defect between the bilinear form at (u, u) and the load at u"""
    scale = max(abs(solution.load), 1e-300)
    return abs(solution.energy - solution.load) / scale


def _restrict(u: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    steps = []
    for n_fine, n_coarse in zip(u.shape, shape):
        if (n_fine - 1) % (n_coarse - 1):
            raise IncompatibleGridError(
                f'Cannot restrict a grid of {u.shape} nodes to {shape}'
            )
        steps.append((n_fine - 1) // (n_coarse - 1))
    return u[:: steps[0], :: steps[1], :: steps[2]]


def _cell_gradients(u: np.ndarray) -> np.ndarray:
    """Element-centred gradient, shape (3, Nz, Ny, Nx), components x, y, z"""
    nz, ny, nx = (n - 1 for n in u.shape)

    def average(g, axes):
        for axis in axes:
            g = 0.5 * (np.take(g, range(g.shape[axis] - 1), axis=axis)
                       + np.take(g, range(1, g.shape[axis]), axis=axis))
        return g

    gx = average(np.diff(u, axis=2) * nx, (0, 1))
    gy = average(np.diff(u, axis=1) * ny, (0, 2))
    gz = average(np.diff(u, axis=0) * nz, (1, 2))
    return np.stack([gx, gy, gz])


def compare(
    u_fine: Union[MacroSolution, np.ndarray], u_hom: Union[MacroSolution, np.ndarray]
) -> CompareResult:
    """
    Relative L2 and H1-seminorm differences on the coarser of the two grids
    """
    a = u_fine.u if isinstance(u_fine, MacroSolution) else np.asarray(u_fine)
    b = u_hom.u if isinstance(u_hom, MacroSolution) else np.asarray(u_hom)
    if a.ndim != 3 or b.ndim != 3:
        raise IncompatibleGridError('Solutions must be 3D nodal arrays')
    if a.size >= b.size:
        a = _restrict(a, b.shape)
    else:
        b = _restrict(b, a.shape)
    diff = a - b
    norm = np.linalg.norm(b)
    l2 = float(np.linalg.norm(diff) / norm) if norm > 0 else float(np.linalg.norm(diff))
    grad_diff = np.sqrt(np.sum(_cell_gradients(diff) ** 2))
    grad_norm = np.sqrt(np.sum(_cell_gradients(b) ** 2))
    h1 = float(grad_diff / grad_norm) if grad_norm > 0 else float(grad_diff)
    return CompareResult(l2, h1)


def export_solution(
    solution: MacroSolution, fpath: str, metadata: Optional[Dict] = None
) -> str:
    """
    Flat binary grid: three little-endian int32 node counts (nx, ny, nz),
    then the nodal values as little-endian float64, x fastest; metadata
    goes to <fpath>.json
    """
    utils.safe_mkdir(os.path.dirname(os.path.abspath(fpath)))
    nz, ny, nx = solution.u.shape
    with open(fpath, 'wb') as fh:
        fh.write(np.array([nx, ny, nz], dtype='<i4').tobytes())
        fh.write(np.ascontiguousarray(solution.u, dtype='<f8').tobytes())
    info = {
        'dims': [nx, ny, nz],
        'order': 'x-fastest',
        'dtype': 'float64-le',
        'header': 'int32-le nx ny nz',
        'spacing': [1.0 / (nx - 1), 1.0 / (ny - 1), 1.0 / (nz - 1)],
        'residual': solution.residual,
        'iterations': solution.iterations,
        'energy_defect': energy_identity(solution),
    }
    info.update(metadata or {})
    utils.write_json(info, fpath + '.json')
    return fpath


def read_solution(fpath: str) -> np.ndarray:
    with open(fpath, 'rb') as fh:
        nx, ny, nz = np.frombuffer(fh.read(12), dtype='<i4')
        values = np.frombuffer(fh.read(), dtype='<f8')
    if values.size != nx * ny * nz:
        raise ValidationError(f'{fpath}: expected {nx * ny * nz} values, got {values.size}')
    return values.reshape(nz, ny, nx)


def _modulated_tensor(
    problem: MacroProblem, cells_per_period: int, settings: Optional[SolverSettings]
) -> Callable[[float, float], EffectiveTensor]:
    """
    x' -> homogenized tensor of the eps-cell containing x', whose shape is set
    by rho at the cell centre as in the fine microstructure; cells with the
    same raster share one cell solve
    """
    eps = problem.epsilon
    offsets = (np.arange(cells_per_period) + 0.5) / cells_per_period
    cache: Dict[bytes, EffectiveTensor] = {}

    def sigma_star(x1: float, x2: float) -> EffectiveTensor:
        k1, k2 = np.floor(x1 / eps), np.floor(x2 / eps)
        y1, y2 = np.meshgrid(eps * (k1 + offsets), eps * (k2 + offsets))
        mask = macro_phase_indicator(
            problem.kind, eps, problem.rho, problem.stage.shape_param, y1, y2
        )
        key = mask.tobytes()
        if key not in cache:
            mask.setflags(write=False)
            field_ = PhaseField(cells_per_period, mask, None, f'{problem.kind}:rho')
            cache[key] = homogenize(field_, problem.phases, problem.h, settings).sigma3d
            logger.debug(f'Cell tensor {len(cache)} at x=({x1:.3f}, {x2:.3f})')
        return cache[key]

    return sigma_star


def homogenized_tensor(
    problem: MacroProblem, cells_per_period: int, settings: Optional[SolverSettings]
) -> SigmaStar:
    """
    Constant cell tensor of the problem, or x' -> tensor when rho modulates
    the cells; cells_per_period sets the cell raster
    """
    if problem.kind == 'homogeneous':
        return EffectiveTensor(
            realize_sigma(PerturbedConductivity(problem.alpha1, problem.beta1, problem.h))
        )
    if problem.rho is not None:
        return _modulated_tensor(problem, cells_per_period, settings)
    builder = CellGeometry.frame if problem.kind == 'frame' else CellGeometry.disk
    field_ = rasterize(builder(problem.stage.shape_param), cells_per_period)
    return homogenize(field_, problem.phases, problem.h, settings).sigma3d


def validate_epsilon(
    problem: MacroProblem,
    resolution: int = MAX_GRID,
    settings: Optional[SolverSettings] = None,
    export_dir: Optional[str] = None,
) -> Dict:
    """
    Fine and homogenized solves for one eps; the homogenized tensor comes
    from the cell problem at the same number of grid cells per period
    """
    grid = (resolution,) * 3
    cells_per_period = int(round(resolution * problem.epsilon))
    sigma_star = homogenized_tensor(problem, cells_per_period, None)
    fine = solve_fine(problem, grid, settings)
    hom = solve_homogenized(sigma_star, problem.source, grid, settings)
    centre_tensor = (
        sigma_star if isinstance(sigma_star, EffectiveTensor) else sigma_star(0.5, 0.5)
    )
    result = compare(fine, hom)
    row = {
        'epsilon': problem.epsilon,
        'resolution': resolution,
        'cells_per_period': cells_per_period,
        'l2_error': result.l2,
        'h1_error': result.h1,
        'energy_defect_fine': energy_identity(fine),
        'energy_defect_hom': energy_identity(hom),
        'min_fine': float(fine.u.min()),
        'iterations_fine': fine.iterations,
        'iterations_hom': hom.iterations,
        'sigma_star': centre_tensor.matrix,
    }
    if export_dir:
        tag = f'eps{problem.epsilon:g}'
        export_solution(fine, os.path.join(export_dir, f'fine_{tag}.bin'), {'epsilon': problem.epsilon})
        export_solution(hom, os.path.join(export_dir, f'hom_{tag}.bin'), {'epsilon': problem.epsilon})
    logger.info(
        f'eps={problem.epsilon}: L2 error {result.l2:.4e}, H1 error {result.h1:.4e}'
    )
    return row


def _validate_star(kwargs: Dict) -> Dict:
    return validate_epsilon(**kwargs)


def run_macro_validation(
    epsilons: Sequence[float] = (0.25, 0.125),
    kind: str = 'frame',
    shape_param: float = DEFAULT_FRAME_T,
    alpha1: float = 1.0,
    beta1: float = 0.0,
    contrast: float = 100.0,
    beta2n: float = 0.0,
    h: Sequence[float] = (0.0, 0.0, 1.0),
    source: Optional[SourceTerm] = None,
    rho: Optional[RhoField] = None,
    resolution: int = MAX_GRID,
    settings: Optional[SolverSettings] = None,
    workers: int = 1,
    export_dir: Optional[str] = None,
) -> List[Dict]:
    """
    Fine versus homogenized comparison for each eps, in the given order;
    with rho the cell shapes follow the density
    """
    problems = [
        make_problem(
            kind, eps, shape_param, alpha1, beta1, contrast * alpha1, beta2n, h,
            source, rho,
        )
        for eps in epsilons
    ]
    tasks = [
        dict(problem=p, resolution=resolution, settings=settings, export_dir=export_dir)
        for p in problems
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_validate_star, tasks))
    return [_validate_star(task) for task in tasks]
