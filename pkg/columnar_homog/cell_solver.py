"""
Periodic transversal cell problems on a rasterized unit cell and the
homogenized 3x3 tensor of a columnar two-phase Hall medium.

Every transversal problem has the weak form
    <S grad w . grad phi> = -<g . grad phi>  for all periodic phi,
with S the per-element transversal block and g a per-element source:
    g = S lambda      for the lambda columns,
    g = -beta J h~    for the third (e3) column.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from columnar_homog import fem
from columnar_homog.exceptions import SolverError, ValidationError
from columnar_homog.geometry import PhaseField
from columnar_homog.linsolve import (
    PinnedInverse,
    SolverSettings,
    project_mean_zero,
    solve_periodic,
)
from columnar_homog.tensor_core import (
    EffectiveTensor,
    PhasePair,
    TransversalBlock,
    interface_match,
    j_h,
    pi_deconjugate,
    transformed_blocks,
)

logger = logging.getLogger('columnar_homog.cell_solver')

ZERO_SOURCE_RTOL = 1e-13
COERCIVITY_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class CellSolution:
    """
    Mean-zero periodic corrector W (node (i, j) at i + N j) with its
    averaged flux: 2 entries for a lambda problem, 3 for the e3 problem
    """

    W: np.ndarray
    lam: Union[Tuple[float, float], str]
    flux_avg: np.ndarray
    residual: float
    iterations: int
    resolution: int

    @property
    def grid(self) -> np.ndarray:
        return self.W.reshape(self.resolution, self.resolution)

    @property
    def mean(self) -> float:
        return float(self.W.mean())


@dataclass(frozen=True, eq=False)
class HomogenizedPair:
    sigma2d: np.ndarray
    sigma3d: EffectiveTensor
    route: str
    iterations: int = 0
    residual: float = 0.0


@dataclass(frozen=True)
class PwEstimate:
    """
    Largest generalized Rayleigh quotient <a V^2> / <a |grad V|^2> over
    mean-zero periodic V on the unit cell
    """

    c_value: float
    eigen_residual: float
    iterations: int
    resolution: int

    def rescaled(self, epsilon: float) -> float:
        """Constant of the eps-periodic problem, eps^2 c"""
        return epsilon * epsilon * self.c_value


class CellSystem:
    """
    Assembled periodic transversal operator of a rasterized cell with
    per-element blocks S, Hall coefficients beta and corner values alpha
    """

    def __init__(
        self,
        field: PhaseField,
        blocks: np.ndarray,
        alpha: np.ndarray,
        beta: np.ndarray,
        settings: Optional[SolverSettings] = None,
    ):
        self.field = field
        self.N = field.resolution
        self.settings = settings or SolverSettings()
        self.blocks = np.asarray(blocks, dtype=float)
        self.alpha = np.asarray(alpha, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        if np.any(0.5 * np.einsum('eaa->e', self.blocks) <= 0):
            raise ValidationError('Transversal blocks must have positive diagonal')
        self.element = fem.q1_element((1.0 / self.N, 1.0 / self.N))
        self.conn = fem.element_connectivity((self.N, self.N), periodic=True)
        self.n = self.N * self.N
        self.area = 1.0 / self.n
        self.matrix = fem.assemble_matrix(
            self.conn, self.element.matrices(self.blocks), self.n
        )

    @classmethod
    def from_blocks(
        cls,
        field: PhaseField,
        sig1: TransversalBlock,
        sig2n: TransversalBlock,
        settings: Optional[SolverSettings] = None,
    ) -> 'CellSystem':
        for sig in (sig1, sig2n):
            if not sig.alpha > 0:
                raise ValidationError(f'Transversal block is not coercive: {sig}')
        return cls(
            field,
            field.element_values(sig1.matrix, sig2n.matrix),
            field.element_values(sig1.alpha, sig2n.alpha),
            np.zeros(field.resolution ** 2),
            settings,
        )

    @classmethod
    def from_phases(
        cls,
        field: PhaseField,
        phases: PhasePair,
        h: Any,
        settings: Optional[SolverSettings] = None,
    ) -> 'CellSystem':
        sig1, sig2n = phases.blocks(h)
        return cls(
            field,
            field.element_values(sig1.matrix, sig2n.matrix),
            field.element_values(phases.alpha1, phases.alpha2),
            field.element_values(phases.beta1, phases.beta2),
            settings,
        )

    def _symmetric_preconditioner(self):
        sym = 0.5 * (self.blocks + np.transpose(self.blocks, (0, 2, 1)))
        stiffness = fem.assemble_matrix(self.conn, self.element.matrices(sym), self.n)
        return PinnedInverse(stiffness).operator()

    def solve(self, source: np.ndarray, label: str) -> Tuple[np.ndarray, float, int]:
        """
        Mean-zero w with <S grad w . grad phi> = -<g . grad phi>
        :param source: per-element g, shape (E, 2)
        """
        rhs = -fem.assemble_vector(
            self.conn, source @ self.element.gradient, self.n
        )
        scale = np.max(np.abs(source)) * np.max(np.abs(self.element.gradient))
        if scale == 0 or np.max(np.abs(rhs)) <= ZERO_SOURCE_RTOL * scale:
            return np.zeros(self.n), 0.0, 0
        result = solve_periodic(
            self.matrix,
            rhs,
            self.settings,
            budget=self.settings.max_iter_factor * self.N,
            fallback=self._symmetric_preconditioner,
            label=f'{self.field.label} N={self.N} {label}',
        )
        return result.x, result.residual, result.iterations

    def gradient_integrals(self, w: np.ndarray) -> np.ndarray:
        return fem.element_gradient_integrals(self.element, self.conn, w)

    def solve_lambda(self, lam: Any) -> Tuple[CellSolution, np.ndarray]:
        """
        :return: the solution and the per-element integrals of grad W + lambda
        """
        lam = np.asarray(lam, dtype=float)
        w, residual, iterations = self.solve(self.blocks @ lam, f'lambda={lam.tolist()}')
        grads = self.gradient_integrals(w) + lam * self.area
        flux = np.einsum('eab,eb->a', self.blocks, grads)
        solution = CellSolution(
            w, tuple(lam.tolist()), flux, residual, iterations, self.N
        )
        return solution, grads

    def solve_e3(self, h: Any) -> CellSolution:
        v = j_h(h)
        source = -np.outer(self.beta, v)
        w, residual, iterations = self.solve(source, 'e3')
        grads = self.gradient_integrals(w)
        flux = np.empty(3)
        flux[:2] = np.einsum('eab,eb->a', self.blocks, grads) + source.sum(axis=0) * self.area
        flux[2] = self.alpha.mean() + float((self.beta @ grads) @ v)
        return CellSolution(w, 'e3', flux, residual, iterations, self.N)


def solve_cell(
    field: PhaseField,
    sig1: TransversalBlock,
    sig2n: TransversalBlock,
    lam: Any,
    settings: Optional[SolverSettings] = None,
) -> CellSolution:
    """
    Corrector of <S (grad W + lambda) . grad phi> = 0 with flux
    <S (grad W + lambda)>
    """
    solution, _ = CellSystem.from_blocks(field, sig1, sig2n, settings).solve_lambda(lam)
    return solution


def solve_cell_e3(
    field: PhaseField,
    phases: PhasePair,
    h: Any,
    settings: Optional[SolverSettings] = None,
) -> CellSolution:
    """
    Third-column problem div(S grad w) = div(beta J h~); the flux is
    (<S grad w> - <beta> J h~, <alpha> + <beta grad w> . J h~)
    """
    return CellSystem.from_phases(field, phases, h, settings).solve_e3(h)


def homogenize_transversal(
    field: PhaseField,
    sig1: TransversalBlock,
    sig2n: TransversalBlock,
    settings: Optional[SolverSettings] = None,
) -> np.ndarray:
    """2x2 homogenized transversal tensor; column k is the flux for lambda = e_k"""
    system = CellSystem.from_blocks(field, sig1, sig2n, settings)
    columns = [system.solve_lambda(lam)[0].flux_avg for lam in np.eye(2)]
    return np.column_stack(columns)


def _check_coercivity(sigma2d: np.ndarray, alpha_min: float, label: str):
    smallest = float(np.min(np.linalg.eigvalsh(0.5 * (sigma2d + sigma2d.T))))
    if smallest < alpha_min * (1 - COERCIVITY_RTOL):
        raise SolverError(
            f'{label}: homogenized transversal tensor lost coercivity, smallest '
            f'eigenvalue of its symmetric part {smallest} < {alpha_min}'
        )


def _lambda_columns(
    system: CellSystem, h: Any
) -> Tuple[np.ndarray, np.ndarray, int, float]:
    """Transversal 2x2 block and third-row entries from the two lambda solves"""
    v = j_h(h)
    sigma2d = np.empty((2, 2))
    row3 = np.empty(2)
    iterations = 0
    residual = 0.0
    for k, lam in enumerate(np.eye(2)):
        solution, grads = system.solve_lambda(lam)
        sigma2d[:, k] = solution.flux_avg
        row3[k] = float((system.beta @ grads) @ v)
        iterations += solution.iterations
        residual = max(residual, solution.residual)
    return sigma2d, row3, iterations, residual


def homogenize(
    field: PhaseField,
    phases: PhasePair,
    h: Any,
    settings: Optional[SolverSettings] = None,
) -> HomogenizedPair:
    """
    Direct route: columns 1 and 2 from the lambda = e1, e2 problems,
    column 3 from the e3 source problem
    """
    system = CellSystem.from_phases(field, phases, h, settings)
    sigma2d, row3, iterations, residual = _lambda_columns(system, h)
    e3 = system.solve_e3(h)
    matrix = np.empty((3, 3))
    matrix[:2, :2] = sigma2d
    matrix[2, :2] = row3
    matrix[:, 2] = e3.flux_avg
    _check_coercivity(sigma2d, min(phases.alpha1, phases.alpha2), field.label)
    return HomogenizedPair(
        sigma2d,
        EffectiveTensor(matrix),
        'direct',
        iterations + e3.iterations,
        max(residual, e3.residual),
    )


def homogenize_via_pi(
    field: PhaseField,
    phases: PhasePair,
    h: Any,
    settings: Optional[SolverSettings] = None,
) -> HomogenizedPair:
    """
    Pi route: conjugate both phases with the interface-matching pair, so
    the off-diagonal blocks p', q' are constant, homogenize the transformed
    tensor [[sigma_t*, p'], [q'^T, <a'>]] and conjugate back
    """
    sig1, sig2n = phases.blocks(h)
    pair = interface_match(sig1, sig2n, phases.beta1, phases.beta2, h)
    system = CellSystem.from_phases(field, phases, h, settings)
    sigma2d, _, iterations, residual = _lambda_columns(system, h)
    p1, q1, a1 = transformed_blocks(sig1.matrix, phases.alpha1, phases.beta1, h, pair)
    _, _, a2 = transformed_blocks(sig2n.matrix, phases.alpha2, phases.beta2, h, pair)
    fraction = field.raster_fraction
    a_mean = (1 - fraction) * a1 + fraction * a2
    transformed = EffectiveTensor.from_blocks(sigma2d, p1, q1, a_mean)
    _check_coercivity(sigma2d, min(phases.alpha1, phases.alpha2), field.label)
    return HomogenizedPair(
        sigma2d,
        EffectiveTensor(pi_deconjugate(transformed.matrix, pair)),
        'pi',
        iterations,
        residual,
    )


def estimate_pw_constant(
    field: PhaseField,
    alpha1: float,
    alpha2n: float,
    settings: Optional[SolverSettings] = None,
    seed: int = 0,
) -> PwEstimate:
    """
    Largest eigenvalue c of P M_a P V = c K_a V on mean-zero vectors, with
    M_a and K_a the a-weighted mass and stiffness matrices, by power iteration
    on K_a^-1 P M_a P
    """
    if not (alpha1 > 0 and alpha2n > 0):
        raise ValidationError(f'Weights must be positive, got {alpha1}, {alpha2n}')
    settings = settings or SolverSettings()
    N = field.resolution
    element = fem.q1_element((1.0 / N, 1.0 / N))
    conn = fem.element_connectivity((N, N), periodic=True)
    weights = field.element_values(alpha1, alpha2n)
    n = N * N
    stiffness = fem.assemble_matrix(
        conn, weights[:, None, None] * element.laplacian()[None], n
    )
    mass = fem.assemble_matrix(conn, weights[:, None, None] * element.mass[None], n)
    inverse = PinnedInverse(stiffness)

    x = project_mean_zero(np.random.default_rng(seed).standard_normal(n))
    x /= np.linalg.norm(x)
    c_prev = 0.0
    for iteration in range(1, settings.eig_max_iter + 1):
        y = inverse(mass @ x)
        my = project_mean_zero(mass @ y)
        c_value = float((y @ my) / (y @ (stiffness @ y)))
        x = y / np.linalg.norm(y)
        if abs(c_value - c_prev) <= settings.eig_tol * c_value:
            eigen_residual = float(
                np.linalg.norm(my - c_value * (stiffness @ y)) / np.linalg.norm(my)
            )
            logger.info(
                f'{field.label} N={N}: PW constant {c_value:.6e} after '
                f'{iteration} power iterations'
            )
            return PwEstimate(c_value, eigen_residual, iteration, N)
        c_prev = c_value
    raise SolverError(
        f'{field.label} N={N}: power iteration did not converge in '
        f'{settings.eig_max_iter} iterations',
        iterations=settings.eig_max_iter,
    )


def convex_pw_bound(diameter: float) -> float:
    """Poincare-Wirtinger constant bound (diameter / pi)^2 on a convex set"""
    if not diameter > 0:
        raise ValidationError(f'Diameter must be positive, got {diameter}')
    return (diameter / np.pi) ** 2


class TabulatedSigma0:
    """
    sigma0*(a1, a2) computed by the cell solver: the h = 0 transversal
    homogenization of a field with phase conductivities a1 and a2 / scale
    """

    def __init__(
        self,
        field: PhaseField,
        scale: float = 1.0,
        settings: Optional[SolverSettings] = None,
    ):
        self.field = field
        self.scale = scale
        self.settings = settings
        self._cache: Dict[Tuple[float, float], np.ndarray] = {}

    def __call__(self, a1: float, a2: float) -> np.ndarray:
        key = (float(a1), float(a2))
        if key not in self._cache:
            self._cache[key] = homogenize_transversal(
                self.field,
                TransversalBlock(key[0]),
                TransversalBlock(key[1] / self.scale),
                self.settings,
            )
        return self._cache[key].copy()


def transversal_sigma0(
    field: PhaseField, scale: float = 1.0, settings: Optional[SolverSettings] = None
) -> TabulatedSigma0:
    return TabulatedSigma0(field, scale, settings)

