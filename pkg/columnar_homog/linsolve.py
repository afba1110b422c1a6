"""
Preconditioned Krylov solves for the sparse nonsymmetric systems of the cell
and macroscopic problems.

Periodic cell operators annihilate constants from both sides, so the
right-hand side, the iterates and the preconditioner output are projected
onto mean-zero vectors.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, spilu, splu

from columnar_homog.exceptions import SolverError, ValidationError

logger = logging.getLogger('columnar_homog.linsolve')

DEFAULT_RTOL = 1e-10
DEFAULT_RESTART = 50
MAX_ITER_FACTOR = 20
ACCEPT_FACTOR = 100.0
EIG_TOL = 1e-8
EIG_MAX_ITER = 500


@dataclass(frozen=True)
class SolverSettings:
    """
    Tolerances of the linear and eigenvalue iterations
    :param rtol: relative residual tolerance passed to GMRES
    :param restart: GMRES restart length
    :param max_iter_factor: iteration budget per solve is this times the
        grid resolution
    :param accept_factor: a solve is accepted when the true relative
        residual is below rtol * accept_factor
    :param retry_symmetric: retry with the symmetric-part preconditioner
        when the diagonal one exhausts the budget
    :param eig_tol: relative change of the eigenvalue estimate at convergence
    :param eig_max_iter: maximum number of power iterations
    """

    rtol: float = DEFAULT_RTOL
    restart: int = DEFAULT_RESTART
    max_iter_factor: int = MAX_ITER_FACTOR
    accept_factor: float = ACCEPT_FACTOR
    retry_symmetric: bool = True
    eig_tol: float = EIG_TOL
    eig_max_iter: int = EIG_MAX_ITER

    def __post_init__(self):
        for name in ('rtol', 'accept_factor', 'eig_tol'):
            if not getattr(self, name) > 0:
                raise ValidationError(f'{name} must be positive')
        for name in ('restart', 'max_iter_factor', 'eig_max_iter'):
            if getattr(self, name) < 1:
                raise ValidationError(f'{name} must be at least 1')

    @property
    def accept_residual(self) -> float:
        return self.rtol * self.accept_factor


@dataclass
class KrylovResult:
    x: np.ndarray
    residual: float
    iterations: int
    preconditioner: str


class _IterationCounter:
    def __init__(self):
        self.count = 0

    def __call__(self, _):
        self.count += 1


def project_mean_zero(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    return x - x.mean()


def _projected(apply: Callable, n: int) -> LinearOperator:
    return LinearOperator(
        (n, n), matvec=lambda v: project_mean_zero(apply(np.ravel(v))), dtype=float
    )


def jacobi_preconditioner(matrix: sp.spmatrix, periodic: bool = True) -> LinearOperator:
    """Inverse diagonal, projected for periodic operators"""
    diag = matrix.diagonal()
    inv_diag = np.where(diag != 0, 1.0 / np.where(diag != 0, diag, 1.0), 1.0)
    n = matrix.shape[0]
    if periodic:
        return _projected(lambda v: inv_diag * project_mean_zero(v), n)
    return LinearOperator((n, n), matvec=lambda v: inv_diag * np.ravel(v), dtype=float)


def pin_first_node(matrix: sp.spmatrix) -> sp.csc_matrix:
    """
    Replace the first row and column by those of the identity, which makes
    a periodic stiffness matrix invertible
    """
    n = matrix.shape[0]
    keep = np.ones(n)
    keep[0] = 0.0
    mask = sp.diags(keep)
    return (mask @ sp.csr_matrix(matrix) @ mask + sp.diags(1.0 - keep)).tocsc()


class PinnedInverse:
    """
    Inverse of a periodic operator on mean-zero vectors, from a sparse LU
    factorization with the first node pinned
    """

    def __init__(self, matrix: sp.spmatrix):
        self.n = matrix.shape[0]
        try:
            self.lu = splu(pin_first_node(matrix))
        except RuntimeError as e:
            raise SolverError(f'Sparse LU factorization failed: {e}')

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        r = project_mean_zero(rhs)
        r[0] = 0.0
        return project_mean_zero(self.lu.solve(r))

    def operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self, dtype=float)


def _gmres(
    operator: LinearOperator,
    rhs: np.ndarray,
    preconditioner: LinearOperator,
    settings: SolverSettings,
    budget: int,
) -> Tuple[np.ndarray, int, int]:
    counter = _IterationCounter()
    x, info = gmres(
        operator,
        rhs,
        rtol=settings.rtol,
        atol=0.0,
        restart=settings.restart,
        maxiter=max(1, math.ceil(budget / settings.restart)),
        M=preconditioner,
        callback=counter,
        callback_type='pr_norm',
    )
    return x, info, counter.count


def solve_periodic(
    matrix: sp.spmatrix,
    rhs: np.ndarray,
    settings: SolverSettings,
    budget: int,
    fallback: Optional[Callable[[], LinearOperator]] = None,
    label: str = '',
) -> KrylovResult:
    """
    Mean-zero solution of a periodic system with constants in its kernel
    :param matrix: sparse operator with zero row and column sums
    :param rhs: right-hand side, projected before solving
    :param settings: tolerances
    :param budget: maximum number of GMRES iterations per attempt
    :param fallback: factory of the preconditioner for the second attempt
    :param label: used in log messages
    :return: KrylovResult with the true relative residual
    """
    n = matrix.shape[0]
    b = project_mean_zero(rhs)
    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        return KrylovResult(np.zeros(n), 0.0, 0, 'none')

    operator = _projected(matrix.dot, n)
    attempts: List[Tuple[str, Callable[[], LinearOperator]]] = [
        ('jacobi', lambda: jacobi_preconditioner(matrix))
    ]
    if fallback is not None and settings.retry_symmetric:
        attempts.append(('symmetric', fallback))

    total = 0
    residual = np.inf
    for name, make in attempts:
        x, info, iterations = _gmres(operator, b, make(), settings, budget)
        total += iterations
        x = project_mean_zero(x)
        residual = float(np.linalg.norm(project_mean_zero(b - matrix.dot(x))) / b_norm)
        if info == 0 and residual <= settings.accept_residual:
            return KrylovResult(x, residual, total, name)
        logger.warning(
            f'{label}: GMRES with {name} preconditioner stopped after {iterations} '
            f'iterations with relative residual {residual:.3e} (info={info})'
        )
    raise SolverError(
        f'{label}: linear solve did not converge, relative residual {residual:.3e}',
        residual=residual,
        iterations=total,
    )


def ilu_preconditioner(
    matrix: sp.spmatrix, drop_tol: float = 1e-4, fill_factor: float = 10
) -> LinearOperator:
    ilu = spilu(sp.csc_matrix(matrix), drop_tol=drop_tol, fill_factor=fill_factor)
    return LinearOperator(matrix.shape, ilu.solve, dtype=float)


def solve_nonsymmetric(
    matrix: sp.spmatrix,
    rhs: np.ndarray,
    settings: SolverSettings,
    budget: int,
    label: str = '',
) -> KrylovResult:
    """
    GMRES with an incomplete LU preconditioner for an invertible system,
    falling back to diagonal scaling if the factorization breaks down
    """
    b = np.asarray(rhs, dtype=float).ravel()
    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        return KrylovResult(np.zeros_like(b), 0.0, 0, 'none')
    try:
        preconditioner, name = ilu_preconditioner(matrix), 'ilu'
    except RuntimeError as e:
        logger.warning(f'{label}: incomplete LU failed ({e}), using diagonal scaling')
        preconditioner, name = jacobi_preconditioner(matrix, periodic=False), 'jacobi'
    operator = sp.csr_matrix(matrix)
    x, info, iterations = _gmres(operator, b, preconditioner, settings, budget)
    residual = float(np.linalg.norm(b - operator @ x) / b_norm)
    if info != 0 or residual > settings.accept_residual:
        raise SolverError(
            f'{label}: linear solve did not converge after {iterations} iterations, '
            f'relative residual {residual:.3e}',
            residual=residual,
            iterations=iterations,
        )
    return KrylovResult(x, residual, iterations, name)
