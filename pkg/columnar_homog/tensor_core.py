"""
Small-matrix algebra for Hall-perturbed conductivities:
the Hall matrix E(h), the rotation J, the block decomposition of a 3x3
conductivity and the Pi-transformation that makes the off-diagonal blocks of
a two-phase medium phase-independent.

Block convention for a columnar 3x3 tensor:
    sigma = [[sigma_t, p], [q^T, a]]
with sigma_t the transversal 2x2 block, p the third column, q the third row.
"""

import logging
from dataclasses import dataclass
from typing import Any, Tuple

import numpy as np

from columnar_homog.exceptions import (
    DegenerateContrastError,
    SingularMatrixError,
    ValidationError,
)

logger = logging.getLogger('columnar_homog.tensor_core')

SINGULAR_RTOL = 1e-14

J = np.array([[0.0, -1.0], [1.0, 0.0]])
J.setflags(write=False)


def as_vector(value: Any, size: int, name: str = 'vector') -> np.ndarray:
    """
    Convert to a float vector of the given size
    :param value: sequence of numbers
    :param size: expected number of components
    :param name: used in the error message
    :return: new 1D float array
    """
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise ValidationError(f'{name} must have {size} components, got {arr.size}')
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f'{name} must be finite, got {arr.tolist()}')
    return arr


def is_singular(matrix: np.ndarray) -> bool:
    """
    True when |det| < SINGULAR_RTOL * max|entry|^n for an n x n matrix.
    The zero matrix is singular.
    """
    matrix = np.asarray(matrix, dtype=float)
    scale = np.max(np.abs(matrix))
    if scale == 0:
        return True
    return abs(np.linalg.det(matrix)) < SINGULAR_RTOL * scale ** matrix.shape[0]


def safe_inv(matrix: np.ndarray, what: str = 'matrix', error_cls=SingularMatrixError):
    """
    Inverse of a small square matrix
    :param what: name used in the error message
    :param error_cls: raised when the matrix is singular in the sense of is_singular
    """
    matrix = np.asarray(matrix, dtype=float)
    if is_singular(matrix):
        raise error_cls(f'{what} is singular: {matrix.tolist()}')
    return np.linalg.inv(matrix)


def hall_matrix(h: Any) -> np.ndarray:
    """
    Antisymmetric matrix E(h) with E(h) x = h x x
    """
    h1, h2, h3 = as_vector(h, 3, 'h')
    return np.array(
        [
            [0.0, -h3, h2],
            [h3, 0.0, -h1],
            [-h2, h1, 0.0],
        ]
    )


def j_h(h: Any) -> np.ndarray:
    """J applied to the transversal part (h1, h2) of the field"""
    h = as_vector(h, 3, 'h')
    return J @ h[:2]


@dataclass(frozen=True)
class PerturbedConductivity:
    """
    Isotropic conductivity alpha perturbed by a Hall term: alpha I + beta E(h)
    """

    alpha: float
    beta: float
    h: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError(f'alpha must be positive, got {self.alpha}')
        object.__setattr__(self, 'h', tuple(as_vector(self.h, 3, 'h').tolist()))

    def matrix(self) -> np.ndarray:
        return realize_sigma(self)

    def block(self) -> 'TransversalBlock':
        return TransversalBlock.of(self.alpha, self.beta, self.h)


@dataclass(frozen=True)
class TransversalBlock:
    """
    2x2 block [[alpha, -hall], [hall, alpha]], i.e. alpha I + hall J.
    For a perturbed conductivity hall = beta * h3.
    """

    alpha: float
    hall: float = 0.0

    @classmethod
    def of(cls, alpha: float, beta: float, h: Any) -> 'TransversalBlock':
        return cls(float(alpha), float(beta) * as_vector(h, 3, 'h')[2])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.alpha, -self.hall], [self.hall, self.alpha]])

    def transpose(self) -> 'TransversalBlock':
        return TransversalBlock(self.alpha, -self.hall)

    def shifted(self, c: float) -> 'TransversalBlock':
        """Add c J"""
        return TransversalBlock(self.alpha, self.hall + c)


@dataclass(frozen=True)
class PhasePair:
    """
    Matrix phase (alpha1, beta1) and inclusion phase (alpha2, beta2) of a
    two-phase medium
    """

    alpha1: float
    beta1: float
    alpha2: float
    beta2: float

    def __post_init__(self):
        for name in ('alpha1', 'alpha2'):
            value = getattr(self, name)
            if not value > 0:
                raise ValidationError(f'{name} must be positive, got {value}')
        for name in ('beta1', 'beta2'):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(f'{name} must be finite')

    def conductivities(
        self, h: Any
    ) -> Tuple[PerturbedConductivity, PerturbedConductivity]:
        return (
            PerturbedConductivity(self.alpha1, self.beta1, h),
            PerturbedConductivity(self.alpha2, self.beta2, h),
        )

    def blocks(self, h: Any) -> Tuple[TransversalBlock, TransversalBlock]:
        return (
            TransversalBlock.of(self.alpha1, self.beta1, h),
            TransversalBlock.of(self.alpha2, self.beta2, h),
        )

    @property
    def is_homogeneous(self) -> bool:
        return self.alpha1 == self.alpha2 and self.beta1 == self.beta2


@dataclass(frozen=True, eq=False)
class EffectiveTensor:
    """
    3x3 effective conductivity with block accessors
    """

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.shape != (3, 3):
            raise ValidationError(f'Expected a 3x3 tensor, got shape {matrix.shape}')
        matrix.setflags(write=False)
        object.__setattr__(self, 'matrix', matrix)

    @classmethod
    def from_blocks(
        cls, transversal: Any, col3: Any, row3: Any, corner: float
    ) -> 'EffectiveTensor':
        matrix = np.empty((3, 3))
        matrix[:2, :2] = transversal
        matrix[:2, 2] = as_vector(col3, 2, 'p')
        matrix[2, :2] = as_vector(row3, 2, 'q')
        matrix[2, 2] = corner
        return cls(matrix)

    @property
    def transversal(self) -> np.ndarray:
        return self.matrix[:2, :2].copy()

    @property
    def col3(self) -> np.ndarray:
        return self.matrix[:2, 2].copy()

    @property
    def row3(self) -> np.ndarray:
        return self.matrix[2, :2].copy()

    @property
    def corner(self) -> float:
        return float(self.matrix[2, 2])

    def symmetric_part(self) -> np.ndarray:
        return 0.5 * (self.matrix + self.matrix.T)

    def transpose(self) -> 'EffectiveTensor':
        return EffectiveTensor(self.matrix.T)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.matrix))))
        return bool(np.max(np.abs(self.matrix - self.matrix.T)) <= tol * scale)


@dataclass(frozen=True, eq=False)
class PiPair:
    """
    Pi = [[I, 0], [q0^T, 1]] and PiHat = [[I, p0], [0, 1]]; both have unit
    determinant, so their inverses just negate q0 and p0
    """

    p0: np.ndarray
    q0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'p0', as_vector(self.p0, 2, 'p0'))
        object.__setattr__(self, 'q0', as_vector(self.q0, 2, 'q0'))

    @property
    def Pi(self) -> np.ndarray:  # pylint: disable=invalid-name
        matrix = np.eye(3)
        matrix[2, :2] = self.q0
        return matrix

    @property
    def PiHat(self) -> np.ndarray:  # pylint: disable=invalid-name
        matrix = np.eye(3)
        matrix[:2, 2] = self.p0
        return matrix

    def inverse(self) -> 'PiPair':
        return PiPair(-self.p0, -self.q0)

    @property
    def is_identity(self) -> bool:
        return not (np.any(self.p0) or np.any(self.q0))


def pi_pair(p0: Any, q0: Any) -> PiPair:
    return PiPair(p0, q0)


def realize_sigma(p: PerturbedConductivity) -> np.ndarray:
    """
    :return: alpha I3 + beta E(h)
    """
    if not p.alpha > 0:
        raise ValidationError(f'alpha must be positive, got {p.alpha}')
    return p.alpha * np.eye(3) + p.beta * hall_matrix(p.h)


def transversal_block(sigma: Any) -> np.ndarray:
    """Top-left 2x2 block"""
    return np.array(sigma, dtype=float)[:2, :2].copy()


def interface_match(
    sig1: TransversalBlock,
    sig2n: TransversalBlock,
    beta1: float,
    beta2n: float,
    h: Any,
) -> PiPair:
    """
    Choose p0, q0 so that the transformed off-diagonal blocks agree in both
    phases: (sig2n - sig1) p0 = (sig1 - sig2n)^T q0 = (beta2n - beta1) J h~
    """
    rhs = (beta2n - beta1) * j_h(h)
    if not np.any(rhs):
        return PiPair(np.zeros(2), np.zeros(2))
    diff = sig2n.matrix - sig1.matrix
    if is_singular(diff):
        raise DegenerateContrastError(
            f'Transversal phase blocks do not differ enough to match the Hall '
            f'contrast: sig2n - sig1 = {diff.tolist()}'
        )
    p0 = np.linalg.solve(diff, rhs)
    q0 = np.linalg.solve(-diff.T, rhs)
    return PiPair(p0, q0)


def pi_limits(alpha2: float, beta2: float, h: Any) -> PiPair:
    """
    Limits of the interface-matching vectors when the inclusion phase
    vanishes: p0 = beta2 sig2^-1 J h~, q0 = -beta2 sig2^-T J h~
    """
    if not alpha2 > 0:
        raise ValidationError(f'alpha2 must be positive, got {alpha2}')
    sig2 = TransversalBlock.of(alpha2, beta2, h).matrix
    v = j_h(h)
    p0 = beta2 * np.linalg.solve(sig2, v)
    q0 = -beta2 * np.linalg.solve(sig2.T, v)
    return PiPair(p0, q0)


def pi_conjugate(sigma: Any, pair: PiPair) -> np.ndarray:
    """Pi sigma PiHat"""
    return pair.Pi @ np.asarray(sigma, dtype=float) @ pair.PiHat


def pi_deconjugate(sigma_prime: Any, pair: PiPair) -> np.ndarray:
    """Pi^-1 sigma' PiHat^-1"""
    inverse = pair.inverse()
    return inverse.Pi @ np.asarray(sigma_prime, dtype=float) @ inverse.PiHat


def transformed_blocks(
    sigma_t: Any, alpha: float, beta: float, h: Any, pair: PiPair
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Off-diagonal blocks and corner of Pi sigma(h) PiHat for one phase
    with transversal block sigma_t
    :return: (p', q', a') with
        p' = sigma_t p0 - beta J h~
        q' = sigma_t^T q0 + beta J h~
        a' = alpha + sigma_t p0 . q0 + beta (p0 - q0) . J h~
    """
    sigma_t = np.asarray(sigma_t, dtype=float)
    v = j_h(h)
    p_prime = sigma_t @ pair.p0 - beta * v
    q_prime = sigma_t.T @ pair.q0 + beta * v
    a_prime = (
        alpha + float(sigma_t @ pair.p0 @ pair.q0) + beta * float((pair.p0 - pair.q0) @ v)
    )
    return p_prime, q_prime, a_prime
