"""
Closed-form limit tensors: the general assembly of sigma*(h) from the
transversal limit and the inclusion density theta, and the explicit
circular-fibre and thin-grid cases.
"""

import functools
import logging
from dataclasses import dataclass
from typing import Any, Callable, List, Sequence, Tuple

import numpy as np

from columnar_homog.exceptions import ValidationError
from columnar_homog.geometry import RhoField
from columnar_homog.tensor_core import (
    J,
    EffectiveTensor,
    TransversalBlock,
    as_vector,
    hall_matrix,
    j_h,
    safe_inv,
)

logger = logging.getLogger('columnar_homog.homog_formulas')

Sigma0 = Callable[[float, float], np.ndarray]


@dataclass(frozen=True)
class LimitParams:
    """
    Matrix phase (alpha1, beta1), rescaled inclusion limit (alpha2, beta2)
    and magnetic field h
    """

    alpha1: float
    beta1: float
    alpha2: float
    beta2: float
    h: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ('alpha1', 'alpha2'):
            value = getattr(self, name)
            if not value > 0:
                raise ValidationError(f'{name} must be positive, got {value}')
        object.__setattr__(self, 'h', tuple(as_vector(self.h, 3, 'h').tolist()))

    @property
    def sigma_t1(self) -> np.ndarray:
        return TransversalBlock.of(self.alpha1, self.beta1, self.h).matrix

    @property
    def sigma_t2(self) -> np.ndarray:
        return TransversalBlock.of(self.alpha2, self.beta2, self.h).matrix

    @property
    def jh(self) -> np.ndarray:
        return j_h(self.h)

    def with_h(self, h: Any) -> 'LimitParams':
        return LimitParams(self.alpha1, self.beta1, self.alpha2, self.beta2, h)


def assemble_effective(
    sigma_t_star: Any, theta: float, p: LimitParams
) -> EffectiveTensor:
    """
    sigma*(h) = [[sigma_t*, p*], [q*^T, alpha*]] with
        p* = -[beta1 I + beta2 (sigma_t* - sigma_t1) sigma_t2^-1] J h~
        q* = [beta1 I + beta2 sigma_t2^-1 (sigma_t* - sigma_t1)]^T J h~
        alpha* = alpha1 + theta alpha2
            + beta2^2 sigma_t2^-1 (sigma_t1 + theta sigma_t2 - sigma_t*) sigma_t2^-1 J h~ . J h~
    """
    if not theta >= 0:
        raise ValidationError(f'theta must be non-negative, got {theta}')
    sigma_t_star = np.asarray(sigma_t_star, dtype=float)
    s1 = p.sigma_t1
    s2 = p.sigma_t2
    s2_inv = safe_inv(s2, 'sigma_t2')
    v = p.jh
    delta = sigma_t_star - s1
    eye = np.eye(2)
    p_star = -(p.beta1 * eye + p.beta2 * delta @ s2_inv) @ v
    q_star = (p.beta1 * eye + p.beta2 * s2_inv @ delta).T @ v
    middle = s2_inv @ (s1 + theta * s2 - sigma_t_star) @ s2_inv
    alpha_star = p.alpha1 + theta * p.alpha2 + p.beta2 ** 2 * float((middle @ v) @ v)
    return EffectiveTensor.from_blocks(sigma_t_star, p_star, q_star, alpha_star)


def transversal_limit(sigma0_star: Sigma0, p: LimitParams) -> np.ndarray:
    """sigma_t* = sigma0*(alpha1, alpha2 + beta2^2 h3^2 / alpha2) + h3 beta1 J"""
    h3 = p.h[2]
    shifted = p.alpha2 + p.beta2 ** 2 * h3 ** 2 / p.alpha2
    return np.asarray(sigma0_star(p.alpha1, shifted), dtype=float) + h3 * p.beta1 * J


def _circular_sigma0(a1: float, a2: float) -> np.ndarray:
    return a1 * np.eye(2)


def _grid_sigma0(rho: float, a1: float, a2: float) -> np.ndarray:
    return (a1 + rho * a2 / 2) * np.eye(2)


def circular_sigma0() -> Sigma0:
    """Fibres do not change the transversal limit: (a1, a2) -> a1 I"""
    return _circular_sigma0


def grid_sigma0(rho: float = 1.0) -> Sigma0:
    """Thin grids: (a1, a2) -> (a1 + rho a2 / 2) I"""
    return functools.partial(_grid_sigma0, float(rho))


def oracle_circular(p: LimitParams, rho: float) -> EffectiveTensor:
    """
    alpha1 I + rho (alpha2^3 + alpha2 beta2^2 |h|^2) / (alpha2^2 + beta2^2 h3^2)
    e3 x e3 + beta1 E(h)
    """
    if not rho > 0:
        raise ValidationError(f'rho must be positive, got {rho}')
    h = np.asarray(p.h)
    a2, b2 = p.alpha2, p.beta2
    coefficient = (a2 ** 3 + a2 * b2 ** 2 * float(h @ h)) / (
        a2 ** 2 + b2 ** 2 * h[2] ** 2
    )
    matrix = p.alpha1 * np.eye(3) + p.beta1 * hall_matrix(h)
    matrix[2, 2] += rho * coefficient
    return EffectiveTensor(matrix)


def oracle_grid(p: LimitParams, rho: float) -> EffectiveTensor:
    """
    sigma_t* = (alpha1 + rho (alpha2^2 + beta2^2 h3^2) / (2 alpha2)) I + beta1 h3 J
    p* = -(beta1 + rho beta2 / 2) J h~ - rho beta2^2 h3 / (2 alpha2) h~
    q* = (beta1 + rho beta2 / 2) J h~ - rho beta2^2 h3 / (2 alpha2) h~
    alpha* = alpha1 + rho alpha2 + rho beta2^2 (h1^2 + h2^2) / (2 alpha2)
    """
    if not rho > 0:
        raise ValidationError(f'rho must be positive, got {rho}')
    h = np.asarray(p.h)
    h_t = h[:2]
    v = p.jh
    a2, b2 = p.alpha2, p.beta2
    sigma_t = (p.alpha1 + rho * (a2 ** 2 + b2 ** 2 * h[2] ** 2) / (2 * a2)) * np.eye(
        2
    ) + p.beta1 * h[2] * J
    hall = p.beta1 + rho * b2 / 2
    twist = rho * b2 ** 2 * h[2] / (2 * a2)
    p_star = -hall * v - twist * h_t
    q_star = hall * v - twist * h_t
    alpha_star = p.alpha1 + rho * a2 + rho * b2 ** 2 * float(h_t @ h_t) / (2 * a2)
    return EffectiveTensor.from_blocks(sigma_t, p_star, q_star, alpha_star)


ORACLES = {'circular': oracle_circular, 'grid': oracle_grid}


def _circular_sensitivity(p: LimitParams, rho: float) -> np.ndarray:
    h = np.asarray(p.h)
    a2, b2 = p.alpha2, p.beta2
    numerator = a2 ** 3 + a2 * b2 ** 2 * float(h @ h)
    denominator = a2 ** 2 + b2 ** 2 * h[2] ** 2
    result = np.empty((3, 3, 3))
    for k, e in enumerate(np.eye(3)):
        d_num = 2 * a2 * b2 ** 2 * h[k]
        d_den = 2 * b2 ** 2 * h[2] if k == 2 else 0.0
        result[k] = p.beta1 * hall_matrix(e)
        result[k, 2, 2] = rho * (d_num * denominator - numerator * d_den) / denominator ** 2
    return result


def _grid_sensitivity(p: LimitParams, rho: float) -> np.ndarray:
    h = np.asarray(p.h)
    a2, b2 = p.alpha2, p.beta2
    hall = p.beta1 + rho * b2 / 2
    twist = rho * b2 ** 2 * h[2] / (2 * a2)
    result = np.zeros((3, 3, 3))
    for k, e in enumerate(np.eye(2)):
        result[k, :2, 2] = -hall * J @ e - twist * e
        result[k, 2, :2] = hall * J @ e - twist * e
        result[k, 2, 2] = rho * b2 ** 2 * h[k] / a2
    result[2, :2, :2] = rho * b2 ** 2 * h[2] / a2 * np.eye(2) + p.beta1 * J
    result[2, :2, 2] = -rho * b2 ** 2 / (2 * a2) * h[:2]
    result[2, 2, :2] = -rho * b2 ** 2 / (2 * a2) * h[:2]
    return result


SENSITIVITIES = {'circular': _circular_sensitivity, 'grid': _grid_sensitivity}


def h_sensitivity(kind: str, p: LimitParams, rho: float) -> np.ndarray:
    """
    Analytic derivatives of a closed-form limit in the field
    :param kind: 'circular' or 'grid'
    :return: (3, 3, 3) array, entry [k] is d sigma*(h) / d h_k
    """
    if kind not in SENSITIVITIES:
        raise ValidationError(f'Unknown oracle {kind}, expected one of {list(ORACLES)}')
    if not rho > 0:
        raise ValidationError(f'rho must be positive, got {rho}')
    return SENSITIVITIES[kind](p, float(rho))


def finite_difference_sensitivity(
    kind: str, p: LimitParams, rho: float, step: float = 1e-5
) -> np.ndarray:
    """Central differences of the closed form in each field component"""
    oracle = ORACLES[kind]
    h = np.asarray(p.h)
    result = np.empty((3, 3, 3))
    for k, e in enumerate(np.eye(3)):
        forward = oracle(p.with_h(h + step * e), rho).matrix
        backward = oracle(p.with_h(h - step * e), rho).matrix
        result[k] = (forward - backward) / (2 * step)
    return result


def oracle_field(
    kind: str, p: LimitParams, rho_field: RhoField, points: Sequence[Any]
) -> List[EffectiveTensor]:
    """Pointwise limit tensors sigma*(h)(x') of a rho-modulated structure"""
    if kind not in ORACLES:
        raise ValidationError(f'Unknown oracle {kind}, expected one of {list(ORACLES)}')
    oracle = ORACLES[kind]
    return [oracle(p, float(rho_field(x1, x2))) for x1, x2 in points]


def transformed_limits(
    p: LimitParams, sigma_t_star: Any, theta: float
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Off-diagonal blocks and corner of Pi sigma* PiHat for the limiting Pi pair:
        p'* = [-beta1 I + beta2 sigma_t1 sigma_t2^-1] J h~
        q'* = [beta1 I - beta2 sigma_t1^T sigma_t2^-T] J h~
        alpha'* = sum_i theta_i [alpha_i - beta2^2 sigma_t2^-1 sigma_ti sigma_t2^-1 J h~ . J h~
                  + 2 beta2 beta_i sigma_t2^-1 J h~ . J h~],  theta_1 = 1, theta_2 = theta.
    The transversal block is sigma_t* itself.
    """
    s1 = p.sigma_t1
    s2 = p.sigma_t2
    s2_inv = safe_inv(s2, 'sigma_t2')
    v = p.jh
    eye = np.eye(2)
    p_prime = (-p.beta1 * eye + p.beta2 * s1 @ s2_inv) @ v
    q_prime = (p.beta1 * eye - p.beta2 * s1.T @ s2_inv.T) @ v
    base = float((s2_inv @ v) @ v)
    alpha_prime = 0.0
    for weight, alpha, beta, s in (
        (1.0, p.alpha1, p.beta1, s1),
        (theta, p.alpha2, p.beta2, s2),
    ):
        alpha_prime += weight * (
            alpha
            - p.beta2 ** 2 * float((s2_inv @ s @ s2_inv @ v) @ v)
            + 2 * p.beta2 * beta * base
        )
    return p_prime, q_prime, alpha_prime


def grid_local_bounds(
    rho_min: float, rho_max: float, p: LimitParams
) -> Tuple[float, float]:
    """
    Bounds (alpha1 + c1 alpha2 / 2, alpha1 + c2 alpha2 / 2) on the quadratic
    form of sigma0*(alpha1, alpha2) of a grid whose density stays in [c1, c2]
    """
    if not 0 < rho_min <= rho_max:
        raise ValidationError(f'Need 0 < rho_min <= rho_max, got {rho_min}, {rho_max}')
    return p.alpha1 + rho_min * p.alpha2 / 2, p.alpha1 + rho_max * p.alpha2 / 2


def oracle_for(kind: str, p: LimitParams, rho: float) -> EffectiveTensor:
    """Closed form for the built-in microstructure kinds"""
    if kind == 'disk':
        return oracle_circular(p, rho)
    if kind == 'frame':
        return oracle_grid(p, rho)
    raise ValidationError(f'No closed form for geometry kind {kind}')


def sigma0_for(kind: str, rho: float) -> Sigma0:
    if kind == 'disk':
        return circular_sigma0()
    if kind == 'frame':
        return grid_sigma0(rho)
    raise ValidationError(f'No closed-form sigma0* for geometry kind {kind}')
