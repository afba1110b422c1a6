"""
Multilinear (Q1) finite elements on uniform tensor-product grids in 2D and 3D.

Element integrals use the 2-point Gauss rule per axis, which is exact for
products of Q1 shape functions and their derivatives; coefficients are
constant per element.
"""

import itertools
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.sparse as sp

GAUSS_POINTS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def local_offsets(dim: int) -> np.ndarray:
    """Corner offsets of the 2^dim local nodes, first axis fastest"""
    return np.array(
        [[(k >> d) & 1 for d in range(dim)] for k in range(2 ** dim)], dtype=np.int64
    )


def _reference_q1(dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    :return: (weights (ng,), values (ng, nk), gradients (ng, nk, dim)) at the
        Gauss points of the reference cube [0, 1]^dim
    """
    offsets = local_offsets(dim)
    points = np.array(list(itertools.product(GAUSS_POINTS, repeat=dim)))
    weights = np.full(len(points), 0.5 ** dim)
    factors = np.where(offsets[None, :, :] == 1, points[:, None, :], 1 - points[:, None, :])
    slopes = np.where(offsets == 1, 1.0, -1.0)
    values = factors.prod(axis=2)
    gradients = np.empty(factors.shape)
    for d in range(dim):
        others = np.delete(factors, d, axis=2).prod(axis=2)
        gradients[:, :, d] = slopes[None, :, d] * others
    return weights, values, gradients


@dataclass(frozen=True, eq=False)
class Q1Element:
    """
    Reference matrices of one grid element:
    stiffness[a, b, i, j] = int d_a phi_i d_b phi_j,
    gradient[a, i] = int d_a phi_i, mass[i, j] = int phi_i phi_j
    """

    spacing: Tuple[float, ...]
    stiffness: np.ndarray
    gradient: np.ndarray
    mass: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.spacing)

    @property
    def volume(self) -> float:
        return float(np.prod(self.spacing))

    def laplacian(self) -> np.ndarray:
        return np.einsum('aaij->ij', self.stiffness)

    def matrices(self, coefficients: np.ndarray) -> np.ndarray:
        """
        Element matrices sum_ab sigma_ab stiffness[a, b] for per-element
        coefficients of shape (E, dim, dim)
        """
        return np.einsum('eab,abij->eij', coefficients, self.stiffness)


def q1_element(spacing: Sequence[float]) -> Q1Element:
    spacing = tuple(float(s) for s in spacing)
    weights, values, gradients = _reference_q1(len(spacing))
    volume = float(np.prod(spacing))
    physical = gradients / np.array(spacing)[None, None, :]
    return Q1Element(
        spacing=spacing,
        stiffness=np.einsum('g,gia,gjb->abij', weights, physical, physical) * volume,
        gradient=np.einsum('g,gia->ai', weights, physical) * volume,
        mass=np.einsum('g,gi,gj->ij', weights, values, values) * volume,
    )


def element_connectivity(counts: Sequence[int], periodic: bool) -> np.ndarray:
    """
    Global node ids of every element of a uniform grid
    :param counts: number of elements per axis, first axis fastest
    :param periodic: wrap node indices (torus) instead of adding a closing layer
    :return: (E, 2^dim) array; element and node numbering both run first axis
        fastest
    """
    counts = tuple(int(c) for c in counts)
    dim = len(counts)
    nodes = counts if periodic else tuple(c + 1 for c in counts)
    index = np.indices(counts[::-1]).reshape(dim, -1)[::-1]
    offsets = local_offsets(dim)
    conn = np.zeros((index.shape[1], len(offsets)), dtype=np.int64)
    stride = 1
    for d in range(dim):
        coord = index[d][:, None] + offsets[None, :, d]
        if periodic:
            coord %= nodes[d]
        conn += coord * stride
        stride *= nodes[d]
    return conn


def node_count(counts: Sequence[int], periodic: bool) -> int:
    if periodic:
        return int(np.prod(counts))
    return int(np.prod([c + 1 for c in counts]))


def assemble_matrix(conn: np.ndarray, element_matrices: np.ndarray, n: int) -> sp.csr_matrix:
    nk = conn.shape[1]
    rows = np.broadcast_to(conn[:, :, None], (len(conn), nk, nk)).ravel()
    cols = np.broadcast_to(conn[:, None, :], (len(conn), nk, nk)).ravel()
    return sp.coo_matrix(
        (np.ascontiguousarray(element_matrices).ravel(), (rows, cols)), shape=(n, n)
    ).tocsr()


def assemble_vector(conn: np.ndarray, element_vectors: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(conn.ravel(), weights=element_vectors.ravel(), minlength=n)


def element_gradient_integrals(
    element: Q1Element, conn: np.ndarray, nodal: np.ndarray
) -> np.ndarray:
    """Integral of the gradient of a Q1 field over each element, (E, dim)"""
    return np.einsum('ai,ei->ea', element.gradient, nodal[conn])
