#!/usr/bin/env python3

""" This file tests the periodic cell problems and the homogenized tensors """

import math
import unittest

import numpy as np

from columnar_homog.cell_solver import (
    convex_pw_bound,
    estimate_pw_constant,
    homogenize,
    homogenize_transversal,
    homogenize_via_pi,
    solve_cell,
    solve_cell_e3,
    transversal_sigma0,
)
from columnar_homog.exceptions import ValidationError
from columnar_homog.geometry import CellGeometry, circular_schedule, rasterize
from columnar_homog.sweep import resolution_for
from columnar_homog.tensor_core import (
    J,
    PerturbedConductivity,
    PhasePair,
    TransversalBlock,
    realize_sigma,
)
from columnar_homog.utils import relative_max_error


class TestTransversal(unittest.TestCase):
    """Test cases for the 2x2 transversal homogenization"""

    def setUp(self):
        """A laminate and a disk cell"""
        self.laminate = rasterize(CellGeometry.laminate(0.5), 16)
        self.disk = rasterize(CellGeometry.disk(0.25), 16)

    def test_laminate_bounds(self):
        """Layers normal to y1: harmonic mean across, arithmetic mean along"""
        sigma = homogenize_transversal(
            self.laminate, TransversalBlock(1.0), TransversalBlock(10.0)
        )
        np.testing.assert_allclose(sigma, np.diag([20 / 11, 5.5]), atol=1e-8)

    def test_homogeneous_cell(self):
        """Equal phases give a zero corrector and the phase block itself"""
        block = TransversalBlock(2.0, 0.7)
        solution = solve_cell(self.disk, block, block, (1.0, 0.0))
        np.testing.assert_array_equal(solution.W, 0.0)
        np.testing.assert_allclose(solution.flux_avg, block.matrix[:, 0], atol=1e-14)

    def test_corrector_mean_zero(self):
        """Correctors have zero cell average"""
        solution = solve_cell(
            self.disk, TransversalBlock(1.0), TransversalBlock(5.0), (0.3, -1.0)
        )
        self.assertLessEqual(abs(solution.mean), 1e-12)
        self.assertLessEqual(solution.residual, 1e-8)

    def test_constant_shift(self):
        """Adding c J to both phases adds c J to the homogenized block"""
        sig1, sig2 = TransversalBlock(1.0), TransversalBlock(4.0)
        base = homogenize_transversal(self.disk, sig1, sig2)
        shifted = homogenize_transversal(self.disk, sig1.shifted(0.8), sig2.shifted(0.8))
        np.testing.assert_allclose(shifted, base + 0.8 * J, atol=1e-8)

    def test_coercivity(self):
        """The symmetric part stays above the smaller phase conductivity"""
        sigma = homogenize_transversal(
            self.disk, TransversalBlock(1.0, 0.5), TransversalBlock(6.0, -2.0)
        )
        smallest = np.min(np.linalg.eigvalsh(0.5 * (sigma + sigma.T)))
        self.assertGreaterEqual(smallest, 1.0 - 1e-8)

    def test_tabulated_sigma0(self):
        """The tabulated sigma0* of a single-phase cell is a1 I"""
        sigma0 = transversal_sigma0(self.disk)
        np.testing.assert_allclose(sigma0(1.5, 1.5), 1.5 * np.eye(2), atol=1e-12)
        self.assertIsNot(sigma0(1.0, 3.0), sigma0(1.0, 3.0))


class TestHomogenize(unittest.TestCase):
    """Test cases for the 3x3 homogenized tensor"""

    def setUp(self):
        """A disk cell and Hall phases in an oblique field"""
        self.field = rasterize(CellGeometry.disk(0.25), 32)
        self.phases = PhasePair(1.0, 0.5, 4.0, -1.0)
        self.h = (0.3, -0.6, 0.9)

    def test_homogeneous_identity(self):
        """A single-phase cell reproduces sigma1(h)"""
        phases = PhasePair(1.3, 0.4, 1.3, 0.4)
        result = homogenize(rasterize(CellGeometry.disk(0.25), 16), phases, self.h)
        expected = realize_sigma(PerturbedConductivity(1.3, 0.4, self.h))
        np.testing.assert_allclose(result.sigma3d.matrix, expected, atol=1e-12)

    def test_route_agreement(self):
        """The direct and Pi routes agree"""
        direct = homogenize(self.field, self.phases, self.h)
        via_pi = homogenize_via_pi(self.field, self.phases, self.h)
        scale = np.max(np.abs(direct.sigma3d.matrix))
        np.testing.assert_allclose(
            via_pi.sigma3d.matrix, direct.sigma3d.matrix, atol=1e-7 * scale
        )
        np.testing.assert_allclose(via_pi.sigma2d, direct.sigma2d, atol=1e-12)

    def test_route_agreement_draws(self):
        """Twenty random cells up to contrast 1e4: both routes agree to 1e-7"""
        rng = np.random.default_rng(11)
        for draw in range(20):
            if rng.uniform() < 0.5:
                field = rasterize(CellGeometry.disk(rng.uniform(0.1, 0.35)), 32)
            else:
                field = rasterize(CellGeometry.frame(rng.uniform(0.08, 0.2)), 32)
            contrast = 1e4 if draw == 0 else 10 ** rng.uniform(1.0, 4.0)
            phases = PhasePair(
                1.0,
                rng.uniform(-0.5, 0.5),
                contrast,
                rng.uniform(-0.5, 0.5) * contrast,
            )
            h = rng.uniform(-1.0, 1.0, 3)
            direct = homogenize(field, phases, h).sigma3d.matrix
            via_pi = homogenize_via_pi(field, phases, h).sigma3d.matrix
            self.assertLessEqual(
                relative_max_error(via_pi, direct), 1e-7, f'{field.label} {phases}'
            )

    def test_e3_column_dense(self):
        """The e3 corrector and flux agree with a dense bordered solve on 8 x 8"""
        N = 8
        field = rasterize(CellGeometry.disk(0.25), N)
        phases = PhasePair(1.0, 0.0, 10.0, 5.0)
        h = (1.0, 0.0, 0.0)
        v = np.array([0.0, 1.0])
        alpha = np.where(field.indicator.ravel(), 10.0, 1.0)
        beta = np.where(field.indicator.ravel(), 5.0, 0.0)
        # local order (0, 0), (1, 0), (0, 1), (1, 1)
        local = np.array([
            [4.0, -1.0, -1.0, -2.0],
            [-1.0, 4.0, -2.0, -1.0],
            [-1.0, -2.0, 4.0, -1.0],
            [-2.0, -1.0, -1.0, 4.0],
        ]) / 6.0
        step = 1.0 / N
        grad = 0.5 * step * np.array([[-1.0, 1.0, -1.0, 1.0], [-1.0, -1.0, 1.0, 1.0]])
        n = N * N
        bordered = np.zeros((n + 1, n + 1))
        rhs = np.zeros(n + 1)
        nodes = []
        for j in range(N):
            for i in range(N):
                e = i + N * j
                ids = [
                    (i + di) % N + N * ((j + dj) % N)
                    for di, dj in ((0, 0), (1, 0), (0, 1), (1, 1))
                ]
                nodes.append(ids)
                bordered[np.ix_(ids, ids)] += alpha[e] * local
                rhs[ids] -= (-beta[e] * v) @ grad
        bordered[:n, n] = 1.0
        bordered[n, :n] = 1.0
        w = np.linalg.solve(bordered, rhs)[:n]
        grads = np.array([grad @ w[ids] for ids in nodes])
        expected = np.empty(3)
        expected[:2] = alpha @ grads - beta.mean() * v
        expected[2] = alpha.mean() + (beta @ grads) @ v

        solution = solve_cell_e3(field, phases, h)
        np.testing.assert_allclose(solution.W, w, atol=1e-6 * np.max(np.abs(w)))
        np.testing.assert_allclose(solution.flux_avg, expected, rtol=1e-7, atol=1e-7)
        self.assertGreater(np.max(np.abs(w)), 1e-6)

    def test_onsager(self):
        """sigma*(-h) = sigma*(h)^T for the discrete tensor"""
        forward = homogenize(self.field, self.phases, self.h).sigma3d.matrix
        backward = homogenize(self.field, self.phases, tuple(-x for x in self.h)).sigma3d.matrix
        np.testing.assert_allclose(backward, forward.T, atol=1e-8 * np.max(np.abs(forward)))

    def test_zero_field_symmetric(self):
        """Without a field the homogenized tensor is symmetric"""
        result = homogenize(self.field, self.phases, (0.0, 0.0, 0.0))
        self.assertTrue(result.sigma3d.is_symmetric(1e-8))

    def test_e3_column_without_hall(self):
        """Without Hall coefficients the third column is (0, 0, <alpha>)"""
        phases = PhasePair(1.0, 0.0, 4.0, 0.0)
        solution = solve_cell_e3(self.field, phases, self.h)
        fraction = self.field.raster_fraction
        np.testing.assert_allclose(
            solution.flux_avg, [0.0, 0.0, 1.0 + 3.0 * fraction], atol=1e-13
        )


class TestPwConstant(unittest.TestCase):
    """Test cases for the weighted Poincare-Wirtinger constant"""

    def test_homogeneous_weight(self):
        """With a = 1 the constant is the inverse first eigenvalue 1 / (4 pi^2)"""
        field = rasterize(CellGeometry.disk(0.25), 32)
        estimate = estimate_pw_constant(field, 1.0, 1.0)
        self.assertAlmostEqual(estimate.c_value * 4 * math.pi ** 2, 1.0, delta=1e-2)
        self.assertAlmostEqual(estimate.rescaled(0.5), 0.25 * estimate.c_value)

    def test_positive_with_contrast(self):
        """High-contrast weights keep the constant positive"""
        field = rasterize(CellGeometry.frame(0.125), 16)
        estimate = estimate_pw_constant(field, 1.0, 50.0)
        self.assertGreater(estimate.c_value, 0.0)

    def test_log_growth_along_circular_schedule(self):
        """At alpha2n = alpha2 / (pi r^2) the constant grows like |ln r|"""
        schedule = circular_schedule([0.1, 0.05, 0.025], 2.0, 0.0)
        values = []
        for stage in schedule:
            r = stage.shape_param
            field = rasterize(CellGeometry.disk(r), resolution_for('disk', r))
            values.append(estimate_pw_constant(field, 1.0, stage.alpha2n).c_value)
        self.assertTrue(all(b > a for a, b in zip(values, values[1:])), values)
        ratios = [c / abs(math.log(s.shape_param)) for c, s in zip(values, schedule)]
        self.assertLess((max(ratios) - min(ratios)) / min(ratios), 0.5, ratios)

    def test_bad_weights(self):
        """Non-positive weights are rejected"""
        field = rasterize(CellGeometry.frame(0.125), 16)
        with self.assertRaises(ValidationError):
            estimate_pw_constant(field, 0.0, 1.0)

    def test_convex_bound(self):
        """(d / pi)^2"""
        self.assertAlmostEqual(convex_pw_bound(1.0), 1 / math.pi ** 2)
        with self.assertRaises(ValidationError):
            convex_pw_bound(0.0)


if __name__ == '__main__':
    unittest.main()
