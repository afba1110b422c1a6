#!/usr/bin/env python3

""" This file tests the closed-form limit tensors """

import unittest

import numpy as np

from columnar_homog.exceptions import ValidationError
from columnar_homog.geometry import RhoField
from columnar_homog.homog_formulas import (
    LimitParams,
    assemble_effective,
    circular_sigma0,
    finite_difference_sensitivity,
    grid_local_bounds,
    grid_sigma0,
    h_sensitivity,
    oracle_circular,
    oracle_field,
    oracle_for,
    oracle_grid,
    transformed_limits,
    transversal_limit,
)
from columnar_homog.tensor_core import (
    J,
    PerturbedConductivity,
    pi_conjugate,
    pi_limits,
    realize_sigma,
)


class TestCircular(unittest.TestCase):
    """Test cases for the fibre limit"""

    def setUp(self):
        """The worked example: alpha1 = 1, beta1 = 1/2, alpha2 = 2, beta2 = 1, h = e3"""
        self.p = LimitParams(1.0, 0.5, 2.0, 1.0, (0.0, 0.0, 1.0))

    def test_example(self):
        """(3, 3) entry is 1 + (8 + 2) / (4 + 1) = 3"""
        tensor = oracle_circular(self.p, 1.0)
        self.assertAlmostEqual(tensor.corner, 3.0, places=14)
        np.testing.assert_allclose(tensor.transversal, np.eye(2) + 0.5 * J, atol=1e-15)
        np.testing.assert_array_equal(tensor.col3, 0.0)

    def test_zero_field(self):
        """Without a field the limit is alpha1 I + rho alpha2 e3 x e3"""
        tensor = oracle_circular(self.p.with_h((0, 0, 0)), 0.5)
        np.testing.assert_allclose(tensor.matrix, np.diag([1.0, 1.0, 2.0]), atol=1e-15)

    def test_general_formula(self):
        """The general assembly with sigma0* = a1 I reproduces the closed form"""
        rng = np.random.default_rng(11)
        for _ in range(10):
            p = LimitParams(
                rng.uniform(0.5, 2), rng.uniform(-1, 1), rng.uniform(0.5, 3),
                rng.uniform(-1, 1), tuple(rng.uniform(-1, 1, 3)),
            )
            rho = rng.uniform(0.5, 1.5)
            general = assemble_effective(transversal_limit(circular_sigma0(), p), rho, p)
            np.testing.assert_allclose(
                general.matrix, oracle_circular(p, rho).matrix, atol=1e-12
            )

    def test_bad_rho(self):
        """rho must be positive"""
        with self.assertRaises(ValidationError):
            oracle_circular(self.p, 0.0)


class TestGrid(unittest.TestCase):
    """Test cases for the thin-grid limit"""

    def setUp(self):
        """Random parameters from a fixed seed"""
        self.rng = np.random.default_rng(5)

    def _params(self) -> LimitParams:
        return LimitParams(
            self.rng.uniform(0.5, 2), self.rng.uniform(-1, 1), self.rng.uniform(0.5, 3),
            self.rng.uniform(-1, 1), tuple(self.rng.uniform(-1, 1, 3)),
        )

    def test_general_formula(self):
        """The general assembly with sigma0* = (a1 + rho a2 / 2) I reproduces the closed form"""
        for _ in range(10):
            p = self._params()
            rho = self.rng.uniform(0.5, 1.5)
            general = assemble_effective(transversal_limit(grid_sigma0(rho), p), rho, p)
            np.testing.assert_allclose(general.matrix, oracle_grid(p, rho).matrix, atol=1e-12)

    def test_onsager(self):
        """sigma*(-h) = sigma*(h)^T"""
        for oracle in (oracle_grid, oracle_circular):
            p = self._params()
            flipped = oracle(p.with_h(tuple(-x for x in p.h)), 1.2)
            np.testing.assert_allclose(flipped.matrix, oracle(p, 1.2).matrix.T, atol=1e-14)

    def test_zero_field(self):
        """Without a field: (alpha1 + rho alpha2 / 2) I transversally, alpha1 + rho alpha2 along"""
        p = LimitParams(1.0, 0.3, 2.0, 0.7)
        tensor = oracle_grid(p, 1.0)
        np.testing.assert_allclose(tensor.matrix, np.diag([2.0, 2.0, 3.0]), atol=1e-15)

    def test_worked_examples(self):
        """alpha1 = 1, alpha2 = 2, beta1 = 0, beta2 = 1, rho = 1 along and across the columns"""
        p = LimitParams(1.0, 0.0, 2.0, 1.0, (0.0, 0.0, 1.0))
        tensor = oracle_grid(p, 1.0)
        np.testing.assert_allclose(tensor.transversal, 2.25 * np.eye(2), atol=1e-15)
        np.testing.assert_allclose(tensor.col3, 0.0, atol=1e-15)
        np.testing.assert_allclose(tensor.row3, 0.0, atol=1e-15)
        self.assertAlmostEqual(tensor.corner, 3.0, places=14)

        tensor = oracle_grid(p.with_h((1.0, 0.0, 0.0)), 1.0)
        np.testing.assert_allclose(tensor.transversal, 2.0 * np.eye(2), atol=1e-15)
        np.testing.assert_allclose(tensor.col3, [0.0, -0.5], atol=1e-15)
        np.testing.assert_allclose(tensor.row3, [0.0, 0.5], atol=1e-15)
        self.assertAlmostEqual(tensor.corner, 3.25, places=14)

    def test_coupling_sum_parallel_to_field(self):
        """p* + q* is parallel to (h1, h2) although p* != -q* in general"""
        for _ in range(10):
            p = self._params()
            tensor = oracle_grid(p, self.rng.uniform(0.5, 1.5))
            total = tensor.col3 + tensor.row3
            h_t = np.asarray(p.h[:2])
            self.assertAlmostEqual(total[0] * h_t[1] - total[1] * h_t[0], 0.0, places=13)
            if p.beta2 != 0 and p.h[2] != 0:
                self.assertFalse(np.allclose(tensor.col3, -tensor.row3, atol=1e-12))

    def test_field_sensitivity(self):
        """Analytic field derivatives match central differences with step 1e-5"""
        for kind in ('grid', 'circular'):
            for _ in range(5):
                p = self._params()
                rho = self.rng.uniform(0.5, 1.5)
                analytic = h_sensitivity(kind, p, rho)
                numeric = finite_difference_sensitivity(kind, p, rho, step=1e-5)
                scale = np.max(np.abs(analytic))
                np.testing.assert_allclose(numeric, analytic, rtol=1e-6, atol=1e-8 * scale)
        with self.assertRaises(ValidationError):
            h_sensitivity('hexagonal', self._params(), 1.0)

    def test_local_bounds(self):
        """Bounds bracket the constant-density transversal limit"""
        p = LimitParams(1.0, 0.0, 2.0, 0.0)
        lower, upper = grid_local_bounds(0.5, 1.5, p)
        self.assertEqual((lower, upper), (1.5, 2.5))
        value = grid_sigma0(1.0)(p.alpha1, p.alpha2)[0, 0]
        self.assertTrue(lower <= value <= upper)
        with self.assertRaises(ValidationError):
            grid_local_bounds(2.0, 1.0, p)


class TestTransformedLimits(unittest.TestCase):
    """Test cases for the Pi-transformed limit blocks"""

    def test_conjugation_identity(self):
        """Pi sigma* PiHat has the transformed limit blocks"""
        rng = np.random.default_rng(2)
        for _ in range(5):
            p = LimitParams(
                rng.uniform(0.5, 2), rng.uniform(-1, 1), rng.uniform(0.5, 3),
                rng.uniform(-1, 1), tuple(rng.uniform(-1, 1, 3)),
            )
            theta = rng.uniform(0.2, 1.5)
            sigma_t = transversal_limit(grid_sigma0(theta), p)
            tensor = assemble_effective(sigma_t, theta, p)
            conjugated = pi_conjugate(tensor.matrix, pi_limits(p.alpha2, p.beta2, p.h))
            p_prime, q_prime, a_prime = transformed_limits(p, sigma_t, theta)
            np.testing.assert_allclose(conjugated[:2, :2], sigma_t, atol=1e-12)
            np.testing.assert_allclose(conjugated[:2, 2], p_prime, atol=1e-12)
            np.testing.assert_allclose(conjugated[2, :2], q_prime, atol=1e-12)
            self.assertAlmostEqual(conjugated[2, 2], a_prime, places=11)


class TestOracleField(unittest.TestCase):
    """Test cases for x'-dependent limits"""

    def test_pointwise(self):
        """Each sample point uses rho at that point"""
        p = LimitParams(1.0, 0.0, 2.0, 0.0, (0.0, 0.0, 1.0))
        rho = RhoField.affine(0.4)
        points = [(0.0, 0.5), (1.0, 0.5)]
        tensors = oracle_field('grid', p, rho, points)
        self.assertAlmostEqual(tensors[0].corner, 1.0 + 0.8 * 2.0)
        self.assertAlmostEqual(tensors[1].corner, 1.0 + 1.2 * 2.0)
        with self.assertRaises(ValidationError):
            oracle_field('hexagonal', p, rho, points)

    def test_oracle_for_kind(self):
        """Geometry kinds map to their closed forms"""
        p = LimitParams(1.0, 0.0, 2.0, 0.0)
        np.testing.assert_array_equal(oracle_for('disk', p, 1.0).matrix, oracle_circular(p, 1.0).matrix)
        with self.assertRaises(ValidationError):
            oracle_for('laminate', p, 1.0)

    def test_zero_contrast_limit(self):
        """A vanishing inclusion conductivity leaves sigma1(h); alpha2 = 0 is rejected"""
        with self.assertRaises(ValidationError):
            LimitParams(1.0, 0.0, 0.0, 0.0)
        sigma1 = realize_sigma(PerturbedConductivity(1.0, 0.5, (0, 0, 1)))
        p = LimitParams(1.0, 0.5, 1e-9, 0.0, (0.0, 0.0, 1.0))
        np.testing.assert_allclose(oracle_circular(p, 1.0).matrix, sigma1, atol=1e-8)


if __name__ == '__main__':
    unittest.main()
