#!/usr/bin/env python3

""" This file tests the fine-scale versus homogenized 3D comparison """

import json
import os
import tempfile
import unittest

import numpy as np

from columnar_homog.exceptions import (
    IncompatibleGridError,
    ResolutionError,
    ValidationError,
)
from columnar_homog.geometry import RhoField
from columnar_homog.macro_validate import (
    SourceTerm,
    compare,
    energy_identity,
    export_solution,
    homogenized_tensor,
    make_problem,
    read_solution,
    run_macro_validation,
    solve_fine,
    solve_homogenized,
)
from columnar_homog.tensor_core import (
    EffectiveTensor,
    PerturbedConductivity,
    realize_sigma,
)


class TestHomogenizedSolve(unittest.TestCase):
    """Test cases for the constant-coefficient Dirichlet problem"""

    @classmethod
    def setUpClass(cls):
        """Poisson problem -div grad u = 1 on a 16^3 grid"""
        cls.solution = solve_homogenized(EffectiveTensor(np.eye(3)), None, (16, 16, 16))

    def test_centre_value(self):
        """The centre value of the unit-cube Poisson solution is about 0.0562"""
        self.assertAlmostEqual(self.solution.u[8, 8, 8], 0.0562, delta=1.5e-3)

    def test_boundary_and_sign(self):
        """Zero on the boundary, non-negative inside"""
        u = self.solution.u
        for face in (u[0], u[-1], u[:, 0], u[:, -1], u[:, :, 0], u[:, :, -1]):
            np.testing.assert_array_equal(face, 0.0)
        self.assertGreaterEqual(u.min(), 0.0)

    def test_energy_identity(self):
        """The bilinear form at (u, u) equals the load at u"""
        self.assertLessEqual(energy_identity(self.solution), 1e-8)

    def test_symmetry(self):
        """An isotropic problem with a symmetric source is symmetric under x <-> y"""
        np.testing.assert_allclose(
            self.solution.u, np.transpose(self.solution.u, (0, 2, 1)), atol=1e-10
        )

    def test_not_coercive(self):
        """Tensors with an indefinite symmetric part are rejected"""
        with self.assertRaises(ValidationError):
            solve_homogenized(EffectiveTensor(-np.eye(3)), None, (4, 4, 4))


class TestFineSolve(unittest.TestCase):
    """Test cases for the columnar fine-scale problem"""

    def setUp(self):
        """A frame microstructure with four cells per side and a Hall field"""
        self.problem = make_problem(
            'frame', 0.25, 0.25, 1.0, 0.5, 10.0, 1.0, h=(0.3, 0.0, 1.0)
        )

    def test_krylov_matches_direct(self):
        """The GMRES solution matches a sparse direct solve at 16^3"""
        iterative = solve_fine(self.problem, (16, 16, 16))
        direct = solve_fine(self.problem, (16, 16, 16), direct=True)
        np.testing.assert_allclose(
            iterative.u, direct.u, atol=1e-7 * np.max(np.abs(direct.u))
        )
        self.assertLessEqual(energy_identity(iterative), 1e-8)

    def test_homogeneous_fine_equals_homogenized(self):
        """A single-phase fine problem is the homogenized one with sigma1(h)"""
        problem = make_problem('homogeneous', 0.5, 0.0, 1.0, 0.5, 1.0, 0.0, h=(0.3, 0.0, 1.0))
        fine = solve_fine(problem, (8, 8, 8), direct=True)
        sigma1 = realize_sigma(PerturbedConductivity(1.0, 0.5, (0.3, 0.0, 1.0)))
        hom = solve_homogenized(EffectiveTensor(sigma1), None, (8, 8, 8), direct=True)
        np.testing.assert_allclose(fine.u, hom.u, atol=1e-14)
        self.assertEqual(compare(fine, hom).l2, 0.0)

    def test_under_resolved(self):
        """Struts narrower than two grid cells are rejected"""
        problem = make_problem('frame', 0.25, 0.125, 1.0, 0.0, 10.0, 0.0)
        with self.assertRaises(ResolutionError):
            solve_fine(problem, (16, 16, 16))

    def test_problem_validation(self):
        """eps must tile the unit square and the contrast is capped"""
        with self.assertRaises(ValidationError):
            make_problem('frame', 0.3, 0.125, 1.0, 0.0, 10.0, 0.0)
        with self.assertRaises(ValidationError):
            make_problem('frame', 0.25, 0.125, 1.0, 0.0, 2000.0, 0.0)
        with self.assertRaises(ValidationError):
            solve_fine(self.problem, (64, 64, 64))


class TestCompareExport(unittest.TestCase):
    """Test cases for grid comparison and the binary export"""

    def setUp(self):
        """A smooth nodal field on a 9^3 node grid"""
        x = np.linspace(0.0, 1.0, 9)
        z, y, xx = np.meshgrid(x, x, x, indexing='ij')
        self.u = np.sin(np.pi * xx) * np.sin(np.pi * y) * np.sin(np.pi * z)

    def test_identical(self):
        """Identical solutions have zero error"""
        result = compare(self.u, self.u.copy())
        self.assertEqual((result.l2, result.h1), (0.0, 0.0))

    def test_restriction(self):
        """A finer grid is restricted by injection to the coarser one"""
        result = compare(self.u, self.u[::2, ::2, ::2])
        self.assertEqual(result.l2, 0.0)

    def test_incompatible(self):
        """Grids that do not nest are rejected"""
        with self.assertRaises(IncompatibleGridError):
            compare(self.u, np.zeros((6, 6, 6)))

    def test_export(self):
        """Header of three int32 node counts, x-fastest float64 values and a sidecar"""
        solution = solve_homogenized(EffectiveTensor(np.eye(3)), None, (4, 6, 8))
        fpath = export_solution(
            solution, os.path.join(tempfile.mkdtemp(), 'u.bin'), {'epsilon': 0.25}
        )
        with open(fpath, 'rb') as fh:
            header = np.frombuffer(fh.read(12), dtype='<i4')
        np.testing.assert_array_equal(header, [5, 7, 9])
        self.assertEqual(os.path.getsize(fpath), 12 + 8 * 5 * 7 * 9)
        np.testing.assert_array_equal(read_solution(fpath), solution.u)
        with open(fpath + '.json') as fh:
            info = json.load(fh)
        self.assertEqual(info['dims'], [5, 7, 9])
        self.assertEqual(info['epsilon'], 0.25)


class TestSourceTerm(unittest.TestCase):
    """Test cases for separable polynomial sources"""

    def test_parse(self):
        """One factor means a function of x1 only"""
        source = SourceTerm.parse('0,1;1;2')
        self.assertAlmostEqual(float(source(0.5, 0.3, 0.1)), 1.0)
        self.assertEqual(SourceTerm.parse('3').x2, (1.0,))
        with self.assertRaises(ValidationError):
            SourceTerm.parse('1;2')


class TestValidationTrend(unittest.TestCase):
    """Test cases for the fine versus homogenized trend"""

    def test_error_decreases_with_period(self):
        """Halving eps reduces the L2 distance to the homogenized solution"""
        rows = run_macro_validation(
            epsilons=(0.25, 0.125),
            kind='frame',
            shape_param=0.25,
            contrast=10.0,
            h=(0.0, 0.0, 1.0),
            resolution=32,
        )
        self.assertEqual([row['cells_per_period'] for row in rows], [8, 4])
        self.assertLess(rows[1]['l2_error'], rows[0]['l2_error'])
        for row in rows:
            self.assertLessEqual(row['energy_defect_fine'], 1e-8)
            self.assertGreaterEqual(row['min_fine'], -1e-12)

    def test_modulated_cells(self):
        """With rho the cell tensor follows the local cell shape"""
        rho = RhoField.affine(0.8)
        problem = make_problem(
            'frame', 0.25, 0.25, 1.0, 0.0, 10.0, 0.0, h=(0.0, 0.0, 1.0), rho=rho
        )
        sigma_star = homogenized_tensor(problem, 8, None)
        thin, thick = sigma_star(0.05, 0.5), sigma_star(0.95, 0.5)
        self.assertLess(thin.corner, thick.corner)
        self.assertIs(sigma_star(0.2, 0.1), thin)
        plain = make_problem('frame', 0.25, 0.25, 1.0, 0.0, 10.0, 0.0)
        self.assertIsInstance(homogenized_tensor(plain, 8, None), EffectiveTensor)

    def test_modulated_error_decreases(self):
        """An affine density keeps the L2 trend of the periodic frame"""
        rows = run_macro_validation(
            epsilons=(0.25, 0.125),
            kind='frame',
            shape_param=0.25,
            contrast=10.0,
            h=(0.0, 0.0, 1.0),
            rho=RhoField.affine(0.8),
            resolution=32,
        )
        self.assertLess(rows[1]['l2_error'], rows[0]['l2_error'])
        for row in rows:
            self.assertLessEqual(row['energy_defect_hom'], 1e-8)


if __name__ == '__main__':
    unittest.main()
