#!/usr/bin/env python3

""" This file tests the invariant suite behind the verify command """

import unittest
from unittest import mock

import numpy as np

from columnar_homog import checks
from columnar_homog.exceptions import AcceptanceError
from columnar_homog.linsolve import SolverSettings

QUICK_GROUPS = ['tensor_core', 'closed_forms', 'schedules', 'raster']


class TestChecks(unittest.TestCase):
    """Test cases for run_checks"""

    def test_quick_suite(self):
        """Algebraic groups pass for several seeds"""
        for seed in (0, 1, 2):
            self.assertEqual(checks.run_checks(seed=seed, quick=True), QUICK_GROUPS)

    def test_full_suite(self):
        """All groups pass, including the cell and macro solves"""
        self.assertEqual(
            checks.run_checks(seed=0),
            QUICK_GROUPS + ['transversal', 'cell_solver', 'macro'],
        )

    def test_fails_fast(self):
        """The first violated invariant is named and later groups do not run"""
        with mock.patch.object(
            checks, 'oracle_grid', side_effect=AcceptanceError('grid_closed_form', 'broken')
        ), mock.patch.object(checks, 'check_schedules') as schedules:
            with self.assertRaises(AcceptanceError) as ctx:
                checks.run_checks(quick=True)
        self.assertEqual(ctx.exception.invariant, 'grid_closed_form')
        schedules.assert_not_called()
        self.assertEqual(ctx.exception.exit_code, 4)

    def test_transversal_group(self):
        """Shift, adjoint and Voigt-Reuss checks pass on a disk cell"""
        for seed in (0, 1):
            checks.check_transversal(np.random.default_rng(seed), SolverSettings())

    def test_shift_violation(self):
        """A homogenization ignoring the c J shift is reported"""
        with mock.patch.object(
            checks, 'homogenize_transversal', return_value=2.0 * np.eye(2)
        ):
            with self.assertRaises(AcceptanceError) as ctx:
                checks.check_transversal(np.random.default_rng(0), SolverSettings())
        self.assertEqual(ctx.exception.invariant, 'constant_shift')

    def test_sensitivity_violation(self):
        """Analytic field derivatives are compared with central differences"""
        with mock.patch.object(checks, 'h_sensitivity', return_value=np.ones((3, 3, 3))):
            with self.assertRaises(AcceptanceError) as ctx:
                checks.check_closed_forms(np.random.default_rng(0))
        self.assertEqual(ctx.exception.invariant, 'circular_h_sensitivity')

    def test_raster_violation(self):
        """A raster fraction that does not approach the exact one is reported"""
        field = mock.Mock(raster_fraction=0.3, exact_fraction=0.2)
        with mock.patch.object(checks, 'rasterize', return_value=field):
            with self.assertRaises(AcceptanceError) as ctx:
                checks.check_raster()
        self.assertEqual(ctx.exception.invariant, 'raster_fraction')


if __name__ == '__main__':
    unittest.main()
