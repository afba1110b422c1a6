#!/usr/bin/env python3

""" This file tests the contrast sweep driver and its reports """

import json
import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from columnar_homog.exceptions import ResolutionError, ValidationError
from columnar_homog.geometry import circular_schedule, grid_schedule
from columnar_homog.homog_formulas import LimitParams
from columnar_homog.sweep import (
    make_verdict,
    check_conditions,
    monotonicity_test,
    report_frame,
    resolution_for,
    run_sweep,
    sweep_verdicts,
    write_report_csv,
    write_summary_json,
)
from columnar_homog.utils import relative_max_error


class TestGridSweep(unittest.TestCase):
    """Test cases for a short thin-grid sweep"""

    @classmethod
    def setUpClass(cls):
        """Two grid stages, solved once for the whole class"""
        cls.params = LimitParams(1.0, 0.5, 2.0, 1.0, (0.0, 0.0, 1.0))
        cls.schedule = grid_schedule([0.125, 0.0625], 2.0, 1.0)
        cls.report = run_sweep(
            cls.schedule, cls.params, resolutions=[32, 64], with_pw=False
        )

    def test_rows_in_stage_order(self):
        """One computed row per stage, both routes present"""
        self.assertEqual([row.stage.index for row in self.report.rows], [0, 1])
        for row in self.report.rows:
            self.assertTrue(row.computed)
            self.assertIsNotNone(row.direct)
            self.assertIsNotNone(row.pi)
            self.assertTrue(np.isfinite(row.error_direct))

    def test_route_discrepancy(self):
        """The two routes agree to the solver tolerance"""
        for row in self.report.rows:
            self.assertLessEqual(row.route_discrepancy, 1e-7)

    def test_error_decreases(self):
        """Thinner grids are closer to the limit tensor"""
        errors = [row.error_direct for row in self.report.rows]
        self.assertLess(errors[1], errors[0])
        verdicts = {v.name: v for v in sweep_verdicts(self.report)}
        self.assertTrue(verdicts['route_discrepancy'].passed)
        self.assertIsNone(verdicts['error_vs_limit'].slope)

    def test_reports(self):
        """CSV and JSON outputs without timing columns by default"""
        tmp = tempfile.mkdtemp()
        csv_path = write_report_csv(self.report, os.path.join(tmp, 'sweep.csv'))
        frame = pd.read_csv(csv_path)
        self.assertEqual(len(frame), 2)
        self.assertNotIn('wall_time', frame.columns)
        self.assertIn('direct_33', frame.columns)
        self.assertEqual(list(frame['status']), ['ok', 'ok'])
        self.assertIn('wall_time', report_frame(self.report, include_timing=True).columns)

        json_path = write_summary_json(
            self.report, sweep_verdicts(self.report), os.path.join(tmp, 'summary.json')
        )
        with open(json_path) as fh:
            summary = json.load(fh)
        self.assertEqual(summary['kind'], 'frame')
        self.assertEqual(summary['flagged_stages'], [])


class TestLimitSchedules(unittest.TestCase):
    """Test cases for full schedules against the closed-form limits"""

    def test_circular_fibres(self):
        """r_n = 0.2, 0.1, 0.05 in an oblique field: error below 5% and decreasing"""
        params = LimitParams(1.0, 0.5, 2.0, 1.0, (1.0, 1.0, 1.0))
        report = run_sweep(
            circular_schedule([0.2, 0.1, 0.05], 2.0, 1.0), params, with_pw=False
        )
        errors = [row.error_direct for row in report.rows]
        self.assertEqual(len(errors), 3)
        self.assertTrue(all(b < a for a, b in zip(errors, errors[1:])), errors)
        self.assertLessEqual(errors[-1], 0.05)
        for row in report.rows:
            self.assertLessEqual(row.route_discrepancy, 1e-7)

    def test_grid_transversal(self):
        """Without a field the transversal block tends to (alpha1 + alpha2 / 2) I"""
        params = LimitParams(1.0, 0.0, 2.0, 0.0)
        report = run_sweep(
            grid_schedule([0.125, 0.0625, 0.03125], 2.0, 0.0), params, with_pw=False
        )
        for row in report.rows:
            np.testing.assert_array_equal(row.oracle.transversal, 2.0 * np.eye(2))
        errors = [row.error_transversal for row in report.rows]
        self.assertTrue(all(b < a for a, b in zip(errors, errors[1:])), errors)
        self.assertLessEqual(errors[-1], 0.1)

    def test_grid_full_tensor(self):
        """In the field (1, 0, 1) the full tensor is within 10% of the grid limit"""
        params = LimitParams(1.0, 0.5, 2.0, 1.0, (1.0, 0.0, 1.0))
        report = run_sweep(
            grid_schedule([0.125, 0.0625, 0.03125], 2.0, 1.0), params, with_pw=False
        )
        errors = [row.error_direct for row in report.rows]
        self.assertTrue(all(b < a for a, b in zip(errors, errors[1:])), errors)
        self.assertLessEqual(errors[-1], 0.1)

        # the beta2^2 h3 term enters p* and q* with a negative sign
        finest = report.rows[-1]
        twist = params.beta2 ** 2 * params.h[2] / (2 * params.alpha2)
        flipped = finest.oracle.matrix.copy()
        flipped[:2, 2] += 2 * twist * np.asarray(params.h[:2])
        flipped[2, :2] += 2 * twist * np.asarray(params.h[:2])
        self.assertGreater(
            relative_max_error(finest.direct.matrix, flipped), finest.error_direct
        )


class TestSweepPolicy(unittest.TestCase):
    """Test cases for resolution policy and validation"""

    def test_resolution_for(self):
        """N = max(64, ceil(4 / shape)) capped at 512"""
        self.assertEqual(resolution_for('disk', 0.2), 64)
        self.assertEqual(resolution_for('disk', 0.05), 80)
        self.assertEqual(resolution_for('frame', 0.001), 512)

    def test_under_resolved_stage(self):
        """Stages that cannot be resolved are flagged and skipped"""
        schedule = grid_schedule([0.125], 2.0, 0.0)
        report = run_sweep(
            schedule, LimitParams(1.0, 0.0, 2.0, 0.0), resolutions=[8], with_pw=False
        )
        self.assertEqual(report.rows[0].status, 'under-resolved')
        self.assertEqual(sweep_verdicts(report), [])
        frame = report_frame(report)
        self.assertTrue(np.isnan(frame.loc[0, 'direct_11']))

    def test_bad_arguments(self):
        """Unknown oracles and mismatched resolution lists are rejected"""
        schedule = grid_schedule([0.125], 2.0, 0.0)
        params = LimitParams(1.0, 0.0, 2.0, 0.0)
        with self.assertRaises(ValidationError):
            run_sweep(schedule, params, oracle='magic')
        with self.assertRaises(ValidationError):
            run_sweep(schedule, params, resolutions=[32, 64])


class TestConditions(unittest.TestCase):
    """Test cases for schedule conditions and trend verdicts"""

    def test_circular_conditions(self):
        """All scaling conditions hold for the circular schedule"""
        verdicts = check_conditions(circular_schedule([0.2, 0.1, 0.05], 2.0, 1.0), 1.0)
        names = [v.name for v in verdicts]
        self.assertEqual(
            names,
            ['eps2_log_r', 'scale_alpha2_constant', 'scale_beta2_constant', 'mean_alpha_bounded'],
        )
        self.assertTrue(all(v.passed for v in verdicts))

    def test_grid_conditions(self):
        """The grid schedule has no logarithmic condition"""
        verdicts = check_conditions(grid_schedule([0.125, 0.0625], 2.0, 1.0), 1.0)
        self.assertNotIn('eps2_log_r', [v.name for v in verdicts])
        self.assertTrue(all(v.passed for v in verdicts))

    def test_slope_needs_three_points(self):
        """The log-log slope is only reported from three stages on"""
        self.assertIsNone(make_verdict('e', [0.1, 0.05], [0.2, 0.1]).slope)
        verdict = make_verdict('e', [0.4, 0.1, 0.025], [0.2, 0.1, 0.05])
        self.assertAlmostEqual(verdict.slope, 2.0, places=12)
        self.assertTrue(verdict.monotone_decreasing)

    def test_monotonicity(self):
        """A thicker frame of the better conductor has the larger tensor"""
        self.assertTrue(monotonicity_test(0.125, 0.25, 10.0, 32).passed)
        with self.assertRaises(ResolutionError):
            monotonicity_test(0.01, 0.25, 10.0, 32)
        with self.assertRaises(ValidationError):
            monotonicity_test(0.25, 0.125, 10.0, 32)


if __name__ == '__main__':
    unittest.main()
