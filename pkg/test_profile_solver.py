"""Vortex profile tests."""

# run these tests like:
#
#    python -m unittest test_profile_solver.py


import os
import tempfile
from unittest import TestCase, mock

import numpy as np

from errors import ConfigurationError, ConvergenceError, DomainError
from numerics import RadialGrid
from profile_solver import (
    asymptotic_profile,
    eval_profile,
    miss_distance,
    newton_polish,
    profile_residual,
    read_profile_csv,
    shoot,
    shoot_alpha,
    solve_profile,
    write_profile_csv,
)
from verification import load_golden

ALPHA = load_golden()["alpha"]


class ProfileTestCase(TestCase):
    """Tests for the profile solver on the default grid."""

    @classmethod
    def setUpClass(cls):
        cls.grid = RadialGrid.graded()
        cls.profile = solve_profile(cls.grid)

    def test_alpha(self):
        """Does alpha match the recorded value to 1e-7?"""

        self.assertAlmostEqual(self.profile.alpha, ALPHA, delta=1e-7)

    def test_residual(self):
        """Is the collocated equation satisfied to 1e-8 max(1, 1/r^2)?"""

        self.assertLessEqual(profile_residual(self.profile).max(), 1e-8)
        self.assertLessEqual(self.profile.residual, 1e-10)

    def test_shape(self):
        w = self.profile.w.values
        wp = self.profile.w_prime.values

        self.assertTrue(np.all((w > 0) & (w < 1)))
        self.assertTrue(np.all(wp > 0))

    def test_values_at_ten(self):
        w, wp = eval_profile(self.profile, 10.0)

        self.assertAlmostEqual(w, 0.995, delta=5e-4)
        self.assertAlmostEqual(wp, 1e-3, delta=1.5e-4)

    def test_extensions(self):
        """Below r_min the series is used, above r_max the expansion."""

        w_small, wp_small = eval_profile(self.profile, 1e-5)
        self.assertAlmostEqual(w_small / 1e-5, self.profile.alpha, delta=1e-8)
        self.assertAlmostEqual(wp_small, self.profile.alpha, delta=1e-8)

        w_far, _ = eval_profile(self.profile, 50.0)
        self.assertAlmostEqual(w_far, asymptotic_profile(50.0)[0], places=14)

    def test_bad_radius(self):
        with self.assertRaises(DomainError):
            eval_profile(self.profile, 0.0)
        with self.assertRaises(DomainError):
            eval_profile(self.profile, np.array([1.0, -1.0]))

    def test_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "profile.csv")
            write_profile_csv(path, self.profile)
            table = read_profile_csv(path)

        self.assertAlmostEqual(table.alpha, self.profile.alpha, places=14)
        self.assertLessEqual(table.residual, 1e-8)


class ShootingTestCase(TestCase):
    """Tests for the shooting bracket."""

    def test_verdicts(self):
        """Trajectories turn back below alpha and overshoot above it."""

        self.assertEqual(shoot(0.5, 1e-4)[0], -1)
        self.assertEqual(shoot(0.7, 1e-4)[0], 1)

    def test_bracket_must_enclose(self):
        with self.assertRaises(ConfigurationError):
            shoot_alpha(1e-4, bracket=(0.7, 2.0))

    def test_bisection(self):
        alpha, _ = shoot_alpha(1e-4, tol=1e-8)
        self.assertAlmostEqual(alpha, ALPHA, delta=1e-6)

    def test_tolerance_floor(self):
        grid = RadialGrid.graded(r_min=1e-4, r_max=30.0, per_decade=16)
        with self.assertRaises(ConfigurationError):
            solve_profile(grid, tol=1e-13)

    def test_secant_refinement(self):
        """Secant steps finish in fewer shots than bisection to the same width."""

        with mock.patch("profile_solver.shoot", wraps=shoot) as counted:
            alpha, _ = shoot_alpha(1e-4, tol=1e-10)

        self.assertAlmostEqual(alpha, ALPHA, delta=1e-7)
        # 2 bracket shots + 35 halvings of (0.1, 2.0) down to 1e-10
        self.assertLess(counted.call_count, 37)

    def test_miss_distance_sign(self):
        """Negative below the slope, positive above, shrinking towards it."""

        misses = [miss_distance(*shoot(a, 1e-4)) for a in (0.57, 0.58, 0.586, 0.59)]

        self.assertLess(misses[0], misses[1])
        self.assertLess(misses[1], 0.0)
        self.assertGreater(misses[2], 0.0)
        self.assertLess(misses[2], misses[3])


class NewtonTestCase(TestCase):
    """Tests for the Newton line search."""

    @classmethod
    def setUpClass(cls):
        cls.grid = RadialGrid.graded(r_min=1e-4, r_max=30.0, per_decade=64, h_outer=0.05)
        cls.profile = solve_profile(cls.grid)

    def uphill(self, jacobian, rhs):
        return np.full_like(rhs, 1e6)

    def test_keeps_iterate_without_descent(self):
        w = self.profile.w.values.copy()
        with mock.patch("profile_solver.spsolve", self.uphill):
            w_out, iterations, err = newton_polish(self.grid, w, tol=1e-10)

        np.testing.assert_array_equal(w_out, w)
        self.assertEqual(iterations, 0)
        self.assertLessEqual(err, 1e-10)

    def test_stalled_line_search(self):
        w = self.profile.w.values.copy()
        with mock.patch("profile_solver.spsolve", self.uphill):
            with self.assertRaises(ConvergenceError):
                newton_polish(self.grid, w, tol=1e-16)
