"""Grid, quadrature and table tests."""

# run these tests like:
#
#    python -m unittest test_numerics.py


import os
import tempfile
from unittest import TestCase

import numpy as np

from errors import (
    ConfigurationError,
    DataError,
    DomainError,
    ExtrapolationError,
    GridMismatchError,
)
from numerics import (
    SQRT2,
    Decay,
    RadialFunction,
    RadialGrid,
    cumulative_array,
    cumulative_integral,
    definite_integral,
    enveloped_derivative,
    fd_weights_1d,
    head_exponent_estimate,
    interp_eval,
    power_envelope,
    read_table,
    tail_integral,
    write_table,
)


class FiniteDifferenceTestCase(TestCase):
    """Tests for stencil weights and derivative matrices."""

    @classmethod
    def setUpClass(cls):
        cls.grid = RadialGrid.graded(r_min=1e-4, r_max=30.0, per_decade=32, h_outer=0.05)

    def test_three_point_weights(self):
        """Do the Fornberg weights reduce to the central differences?"""

        np.testing.assert_allclose(fd_weights_1d([-1, 0, 1], 0.0, 1), [-0.5, 0, 0.5],
                                   atol=1e-15)
        np.testing.assert_allclose(fd_weights_1d([-1, 0, 1], 0.0, 2), [1, -2, 1],
                                   atol=1e-15)

    def test_too_few_nodes(self):
        with self.assertRaises(ConfigurationError):
            fd_weights_1d([0.0, 1.0], 0.0, 2)

    def test_first_derivative_on_uniform_part(self):
        """Is D1 sixth-order accurate where the grid is uniform?"""

        r = self.grid.nodes
        error = abs(self.grid.D1 @ np.sin(r) - np.cos(r))
        outer = (r >= 2.5) & (r <= r[-4])
        self.assertLess(error[outer].max(), 1e-8)

    def test_derivatives_exact_on_polynomials(self):
        r = self.grid.nodes
        np.testing.assert_allclose(self.grid.D1 @ r**3, 3 * r**2, rtol=1e-6, atol=1e-12)
        np.testing.assert_allclose(self.grid.D2 @ (r * r), 2 * np.ones_like(r),
                                   rtol=1e-5)


class GridTestCase(TestCase):
    """Tests for grid construction."""

    def test_graded_layout(self):
        grid = RadialGrid.graded(r_min=1e-4, r_max=30.0, per_decade=16, h_outer=0.1)

        self.assertEqual(grid.r_min, 1e-4)
        self.assertAlmostEqual(grid.r_max, 30.0, places=12)
        self.assertTrue(np.all(np.diff(grid.nodes) > 0))

        # the split radius and the integer radii of the uniform part are nodes
        self.assertAlmostEqual(grid.nodes[grid.index_of(2.0)], 2.0, places=12)
        self.assertAlmostEqual(grid.nodes[grid.index_of(10.0)], 10.0, places=9)

    def test_bad_parameters(self):
        with self.assertRaises(ConfigurationError):
            RadialGrid.graded(r_max=20.0)
        with self.assertRaises(ConfigurationError):
            RadialGrid.graded(per_decade=4)
        with self.assertRaises(ConfigurationError):
            RadialGrid.graded(h_outer=0.0)
        with self.assertRaises(DomainError):
            RadialGrid(np.linspace(0.0, 1.0, 10))
        with self.assertRaises(DataError):
            RadialGrid(np.array([1.0, 2.0, 3.0]))

    def test_refined_contains_nodes(self):
        grid = RadialGrid.graded(r_min=1e-2, r_max=30.0, per_decade=8, h_outer=0.5)
        fine = grid.refined()

        self.assertEqual(fine.size, 2 * grid.size - 1)
        np.testing.assert_allclose(fine.nodes[::2], grid.nodes, rtol=1e-12)

    def test_truncated(self):
        grid = RadialGrid.graded(r_min=1e-3, r_max=30.0, per_decade=16, h_outer=0.1)
        short = grid.truncated(10.0)

        self.assertAlmostEqual(short.r_max, 10.0, places=9)
        with self.assertRaises(ConfigurationError):
            grid.truncated(10.03)


class QuadratureTestCase(TestCase):
    """Tests for cumulative and tail integrals."""

    @classmethod
    def setUpClass(cls):
        cls.grid = RadialGrid.graded(r_min=1e-4, r_max=30.0, per_decade=64, h_outer=0.05)

    def test_cumulative_of_linear_function(self):
        """Is int_0^r s ds = r^2/2 reproduced, head included?"""

        f = RadialFunction.sample(self.grid, lambda r: r)
        F = cumulative_integral(f, head_exponent=1.0)
        r = self.grid.nodes
        np.testing.assert_allclose(F.values, r * r / 2, rtol=1e-10)

        # the integrand is attached as the derivative
        np.testing.assert_allclose(F.derivative, r)

    def test_tail_of_exponential(self):
        f = RadialFunction.sample(self.grid, lambda r: np.exp(-SQRT2 * r))
        F = tail_integral(f, decay=Decay.exponential())
        r = self.grid.nodes
        exact = np.exp(-SQRT2 * r) / SQRT2
        check = (r >= 1.0) & (r <= 5.0)
        np.testing.assert_allclose(F.values[check], exact[check], rtol=1e-7)
        self.assertEqual(F.notes, ())

    def test_tail_mismatch_is_noted(self):
        """A declared decay that disagrees with the data is a note, not an error."""

        f = RadialFunction.sample(self.grid, lambda r: 1 / (1 + r**3))
        F = tail_integral(f, decay=Decay.exponential())
        self.assertEqual(len(F.notes), 1)
        self.assertIn("tail mismatch", F.notes[0])

    def test_definite_integral_with_power_tail(self):
        r = self.grid.nodes
        g = 1 / (1 + r * r) ** 2
        total = definite_integral(self.grid, g, head_exponent=0.0,
                                  decay=Decay.algebraic(4.0))
        self.assertAlmostEqual(total, np.pi / 4, places=6)

    def test_non_integrable_head(self):
        f = RadialFunction.sample(self.grid, lambda r: 1 / r)
        with self.assertRaises(DomainError):
            cumulative_integral(f, head_exponent=-1.0)

    def test_bad_decay(self):
        with self.assertRaises(ConfigurationError):
            Decay.algebraic(1.0)
        with self.assertRaises(ConfigurationError):
            Decay("gaussian", 1.0)

    def test_linearity(self):
        r = self.grid.nodes
        f = np.exp(-r) * r
        g = r / (1 + r**3)

        def integral(values):
            return cumulative_integral(RadialFunction(self.grid, values),
                                       head_exponent=1.0).values

        combined = integral(2 * f + 3 * g)
        separate = 2 * integral(f) + 3 * integral(g)
        np.testing.assert_allclose(combined, separate, rtol=1e-12, atol=1e-15)

    def test_refinement_reduces_error(self):
        """Halving every interval cuts the quadrature error at least fourfold."""

        errors = []
        grid = RadialGrid.graded(r_min=1e-2, r_max=30.0, per_decade=8, h_outer=0.5)
        for current in (grid, grid.refined()):
            r = current.nodes
            F = cumulative_array(current, r * np.exp(-r), head_exponent=1.0)
            exact = (1 + r[0]) * np.exp(-r[0]) - (1 + r) * np.exp(-r)
            errors.append(np.max(abs((F - F[0]) - exact)))

        self.assertGreater(errors[0], 0.0)
        self.assertGreaterEqual(errors[0] / max(errors[1], 1e-300), 4.0)


class HeadExponentTestCase(TestCase):
    """Tests for the fitted power law at r_min."""

    def setUp(self):
        self.grid = RadialGrid.graded(r_min=1e-4, r_max=30.0, per_decade=32, h_outer=0.1)

    def test_power_law(self):
        r = self.grid.nodes
        self.assertAlmostEqual(head_exponent_estimate(self.grid, 3 * r**2.5), 2.5, places=8)
        self.assertAlmostEqual(head_exponent_estimate(self.grid, -r**-0.5), -0.5, places=8)

    def test_rough_samples_fall_back_to_zero(self):
        r = self.grid.nodes
        noisy = r**2 * (1 + 0.5 * (-1) ** np.arange(r.size))
        self.assertEqual(head_exponent_estimate(self.grid, noisy), 0.0)

        flipping = r * (-1) ** np.arange(r.size)
        self.assertEqual(head_exponent_estimate(self.grid, flipping), 0.0)
        self.assertEqual(head_exponent_estimate(self.grid, np.zeros(r.size)), 0.0)

    def test_rough_head_is_integrable(self):
        """A noisy head must not be mistaken for a non-integrable one."""

        r = self.grid.nodes
        noisy = 1e-6 * (1 + 0.5 * (-1) ** np.arange(r.size))
        F = cumulative_integral(RadialFunction(self.grid, noisy))
        self.assertTrue(np.all(np.isfinite(F.values)))


class EnvelopeTestCase(TestCase):
    """Tests for closed-form envelopes."""

    def test_log_derivatives(self):
        r = np.linspace(0.5, 5.0, 4001)
        h = r[1] - r[0]
        g, a, da = power_envelope(r, -3.0, 0.5, rate=-SQRT2)

        np.testing.assert_allclose(np.gradient(np.log(g), h)[1:-1], a[1:-1], rtol=1e-5)
        np.testing.assert_allclose(np.gradient(a, h)[1:-1], da[1:-1], rtol=1e-4, atol=1e-5)

    def test_limits(self):
        """g follows r**e0 near 0 and r**e_inf far out."""

        g, _, _ = power_envelope(np.array([1e-6, 2e-6]), 2.0, -3.0)
        self.assertAlmostEqual(g[1] / g[0], 4.0, places=6)
        g, _, _ = power_envelope(np.array([1e6, 2e6]), 2.0, -3.0)
        self.assertAlmostEqual(g[1] / g[0], 2.0**-3, places=6)

    def test_enveloped_derivative(self):
        grid = RadialGrid.graded(r_min=1e-2, r_max=30.0, per_decade=64, h_outer=0.05)
        r = grid.nodes
        envelope = power_envelope(r, -3.0, -3.0, rate=-SQRT2)
        g, a = envelope[0], envelope[1]
        u = (1 + r) / (2 + r)
        du = 1 / (2 + r) ** 2

        derivative = enveloped_derivative(grid, g * u, envelope)
        exact = g * (a * u + du)
        check = (r >= 0.1) & (r <= 28.0)
        np.testing.assert_allclose(derivative[check], exact[check], rtol=1e-6)


class RadialFunctionTestCase(TestCase):
    """Tests for radial functions and interpolation."""

    def setUp(self):
        self.grid = RadialGrid.graded(r_min=1e-2, r_max=30.0, per_decade=16, h_outer=0.1)

    def test_non_finite_values(self):
        values = np.ones(self.grid.size)
        values[3] = np.nan
        with self.assertRaises(DataError):
            RadialFunction(self.grid, values)

    def test_grid_mismatch(self):
        other = RadialGrid.graded(r_min=1e-2, r_max=30.0, per_decade=8, h_outer=0.1)
        with self.assertRaises(GridMismatchError):
            RadialFunction.zeros(self.grid) + RadialFunction.zeros(other)

    def test_interpolation(self):
        f = RadialFunction.sample(self.grid, np.sin, np.cos)
        self.assertAlmostEqual(interp_eval(f, 3.33), np.sin(3.33), places=5)

        with self.assertRaises(ExtrapolationError):
            interp_eval(f, 31.0)

    def test_cubics_are_exact(self):
        points = np.array([0.013, 0.7, 2.31, 17.77, 29.9])
        hermite = RadialFunction.sample(self.grid, lambda r: r**3 - 2 * r,
                                        lambda r: 3 * r * r - 2)
        spline = RadialFunction.sample(self.grid, lambda r: r**3 - 2 * r)
        exact = points**3 - 2 * points

        np.testing.assert_allclose(interp_eval(hermite, points), exact, rtol=1e-12,
                                   atol=1e-12)
        np.testing.assert_allclose(interp_eval(spline, points), exact, rtol=1e-12,
                                   atol=1e-12)

    def test_extension_used_outside(self):
        f = RadialFunction(self.grid, np.ones(self.grid.size),
                           extension=lambda r: 2 * np.ones_like(r))
        np.testing.assert_allclose(interp_eval(f, np.array([1.0, 40.0])), [1.0, 2.0])


class TableTestCase(TestCase):
    """Tests for CSV tables."""

    def test_write_and_read(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "t.csv")
            write_table(path, dict(r=[1.0, 2.0], h1=[1 / 3, -2.5e-300]))
            table = read_table(path, required=("r", "h1"))

        np.testing.assert_array_equal(table["h1"], [1 / 3, -2.5e-300])

    def test_missing_file_and_column(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(DataError):
                read_table(os.path.join(tmp, "missing.csv"))

            path = os.path.join(tmp, "t.csv")
            write_table(path, dict(r=[1.0, 2.0]))
            with self.assertRaises(DataError):
                read_table(path, required=("r", "h2"))
