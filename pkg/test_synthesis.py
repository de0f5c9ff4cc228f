"""Field decomposition, norm and pipeline tests."""

# run these tests like:
#
#    python -m unittest test_synthesis.py


import math
import os
import tempfile
from unittest import TestCase

import numpy as np

from errors import DataError, ResolutionError
from generator.corpus import compact_field
from homogeneous import build_kernels
from mode_solver import orthogonality_integral
from models import FourierField, ModePair, ModeRHS, PolarField
from numerics import RadialGrid
from profile_solver import solve_profile
from synthesis import (
    decompose,
    gradient_energy,
    inner_product,
    kernel_fields,
    norm_dstar,
    norm_star,
    polar_zeros,
    project_orthogonal,
    quad_form,
    read_polar_csv,
    residual_2d,
    sample_polar,
    solve_field,
    synthesize,
    vortex,
    write_polar_csv,
)
from verification import shaped_rhs


class FieldTestCase(TestCase):
    """Tests for decomposition, norms and quadratic forms."""

    @classmethod
    def setUpClass(cls):
        grid = RadialGrid.graded()
        cls.profile = solve_profile(grid)
        cls.radii = grid.nodes

    def test_decompose_single_family(self):
        """iW (i sin 2 theta) is the (2, 1) family with (a, b) = (0, 1)."""

        base = polar_zeros(self.radii, 16)
        field = base.with_values(1j * vortex(self.profile, base) * 1j
                                 * np.sin(2 * base.theta)[None, :])
        modes = decompose(field, self.profile)

        self.assertEqual(modes.K, 3)
        pair = modes.family(2, 1)
        np.testing.assert_allclose(pair.second.values, 1.0, atol=1e-12)
        np.testing.assert_allclose(pair.first.values, 0.0, atol=1e-12)
        self.assertLess(modes.family(2, 2).sup(), 1e-12)
        self.assertLess(modes.mode0.sup(), 1e-12)

    def test_nyquist_energy(self):
        field = sample_polar(self.radii, 16, lambda r, t: np.cos(8 * t) + 0 * r)
        with self.assertRaises(ResolutionError):
            decompose(field, self.profile, divide=False)

    def test_too_many_modes(self):
        with self.assertRaises(ResolutionError):
            decompose(polar_zeros(self.radii, 16), self.profile, K=4)

    def test_kernel_fields(self):
        """iW, dW/dx_1 and dW/dx_2 are annihilated by the operator."""

        zero = polar_zeros(self.radii, 16)
        for field in kernel_fields(self.profile, self.radii, 16):
            self.assertLessEqual(residual_2d(field, zero, self.profile), 1e-6)

    def test_norm_star_of_constant(self):
        report = norm_star(sample_polar(self.radii, 8, lambda r, t: np.ones_like(r)))

        self.assertAlmostEqual(report.inner, 1.0)
        self.assertAlmostEqual(report.outer_first, 1 / math.log(2) ** 2, places=9)
        self.assertEqual(report.outer_second, 0.0)

    def test_norm_dstar(self):
        """h = iW (i) has h~ = (0, 1)."""

        base = polar_zeros(self.radii, 8)
        h = base.with_values(-vortex(self.profile, base))
        report = norm_dstar(h, self.profile)

        w2 = self.profile.w.values[self.profile.grid.index_of(2.0)]
        self.assertAlmostEqual(report.inner, w2, places=9)
        self.assertAlmostEqual(report.outer_first, 0.0, places=9)
        self.assertAlmostEqual(report.outer_second, 1.0, places=9)

    def test_inner_product_area(self):
        ones = sample_polar(self.radii, 8, lambda r, t: np.ones_like(r))
        self.assertAlmostEqual(inner_product(ones, ones, 10.0), 100 * np.pi,
                               delta=1e-6 * 100 * np.pi)

        with self.assertRaises(DataError):
            inner_product(ones, polar_zeros(self.radii, 16), 10.0)

    def test_translation_is_nearly_null(self):
        _, dx1, _ = kernel_fields(self.profile, self.radii, 16)
        ratio = abs(quad_form(dx1, 20.0, self.profile)) \
            / gradient_energy(dx1, 20.0, self.profile)
        self.assertLessEqual(ratio, 0.02)

    def test_quadratic_form_non_negative(self):
        rng = np.random.default_rng(3)
        for _ in range(3):
            phi = PolarField(self.radii, compact_field(rng, self.radii, 32))
            scale = gradient_energy(phi, 10.0, self.profile) + inner_product(phi, phi, 10.0)
            self.assertGreaterEqual(quad_form(phi, 10.0, self.profile) / scale, -1e-8)

    def test_polar_csv(self):
        field = sample_polar(self.radii[::40], 8, lambda r, t: r * np.exp(1j * t) / 3)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "field.csv")
            write_polar_csv(path, field)
            back = read_polar_csv(path)

        np.testing.assert_array_equal(back.radii, field.radii)
        np.testing.assert_array_equal(back.values, field.values)

    def test_unreadable_field(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(DataError):
                read_polar_csv(os.path.join(tmp, "missing.csv"))


class PipelineTestCase(TestCase):
    """Tests for orthogonal projection and the full field solve."""

    @classmethod
    def setUpClass(cls):
        grid = RadialGrid.graded()
        cls.profile = solve_profile(grid)
        cls.grid = grid
        cls.kernels = build_kernels(cls.profile, range(5), threads=3)

    def data(self):
        grid = self.grid
        families = {
            (1, 1): shaped_rhs(grid, 1, 1, a=0.8, b=-0.4).h,
            (1, 2): shaped_rhs(grid, 1, 2, a=-0.3, b=0.5, scale=1.5).h,
            (3, 2): shaped_rhs(grid, 3, 2, a=0.6, b=0.2).h,
        }
        return FourierField(ModePair.zeros(grid), families, 4)

    def test_projection_restores_orthogonality(self):
        data = self.data()
        projected = project_orthogonal(data, self.profile, self.kernels[1])

        for l in (1, 2):
            before = orthogonality_integral(self.profile, self.kernels[1],
                                            ModeRHS(1, l, data.family(1, l)))
            after = orthogonality_integral(self.profile, self.kernels[1],
                                           ModeRHS(1, l, projected.family(1, l)))
            self.assertLessEqual(abs(after), 1e-8 * abs(before))

        np.testing.assert_array_equal(projected.family(3, 2).values,
                                      data.family(3, 2).values)

    def test_decompose_inverts_synthesize(self):
        data = self.data()
        modes = decompose(synthesize(data, self.profile, 32), self.profile)

        for (k, l), pair in data.families.items():
            np.testing.assert_allclose(modes.family(k, l).values, pair.values, rtol=0,
                                       atol=1e-10 * pair.sup())
        self.assertLess(modes.family(2, 1).sup(), 1e-10)
        self.assertLess(modes.mode0.sup(), 1e-10)

    def test_solve_field(self):
        h = synthesize(project_orthogonal(self.data(), self.profile, self.kernels[1]),
                       self.profile, 32)
        phi, modes, report = solve_field(h, self.profile, 4, self.kernels, project=True,
                                         threads=2)

        self.assertLessEqual(residual_2d(phi, h, self.profile), 5e-5)
        self.assertGreater(report.ratio, 0.0)
        self.assertLess(modes.family(2, 1).sup(), 1e-12)

    def test_field_on_foreign_grid(self):
        h = polar_zeros(self.grid.nodes[::2], 32)
        with self.assertRaises(DataError):
            solve_field(h, self.profile, 4, self.kernels)
