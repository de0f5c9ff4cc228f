"""Acceptance criteria tests."""

# run these tests like:
#
#    python -m unittest test_verification.py


from unittest import TestCase, mock

from errors import KernelIntegrityError
from models import RunConfig
from verification import (
    KERNEL_MODES,
    SuiteContext,
    check_estimate,
    check_growth,
    check_kernel_fields,
    check_kernels,
    check_manufactured,
    check_mode1,
    check_oracle,
    check_profile,
    check_quad_form,
    check_small_r,
    check_uniform,
    within_band,
)

CONFIG = RunConfig(K=4, n_theta=32, threads=2)


class WithinBandTestCase(TestCase):
    """Tests for the non-regression band."""

    def test_missing_constant_fails(self):
        measured = {}
        self.assertFalse(within_band(1.0, None, False, measured))
        self.assertIn('golden_missing', measured)

    def test_band_edges(self):
        self.assertTrue(within_band(1.05, 1.0, False, {}))
        self.assertTrue(within_band(0.95, 1.0, False, {}))
        self.assertFalse(within_band(1.15, 1.0, False, {}))
        self.assertFalse(within_band(0.85, 1.0, False, {}))

    def test_quick_checks_upper_edge_only(self):
        self.assertTrue(within_band(0.5, 1.0, True, {}))
        self.assertFalse(within_band(1.15, 1.0, True, {}))


class CriteriaTestCase(TestCase):
    """Each criterion on the default grid, quick mode."""

    @classmethod
    def setUpClass(cls):
        cls.ctx = SuiteContext(CONFIG, quick=True, golden={}).prepare()

    def assertPassed(self, result):
        self.assertTrue(result.passed, result.measured)

    def test_profile(self):
        result = check_profile(self.ctx)
        self.assertEqual(result.name, "profile_fidelity")
        self.assertPassed(result)

    def test_kernels(self):
        result = check_kernels(self.ctx)
        self.assertPassed(result)
        self.assertEqual(sorted(result.measured), sorted(str(k) for k in KERNEL_MODES))
        self.assertLessEqual(result.measured['0']['quadrature_deviation'], 1e-6)

    def test_manufactured(self):
        self.assertPassed(check_manufactured(self.ctx))

    def test_kernel_fields(self):
        self.assertPassed(check_kernel_fields(self.ctx))

    def test_mode1(self):
        self.assertPassed(check_mode1(self.ctx))

    def test_small_r(self):
        self.assertPassed(check_small_r(self.ctx))

    def test_growth(self):
        self.assertPassed(check_growth(self.ctx))

    def test_quad_form(self):
        self.assertPassed(check_quad_form(self.ctx))

    def test_oracle(self):
        self.assertPassed(check_oracle(self.ctx))

    def test_estimate_needs_recorded_constant(self):
        ctx = SuiteContext(CONFIG, quick=True, golden={}, profile=self.ctx.profile,
                           kernels=self.ctx.kernels)
        missing = check_estimate(ctx)
        self.assertFalse(missing.passed)
        self.assertIn('golden_missing', missing.measured)

        ctx.golden['C_rec'] = missing.measured['max_ratio']
        self.assertPassed(check_estimate(ctx))

        ctx.golden['C_rec'] = 0.5 * missing.measured['max_ratio']
        self.assertFalse(check_estimate(ctx).passed)

    def test_uniform_needs_recorded_constant(self):
        ctx = SuiteContext(CONFIG, quick=True, golden={}, profile=self.ctx.profile,
                           kernels=self.ctx.kernels)
        missing = check_uniform(ctx)
        self.assertFalse(missing.passed)
        self.assertLessEqual(missing.measured['spread'], 0.15)

        # quick runs still check both edges of this band
        ctx.golden['outer_ratio'] = 2.0 * missing.measured['max_outer_ratio']
        self.assertFalse(check_uniform(ctx).passed)

        ctx.golden['outer_ratio'] = missing.measured['max_outer_ratio']
        self.assertPassed(check_uniform(ctx))

    def test_kernel_failure_is_recorded_per_mode(self):
        built = {k: basis for k, basis in self.ctx.kernels_upto(8).items() if k != 5}
        ctx = SuiteContext(CONFIG, quick=True, golden={}, profile=self.ctx.profile,
                           kernels=built)
        failure = KernelIntegrityError("Wronskian is not constant", k=5)
        with mock.patch("verification.build_kernels", side_effect=failure):
            result = check_kernels(ctx)

        self.assertFalse(result.passed)
        self.assertEqual(result.measured['5']['error']['error'], "KernelIntegrityError")
        self.assertIn('residual', result.measured['4'])
        self.assertIn('residual', result.measured['6'])
