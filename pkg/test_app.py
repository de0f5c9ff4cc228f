"""Command-line and configuration tests."""

# run these tests like:
#
#    python -m unittest test_app.py


import json
import os
from unittest import TestCase

import numpy as np
from click.testing import CliRunner

from app import Artifacts, cli
from disk_oracle import assemble
from errors import ConfigurationError
from forms import load_config
from generator.corpus import compact_field, family_shapes
from models import CriterionResult, PolarField, RunConfig
from numerics import read_table, write_table
from profile_solver import read_profile_csv
from synthesis import read_polar_csv, write_polar_csv
from verification import disk_rhs, summary

SMALL = ["--rmax", "30", "--per-decade", "32", "--h-outer", "0.1"]
FEW_MODES = ["--K", "4", "--n-theta", "32"]


def error_report(result):
    """The JSON error document on stderr, after any log lines."""

    stderr = result.stderr
    return json.loads(stderr[stderr.index("{"):])


class ConfigTestCase(TestCase):
    """Tests for configuration loading and validation."""

    def test_defaults(self):
        config = load_config(environ={})
        self.assertEqual(config, RunConfig())

    def test_threads_bounded_by_environment(self):
        self.assertEqual(load_config(environ={"VORTEX_THREADS": "3"}).threads, 3)
        self.assertEqual(load_config(overrides=dict(threads=8),
                                     environ={"VORTEX_THREADS": "3"}).threads, 3)
        self.assertEqual(load_config(overrides=dict(threads=2),
                                     environ={"VORTEX_THREADS": "3"}).threads, 2)

    def test_bad_values(self):
        with self.assertRaises(ConfigurationError):
            load_config(overrides=dict(n_theta=100), environ={})
        with self.assertRaises(ConfigurationError):
            load_config(overrides=dict(K=40, n_theta=128), environ={})
        with self.assertRaises(ConfigurationError):
            load_config(overrides=dict(r_max=20.0), environ={})
        with self.assertRaises(ConfigurationError):
            load_config(overrides=dict(K=2.5), environ={})
        with self.assertRaises(ConfigurationError):
            load_config(overrides=dict(seed=True), environ={})
        with self.assertRaises(ConfigurationError):
            load_config(environ={"VORTEX_THREADS": "many"})

    def test_file_then_flags(self):
        runner = CliRunner()
        with runner.isolated_filesystem():
            with open("run.json", "w") as out:
                json.dump(dict(K=4, n_theta=32, seed=7), out)
            config = load_config("run.json", dict(seed=9, K=None), environ={})

        self.assertEqual((config.K, config.n_theta, config.seed), (4, 32, 9))


class ArtifactsTestCase(TestCase):
    """Tests for staged output files."""

    def test_nothing_written_on_failure(self):
        runner = CliRunner()
        with runner.isolated_filesystem():
            artifacts = Artifacts()
            artifacts.add_report("good.json", dict(a=1))
            artifacts.add_report(os.path.join("missing", "bad.json"), dict(a=2))
            with self.assertRaises(ConfigurationError):
                artifacts.commit()

            self.assertFalse(os.path.exists("good.json"))
            self.assertEqual([f for f in os.listdir(".") if f.endswith(".tmp")], [])


class CommandTestCase(TestCase):
    """Tests for the CLI commands."""

    def setUp(self):
        self.runner = CliRunner(mix_stderr=False)

    def test_profile_command(self):
        with self.runner.isolated_filesystem():
            result = self.runner.invoke(cli, ["profile", "--out", "p.csv",
                                              "--report", "p.json"] + SMALL)
            self.assertEqual(result.exit_code, 0, result.output)
            self.assertIn("alpha = 0.58", result.output)

            with open("p.json") as src:
                report = json.load(src)
            self.assertEqual(report["config"]["per_decade"], 32)
            self.assertAlmostEqual(report["alpha"], 0.5831894958603, places=4)

            table = read_profile_csv("p.csv")
            self.assertAlmostEqual(table.alpha, report["alpha"], places=9)

    def test_profile_is_deterministic(self):
        with self.runner.isolated_filesystem():
            self.runner.invoke(cli, ["profile", "--out", "a.csv"] + SMALL)
            self.runner.invoke(cli, ["profile", "--out", "b.csv"] + SMALL)
            with open("a.csv", "rb") as a, open("b.csv", "rb") as b:
                self.assertEqual(a.read(), b.read())

    def test_missing_rhs(self):
        with self.runner.isolated_filesystem():
            result = self.runner.invoke(cli, ["solve-mode", "--k", "2", "--rhs", "nope.csv",
                                              "--out", "psi.csv"] + SMALL)

            self.assertEqual(result.exit_code, 3)
            self.assertEqual(error_report(result)["error"], "DataError")
            self.assertFalse(os.path.exists("psi.csv"))

    def test_bad_angle_count(self):
        with self.runner.isolated_filesystem():
            result = self.runner.invoke(cli, ["profile", "--out", "p.csv",
                                              "--n-theta", "100"] + SMALL)

            self.assertEqual(result.exit_code, 2)
            self.assertFalse(os.path.exists("p.csv"))

    def test_unknown_config_key(self):
        with self.runner.isolated_filesystem():
            with open("run.json", "w") as out:
                json.dump(dict(colour="blue"), out)
            result = self.runner.invoke(cli, ["profile", "--out", "p.csv",
                                              "--config", "run.json"])

            self.assertEqual(result.exit_code, 2)
            self.assertIn("colour", error_report(result)["details"]["keys"])

    def test_kernel_command(self):
        with self.runner.isolated_filesystem():
            result = self.runner.invoke(cli, ["kernel", "--mode", "2", "--out", "z.csv",
                                              "--report", "z.json"] + SMALL)
            self.assertEqual(result.exit_code, 0, result.output)

            table = read_table("z.csv", required=("r", "z11", "z12", "z11p", "z12p",
                                                  "z42", "z31p"))
            self.assertTrue(np.all(table["z31"] > 0))
            self.assertEqual(list(table)[:5], ["r", "z11", "z12", "z11p", "z12p"])
            with open("z.json") as src:
                report = json.load(src)
            self.assertAlmostEqual(abs(report["kappa"]), 1.0, delta=1e-3)

    def test_solve_mode_command(self):
        with self.runner.isolated_filesystem():
            self.runner.invoke(cli, ["profile", "--out", "p.csv"] + SMALL)
            r = read_table("p.csv")["r"]
            h1, h2 = family_shapes(r, 2, 1.0, 1.0, 1.0)
            write_table("h.csv", dict(r=r, h1=h1, h2=h2))

            result = self.runner.invoke(cli, [
                "solve-mode", "--k", "2", "--l", "1", "--rhs", "h.csv", "--out", "psi.csv",
                "--head-exponent", "2", "--profile", "p.csv", "--report", "psi.json",
                "--dirichlet", "10"] + SMALL)
            self.assertEqual(result.exit_code, 0, result.output)

            psi = read_table("psi.csv", required=("r", "psi1", "psi2", "psi1p", "psi2p"))
            self.assertAlmostEqual(psi["r"][-1], 10.0, places=9)
            with open("psi.json") as src:
                report = json.load(src)
            self.assertLessEqual(report["diagnostics"]["residual"], 1e-4)

    def test_solve_command(self):
        with self.runner.isolated_filesystem():
            self.runner.invoke(cli, ["profile", "--out", "p.csv"] + SMALL)
            r = read_table("p.csv")["r"]
            rng = np.random.default_rng(5)
            write_polar_csv("h.csv", PolarField(r, compact_field(rng, r, 32)))

            result = self.runner.invoke(cli, [
                "solve", "--rhs", "h.csv", "--out", "phi.csv", "--project-orthogonal",
                "--profile", "p.csv", "--report", "phi.json"] + SMALL + FEW_MODES)
            self.assertEqual(result.exit_code, 0, result.output)
            self.assertIn("||phi||_* / ||h||_** =", result.output)

            phi = read_polar_csv("phi.csv")
            self.assertEqual(phi.values.shape, (r.size, 32))
            with open("phi.json") as src:
                report = json.load(src)
            self.assertTrue(report["project"])
            self.assertGreater(report["estimate"]["ratio"], 0.0)

    def test_solve_rejects_off_grid_field(self):
        with self.runner.isolated_filesystem():
            self.runner.invoke(cli, ["profile", "--out", "p.csv"] + SMALL)
            r = np.linspace(0.5, 20.0, 40)
            write_polar_csv("h.csv", PolarField(r, np.ones((40, 32), dtype=complex)))

            result = self.runner.invoke(cli, ["solve", "--rhs", "h.csv", "--out", "phi.csv",
                                              "--profile", "p.csv"] + SMALL + FEW_MODES)
            self.assertEqual(result.exit_code, 3)
            self.assertFalse(os.path.exists("phi.csv"))

    def test_oracle_command(self):
        with self.runner.isolated_filesystem():
            self.runner.invoke(cli, ["profile", "--out", "p.csv"] + SMALL)
            table = read_profile_csv("p.csv")
            system = assemble(table, 4.0, 32)
            write_polar_csv("h.csv", disk_rhs(table, system, {(2, 1): (1.0, 1.0, 1.0)}))

            result = self.runner.invoke(cli, ["oracle", "--R", "4", "--n", "32", "--rhs",
                                              "h.csv", "--out", "phi.csv", "--profile",
                                              "p.csv"] + SMALL)
            self.assertEqual(result.exit_code, 0, result.output)

            phi = read_polar_csv("phi.csv")
            self.assertEqual(phi.values.shape, (32, 32))
            np.testing.assert_allclose(phi.values[-1], 0.0, atol=1e-14)

    def test_oracle_radius_beyond_profile(self):
        with self.runner.isolated_filesystem():
            self.runner.invoke(cli, ["profile", "--out", "p.csv"] + SMALL)
            table = read_profile_csv("p.csv")
            system = assemble(table, 4.0, 32)
            write_polar_csv("h.csv", disk_rhs(table, system, {(1, 1): (1.0, 1.0, 1.0)}))

            result = self.runner.invoke(cli, ["oracle", "--R", "31", "--n", "256", "--rhs",
                                              "h.csv", "--out", "phi.csv", "--profile",
                                              "p.csv"] + SMALL)
            self.assertEqual(result.exit_code, 2)


class VerifyCommandTestCase(TestCase):
    """Quick acceptance run on a small configuration, run twice."""

    @classmethod
    def setUpClass(cls):
        cls.runner = CliRunner(mix_stderr=False)
        cls.outputs = []
        with cls.runner.isolated_filesystem():
            for name in ("a.json", "b.json"):
                result = cls.runner.invoke(cli, ["verify", "--quick", "--out", name]
                                           + SMALL + FEW_MODES)
                with open(name, "rb") as src:
                    cls.outputs.append((result, src.read()))

    def test_every_criterion_reported(self):
        result, raw = self.outputs[0]
        payload = json.loads(raw)
        names = [c["name"] for c in payload["criteria"]]

        self.assertEqual(len(names), 11)
        self.assertIn("kernel_integrity", names)
        self.assertTrue(payload["quick"])
        self.assertEqual(result.exit_code, 0 if payload["passed"] else 5)
        for name in names:
            self.assertIn(name, result.output)

    def test_summary_is_deterministic(self):
        self.assertEqual(self.outputs[0][1], self.outputs[1][1])


class SummaryTestCase(TestCase):
    def test_summary_shape(self):
        results = [CriterionResult("a", True, dict(x=1.0)),
                   CriterionResult("b", False, dict(error="boom"))]
        payload = summary(RunConfig(), results, quick=True)

        self.assertFalse(payload["passed"])
        self.assertTrue(payload["quick"])
        self.assertEqual([c["name"] for c in payload["criteria"]], ["a", "b"])
        self.assertEqual(payload["config"]["K"], 16)
