# Copyright (c) 2026, fluidhopf contributors
# See license.txt

import unittest

import numpy as np

from fluidhopf.config.settings import parse
from fluidhopf.exceptions import ConfigError
from fluidhopf.fluid_passage.verify.verify import (
    DEFAULT_TOLERANCES,
    FLIP,
    SuiteSettings,
    _battery,
    _closed_form,
    _run_checks,
    jumps_suite,
    random_generator,
    run_suite,
    sinusoidal_model,
)
from fluidhopf.utils import clear_error_log, error_log

SMALL = SuiteSettings(n_paths=4000, n_jumps=4000, battery_size=5, ds=0.02, da=0.02, seed=11, threads=1)


def _config(**sections):
    data = {
        "model": {"states": ["+1", "-1"], "v": [1, -1], "generator": {"kind": "constant", "matrix": FLIP.tolist()}},
    }
    data.update(sections)
    return parse(data)


class TestVerify(unittest.TestCase):
    def test_settings_from_config(self):
        config = _config(
            numerics={"seed": 3, "tolerances": {"std_errors": 5}},
            verify={"n_paths": 1000, "ds": 0.01},
        )
        settings = SuiteSettings.from_config(config)
        self.assertEqual(settings.n_paths, 1000)
        self.assertEqual(settings.n_jumps, 100000)
        self.assertEqual(settings.ds, 0.01)
        self.assertEqual(settings.da, 0.001)
        self.assertEqual(settings.seed, 3)
        self.assertEqual(settings.tolerance("std_errors"), 5.0)
        self.assertEqual(settings.tolerance("ks_level"), DEFAULT_TOLERANCES["ks_level"])
        self.assertEqual(settings.grid.ds, 0.01)
        self.assertEqual(settings.evolution_step, 0.001)
        self.assertEqual(SuiteSettings.from_config(_config(numerics={"evolution_step": 0.01})).evolution_step, 0.01)

    def test_settings_reject_unknown_tolerance(self):
        with self.assertRaises(ConfigError):
            SuiteSettings(tolerances={"identity_ration": 1.0})
        self.assertEqual(SuiteSettings().tolerance("identity_ratio"), 1.8)

    def test_random_generator(self):
        rng = np.random.default_rng(0)
        for m in (2, 5, 8):
            matrix, space = random_generator(rng, m)
            self.assertEqual(matrix.shape, (m, m))
            np.testing.assert_allclose(matrix.sum(axis=1), 0.0, atol=1e-12)
            off = matrix - np.diag(np.diag(matrix))
            self.assertGreaterEqual(off.min(), 0.0)
            self.assertTrue(space.E_plus)
            self.assertTrue(space.E_minus)

    def test_sinusoidal_model(self):
        model = sinusoidal_model()
        np.testing.assert_allclose(model.generator(np.pi / 2), 1.5 * FLIP)
        np.testing.assert_allclose(model.generator(0.0), FLIP)

    def test_closed_form(self):
        checks = _closed_form(SMALL)
        self.assertEqual([c["name"] for c in checks], ["closed_form_pi_plus", "closed_form_q_plus"])
        self.assertTrue(all(c["ok"] for c in checks))

    def test_battery(self):
        checks = {c["name"]: c for c in _battery(SMALL)}
        self.assertTrue(checks["battery_failures"]["ok"])
        self.assertTrue(checks["pi_entries_in_unit_interval"]["ok"])
        self.assertTrue(checks["q_offdiagonal_nonnegative"]["ok"])
        self.assertLess(checks["factorization_residual"]["measured"], 1e-8)

    def test_failing_part_is_recorded(self):
        clear_error_log()

        def broken():
            raise ValueError("no data")

        report = _run_checks("demo", [("fine", lambda: [{"ok": True, "name": "x", "measured": 0.0, "tolerance": 1.0, "message": ""}]), ("broken", broken)])
        self.assertFalse(report["ok"])
        self.assertEqual(report["name"], "demo")
        failed = report["checks"][1]
        self.assertEqual(failed["name"], "broken")
        self.assertIsNone(failed["measured"])
        self.assertIn("ValueError: no data", failed["message"])
        self.assertEqual(error_log()[-1]["title"], "Verify Suite")

    def test_jumps_suite_runs(self):
        report = jumps_suite(SMALL)
        self.assertEqual(report["name"], "jumps")
        names = [c["name"] for c in report["checks"]]
        self.assertIn("ks_sinusoidal_thinning", names)
        self.assertIn("marginals_vs_evolution", names)
        for check in report["checks"]:
            self.assertIsNotNone(check["measured"], check["message"])

    def test_run_suite(self):
        self.assertEqual(run_suite("jumps", SMALL)["name"], "jumps")
        with self.assertRaises(ConfigError):
            run_suite("everything", SMALL)
