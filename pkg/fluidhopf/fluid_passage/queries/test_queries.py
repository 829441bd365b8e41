# Copyright (c) 2026, fluidhopf contributors
# See license.txt

import unittest

import numpy as np

from fluidhopf.exceptions import IllConditioned, NotConstantFamily
from fluidhopf.fluid_passage.model.model import (
    ConstantFamily,
    FluidModel,
    FourierPolynomialFamily,
    FourierTerm,
    StateSpace,
)
from fluidhopf.fluid_passage.passage_pde.passage_pde import BoundaryFunction, GridParams
from fluidhopf.fluid_passage.queries.queries import (
    _s_points,
    composition_residual,
    frozen_deviation,
    homog_crosscheck,
    invert_laplace,
    laplace_passage_table,
    passage_distribution,
    stehfest_nodes,
    stehfest_weights,
)

SPACE = StateSpace(("+1", "-1"), (1.0, -1.0))
FLIP = np.array([[-1.0, 1.0], [1.0, -1.0]])
ROOT3 = np.sqrt(3.0)
GRID = GridParams(ds=0.01, da=0.01)


def flip_model():
    return FluidModel(SPACE, ConstantFamily(FLIP))


def still_model():
    return FluidModel(SPACE, ConstantFamily(np.zeros((2, 2))))


class TestQueries(unittest.TestCase):
    def test_laplace_table_homogeneous(self):
        table = laplace_passage_table(flip_model(), 1.0, 1.0, "plus", GRID)
        self.assertEqual(table.from_states, (0, 1))
        self.assertEqual(table.to_states, (0,))
        self.assertEqual(table.values.shape, (len(table.s_nodes), 2, 1))
        at_zero = table.at(0.0)
        self.assertAlmostEqual(at_zero[0, 0], np.exp(-ROOT3), delta=0.01)
        self.assertAlmostEqual(at_zero[1, 0], (2 - ROOT3) * np.exp(-ROOT3), delta=0.01)
        self.assertGreaterEqual(table.values.min(), 0.0)
        self.assertLessEqual(table.values.sum(axis=-1).max(), 1.0 + 1e-9)

    def test_laplace_table_decreases_with_discount(self):
        grid = GridParams(ds=0.05, da=0.05)
        slow = laplace_passage_table(flip_model(), 1.0, 1.0, "plus", grid)
        fast = laplace_passage_table(flip_model(), 2.0, 1.0, "plus", grid)
        for s in (0.0, 1.0, 5.0):
            self.assertTrue((fast.at(s) <= slow.at(s) + 1e-12).all())
            self.assertTrue((fast.at(s) < slow.at(s)).all())

    def test_laplace_table_keeps_boundary_support(self):
        grid = GridParams(ds=0.05, da=0.05)
        self.assertEqual(laplace_passage_table(flip_model(), 1.0, 1.0, "plus", grid).eta, 20.0)
        table = laplace_passage_table(flip_model(), 1.0, 1.0, "plus", grid, eta=5.0)
        self.assertEqual(table.eta, 5.0)
        self.assertAlmostEqual(table.s_nodes[-1], 5.0)
        np.testing.assert_allclose(_s_points(table, (0.0, 0.1, 0.25)), [0.0, 0.5, 1.25])

    def test_laplace_table_rows(self):
        table = laplace_passage_table(still_model(), 1.0, 1.0, "minus", GridParams(ds=0.1, da=0.1))
        rows = list(table.rows(SPACE.labels))
        self.assertEqual(len(rows), len(table.s_nodes) * 2)
        self.assertEqual(rows[0][1:3], ["+1", "-1"])

    def test_laplace_table_rejects_nonpositive_c(self):
        with self.assertRaises(ValueError):
            laplace_passage_table(flip_model(), 0.0, 1.0)

    def test_crosscheck_without_switching_is_exact(self):
        report = homog_crosscheck(still_model(), 1.0, 1.0)
        self.assertTrue(report["ok"])
        self.assertLessEqual(report["deviation"], 1e-12)

    def test_crosscheck_flip(self):
        report = homog_crosscheck(flip_model(), 1.0, 1.0, GRID)
        self.assertTrue(report["ok"], report["message"])
        self.assertAlmostEqual(report["tolerance"], 10 * (report["ds"] + report["da"]))
        self.assertLessEqual(report["deviation"], 0.02)

    def test_crosscheck_rejects_time_dependence(self):
        family = FourierPolynomialFamily(FLIP, fourier=[FourierTerm(0.5 * FLIP, 1.0, 0.0)], bound_K=1.5)
        with self.assertRaises(NotConstantFamily):
            homog_crosscheck(FluidModel(SPACE, family), 1.0, 1.0, GRID)

    def test_frozen_deviation_constant(self):
        report = frozen_deviation(flip_model(), 1.0, 1.0, GRID, s_points=(0.0, 2.0))
        self.assertEqual(len(report["deviation"]), 2)
        self.assertLessEqual(report["max"], 0.02)

    def test_composition_residual(self):
        g = BoundaryFunction.exp_indicator(1.0, 0, eta=8.0)
        residual = composition_residual(flip_model(), g, 1.0, GRID)
        self.assertEqual(residual.states, (1,))
        self.assertLessEqual(residual.max_abs, 0.05)

    def test_stehfest_weights(self):
        weights = stehfest_weights(12)
        self.assertAlmostEqual(weights[0], -1.0 / 60.0, places=12)
        self.assertAlmostEqual(weights[-1], 359251.2, places=4)
        self.assertAlmostEqual(float(weights.sum()), 0.0, delta=1e-4)
        with self.assertRaises(ValueError):
            stehfest_weights(7)

    def test_stehfest_nodes(self):
        np.testing.assert_allclose(stehfest_nodes(2.0, 8), np.arange(1, 9) * np.log(2.0) / 2.0)
        with self.assertRaises(ValueError):
            stehfest_nodes(0.0)

    def test_invert_exponential(self):
        density = invert_laplace(lambda c: 1.0 / (1.0 + c), 1.0)
        self.assertAlmostEqual(float(density), np.exp(-1.0), delta=0.05 * np.exp(-1.0))
        cdf = invert_laplace(lambda c: 1.0 / (1.0 + c), 1.0, kind="cdf")
        self.assertAlmostEqual(float(cdf), 1.0 - np.exp(-1.0), delta=0.01)

    def test_invert_point_mass_cdf(self):
        cdf = invert_laplace(lambda c: np.exp(-c), 2.0, kind="cdf")
        self.assertAlmostEqual(float(cdf), 1.0, delta=0.05)

    def test_invert_matrix_samples(self):
        nodes = stehfest_nodes(1.0)
        samples = np.stack([np.array([[1.0 / (1.0 + c), 0.0]]) for c in nodes])
        out = invert_laplace(samples, 1.0)
        self.assertEqual(out.shape, (1, 2))
        self.assertEqual(out[0, 1], 0.0)

    def test_invert_zero(self):
        self.assertEqual(float(invert_laplace(np.zeros(12), 3.0, kind="cdf")), 0.0)

    def test_invert_flags_oscillation(self):
        samples = np.zeros(12)
        samples[-1] = 1.0
        with self.assertRaises(IllConditioned):
            invert_laplace(samples, 1.0)

    def test_invert_needs_enough_samples(self):
        with self.assertRaises(ValueError):
            invert_laplace(np.ones(10), 1.0)
        with self.assertRaises(ValueError):
            invert_laplace(np.ones(6), 1.0, order=6)
        with self.assertRaises(ValueError):
            invert_laplace(np.ones(12), 1.0, kind="survival")

    def test_passage_distribution_at_the_level(self):
        table = passage_distribution(still_model(), 0.0, "plus", 0.0, (1.0, 2.0), GridParams(ds=0.1, da=0.1))
        self.assertEqual(table.values.shape, (2, 2, 1))
        np.testing.assert_allclose(table.values[:, 0, 0], 1.0, atol=1e-6)
        np.testing.assert_array_equal(table.values[:, 1, 0], 0.0)
        self.assertEqual(len(list(table.rows(SPACE.labels))), 4)
