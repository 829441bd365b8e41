# Copyright (c) 2026, fluidhopf contributors
# See license.txt

import unittest

import numpy as np

from fluidhopf.exceptions import DerivativeUnavailable, DomainError, GridError
from fluidhopf.fluid_passage.model.model import (
    ConstantFamily,
    FluidModel,
    FourierPolynomialFamily,
    FourierTerm,
    StateSpace,
)
from fluidhopf.fluid_passage.passage_pde.passage_pde import (
    BoundaryFunction,
    GridParams,
    apply_G,
    check_identity_whd,
    continuity_bound,
    extract_J,
    extract_level,
    extract_P,
    make_grid,
    modulus_of_continuity,
    solve_passage,
    solve_passage_minus,
)

SPACE = StateSpace(("+1", "-1"), (1.0, -1.0))
FLIP = np.array([[-1.0, 1.0], [1.0, -1.0]])
ROOT3 = np.sqrt(3.0)
ETA = 8.0
GRID = GridParams(ds=0.01, da=0.01)


def flip_model():
    return FluidModel(SPACE, ConstantFamily(FLIP))


def sinusoidal_model():
    family = FourierPolynomialFamily(FLIP, fourier=[FourierTerm(0.5 * FLIP, 1.0, 0.0)], bound_K=1.5)
    return FluidModel(SPACE, family)


class TestPassagePDE(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.g = BoundaryFunction.exp_indicator(1.0, 0, eta=ETA)
        cls.F = solve_passage(flip_model(), cls.g, 1.0, GRID)

    def test_grid_has_zero_and_level_nodes(self):
        grid = make_grid(flip_model(), self.g, 0.7, GridParams(ds=0.01, da=0.03))
        self.assertEqual(grid.a_nodes[-1], 0.7)
        self.assertEqual(grid.a_nodes[grid.zero_index], 0.0)
        self.assertLessEqual(grid.a_min, 0.7 - ETA)
        self.assertEqual(grid.s_max, ETA)

    def test_boundary_row_is_exact(self):
        s = self.F.grid.s_nodes
        np.testing.assert_array_equal(self.F.at_level[:, 0], self.g.evaluate(s, 0))

    def test_homogeneous_values(self):
        P = extract_P(self.F)
        J = extract_J(self.F)
        self.assertEqual(P.states, (0,))
        self.assertEqual(J.states, (1,))
        for s in (0.0, 1.0):
            self.assertAlmostEqual(P.at(s, 0), np.exp(-s) * np.exp(-ROOT3), delta=0.01)
            self.assertAlmostEqual(J.at(s, 1), np.exp(-s) * (2 - ROOT3), delta=0.01)

    def test_positive_contraction(self):
        self.assertGreaterEqual(self.F.values.min(), 0.0)
        self.assertLessEqual(self.F.values.max(), self.g.bound + 1e-12)
        self.assertTrue(np.isfinite(self.F.values).all())

    def test_support_preserved(self):
        F = solve_passage(sinusoidal_model(), self.g, 1.0, GridParams(ds=0.01, da=0.01, s_max=10.0))
        late = F.grid.s_nodes >= ETA
        self.assertTrue(late.sum() > 100)
        self.assertTrue((extract_J(F).values[late] == 0).all())
        self.assertTrue((extract_P(F).values[late] == 0).all())

    def test_level_zero_returns_boundary_data(self):
        F = solve_passage(sinusoidal_model(), self.g, 0.0, GRID)
        P = extract_P(F)
        np.testing.assert_array_equal(P.column(0), self.g.evaluate(F.grid.s_nodes, 0))

    def test_zero_boundary_data(self):
        zero = BoundaryFunction.zero(states=(0,))
        F = solve_passage(sinusoidal_model(), zero, 1.0, GRID)
        self.assertFalse(F.values.any())
        self.assertFalse(extract_J(F).values.any())
        G = apply_G(sinusoidal_model(), zero, extract_J(F))
        self.assertFalse(G.values.any())

    def test_minus_side_mirrors_plus_side(self):
        mirrored = solve_passage_minus(flip_model(), BoundaryFunction.exp_indicator(1.0, 1, eta=ETA), 1.0, GRID)
        self.assertEqual(mirrored.side, "minus")
        self.assertEqual(extract_J(mirrored).states, (0,))
        np.testing.assert_allclose(extract_J(mirrored).values, extract_J(self.F).values, atol=1e-14)
        np.testing.assert_allclose(extract_P(mirrored).values, extract_P(self.F).values, atol=1e-14)

    def test_grid_errors(self):
        with self.assertRaises(DomainError):
            solve_passage(flip_model(), self.g, 1.0, GridParams(ds=0.01, da=0.01, a_min=-1.0))
        with self.assertRaises(GridError):
            solve_passage(flip_model(), self.g, 1.0, GridParams(ds=2.0, da=0.01))
        with self.assertRaises(GridError):
            solve_passage(flip_model(), self.g, 1.0, GridParams(ds=0.01, da=0.01, s_max=4.0))

    def test_apply_G_homogeneous(self):
        G = apply_G(flip_model(), self.g, extract_J(self.F))
        for s in (0.0, 0.5, 2.0):
            self.assertAlmostEqual(G.at(s, 0), -ROOT3 * np.exp(-s), delta=0.02)

    def test_apply_G_needs_smooth_data(self):
        s = np.linspace(0, ETA, 11)
        rough = BoundaryFunction.table(s, np.exp(-s), (0,))
        with self.assertRaises(DerivativeUnavailable):
            apply_G(flip_model(), rough, extract_J(self.F))

    def test_derivative_identity(self):
        J = extract_J(self.F)
        G = apply_G(flip_model(), self.g, J)
        residual = check_identity_whd(flip_model(), self.g, J, G, GRID)
        self.assertEqual(residual.states, (1,))
        self.assertLessEqual(residual.max_abs, 5 * (GRID.ds + GRID.da))

    def test_semigroup(self):
        model = sinusoidal_model()
        half = solve_passage(model, self.g, 0.5, GRID)
        chained = solve_passage(model, BoundaryFunction.table(half.grid.s_nodes, extract_P(half).values, (0,)), 0.5, GRID)
        direct = solve_passage(model, self.g, 1.0, GRID)
        np.testing.assert_allclose(extract_P(chained).values, extract_P(direct).values, atol=2e-3)

    def test_level_table_covers_all_states(self):
        table = extract_level(self.F)
        self.assertEqual(table.states, (0, 1))
        self.assertEqual(table.values.shape, (len(self.F.grid.s_nodes), 2))

    def test_continuity_surrogate(self):
        delta = 0.05
        self.assertLessEqual(modulus_of_continuity(self.F, delta), continuity_bound(flip_model(), self.g, delta))

    def test_exp_indicator_cutoff(self):
        g = BoundaryFunction.exp_indicator(2.0, 0)
        self.assertEqual(g.support, 10.0)
        self.assertAlmostEqual(float(g.evaluate(1.0, 0)), np.exp(-2.0), places=15)
        self.assertEqual(float(g.evaluate(10.0, 0)), 0.0)
        self.assertEqual(float(g.evaluate(1.0, 1)), 0.0)
        # C1 at both ends of the cutoff window
        self.assertAlmostEqual(float(g.slope(9.0, 0)), -2.0 * np.exp(-18.0), places=15)
        self.assertAlmostEqual(float(g.slope(10.0 - 1e-9, 0)), 0.0, places=12)
