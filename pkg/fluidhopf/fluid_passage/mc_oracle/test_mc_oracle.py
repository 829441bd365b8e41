# Copyright (c) 2026, fluidhopf contributors
# See license.txt

import unittest

import numpy as np
from scipy import stats

from fluidhopf.exceptions import HazardError
from fluidhopf.fluid_passage.evolution.evolution import evolution_matrix
from fluidhopf.fluid_passage.mc_oracle.mc_oracle import (
    COFFIN,
    PathSample,
    estimate_expectation,
    passage_functional,
    replica_stream,
    sample_holding_times,
    sample_jump_times,
    sample_path,
    state_distribution,
)
from fluidhopf.fluid_passage.model.model import (
    CallbackFamily,
    ConstantFamily,
    FluidModel,
    FourierPolynomialFamily,
    FourierTerm,
    StateSpace,
)
from fluidhopf.fluid_passage.passage_pde.passage_pde import BoundaryFunction

SPACE = StateSpace(("+1", "-1"), (1.0, -1.0))
FLIP = np.array([[-1.0, 1.0], [1.0, -1.0]])
ABSORBING = np.array([[-1.0, 1.0], [0.0, 0.0]])


def sinusoidal_model():
    family = FourierPolynomialFamily(FLIP, fourier=[FourierTerm(0.5 * FLIP, 1.0, 0.0)], bound_K=1.5)
    return FluidModel(SPACE, family)


class TestMCOracle(unittest.TestCase):
    def test_streams_are_reproducible(self):
        a = replica_stream(7, 3).random(5)
        np.testing.assert_array_equal(a, replica_stream(7, 3).random(5))
        self.assertFalse(np.array_equal(a, replica_stream(7, 4).random(5)))

    def test_constant_holding_times_are_exponential(self):
        model = FluidModel(SPACE, ConstantFamily(FLIP))
        for method in ("inversion", "thinning"):
            r = sample_holding_times(model, 0.0, 0, 20_000, seed=1, method=method)
            self.assertGreater(stats.kstest(r, "expon").pvalue, 1e-3, method)

    def test_sinusoidal_holding_times(self):
        model = sinusoidal_model()

        def cdf(r):
            return 1.0 - np.exp(-r - 0.5 * (1.0 - np.cos(r)))

        for method in ("inversion", "thinning"):
            r = sample_holding_times(model, 0.0, 0, 20_000, seed=2, method=method)
            self.assertGreater(stats.kstest(r, cdf).pvalue, 1e-3, method)

    def test_absorbing_state_never_jumps(self):
        model = FluidModel(SPACE, ConstantFamily(ABSORBING))
        path = sample_path(model, 1.0, 1, 5.0, replica_stream(0, 0))
        self.assertEqual(path.jump_times, ())
        self.assertEqual(path.states, (1,))
        self.assertEqual(path.phi_breakpoints, (0.0, -4.0))

    def test_path_structure(self):
        path = sample_path(sinusoidal_model(), 0.0, 0, 10.0, replica_stream(3, 0))
        self.assertEqual(len(path.states), len(path.jump_times) + 1)
        self.assertEqual(len(path.phi_breakpoints), len(path.states) + 1)
        self.assertTrue(all(a != b for a, b in zip(path.states, path.states[1:])))
        self.assertTrue(np.all(np.diff(path.times) > 0))
        for k, state in enumerate(path.states):
            dt = path.times[k + 1] - path.times[k]
            self.assertAlmostEqual(path.phi_breakpoints[k + 1] - path.phi_breakpoints[k], SPACE.v[state] * dt, places=12)

    def test_passage_functional(self):
        path = PathSample(start=(0.0, 0), jump_times=(), states=(0,), horizon=2.0, phi_breakpoints=(0.0, 2.0))
        sample = passage_functional(path, 0.5, "plus")
        self.assertAlmostEqual(sample.tau, 0.5)
        self.assertEqual(sample.hit_state, 0)
        self.assertFalse(sample.censored)
        censored = passage_functional(path, 3.0, "plus")
        self.assertTrue(censored.censored)
        self.assertEqual(censored.hit_state, COFFIN)
        down = PathSample(start=(1.0, 1), jump_times=(2.0,), states=(1, 0), horizon=4.0, phi_breakpoints=(0.0, -1.0, 1.0))
        self.assertAlmostEqual(passage_functional(down, 0.5, "minus").tau, 1.5)
        self.assertAlmostEqual(passage_functional(down, 0.5, "plus").tau, 3.5)

    def test_zero_functional(self):
        estimate = estimate_expectation(sinusoidal_model(), BoundaryFunction.zero((0,)), 0.0, 0, 1.0, n=1000, seed=4)
        self.assertEqual(estimate.mean, 0.0)
        self.assertEqual(estimate.stderr, 0.0)
        self.assertEqual(estimate.bias_bound, 0.0)

    def test_absorbing_chain_passage(self):
        model = FluidModel(SPACE, ConstantFamily(ABSORBING))
        estimate = estimate_expectation(model, BoundaryFunction.indicator((0,)), 0.0, 0, 1.0, n=20_000, seed=5)
        self.assertLessEqual(abs(estimate.mean - np.exp(-1.0)), 4 * estimate.stderr)
        self.assertAlmostEqual(estimate.censor_fraction, 1.0 - estimate.mean, places=12)

    def test_discounted_passage_from_below(self):
        model = FluidModel(SPACE, ConstantFamily(FLIP))
        g = BoundaryFunction.exp_indicator(1.0, 0)
        estimate = estimate_expectation(model, g, 0.0, 1, 0.0, n=20_000, seed=6)
        self.assertLessEqual(abs(estimate.mean - (2 - np.sqrt(3.0))), 4 * estimate.stderr + estimate.bias_bound)
        self.assertAlmostEqual(estimate.bias_bound, np.exp(-20.0))

    def test_deterministic_across_threads(self):
        g = BoundaryFunction.exp_indicator(1.0, 0, eta=10.0)
        kwargs = dict(n=5000, seed=9, block_size=1000)
        serial = estimate_expectation(sinusoidal_model(), g, 0.0, 1, 0.5, threads=1, **kwargs)
        parallel = estimate_expectation(sinusoidal_model(), g, 0.0, 1, 0.5, threads=3, **kwargs)
        self.assertEqual(serial, parallel)
        self.assertEqual(serial, estimate_expectation(sinusoidal_model(), g, 0.0, 1, 0.5, threads=1, **kwargs))

    def test_marginals_match_evolution(self):
        model = sinusoidal_model()
        p, se = state_distribution(model, 0.0, 0, 1.0, 20_000, seed=10)
        exact = evolution_matrix(model, 0.0, 1.0).P[0]
        self.assertTrue((np.abs(p - exact) <= 4 * se).all())

    def test_second_jump_bound(self):
        model = sinusoidal_model()
        K = model.family.bound_K
        times = sample_jump_times(model, 0.0, 0, 20_000, seed=11, count=2)
        for r in (0.05, 0.1):
            hits = times[:, 1] <= r
            p = hits.mean()
            self.assertLessEqual(p, K**2 * r**2 + 3 * np.sqrt(max(p * (1 - p), 1e-12) / len(hits)))

    def test_invalid_rate_mid_run(self):
        family = CallbackFamily(lambda s: np.array([[1.0, -1.0], [0.0, 0.0]]), 2, 1.0)
        with self.assertRaises(HazardError):
            sample_path(FluidModel(SPACE, family), 0.0, 0, 1.0, replica_stream(0, 0))
