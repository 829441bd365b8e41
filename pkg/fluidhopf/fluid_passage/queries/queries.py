# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Laplace-transform passage tables assembled from boundary solves, the
constant-generator cross-check, and Gaver-Stehfest inversion.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from math import factorial

import numpy as np

from fluidhopf.exceptions import IllConditioned, NotConstantFamily
from fluidhopf.fluid_passage.homog_wh.homog_wh import factorize, frozen_factorization, homog_passage_matrix
from fluidhopf.fluid_passage.passage_pde.passage_pde import (
    BoundaryFunction,
    GridParams,
    IdentityResidual,
    extract_J,
    extract_P,
    extract_level,
    solve_passage,
)
from fluidhopf.utils import logger, thread_count, throw

LN2 = np.log(2.0)
DEFAULT_ORDER = 12
OSCILLATION_RTOL = 0.1
OSCILLATION_ATOL = 1e-9
# tables read only the a = 0 and level columns
TABLE_STRIDE = 1000


@dataclass(frozen=True)
class LaplaceTable:
    """
    values[n, i, k] = E_{s_n, i}[exp(-c (tau - s_n)) 1{X_tau = to_states[k]}].
    """

    c: float
    level: float
    sign: str
    s_nodes: np.ndarray
    from_states: tuple
    to_states: tuple
    values: np.ndarray
    ds: float = 0.0
    da: float = 0.0
    eta: float = 0.0

    def at(self, s):
        """Table at time s, linearly interpolated between s-nodes."""
        n = len(self.s_nodes)
        flat = self.values.reshape(n, -1)
        out = np.array([np.interp(s, self.s_nodes, flat[:, k]) for k in range(flat.shape[1])])
        return out.reshape(self.values.shape[1:])

    def rows(self, labels):
        for n, s in enumerate(self.s_nodes):
            for i in self.from_states:
                for k, j in enumerate(self.to_states):
                    yield [float(s), labels[i], labels[j], float(self.values[n, i, k])]


@dataclass(frozen=True)
class DistributionTable:
    s: float
    sign: str
    level: float
    times: np.ndarray
    from_states: tuple
    to_states: tuple
    values: np.ndarray

    def rows(self, labels):
        for n, t in enumerate(self.times):
            for i in self.from_states:
                for k, j in enumerate(self.to_states):
                    yield [float(t), labels[i], labels[j], float(self.values[n, i, k])]


def _table_grid(grid):
    if grid is None:
        return GridParams(store_stride=TABLE_STRIDE)
    if isinstance(grid, GridParams):
        return replace(grid, store_stride=max(grid.store_stride, TABLE_STRIDE))
    return grid


def _hit_class(model, sign):
    return model.state_space.E_plus if sign == "plus" else model.state_space.E_minus


def _map_ordered(fn, items, threads):
    threads = thread_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def laplace_passage_table(model, c, level, sign="plus", grid=None, threads=None, eta=None):
    """
    One boundary solve per hit state j with g = exp(-c s) 1{j}; F(s, i, 0)
    divided by exp(-c s) gives the transform from every start state i.
    """
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    targets = _hit_class(model, sign)
    grid = _table_grid(grid)

    boundaries = [BoundaryFunction.exp_indicator(c, j, eta) for j in targets]

    def solve(g):
        return solve_passage(model, g, level, grid, side=sign)

    solutions = _map_ordered(solve, boundaries, threads)
    s_nodes = solutions[0].grid.s_nodes
    scale = np.exp(c * s_nodes)[:, None]
    values = np.stack([extract_level(F).values * scale for F in solutions], axis=-1)
    values.setflags(write=False)
    logger("queries").info(
        "laplace_passage_table: sign=%s c=%g level=%g targets=%d", sign, c, level, len(targets)
    )
    return LaplaceTable(
        c=float(c),
        level=float(level),
        sign=sign,
        s_nodes=s_nodes,
        from_states=tuple(range(model.m)),
        to_states=tuple(targets),
        values=values,
        ds=solutions[0].grid.ds,
        da=solutions[0].grid.da,
        eta=boundaries[0].support,
    )


def _homog_blocks(fact, state_space, level, sign):
    """Closed-form transform matrix, rows in original state order."""
    targets = state_space.E_plus if sign == "plus" else state_space.E_minus
    others = state_space.E_minus if sign == "plus" else state_space.E_plus
    expected = np.zeros((state_space.m, len(targets)))
    expected[list(targets)] = homog_passage_matrix(fact, level, sign, sign)
    other_side = "minus" if sign == "plus" else "plus"
    expected[list(others)] = homog_passage_matrix(fact, level, sign, other_side)
    return expected


def _s_points(table, fractions):
    return sorted({float(min(f * table.eta, table.s_nodes[-1])) for f in fractions})


def homog_crosscheck(model, c, level, grid=None, s_fractions=(0.0, 0.1, 0.25), threads=None):
    """
    Largest deviation between the solver tables and the closed-form
    transform matrices, both signs, at a few s-points.
    """
    if not model.family.is_constant:
        throw("homog_crosscheck requires a constant generator family", NotConstantFamily, "Homogeneous Crosscheck")
    fact = factorize(model.generator(0.0), model.state_space, c)
    deviation = 0.0
    ds = da = 0.0
    for sign in ("plus", "minus"):
        table = laplace_passage_table(model, c, level, sign, grid, threads)
        expected = _homog_blocks(fact, model.state_space, level, sign)
        for s in _s_points(table, s_fractions):
            deviation = max(deviation, float(np.abs(table.at(s) - expected).max()))
        ds, da = max(ds, table.ds), max(da, table.da)
    tolerance = 10.0 * (ds + da)
    ok = deviation <= tolerance
    message = f"deviation {deviation:.3g} {'within' if ok else 'exceeds'} tolerance {tolerance:.3g}"
    logger("queries").info("homog_crosscheck: c=%g level=%g %s", c, level, message)
    return {"ok": ok, "deviation": deviation, "tolerance": tolerance, "ds": ds, "da": da, "message": message}


def frozen_deviation(model, c, level, grid=None, s_points=(0.0,), sign="plus", threads=None):
    """
    Gap between the true transform table and the closed form of the frozen
    generator Lambda_s, per s-point.
    """
    table = laplace_passage_table(model, c, level, sign, grid, threads)
    gaps = []
    for s in s_points:
        fact = frozen_factorization(model, c, s)
        gaps.append(float(np.abs(table.at(s) - _homog_blocks(fact, model.state_space, level, sign)).max()))
    return {"s_points": list(s_points), "deviation": gaps, "max": max(gaps)}


def composition_residual(model, g, level, grid=None, side="plus"):
    """
    Start values F(s, i, 0) on the non-hit class against J applied to the
    level-crossing table P_level g.
    """
    grid = _table_grid(grid)
    F = solve_passage(model, g, level, grid, side=side)
    P = extract_P(F)
    chained = solve_passage(model, BoundaryFunction.table(P.s_nodes, P.values, P.states), 0.0, grid, side=side)
    J = extract_J(chained)
    direct = extract_level(F).values[:, list(J.states)]
    table = direct - J.values
    return IdentityResidual(F.grid.s_nodes, J.states, table, float(np.abs(table).max()))


@lru_cache(maxsize=None)
def stehfest_weights(order=DEFAULT_ORDER):
    """
    Gaver-Stehfest weights V_1 ... V_N for even N.
    """
    if order % 2 or order < 2:
        raise ValueError(f"Stehfest order must be a positive even number, got {order}")
    half = order // 2
    weights = []
    for k in range(1, order + 1):
        total = 0.0
        for j in range((k + 1) // 2, min(k, half) + 1):
            total += (j**half * factorial(2 * j)) / (
                factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k)
            )
        weights.append((-1) ** (k + half) * total)
    out = np.array(weights)
    out.setflags(write=False)
    return out


def stehfest_nodes(t, order=DEFAULT_ORDER):
    """Transform arguments c_k = k ln2 / t, k = 1 ... N."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    return np.arange(1, order + 1) * LN2 / t


def _stehfest_sum(values, t, order):
    weights = stehfest_weights(order)
    return LN2 / t * np.tensordot(weights, values[:order], axes=(0, 0))


def invert_laplace(samples, t, kind="density", order=DEFAULT_ORDER):
    """
    Density (or CDF) at t of a law whose transform was sampled at
    ``stehfest_nodes(t, order)``. ``samples`` is an array whose first axis
    runs over the nodes, or a callable c -> value.
    """
    if kind not in ("density", "cdf"):
        raise ValueError(f"kind must be 'density' or 'cdf', got {kind!r}")
    if order < 8:
        raise ValueError(f"need at least 8 transform samples, got order {order}")
    nodes = stehfest_nodes(t, order)
    if callable(samples):
        values = np.array([samples(c) for c in nodes], dtype=float)
    else:
        values = np.asarray(samples, dtype=float)
    if len(values) < order:
        raise ValueError(f"{len(values)} transform samples for Stehfest order {order}")
    values = values[:order]
    if kind == "cdf":
        values = values / nodes.reshape((-1,) + (1,) * (values.ndim - 1))

    estimate = _stehfest_sum(values, t, order)
    coarse = _stehfest_sum(values, t, order - 2)
    gap = np.abs(estimate - coarse)
    limit = OSCILLATION_RTOL * np.maximum(np.abs(estimate), np.abs(coarse)) + OSCILLATION_ATOL
    if (gap > limit).any():
        throw(
            f"Stehfest orders {order} and {order - 2} disagree by {float(np.max(gap)):.3g} at t={t:g}",
            IllConditioned,
            "Laplace Inversion",
        )
    return estimate


def passage_distribution(model, level, sign, s, times, grid=None, order=DEFAULT_ORDER, threads=None):
    """
    P_{s,i}(tau <= s + t, X_tau = j) for each t, by inverting transform
    tables computed at the Stehfest nodes of t.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    targets = _hit_class(model, sign)
    out = np.empty((len(times), model.m, len(targets)))
    for n, t in enumerate(times):
        samples = np.stack([
            laplace_passage_table(model, c, level, sign, grid, threads).at(s) for c in stehfest_nodes(t, order)
        ])
        out[n] = np.clip(invert_laplace(samples, t, "cdf", order), 0.0, 1.0)
    return DistributionTable(
        s=float(s),
        sign=sign,
        level=float(level),
        times=times,
        from_states=tuple(range(model.m)),
        to_states=tuple(targets),
        values=out,
    )
