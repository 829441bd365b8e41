# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Backward space-time solver for passage functionals.

F(s, i, a) = E_{s,i}[g(tau, X_tau)] where tau is the first time the level
process started at a exceeds the level. F is harmonic for the space-time
generator  dF/ds + v(i) dF/da + Lambda_s F = 0  below the level and is
marched backward in s by a first-order semi-Lagrangian scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fluidhopf.exceptions import DerivativeUnavailable, DomainError, GridError
from fluidhopf.utils import logger, throw

SIDES = ("plus", "minus")
SNAP = 1e-9


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return 1.0 - 3.0 * u**2 + 2.0 * u**3


def _smoothstep_slope(u):
    inside = (u > 0) & (u < 1)
    return np.where(inside, -6.0 * u + 6.0 * u**2, 0.0)


@dataclass(frozen=True)
class BoundaryFunction:
    """
    Boundary data g(s, i) on the hit class.

    ``evaluator(s, i)`` and ``derivative(s, i)`` take an array of times and a
    state index and return an array; ``support`` is a time beyond which g is 0.
    """

    evaluator: object
    states: tuple
    support: float
    bound: float
    smooth: bool = False
    derivative: object = None
    discount: float | None = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def evaluate(self, s, i):
        s = np.asarray(s, dtype=float)
        if i not in self.states:
            return np.zeros(s.shape)
        return np.where(s >= self.support, 0.0, self.evaluator(s, i))

    def values(self, s, states):
        return np.stack([self.evaluate(s, i) for i in states], axis=-1)

    def slope(self, s, i):
        if not self.smooth or self.derivative is None:
            raise DerivativeUnavailable(f"boundary data {self.kind!r} has no continuous time derivative")
        s = np.asarray(s, dtype=float)
        if i not in self.states:
            return np.zeros(s.shape)
        return np.where(s >= self.support, 0.0, self.derivative(s, i))

    def modulus(self, delta, samples=4001):
        """Modulus of continuity in s, sampled over [0, support + delta]."""
        if self.support <= 0 or not self.states:
            return 0.0
        grid = np.linspace(0.0, self.support + delta, samples)
        step = grid[1] - grid[0]
        k = max(1, int(np.ceil(delta / step)))
        worst = 0.0
        for i in self.states:
            values = self.evaluate(grid, i)
            for shift in range(1, min(k, len(grid) - 1) + 1):
                worst = max(worst, float(np.abs(values[shift:] - values[:-shift]).max()))
        return worst

    def to_dict(self):
        return {"kind": self.kind, **self.params}

    @classmethod
    def exp_indicator(cls, c, j, eta=None):
        """
        g(s, i) = exp(-c s) 1{i = j}, times a C1 cutoff falling from 1 to 0
        over the last min(1, eta / 2) time units before eta.
        """
        if not c > 0:
            raise ValueError(f"exp_indicator needs c > 0, got {c}")
        eta = 20.0 / c if eta is None else float(eta)
        width = min(1.0, eta / 2.0)
        start = eta - width

        def evaluator(s, i):
            return np.exp(-c * s) * _smoothstep((s - start) / width)

        def derivative(s, i):
            u = (s - start) / width
            return np.exp(-c * s) * (-c * _smoothstep(u) + _smoothstep_slope(u) / width)

        return cls(
            evaluator=evaluator,
            states=(int(j),),
            support=eta,
            bound=1.0,
            smooth=True,
            derivative=derivative,
            discount=float(c),
            kind="exp_indicator",
            params={"c": float(c), "j": int(j), "eta": eta},
        )

    @classmethod
    def table(cls, s_nodes, values, states, smooth=False):
        """
        Linear interpolation of sampled values, shape (len(s_nodes), len(states));
        zero after the last node.
        """
        s_nodes = np.asarray(s_nodes, dtype=float)
        values = np.asarray(values, dtype=float).reshape(len(s_nodes), -1)
        states = tuple(int(i) for i in states)
        if values.shape[1] != len(states):
            raise ValueError(f"{values.shape[1]} value columns for {len(states)} states")
        column = {i: k for k, i in enumerate(states)}
        slopes = np.gradient(values, s_nodes, axis=0) if len(s_nodes) > 1 else np.zeros_like(values)

        def evaluator(s, i):
            return np.interp(s, s_nodes, values[:, column[i]], left=values[0, column[i]], right=0.0)

        def derivative(s, i):
            return np.interp(s, s_nodes, slopes[:, column[i]], right=0.0)

        return cls(
            evaluator=evaluator,
            states=states,
            support=float(s_nodes[-1]),
            bound=float(np.abs(values).max()) if values.size else 0.0,
            smooth=smooth,
            derivative=derivative,
            kind="table",
            params={"s_nodes": s_nodes.tolist(), "values": values.tolist(), "states": list(states)},
        )

    @classmethod
    def indicator(cls, states):
        """
        g = 1 on the given hit states at every time; not compactly supported,
        so only the Monte Carlo estimator accepts it.
        """
        return cls(
            evaluator=lambda s, i: np.ones(np.shape(s)),
            states=tuple(int(i) for i in states),
            support=np.inf,
            bound=1.0,
            kind="indicator",
            params={"states": [int(i) for i in states]},
        )

    @classmethod
    def zero(cls, states=()):
        return cls(
            evaluator=lambda s, i: np.zeros(np.shape(s)),
            states=tuple(states),
            support=0.0,
            bound=0.0,
            smooth=True,
            derivative=lambda s, i: np.zeros(np.shape(s)),
            kind="zero",
        )


@dataclass(frozen=True)
class GridParams:
    ds: float | None = None
    da: float | None = None
    s_max: float | None = None
    a_min: float | None = None
    store_stride: int = 1

    def halved(self):
        return GridParams(
            ds=None if self.ds is None else self.ds / 2,
            da=None if self.da is None else self.da / 2,
            s_max=self.s_max,
            a_min=self.a_min,
            store_stride=self.store_stride * 2,
        )


@dataclass(frozen=True)
class Grid2D:
    s_nodes: np.ndarray
    a_nodes: np.ndarray
    level: float
    zero_index: int

    @property
    def ds(self):
        return float(self.s_nodes[1] - self.s_nodes[0]) if len(self.s_nodes) > 1 else 0.0

    @property
    def da(self):
        return float(self.a_nodes[-1] - self.a_nodes[-2])

    @property
    def a_min(self):
        return float(self.a_nodes[0])

    @property
    def s_max(self):
        return float(self.s_nodes[-1])


@dataclass(frozen=True)
class StateTable:
    s_nodes: np.ndarray
    states: tuple
    values: np.ndarray

    def column(self, i):
        return self.values[:, self.states.index(i)]

    def at(self, s, i):
        return float(np.interp(s, self.s_nodes, self.column(i), right=0.0))

    def rows(self, labels):
        for n, s in enumerate(self.s_nodes):
            for k, i in enumerate(self.states):
                yield [float(s), labels[i], float(self.values[n, k])]


@dataclass(frozen=True)
class GridFunction:
    """
    Solution of one backward march.

    ``at_level`` and ``at_zero`` hold F(s, ., level) and F(s, ., 0) at every
    s-node; ``values`` holds F on the stored sub-grid (``s_index`` x states x
    ``a_index``).
    """

    grid: Grid2D
    state_space: object
    side: str
    values: np.ndarray
    s_index: np.ndarray
    a_index: np.ndarray
    at_level: np.ndarray
    at_zero: np.ndarray

    @property
    def stored_s(self):
        return self.grid.s_nodes[self.s_index]

    @property
    def stored_a(self):
        return self.grid.a_nodes[self.a_index]

    def rows(self):
        labels = self.state_space.labels
        for n, s in enumerate(self.stored_s):
            for i, label in enumerate(labels):
                for k, a in enumerate(self.stored_a):
                    yield [float(s), label, float(a), float(self.values[n, i, k])]


@dataclass(frozen=True)
class IdentityResidual:
    s_nodes: np.ndarray
    states: tuple
    table: np.ndarray
    max_abs: float


def default_step(support):
    return 1e-3 * max(1.0, float(support))


def make_grid(model, g, level, params=None):
    """
    Uniform grids on [0, s_max] and [a_min, level] with 0 and the level as
    a-nodes.
    """
    params = params or GridParams()
    if level < 0:
        raise DomainError(f"level must be non-negative, got {level}")
    eta = float(g.support)
    ds = params.ds or default_step(eta)
    da = params.da or default_step(eta)
    if ds <= 0 or da <= 0:
        throw(f"grid steps must be positive, got ds={ds} da={da}", GridError, "Passage Grid")
    v_max = model.state_space.v_max
    s_max = max(eta, ds) if params.s_max is None else float(params.s_max)
    if s_max < eta:
        throw(f"s_max={s_max} is below the support bound {eta} of the boundary data", GridError, "Passage Grid")
    a_min = min(0.0, level - v_max * eta) - 2 * da if params.a_min is None else float(params.a_min)

    if a_min >= level:
        throw(f"a_min={a_min} must lie below the level {level}", GridError, "Passage Grid")
    if v_max * ds > level - a_min:
        throw(f"one step of {v_max * ds:g} crosses the whole a-range", GridError, "Passage Grid")
    if ds * model.family.bound_K > 1:
        throw(f"ds={ds:g} too large for bound_K={model.family.bound_K:g}", GridError, "Passage Grid")
    if a_min > 0:
        throw(f"a_min={a_min} must not exceed 0", DomainError, "Passage Grid")
    if a_min >= level - v_max * eta:
        throw(
            f"a_min={a_min} is not below level - v_max * eta = {level - v_max * eta}; the exact zero region is unreachable",
            DomainError,
            "Passage Grid",
        )

    n_s = int(np.ceil(s_max / ds - SNAP))
    s_nodes = np.linspace(0.0, s_max, n_s + 1)
    if level > 0:
        da = level / np.ceil(level / da - SNAP)
    below = int(np.ceil((level - a_min) / da - SNAP))
    a_nodes = level - da * np.arange(below, -1, -1, dtype=float)
    zero_index = below - int(round(level / da))
    a_nodes[zero_index] = 0.0
    a_nodes[-1] = level
    return Grid2D(s_nodes=s_nodes, a_nodes=a_nodes, level=float(level), zero_index=zero_index)


def _side_model(model, side):
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")
    return model if side == "plus" else model.reflected()


def _shift(a_count, nodes):
    """Lower neighbour indices and weight for a uniform shift of ``nodes`` a-steps."""
    base = np.floor(nodes + SNAP)
    theta = float(nodes - base)
    if theta < SNAP:
        theta = 0.0
    return np.arange(a_count) + int(base), theta


def _march(model, g, grid, store_stride, side):
    state_space = model.state_space
    family = model.family
    m = state_space.m
    v = state_space.rates
    ds = grid.ds
    da = grid.da
    level = grid.level
    a = grid.a_nodes
    n_a = len(a)
    n_s = len(grid.s_nodes)
    plus = list(state_space.E_plus)
    v_max = state_space.v_max
    eta = g.support

    pad = int(np.ceil(v_max * ds / da)) + 2
    shifts = [_shift(n_a, v[i] * ds / da) for i in range(m)]
    crossing = {}
    for i in plus:
        cross = a + v[i] * ds > level + SNAP * da
        crossing[i] = (cross, (level - a[cross]) / v[i])

    s_index = np.arange(0, n_s, store_stride)
    if s_index[-1] != n_s - 1:
        s_index = np.append(s_index, n_s - 1)
    a_index = np.arange(n_a - 1, -1, -store_stride)[::-1]
    if a_index[0] != 0:
        a_index = np.insert(a_index, 0, 0)
    stored = np.zeros((len(s_index), m, len(a_index)))
    slot = {int(n): k for k, n in enumerate(s_index)}
    at_level = np.zeros((n_s, m))
    at_zero = np.zeros((n_s, m))

    F = np.zeros((m, n_a))
    F[plus, -1] = g.values(grid.s_nodes[-1], plus)
    padded = np.zeros((m, n_a + 2 * pad))

    for n in range(n_s - 1, -1, -1):
        s = grid.s_nodes[n]
        if n < n_s - 1:
            padded[:, pad:pad + n_a] = F
            P = np.eye(m) + ds * family.at(s)
            new = np.empty_like(F)
            for i in range(m):
                lo, theta = shifts[i]
                feet = padded[:, lo + pad]
                if theta:
                    feet = (1.0 - theta) * feet + theta * padded[:, lo + pad + 1]
                new[i] = P[i] @ feet
            for i in plus:
                cross, delay = crossing[i]
                new[i, cross] = g.evaluate(s + delay, i)
            F = new
            # exact zeros: the level cannot be reached before g vanishes
            F[:, (level - a) > v_max * max(eta - s, 0.0)] = 0.0
            F[plus, -1] = g.values(s, plus)
        at_level[n] = F[:, -1]
        at_zero[n] = F[:, grid.zero_index]
        if n in slot:
            stored[slot[n]] = F[:, a_index]
        if n % 1000 == 0:
            logger("passage_pde").debug("march: side=%s s=%.6g", side, s)

    for array in (stored, at_level, at_zero):
        array.setflags(write=False)
    return GridFunction(
        grid=grid,
        state_space=state_space,
        side=side,
        values=stored,
        s_index=s_index,
        a_index=a_index,
        at_level=at_level,
        at_zero=at_zero,
    )


def solve_passage(model, g, level, grid=None, side="plus"):
    """
    F(s, i, a) for the up-crossing of ``level`` (``side="minus"`` gives the
    down-crossing of -level via the reflected model).
    """
    params = grid if isinstance(grid, GridParams) or grid is None else None
    effective = _side_model(model, side)
    grid2d = grid if isinstance(grid, Grid2D) else make_grid(effective, g, level, params)
    store_stride = params.store_stride if params else 1
    logger("passage_pde").info(
        "solve_passage: side=%s level=%g ds=%.3g da=%.3g n_s=%d n_a=%d",
        side, level, grid2d.ds, grid2d.da, len(grid2d.s_nodes), len(grid2d.a_nodes),
    )
    return _march(effective, g, grid2d, max(1, int(store_stride)), side)


def solve_passage_minus(model, g, level, grid=None):
    return solve_passage(model, g, level, grid, side="minus")


def extract_J(F):
    """(J g)(s, i) = F(s, i, level) for i in the non-hit class."""
    minus = F.state_space.E_minus
    return StateTable(F.grid.s_nodes, minus, F.at_level[:, list(minus)])


def extract_P(F):
    """(P_level g)(s, i) = F(s, i, 0) for i in the hit class."""
    plus = F.state_space.E_plus
    return StateTable(F.grid.s_nodes, plus, F.at_zero[:, list(plus)])


def extract_level(F):
    """F(s, i, 0) for every state."""
    return StateTable(F.grid.s_nodes, tuple(range(F.state_space.m)), np.array(F.at_zero))


def apply_G(model, g, J_values, side="plus"):
    """
    (G g)(s, i) = (d/ds g + Lambda_s[+, +] g + Lambda_s[+, -] J g)(s, i) / v(i)
    on the hit class.
    """
    if not g.smooth:
        raise DerivativeUnavailable(f"apply_G needs continuously differentiable boundary data, got {g.kind!r}")
    effective = _side_model(model, side)
    space = effective.state_space
    plus, minus = list(space.E_plus), list(space.E_minus)
    s_nodes = J_values.s_nodes
    Lambda = effective.family.at_many(s_nodes)
    g_plus = g.values(s_nodes, plus)
    slope = np.stack([g.slope(s_nodes, i) for i in plus], axis=-1)
    coupled = (
        np.einsum("nij,nj->ni", Lambda[:, plus][:, :, plus], g_plus)
        + np.einsum("nij,nj->ni", Lambda[:, plus][:, :, minus], J_values.values)
    )
    values = (slope + coupled) / space.rates[plus]
    return StateTable(s_nodes, tuple(plus), values)


def check_identity_whd(model, g, J_values, G_values, grid=None, side="plus"):
    """
    Residual of  d/ds J g = -Lambda[-, +] g - Lambda[-, -] J g + v J(G g)
    on the interior s-nodes, for i in the non-hit class. J(G g) is obtained
    from a second solve with boundary data G g.
    """
    if not g.smooth:
        raise DerivativeUnavailable(f"the J-derivative identity needs smooth boundary data, got {g.kind!r}")
    effective = _side_model(model, side)
    space = effective.state_space
    plus, minus = list(space.E_plus), list(space.E_minus)
    s_nodes = J_values.s_nodes
    if len(s_nodes) < 3:
        raise GridError("need at least three s-nodes for a central difference")

    G_boundary = BoundaryFunction.table(s_nodes, G_values.values, plus)
    if isinstance(grid, GridParams) or grid is None:
        params = grid or GridParams(ds=s_nodes[1] - s_nodes[0])
        second = solve_passage(model, G_boundary, 0.0, params, side=side)
    else:
        second = solve_passage(model, G_boundary, grid.level, grid, side=side)
    J_of_G = extract_J(second)
    if len(J_of_G.s_nodes) != len(s_nodes):
        J_of_G = StateTable(s_nodes, J_of_G.states, np.stack(
            [np.interp(s_nodes, J_of_G.s_nodes, J_of_G.values[:, k], right=0.0) for k in range(len(minus))], axis=-1
        ))

    Lambda = effective.family.at_many(s_nodes)
    g_plus = g.values(s_nodes, plus)
    dJ = np.gradient(J_values.values, s_nodes, axis=0)
    rhs = (
        -np.einsum("nij,nj->ni", Lambda[:, minus][:, :, plus], g_plus)
        - np.einsum("nij,nj->ni", Lambda[:, minus][:, :, minus], J_values.values)
        + space.rates[minus] * J_of_G.values
    )
    table = (dJ - rhs)[1:-1]
    max_abs = float(np.abs(table).max()) if table.size else 0.0
    logger("passage_pde").info("check_identity_whd: side=%s max_abs=%.3g", side, max_abs)
    return IdentityResidual(s_nodes[1:-1], tuple(minus), table, max_abs)


def modulus_of_continuity(F, delta):
    """
    Upper estimate of sup |F(s, i, a) - F(s', i, a')| over |s - s'| <= delta
    and |a - a'| <= delta on the stored sub-grid, as the sum of the
    s-direction and a-direction moduli.
    """
    values = F.values
    total = 0.0
    for axis, nodes in ((0, F.stored_s), (2, F.stored_a)):
        if len(nodes) < 2:
            continue
        step = float(nodes[1] - nodes[0])
        k = min(len(nodes) - 1, max(1, int(np.floor(delta / step + SNAP))))
        worst = 0.0
        for shift in range(1, k + 1):
            ahead = np.take(values, np.arange(shift, len(nodes)), axis=axis)
            behind = np.take(values, np.arange(0, len(nodes) - shift), axis=axis)
            worst = max(worst, float(np.abs(ahead - behind).max()))
        total += worst
    return total


def continuity_bound(model, g, delta):
    """
    C1 delta + 3 w_g(C2 delta) with C1 = 2 m K |g| (1 + 1/v_min) and
    C2 = 1 + 1/v_min, where w_g is the modulus of continuity of g in s.
    """
    space = model.state_space
    c2 = 1.0 + 1.0 / space.v_min
    c1 = 2.0 * space.m * model.family.bound_K * g.bound * c2
    return c1 * delta + 3.0 * g.modulus(c2 * delta)
