# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Fluid model: finite state space with rates v(i) and a time-dependent
generator family s -> Lambda_s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from fluidhopf.exceptions import DimensionMismatch, InvalidGenerator, InvalidRates
from fluidhopf.utils import logger

ROW_SUM_TOL = 1e-12
DEFAULT_HORIZON = 20.0
DEFAULT_CHECK_RESOLUTION = 1e-3


def _frozen(matrix):
    arr = np.array(matrix, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateSpace:
    labels: tuple
    v: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        object.__setattr__(self, "v", tuple(float(x) for x in self.v))
        if len(self.labels) != len(self.v):
            raise DimensionMismatch(f"{len(self.labels)} labels but {len(self.v)} rates")

    @property
    def m(self):
        return len(self.v)

    @property
    def rates(self):
        return np.array(self.v)

    @property
    def E_plus(self):
        return tuple(i for i, x in enumerate(self.v) if x > 0)

    @property
    def E_minus(self):
        return tuple(i for i, x in enumerate(self.v) if x < 0)

    @property
    def m_plus(self):
        return len(self.E_plus)

    @property
    def m_minus(self):
        return len(self.E_minus)

    @property
    def order(self):
        """Permutation putting E_plus first, then E_minus."""
        return self.E_plus + self.E_minus

    @property
    def v_max(self):
        return max(abs(x) for x in self.v)

    @property
    def v_min(self):
        return min(abs(x) for x in self.v)

    def index(self, label):
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise InvalidRates(f"Unknown state {label!r}") from None

    def sign_class(self, sign):
        return self.E_plus if sign == "plus" else self.E_minus

    def reflected(self):
        """Same labels with v -> -v, so E_plus and E_minus swap."""
        return StateSpace(self.labels, tuple(-x for x in self.v))

    def violations(self):
        found = []
        if self.m < 2:
            found.append(Violation("state_count", None, None, None, self.m, "at least two states are required"))
        for i, x in enumerate(self.v):
            if x == 0:
                found.append(Violation("zero_rate", None, i, None, x, f"v({self.labels[i]}) is zero"))
        if not self.E_plus:
            found.append(Violation("empty_E_plus", None, None, None, None, "no state with v > 0"))
        if not self.E_minus:
            found.append(Violation("empty_E_minus", None, None, None, None, "no state with v < 0"))
        return found


class GeneratorFamily:
    """
    Base class of the parametric generator families s -> Lambda_s.

    Subclasses implement ``_raw(s)`` and may override the vectorized
    helpers ``_raw_many``, ``hazard`` and ``rows`` with closed forms.
    """

    kind = None
    assumption_relaxed = False

    def __init__(self, m, bound_K):
        self.m = int(m)
        self.bound_K = float(bound_K)

    @property
    def is_constant(self):
        return False

    def _raw(self, s):
        raise NotImplementedError

    def _raw_many(self, s):
        return np.stack([self._raw(x) for x in np.atleast_1d(s)])

    def at(self, s):
        """Lambda_s with sub-tolerance row sums moved onto the diagonal."""
        matrix = np.array(self._raw(float(s)), dtype=float)
        return _renormalize(matrix)

    def at_many(self, s):
        return _renormalize(np.array(self._raw_many(np.asarray(s, dtype=float)), dtype=float))

    def diagonal_integral(self, states, s, t):
        """
        Integral of Lambda_u(i, i) over [s, t] for paired arrays of states
        and times, computed by adaptive quadrature.
        """
        states = np.atleast_1d(states)
        s = np.broadcast_to(np.asarray(s, dtype=float), states.shape)
        t = np.broadcast_to(np.asarray(t, dtype=float), states.shape)
        out = np.empty(states.shape)
        for k, (i, a, b) in enumerate(zip(states, s, t)):
            out[k] = integrate.quad(lambda u: self._raw(u)[i, i], a, b, epsabs=1e-13, epsrel=1e-11)[0]
        return out

    def hazard(self, states, s, t):
        """Cumulative jump hazard int_s^t -Lambda_u(i, i) du."""
        return -self.diagonal_integral(states, s, t)

    def rows(self, states, times):
        """Rows Lambda_t(i, .) for paired arrays of states and times."""
        states = np.atleast_1d(states)
        times = np.broadcast_to(np.asarray(times, dtype=float), states.shape)
        return np.stack([self._raw(t)[i] for i, t in zip(states, times)]) if len(states) else np.zeros((0, self.m))

    def to_dict(self):
        raise NotImplementedError


def _renormalize(matrix):
    sums = matrix.sum(axis=-1)
    small = np.abs(sums) < ROW_SUM_TOL
    if matrix.ndim == 2:
        idx = np.arange(matrix.shape[0])
        matrix[idx, idx] -= np.where(small, sums, 0.0)
    else:
        idx = np.arange(matrix.shape[-1])
        matrix[:, idx, idx] -= np.where(small, sums, 0.0)
    return matrix


class ConstantFamily(GeneratorFamily):
    kind = "constant"

    def __init__(self, matrix, bound_K=None):
        self.matrix = _frozen(matrix)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatch(f"Generator must be square, got shape {self.matrix.shape}")
        if bound_K is None:
            bound_K = float(np.abs(self.matrix).max())
        super().__init__(self.matrix.shape[0], bound_K)

    @property
    def is_constant(self):
        return True

    def _raw(self, s):
        return self.matrix.copy()

    def _raw_many(self, s):
        return np.broadcast_to(self.matrix, (len(np.atleast_1d(s)), self.m, self.m)).copy()

    def diagonal_integral(self, states, s, t):
        return np.diag(self.matrix)[np.atleast_1d(states)] * (np.asarray(t, dtype=float) - np.asarray(s, dtype=float))

    def rows(self, states, times):
        return self.matrix[np.atleast_1d(states)]

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


class PiecewiseConstantFamily(GeneratorFamily):
    """
    Piece k covers [b_{k-1}, b_k) with b_0 = 0; right-continuous at breakpoints.
    """

    kind = "piecewise_constant"
    assumption_relaxed = True

    def __init__(self, breakpoints, matrices, bound_K=None):
        self.breakpoints = _frozen(breakpoints).reshape(-1)
        self.matrices = _frozen(matrices)
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise DimensionMismatch("Piecewise family needs a list of square matrices")
        if len(self.matrices) != len(self.breakpoints) + 1:
            raise DimensionMismatch(
                f"{len(self.breakpoints)} breakpoints need {len(self.breakpoints) + 1} matrices, got {len(self.matrices)}"
            )
        if np.any(np.diff(self.breakpoints) <= 0) or (len(self.breakpoints) and self.breakpoints[0] <= 0):
            raise InvalidGenerator("Breakpoints must be positive and strictly increasing")
        if bound_K is None:
            bound_K = float(np.abs(self.matrices).max())
        super().__init__(self.matrices.shape[1], bound_K)
        starts = np.concatenate([[0.0], self.breakpoints])
        diag = np.diagonal(self.matrices, axis1=1, axis2=2)
        # integral of the diagonal from 0 to the start of each piece
        widths = np.diff(starts)[:, None] * diag[:-1]
        self._starts = starts
        self._diag = diag
        self._cumulative = np.vstack([np.zeros(self.m), np.cumsum(widths, axis=0)])

    def _piece(self, s):
        return np.searchsorted(self.breakpoints, s, side="right")

    def _raw(self, s):
        return self.matrices[self._piece(s)].copy()

    def _raw_many(self, s):
        return self.matrices[self._piece(np.atleast_1d(s))].copy()

    def _diag_primitive(self, states, t):
        k = self._piece(t)
        return self._cumulative[k, states] + self._diag[k, states] * (t - self._starts[k])

    def diagonal_integral(self, states, s, t):
        states = np.atleast_1d(states)
        s = np.broadcast_to(np.asarray(s, dtype=float), states.shape)
        t = np.broadcast_to(np.asarray(t, dtype=float), states.shape)
        return self._diag_primitive(states, t) - self._diag_primitive(states, s)

    def rows(self, states, times):
        states = np.atleast_1d(states)
        times = np.broadcast_to(np.asarray(times, dtype=float), states.shape)
        return self.matrices[self._piece(times), states]

    def to_dict(self):
        return {
            "kind": self.kind,
            "breakpoints": self.breakpoints.tolist(),
            "matrices": self.matrices.tolist(),
        }


@dataclass(frozen=True)
class FourierTerm:
    matrix: np.ndarray
    frequency: float
    phase: float = 0.0


@dataclass(frozen=True)
class PolynomialTerm:
    matrix: np.ndarray
    degree: int


class FourierPolynomialFamily(GeneratorFamily):
    """
    Lambda_s = Lambda_0 + sum_k sin(w_k s + p_k) F_k + sum_d s^d P_d.
    """

    kind = "fourier_polynomial"

    def __init__(self, base, fourier=(), polynomial=(), bound_K=None):
        self.base = _frozen(base)
        if self.base.ndim != 2 or self.base.shape[0] != self.base.shape[1]:
            raise DimensionMismatch(f"Base generator must be square, got shape {self.base.shape}")
        self.fourier = tuple(
            FourierTerm(_frozen(t.matrix), float(t.frequency), float(t.phase)) for t in fourier
        )
        self.polynomial = tuple(PolynomialTerm(_frozen(t.matrix), int(t.degree)) for t in polynomial)
        for term in self.fourier + self.polynomial:
            if term.matrix.shape != self.base.shape:
                raise DimensionMismatch("Every term matrix must match the base shape")
        for term in self.polynomial:
            if term.degree < 0:
                raise InvalidGenerator(f"Polynomial degree must be non-negative, got {term.degree}")
        if bound_K is None:
            bound_K = float(np.abs(self.base).max() + sum(np.abs(t.matrix).max() for t in self.fourier))
        super().__init__(self.base.shape[0], bound_K)

    @property
    def is_constant(self):
        return not self.fourier and not self.polynomial

    def _weights(self, s):
        s = np.atleast_1d(s)
        sines = [np.sin(t.frequency * s + t.phase) for t in self.fourier]
        powers = [s ** t.degree for t in self.polynomial]
        return sines + powers

    def _raw_many(self, s):
        s = np.atleast_1d(s)
        out = np.broadcast_to(self.base, (len(s), self.m, self.m)).copy()
        for w, term in zip(self._weights(s), self.fourier + self.polynomial):
            out += w[:, None, None] * term.matrix
        return out

    def _raw(self, s):
        return self._raw_many(np.array([s]))[0]

    def diagonal_integral(self, states, s, t):
        states = np.atleast_1d(states)
        s = np.broadcast_to(np.asarray(s, dtype=float), states.shape)
        t = np.broadcast_to(np.asarray(t, dtype=float), states.shape)
        total = np.diag(self.base)[states] * (t - s)
        for term in self.fourier:
            d = np.diag(term.matrix)[states]
            if term.frequency == 0:
                total = total + d * np.sin(term.phase) * (t - s)
            else:
                w, p = term.frequency, term.phase
                total = total + d * (np.cos(w * s + p) - np.cos(w * t + p)) / w
        for term in self.polynomial:
            d = np.diag(term.matrix)[states]
            n = term.degree + 1
            total = total + d * (t ** n - s ** n) / n
        return total

    def rows(self, states, times):
        states = np.atleast_1d(states)
        times = np.broadcast_to(np.asarray(times, dtype=float), states.shape)
        out = self.base[states].copy()
        for w, term in zip(self._weights(times), self.fourier + self.polynomial):
            out += w[:, None] * term.matrix[states]
        return out

    def to_dict(self):
        return {
            "kind": self.kind,
            "base": self.base.tolist(),
            "fourier": [
                {"matrix": t.matrix.tolist(), "frequency": t.frequency, "phase": t.phase} for t in self.fourier
            ],
            "polynomial": [{"matrix": t.matrix.tolist(), "degree": t.degree} for t in self.polynomial],
        }


class CallbackFamily(GeneratorFamily):
    """
    Library-only family around a user callable s -> m x m matrix.
    """

    kind = "callback"

    def __init__(self, fn, m, bound_K):
        self.fn = fn
        super().__init__(m, bound_K)

    def _raw(self, s):
        matrix = np.array(self.fn(s), dtype=float)
        if matrix.shape != (self.m, self.m):
            raise DimensionMismatch(f"Callback returned shape {matrix.shape}, expected {(self.m, self.m)}")
        return matrix

    def to_dict(self):
        raise InvalidGenerator("Callback families cannot be written to a config file")


@dataclass(frozen=True)
class FluidModel:
    state_space: StateSpace
    family: GeneratorFamily
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        if self.family.m != self.state_space.m:
            raise DimensionMismatch(
                f"Generator family is {self.family.m}x{self.family.m} but the state space has {self.state_space.m} states"
            )

    @property
    def m(self):
        return self.state_space.m

    @property
    def v(self):
        return self.state_space.rates

    def generator(self, s):
        return eval_generator(self.family, s)

    def reflected(self):
        return FluidModel(self.state_space.reflected(), self.family, self.horizon)


@dataclass(frozen=True)
class BlockDecomposition:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def reassemble(self, state_space):
        """Inverse of block_decompose, in the original state ordering."""
        m = state_space.m
        order = np.array(state_space.order)
        permuted = np.block([[self.A, self.B], [self.C, self.D]])
        out = np.empty((m, m))
        out[np.ix_(order, order)] = permuted
        return out


@dataclass(frozen=True)
class Violation:
    constraint: str
    s: float | None
    i: int | None
    j: int | None
    value: float | None
    message: str
    count: int = 1


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    assumption_relaxed: bool = False
    samples: int = 0

    @property
    def ok(self):
        return not self.violations

    def raise_for_violations(self):
        if self.ok:
            return
        rate_kinds = {"state_count", "zero_rate", "empty_E_plus", "empty_E_minus"}
        first = self.violations[0]
        message = "; ".join(v.message for v in self.violations[:5])
        if any(v.constraint in rate_kinds for v in self.violations):
            raise InvalidRates(message)
        if first.constraint == "dimension":
            raise DimensionMismatch(message)
        raise InvalidGenerator(message)

    def to_dict(self):
        return {
            "ok": self.ok,
            "assumption_relaxed": self.assumption_relaxed,
            "samples": self.samples,
            "violations": [v.__dict__ for v in self.violations],
        }


def eval_generator(family, s):
    """
    Lambda_s of the family; pure and deterministic.
    """
    if s < 0:
        raise ValueError(f"s must be non-negative, got {s}")
    return family.at(s)


def block_decompose(matrix, state_space):
    matrix = np.asarray(matrix, dtype=float)
    m = state_space.m
    if matrix.shape != (m, m):
        raise DimensionMismatch(f"Expected a {m}x{m} matrix, got shape {matrix.shape}")
    plus, minus = list(state_space.E_plus), list(state_space.E_minus)
    return BlockDecomposition(
        A=matrix[np.ix_(plus, plus)],
        B=matrix[np.ix_(plus, minus)],
        C=matrix[np.ix_(minus, plus)],
        D=matrix[np.ix_(minus, minus)],
    )


def validate_model(state_space, generator_family, check_resolution=DEFAULT_CHECK_RESOLUTION, horizon=DEFAULT_HORIZON):
    """
    Check the structural assumptions on a time grid of the given resolution
    over [0, horizon]. Each violated (constraint, i, j) is reported once,
    at the first offending s, with the number of offending samples.
    """
    if check_resolution <= 0:
        raise ValueError(f"check_resolution must be positive, got {check_resolution}")

    report = ValidationReport(assumption_relaxed=generator_family.assumption_relaxed)
    report.violations.extend(state_space.violations())
    if generator_family.m != state_space.m:
        report.violations.append(
            Violation("dimension", None, None, None, generator_family.m, f"generator is {generator_family.m}x{generator_family.m} for {state_space.m} states")
        )
        return report

    n = int(np.ceil(horizon / check_resolution - 1e-9))
    grid = np.linspace(0.0, horizon, n + 1) if horizon > 0 else np.zeros(1)
    report.samples = len(grid)
    raw = np.asarray(generator_family._raw_many(grid), dtype=float)
    m = state_space.m
    off = ~np.eye(m, dtype=bool)

    negative = (raw < 0) & off
    row_sums = raw.sum(axis=2)
    too_big = np.abs(raw) > generator_family.bound_K * (1 + 1e-12)

    for i, j in zip(*np.nonzero(negative.any(axis=0))):
        k = int(np.argmax(negative[:, i, j]))
        report.violations.append(Violation(
            "negative_off_diagonal", float(grid[k]), int(i), int(j), float(raw[k, i, j]),
            f"Lambda_s({i},{j}) = {raw[k, i, j]:.3g} < 0 at s = {grid[k]:.6g}", int(negative[:, i, j].sum()),
        ))
    bad_rows = np.abs(row_sums) > ROW_SUM_TOL
    for i in np.nonzero(bad_rows.any(axis=0))[0]:
        k = int(np.argmax(bad_rows[:, i]))
        report.violations.append(Violation(
            "row_sum", float(grid[k]), int(i), None, float(row_sums[k, i]),
            f"row {i} sums to {row_sums[k, i]:.3g} at s = {grid[k]:.6g}", int(bad_rows[:, i].sum()),
        ))
    for i, j in zip(*np.nonzero(too_big.any(axis=0))):
        k = int(np.argmax(too_big[:, i, j]))
        report.violations.append(Violation(
            "bound_K", float(grid[k]), int(i), int(j), float(raw[k, i, j]),
            f"|Lambda_s({i},{j})| = {abs(raw[k, i, j]):.6g} exceeds bound_K = {generator_family.bound_K:.6g} at s = {grid[k]:.6g}",
            int(too_big[:, i, j].sum()),
        ))

    if report.ok:
        logger("model").debug("validate_model: ok samples=%d kind=%s", report.samples, generator_family.kind)
    else:
        logger("model").info("validate_model: %d violation(s) kind=%s", len(report.violations), generator_family.kind)
    return report
