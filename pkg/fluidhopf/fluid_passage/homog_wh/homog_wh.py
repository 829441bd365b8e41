# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Wiener-Hopf factorization of a constant (sub-Markovian) generator.

With M = V^{-1}(Lambda - cI) in block form over E+ then E-, the factorization
is M S = S diag(Q+, -Q-) with S = [[I+, Pi-], [Pi+, I-]]. Pi+ spans the stable
invariant subspace of M, Pi- the unstable one. Both are taken from an ordered
real Schur form and polished by Newton steps on their Riccati equations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from fluidhopf.exceptions import (
    InvalidGenerator,
    InvalidRates,
    NoConvergence,
    SpectralSplitError,
    SubspaceDefect,
)
from fluidhopf.fluid_passage.model.model import block_decompose
from fluidhopf.utils import logger, throw

AXIS_TOL = 1e-10
COND_LIMIT = 1e12
RESIDUAL_LIMIT = 1e-10
NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 50


@dataclass(frozen=True)
class HomogFactorization:
    c: float
    Pi_plus: np.ndarray
    Pi_minus: np.ndarray
    Q_plus: np.ndarray
    Q_minus: np.ndarray
    residual: float
    iterations: int = 0

    @property
    def S(self):
        m_plus, m_minus = self.Q_plus.shape[0], self.Q_minus.shape[0]
        return np.block([[np.eye(m_plus), self.Pi_minus], [self.Pi_plus, np.eye(m_minus)]])

    def to_dict(self):
        return {
            "c": self.c,
            "Pi_plus": self.Pi_plus,
            "Pi_minus": self.Pi_minus,
            "Q_plus": self.Q_plus,
            "Q_minus": self.Q_minus,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class _Blocks:
    M11: np.ndarray
    M12: np.ndarray
    M21: np.ndarray
    M22: np.ndarray

    @property
    def M(self):
        return np.block([[self.M11, self.M12], [self.M21, self.M22]])


def _scaled_blocks(matrix, state_space, c):
    blocks = block_decompose(matrix, state_space)
    v_plus = state_space.rates[list(state_space.E_plus)]
    v_minus = state_space.rates[list(state_space.E_minus)]
    I_plus, I_minus = np.eye(len(v_plus)), np.eye(len(v_minus))
    return _Blocks(
        M11=(blocks.A - c * I_plus) / v_plus[:, None],
        M12=blocks.B / v_plus[:, None],
        M21=blocks.C / v_minus[:, None],
        M22=(blocks.D - c * I_minus) / v_minus[:, None],
    )


def _check_sub_markovian(matrix):
    m = matrix.shape[0]
    off = ~np.eye(m, dtype=bool)
    if (matrix[off] < 0).any():
        throw("Generator has a negative off-diagonal entry", InvalidGenerator, "Factorize")
    if (matrix.sum(axis=1) > 1e-12).any():
        throw("Generator has a row with positive sum", InvalidGenerator, "Factorize")


def _riccati_plus(b, P):
    return P @ b.M11 + P @ b.M12 @ P - b.M21 - b.M22 @ P


def _riccati_minus(b, P):
    return b.M11 @ P + b.M12 - P @ (b.M21 @ P + b.M22)


def _newton_plus(b, P):
    R = _riccati_plus(b, P)
    X = linalg.solve_sylvester(P @ b.M12 - b.M22, b.M11 + b.M12 @ P, -R)
    return P + X


def _newton_minus(b, P):
    R = _riccati_minus(b, P)
    X = linalg.solve_sylvester(b.M11 - P @ b.M21, -(b.M21 @ P + b.M22), -R)
    return P + X


def _refine(step, residual, b, P, tol, max_iter):
    """
    Newton iteration; stops at tolerance (relative to the size of M) or once
    the residual stops decreasing.
    """
    scale = max(1.0, float(np.abs(b.M).max()))
    best = float(np.abs(residual(b, P)).max())
    iterations = 0
    while best > tol * scale and iterations < max_iter:
        candidate = step(b, P)
        value = float(np.abs(residual(b, candidate)).max())
        iterations += 1
        if not np.isfinite(value) or value >= best:
            break
        P, best = candidate, value
    return P, iterations


def _invariant_basis(M, sort, size):
    _, Z, sdim = linalg.schur(M, output="real", sort=sort)
    if sdim != size:
        throw(f"ordered Schur form found {sdim} eigenvalues in the {sort} half-plane, expected {size}", SpectralSplitError, "Factorize")
    return Z[:, :size]


def factorize(matrix, state_space, c, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """
    Factorize V^{-1}(Lambda - cI) for a constant sub-Markovian generator Lambda
    and a kill rate c > 0.
    """
    matrix = np.asarray(matrix, dtype=float)
    bad_rates = state_space.violations()
    if bad_rates:
        throw("; ".join(v.message for v in bad_rates), InvalidRates, "Factorize")
    if not c > 0:
        throw(f"kill rate c must be positive, got {c}", SpectralSplitError, "Factorize")
    b = _scaled_blocks(matrix, state_space, c)
    _check_sub_markovian(matrix)

    m_plus, m_minus = state_space.m_plus, state_space.m_minus
    M = b.M
    eigenvalues = np.linalg.eigvals(M)
    if (np.abs(eigenvalues.real) < AXIS_TOL).any():
        throw("an eigenvalue of V^-1(Lambda - cI) lies on the imaginary axis", SpectralSplitError, "Factorize")
    stable = int((eigenvalues.real < 0).sum())
    if stable != m_plus:
        throw(f"{stable} stable eigenvalues for {m_plus} states in E+", SpectralSplitError, "Factorize")

    W = _invariant_basis(M, "lhp", m_plus)
    U = _invariant_basis(M, "rhp", m_minus)
    W1, W2 = W[:m_plus], W[m_plus:]
    U1, U2 = U[:m_plus], U[m_plus:]
    for name, block in (("W1", W1), ("U2", U2)):
        cond = np.linalg.cond(block)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            throw(f"invariant subspace block {name} is singular (cond={cond:.3g})", SubspaceDefect, "Factorize")

    Pi_plus = np.linalg.solve(W1.T, W2.T).T
    Pi_minus = np.linalg.solve(U2.T, U1.T).T
    Pi_plus, it_plus = _refine(_newton_plus, _riccati_plus, b, Pi_plus, tol, max_iter)
    Pi_minus, it_minus = _refine(_newton_minus, _riccati_minus, b, Pi_minus, tol, max_iter)

    Q_plus = b.M11 + b.M12 @ Pi_plus
    Q_minus = -(b.M21 @ Pi_minus + b.M22)
    fact = HomogFactorization(
        c=float(c),
        Pi_plus=Pi_plus,
        Pi_minus=Pi_minus,
        Q_plus=Q_plus,
        Q_minus=Q_minus,
        residual=0.0,
        iterations=max(it_plus, it_minus),
    )
    residual = _residual(b, fact)
    if not residual <= RESIDUAL_LIMIT:
        throw(f"factorization residual {residual:.3g} above {RESIDUAL_LIMIT:g} after refinement", NoConvergence, "Factorize")

    logger("homog_wh").debug(
        "factorize: newton converged iterations=%d residual=%.3g c=%g", fact.iterations, residual, c
    )
    return replace(fact, residual=residual)


def _residual(b, fact):
    right = np.block([
        [fact.Q_plus, np.zeros((fact.Q_plus.shape[0], fact.Q_minus.shape[0]))],
        [np.zeros((fact.Q_minus.shape[0], fact.Q_plus.shape[0])), -fact.Q_minus],
    ])
    S = fact.S
    return float(np.abs(b.M @ S - S @ right).max())


def factorization_residual(fact, matrix, state_space):
    """
    max |V^{-1}(Lambda - cI) S - S diag(Q+, -Q-)|.
    """
    return _residual(_scaled_blocks(np.asarray(matrix, dtype=float), state_space, fact.c), fact)


def homog_passage_matrix(fact, level, sign, from_side):
    """
    Laplace transform matrix of the level-crossing time and hit state.

    For sign "plus" this is expm(level Q+) from E+ and Pi+ expm(level Q+)
    from E-; "minus" mirrors it.
    """
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level}")
    if sign not in ("plus", "minus"):
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    Q, Pi = (fact.Q_plus, fact.Pi_plus) if sign == "plus" else (fact.Q_minus, fact.Pi_minus)
    exponential = linalg.expm(level * Q)
    if from_side == sign:
        return exponential
    return Pi @ exponential


def frozen_factorization(model, c, s):
    """
    Factorization of the frozen generator Lambda_s.
    """
    return factorize(model.generator(s), model.state_space, c)
