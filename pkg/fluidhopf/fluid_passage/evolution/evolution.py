# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Evolution system U_{s,t} of the time-inhomogeneous chain.

U is integrated forward in its second argument, dU/du = U Lambda_u with
U_{s,s} = I, by fixed-step classical Runge-Kutta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fluidhopf.exceptions import IntegrationError
from fluidhopf.utils import log_error, logger

ENTRY_TOL = 1e-10
DRIFT_TOL = 1e-6
DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class EvolutionMatrix:
    s: float
    t: float
    P: np.ndarray

    def row(self, i):
        return self.P[i]


def _family(model):
    return getattr(model, "family", model)


def rk4_step(family, u, h, U):
    """
    One classical Runge-Kutta step of dU/du = U Lambda_u.
    """
    L0 = family.at(u)
    Lh = family.at(u + 0.5 * h)
    L1 = family.at(u + h)
    k1 = U @ L0
    k2 = (U + 0.5 * h * k1) @ Lh
    k3 = (U + 0.5 * h * k2) @ Lh
    k4 = (U + h * k3) @ L1
    return U + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(family, s, t, step):
    U = np.eye(family.m)
    n_full = int(np.floor((t - s) / step + 1e-9))
    for k in range(n_full):
        U = rk4_step(family, s + k * step, step, U)
    u = s + n_full * step
    # final partial step, shortened
    if t - u > 1e-14 * max(1.0, abs(t)):
        U = rk4_step(family, u, t - u, U)
    return U


def evolution_matrix(model, s, t, step=DEFAULT_STEP):
    """
    Transition matrix P(i, j) = P_{s,i}(X_t = j).
    """
    if not 0 <= s <= t:
        raise ValueError(f"Need 0 <= s <= t, got s={s}, t={t}")
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")

    family = _family(model)
    U = _integrate(family, float(s), float(t), float(step))

    drift = float(np.abs(U.sum(axis=1) - 1.0).max())
    if drift > DRIFT_TOL:
        message = f"row sums drifted by {drift:.3g} over [{s}, {t}] at step {step}"
        log_error(message, "Evolution Integration")
        raise IntegrationError(message)
    low, high = float(U.min()), float(U.max())
    if low < -ENTRY_TOL or high > 1 + ENTRY_TOL:
        logger("evolution").debug("evolution_matrix: clamping entries min=%.3g max=%.3g", low, high)

    P = np.clip(U, 0.0, 1.0)
    P = P / P.sum(axis=1, keepdims=True)
    P.setflags(write=False)
    return EvolutionMatrix(float(s), float(t), P)


def chapman_kolmogorov_residual(model, s, r, t, step=DEFAULT_STEP):
    """
    max |U_{s,t} - U_{s,r} U_{r,t}|.
    """
    if not s <= r <= t:
        raise ValueError(f"Need s <= r <= t, got {s}, {r}, {t}")
    direct = evolution_matrix(model, s, t, step).P
    split = evolution_matrix(model, s, r, step).P @ evolution_matrix(model, r, t, step).P
    return float(np.abs(direct - split).max())
