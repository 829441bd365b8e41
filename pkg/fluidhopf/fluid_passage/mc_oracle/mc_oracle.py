# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Monte Carlo simulator of the time-inhomogeneous chain and its level process.

Holding times are drawn by inverting the cumulative hazard against an Exp(1)
variable; a thinning sampler with majorant bound_K is kept as an independent
check. Replica block b always draws from the stream derived from (seed, b),
so results do not depend on the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from fluidhopf.exceptions import HazardError
from fluidhopf.utils import log_error, logger, thread_count, throw

COFFIN = -1
DEFAULT_SEED = 20240101
DEFAULT_BLOCK_SIZE = 4096
RATE_TOL = 1e-12
BISECT_RTOL = 1e-10
BISECT_MAX_ITER = 100


@dataclass(frozen=True)
class PathSample:
    start: tuple
    jump_times: tuple
    states: tuple
    horizon: float
    phi_breakpoints: tuple

    @property
    def times(self):
        return (self.start[0],) + self.jump_times + (self.horizon,)


@dataclass(frozen=True)
class PassageSample:
    tau: float
    hit_state: int
    censored: bool


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    censor_fraction: float
    bias_bound: float
    seed: int

    def to_dict(self):
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n": self.n,
            "censor_fraction": self.censor_fraction,
            "bias_bound": self.bias_bound,
            "seed": self.seed,
        }


def replica_stream(seed, block):
    """
    Counter-based generator for replica block ``block`` of a run.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def _check_rates(family, states, times):
    rows = family.rows(states, times)
    diag = rows[np.arange(len(states)), states]
    if (diag > RATE_TOL).any():
        k = int(np.argmax(diag))
        throw(
            f"-Lambda_s(i,i) = {-diag[k]:.3g} < 0 at s = {np.broadcast_to(times, diag.shape)[k]:.6g}, state {states[k]}",
            HazardError,
            "Hazard",
        )
    return rows


def _next_jump_times(family, states, t, horizon, rng):
    """
    Next jump time for each path, or inf when none occurs before ``horizon``.
    """
    n = len(states)
    draws = rng.standard_exponential(n)
    if not n:
        return np.zeros(0)
    _check_rates(family, states, t)
    if family.is_constant:
        rate = -np.diag(family.at(0.0))[states]
        with np.errstate(divide="ignore"):
            jump = np.where(rate > 0, t + draws / np.where(rate > 0, rate, 1.0), np.inf)
        return np.where(jump < horizon, jump, np.inf)

    end = np.full(n, float(horizon))
    total = family.hazard(states, t, end)
    if (total < -RATE_TOL).any():
        throw("cumulative hazard is negative; the generator has a positive diagonal entry", HazardError, "Hazard")
    jumps = total > draws
    out = np.full(n, np.inf)
    if not jumps.any():
        return out
    idx = np.nonzero(jumps)[0]
    lo, hi = t[idx].copy(), end[idx].copy()
    target, sub = draws[idx], states[idx]
    for _ in range(BISECT_MAX_ITER):
        if ((hi - lo) <= BISECT_RTOL * np.maximum(1.0, hi)).all():
            break
        mid = 0.5 * (lo + hi)
        below = family.hazard(sub, t[idx], mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out[idx] = hi
    return out


def _destinations(family, states, times, rng):
    """
    Jump targets j != i with probability Lambda(i, j) / -Lambda(i, i);
    a path whose off-diagonal rates all vanish at its jump time keeps its state.
    """
    rows = _check_rates(family, states, times)
    n = len(states)
    rows[np.arange(n), states] = 0.0
    rows = np.clip(rows, 0.0, None)
    total = rows.sum(axis=1)
    u = (1.0 - rng.random(n)) * total
    cumulative = np.cumsum(rows, axis=1)
    choice = (cumulative < u[:, None]).sum(axis=1)
    choice = np.minimum(choice, family.m - 1)
    return np.where(total > 0, choice, states)


def _run_block(model, s0, i0, level, n, horizon, rng):
    """
    Simulate n paths from (s0, i0, phi = 0) until the level process first
    exceeds ``level`` or the horizon is reached.
    """
    family = model.family
    v = model.state_space.rates
    t = np.full(n, float(s0))
    state = np.full(n, int(i0))
    phi = np.zeros(n)
    tau = np.full(n, np.inf)
    hit = np.full(n, COFFIN)
    active = np.ones(n, dtype=bool)

    while active.any():
        idx = np.nonzero(active)[0]
        st, tt, ph = state[idx], t[idx], phi[idx]
        t_next = _next_jump_times(family, st, tt, horizon, rng)
        seg_end = np.minimum(t_next, horizon)
        slope = v[st]
        reach = ph + slope * (seg_end - tt)
        crossed = (slope > 0) & (reach > level)
        if crossed.any():
            k = idx[crossed]
            tau[k] = tt[crossed] + (level - ph[crossed]) / slope[crossed]
            hit[k] = st[crossed]
            active[k] = False
        go = ~crossed
        k = idx[go]
        phi[k] = reach[go]
        t[k] = seg_end[go]
        stopped = go & ~np.isfinite(t_next)
        active[idx[stopped]] = False
        jumping = go & np.isfinite(t_next)
        if jumping.any():
            k = idx[jumping]
            state[k] = _destinations(family, state[k], t[k], rng)
    return tau, hit, state


def default_horizon(model, s0, level, g=None):
    horizon = s0 + 20.0 / model.state_space.v_min * max(level, 1.0)
    if g is not None and np.isfinite(g.support):
        horizon = max(horizon, g.support)
    return horizon


def _effective(model, sign):
    if sign not in ("plus", "minus"):
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    return model if sign == "plus" else model.reflected()


def _blocks(n, block_size):
    count = -(-n // block_size)
    return [(b, min(block_size, n - b * block_size)) for b in range(count)]


def _map_blocks(fn, n, block_size, threads):
    blocks = _blocks(n, block_size)
    threads = thread_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(blocks) == 1:
        return [fn(b, size) for b, size in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map yields in submission order
        return list(pool.map(lambda job: fn(*job), blocks))


def sample_path(model, s0, i0, horizon, rng):
    """
    One full path on [s0, horizon] with the breakpoints of the level process.
    """
    if not horizon > s0 >= 0:
        raise ValueError(f"Need horizon > s0 >= 0, got s0={s0}, horizon={horizon}")
    family = model.family
    v = model.state_space.rates
    t, state, phi = float(s0), int(i0), 0.0
    jump_times, states, phis = [], [state], [phi]
    while True:
        t_next = _next_jump_times(family, np.array([state]), np.array([t]), horizon, rng)[0]
        end = min(t_next, horizon)
        phi += v[state] * (end - t)
        t = end
        phis.append(phi)
        if not np.isfinite(t_next):
            break
        new = int(_destinations(family, np.array([state]), np.array([t]), rng)[0])
        if new == state:
            phis.pop()
            continue
        jump_times.append(t)
        state = new
        states.append(state)
    return PathSample(
        start=(float(s0), int(i0)),
        jump_times=tuple(jump_times),
        states=tuple(states),
        horizon=float(horizon),
        phi_breakpoints=tuple(phis),
    )


def passage_functional(path, level, sign):
    """
    First time the level process exceeds ``level`` (sign "plus") or falls
    below -``level`` (sign "minus"), by linear interpolation between
    breakpoints.
    """
    if sign not in ("plus", "minus"):
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    direction = 1.0 if sign == "plus" else -1.0
    times = path.times
    for k, state in enumerate(path.states):
        start = direction * path.phi_breakpoints[k]
        end = direction * path.phi_breakpoints[k + 1]
        if end > level and times[k + 1] > times[k]:
            slope = (end - start) / (times[k + 1] - times[k])
            return PassageSample(times[k] + (level - start) / slope, state, False)
    return PassageSample(np.inf, COFFIN, True)


def estimate_expectation(
    model,
    g,
    s0,
    i0,
    level,
    sign="plus",
    n=200_000,
    horizon=None,
    seed=DEFAULT_SEED,
    block_size=DEFAULT_BLOCK_SIZE,
    threads=None,
):
    """
    Estimate E_{s0,i0}[g(tau, X_tau)] for the passage of ``level``; censored
    paths contribute 0.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    effective = _effective(model, sign)
    T = default_horizon(effective, s0, level, g) if horizon is None else float(horizon)
    plus = np.array(effective.state_space.E_plus)

    def run(block, size):
        tau, hit, _ = _run_block(effective, s0, i0, level, size, T, replica_stream(seed, block))
        return tau, hit

    parts = _map_blocks(run, n, block_size, threads)
    tau = np.concatenate([p[0] for p in parts])
    hit = np.concatenate([p[1] for p in parts])
    finite = hit != COFFIN
    if not np.isin(hit[finite], plus).all():
        log_error("a finite passage ended outside the hit class", "Passage Sample")
        raise AssertionError("a finite passage ended outside the hit class")

    values = np.zeros(n)
    for i in np.unique(hit[finite]):
        mask = hit == i
        values[mask] = g.evaluate(tau[mask], int(i))
    censor_fraction = float(1.0 - finite.mean())
    if g.discount:
        bias_bound = g.bound * float(np.exp(-g.discount * T))
    elif g.support <= T:
        bias_bound = 0.0
    else:
        bias_bound = g.bound * censor_fraction
    estimate = Estimate(
        mean=float(values.mean()),
        stderr=float(values.std(ddof=1) / np.sqrt(n)),
        n=int(n),
        censor_fraction=censor_fraction,
        bias_bound=bias_bound,
        seed=int(seed),
    )
    logger("mc_oracle").info(
        "estimate_expectation: sign=%s level=%g n=%d mean=%.6g stderr=%.3g censored=%.4f",
        sign, level, n, estimate.mean, estimate.stderr, censor_fraction,
    )
    return estimate


def _thinning_block(family, s0, i0, n, horizon, count, rng):
    K = family.bound_K
    times = np.full((n, count), np.inf)
    t = np.full(n, float(s0))
    state = np.full(n, int(i0))
    found = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    while active.any():
        idx = np.nonzero(active)[0]
        t[idx] += rng.standard_exponential(len(idx)) / K
        past = t[idx] >= horizon
        active[idx[past]] = False
        idx = idx[~past]
        if not len(idx):
            break
        rows = _check_rates(family, state[idx], t[idx])
        rate = -rows[np.arange(len(idx)), state[idx]]
        accept = rng.random(len(idx)) * K < rate
        k = idx[accept]
        if len(k):
            times[k, found[k]] = t[k]
            found[k] += 1
            if count > 1:
                state[k] = _destinations(family, state[k], t[k], rng)
            active[k[found[k] >= count]] = False
    return times


def _inversion_block(family, s0, i0, n, horizon, count, rng):
    times = np.full((n, count), np.inf)
    t = np.full(n, float(s0))
    state = np.full(n, int(i0))
    active = np.ones(n, dtype=bool)
    for k in range(count):
        idx = np.nonzero(active)[0]
        if not len(idx):
            break
        t_next = _next_jump_times(family, state[idx], t[idx], horizon, rng)
        times[idx, k] = t_next
        jumped = np.isfinite(t_next)
        active[idx[~jumped]] = False
        idx = idx[jumped]
        t[idx] = t_next[jumped]
        if k + 1 < count and len(idx):
            state[idx] = _destinations(family, state[idx], t[idx], rng)
    return times


def sample_jump_times(model, s0, i0, n, seed=DEFAULT_SEED, count=2, horizon=None, method="inversion", block_size=DEFAULT_BLOCK_SIZE, threads=None):
    """
    First ``count`` jump times after s0 for n paths, shape (n, count);
    inf where fewer jumps occur before the horizon.
    """
    sampler = {"inversion": _inversion_block, "thinning": _thinning_block}.get(method)
    if sampler is None:
        raise ValueError(f"method must be 'inversion' or 'thinning', got {method!r}")
    T = s0 + model.horizon if horizon is None else float(horizon)

    def run(block, size):
        return sampler(model.family, s0, i0, size, T, count, replica_stream(seed, block))

    return np.concatenate(_map_blocks(run, n, block_size, threads))


def sample_holding_times(model, s0, i0, n, seed=DEFAULT_SEED, method="inversion", horizon=None, threads=None):
    """
    First holding times r = gamma_1 - s0 of n paths started at (s0, i0).
    """
    return sample_jump_times(model, s0, i0, n, seed, 1, horizon, method, threads=threads)[:, 0] - s0


def state_distribution(model, s0, i0, t, n, seed=DEFAULT_SEED, block_size=DEFAULT_BLOCK_SIZE, threads=None):
    """
    Empirical law of X_t from (s0, i0) and its per-entry standard errors.
    """
    if not t > s0:
        raise ValueError(f"Need t > s0, got s0={s0}, t={t}")

    def run(block, size):
        return _run_block(model, s0, i0, np.inf, size, t, replica_stream(seed, block))[2]

    final = np.concatenate(_map_blocks(run, n, block_size, threads))
    counts = np.bincount(final, minlength=model.m)
    p = counts / n
    return p, np.sqrt(p * (1 - p) / n)
