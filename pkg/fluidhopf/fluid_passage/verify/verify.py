# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Cross-validation suites. Each suite returns
{"ok": bool, "name": str, "checks": [{"ok", "name", "measured", "tolerance", "message"}, ...]}
and records a failing check instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from fluidhopf import hooks
from fluidhopf.exceptions import ConfigError, FluidHopfError
from fluidhopf.fluid_passage.evolution.evolution import evolution_matrix
from fluidhopf.fluid_passage.homog_wh.homog_wh import factorize
from fluidhopf.fluid_passage.mc_oracle.mc_oracle import (
    DEFAULT_SEED,
    estimate_expectation,
    sample_holding_times,
    sample_jump_times,
    state_distribution,
)
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
    extract_J,
    extract_P,
    solve_passage,
)
from fluidhopf.fluid_passage.queries.queries import TABLE_STRIDE, composition_residual, homog_crosscheck
from fluidhopf.utils import get_attr, log_error, logger, thread_count

DEFAULT_TOLERANCES = {
    "residual": 1e-10,
    "closed_form": 1e-12,
    "halving_ratio": 1.8,
    "identity_ratio": 1.8,
    "std_errors": 3.0,
    "marginal_std_errors": 4.0,
    "ks_level": 0.01,
    "composition_factor": 2.0,
}

SPACE = StateSpace(("+1", "-1"), (1.0, -1.0))
FLIP = np.array([[-1.0, 1.0], [1.0, -1.0]])
ABSORBING = np.array([[-1.0, 1.0], [0.0, 0.0]])
IDENTITY_ETA = 8.0
SLACK = 1e-12


def check_tolerances(tolerances):
    """Reject unknown suite tolerance names and non-numeric values."""
    if not isinstance(tolerances, dict):
        raise ConfigError(f"numerics.tolerances must be an object, got {tolerances!r}")
    for key, value in tolerances.items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown config key numerics.tolerances.{key}; choose from {sorted(DEFAULT_TOLERANCES)}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"numerics.tolerances.{key} must be a number, got {value!r}")


@dataclass(frozen=True)
class SuiteSettings:
    n_paths: int = 200_000
    n_jumps: int = 100_000
    battery_size: int = 200
    ds: float = 1e-3
    da: float = 1e-3
    evolution_step: float = 1e-3
    seed: int = DEFAULT_SEED
    threads: int | None = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        check_tolerances(self.tolerances)

    @classmethod
    def from_config(cls, config):
        verify = config.section("verify")
        numerics = config.section("numerics")
        return cls(
            n_paths=int(verify["n_paths"]),
            n_jumps=int(verify["n_jumps"]),
            battery_size=int(verify["battery_size"]),
            ds=float(verify["ds"]),
            da=float(verify["da"]),
            evolution_step=float(numerics["evolution_step"]),
            seed=int(numerics["seed"]),
            threads=thread_count(),
            tolerances=dict(numerics["tolerances"]),
        )

    def tolerance(self, key):
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    @property
    def grid(self):
        return GridParams(ds=self.ds, da=self.da, store_stride=TABLE_STRIDE)


def sinusoidal_model():
    """Lambda_s = (1 + 0.5 sin s) [[-1, 1], [1, -1]] with v = (1, -1)."""
    family = FourierPolynomialFamily(FLIP, fourier=[FourierTerm(0.5 * FLIP, 1.0, 0.0)], bound_K=1.5)
    return FluidModel(SPACE, family)


def random_generator(rng, m):
    """
    Random conservative generator on m >= 2 states with both rate classes
    present.
    """
    off = rng.uniform(0, 5.0 / (m - 1), size=(m, m))
    np.fill_diagonal(off, 0.0)
    matrix = off - np.diag(off.sum(axis=1))
    signs = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    signs[0], signs[1] = 1.0, -1.0
    rates = signs * rng.uniform(0.5, 2.0, size=m)
    return matrix, StateSpace(tuple(f"s{k}" for k in range(m)), tuple(rates))


def _check(name, measured, tolerance, ok, message=""):
    return {"ok": bool(ok), "name": name, "measured": measured, "tolerance": tolerance, "message": message}


def _within(name, measured, tolerance, message=""):
    return _check(name, float(measured), float(tolerance), measured <= tolerance, message)


def _run_checks(suite, parts):
    checks = []
    for name, fn in parts:
        try:
            checks.extend(fn())
        except Exception as e:
            log_error(f"{suite}.{name}: {e}", "Verify Suite")
            checks.append(_check(name, None, None, False, f"{type(e).__name__}: {e}"))
    ok = all(c["ok"] for c in checks)
    logger("verify").info("suite %s: %d/%d checks passed", suite, sum(c["ok"] for c in checks), len(checks))
    return {"ok": ok, "name": suite, "checks": checks}


def _battery(settings):
    rng = np.random.default_rng(settings.seed)
    worst = {"residual": 0.0, "pi_range": 0.0, "pi_rows": -np.inf, "q_offdiag": 0.0, "q_rows": -np.inf}
    failures = []
    for k in range(settings.battery_size):
        matrix, space = random_generator(rng, int(rng.integers(2, 9)))
        for c in (0.1, 1.0, 10.0):
            try:
                fact = factorize(matrix, space, c)
            except FluidHopfError as e:
                failures.append(f"case {k} c={c}: {e}")
                continue
            worst["residual"] = max(worst["residual"], fact.residual)
            for Pi in (fact.Pi_plus, fact.Pi_minus):
                if Pi.size:
                    worst["pi_range"] = max(worst["pi_range"], -Pi.min(), Pi.max() - 1.0)
                    worst["pi_rows"] = max(worst["pi_rows"], Pi.sum(axis=1).max())
            for Q in (fact.Q_plus, fact.Q_minus):
                off = Q - np.diag(np.diag(Q))
                worst["q_offdiag"] = max(worst["q_offdiag"], -off.min())
                worst["q_rows"] = max(worst["q_rows"], Q.sum(axis=1).max())
    cases = f"{settings.battery_size} generators x 3 discounts"
    return [
        _check("battery_failures", len(failures), 0, not failures, "; ".join(failures[:3]) or cases),
        _within("factorization_residual", worst["residual"], settings.tolerance("residual"), cases),
        _within("pi_entries_in_unit_interval", worst["pi_range"], SLACK),
        _check("pi_row_sums_below_one", float(worst["pi_rows"]), 1.0, worst["pi_rows"] < 1.0),
        _within("q_offdiagonal_nonnegative", worst["q_offdiag"], SLACK),
        _within("q_row_sums_nonpositive", worst["q_rows"], SLACK),
    ]


def _closed_form(settings):
    fact = factorize(FLIP, SPACE, 1.0)
    tol = settings.tolerance("closed_form")
    return [
        _within("closed_form_pi_plus", abs(fact.Pi_plus[0, 0] - (2.0 - np.sqrt(3.0))), tol),
        _within("closed_form_q_plus", abs(fact.Q_plus[0, 0] + np.sqrt(3.0)), tol),
    ]


def _crosscheck(settings):
    model = FluidModel(SPACE, ConstantFamily(FLIP))
    coarse = homog_crosscheck(model, 1.0, 1.0, settings.grid, threads=settings.threads)
    fine = homog_crosscheck(model, 1.0, 1.0, settings.grid.halved(), threads=settings.threads)
    ratio = coarse["deviation"] / fine["deviation"] if fine["deviation"] > 0 else np.inf
    minimum = settings.tolerance("halving_ratio")
    return [
        _check("solver_vs_closed_form", coarse["deviation"], coarse["tolerance"], coarse["ok"], coarse["message"]),
        _check("grid_halving_ratio", float(ratio), minimum, ratio >= minimum),
    ]


def homog_suite(settings=None):
    """Random factorization battery, scalar closed form, solver cross-check."""
    settings = settings or SuiteSettings()
    return _run_checks("homog", [
        ("battery", lambda: _battery(settings)),
        ("closed_form", lambda: _closed_form(settings)),
        ("crosscheck", lambda: _crosscheck(settings)),
    ])


def _absorbing_passages(settings):
    model = FluidModel(SPACE, ConstantFamily(ABSORBING))
    g = BoundaryFunction.indicator((0,))
    k = settings.tolerance("std_errors")
    checks = []
    for level in (0.5, 1.0, 2.0):
        est = estimate_expectation(model, g, 0.0, 0, level, n=settings.n_paths, seed=settings.seed, threads=settings.threads)
        checks.append(_within(
            f"finite_passage_fraction_level_{level:g}",
            abs(est.mean - np.exp(-level)),
            k * est.stderr,
            f"mean {est.mean:.6f} vs {np.exp(-level):.6f}",
        ))
    return checks


def _pde_vs_mc(settings):
    model = sinusoidal_model()
    g = BoundaryFunction.exp_indicator(1.0, 0)
    k = settings.tolerance("std_errors")
    checks = []
    for level in (0.5, 1.0):
        F = solve_passage(model, g, level, settings.grid)
        for i0 in range(model.m):
            est = estimate_expectation(model, g, 0.0, i0, level, n=settings.n_paths, seed=settings.seed, threads=settings.threads)
            pde = float(F.at_zero[0, i0])
            checks.append(_within(
                f"pde_vs_mc_level_{level:g}_from_{SPACE.labels[i0]}",
                abs(pde - est.mean),
                k * est.stderr + est.bias_bound + F.grid.ds + F.grid.da,
                f"pde {pde:.6f} mc {est.mean:.6f}",
            ))
    return checks


def inhomog_suite(settings=None):
    """Generator-PDE values against the Monte Carlo oracle."""
    settings = settings or SuiteSettings()
    return _run_checks("inhomog", [
        ("absorbing", lambda: _absorbing_passages(settings)),
        ("pde_vs_mc", lambda: _pde_vs_mc(settings)),
    ])


def _holding_laws(settings):
    level = settings.tolerance("ks_level")
    cases = [
        ("constant", FluidModel(SPACE, ConstantFamily(FLIP)), "expon"),
        ("sinusoidal", sinusoidal_model(), lambda r: 1.0 - np.exp(-r - 0.5 * (1.0 - np.cos(r)))),
    ]
    checks = []
    for label, model, cdf in cases:
        for method in ("inversion", "thinning"):
            r = sample_holding_times(model, 0.0, 0, settings.n_jumps, settings.seed, method, threads=settings.threads)
            result = stats.kstest(r, cdf)
            checks.append(_check(
                f"ks_{label}_{method}",
                float(result.pvalue),
                level,
                result.pvalue > level,
                f"statistic {result.statistic:.4g}",
            ))
    return checks


def _second_jump(settings):
    model = sinusoidal_model()
    K = model.family.bound_K
    times = sample_jump_times(model, 0.0, 0, settings.n_jumps, settings.seed, count=2, threads=settings.threads)
    checks = []
    for r in (0.01, 0.05, 0.1):
        p = float((times[:, 1] <= r).mean())
        stderr = np.sqrt(max(p * (1 - p), SLACK) / len(times))
        checks.append(_within(f"second_jump_r_{r:g}", p, K**2 * r**2 + settings.tolerance("std_errors") * stderr))
    return checks


def _marginals(settings):
    model = sinusoidal_model()
    p, se = state_distribution(model, 0.0, 0, 1.0, settings.n_jumps, settings.seed, threads=settings.threads)
    exact = evolution_matrix(model, 0.0, 1.0, settings.evolution_step).P[0]
    z = float(np.max(np.abs(p - exact) / np.maximum(se, SLACK)))
    return [_within("marginals_vs_evolution", z, settings.tolerance("marginal_std_errors"), "in standard errors")]


def jumps_suite(settings=None):
    """Holding-time laws, second-jump bound, marginals against the evolution system."""
    settings = settings or SuiteSettings()
    return _run_checks("jumps", [
        ("holding_laws", lambda: _holding_laws(settings)),
        ("second_jump", lambda: _second_jump(settings)),
        ("marginals", lambda: _marginals(settings)),
    ])


def _one_solve_error(model, g, level, params):
    """Richardson estimate: distance between a solve and its halved-grid solve."""
    coarse = solve_passage(model, g, level, params)
    fine = solve_passage(model, g, level, params.halved())
    s = coarse.grid.s_nodes
    refined = np.stack([np.interp(s, fine.grid.s_nodes, fine.at_zero[:, i]) for i in range(model.m)], axis=-1)
    return float(np.abs(coarse.at_zero - refined).max())


def _semigroup(settings, model, g):
    params = settings.grid
    half = solve_passage(model, g, 0.5, params)
    P_half = extract_P(half)
    chained = solve_passage(model, BoundaryFunction.table(P_half.s_nodes, P_half.values, P_half.states), 0.5, params)
    direct = solve_passage(model, g, 1.0, params)
    error = _one_solve_error(model, g, 1.0, params)
    factor = settings.tolerance("composition_factor")
    gap = float(np.abs(extract_P(chained).values - extract_P(direct).values).max())
    composition = composition_residual(model, g, 1.0, params)
    return [
        _within("semigroup", gap, factor * error, f"one-solve error {error:.3g}"),
        _within("composition", composition.max_abs, factor * error, f"one-solve error {error:.3g}"),
    ]


def _generator_step(settings, model, g):
    errors = []
    for h in (1e-2, 1e-3):
        params = GridParams(ds=min(settings.ds, h), da=min(settings.da, h), store_stride=TABLE_STRIDE)
        F = solve_passage(model, g, h, params)
        s = F.grid.s_nodes
        keep = s <= IDENTITY_ETA / 2
        quotient = (extract_P(F).column(0) - g.evaluate(s, 0)) / h
        G = apply_G(model, g, extract_J(F))
        errors.append(float(np.abs(quotient - G.column(0))[keep].max()))
    return [_check("generator_step", errors[1], errors[0], errors[1] < errors[0], "error at h=1e-3 against h=1e-2")]


def _derivative_identity(settings, model, g):
    residuals = []
    for params in (settings.grid, settings.grid.halved()):
        F = solve_passage(model, g, 1.0, params)
        J = extract_J(F)
        residuals.append(check_identity_whd(model, g, J, apply_G(model, g, J), params).max_abs)
    ratio = residuals[0] / residuals[1] if residuals[1] > 0 else np.inf
    minimum = settings.tolerance("identity_ratio")
    return [_check("derivative_identity_halving", float(ratio), minimum, ratio >= minimum, f"residual {residuals[0]:.3g}")]


def identities_suite(settings=None):
    """Semigroup, composition and generator identities on the sinusoidal model."""
    settings = settings or SuiteSettings()
    model = sinusoidal_model()
    g = BoundaryFunction.exp_indicator(1.0, 0, eta=IDENTITY_ETA)
    return _run_checks("identities", [
        ("semigroup", lambda: _semigroup(settings, model, g)),
        ("generator_step", lambda: _generator_step(settings, model, g)),
        ("derivative_identity", lambda: _derivative_identity(settings, model, g)),
    ])


def run_suite(name, settings=None):
    """Look up a suite in the ``verify_suites`` hook and run it."""
    path = hooks.verify_suites.get(name)
    if path is None:
        raise ConfigError(f"Unknown verify suite {name!r}; choose one of {sorted(hooks.verify_suites)}")
    return get_attr(path)(settings)
