# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Batch front end: ``fluidhopf [options] CONFIG COMMAND [args]``.

Exit codes: 0 success, 1 config or precondition error, 2 solver error,
3 verify-suite failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from fluidhopf import __version__, hooks
from fluidhopf.config.settings import build_boundary, build_model, load
from fluidhopf.exceptions import ConfigError, FluidHopfError, NotConstantFamily
from fluidhopf.fluid_passage.homog_wh.homog_wh import factorize
from fluidhopf.fluid_passage.mc_oracle.mc_oracle import estimate_expectation
from fluidhopf.fluid_passage.passage_pde.passage_pde import (
    GridParams,
    apply_G,
    extract_J,
    extract_P,
    solve_passage,
)
from fluidhopf.fluid_passage.queries.queries import laplace_passage_table, passage_distribution
from fluidhopf.fluid_passage.verify.verify import SuiteSettings, run_suite
from fluidhopf.utils import (
    clear_error_log,
    error_log,
    get_attr,
    logger,
    thread_count,
    throw,
    write_csv,
    write_json,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_SUITE = 3
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="fluidhopf", description="Passage functionals of Markov-modulated fluid processes.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--out", default=".", type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="overrides numerics.seed")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("config", type=Path)
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("factorize", help="time-homogeneous factorization")
    passage = commands.add_parser("passage", help="generator-equation passage tables")
    passage.add_argument("--laplace", action="store_true", help="also write the Laplace-transform table")
    commands.add_parser("simulate", help="Monte Carlo estimate")
    verify = commands.add_parser("verify", help="run a cross-validation suite")
    verify.add_argument("suite", help=", ".join(sorted(hooks.verify_suites)))
    return parser


def _provenance(config, command):
    return {"config_hash": config.config_hash, "seed": config.seed, "command": command, "version": __version__}


def run_factorize(config, args, out):
    model = build_model(config)
    if not model.family.is_constant:
        throw("factorize requires a constant generator family", NotConstantFamily, "Factorize")
    c = config.section("factorize")["c"]
    fact = factorize(model.generator(0.0), model.state_space, c)
    write_json(out / "factorization.json", {**fact.to_dict(), "config_hash": config.config_hash, "seed": config.seed})
    return EXIT_OK


def run_passage(config, args, out):
    section = config.section("passage")
    numerics = config.section("numerics")
    model = build_model(config)
    labels = model.state_space.labels
    g = build_boundary(section["boundary"], model.state_space, "passage.boundary")
    sign = section["sign"]
    grid = GridParams(
        ds=numerics["ds"],
        da=numerics["da"],
        s_max=section["s_max"],
        a_min=section["a_min"],
        store_stride=section["csv_stride"],
    )
    F = solve_passage(model, g, section["level"], grid, side=sign)
    write_csv(out / "passage.csv", ["s", "state", "a", "value"], F.rows())
    J = extract_J(F)
    write_csv(out / "passage_J.csv", ["s", "state", "value"], J.rows(labels))
    write_csv(out / "passage_P.csv", ["s", "state", "value"], extract_P(F).rows(labels))
    if g.smooth:
        write_csv(out / "passage_G.csv", ["s", "state", "value"], apply_G(model, g, J, side=sign).rows(labels))

    if args.laplace:
        table_grid = GridParams(ds=numerics["ds"], da=numerics["da"])
        threads = thread_count()
        table = laplace_passage_table(model, section["c"], section["level"], sign, table_grid, threads)
        write_csv(out / "laplace.csv", ["s", "from_state", "to_state", "value"], table.rows(labels))
        if section["invert_times"]:
            dist = passage_distribution(
                model, section["level"], sign, section["invert_s"], section["invert_times"], table_grid, threads=threads
            )
            write_csv(out / "distribution.csv", ["t", "from_state", "to_state", "value"], dist.rows(labels))
    return EXIT_OK


def run_simulate(config, args, out):
    section = config.section("simulate")
    numerics = config.section("numerics")
    model = build_model(config)
    space = model.state_space
    g = build_boundary(section["boundary"], space, "simulate.boundary")
    try:
        i0 = space.index(section["start"])
    except ValueError:
        raise ConfigError(f"simulate.start: unknown state {section['start']!r}") from None
    estimate = estimate_expectation(
        model,
        g,
        section["s0"],
        i0,
        section["level"],
        sign=section["sign"],
        n=section["n"],
        horizon=section["horizon"],
        seed=config.seed,
        block_size=numerics["block_size"],
        threads=thread_count(),
    )
    write_json(out / "estimate.json", {**estimate.to_dict(), "config_hash": config.config_hash})
    return EXIT_OK


def _format(value):
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def format_report(report):
    lines = [f"suite {report['name']}: {'PASS' if report['ok'] else 'FAIL'}"]
    width = max([len(c["name"]) for c in report["checks"]] + [5])
    for check in report["checks"]:
        lines.append(
            f"  {'PASS' if check['ok'] else 'FAIL'}  {check['name']:<{width}}  "
            f"measured={_format(check['measured'])}  tolerance={_format(check['tolerance'])}  {check['message']}"
        )
    return "\n".join(lines)


def run_verify(config, args, out):
    report = run_suite(args.suite, SuiteSettings.from_config(config))
    print(format_report(report))
    write_json(out / f"verify_{args.suite}.json", {**report, "config_hash": config.config_hash, "seed": config.seed})
    return EXIT_OK if report["ok"] else EXIT_SUITE


def main(argv=None):
    clear_error_log()
    config = out = command = None
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
        config = load(args.config, args.overrides, args.seed)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        command = args.command
        handler = get_attr(hooks.commands[command])
        logger("cli").info("command=%s config_hash=%s seed=%s", args.command, config.config_hash, config.seed)
        return handler(config, args, out)
    except (ConfigError, NotConstantFamily) as e:
        print(f"fluidhopf: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FluidHopfError as e:
        print(f"fluidhopf: solver error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as e:
        # precondition of an operation the config schema cannot express
        print(f"fluidhopf: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        if out is not None and command is not None:
            write_json(out / hooks.provenance_file, _provenance(config, command))
        if out is not None and error_log():
            write_json(out / hooks.error_log_file, error_log())


if __name__ == "__main__":
    raise SystemExit(main())
