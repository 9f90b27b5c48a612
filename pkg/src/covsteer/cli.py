"""Command-line interface.

Subcommands::

    covsteer validate SCENARIO
    covsteer solve    SCENARIO [--mode MODE] [--backend S] [--tol T]
                               [--max-iters N] [--out DIR] [--dump-program F]
    covsteer simulate SCENARIO [--mode MODE] [--samples N] [--seed S] ...
    covsteer run-all  SCENARIO [--out DIR] ...

SCENARIO is a path or the name of a bundled scenario (``di``,
``vehicle``).  ``solve`` stops after the optimization; ``simulate`` adds
the seeded Monte-Carlo validation; ``run-all`` runs every controller mode
and emits a result bundle per mode.

Exit codes: 0 success, 1 bad input (parse/schema/validation), 2 the conic
program was infeasible, 3 the backend failed numerically, 4 a simulation
check failed.  ``run-all`` requires optimal conic solves and passing
simulation checks for the chance mode; the mean-only chance check is
diagnostic only (it is expected to fail on problems where covariance must
be steered).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .backends import ENV_BACKEND
from .conic import InfeasibleError, NumericalFailure, dump_program
from .problem import InvalidProblem, validate
from .scenario import (
    MODES,
    ParseError,
    ResultBundle,
    SchemaError,
    bundled_scenario,
    emit,
    parse_scenario,
    run,
)

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3
EXIT_SIM_CHECK = 4


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    try:
        return bundled_scenario(arg)
    except FileNotFoundError:
        raise FileNotFoundError(
            f"'{arg}' is neither a file nor a bundled scenario"
        ) from None


def _sim_checks_pass(bundle: ResultBundle) -> bool:
    """Empirical violation within three binomial standard errors of budget."""
    sim = bundle.sim_report
    if sim is None or not sim.row_risks.size:
        return True
    n = sim.n
    ok = True
    for freq, risk in zip(sim.row_freqs, sim.row_risks):
        margin = 3.0 * math.sqrt(risk * (1.0 - risk) / n)
        ok = ok and freq <= risk + margin
    total = float(sim.row_risks.sum())
    margin = 3.0 * math.sqrt(total * (1.0 - total) / n)
    return ok and sim.union_freq <= total + margin


def _print_bundle(bundle: ResultBundle) -> None:
    print(f"[{bundle.mode}] cost = {bundle.cost:.6f}")
    if bundle.solve_report is not None:
        r = bundle.solve_report
        print(
            f"  solver: {r.status} ({r.backend}, {r.iterations} iters), "
            f"terminal mean residual {r.terminal_mean_residual:.2e}, "
            f"terminal cov slack {r.terminal_cov_slack:.2e}"
        )
        if r.chance_residuals.size:
            print(f"  max chance residual {r.max_chance_residual:.2e}")
    if bundle.chance_check is not None:
        c = bundle.chance_check
        state = "satisfied" if c.feasible else "VIOLATED"
        print(
            f"  chance rows {state}: worst {c.worst_label} "
            f"residual {c.worst_residual:.3e}"
        )
    if bundle.sim_report is not None:
        s = bundle.sim_report
        print(
            f"  simulation: n={s.n}, cost {s.cost_mean:.4f} "
            f"+/- {s.cost_stderr:.4f}, union violation {s.union_freq:.4g}"
        )


def _run_modes(args, modes, simulate: bool) -> int:
    try:
        spec, options = parse_scenario(_resolve_scenario(args.scenario))
    except (FileNotFoundError, ParseError, SchemaError, InvalidProblem) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    overrides = {}
    for key in ("backend", "tol", "max_iters", "samples", "seed"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            overrides[key] = value
    if overrides:
        from dataclasses import replace

        options = replace(options, **overrides)

    outdir = args.out or options.output_dir
    exit_code = EXIT_OK
    for mode in modes:
        try:
            bundle = run(spec, mode, options, simulate=simulate,
                         keep_samples=bool(args.samples_csv))
        except InfeasibleError as exc:
            print(f"[{mode}] infeasible: {exc.report.message or 'no feasible gain'}",
                  file=sys.stderr)
            exit_code = max(exit_code, EXIT_INFEASIBLE)
            continue
        except NumericalFailure as exc:
            print(f"[{mode}] solver failure: {exc.report.message}", file=sys.stderr)
            exit_code = max(exit_code, EXIT_NUMERICAL)
            continue
        _print_bundle(bundle)
        if outdir:
            paths = emit(bundle, outdir, include_samples=bool(args.samples_csv))
            print(f"  wrote {', '.join(str(p) for p in paths)}")
        if mode == "chance" and simulate and not _sim_checks_pass(bundle):
            print(f"[{mode}] simulation checks FAILED", file=sys.stderr)
            exit_code = max(exit_code, EXIT_SIM_CHECK)
    return exit_code


def _cmd_validate(args) -> int:
    try:
        path = _resolve_scenario(args.scenario)
        spec, _ = parse_scenario(path)
    except (FileNotFoundError, ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except InvalidProblem as exc:
        print(exc.report, file=sys.stderr)
        return EXIT_BAD_INPUT
    print(validate(spec))
    return EXIT_OK


def _cmd_solve(args) -> int:
    if args.dump_program:
        try:
            spec, _ = parse_scenario(_resolve_scenario(args.scenario))
        except (FileNotFoundError, ParseError, SchemaError, InvalidProblem) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BAD_INPUT
        from .chance import make_rows
        from .conic import assemble
        from .lifting import build_lifted, lift_halfspaces

        lifted = build_lifted(spec)
        rows = (
            make_rows(lift_halfspaces(spec, lifted), lifted)
            if args.mode == "chance"
            else ()
        )
        program = assemble(lifted, spec.muN, spec.SigmaN, rows=rows)
        dump_program(program, args.dump_program)
        print(f"wrote program dump to {args.dump_program}")
    return _run_modes(args, [args.mode], simulate=False)


def _cmd_simulate(args) -> int:
    return _run_modes(args, [args.mode], simulate=True)


def _cmd_run_all(args) -> int:
    return _run_modes(args, list(MODES), simulate=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="covsteer",
        description="Covariance steering under chance constraints.",
        epilog=f"Default solver comes from ${ENV_BACKEND} (CLARABEL otherwise).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_mode=True):
        p.add_argument("scenario", help="scenario path or bundled name (di, vehicle)")
        if with_mode:
            p.add_argument("--mode", choices=MODES, default="chance")
        p.add_argument("--backend", help="conic solver name (CLARABEL, SCS, ...)")
        p.add_argument("--tol", type=float, help="solver tolerance")
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--samples", type=int, help="Monte-Carlo sample count")
        p.add_argument("--seed", type=int, help="Monte-Carlo seed")
        p.add_argument("--out", help="output directory for result bundles")
        p.add_argument(
            "--samples-csv",
            action="store_true",
            help="also emit per-rollout terminal states",
        )

    p_val = sub.add_parser("validate", help="parse and validate a scenario")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=_cmd_validate)

    p_solve = sub.add_parser("solve", help="solve one controller mode")
    add_common(p_solve)
    p_solve.add_argument(
        "--dump-program", help="write the assembled conic program to this file"
    )
    p_solve.set_defaults(func=_cmd_solve)

    p_sim = sub.add_parser("simulate", help="solve then Monte-Carlo validate")
    add_common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_all = sub.add_parser("run-all", help="run every controller mode")
    add_common(p_all, with_mode=False)
    p_all.set_defaults(func=_cmd_run_all)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
