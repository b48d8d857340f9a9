"""Command-line entry point.

    fracbilin solve        forward solve at the zero control (or --control u.csv)
    fracbilin optimize     projected gradient on the configured problem
    fracbilin diagnose S   property suite S (maxprinciple, estimates, lipschitz,
                           derivatives, adjointness, all, none)
    fracbilin uniqueness   multi-start comparison over one or more alpha values
    fracbilin sosc         optimize, then sample the critical cone
    fracbilin dump-operator

Exit codes: 0 success, 1 usage or validation error, 2 solver error,
3 a check failed under --strict.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .artifacts import (OutputDirNotEmpty, RunManifest, config_hash, prepare_out_dir,
                        read_field_csv, write_field_csv, write_json)
from .diagnostics import SUITES, run_suite
from .discretization import build_discretization
from .errors import (DegeneratePair, HistoryTooShort, LineSearchStall, NonFiniteSample,
                     NotConverged, ParseError, SingularSystem, ValidationError)
from .forward import check_estimates, solve_forward
from .fracop import write_matrix_csv
from .optimize import (fixed_point_margin, optimality_residual, solve_pgd, sosc_check,
                       uniqueness_experiment, variational_inequality_slack)
from .problem import Case, load_case, load_default_case, project_control
from .sensitivity import cost

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_STRICT = 0, 1, 2, 3

_SOLVER_ERRORS = (SingularSystem, LineSearchStall, NotConverged, HistoryTooShort,
                  DegeneratePair, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="case file (TOML); the bundled default case if omitted")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=_u64, help="overrides optimizer.seed")
    p.add_argument("--strict", action="store_true", help="exit 3 when a check fails")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty --out")


def _u64(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return val


def _alphas(text: str) -> list[float]:
    try:
        vals = [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list: {text!r}") from None
    if not vals or any(a <= 0 for a in vals):
        raise argparse.ArgumentTypeError("alpha values must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracbilin", description="Bilinear optimal control of a fractional "
                     "diffusion equation with memory.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="forward solve")
    _common(p)
    p.add_argument("--control", help="u.csv from an earlier run (default: zero control)")

    p = sub.add_parser("optimize", help="projected gradient")
    _common(p)

    p = sub.add_parser("diagnose", help="run a property suite")
    p.add_argument("suite", choices=SUITES + ("all", "none"))
    _common(p)

    p = sub.add_parser("uniqueness", help="multi-start uniqueness experiment")
    _common(p)
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--alphas", type=_alphas, help="comma-separated alpha values")

    p = sub.add_parser("sosc", help="second-order checks at the computed minimizer")
    _common(p)
    p.add_argument("--samples", type=int, default=50)

    p = sub.add_parser("dump-operator", help="write the assembled stiffness matrix")
    _common(p)
    return parser


def _load(args) -> Case:
    if args.config:
        case = load_case(args.config)
    else:
        case = load_default_case()
    if args.seed is not None:
        case = dataclasses.replace(case, optimizer=dataclasses.replace(case.optimizer,
                                                                        seed=args.seed))
    return case


def _initial_control(case: Case, disc):
    zero = np.zeros((disc.N + 1, disc.n))
    return project_control(zero, case.spec, disc.grid)


def _write_fields(out: Path, disc, manifest: RunManifest, **fields) -> dict:
    names = {}
    for key, values in fields.items():
        name = f"{key}.csv"
        write_field_csv(out / name, values, disc.time_grid.times, disc.grid.nodes)
        manifest.outputs.append(name)
        names[key] = name
    return names


def _finish(out, manifest, result_name, doc) -> None:
    if out is None:
        return
    write_json(out / result_name, doc)
    manifest.outputs.append(result_name)
    manifest.write(out)


def cmd_solve(args, case, disc, out, manifest) -> int:
    spec = case.spec
    if args.control:
        raw = read_field_csv(args.control, disc.N + 1, disc.n)
        v = project_control(raw, spec, disc.grid)
    else:
        v = project_control(np.zeros((disc.N + 1, disc.n)), spec, disc.grid)
    y = solve_forward(spec, disc, v)
    records = check_estimates(y, spec, disc, v)
    doc = {"J": cost(spec, disc, v, y), "min_y": float(y.values.min()),
           "max_y": float(y.values.max()), "checks": [r.to_json() for r in records]}
    if out is not None:
        doc["outputs"] = _write_fields(out, disc, manifest, u=v.values, y=y.values)
    _finish(out, manifest, "result.json", doc)
    print(f"J = {doc['J']:.12g}, y in [{doc['min_y']:.6g}, {doc['max_y']:.6g}]")
    ok = all(r.passed for r in records)
    return EXIT_STRICT if args.strict and not ok else EXIT_OK


def _optimize(case, disc):
    return solve_pgd(case.spec, disc, case.optimizer, _initial_control(case, disc))


def cmd_optimize(args, case, disc, out, manifest) -> int:
    spec = case.spec
    res = _optimize(case, disc)
    u, y, q = res.u_opt, res.y_opt, res.q_opt
    slack = variational_inequality_slack(u, y, q, spec, disc, 100,
                                         np.random.default_rng(case.optimizer.seed))
    doc = res.to_json()
    doc.update({
        "seed": case.optimizer.seed,
        "final_residual": optimality_residual(u, y, q, spec, disc),
        "fixed_point_margin": fixed_point_margin(u, y, q, spec, disc),
        "variational_inequality_min_slack": float(slack.min()),
    })
    if out is not None:
        doc["outputs"] = _write_fields(out, disc, manifest, u=u.values, y=y.values, q=q.values)
    _finish(out, manifest, "result.json", doc)
    print(f"converged={res.converged} iterations={res.iterations} "
          f"J={res.J_history[-1]:.12g} residual={doc['final_residual']:.3e}")
    return EXIT_STRICT if args.strict and not res.converged else EXIT_OK


def cmd_diagnose(args, case, disc, out, manifest) -> int:
    report = run_suite(case.spec, disc, args.suite, case.optimizer.seed)
    sys.stdout.write(report.table())
    _finish(out, manifest, "report.json", report.to_json())
    return EXIT_STRICT if args.strict and not report.all_passed else EXIT_OK


def cmd_uniqueness(args, case, disc, out, manifest) -> int:
    alphas = args.alphas or [case.spec.alpha]
    reports = []
    for a in alphas:
        spec = dataclasses.replace(case.spec, alpha=a)
        rep = uniqueness_experiment(spec, disc, case.optimizer, args.starts)
        reports.append(rep)
        print(f"alpha={a:g} max_distance={rep.max_distance:.3e} C_emp={rep.C_emp:.3e} "
              f"unique={rep.unique}")
    order = sorted(reports, key=lambda r: r.alpha)
    dists = [r.max_distance for r in order]
    monotone = all(b <= a for a, b in zip(dists, dists[1:]))
    doc = {"runs": [r.to_json() for r in reports], "monotone_in_alpha": monotone}
    _finish(out, manifest, "uniqueness.json", doc)
    failed = any(r.unique is False for r in reports) or not monotone
    return EXIT_STRICT if args.strict and failed else EXIT_OK


def cmd_sosc(args, case, disc, out, manifest) -> int:
    res = _optimize(case, disc)
    rep = sosc_check(res.u_opt, res.y_opt, res.q_opt, case.spec, disc,
                     n_samples=args.samples, seed=case.optimizer.seed)
    doc = {"optimizer": res.to_json(), "sosc": rep.to_json()}
    if out is not None:
        doc["outputs"] = _write_fields(out, disc, manifest, u=res.u_opt.values)
    _finish(out, manifest, "sosc.json", doc)
    print(f"cone samples={rep.n_samples} min J''v^2/|v|^2={rep.min_normalized:.6g} "
          f"beta={rep.beta:.6g} necessary={rep.necessary_ok} growth={rep.growth_ok}")
    ok = res.converged and rep.necessary_ok and rep.growth_ok
    return EXIT_STRICT if args.strict and not ok else EXIT_OK


def cmd_dump_operator(args, case, disc, out, manifest) -> int:
    a = disc.stiffness
    print(f"n={a.n} s={a.s:g} h={a.h:.17g} min diag={a.a.diagonal().min():.6g}")
    if out is not None:
        write_matrix_csv(a, out / "operator.csv")
        manifest.outputs.append("operator.csv")
        manifest.write(out)
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "diagnose": cmd_diagnose,
    "uniqueness": cmd_uniqueness,
    "sosc": cmd_sosc,
    "dump-operator": cmd_dump_operator,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        case = _load(args)
        out = prepare_out_dir(args.out, args.force) if args.out else None
        disc = build_discretization(case.spec, case.n_interior, case.n_steps)
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ParseError, ValidationError, NonFiniteSample, OutputDirNotEmpty, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest = RunManifest(config_hash(case), " ".join(["fracbilin"] + argv))
    try:
        return _COMMANDS[args.command](args, case, disc, out, manifest)
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValidationError, NonFiniteSample, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
