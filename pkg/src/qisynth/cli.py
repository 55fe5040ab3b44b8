"""Command-line entry point.

Subcommands: ``qi-check``, ``synthesize``, ``simulate``, ``explain``.

Exit codes:

* 0  success (QI holds, synthesis optimal, robustly feasible)
* 1  error (bad input, schema violation, vertex budget exceeded, ...)
* 2  negative verdict (structure not QI, or a constraint violation was found)
* 3  synthesis QP infeasible
* 4  solver stopped without converging

Every flag can also be set through an environment variable named ``DCS_``
plus the upper-cased flag name (``--eps-abs`` -> ``DCS_EPS_ABS``). Flags win
over the environment, which wins over the problem file's ``options``.
"""
from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import io
from .qi import enumerate_conditions, qi_test, qi_test_general
from .qpsolve import Settings
from .robust import export_triplets, synthesize
from .sim import VertexBudgetExceeded, rollout_output_feedback, verify_robust

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE, EXIT_INFEASIBLE, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4


class CLIError(Exception):
    pass


def _env(name: str, conv=str):
    val = os.environ.get("DCS_" + name)
    if val in (None, ""):
        return None
    try:
        return conv(val)
    except ValueError as exc:
        raise CLIError(f"DCS_{name}={val!r}: {exc}") from exc


def _flag(args, attr: str, conv=str):
    val = getattr(args, attr, None)
    return val if val is not None else _env(attr.upper(), conv)


def _truthy(val: str) -> bool:
    return val.strip().lower() in ("1", "true", "yes", "on")


def _tol_mode(args, prob: io.ProblemFile) -> tuple[float, str]:
    tol = _flag(args, "tol", float)
    mode = _flag(args, "delta_mode")
    mode = mode if mode is not None else prob.delta_mode
    if mode not in ("numeric", "structural"):
        raise CLIError(f"delta mode must be numeric or structural, got {mode!r}")
    return (tol if tol is not None else prob.tol), mode


def _emit(args, payload: dict) -> None:
    no_ts = args.no_timestamp or _truthy(os.environ.get("DCS_NO_TIMESTAMP", ""))
    if not no_ts:
        payload["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    text = io.dumps(payload) + "\n"
    out = _flag(args, "out")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands ----------------------------------------------------------------

def cmd_qi_check(args) -> int:
    prob = io.load_problem(args.file)
    tol, mode = _tol_mode(args, prob)
    test = qi_test_general if args.general else qi_test
    report = test(prob.info, prob.plant, mode=mode, tol=tol)
    payload = {"command": "qi-check", "structure_kind": prob.info.kind, "N": prob.N}
    payload.update(report.to_dict())
    payload["failing"] = [list(c.index) for c in report.failing]
    _emit(args, payload)
    return EXIT_OK if report.quadratically_invariant else EXIT_NEGATIVE


def _settings(args) -> Settings:
    return Settings.from_env(eps_abs=_flag(args, "eps_abs", float),
                             eps_rel=_flag(args, "eps_rel", float),
                             max_iters=_flag(args, "max_iters", int),
                             seed=_flag(args, "seed", int))


def cmd_synthesize(args) -> int:
    prob = io.load_problem(args.file)
    if prob.constraints is None:
        raise CLIError("synthesis needs a 'constraints' section in the problem file")
    tol, mode = _tol_mode(args, prob)
    force = args.force_restrict or _truthy(os.environ.get("DCS_FORCE_RESTRICT", ""))
    reg = _flag(args, "regularize_q", float) or 0.0
    res = synthesize(prob.plant, prob.info, prob.constraints, prob.cost, prob.x0,
                     settings=_settings(args), mode=mode, tol=tol, force_restrict=force,
                     regularize_q=reg)
    payload = {"command": "synthesize"}
    payload.update(res.summary())
    if res.qi is not None:
        payload["failing_conditions"] = [list(c.index) for c in res.qi.failing]
    if force and res.qi is not None and not res.qi.quadratically_invariant:
        payload["note"] = ("structure is not quadratically invariant; Q was restricted to the "
                           "structure, so the result is a restriction of the original problem "
                           "and the controller L may leave the structure")
    if res.controller is not None:
        payload["controller"] = io.controller_to_dict(res.controller, res.policy)
    export = _flag(args, "export_qp")
    if export and res.problem is not None:
        Path(export).write_text(io.dumps(export_triplets(res.problem)) + "\n")
    _emit(args, payload)
    if res.status == "not_qi":
        print("structure is not quadratically invariant; rerun with --force-restrict "
              "to synthesize over the restricted set", file=sys.stderr)
        return EXIT_NEGATIVE
    if res.status == "infeasible":
        return EXIT_INFEASIBLE
    if res.status != "optimal":
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_simulate(args) -> int:
    prob = io.load_problem(args.file)
    if prob.constraints is None:
        raise CLIError("simulation needs a 'constraints' section in the problem file")
    raw = io.load_json(args.controller)
    ctrl = io.controller_from_dict(raw.get("controller", raw))
    if (ctrl.N, ctrl.m, ctrl.p) != (prob.N, prob.plant.m, prob.plant.p):
        raise CLIError(f"controller is for (N, m, p) = {(ctrl.N, ctrl.m, ctrl.p)}, problem has "
                       f"{(prob.N, prob.plant.m, prob.plant.p)}")
    samples = _flag(args, "samples", int)
    use_vertices = args.vertices or (samples is None)
    if use_vertices:
        report = verify_robust(prob.plant, ctrl, prob.constraints, prob.x0, method="vertices")
    else:
        report = verify_robust(prob.plant, ctrl, prob.constraints, prob.x0, method="sample",
                               count=samples, seed=_flag(args, "seed", int))
    n = prob.plant.n
    nominal = rollout_output_feedback(prob.plant, ctrl, prob.x0, np.zeros((prob.N, n)), prob.cost)
    payload = {"command": "simulate", "report": report.to_dict(),
               "nominal_trajectory": nominal.to_dict()}
    if report.worst_w is not None:
        worst = rollout_output_feedback(prob.plant, ctrl, prob.x0, report.worst_w, prob.cost)
        payload["worst_trajectory"] = worst.to_dict()
    _emit(args, payload)
    return EXIT_OK if report.ok else EXIT_NEGATIVE


_READING = ("what controllers at time {k} know about y_{h} must include what influenced it: "
            "inputs at time {t} that use y_{j} reach y_{h} through C A^{g} B, "
            "so time-{k} controllers must also see y_{j}")


def explain_lines(prob: io.ProblemFile, tol: float, mode: str) -> list[str]:
    conds = enumerate_conditions(prob.N)
    if not conds:
        return ["no conditions"]
    verdict = {c.index: c for c in qi_test_general(prob.info, prob.plant, mode=mode, tol=tol).conditions}
    lines = []
    for k, j, h, g in conds:
        t = h - g - 1
        c = verdict[(k, j, h, g)]
        status = "holds" if c.holds else "VIOLATED at " + ", ".join(
            f"({a},{b})" for a, b in c.violations)
        lines.append(f"({k},{j},{h},{g})  S[{k},{h}] Delta_{g} S[{t},{j}] <= S[{k},{j}]  "
                     f"[{status}]  " + _READING.format(k=k, h=h, t=t, j=j, g=g))
    return lines


def cmd_explain(args) -> int:
    prob = io.load_problem(args.file)
    tol, mode = _tol_mode(args, prob)
    text = "\n".join(explain_lines(prob, tol, mode)) + "\n"
    out = _flag(args, "out")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with other errors; 2 is a verdict
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qisynth", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, solver=False):
        p.add_argument("file", help="problem JSON file")
        p.add_argument("--tol", type=float, help="zero tolerance for sparsity patterns")
        p.add_argument("--delta-mode", choices=["numeric", "structural"])
        p.add_argument("--out", help="write the result here instead of stdout")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit the generation time so reports are byte-reproducible")
        p.add_argument("--seed", type=int)
        if solver:
            p.add_argument("--eps-abs", type=float)
            p.add_argument("--eps-rel", type=float)
            p.add_argument("--max-iters", type=int)

    p = sub.add_parser("qi-check", help="certify quadratic invariance")
    common(p)
    p.add_argument("--general", action="store_true",
                   help="always run the full (k, j, h, g) test instead of the reduced one")
    p.set_defaults(func=cmd_qi_check)

    p = sub.add_parser("synthesize", help="solve the robust synthesis QP")
    common(p, solver=True)
    p.add_argument("--force-restrict", action="store_true",
                   help="synthesize even if the structure is not quadratically invariant")
    p.add_argument("--regularize-q", type=float,
                   help="small Tikhonov weight on the Q entries (e.g. 1e-8)")
    p.add_argument("--export-qp", help="also write the assembled QP as sparse triplet JSON")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="roll out a controller and check robust feasibility")
    common(p)
    p.add_argument("--controller", required=True, help="controller JSON (synthesize output)")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--vertices", action="store_true", help="enumerate vertex sequences (default)")
    grp.add_argument("--samples", type=int, help="check K uniformly sampled sequences")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("explain", help="list the QI conditions with their reading")
    common(p)
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    try:
        return args.func(args)
    except (io.ProblemFileError, CLIError, VertexBudgetExceeded, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
