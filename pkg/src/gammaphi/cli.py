"""Command-line front end.

Exit codes: 0 success, 2 loss conditions fail, 3 calibration violation
found, 4 inconclusive (including solver failures), 5 counterexample
verification failed, 64 usage or input error.

When ``--out`` is not given and ``GAMMAPHI_OUT_DIR`` is set, reports and
CSV tables are written into that directory under fixed names.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .calibration import SAMPLING_MODES, SCHEMA_VERSION, SamplingPlan, Tolerances, Verdict, certify, summarize, to_json
from .consistency import DiscreteDistribution, adversarial_sequence, surrogate_descent, surrogate_infimum
from .counterexample import DEFAULT_T_GRID, CexParams, profile_table_csv, risk_table_csv, verify_counterexample
from .errors import GammaPhiError, SolverError
from .losses import LossSpec, check_conditions, parse_loss_config, preset
from .risk import SolverOptions, bayes_conditional_risk, conditional_risk, constrained_bayes_risk, extended_risk

EXIT_OK = 0
EXIT_CONDITIONS_FAIL = 2
EXIT_VIOLATION = 3
EXIT_INCONCLUSIVE = 4
EXIT_VERIFICATION_FAIL = 5
EXIT_USAGE = 64

OUT_DIR_ENV = "GAMMAPHI_OUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_loss_args(parser: argparse.ArgumentParser, k_default: int | None = 3) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--loss", default=None, help="preset name, e.g. logistic, coherence:2, sigmoid, cex")
    group.add_argument("--loss-config", default=None, metavar="PATH", help="key = value loss config file")
    parser.add_argument("--k", type=int, default=k_default, help="number of classes")


def _loss_from_args(args, k: int | None = None) -> LossSpec:
    k = k if k is not None else args.k
    if args.loss_config:
        try:
            spec = parse_loss_config(Path(args.loss_config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read loss config: {exc}") from None
        return spec if k is None else spec.with_k(k)
    if not args.loss:
        raise UsageError("one of --loss or --loss-config is required")
    return preset(args.loss, 3 if k is None else k)


def _run_config(args, argv: Sequence[str]) -> dict:
    config = {key: value for key, value in sorted(vars(args).items()) if key != "func"}
    return {"command": "gammaphi " + shlex.join(argv), "options": config}


def _out_path(explicit: str | None, default_name: str) -> Path | None:
    if explicit:
        return Path(explicit)
    base = os.environ.get(OUT_DIR_ENV)
    return Path(base) / default_name if base else None


def _write(path: Path | None, text: str) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _envelope(kind: str, spec: LossSpec | None, body: dict, config: dict) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "artifact_version": __version__, "kind": kind, "config": config}
    if spec is not None:
        doc["spec"] = spec.to_dict()
    doc.update(body)
    return doc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_conditions(args, argv) -> int:
    spec = _loss_from_args(args)
    report = check_conditions(spec)
    doc = _envelope(
        "condition_report",
        spec,
        {"conditions": report.to_dict(), "hypotheses_hold": report.hypotheses_hold},
        _run_config(args, argv),
    )
    _write(_out_path(args.out, f"conditions_{spec.name or 'custom'}.json"), to_json(doc))
    if args.format == "json":
        sys.stdout.write(to_json(doc))
    else:
        for key in ("gamma_si", "gamma_pd", "gamma_sup_infinite", "phi_ndz", "phi_inf_zero"):
            print(f"{key}: {getattr(report, key)}")
        print(f"all hypotheses hold: {report.hypotheses_hold}")
    return EXIT_OK if report.hypotheses_hold else EXIT_CONDITIONS_FAIL


def cmd_risk(args, argv) -> int:
    p = np.asarray(args.p)
    spec = _loss_from_args(args, k=args.k if args.k is not None else len(p))
    opts = SolverOptions(seed=args.seed)
    if (args.v is not None) + args.bayes + (args.constrained is not None) != 1:
        raise UsageError("choose exactly one of --v, --bayes, --constrained")
    body: dict = {"p": p.tolist()}
    if args.v is not None:
        value = conditional_risk(p, spec, args.v)
        body.update(quantity="conditional_risk", v=list(args.v))
    else:
        if args.bayes:
            res = bayes_conditional_risk(p, spec, opts)
            body["quantity"] = "bayes_conditional_risk"
        else:
            res = constrained_bayes_risk(p, spec, args.constrained, opts)
            body.update(quantity="constrained_bayes_risk", y=args.constrained)
        value = res.value
        body["witness"] = res.witness.to_dict()
        body["decomposition"] = vars(extended_risk(p, spec, res.witness))
    body["value"] = value
    if args.format == "json":
        sys.stdout.write(to_json(_envelope("risk", spec, body, _run_config(args, argv))))
    else:
        print(f"{value:.6f}")
    return EXIT_OK


def cmd_certify(args, argv) -> int:
    spec = _loss_from_args(args)
    plan = SamplingPlan(n=args.n, mode=args.mode, seed=args.seed)
    tol = Tolerances(violation=args.violation_tol, evidence=args.evidence_tol, margin=args.margin)
    report = certify(spec, plan, tol, SolverOptions(seed=args.seed), workers=args.workers)
    doc = report.to_dict()
    doc["config"] = _run_config(args, argv)
    text = to_json(doc)
    _write(_out_path(args.out, f"certify_{spec.name or 'custom'}_k{spec.k}_seed{args.seed}.json"), text)
    if args.format == "json":
        sys.stdout.write(text)
    else:
        print(summarize(report))
    return {
        Verdict.CALIBRATED_EVIDENCE: EXIT_OK,
        Verdict.VIOLATION_FOUND: EXIT_VIOLATION,
        Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
    }[report.verdict]


def cmd_cex(args, argv) -> int:
    params = CexParams(r=args.r, k=args.k, t_grid=tuple(args.t_grid))
    report = verify_counterexample(params, tol=args.tol)
    doc = report.to_dict()
    doc["config"] = _run_config(args, argv)
    text = to_json(doc)
    tag = f"r{args.r:g}_k{args.k}"
    _write(_out_path(args.out, f"cex_{tag}.json"), text)
    _write(_out_path(args.risk_csv, f"cex_risk_{tag}.csv"), risk_table_csv(report))
    _write(_out_path(args.profile_csv, f"cex_profile_r{args.r:g}.csv"), profile_table_csv(args.r))
    if args.format == "json":
        sys.stdout.write(text)
    elif args.format == "csv":
        sys.stdout.write(risk_table_csv(report))
    else:
        for row in report.rows:
            print(f"t={row['t']:<8g} risk={row['risk']:.12f} gap={row['gap']:.3e} argmax={row['argmax']}")
        for check in report.checks:
            print(f"[{'ok' if check.passed else 'FAIL'}] {check.name}: {check.detail}")
        for note in report.notes:
            print(f"note: {note}")
        print(f"verification {'passed' if report.passed else 'failed'}")
    return EXIT_OK if report.passed else EXIT_VERIFICATION_FAIL


def cmd_simulate(args, argv) -> int:
    try:
        dist = DiscreteDistribution.load(args.dist)
    except OSError as exc:
        raise UsageError(f"cannot read distribution: {exc}") from None
    spec = _loss_from_args(args, k=dist.k)
    if args.adversarial:
        traj = adversarial_sequence(dist, spec, tuple(args.t_grid), descent_steps=args.steps)
    else:
        traj = surrogate_descent(dist, spec, args.steps)
        traj = type(traj)(traj.steps, traj.bayes_01, surrogate_infimum(dist, spec), traj.scores)
    text = traj.to_csv()
    name = f"simulate_{spec.name or 'custom'}{'_adversarial' if args.adversarial else ''}.csv"
    path = _out_path(args.out, name)
    _write(path, text)
    if args.format == "json":
        body = {
            "bayes_01": traj.bayes_01,
            "surrogate_infimum": traj.surrogate_infimum,
            "final_surrogate_regret": float(traj.surrogate_regret()[-1]),
            "final_zero_one_regret": float(traj.zero_one_regret()[-1]),
            "steps": [vars(s) | {"per_cell_argmax": list(s.per_cell_argmax)} for s in traj.steps],
        }
        sys.stdout.write(to_json(_envelope("trajectory", spec, body, _run_config(args, argv))))
    elif args.format == "csv" or path is None:
        sys.stdout.write(text)
    else:
        print(f"bayes 0-1 risk: {traj.bayes_01:.6f}")
        print(f"final surrogate regret: {traj.surrogate_regret()[-1]:.3e}")
        print(f"final 0-1 regret: {traj.zero_one_regret()[-1]:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gammaphi", description="Gamma-Phi loss calibration toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("conditions", help="check the sufficient conditions on gamma and phi")
    _add_loss_args(p)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--format", choices=("pretty", "json"), default="pretty")
    p.set_defaults(func=cmd_conditions)

    p = sub.add_parser("risk", help="conditional risk or (constrained) conditional Bayes risk")
    _add_loss_args(p, k_default=None)
    p.add_argument("--p", type=_floats, required=True, help="label distribution, comma-separated")
    p.add_argument("--v", type=_floats, help="score vector, comma-separated")
    p.add_argument("--bayes", action="store_true", help="conditional Bayes risk")
    p.add_argument("--constrained", type=int, metavar="Y", help="Bayes risk with class Y (0-based) on top")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("pretty", "json"), default="pretty")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("certify", help="sample the simplex and look for calibration violations")
    _add_loss_args(p)
    p.add_argument("--n", type=int, default=200, help="number of sampled label distributions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=SAMPLING_MODES, default="stratified")
    p.add_argument("--violation-tol", type=float, default=1e-4)
    p.add_argument("--evidence-tol", type=float, default=1e-3)
    p.add_argument("--margin", type=float, default=0.05)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--format", choices=("pretty", "json"), default="pretty")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("cex", help="verify the divergent-witness counterexample")
    p.add_argument("--r", type=float, default=0.6)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--t-grid", type=_floats, default=list(DEFAULT_T_GRID))
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--risk-csv", help="write (t, risk) rows here")
    p.add_argument("--profile-csv", help="write (x, F, Fprime) rows here")
    p.add_argument("--format", choices=("pretty", "json", "csv"), default="pretty")
    p.set_defaults(func=cmd_cex)

    p = sub.add_parser("simulate", help="surrogate descent / witness sequence on a finite distribution")
    _add_loss_args(p, k_default=None)
    p.add_argument("--dist", required=True, help='JSON file {"cells": [{"mass": m, "cond": [...]}, ...]}')
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--adversarial", action="store_true", help="use the divergent witness on violating cells")
    p.add_argument("--t-grid", type=_floats, default=list(DEFAULT_T_GRID))
    p.add_argument("--out", help="write the trajectory CSV here")
    p.add_argument("--format", choices=("csv", "pretty", "json"), default="csv")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args, argv)
    except SolverError as exc:
        print(f"gammaphi: solver failure: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (GammaPhiError, UsageError) as exc:
        print(f"gammaphi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
