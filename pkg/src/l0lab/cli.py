"""Command line interface: ``l0lab <subcommand> [options]``.

Exit status is 0 on success, 2 on bad arguments and 1 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .attack import budget_from_alpha, coupling_attack, realize_in_x_space, worst_case_tsum
from .classify import classify_ml, classify_truncated, loglik_transform, tsum
from .errors import L0LabError
from .experiment import (ATTACKS, CLASSIFIERS, CellResult, ExperimentConfig, ExperimentResult,
                         estimate_robust_error, estimate_standard_error, phase_sweep)
from .model import ProblemInstance, generate
from .noise import new_exp_poly, parse_coeffs
from .numerics import derive_stream

DEFAULT_POLY = "0,0,-0.5"


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _poly(text: str) -> list[float]:
    try:
        return parse_coeffs(text)
    except (ValueError, json.JSONDecodeError) as exc:
        raise argparse.ArgumentTypeError(f"bad polynomial {text!r}: {exc}")


def _attack_list(text: str) -> list[str]:
    out = [v.strip() for v in text.split(",") if v.strip()]
    for v in out:
        if v not in ATTACKS:
            raise argparse.ArgumentTypeError(f"unknown attack {v!r}; choose from {ATTACKS}")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values; flags override it")
    common.add_argument("--poly", type=_poly, help='psi coefficients "b0,b1,...,bm"')
    common.add_argument("--c", type=float, help="signal constant (mu_d = c / sqrt(d))")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per cell")
    common.add_argument("--out", help="output file (stdout when omitted)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--workers", type=int, help="worker threads (0 = auto)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="l0lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fisher", parents=[common], help="print I_q, A and the truncation radius")

    p = sub.add_parser("audit", parents=[common], help="numerical audit of the noise assumptions")
    p.add_argument("--zeta", type=float)
    p.add_argument("--d-probe", dest="d_probe", type=int)

    p = sub.add_parser("standard-error", parents=[common], help="error with no adversary")
    p.add_argument("--d", type=int)
    p.add_argument("--classifier", choices=CLASSIFIERS)
    p.add_argument("--k", type=int, help="truncation level for the truncated classifier")

    for name, helptext in (("robust", "error under an attack"),
                           ("attack-demo", "single-trial trace of both attacks")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--d", type=int)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--k", type=int)
        g.add_argument("--alpha", type=float)
        p.add_argument("--classifier", choices=CLASSIFIERS)
        if name == "robust":
            p.add_argument("--attack", choices=("worst_case", "coupling"))

    p = sub.add_parser("sweep", parents=[common], help="grid over dims x alphas (or ks)")
    p.add_argument("--dims", type=_int_list)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alphas", type=_float_list)
    g.add_argument("--ks", type=_int_list)
    p.add_argument("--attack", dest="attacks", type=_attack_list,
                   help="comma-separated attacks: none, worst_case, coupling")
    p.add_argument("--classifier", choices=CLASSIFIERS)
    return parser


DEFAULTS = {
    "poly": DEFAULT_POLY, "c": 1.0, "seed": 0, "trials": 10_000, "out": None, "format": "csv",
    "workers": None, "zeta": 0.5, "d_probe": 4096, "d": None, "classifier": None, "k": None,
    "alpha": None, "attack": "worst_case", "dims": [1024, 4096], "alphas": None, "ks": None,
    "attacks": ["coupling"],
}


def _resolve(parser: argparse.ArgumentParser, args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if args.config:
        try:
            file_opts = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"--config: cannot read {args.config}: {exc}")
        if "attack" in file_opts and args.command == "sweep":
            file_opts.setdefault("attacks", file_opts.pop("attack"))
        opts.update({k.replace("-", "_"): v for k, v in file_opts.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    if isinstance(opts["poly"], (str, list)):
        try:
            opts["poly"] = parse_coeffs(opts["poly"])
        except ValueError as exc:
            parser.error(f"--poly: {exc}")
    if isinstance(opts["attacks"], str):
        opts["attacks"] = _attack_list(opts["attacks"])
    if opts["trials"] is not None and opts["trials"] < 1:
        parser.error("--trials must be positive")
    return opts


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_rows(rows: list[CellResult], opts: dict, extra: dict | None = None) -> None:
    result = ExperimentResult(rows, {"seed": opts["seed"], **(extra or {})})
    _emit(result.to_csv() if opts["format"] == "csv" else result.to_json() + "\n", opts["out"])


def _k_for(opts: dict, d: int) -> tuple[int, float | None]:
    if opts.get("alpha") is not None:
        return budget_from_alpha(d, opts["alpha"]).k, opts["alpha"]
    return (opts["k"] if opts.get("k") is not None else 1), None


def _cmd_fisher(opts, noise):
    _emit(f"I_q = {noise.fisher_info:.6f}\nA = {noise.normalizer:.10g}\n"
          f"log_A = {noise.log_normalizer:.10g}\nR = {noise.truncation_radius:.6g}\n", opts["out"])


def _cmd_audit(opts, noise):
    report = noise.audit_assumptions(zeta=opts["zeta"], d_probe=opts["d_probe"],
                                     trials=min(opts["trials"], 1000), seed=opts["seed"])
    _emit(json.dumps(report.to_dict(), indent=2) + "\n", opts["out"])


def _cmd_standard_error(opts, noise):
    classifier = opts["classifier"] or "ml"
    k = opts["k"] or 0
    row = estimate_standard_error(noise, opts["c"], opts["d"] or 4096, opts["trials"], opts["seed"],
                                  classifier=classifier, k=k, workers=opts["workers"])
    _emit_rows([row], opts)


def _cmd_robust(opts, noise):
    d = opts["d"] or 4096
    k, alpha = _k_for(opts, d)
    row = estimate_robust_error(noise, opts["c"], d, k, classifier=opts["classifier"] or "truncated",
                                attack=opts["attack"], trials=opts["trials"], seed=opts["seed"],
                                alpha=alpha, workers=opts["workers"])
    _emit_rows([row], opts)


def _cmd_sweep(opts, noise):
    alphas, ks = opts["alphas"], opts["ks"]
    if alphas is None and ks is None:
        alphas = [0.2, 0.5, 0.8]
    config = ExperimentConfig(poly=opts["poly"], c=opts["c"], dims=opts["dims"], alphas=alphas,
                              ks=ks, attacks=opts["attacks"],
                              classifier=opts["classifier"] or "truncated",
                              trials=opts["trials"], master_seed=opts["seed"], out=opts["out"],
                              format=opts["format"], workers=opts["workers"])
    result = phase_sweep(config, noise)
    _emit(result.to_csv() if config.format == "csv" else result.to_json() + "\n", opts["out"])


def _cmd_attack_demo(opts, noise):
    d = opts["d"] or 16
    k, _ = _k_for(opts, d)
    instance = ProblemInstance(d, opts["c"], noise)
    stream = derive_stream(opts["seed"], 0)
    data = generate(instance, "uniform", stream)
    scores = loglik_transform(instance, data.samples).scores
    direction = "minimize" if data.label == 1 else "maximize"
    worst, plan = worst_case_tsum(scores, k, direction)
    x_adv = realize_in_x_space(instance, data.samples, plan.changed_indices,
                               -1 if data.label == 1 else 1, k=k)
    coupled = coupling_attack(instance, data, k, stream)
    trace = {
        "d": d, "k": k, "label": data.label, "mu_d": instance.mu_d,
        "samples": data.samples.tolist(), "scores": scores.tolist(),
        "sum_scores": float(np.sum(scores)), "tsum_clean": tsum(scores, k),
        "ml_prediction_clean": classify_ml(instance, data.samples),
        "truncated_prediction_clean": classify_truncated(instance, data.samples, k),
        "worst_case": {
            "direction": direction, "changed_indices": list(plan.changed_indices),
            "perturbed_x": x_adv.tolist(),
            "perturbed_scores": loglik_transform(instance, x_adv).scores.tolist(),
            "worst_tsum": worst, "realized_tsum": tsum(loglik_transform(instance, x_adv), k),
            "ml_prediction": classify_ml(instance, x_adv),
            "truncated_prediction": classify_truncated(instance, x_adv, k),
        },
        "coupling": {
            "flipped_indices": list(coupled.flipped_indices),
            "changed_indices": list(coupled.changed_indices), "reverted": coupled.reverted,
            "tsum": tsum(loglik_transform(instance, coupled.perturbed), k),
            "truncated_prediction": classify_truncated(instance, coupled.perturbed, k),
        },
    }
    _emit(json.dumps(trace, indent=2) + "\n", opts["out"])


COMMANDS = {
    "fisher": _cmd_fisher, "audit": _cmd_audit, "standard-error": _cmd_standard_error,
    "robust": _cmd_robust, "sweep": _cmd_sweep, "attack-demo": _cmd_attack_demo,
}


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = _resolve(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if opts.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        noise = new_exp_poly(opts["poly"])
        COMMANDS[args.command](opts, noise)
    except L0LabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:  # pragma: no cover
    sys.exit(run_cli())


if __name__ == "__main__":  # pragma: no cover
    main()
