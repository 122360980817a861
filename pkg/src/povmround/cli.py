"""Command-line front end.

    povmround <command> --in <file> [--out <file>] [--seed N]
              [--tol key=val ...] [--csv <file>]

Commands: orthogonalize, orthogonalize-sym, repair, fourier, majorant,
verify, gen, sweep.  Exit code 0 means every certified bound passed, 1 a
bound failed (the failing certificate is named on stderr), 2 the input
could not be parsed or validated.  POVMROUND_TOL_OVERRIDES provides
comma-separated key=val tolerance overrides at lower precedence than
--tol flags.
"""

from __future__ import annotations

import argparse
import csv as csv_module
import math
import os
import sys
import time

import numpy as np

from .algebra import PovmRoundError, Tolerances, ValidationError, validate_pvm
from .generators import KINDS, gen_instance
from .io import (
    BoundCheck,
    Instance,
    check_geq,
    check_leq,
    decode_element,
    dumps,
    encode_element,
    file_digest,
    load_instance,
    load_report,
    make_report,
    save_instance,
    save_report,
)
from .majorant import (
    MajorantResiduals,
    MajorantSolution,
    minimal_majorant,
    verify_majorant_certificate,
)
from .orthogonalize import orthogonalize, orthogonalize_symmetry_preserving
from .repair import pvm_to_unitary, repair, repair_unitary_pair, unitary_to_pvm

# Certified-bound slacks used by the CLI checks.
BOUND_SLACK = 1e-7           # additive slack on the 9x and 10x error bounds
SELECTION_SLACK = 1e-9       # slack on the selection value lower bound
COMMUTATION_TOL = 1e-6       # [q_i, a_i] residual
IDEMPOTENCY_TOL = 1e-8       # output PVM idempotency
OUTPUT_COMMUTATOR_TOL = 1e-9  # [p'_i, q_j] residual after repair
IDENTITY_TOL = 1e-10         # exact commutation-defect identity
ROUNDTRIP_TOL = 1e-10        # PVM <-> unitary round trip
SYMMETRY_TOL = 1e-8          # [commutant basis, p_i] residual


def _orth_checks(report, prefix="") -> list[BoundCheck]:
    rank_defects = sum(
        abs(sum(row) - d)
        for row, d in zip(report.selection.ranks, report.pvm.algebra.dims)
    )
    diag = validate_pvm(report.pvm.algebra, report.pvm)
    return [
        check_leq(prefix + "error_vs_9defect", report.error, 9.0 * report.defect + BOUND_SLACK),
        check_geq(
            prefix + "selection_value",
            report.selection.value,
            1.0 - report.defect - SELECTION_SLACK,
        ),
        check_leq(prefix + "rank_sum_defect", rank_defects, 0.0),
        check_leq(
            prefix + "selection_commutation", report.selection.commutation_residual, COMMUTATION_TOL
        ),
        check_leq(prefix + "pvm_idempotency", report.certificates.pvm_idempotency, IDEMPOTENCY_TOL),
        check_leq(prefix + "pvm_sum_residual", report.certificates.pvm_sum_residual, 1e-8),
        check_leq(prefix + "midpoint_identity", report.certificates.midpoint_residual, BOUND_SLACK),
        check_geq(
            prefix + "converse_bound",
            (1.0 - report.defect) - (1.0 - math.sqrt(max(report.error, 0.0))) ** 2,
            -BOUND_SLACK,
        ),
        BoundCheck(prefix + "pvm_valid", 0.0 if diag.is_valid else 1.0, 0.0, diag.is_valid),
    ]


def _json_ratio(ratio):
    # strict JSON has no Infinity; an exact-PVM input reports a null ratio
    return ratio if math.isfinite(ratio) else None


def _orth_result(report) -> dict:
    return {
        "defect": report.defect,
        "error": report.error,
        "ratio": _json_ratio(report.ratio),
        "selection_value": report.selection.value,
        "ranks": report.selection.ranks,
        "pvm": [encode_element(p) for p in report.pvm.elements],
        "certificates": {
            "pvm_idempotency": report.certificates.pvm_idempotency,
            "pvm_sum_residual": report.certificates.pvm_sum_residual,
            "midpoint_residual": report.certificates.midpoint_residual,
            "polar_residual": report.certificates.polar_residual,
            "sqrt_clip": report.certificates.sqrt_clip,
            "term_unselected": report.certificates.term_unselected,
            "term_modulus": report.certificates.term_modulus,
            "term_selected_nonproj": report.certificates.term_selected_nonproj,
        },
    }


def _cmd_orthogonalize(inst: Instance, tol: Tolerances):
    if inst.state is None or inst.povm is None:
        raise ValidationError("instance must provide a state and a POVM")
    report = orthogonalize(inst.algebra, inst.state, inst.povm, tol)
    return _orth_result(report), _orth_checks(report)


def _cmd_orthogonalize_sym(inst: Instance, tol: Tolerances):
    if inst.state is None or inst.povm is None:
        raise ValidationError("instance must provide a state and a POVM")
    sym = orthogonalize_symmetry_preserving(inst.algebra, inst.state, inst.povm, tol)
    result = {
        "defect": sym.defect,
        "error": sym.error,
        "ratio": _json_ratio(sym.ratio),
        "symmetry_residual": sym.symmetry_residual,
        "sub_dims": list(sym.decomposition.sub.dims),
        "multiplicities": list(sym.decomposition.multiplicities),
        "pvm": [encode_element(p) for p in sym.pvm.elements],
        "inner": _orth_result(sym.inner),
    }
    checks = _orth_checks(sym.inner, prefix="inner_")
    checks.append(check_leq("symmetry_residual", sym.symmetry_residual, SYMMETRY_TOL))
    checks.append(check_leq("error_vs_9defect", sym.error, 9.0 * sym.defect + BOUND_SLACK))
    return result, checks


def _cmd_repair(inst: Instance, tol: Tolerances):
    if inst.state is None or inst.pvm_pair is None:
        raise ValidationError("instance must provide a state and a PVM pair")
    p, q = inst.pvm_pair
    rep = repair(inst.state, p, q, tol)
    result = {
        "epsilon_c": rep.epsilon_c,
        "error": rep.error,
        "identity_residual": rep.identity_residual,
        "max_commutator": rep.max_commutator,
        "pvm_repaired": [encode_element(e) for e in rep.pvm_repaired.elements],
        "inner": _orth_result(rep.inner),
    }
    checks = [
        check_leq("error_vs_10defect", rep.error, 10.0 * rep.epsilon_c + BOUND_SLACK),
        check_leq("identity_residual", rep.identity_residual, IDENTITY_TOL),
        check_leq("output_commutators", rep.max_commutator, OUTPUT_COMMUTATOR_TOL),
        check_leq(
            "inner_error_vs_9defect", rep.inner.error, 9.0 * rep.inner.defect + BOUND_SLACK
        ),
    ]
    return result, checks


def _cmd_fourier(inst: Instance, tol: Tolerances):
    if inst.state is None or inst.pvm_pair is None:
        raise ValidationError("instance must provide a state and a PVM pair")
    p, q = inst.pvm_pair
    v = pvm_to_unitary(p, tol)
    u = pvm_to_unitary(q, tol)
    roundtrip = 0.0
    for pvm, unit in ((p, v), (q, u)):
        back = unitary_to_pvm(unit, pvm.n, tol)
        roundtrip = max(
            roundtrip,
            max((a - b).norm_fro() for a, b in zip(pvm.elements, back.elements)),
        )
    rep = repair_unitary_pair(inst.state, u, q.n, v, p.n, tol)
    result = {
        "lhs": rep.lhs,
        "rhs_error": rep.rhs_error,
        "commutator_norm": rep.commutator_norm,
        "roundtrip_residual": roundtrip,
        "v_repaired": encode_element(rep.v_repaired),
    }
    checks = [
        check_leq("roundtrip_residual", roundtrip, ROUNDTRIP_TOL),
        check_leq("repaired_commutator", rep.commutator_norm, OUTPUT_COMMUTATOR_TOL),
        check_leq("rhs_vs_10lhs", rep.rhs_error, 10.0 * rep.lhs + BOUND_SLACK),
    ]
    return result, checks


def _cmd_majorant(inst: Instance, tol: Tolerances):
    if inst.functionals is None:
        raise ValidationError("instance must provide a functional family")
    sol = minimal_majorant(inst.algebra, inst.functionals, tol)
    diag = verify_majorant_certificate(inst.algebra, inst.functionals, sol, tol)
    result = {
        "primal": sol.primal,
        "dual": sol.dual,
        "gap": sol.gap,
        "mu_final": sol.mu_final,
        "newton_iterations": sol.newton_iterations,
        "z": encode_element(sol.majorant),
        "t": [encode_element(t) for t in sol.dual_povm],
        "residuals": {
            "feasibility": sol.residuals.feasibility,
            "povm_sum": sol.residuals.povm_sum,
            "slackness": sol.residuals.slackness,
            "reconstruction": sol.residuals.reconstruction,
        },
        "instance": inst.to_json(),
    }
    checks = [BoundCheck(c.name, c.value, c.threshold, c.passed) for c in diag.checks]
    return result, checks


def _solution_from_report(doc: dict):
    result = doc["result"]
    inst = Instance.from_json(result["instance"])
    if inst.functionals is None:
        raise ValidationError("embedded instance has no functional family")
    alg = inst.algebra
    z = decode_element(alg, result["z"])
    duals = [decode_element(alg, t) for t in result["t"]]
    res = result.get("residuals", {})
    sol = MajorantSolution(
        majorant=z,
        dual_povm=duals,
        primal=float(result["primal"]),
        dual=float(result["dual"]),
        gap=float(result["gap"]),
        mu_final=float(result["mu_final"]),
        newton_iterations=int(result.get("newton_iterations", 0)),
        residuals=MajorantResiduals(
            feasibility=float(res.get("feasibility", 0.0)),
            povm_sum=float(res.get("povm_sum", 0.0)),
            slackness=float(res.get("slackness", 0.0)),
            reconstruction=float(res.get("reconstruction", 0.0)),
        ),
    )
    return inst, sol


def _cmd_verify(path: str, tol: Tolerances):
    doc = load_report(path)
    if doc.get("command") not in ("majorant", "verify"):
        raise ValidationError("verify expects a majorant report file")
    inst, sol = _solution_from_report(doc)
    diag = verify_majorant_certificate(inst.algebra, inst.functionals, sol, tol)
    result = {
        "primal": sol.primal,
        "dual": sol.dual,
        "gap": sol.gap,
        "verified_input": doc.get("input_digest", ""),
    }
    checks = [BoundCheck(c.name, c.value, c.threshold, c.passed) for c in diag.checks]
    return result, checks


def _sweep_config(seed: int, max_dim: int, max_outputs: int):
    rng = np.random.default_rng(seed)
    num_blocks = int(rng.integers(1, 3))
    dims = []
    remaining = max_dim
    for _ in range(num_blocks):
        d = int(rng.integers(1, min(8, max(2, remaining)) + 1))
        dims.append(d)
        remaining -= d
        if remaining < 1:
            break
    n = int(rng.integers(2, max_outputs + 1))
    delta = float(rng.uniform(0.01, 0.4))
    return tuple(dims), n, delta


def _cmd_sweep(args, tol: Tolerances):
    rows = []
    checks = []
    for offset in range(args.count):
        seed = args.seed + offset
        dims, n, delta = _sweep_config(seed, args.max_dim, args.max_outputs)
        inst = gen_instance(
            "random_povm_near_pvm", seed, {"dims": list(dims), "n": n, "delta": delta}
        )
        start = time.perf_counter()
        report = orthogonalize(inst.algebra, inst.state, inst.povm, tol)
        runtime_ms = (time.perf_counter() - start) * 1e3
        margin = 9.0 * report.defect + BOUND_SLACK - report.error
        rows.append({
            "seed": seed,
            "dims": "+".join(str(d) for d in dims),
            "n": n,
            "defect": report.defect,
            "error": report.error,
            "ratio": _json_ratio(report.ratio),
            "bound_9eps_margin": margin,
            "runtime_ms": runtime_ms,
        })
        checks.append(check_geq(f"seed_{seed}_bound_margin", margin, 0.0))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv_module.DictWriter(
                fh,
                fieldnames=[
                    "seed", "dims", "n", "defect", "error", "ratio",
                    "bound_9eps_margin", "runtime_ms",
                ],
            )
            writer.writeheader()
            writer.writerows(rows)
    worst = min((r["bound_9eps_margin"] for r in rows), default=None)
    result = {
        "count": len(rows),
        "worst_bound_margin": worst,
        "max_ratio": max((r["ratio"] for r in rows if r["ratio"] is not None), default=0.0),
        "rows": rows,
    }
    return result, checks


def _parse_tol_items(items) -> dict:
    overrides = {}
    for item in items:
        if "=" not in item:
            raise ValidationError(f"tolerance override {item!r} is not key=val")
        key, val = item.split("=", 1)
        key = key.strip()
        if key == "max_iters":
            overrides[key] = int(val)
        else:
            overrides[key] = float(val)
    return overrides


def build_tolerances(tol_flags) -> Tolerances:
    overrides = {}
    env = os.environ.get("POVMROUND_TOL_OVERRIDES", "")
    if env.strip():
        overrides.update(_parse_tol_items(env.split(",")))
    overrides.update(_parse_tol_items(tol_flags or []))
    return Tolerances().replace(**overrides)


def _parse_params(items) -> dict:
    params = {}
    for item in items or []:
        if "=" not in item:
            raise ValidationError(f"parameter {item!r} is not key=val")
        key, val = item.split("=", 1)
        key = key.strip()
        val = val.strip()
        if key == "dims":
            params[key] = [int(x) for x in val.replace("+", ",").split(",")]
        elif key in ("n", "n_p", "n_q", "state_rank"):
            params[key] = int(val)
        elif key in ("canonical", "diagonal", "single_block"):
            params[key] = val.lower() in ("1", "true", "yes")
        else:
            params[key] = float(val)
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="povmround",
        description="Round POVMs to projective measurements, repair almost-commuting "
        "PVM pairs, and solve minimal trace majorants, with certified bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_in=True):
        if needs_in:
            p.add_argument("--in", dest="input", required=True, help="instance file")
        p.add_argument("--out", dest="output", help="write the JSON report here")
        p.add_argument("--tol", action="append", default=[], metavar="KEY=VAL",
                       help="tolerance override, repeatable")

    for name in ("orthogonalize", "orthogonalize-sym", "repair", "fourier", "majorant"):
        common(sub.add_parser(name))

    p_verify = sub.add_parser("verify", help="re-verify a majorant report")
    common(p_verify)

    p_gen = sub.add_parser("gen", help="generate a seeded instance")
    p_gen.add_argument("--kind", required=True, choices=KINDS)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--param", action="append", default=[], metavar="KEY=VAL")
    p_gen.add_argument("--out", dest="output", required=True)
    p_gen.add_argument("--tol", action="append", default=[], metavar="KEY=VAL")

    p_sweep = sub.add_parser("sweep", help="batch of seeded rounding instances")
    p_sweep.add_argument("--count", type=int, default=20)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--max-dim", type=int, default=8, dest="max_dim")
    p_sweep.add_argument("--max-outputs", type=int, default=5, dest="max_outputs")
    p_sweep.add_argument("--csv", help="write per-instance rows here")
    p_sweep.add_argument("--out", dest="output")
    p_sweep.add_argument("--tol", action="append", default=[], metavar="KEY=VAL")
    return parser


_INSTANCE_COMMANDS = {
    "orthogonalize": _cmd_orthogonalize,
    "orthogonalize-sym": _cmd_orthogonalize_sym,
    "repair": _cmd_repair,
    "fourier": _cmd_fourier,
    "majorant": _cmd_majorant,
}


def run_command(args) -> tuple[dict, int]:
    """Dispatch one parsed command; returns (report document, exit code)."""
    tol = build_tolerances(getattr(args, "tol", []))
    start = time.perf_counter()

    if args.command == "gen":
        params = _parse_params(args.param)
        inst = gen_instance(args.kind, args.seed, params)
        save_instance(inst, args.output)
        doc = make_report(
            "gen", file_digest(args.output), tol,
            {"kind": args.kind, "seed": args.seed, "params": params, "path": args.output},
            [], time.perf_counter() - start, metadata=inst.metadata,
        )
        return doc, 0

    if args.command == "sweep":
        result, checks = _cmd_sweep(args, tol)
        doc = make_report(
            "sweep", "", tol, result, checks, time.perf_counter() - start,
            metadata={"seed": args.seed, "count": args.count},
        )
        return doc, 0 if all(c.passed for c in checks) else 1

    if args.command == "verify":
        result, checks = _cmd_verify(args.input, tol)
        doc = make_report(
            "verify", file_digest(args.input), tol, result, checks,
            time.perf_counter() - start,
        )
        return doc, 0 if all(c.passed for c in checks) else 1

    handler = _INSTANCE_COMMANDS[args.command]
    inst = load_instance(args.input, tol)
    result, checks = handler(inst, tol)
    doc = make_report(
        args.command, file_digest(args.input), tol, result, checks,
        time.perf_counter() - start, metadata=inst.metadata,
    )
    return doc, 0 if all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc, code = run_command(args)
    except ValidationError as exc:
        print(f"povmround: {exc}", file=sys.stderr)
        return 2
    except PovmRoundError as exc:
        print(f"povmround: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"povmround: {exc}", file=sys.stderr)
        return 2

    if getattr(args, "output", None) and args.command != "gen":
        save_report(doc, args.output)
    failed = [c["name"] for c in doc["checks"] if not c["pass"]]
    summary = {
        "command": doc["command"],
        "pass": doc["pass"],
        "checks": len(doc["checks"]),
        "failed": failed,
    }
    print(dumps(summary), end="")
    if failed:
        print("failed certificates: " + ", ".join(failed), file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
