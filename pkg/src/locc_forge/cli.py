"""Command-line harness: JSON instance files in, JSON reports out.

Reports go to stdout (and to --out when given); a short human-readable
summary goes to stderr so that stdout stays pipeable.  Reports are
deterministic for a fixed instance and seed: reruns are byte-identical
apart from the wall_time_s field.

Exit codes (stable contract):
    0  success / pass
    2  input error
    3  conversion impossible
    4  resource cap exceeded
    5  internal invariant violation (including failed verification)
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    CapExceeded,
    ConversionImpossible,
    InstanceError,
    LoccForgeError,
)
from .majorization import ProbVector, first_violation, is_majorized, pad_to
from .probabilistic import (
    catalysis_search,
    intermediate_state,
    multicopy_check,
    pmax,
    run_conclusive,
)
from .protocol import MeasurementPlan, build_plan, validate
from .simulator import (
    DenseState,
    GeneralizedSchmidtState,
    extract_gsd,
    run_protocol,
)

SCHEMA_VERSION = "1"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IMPOSSIBLE = 3
EXIT_CAP = 4
EXIT_INTERNAL = 5


@dataclass
class Instance:
    lam: ProbVector | None
    mu: ProbVector | None
    m: int
    dims: tuple[int, ...]
    bases: list[np.ndarray] | None
    seed: int
    state: DenseState | None
    echo: dict


def _read_json(path: str) -> dict:
    try:
        if path == "-":
            text = sys.stdin.read()
        else:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        raise InstanceError(f"cannot read {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise InstanceError("instance file must hold a JSON object")
    return payload


def _parse_matrix(obj, label: str) -> np.ndarray:
    if isinstance(obj, dict):
        try:
            re = np.asarray(obj["re"], dtype=float)
            im = np.asarray(obj["im"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceError(f"{label}: bad re/im matrix: {exc}") from exc
        if re.shape != im.shape:
            raise InstanceError(f"{label}: re/im shape mismatch")
        return re + 1j * im
    try:
        return np.asarray(obj, dtype=float).astype(complex)
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"{label}: not a numeric matrix: {exc}") from exc


def _summarize(obj) -> dict:
    blob = json.dumps(obj, sort_keys=True).encode()
    return {"sha256": hashlib.sha256(blob).hexdigest()}


def load_instance(payload: dict) -> Instance:
    version = payload.get("schema_version")
    if str(version) != SCHEMA_VERSION:
        raise InstanceError(
            f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION!r}"
        )

    lam = mu = None
    if "lam" in payload or "mu" in payload:
        if "lam" not in payload or "mu" not in payload:
            raise InstanceError("lam and mu must be given together")
        try:
            lam = ProbVector(payload["lam"])
            mu = ProbVector(payload["mu"])
        except (TypeError, ValueError) as exc:
            raise InstanceError(f"bad coefficient vector: {exc}") from exc
        n = max(len(lam), len(mu))
        lam = pad_to(lam, n)
        mu = pad_to(mu, n)

    n = len(lam) if lam is not None else 0
    m = payload.get("m")
    dims = payload.get("dims")
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if m is None:
            m = len(dims)
        elif int(m) != len(dims):
            raise InstanceError(f"m={m} but {len(dims)} dims given")
    else:
        m = 2 if m is None else int(m)
        dims = tuple([max(n, 1)] * m)
    if m < 2:
        raise InstanceError("need at least two parties")
    if lam is not None and any(d < n for d in dims):
        raise InstanceError(f"every local dimension must be >= rank {n}")

    bases = None
    if payload.get("bases") is not None:
        raw = payload["bases"]
        if not isinstance(raw, list) or len(raw) != m:
            raise InstanceError(f"bases must list one matrix per party ({m})")
        bases = [_parse_matrix(b, f"bases[{i}]") for i, b in enumerate(raw)]
        for i, mat in enumerate(bases):
            if mat.shape != (dims[i], dims[i]):
                raise InstanceError(
                    f"bases[{i}] must be {dims[i]}x{dims[i]}, got {mat.shape}"
                )

    state = None
    if payload.get("state") is not None:
        try:
            state = DenseState.from_json(payload["state"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceError(f"bad dense state: {exc}") from exc

    echo = {}
    for key, value in payload.items():
        if key in ("bases", "state"):
            echo[key] = _summarize(value)
        else:
            echo[key] = value

    return Instance(
        lam=lam,
        mu=mu,
        m=m,
        dims=dims,
        bases=bases,
        seed=int(payload.get("seed", 0)),
        state=state,
        echo=echo,
    )


def _require_vectors(inst: Instance) -> tuple[ProbVector, ProbVector]:
    if inst.lam is None or inst.mu is None:
        raise InstanceError("this command needs lam and mu")
    return inst.lam, inst.mu


def _build_states(
    inst: Instance,
) -> tuple[GeneralizedSchmidtState, GeneralizedSchmidtState]:
    lam, mu = _require_vectors(inst)
    if inst.bases is None:
        psi = GeneralizedSchmidtState.computational(inst.dims, lam)
        phi = GeneralizedSchmidtState.computational(inst.dims, mu)
        return psi, phi
    try:
        psi = GeneralizedSchmidtState(inst.dims, lam, inst.bases)
        phi = GeneralizedSchmidtState(inst.dims, mu, inst.bases)
    except ValueError as exc:
        raise InstanceError(str(exc)) from exc
    return psi, phi


def _mixture_from_plan(plan: MeasurementPlan) -> list[dict]:
    return [
        {"p": float(out.weight), "perm": list(out.unitary_perm.inverse().image)}
        for out in plan.outcomes
    ]


def _load_plan(source: str) -> MeasurementPlan:
    payload = _read_json(source)
    if "outcomes" not in payload:
        inner = payload.get("payload", {})
        if isinstance(inner, dict) and "plan" in inner:
            payload = inner["plan"]
        else:
            raise InstanceError("no measurement plan found in --plan input")
    try:
        return MeasurementPlan.from_json(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"bad plan payload: {exc}") from exc


def cmd_check(inst: Instance, args) -> dict:
    lam, mu = _require_vectors(inst)
    tol = args.tol
    idx = first_violation(lam, mu, tol)
    prefix_excess = float(
        np.max(np.cumsum(lam.entries[:-1]) - np.cumsum(mu.entries[:-1]), initial=0.0)
    )
    return {
        "verdict": "convertible" if idx is None else "not_convertible",
        "payload": {
            "convertible": idx is None,
            "violation_prefix": idx,
            "lam": lam.to_json(),
            "mu": mu.to_json(),
        },
        "residuals": {"max_prefix_excess": prefix_excess},
        "tolerances": {"majorization_tol": tol},
        "pass": True,
    }


def cmd_plan(inst: Instance, args) -> dict:
    lam, mu = _require_vectors(inst)
    plan = build_plan(lam, mu)  # raises ConversionImpossible -> exit 3
    report = validate(plan, lam)
    return {
        "verdict": "plan",
        "payload": {
            "mixture": _mixture_from_plan(plan),
            "plan": plan.to_json(),
            "validation": report.to_json(),
        },
        "residuals": {
            "completeness": report.completeness_residual,
            "weights": report.weight_residual,
        },
        "tolerances": {
            "completeness": report.completeness_tol,
            "weights": report.weight_tol,
        },
        "pass": report.ok,
    }


def cmd_simulate(inst: Instance, args) -> dict:
    psi, phi = _build_states(inst)
    if args.plan is not None:
        plan = _load_plan(args.plan)
        if plan.n != psi.n:
            raise InstanceError(
                f"plan dimension {plan.n} does not match instance rank {psi.n}"
            )
    else:
        plan = build_plan(psi.coeffs, phi.coeffs)
    transcript = run_protocol(psi, phi, plan)
    return {
        "verdict": "pass" if transcript.passed else "fail",
        "payload": {
            "plan": plan.to_json(),
            "transcript": transcript.to_json(),
        },
        "residuals": {
            "prob_sum_error": transcript.checks["prob_sum_error"],
            "max_weight_mismatch": transcript.checks["max_weight_mismatch"],
            "min_fidelity": transcript.checks["min_fidelity"],
        },
        "tolerances": {
            "prob": transcript.checks["prob_tol"],
            "fidelity": transcript.checks["fidelity_tol"],
        },
        "pass": transcript.passed,
    }


def cmd_pmax(inst: Instance, args) -> dict:
    lam, mu = _require_vectors(inst)
    p, l_star = pmax(lam, mu)
    tails_lam = [float(np.sum(lam.entries[l:])) for l in range(len(lam))]
    tails_mu = [float(np.sum(mu.entries[l:])) for l in range(len(mu))]
    return {
        "verdict": "pmax",
        "payload": {
            "p_max": p,
            "l_star": l_star,
            "source_tails": tails_lam,
            "target_tails": tails_mu,
        },
        "residuals": {},
        "tolerances": {},
        "pass": True,
    }


def cmd_conclusive(inst: Instance, args) -> dict:
    psi, phi = _build_states(inst)
    plan = intermediate_state(psi.coeffs, phi.coeffs)  # may raise -> exit 3
    transcript = run_conclusive(psi, phi, plan)
    return {
        "verdict": "pass" if transcript.passed else "fail",
        "payload": {
            "conclusive_plan": plan.to_json(),
            "transcript": transcript.to_json(),
            "predicted_probability": plan.p_max,
            "achieved_probability": transcript.checks["success_probability"],
        },
        "residuals": {
            "success_prob_error": transcript.checks["success_prob_error"],
            "min_success_fidelity": transcript.checks["min_success_fidelity"],
            "prob_sum_error": transcript.checks["prob_sum_error"],
        },
        "tolerances": {
            "prob": transcript.checks["prob_tol"],
            "fidelity": transcript.checks["fidelity_tol"],
        },
        "pass": transcript.passed,
    }


def cmd_multicopy(inst: Instance, args) -> dict:
    lam, mu = _require_vectors(inst)
    copies = args.copies
    if copies < 1:
        raise InstanceError("--copies must be >= 1")
    per_copy = {
        str(c): multicopy_check(lam, mu, c) for c in range(1, copies + 1)
    }
    verdict = per_copy[str(copies)]
    return {
        "verdict": "convertible" if verdict else "not_convertible",
        "payload": {
            "copies": copies,
            "convertible": verdict,
            "per_copy": per_copy,
            "tensor_entries": len(lam) ** copies,
        },
        "residuals": {},
        "tolerances": {"majorization_tol": 1e-9},
        "pass": True,
    }


def cmd_catalyst(inst: Instance, args) -> dict:
    lam, mu = _require_vectors(inst)
    result = catalysis_search(lam, mu, d_max=args.dmax, resolution=args.resolution)
    verified = False
    if result.found and result.catalyst is not None:
        c = result.catalyst.entries
        verified = is_majorized(
            ProbVector(np.multiply.outer(lam.entries, c).reshape(-1)),
            ProbVector(np.multiply.outer(mu.entries, c).reshape(-1)),
        )
    return {
        "verdict": "found" if result.found else "not_found",
        "payload": result.to_json(),
        "residuals": {
            "certificate_verified": verified if result.found else None,
        },
        "tolerances": {"majorization_tol": 1e-9},
        "pass": (not result.found) or verified,
    }


def cmd_extract_gsd(inst: Instance, args) -> dict:
    if inst.state is None:
        raise InstanceError("extract-gsd needs a 'state' field in the instance")
    result = extract_gsd(inst.state, tol=args.tol)
    return {
        "verdict": result.verdict,
        "payload": result.to_json(),
        "residuals": {
            "witness_residual": (
                result.witness.residual if result.witness is not None else 0.0
            ),
        },
        "tolerances": {"product_tol": args.tol},
        "pass": True,
    }


COMMANDS = {
    "check": cmd_check,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "pmax": cmd_pmax,
    "conclusive": cmd_conclusive,
    "multicopy": cmd_multicopy,
    "catalyst": cmd_catalyst,
    "extract-gsd": cmd_extract_gsd,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locc-forge",
        description="Decide, synthesize, and verify local conversions of "
        "multipartite states in generalized Schmidt form.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--in", dest="infile", required=True, metavar="FILE",
                       help="instance JSON file, or - for stdin")
        p.add_argument("--out", dest="outfile", metavar="FILE",
                       help="also write the JSON report here")
        p.add_argument("--tol", type=float, default=1e-9,
                       help="tolerance for majorization / product tests")
        p.add_argument("--seed", type=int, default=None,
                       help="override the instance seed")
        if name == "multicopy":
            p.add_argument("--copies", type=int, default=2)
        if name == "catalyst":
            p.add_argument("--dmax", type=int, default=2)
            p.add_argument("--resolution", type=float, default=0.01)
        if name == "simulate":
            p.add_argument("--plan", metavar="FILE",
                           help="use this plan JSON (- for stdin) instead of "
                           "synthesizing one")
    return parser


def _human_summary(report: dict) -> str:
    bits = [f"{report['command']}: {report.get('verdict', '?')}"]
    payload = report.get("payload", {})
    if "p_max" in payload:
        bits.append(f"p_max={payload['p_max']:.6g}")
    if "achieved_probability" in payload:
        bits.append(f"achieved={payload['achieved_probability']:.6g}")
    if "violation_prefix" in payload and payload["violation_prefix"] is not None:
        bits.append(f"violation_prefix={payload['violation_prefix']}")
    if "catalyst" in payload and payload["catalyst"]:
        bits.append(f"catalyst={payload['catalyst']}")
    if "coeffs" in payload:
        bits.append(f"coeffs={payload['coeffs']}")
    bits.append("PASS" if report.get("pass") else "FAIL")
    return " | ".join(bits)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        payload = _read_json(args.infile)
        inst = load_instance(payload)
        if args.seed is not None:
            inst.seed = args.seed
        body = COMMANDS[args.command](inst, args)
    except InstanceError as exc:
        return _fail(args, EXIT_INPUT, "input error", exc)
    except ConversionImpossible as exc:
        return _fail(args, EXIT_IMPOSSIBLE, "conversion impossible", exc)
    except CapExceeded as exc:
        return _fail(args, EXIT_CAP, "resource cap exceeded", exc)
    except (LoccForgeError, ValueError) as exc:
        return _fail(args, EXIT_INTERNAL, "internal invariant violation", exc)

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "inputs": inst.echo,
        "options": _option_echo(args),
        **body,
        "wall_time_s": time.perf_counter() - start,
    }
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    print(text)
    if args.outfile:
        with open(args.outfile, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(_human_summary(report), file=sys.stderr)
    return EXIT_OK if report["pass"] else EXIT_INTERNAL


def _json_default(obj):
    """Catch stray numpy scalars; everything else is a real type error."""
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _option_echo(args) -> dict:
    echo = {"tol": args.tol, "seed": args.seed}
    for key in ("copies", "dmax", "resolution", "plan"):
        if hasattr(args, key):
            echo[key] = getattr(args, key)
    return echo


def _fail(args, code: int, label: str, exc: Exception) -> int:
    error = {
        "error": {
            "code": code,
            "type": type(exc).__name__,
            "message": str(exc),
        },
        "command": getattr(args, "command", None),
        "schema_version": SCHEMA_VERSION,
    }
    violation = getattr(exc, "violation_index", None)
    if violation is not None:
        error["error"]["violation_prefix"] = violation
    print(json.dumps(error, indent=2, sort_keys=True))
    print(f"locc-forge {label}: {exc}", file=sys.stderr)
    return code


def entry() -> None:
    sys.exit(main())
