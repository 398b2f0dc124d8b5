"""Command-line interface: model construction, payoffs, fields, trajectories,
and the verification battery.

Exit codes: 0 on success (and all checks passing), 1 when a verification
check fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .battery import run_battery
from .core import (
    GameParams,
    PayoffVector,
    StrategyVector,
    build_payoff_vector,
)
from .errors import MemnError
from .dynamics import (
    FieldSpec,
    adaptive_field,
    default_conserved,
    integrate,
)
from .markov import build_transition_matrix, decompose_payoff, payoff

VARIANT_ALIASES = {
    "full": "full",
    "sym": "symmetric",
    "symmetric": "symmetric",
    "antisym": "antisymmetric",
    "antisymmetric": "antisymmetric",
    "antisym-reparam": "antisymmetric_reparam",
    "antisymmetric_reparam": "antisymmetric_reparam",
}

SUITES = {
    "all": None,
    "symmetry": {
        "permutation-group",
        "conjugation-identities",
        "admissibility",
        "payoff-reflection",
        "j2-multiplicities",
    },
    "dynamics": {
        "gradient-consistency",
        "closed-form-fields",
        "field-decomposition",
        "counting-consistency",
        "reactive-fields",
        "conserved-drift",
        "tft-stationarity",
        "z2-mirror",
        "perturbation-envelope",
    },
}


def parser_error(message: str):
    """Usage errors print to stderr and exit with code 2."""
    print(f"memn: {message}", file=sys.stderr)
    raise SystemExit(2)


def _load_strategy(path: str, n: int | None = None) -> StrategyVector:
    try:
        with open(path, encoding="utf8") as handle:
            data = json.load(handle)
    except OSError as exc:
        parser_error(f"cannot read strategy file {path}: {exc}")
    except json.JSONDecodeError as exc:
        parser_error(f"strategy file {path} is not valid JSON (line {exc.lineno}): {exc.msg}")
    try:
        strategy = StrategyVector(int(data["n"]), np.asarray(data["probs"], float))
    except KeyError as exc:
        parser_error(f"strategy file {path} is missing field {exc.args[0]!r}")
    except (TypeError, ValueError) as exc:
        parser_error(f"strategy file {path}: {exc}")
    if n is not None and strategy.n != n:
        parser_error(f"strategy file {path} has n={strategy.n}, expected n={n}")
    return strategy


def _payoff_vector(args, n: int) -> PayoffVector:
    if args.payoffs is not None:
        params = GameParams(*args.payoffs)
    else:
        params = GameParams.donation(args.b, args.c)
    return build_payoff_vector(params, n, normalized=not args.unnormalized)


def _add_game_flags(parser):
    parser.add_argument("--b", type=float, default=2.0, help="donation benefit")
    parser.add_argument("--c", type=float, default=1.0, help="donation cost")
    parser.add_argument(
        "--payoffs",
        type=float,
        nargs=4,
        metavar=("R", "S", "T", "P"),
        help="explicit one-round payoffs (overrides --b/--c)",
    )
    parser.add_argument(
        "--unnormalized",
        action="store_true",
        help="skip the 1/N averaging of the payoff vector",
    )


def cmd_matrix(args) -> int:
    p = _load_strategy(args.p, args.n)
    q = _load_strategy(args.q, args.n)
    matrix = build_transition_matrix(p, q)
    payload = {
        "version": __version__,
        "n": matrix.n,
        "rows": matrix.sparse_rows(),
    }
    _write_json(args.out, payload)
    return 0


def cmd_payoff(args) -> int:
    p = _load_strategy(args.p, args.n)
    q = _load_strategy(args.q, args.n)
    f = _payoff_vector(args, p.n)
    value = payoff(p, q, f)
    a_s, a_a = decompose_payoff(p, q, f)
    payload = {
        "version": __version__,
        "A": value,
        "A_s": a_s,
        "A_a": a_a,
    }
    _write_json(args.out, payload)
    return 0


def cmd_field(args) -> int:
    x = _load_strategy(args.at, args.n)
    f = _payoff_vector(args, x.n)
    spec = FieldSpec(
        n=x.n,
        payoff=f,
        variant=VARIANT_ALIASES[args.variant],
        gradient_method=args.method,
        h=args.h,
    )
    field = adaptive_field(x, spec)
    payload = {
        "version": __version__,
        "variant": spec.variant,
        "field": field.tolist(),
    }
    _write_json(args.out, payload)
    return 0


def cmd_integrate(args) -> int:
    x0 = _load_strategy(args.x0, args.n)
    f = _payoff_vector(args, x0.n)
    variant = VARIANT_ALIASES[args.variant]
    override = None
    if x0.n == 1 and variant == "antisymmetric":
        override = "memory1_antisym"
    elif x0.n == 1 and variant == "full":
        override = "memory1_full"
    spec = FieldSpec(
        n=x0.n, payoff=f, variant=variant, closed_form_override=override
    )
    trajectory = integrate(
        spec,
        x0,
        dt=args.dt,
        t_max=args.tmax,
        method=args.method,
        boundary_margin=args.boundary_margin,
    )
    names = list(default_conserved(x0.n))
    with open(args.out, "w", encoding="utf8") as handle:
        handle.write(f"# memn {__version__} variant={variant} stop={trajectory.stop_reason}\n")
        state_cols = ",".join(f"p{i}" for i in range(trajectory.states.shape[1]))
        handle.write(f"t,{state_cols},{','.join(names)},field_norm\n")
        for k in range(len(trajectory.times)):
            row = [f"{trajectory.times[k]:.17g}"]
            row += [f"{v:.17g}" for v in trajectory.states[k]]
            row += [f"{trajectory.conserved[name][k]:.17g}" for name in names]
            row.append(f"{trajectory.field_norms[k]:.17g}")
            handle.write(",".join(row) + "\n")
    print(
        f"wrote {args.out}: {len(trajectory.times)} steps, "
        f"stop reason {trajectory.stop_reason}"
    )
    return 0


def cmd_verify(args) -> int:
    n_cap = 4 if args.deep else 2
    n_max = args.n_max if args.n_max is not None else (4 if args.deep else 2)
    if n_max > n_cap:
        parser_error(f"n_max={n_max} needs --deep (cap {n_cap} without it)")
    report = run_battery(
        n_max=n_max,
        trials=args.trials,
        seed=args.seed,
        fault_injection=args.inject_fault,
        only=SUITES[args.suite],
    )
    payload = report.to_dict()
    for check in payload["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(
            f"{status} {check['check_id']:24s} residual {check['max_residual']:.3e} "
            f"tolerance {check['tolerance']:.3e} ({check['wall_time']:.2f}s)"
        )
    print(f"{'PASS' if payload['passed'] else 'FAIL'} overall ({payload['wall_time']:.1f}s)")
    if args.out:
        _write_json(args.out, payload)
    return 0 if payload["passed"] else 1


def _write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf8") as handle:
            handle.write(text + "\n")
        print(f"wrote {path}")
    else:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memn",
        description="memory-N repeated donation games: matrices, payoffs, "
        "adaptive dynamics, verification",
    )
    parser.add_argument("--version", action="version", version=f"memn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    matrix = sub.add_parser("matrix", help="emit a transition matrix as sparse JSON")
    matrix.add_argument("--n", type=int, required=True)
    matrix.add_argument("--p", required=True, help="focal strategy JSON file")
    matrix.add_argument("--q", required=True, help="co-player strategy JSON file")
    matrix.add_argument("--out", help="output path (stdout if omitted)")
    matrix.set_defaults(fn=cmd_matrix)

    pay = sub.add_parser("payoff", help="print A, A_s, A_a as JSON")
    pay.add_argument("--n", type=int, required=True)
    pay.add_argument("--p", required=True)
    pay.add_argument("--q", required=True)
    pay.add_argument("--out")
    _add_game_flags(pay)
    pay.set_defaults(fn=cmd_payoff)

    fld = sub.add_parser("field", help="evaluate an adaptive-dynamics field")
    fld.add_argument("--at", required=True, help="strategy JSON file")
    fld.add_argument("--n", type=int)
    fld.add_argument("--variant", choices=sorted(VARIANT_ALIASES), default="full")
    fld.add_argument(
        "--method",
        choices=("analytic_determinant", "central_difference"),
        default="analytic_determinant",
    )
    fld.add_argument("--h", type=float, default=1e-5)
    fld.add_argument("--out")
    _add_game_flags(fld)
    fld.set_defaults(fn=cmd_field)

    integ = sub.add_parser("integrate", help="integrate a trajectory to CSV")
    integ.add_argument("--x0", required=True, help="starting strategy JSON file")
    integ.add_argument("--n", type=int)
    integ.add_argument("--variant", choices=sorted(VARIANT_ALIASES), default="full")
    integ.add_argument("--dt", type=float, default=1e-3)
    integ.add_argument("--tmax", type=float, default=5.0)
    integ.add_argument("--method", choices=("rk4", "rk45-adaptive"), default="rk4")
    integ.add_argument("--boundary-margin", type=float, default=1e-6)
    integ.add_argument("--out", required=True)
    _add_game_flags(integ)
    integ.set_defaults(fn=cmd_integrate)

    verify = sub.add_parser("verify", help="run the verification battery")
    verify.add_argument(
        "suite", nargs="?", choices=sorted(SUITES), default="all",
        help="restrict the report to one family of checks",
    )
    verify.add_argument("--n-max", "--n", dest="n_max", type=int, default=None)
    verify.add_argument("--trials", type=int, default=50)
    verify.add_argument("--seed", type=int, default=7)
    verify.add_argument("--deep", action="store_true", help="allow n_max up to 4")
    verify.add_argument(
        "--inject-fault",
        action="store_true",
        help="negative control: perturb one transition entry",
    )
    verify.add_argument("--out", help="write the JSON report here")
    verify.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except MemnError as exc:
        print(f"memn: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
