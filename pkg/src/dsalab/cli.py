"""Command-line harness: protocol runs, audits, rate tables, sweeps.

Human-readable tables go to stderr; machine-readable JSON goes to stdout
(or --output).  Exit status is 0 iff every executed check passed, 1 on
check failures, 2 on usage or budget errors.  Set DSALAB_BUDGET to change
the default enumeration budget.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys
from datetime import datetime, timezone

from .errors import BudgetExceeded, DsaError
from .infoaudit import (
    DEFAULT_BUDGET,
    build_seed_space,
    leakage_without_sum,
    run_full_audit,
)
from .protocol import ProtocolConfig, Scheme, theoretical_rates
from .simnet import run_protocol, sweep

BUDGET_ENV = "DSALAB_BUDGET"


def _env_budget() -> int:
    raw = os.environ.get(BUDGET_ENV, "").strip()
    return int(raw) if raw else DEFAULT_BUDGET


def _parse_k_range(spec: str) -> list:
    """Accept a single value ("4") or an inclusive range ("3..6")."""
    if ".." in spec:
        lo_s, hi_s = spec.split("..", 1)
        lo, hi = int(lo_s), int(hi_s)
        if hi < lo:
            raise ValueError(f"empty range {spec!r}")
        return list(range(lo, hi + 1))
    return [int(spec)]


def _schemes(choice: str) -> list:
    if choice == "both":
        return [Scheme.OPTIMAL, Scheme.BASELINE]
    return [Scheme(choice)]


def _emit(doc: dict, args) -> None:
    if not args.deterministic:
        doc["generated_at"] = datetime.now(timezone.utc).isoformat(
            timespec="seconds"
        )
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fp:
            fp.write(text)
    else:
        sys.stdout.write(text)


def _say(line: str = "") -> None:
    print(line, file=sys.stderr)


def _add_common(sp) -> None:
    sp.add_argument("--output", help="write the JSON report to this path")
    sp.add_argument(
        "--deterministic",
        action="store_true",
        help="omit timestamps so identical flags and seed give identical bytes",
    )


def _add_config(sp, *, threshold=True) -> None:
    sp.add_argument("--k", required=True, help="number of users")
    if threshold:
        sp.add_argument("--t", type=int, default=0, help="collusion threshold")
    sp.add_argument("--l", type=int, default=1, help="input length in symbols")
    sp.add_argument("--q", type=int, default=2, help="prime field modulus")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsalab",
        description=(
            "decentralized secure-aggregation laboratory: run the schemes, "
            "audit recovery/security exactly, and tabulate rates"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("rates", help="theoretical rate table per scheme")
    sp.add_argument("--k", required=True, help='user count or range, e.g. "3..6"')
    sp.add_argument(
        "--schemes", default="both", choices=["optimal", "baseline", "both"]
    )
    _add_common(sp)

    sp = sub.add_parser("run", help="execute one protocol run")
    _add_config(sp)
    sp.add_argument("--scheme", default="optimal", choices=["optimal", "baseline"])
    sp.add_argument("--seed", type=int, default=0)
    _add_common(sp)

    sp = sub.add_parser("audit", help="exact recovery/security/key-structure audit")
    _add_config(sp)
    sp.add_argument("--scheme", default="optimal", choices=["optimal", "baseline"])
    sp.add_argument("--budget", type=int, default=None,
                    help=f"max outcomes to enumerate (default {BUDGET_ENV} or 2**24)")
    sp.add_argument("--workers", type=int, default=1,
                    help="partition the enumeration into this many ranges")
    sp.add_argument("--bits", action="store_true",
                    help="print entropies in bits instead of q-ary units")
    sp.add_argument("--seed", type=int, default=0,
                    help="seed for subset sampling above 6 users")
    _add_common(sp)

    sp = sub.add_parser("sweep", help="repeated runs over a config grid")
    sp.add_argument("--k", required=True, help='user count or range, e.g. "3..5"')
    sp.add_argument("--t", type=int, default=0)
    sp.add_argument("--l", type=int, default=1)
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument(
        "--schemes", default="both", choices=["optimal", "baseline", "both"]
    )
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    _add_common(sp)

    sp = sub.add_parser(
        "demo-infeasible",
        help="show the leakage when colluders reach users-2 (needs --force)",
    )
    _add_config(sp, threshold=False)
    sp.add_argument("--t", type=int, default=None,
                    help="colluder count (default users-2)")
    sp.add_argument("--force", action="store_true",
                    help="acknowledge that this shape is infeasible on purpose")
    sp.add_argument("--bits", action="store_true")
    sp.add_argument("--budget", type=int, default=None)
    _add_common(sp)

    return parser


def _unit_scale(args, modulus: int) -> tuple:
    if getattr(args, "bits", False):
        return math.log2(modulus), "bits"
    return 1.0, "q-ary"


def _check_json(result, scale: float) -> dict:
    doc = result.to_json()
    doc["value"] = result.value * scale
    if result.expected is not None:
        doc["expected"] = result.expected * scale
    doc["tolerance"] = result.tolerance * scale
    return doc


def cmd_rates(args, parser) -> int:
    try:
        k_values = _parse_k_range(args.k)
    except ValueError as err:
        parser.error(str(err))
    for k in k_values:
        if k < 3:
            parser.error(
                f"--k {k} is infeasible: secure aggregation needs at least "
                "3 users (with 2, each user reads the other's input off the sum)"
            )
    rows = []
    _say(f"{'users':>5} {'scheme':<9} {'comm':>6} {'key':>6} {'source':>7}")
    for k in k_values:
        for scheme in _schemes(args.schemes):
            cfg = ProtocolConfig(num_users=k, scheme=scheme)
            report = theoretical_rates(cfg)
            rows.append(
                {"users": k, "scheme": scheme.value, "rates": report.to_json()}
            )
            _say(
                f"{k:>5} {scheme.value:<9} "
                f"{str(report.communication):>6} {str(report.individual_key):>6} "
                f"{str(report.source_key):>7}"
            )
    _emit({"command": "rates", "rows": rows}, args)
    return 0


def _config_from(args, *, scheme=None, threshold=None, allow_infeasible=False):
    return ProtocolConfig(
        num_users=int(args.k),
        threshold=args.t if threshold is None else threshold,
        input_len=args.l,
        modulus=args.q,
        scheme=Scheme(scheme or args.scheme),
        allow_infeasible=allow_infeasible,
    )


def cmd_run(args, parser) -> int:
    try:
        cfg = _config_from(args)
    except DsaError as err:
        parser.error(str(err))
    transcript, measured = run_protocol(cfg, seed=args.seed)
    expected = transcript.input_sum()
    recovery_ok = all(
        transcript.recovered[k] == expected for k in cfg.users
    )
    theoretical = theoretical_rates(cfg) if cfg.feasible else None
    rates_match = theoretical is not None and measured.matches(theoretical)
    _say(f"run: {cfg.to_json()}, seed={args.seed}")
    _say(f"  input sum: {list(expected.symbols)}")
    _say(f"  recovery: {'ok' if recovery_ok else 'FAILED'} across {cfg.num_users} users")
    _say(
        "  measured rates: "
        f"comm={measured.communication} key={measured.individual_key} "
        f"source={measured.source_key} (match: {'yes' if rates_match else 'NO'})"
    )
    doc = {
        "command": "run",
        "transcript": transcript.to_json(),
        "measured": measured.to_json(),
        "theoretical": theoretical.to_json() if theoretical else None,
        "recovery_ok": recovery_ok,
        "rates_match": rates_match,
        "passed": recovery_ok and rates_match,
    }
    _emit(doc, args)
    return 0 if doc["passed"] else 1


def cmd_audit(args, parser) -> int:
    try:
        cfg = _config_from(args)
    except DsaError as err:
        parser.error(str(err))
    budget = args.budget if args.budget is not None else _env_budget()
    try:
        space = build_seed_space(cfg, budget)
    except BudgetExceeded as err:
        _say(f"budget exceeded: {err}")
        _say("suggestion: lower --l, --k, or --q, or raise --budget")
        return 2
    results = run_full_audit(
        cfg,
        space=space,
        workers=args.workers,
        subset_rng=random.Random(args.seed),
    )
    scale, units = _unit_scale(args, cfg.modulus)
    _say(f"audit: {cfg.to_json()}  ({space.total} outcomes, units: {units})")
    for r in results:
        mark = "PASS" if r.ok else "FAIL"
        exact = " [exact]" if r.exact_zero else ""
        _say(f"  {mark}  {r.quantity}: {r.value * scale:.6g}{exact}")
    passed = all(r.ok for r in results)
    _say(f"audit: {sum(r.ok for r in results)}/{len(results)} checks passed")
    doc = {
        "command": "audit",
        "config": cfg.to_json(),
        "outcomes": space.total,
        "budget": budget,
        "units": units,
        "checks": [_check_json(r, scale) for r in results],
        "passed": passed,
    }
    _emit(doc, args)
    return 0 if passed else 1


def cmd_sweep(args, parser) -> int:
    try:
        k_values = _parse_k_range(args.k)
        grid = [
            ProtocolConfig(
                num_users=k, threshold=args.t, input_len=args.l,
                modulus=args.q, scheme=scheme,
            )
            for k in k_values
            for scheme in _schemes(args.schemes)
        ]
    except (ValueError, DsaError) as err:
        parser.error(str(err))
    report = sweep(grid, args.trials, random.Random(args.seed))
    for point in report["points"]:
        status = "ok" if point["ok"] else "FAILED"
        _say(
            f"sweep {point['config']}: {point['trials']} trials, "
            f"{point['recovery_failures']} recovery failures, "
            f"rates_match={point['rates_match']} -> {status}"
        )
    doc = {"command": "sweep", "trials": args.trials}
    doc.update(report)
    _emit(doc, args)
    return 0 if report["passed"] else 1


def cmd_demo_infeasible(args, parser) -> int:
    k = int(args.k)
    colluders = args.t if args.t is not None else k - 2
    if not args.force:
        _say(
            f"refusing: with {colluders} colluders among {k} users the scheme "
            "is infeasible (the feasible region is users >= 3 and colluders "
            "<= users - 3), so running it leaks inputs by design."
        )
        _say("pass --force to demonstrate that leakage on purpose.")
        return 2
    try:
        cfg = _config_from(
            args, scheme="optimal", threshold=colluders, allow_infeasible=True
        )
    except DsaError as err:
        parser.error(str(err))
    budget = args.budget if args.budget is not None else _env_budget()
    try:
        space = build_seed_space(cfg, budget)
    except BudgetExceeded as err:
        _say(f"budget exceeded: {err}")
        return 2
    scale, units = _unit_scale(args, cfg.modulus)
    pairs = []
    _say(
        f"leakage demo: {cfg.to_json()} -- observer + {k - 2} colluders see "
        f"the target's input exposed ({units})"
    )
    for observer in cfg.users:
        for target in cfg.others(observer):
            result = leakage_without_sum(cfg, observer, target, space=space)
            pairs.append(
                {
                    "observer": observer,
                    "target": target,
                    "colluders": [
                        u for u in cfg.users if u not in (observer, target)
                    ],
                    "check": _check_json(result, scale),
                }
            )
            _say(
                f"  observer {observer} -> target {target}: "
                f"{result.value * scale:.6g} leaked"
            )
    passed = all(p["check"]["ok"] for p in pairs)
    doc = {
        "command": "demo-infeasible",
        "config": cfg.to_json(),
        "outcomes": space.total,
        "units": units,
        "pairs": pairs,
        "passed": passed,
    }
    _emit(doc, args)
    return 0 if passed else 1


_DISPATCH = {
    "rates": cmd_rates,
    "run": cmd_run,
    "audit": cmd_audit,
    "sweep": cmd_sweep,
    "demo-infeasible": cmd_demo_infeasible,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.command](args, parser)
    except DsaError as err:
        _say(f"error: {err}")
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
