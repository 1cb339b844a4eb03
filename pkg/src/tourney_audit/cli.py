"""Command-line front end: ``tourney-audit {eval,audit,bounds,gen,sample}``.

Exit codes: 0 success or assertion held, 1 assertion or audited property
failed, 2 usage, parse or rule-definition error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from collections import Counter
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from .rules import InfeasibleError, RuleUndefinedError, alpha_bound, get_rule
from .tournament import (
    ParseError,
    Tournament,
    format_fraction,
    members,
    parse_any,
    parse_compact,
    parse_fraction,
    random_tournament,
    serialize_text,
    top_cycle,
)

SCHEMA_VERSION = audit_mod.SCHEMA_VERSION


class UsageError(Exception):
    pass


def round_half_up(x: Fraction, places: int = 4) -> str:
    scale = 10**places
    q = (x * scale + Fraction(1, 2)).__floor__()
    whole, frac = divmod(q, scale)
    return f"{whole}.{frac:0{places}d}"


def _load_tournament(args) -> Tournament:
    if args.compact:
        return parse_compact(args.compact)
    if not args.input:
        raise UsageError("give --input PATH or --compact '<n>:<hex>'")
    try:
        text = Path(args.input).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    try:
        return parse_any(text)
    except ParseError as exc:
        raise ParseError(f"{args.input}: {exc}") from None


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for sampled runs")
    return args.seed


def _emit(args, payload: dict, text: str | None = None, rows: list[list] | None = None) -> None:
    if args.format == "json":
        out = json.dumps(payload, indent=2, sort_keys=False) + "\n"
    elif args.format == "csv" and rows is not None:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows)
        out = buf.getvalue()
    else:
        out = (text if text is not None else json.dumps(payload, indent=2)) + "\n"
    if args.output:
        try:
            Path(args.output).write_text(out)
        except OSError as exc:
            raise UsageError(f"cannot write {args.output}: {exc.strerror}") from None
    else:
        sys.stdout.write(out)


# -- subcommands ----------------------------------------------------------------------


def cmd_eval(args) -> int:
    rule = get_rule(args.rule)
    t = _load_tournament(args)
    if rule.exact_eval is None:
        raise UsageError(f"rule {rule.id} has no exact evaluator; use 'sample'")
    dist = rule.exact_eval(t)
    payload = {"schema_version": SCHEMA_VERSION, "rule": rule.id, "n": t.n, **dist.to_json()}
    lines = [f"team {i}: {format_fraction(p)} ({float(p):.6f})" for i, p in enumerate(dist.probs)]
    if dist.dummy_mass:
        lines.append(f"dummies: {format_fraction(dist.dummy_mass)}")
    rows = [["team", "rational", "float"]] + [
        [i, format_fraction(p), float(p)] for i, p in enumerate(dist.probs)
    ]
    _emit(args, payload, "\n".join(lines), rows)
    return 0


def cmd_audit(args) -> int:
    rule = get_rule(args.rule)
    prop = args.property
    if prop == "ksnm":
        if args.k is None:
            raise UsageError("--k is required for k-SNM audits")
        seed = _require_seed(args) if args.mode == "sampled" else args.seed
        report = audit_mod.audit_ksnm(
            rule, args.n, args.k, mode=args.mode, samples=args.samples,
            seed=seed, threads=args.threads,
        )
        payload = report.to_json(timing=args.timing)
        ok = True
        if args.assert_alpha is not None:
            limit = parse_fraction(args.assert_alpha)
            ok = report.alpha_observed <= limit
            payload["assert_alpha"] = {"limit": format_fraction(limit), "held": ok}
        text = (
            f"{rule.id} n={args.n} k={args.k} {args.mode}: alpha_observed = "
            f"{format_fraction(report.alpha_observed)} ({float(report.alpha_observed):.6f}) "
            f"over {report.scenarios_checked} scenarios"
        )
        if report.witness:
            w = report.witness.to_json()
            text += f"\nwitness: {w['base']} -> {w['variant']} coalition {w['coalition']}"
        _emit(args, payload, text)
        return 0 if ok else 1

    if prop == "top-cycle" and args.mode == "sampled":
        report = audit_mod.audit_top_cycle_sampled(
            rule, args.n, tournaments=args.tournaments, draws=args.draws,
            seed=_require_seed(args), threads=args.threads,
        )
    elif args.mode != "exhaustive":
        raise UsageError(f"property {prop} supports exhaustive mode only")
    elif prop == "monotone":
        report = audit_mod.audit_monotone(rule, args.n, threads=args.threads)
    elif prop == "cc":
        report = audit_mod.audit_cc(rule, args.n, threads=args.threads)
    else:
        report = audit_mod.audit_top_cycle(rule, args.n, threads=args.threads)
    payload = report.to_json(timing=args.timing)
    text = f"{rule.id} n={args.n} {prop}: {'pass' if report.passed else 'FAIL'} ({report.checked} checks)"
    if report.witness:
        text += f"\nwitness: {json.dumps(report.witness)}"
    _emit(args, payload, text)
    return 0 if report.passed else 1


def cmd_bounds(args) -> int:
    if args.d_max < 3:
        raise UsageError("--d-max must be at least 3")
    ks = list(range(3, args.d_max + 1))
    cells = []
    lines = ["d\\k " + " ".join(f"{k:>6}" for k in ks)]
    rows = [["d"] + [f"k={k}" for k in ks]]
    for d in range(3, args.d_max + 1):
        rendered = []
        for k in ks:
            if k > d:
                rendered.append("-")
                continue
            value = alpha_bound(d, k)
            cell = round_half_up(value)
            rendered.append(cell)
            cells.append({"d": d, "k": k, "rational": format_fraction(value), "rounded": cell})
        lines.append(f"{d:<3} " + " ".join(f"{c:>6}" for c in rendered))
        rows.append([d] + rendered)
    payload = {"schema_version": SCHEMA_VERSION, "d_max": args.d_max, "cells": cells}
    _emit(args, payload, "\n".join(lines), rows)
    return 0


def cmd_gen(args) -> int:
    rng = np.random.default_rng(_require_seed(args))
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out_dir}: {exc.strerror}") from None
    written = []
    for i in range(args.count):
        t = random_tournament(args.n, rng)
        path = out_dir / f"tournament_{i:04d}.trn"
        try:
            path.write_text(serialize_text(t))
        except OSError as exc:
            raise UsageError(f"cannot write {path}: {exc.strerror}") from None
        written.append(str(path))
    payload = {"schema_version": SCHEMA_VERSION, "n": args.n, "seed": args.seed, "files": written}
    _emit(args, payload, "\n".join(written))
    return 0


def cmd_sample(args) -> int:
    rule = get_rule(args.rule)
    t = _load_tournament(args)
    rng = np.random.default_rng(_require_seed(args))
    counts: Counter = Counter()
    for _ in range(args.samples):
        counts[rule.sample(t, rng)] += 1
    exact = None
    if rule.exact_eval is not None:
        try:
            exact = rule.exact_eval(t)
        except InfeasibleError:
            exact = None
    cycle = top_cycle(t)
    outside = sum(c for w, c in counts.items() if w is not None and not cycle >> w & 1)
    freqs = [counts.get(i, 0) / args.samples for i in range(t.n)]
    payload = {
        "schema_version": SCHEMA_VERSION,
        "rule": rule.id,
        "n": t.n,
        "samples": args.samples,
        "seed": args.seed,
        "counts": [counts.get(i, 0) for i in range(t.n)],
        "frequencies": freqs,
        "dummy_wins": counts.get(None, 0),
        "exact": [format_fraction(p) for p in exact.probs] if exact else None,
        "top_cycle": members(cycle),
        "outside_top_cycle": outside,
    }
    lines = []
    for i in range(t.n):
        ref = f"  exact {format_fraction(exact.probs[i])}" if exact else ""
        lines.append(f"team {i}: {counts.get(i, 0)} ({freqs[i]:.4f}){ref}")
    lines.append(f"dummy wins: {counts.get(None, 0)}; outside top cycle: {outside}")
    rows = [["team", "count", "frequency", "exact"]] + [
        [i, counts.get(i, 0), freqs[i], format_fraction(exact.probs[i]) if exact else ""]
        for i in range(t.n)
    ]
    _emit(args, payload, "\n".join(lines), rows)
    return 0


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["json", "csv", "text"], default="json")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=1, help="worker processes; 0 = auto")
    common.add_argument("--output", help="write to this file instead of stdout")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--input", help="tournament file (.trn matrix or compact form)")
    source.add_argument("--compact", help="tournament as '<n>:<hex>'")

    parser = argparse.ArgumentParser(
        prog="tourney-audit", description="Tournament rules and manipulability audits."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common, source], help="exact winner distribution")
    p.add_argument("--rule", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", parents=[common], help="audit a rule property")
    p.add_argument("--rule", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--mode", choices=["exhaustive", "sampled"], default="exhaustive")
    p.add_argument(
        "--property", choices=["ksnm", "monotone", "cc", "top-cycle"], default="ksnm"
    )
    p.add_argument("--samples", type=int, default=1000, help="sampled (T, S) pairs")
    p.add_argument("--tournaments", type=int, default=100, help="sampled top-cycle audit")
    p.add_argument("--draws", type=int, default=1000, help="winners drawn per tournament")
    p.add_argument("--assert-alpha", help="exit 1 unless alpha_observed <= p/q")
    p.add_argument("--timing", action="store_true", help="include wall_time_ms in the report")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bounds", parents=[common], help="tabulate the bracket bound")
    p.add_argument("--d-max", type=int, default=7)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("gen", parents=[common], help="write random tournaments")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sample", parents=[common, source], help="empirical winner frequencies")
    p.add_argument("--rule", required=True)
    p.add_argument("--samples", type=int, default=10000)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) is not None and args.threads < 0:
        parser.error("--threads must be >= 0")
    if args.threads == 0:
        args.threads = audit_mod.resolve_threads(0)
    try:
        return args.func(args)
    except (UsageError, ParseError, RuleUndefinedError, InfeasibleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
