"""Command-line surface: scenario runs, chain verification, audits, scoring.

Exit codes: 0 success / verification passed; 1 verification failure or
corruption detected; 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import canon, crypto, harness
from .access import IntegrityAlarmError
from .canon import NotationParseError
from .explain import Explanation
from .ledger import load_ledger, verify_dump
from .scenario import ConfigError, demo_profile, rare_disease_profile, validate_config

PROFILES = {"demo": demo_profile, "rare-disease": rare_disease_profile}


def _cmd_init(args) -> int:
    value = PROFILES[args.profile]()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(canon.dumps_pretty(value))
    print(f"wrote {args.profile} scenario to {out}")
    return 0


def _cmd_run(args) -> int:
    try:
        value = canon.parse(Path(args.scenario).read_text())
    except NotationParseError as exc:
        print(f"scenario does not parse: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        if not isinstance(value, dict):
            print("scenario must be a mapping", file=sys.stderr)
            return 2
        value["seed"] = args.seed
    config = validate_config(value)
    world = harness.build_scenario(config)
    try:
        report = harness.run_workflow(world)
    except IntegrityAlarmError as exc:
        print(f"integrity alarm: {exc}", file=sys.stderr)
        return 1
    harness.save_world(world, args.out)
    steps = report["steps"]
    print(f"world written to {args.out}")
    print(
        f"blocks={report['blocks']} records={steps['1_registration']['records']}"
        f" permitted={steps['4_requests']['permitted']}"
        f" denied={steps['4_requests']['denied']}"
    )
    print(
        f"security={report['security']['score']:.6f}"
        f" objective={report['trust']['objective']:.6f}"
    )
    mismatches = steps["5_validation"]["mismatches"]
    if mismatches:
        print(f"validation mismatches: {mismatches}", file=sys.stderr)
        return 1
    return 0


def _cmd_verify_chain(args) -> int:
    text = Path(args.ledger).read_text()
    verdict = verify_dump(text)
    if verdict is None:
        blocks = sum(1 for line in text.splitlines() if line.strip())
        print(f"chain valid ({blocks} blocks)")
        return 0
    print(f"corrupt at block {verdict}")
    return 1


def _cmd_audit(args) -> int:
    try:
        chain = load_ledger(Path(args.ledger).read_text())
    except NotationParseError as exc:
        print(f"ledger does not parse: {exc}", file=sys.stderr)
        return 1
    trail = chain.audit_trail(args.record)
    if not trail:
        print(f"no transactions reference {args.record!r}")
        return 0
    for tx in trail:
        print(canon.dumps(tx.to_value()))
    return 0


def _cmd_verify_decision(args) -> int:
    world = harness.load_world(args.world)
    try:
        verdict = harness.verify_decision(world, args.decision)
    except harness.UnknownDecisionError:
        print(f"unknown decision id {args.decision!r}", file=sys.stderr)
        return 2
    if verdict == "valid":
        print("valid")
        return 0
    print(f"mismatch: {verdict}")
    return 1


def _parse_target(spec: str) -> tuple[str, str]:
    kind, sep, key = spec.partition(":")
    if not sep or kind not in ("block", "record", "explanation") or not key:
        raise ConfigError(
            f"target must be block:<index>, record:<id> or explanation:<tx-id>, got {spec!r}"
        )
    return kind, key


def _flip_file_byte(data: bytes, offset: int) -> bytes:
    if not 0 <= offset < len(data):
        raise IndexError(f"offset {offset} out of range ({len(data)} bytes)")
    out = bytearray(data)
    out[offset] ^= 0x01
    return bytes(out)


def _cmd_tamper(args) -> int:
    kind, key = _parse_target(args.target)
    base = Path(args.world)
    if kind == "block":
        try:
            index = int(key)
        except ValueError:
            print(f"block index must be an integer, got {key!r}", file=sys.stderr)
            return 2
        path = base / harness.LEDGER_FILE
        lines = path.read_bytes().split(b"\n")
        body_lines = [i for i, line in enumerate(lines) if line.strip()]
        if not 0 <= index < len(body_lines):
            print(f"no block {index} in {path}", file=sys.stderr)
            return 2
        target = body_lines[index]
        try:
            lines[target] = _flip_file_byte(lines[target], args.offset)
        except IndexError as exc:
            print(str(exc), file=sys.stderr)
            return 2
        path.write_bytes(b"\n".join(lines))
        print(f"flipped bit at byte {args.offset} of block {index}")
        return 0

    path = base / harness.WORLD_FILE
    value = canon.loads(path.read_bytes())
    try:
        if kind == "record":
            holder = value["records"][key]["sealed"]
            holder["ciphertext"] = _flip_file_byte(holder["ciphertext"], args.offset)
        else:
            holder = value["decisions"][key]
            holder["explanation"] = _flip_file_byte(holder["explanation"], args.offset)
    except KeyError:
        print(f"no {kind} {key!r} in {path}", file=sys.stderr)
        return 2
    except IndexError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    path.write_bytes(canon.canonicalize(value) + b"\n")
    print(f"flipped bit at byte {args.offset} of {kind} {key}")
    return 0


def _cmd_score(args) -> int:
    world = harness.load_world(args.world)
    result = harness.score_world(world)
    sys.stdout.write(canon.dumps_pretty(result))
    security = result["security"]
    clean = all(
        security[part] == 1.0 for part in ("integrity", "provenance", "auditability")
    )
    return 0 if clean else 1


def _cmd_explain(args) -> int:
    world = harness.load_world(args.world)
    if args.record not in world.record_owner:
        print(f"unknown record {args.record!r}", file=sys.stderr)
        return 2
    tx_ids = world.decision_index.get(args.record, [])
    if not tx_ids:
        print(f"no decisions recorded for {args.record!r}")
        return 0
    status = 0
    for tx_id in tx_ids:
        tx = world.ledger.find_tx(tx_id)
        stored = world.decision_artifacts.get(tx_id, {}).get("explanation")
        print(f"decision {tx_id}")
        if stored is None:
            print("  stored explanation missing")
            status = 1
            continue
        bound = tx is not None and crypto.digest(stored) == tx.body["explanation_hash"]
        try:
            explanation = Explanation.from_value(canon.loads(stored))
        except (NotationParseError, KeyError, TypeError):
            print("  stored explanation does not parse (tampered?)")
            status = 1
            continue
        prediction = world.decision_artifacts[tx_id].get("prediction")
        if prediction is not None:
            pred_value = canon.loads(prediction)
            print(
                f"  prediction {pred_value['prediction']:+.6f}"
                f" (margin {pred_value['margin']:+.6f})"
            )
        print(f"  baseline {explanation.baseline_value:+.6f}")
        for name, alpha in sorted(
            explanation.attributions.items(), key=lambda kv: -abs(kv[1])
        ):
            print(f"  {name:<20} {alpha:+.6f}")
        print(f"  on-chain binding: {'ok' if bound else 'MISMATCH'}")
        if not bound:
            status = 1
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bxhf",
        description="Consent-gated, ledger-audited, explainable predictions on "
        "synthetic multi-institution health data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write a ready-to-run scenario file")
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=sorted(PROFILES), default="demo")
    p.set_defaults(func=_cmd_init)

    p = sub.add_parser("run", help="build the world, run the workflow, save everything")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify-chain", help="check a ledger dump for corruption")
    p.add_argument("--ledger", required=True)
    p.set_defaults(func=_cmd_verify_chain)

    p = sub.add_parser("audit", help="print every transaction referencing a record")
    p.add_argument("--ledger", required=True)
    p.add_argument("--record", required=True)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("verify-decision", help="re-derive one decision end to end")
    p.add_argument("--world", required=True)
    p.add_argument("--decision", required=True)
    p.set_defaults(func=_cmd_verify_decision)

    p = sub.add_parser("tamper", help="flip one bit in a stored artifact")
    p.add_argument("--world", required=True)
    p.add_argument("--target", required=True, help="block:<i> | record:<id> | explanation:<tx>")
    p.add_argument("--offset", type=int, required=True)
    p.set_defaults(func=_cmd_tamper)

    p = sub.add_parser("score", help="recompute the security score (and objective)")
    p.add_argument("--world", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("explain", help="show stored explanations for a record")
    p.add_argument("--world", required=True)
    p.add_argument("--record", required=True)
    p.set_defaults(func=_cmd_explain)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"not found: {exc.filename}", file=sys.stderr)
        return 2
    except NotationParseError as exc:
        print(f"file does not parse: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
