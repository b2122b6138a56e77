"""Deterministic end-to-end simulation of the consortium workflow.

Builds a world from a scenario config (sealed records, consent policies,
one shared ledger), then drives the five steps in order: registration,
consent, federated training, gated prediction requests, and a validation
pass that re-derives every decision from on-chain data.  Everything is
reproducible from the seed; tamper injection flips stored bytes so the
verifiers have something real to catch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import canon, crypto
from .access import (
    AccessPolicy,
    ConsentRegistry,
    IntegrityAlarmError,
    gated_fetch,
    update_consent,
)
from .explain import Explanation, explain_linear
from .learning import (
    Dataset,
    LinearModel,
    TrainConfig,
    apply_delta,
    fed_avg,
    local_update,
    log_model_update,
    loss,
    predict,
)
from .ledger import (
    Ledger,
    LogicalClock,
    Transaction,
    build_transaction,
    dump_ledger,
    load_ledger_lenient,
)
from .scenario import ScenarioConfig, generate_records, load_config, validate_config
from .trust import SecurityInputs, security_score, trust_objective

__all__ = [
    "SealedRecord",
    "TamperTargetError",
    "UnknownDecisionError",
    "WorldState",
    "build_scenario",
    "load_world",
    "run_workflow",
    "save_world",
    "score_world",
    "tamper",
    "verify_decision",
]

SCENARIO_FILE = "scenario.bx"
LEDGER_FILE = "ledger.bx"
WORLD_FILE = "world.bx"
REPORT_FILE = "report.bx"


class UnknownDecisionError(KeyError):
    """No DecisionRecord transaction with that id."""


class TamperTargetError(KeyError):
    """Tamper target does not exist in this world."""


@dataclass
class SealedRecord:
    """A registered record at rest: sealed bytes plus its public commitment."""

    record_id: str
    institution_id: str
    sealed: crypto.SealedPayload
    commitment: crypto.Commitment

    def to_value(self) -> dict:
        return {
            "commitment": self.commitment.to_value(),
            "institution_id": self.institution_id,
            "sealed": self.sealed.to_value(),
        }

    @classmethod
    def from_value(cls, record_id: str, value: dict) -> "SealedRecord":
        return cls(
            record_id=record_id,
            institution_id=value["institution_id"],
            sealed=crypto.SealedPayload.from_value(value["sealed"]),
            commitment=crypto.Commitment.from_value(value["commitment"]),
        )


@dataclass
class WorldState:
    """Everything a consortium run touches, on-chain and off."""

    config: ScenarioConfig
    ledger: Ledger
    clock: LogicalClock
    keys: crypto.KeyTable
    stores: dict[str, dict[str, SealedRecord]]
    record_owner: dict[str, str]
    registry: ConsentRegistry
    datasets: dict[str, Dataset]
    model: LinearModel | None = None
    decision_artifacts: dict[str, dict[str, bytes]] = field(default_factory=dict)
    decision_index: dict[str, list[str]] = field(default_factory=dict)
    ground_truth_events: list[dict] = field(default_factory=list)
    unreadable_records: list[str] = field(default_factory=list)
    report: dict | None = None

    @property
    def record_table(self) -> dict[str, SealedRecord]:
        table: dict[str, SealedRecord] = {}
        for store in self.stores.values():
            table.update(store)
        return table

    def pooled_dataset(self) -> Dataset:
        xs = [self.datasets[inst].X for inst in self.config.institution_ids]
        ys = [self.datasets[inst].y for inst in self.config.institution_ids]
        return Dataset(np.vstack(xs), np.concatenate(ys), "consortium")


def _key_id(institution_id: str) -> str:
    return f"k-{institution_id}"


def build_scenario(config: ScenarioConfig | dict) -> WorldState:
    """Seal, commit, and register every record; install consent policies.

    All randomness (keys, row data, salts, nonces) comes from one generator
    seeded by the config, in a fixed draw order, so rebuilding with the same
    seed reproduces the ledger byte for byte.
    """
    if isinstance(config, dict):
        config = validate_config(config)
    rng = np.random.default_rng(config.seed)

    keys = crypto.KeyTable()
    for inst in config.institution_ids:
        keys.register(_key_id(inst), rng.bytes(crypto.KEY_LEN))

    records = generate_records(config, rng)

    ledger = Ledger()
    clock = LogicalClock()
    stores: dict[str, dict[str, SealedRecord]] = {inst: {} for inst in config.institution_ids}
    record_owner: dict[str, str] = {}
    rows: dict[str, list[tuple[np.ndarray, float]]] = {inst: [] for inst in config.institution_ids}

    spec = config.feature_spec
    for inst in config.institution_ids:
        batch: list[Transaction] = []
        for rec in (r for r in records if r.institution_id == inst):
            payload = rec.payload()
            salt = rng.bytes(crypto.SALT_LEN)
            commitment = crypto.commit(payload, salt)
            nonce = rng.bytes(crypto.NONCE_LEN)
            sealed = crypto.seal(payload, _key_id(inst), keys, nonce)
            stores[inst][rec.record_id] = SealedRecord(
                record_id=rec.record_id,
                institution_id=inst,
                sealed=sealed,
                commitment=commitment,
            )
            record_owner[rec.record_id] = inst
            rows[inst].append(
                (np.asarray([rec.features[n] for n in spec.names], dtype=float), rec.outcome)
            )
            batch.append(
                build_transaction(
                    "DataRegistration",
                    inst,
                    clock.next(),
                    {
                        "record_id": rec.record_id,
                        "institution_id": inst,
                        "commitment": commitment.digest,
                    },
                )
            )
        ledger.append_block(batch)

    registry = ConsentRegistry()
    if config.policies:
        batch = []
        for policy in config.policies:
            update_consent(ledger, registry, policy, clock, batch)
        ledger.append_block(batch)

    datasets = {
        inst: Dataset(
            np.vstack([x for x, _ in rows[inst]]),
            np.asarray([y for _, y in rows[inst]], dtype=float),
            inst,
        )
        for inst in config.institution_ids
    }

    return WorldState(
        config=config,
        ledger=ledger,
        clock=clock,
        keys=keys,
        stores=stores,
        record_owner=record_owner,
        registry=registry,
        datasets=datasets,
    )


def _train_config(config: ScenarioConfig) -> TrainConfig:
    train = config.train
    return TrainConfig(
        learning_rate=float(train["learning_rate"]),
        epochs=int(train["local_steps"]),
        penalty_weight=float(train["penalty_weight"]),
    )


def run_workflow(world: WorldState, config: ScenarioConfig | None = None) -> dict:
    """Drive the full scripted run and return the report value.

    Order: federated rounds (ModelUpdate txs, one block per round), scripted
    requests (one block each; permits additionally bind a DecisionRecord),
    a validation pass by every institution, then scoring.
    """
    cfg = config if config is not None else world.config
    spec = cfg.feature_spec
    tcfg = _train_config(cfg)
    link = cfg.train["link"]
    rounds = int(cfg.federation["rounds"])

    model = LinearModel(np.zeros(spec.dim), 0.0, link)
    pooled = world.pooled_dataset()
    round_losses: list[float] = []
    for round_index in range(rounds):
        deltas = []
        batch: list[Transaction] = []
        for inst in cfg.institution_ids:
            delta = local_update(model, world.datasets[inst], spec, tcfg)
            log_model_update(world.ledger, inst, round_index, delta, world.clock, batch)
            deltas.append(delta)
        world.ledger.append_block(batch)
        model = apply_delta(model, fed_avg(deltas))
        round_losses.append(loss(model, pooled))
    world.model = model

    permitted = 0
    denied = 0
    decision_tx_ids: list[str] = []
    table = world.record_table
    for request in cfg.requests:
        world.ground_truth_events.append(dict(request))
        batch = []
        try:
            plaintext, _ = gated_fetch(
                world.ledger,
                world.keys,
                world.registry,
                table,
                world.record_owner,
                request["user_id"],
                request["record_id"],
                request["purpose"],
                world.clock,
                batch,
            )
        except IntegrityAlarmError:
            # the permit was issued before the seal failed; it must still
            # reach the chain so the audit trail shows what was attempted
            world.ledger.append_block(batch)
            raise
        if plaintext is None:
            world.ledger.append_block(batch)
            denied += 1
            continue
        rid = request["record_id"]
        x = np.asarray([plaintext["features"][n] for n in spec.names], dtype=float)
        margin, prediction = predict(model, x)
        prediction_value = {"margin": margin, "prediction": prediction}
        explanation = explain_linear(
            model, spec, x, record_ref=rid, input_commitment=table[rid].commitment.digest
        )
        decision_tx = build_transaction(
            "DecisionRecord",
            request["user_id"],
            world.clock.next(),
            {
                "record_ref": rid,
                "input_commitment": table[rid].commitment.digest,
                "model_hash": model.param_hash(),
                "prediction_hash": crypto.digest_value(prediction_value),
                "explanation_hash": explanation.digest(),
            },
        )
        batch.append(decision_tx)
        world.ledger.append_block(batch)
        world.decision_artifacts[decision_tx.tx_id] = {
            "explanation": canon.canonicalize(explanation.to_value()),
            "prediction": canon.canonicalize(prediction_value),
        }
        world.decision_index.setdefault(rid, []).append(decision_tx.tx_id)
        decision_tx_ids.append(decision_tx.tx_id)
        permitted += 1

    # Every institution independently replays the verification; the report
    # records whether they agreed (they must — the world state is shared).
    verdict_sets = []
    for _ in cfg.institution_ids:
        verdict_sets.append({txid: verify_decision(world, txid) for txid in decision_tx_ids})
    verdicts = verdict_sets[0] if verdict_sets else {}
    consensus = all(v == verdicts for v in verdict_sets)
    mismatches = sorted(txid for txid, v in verdicts.items() if v != "valid")

    weights = tuple(float(w) for w in cfg.trust["component_weights"])
    sec = security_score(
        SecurityInputs(
            ledger=world.ledger,
            record_table=table,
            keys=world.keys,
            ground_truth_accesses=len(world.ground_truth_events),
            weights=weights,
        )
    )
    trust = trust_objective(
        model,
        pooled,
        spec,
        sec,
        penalty_weight=float(cfg.train["penalty_weight"]),
        security_weight=float(cfg.trust["security_weight"]),
    )

    report = {
        "steps": {
            "1_registration": {
                "records": world.ledger.count_kind("DataRegistration"),
                "institutions": len(cfg.institution_ids),
            },
            "2_consent": {"policies": world.ledger.count_kind("ConsentUpdate")},
            "3_training": {
                "rounds": rounds,
                "nodes": len(cfg.institution_ids),
                "model_updates": world.ledger.count_kind("ModelUpdate"),
                "round_losses": round_losses,
            },
            "4_requests": {
                "total": len(cfg.requests),
                "permitted": permitted,
                "denied": denied,
            },
            "5_validation": {
                "validators": list(cfg.institution_ids),
                "checked": len(decision_tx_ids),
                "valid": sum(1 for v in verdicts.values() if v == "valid"),
                "consensus": consensus,
                "mismatches": mismatches,
            },
        },
        "blocks": len(world.ledger),
        "decision_count": permitted,
        "decision_tx_ids": decision_tx_ids,
        "model_hash": model.param_hash(),
        "security": sec.to_value(),
        "trust": trust.to_value(),
    }
    world.report = report
    return report


def verify_decision(world: WorldState, decision_tx_id: str) -> str:
    """Re-derive one decision from on-chain data and stored artifacts.

    Returns ``"valid"`` or the first mismatch found, checked in dependency
    order: ``"input"``, ``"model"``, ``"prediction"``, ``"explanation"``.
    """
    tx = world.ledger.find_tx(decision_tx_id)
    if tx is None or tx.kind != "DecisionRecord":
        raise UnknownDecisionError(decision_tx_id)
    body = tx.body
    rid = body["record_ref"]
    record = world.record_table.get(rid)
    if record is None:
        return "input"
    try:
        plaintext = crypto.unseal(record.sealed, world.keys)
    except (crypto.AuthenticationError, crypto.UnknownKeyError):
        return "input"
    if not crypto.verify_commit(plaintext, record.commitment):
        return "input"
    if record.commitment.digest != body["input_commitment"]:
        return "input"

    if world.model is None or world.model.param_hash() != body["model_hash"]:
        return "model"

    spec = world.config.feature_spec
    x = np.asarray([plaintext["features"][n] for n in spec.names], dtype=float)
    margin, prediction = predict(world.model, x)
    artifacts = world.decision_artifacts.get(decision_tx_id, {})
    stored_prediction = artifacts.get("prediction")
    if stored_prediction is None or crypto.digest(stored_prediction) != body["prediction_hash"]:
        return "prediction"
    if crypto.digest_value({"margin": margin, "prediction": prediction}) != body["prediction_hash"]:
        return "prediction"

    stored_explanation = artifacts.get("explanation")
    if stored_explanation is None or crypto.digest(stored_explanation) != body["explanation_hash"]:
        return "explanation"
    rederived = explain_linear(
        world.model, spec, x, record_ref=rid, input_commitment=body["input_commitment"]
    )
    if rederived.digest() != body["explanation_hash"]:
        return "explanation"
    return "valid"


def _flipped(data: bytes, offset: int, what: str) -> bytes:
    if not 0 <= offset < len(data):
        raise IndexError(f"offset {offset} out of range for {what} of {len(data)} bytes")
    out = bytearray(data)
    out[offset] ^= 0x01
    return bytes(out)


def tamper(world: WorldState, target: tuple, offset: int) -> WorldState:
    """Flip one bit in a stored artifact (never in an on-chain hash).

    Targets: ``("block", index)`` — the block's stored payload bytes;
    ``("record", record_id)`` — the sealed ciphertext; ``("explanation",
    decision_tx_id)`` — the stored explanation artifact.
    """
    kind, key = target
    if kind == "block":
        try:
            block = world.ledger.blocks[int(key)]
        except (IndexError, ValueError):
            raise TamperTargetError(f"no block {key!r}") from None
        block.payload_bytes = _flipped(block.payload_bytes, offset, f"block {key}")
    elif kind == "record":
        owner = world.record_owner.get(key)
        if owner is None:
            raise TamperTargetError(f"no record {key!r}")
        record = world.stores[owner][key]
        record.sealed = replace(
            record.sealed,
            ciphertext=_flipped(record.sealed.ciphertext, offset, f"record {key}"),
        )
    elif kind == "explanation":
        artifacts = world.decision_artifacts.get(key)
        if artifacts is None:
            raise TamperTargetError(f"no decision {key!r}")
        artifacts["explanation"] = _flipped(
            artifacts["explanation"], offset, f"explanation {key}"
        )
    else:
        raise TamperTargetError(f"unknown tamper kind {kind!r}")
    return world


def score_world(world: WorldState) -> dict:
    """Security components (and, model permitting, the trust objective)."""
    weights = tuple(float(w) for w in world.config.trust["component_weights"])
    sec = security_score(
        SecurityInputs(
            ledger=world.ledger,
            record_table=world.record_table,
            keys=world.keys,
            ground_truth_accesses=len(world.ground_truth_events),
            weights=weights,
        )
    )
    result = {"security": sec.to_value()}
    if world.model is not None and any(len(d) for d in world.datasets.values()):
        trust = trust_objective(
            world.model,
            world.pooled_dataset(),
            world.config.feature_spec,
            sec,
            penalty_weight=float(world.config.train["penalty_weight"]),
            security_weight=float(world.config.trust["security_weight"]),
        )
        result["trust"] = trust.to_value()
    if world.unreadable_records:
        result["unreadable_records"] = sorted(world.unreadable_records)
    return result


def world_value(world: WorldState) -> dict:
    value = {
        "events": [dict(e) for e in world.ground_truth_events],
        "keys": world.keys.to_value(),
        "records": {rid: rec.to_value() for rid, rec in world.record_table.items()},
        "decisions": {
            txid: dict(artifacts) for txid, artifacts in world.decision_artifacts.items()
        },
    }
    if world.model is not None:
        value["model"] = world.model.to_value()
    return value


def save_world(world: WorldState, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / SCENARIO_FILE).write_text(canon.dumps_pretty(world.config.raw))
    (out / LEDGER_FILE).write_text(dump_ledger(world.ledger))
    (out / WORLD_FILE).write_bytes(canon.canonicalize(world_value(world)) + b"\n")
    if world.report is not None:
        (out / REPORT_FILE).write_bytes(canon.canonicalize(world.report) + b"\n")
    return out


def load_world(world_dir: str | Path) -> WorldState:
    """Rebuild a world from its saved files.

    The ledger is loaded leniently (damaged lines dropped) so a tampered
    dump can still be scored; records whose seals no longer authenticate
    are listed in ``unreadable_records`` and left out of the datasets.
    """
    base = Path(world_dir)
    config = load_config((base / SCENARIO_FILE).read_text())
    ledger, _ = load_ledger_lenient((base / LEDGER_FILE).read_text())
    value = canon.loads((base / WORLD_FILE).read_bytes())

    keys = crypto.KeyTable.from_value(value["keys"])
    stores: dict[str, dict[str, SealedRecord]] = {inst: {} for inst in config.institution_ids}
    record_owner: dict[str, str] = {}
    for rid, rec_value in value["records"].items():
        record = SealedRecord.from_value(rid, rec_value)
        stores.setdefault(record.institution_id, {})[rid] = record
        record_owner[rid] = record.institution_id

    registry = ConsentRegistry()
    for tx in ledger.iter_txs():
        if tx.kind == "ConsentUpdate":
            registry.apply(AccessPolicy.from_value(tx.body))

    spec = config.feature_spec
    unreadable: list[str] = []
    datasets: dict[str, Dataset] = {}
    for inst in sorted(stores):
        xs, ys = [], []
        for rid in sorted(stores[inst]):
            try:
                plaintext = crypto.unseal(stores[inst][rid].sealed, keys)
            except (crypto.AuthenticationError, crypto.UnknownKeyError):
                unreadable.append(rid)
                continue
            xs.append([plaintext["features"][n] for n in spec.names])
            ys.append(plaintext["outcome"])
        if xs:
            datasets[inst] = Dataset(
                np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), inst
            )
        else:
            datasets[inst] = Dataset(np.zeros((0, spec.dim)), np.zeros(0), inst)

    model = LinearModel.from_value(value["model"]) if "model" in value else None

    decision_artifacts = {
        txid: {name: bytes(data) for name, data in artifacts.items()}
        for txid, artifacts in value["decisions"].items()
    }
    decision_index: dict[str, list[str]] = {}
    for tx in ledger.iter_txs():
        if tx.kind == "DecisionRecord":
            decision_index.setdefault(tx.body["record_ref"], []).append(tx.tx_id)

    world = WorldState(
        config=config,
        ledger=ledger,
        clock=LogicalClock(ledger.max_logical_time() + 1),
        keys=keys,
        stores=stores,
        record_owner=record_owner,
        registry=registry,
        datasets=datasets,
        model=model,
        decision_artifacts=decision_artifacts,
        decision_index=decision_index,
        ground_truth_events=[dict(e) for e in value["events"]],
        unreadable_records=unreadable,
    )
    report_path = base / REPORT_FILE
    if report_path.exists():
        world.report = canon.loads(report_path.read_bytes())
    return world
