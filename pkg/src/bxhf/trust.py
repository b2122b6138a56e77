"""Ledger-derived security scoring and the joint trust objective.

The security score aggregates three measurable fractions of ledger state:

* integrity: chain validity gating the fraction of registered records whose
  stored sealed bytes still authenticate and reproduce their on-chain
  commitment,
* provenance: the fraction of held records with a registration transaction,
* auditability: on-chain access decisions per ground-truth access event,
  capped at one.

The trust objective couples model quality to that score:

    objective = empirical_loss + penalty_weight * mean_penalty
                                - security_weight * security

so tampering with any stored record strictly increases the objective when
the security weight is positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import crypto
from .explain import explain_linear, plausibility_penalty
from .learning import Dataset, FeatureSpec, LinearModel, loss
from .ledger import Ledger

__all__ = [
    "SecurityInputs",
    "SecurityReport",
    "TrustReport",
    "security_score",
    "trust_objective",
    "verify_record",
]

DEFAULT_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


def verify_record(sealed_record, keys: crypto.KeyTable, registered_digest: str) -> bool:
    """Does the stored sealed record still authenticate and match its
    on-chain commitment digest?"""
    if sealed_record.commitment.digest != registered_digest:
        return False
    try:
        plaintext = crypto.unseal(sealed_record.sealed, keys)
    except (crypto.AuthenticationError, crypto.UnknownKeyError):
        return False
    return crypto.verify_commit(plaintext, sealed_record.commitment)


@dataclass(frozen=True)
class SecurityReport:
    integrity: float
    provenance: float
    auditability: float
    weights: tuple[float, float, float]
    score: float

    def to_value(self) -> dict:
        return {
            "integrity": float(self.integrity),
            "provenance": float(self.provenance),
            "auditability": float(self.auditability),
            "weights": [float(w) for w in self.weights],
            "score": float(self.score),
        }


@dataclass
class SecurityInputs:
    """Everything the security score reads: the chain, the stored sealed
    records, the keys to check them, and the simulator's ground-truth count
    of access events."""

    ledger: Ledger
    record_table: dict
    keys: crypto.KeyTable
    ground_truth_accesses: int
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS


def security_score(inputs: SecurityInputs) -> SecurityReport:
    w_i, w_p, w_a = inputs.weights
    if min(w_i, w_p, w_a) < 0 or abs(w_i + w_p + w_a - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")

    registered = {
        tx.body["record_id"]: tx.body["commitment"]
        for tx in inputs.ledger.iter_txs()
        if tx.kind == "DataRegistration"
    }

    chain_ok = inputs.ledger.verify_chain() is None
    if registered:
        ok = sum(
            1
            for record_id, commitment_digest in registered.items()
            if record_id in inputs.record_table
            and verify_record(inputs.record_table[record_id], inputs.keys, commitment_digest)
        )
        record_fraction = ok / len(registered)
    else:
        record_fraction = 1.0
    integrity = (1.0 if chain_ok else 0.0) * record_fraction

    if inputs.record_table:
        provenance = sum(1 for rid in inputs.record_table if rid in registered) / len(
            inputs.record_table
        )
    else:
        provenance = 1.0

    decisions = inputs.ledger.count_kind("AccessDecision")
    if inputs.ground_truth_accesses == 0:
        auditability = 1.0
    else:
        auditability = min(1.0, decisions / inputs.ground_truth_accesses)

    score = w_i * integrity + w_p * provenance + w_a * auditability
    return SecurityReport(
        integrity=integrity,
        provenance=provenance,
        auditability=auditability,
        weights=(w_i, w_p, w_a),
        score=score,
    )


@dataclass(frozen=True)
class TrustReport:
    empirical_loss: float
    mean_penalty: float
    security: float
    penalty_weight: float
    security_weight: float
    objective: float

    def to_value(self) -> dict:
        return {
            "empirical_loss": float(self.empirical_loss),
            "mean_penalty": float(self.mean_penalty),
            "security": float(self.security),
            "penalty_weight": float(self.penalty_weight),
            "security_weight": float(self.security_weight),
            "objective": float(self.objective),
        }


def trust_objective(
    model: LinearModel,
    dataset: Dataset,
    spec: FeatureSpec,
    security: SecurityInputs | SecurityReport,
    penalty_weight: float,
    security_weight: float,
) -> TrustReport:
    """Loss plus weighted interpretability penalty minus weighted security."""
    if penalty_weight < 0 or security_weight < 0:
        raise ValueError("trade-off weights must be non-negative")
    report = security if isinstance(security, SecurityReport) else security_score(security)
    empirical = loss(model, dataset)
    # Routed through the explanation path on purpose: the reported penalty is
    # the one an auditor recomputes from per-row explanations.
    penalties = [
        plausibility_penalty(explain_linear(model, spec, row), spec) for row in dataset.X
    ]
    mean_penalty = float(np.mean(penalties))
    objective = empirical + penalty_weight * mean_penalty - security_weight * report.score
    return TrustReport(
        empirical_loss=empirical,
        mean_penalty=mean_penalty,
        security=report.score,
        penalty_weight=penalty_weight,
        security_weight=security_weight,
        objective=objective,
    )
