"""
One full run, then an attack, seen through the scoring lens
===========================================================

Build the demo consortium, run registration -> consent -> federated
training -> gated predictions with on-chain decision records -> scoring.
Then play the attacker: silently swap bytes in a stored record and watch
the decision verifier, the security score, and the trust objective all
move — while the hash chain itself stays formally valid.
"""

from bxhf.harness import (
    build_scenario,
    run_workflow,
    score_world,
    tamper,
    verify_decision,
)
from bxhf.scenario import demo_profile, validate_config

world = build_scenario(validate_config(demo_profile()))
report = run_workflow(world)

steps = report["steps"]
print("run summary")
print(f"  blocks on chain          {report['blocks']}")
print(f"  records registered       {steps['1_registration']['records']}")
print(f"  consent policies         {steps['2_consent']['policies']}")
print(f"  federated rounds         {steps['3_training']['rounds']}"
      f"  (loss {steps['3_training']['round_losses'][0]:.3f}"
      f" -> {steps['3_training']['round_losses'][-1]:.3f})")
print(f"  requests permit/deny     {steps['4_requests']['permitted']}"
      f"/{steps['4_requests']['denied']}")
print(f"  validation consensus     {steps['5_validation']['consensus']}")

clean = score_world(world)
print("\nclean scores")
print(f"  integrity     {clean['security']['integrity']:.4f}")
print(f"  provenance    {clean['security']['provenance']:.4f}")
print(f"  auditability  {clean['security']['auditability']:.4f}")
print(f"  security      {clean['security']['score']:.4f}")
print(f"  objective     {clean['trust']['objective']:.4f}")

decisions = report["decision_tx_ids"]
print("\ndecision verdicts before the attack:")
for txid in decisions:
    print(f"  {txid[:16]}… {verify_decision(world, txid)}")

# --- the attack: one bit inside a stored sealed record ---
victim_tx = decisions[0]
victim_record = world.ledger.find_tx(victim_tx).body["record_ref"]
tamper(world, ("record", victim_record), 11)
print(f"\nflipped one bit inside {victim_record}'s sealed bytes")
print(f"  chain verdict is still: {world.ledger.verify_chain()} — the chain commits to")
print("  registration digests, not the store's bytes; the store check is what fails:")

print("\ndecision verdicts after the attack:")
for txid in decisions:
    verdict = verify_decision(world, txid)
    marker = "   <-" if verdict != "valid" else ""
    print(f"  {txid[:16]}… {verdict}{marker}")

dirty = score_world(world)
print("\nscores after the attack")
print(f"  integrity     {dirty['security']['integrity']:.4f}")
print(f"  security      {dirty['security']['score']:.4f}")
print(f"  objective     {dirty['trust']['objective']:.4f}"
      f"   (was {clean['trust']['objective']:.4f} — strictly worse)")

# --- repair is the same flip; everything snaps back ---
tamper(world, ("record", victim_record), 11)
restored = score_world(world)
print(f"\nafter restoring the byte: security {restored['security']['score']:.4f},"
      f" all decisions {set(verify_decision(world, t) for t in decisions)}")
