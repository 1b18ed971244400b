"""The per-contract runtime: commands in, audit chain out."""

import json

import pytest

from pacta.canonical import canonical_json
from pacta.dsl import parse
from pacta.engine import (
    CommandError,
    ContractEngine,
    EngineConfig,
    ReplayError,
    replay,
)
from pacta.fsm import ClauseStatus
from pacta.ledger import AuditEntry, ChainBroken

SALE = """
contract engine-sale {
  party payer
  party vendor

  operation pay(amount: int)
  operation deliver(item: text)

  obligation O1: payer must pay(amount == 60) by t=20 on-violation escalate G1
  obligation O2: vendor must deliver(item == "w1") by t=40 when fulfilled(O1)
  prohibition P1: payer must-not pay(amount in 1..10)

  gap G1: when violated(O1) decide-by one(ref) approve-> waive O1 deny-> record
}
"""

ENFORCE_GAP = """
contract engine-enf {
  party payer
  party vendor
  operation pay(amount: int)
  obligation O1: payer must pay(amount == 60) by t=20 on-violation escalate G1
  gap G1: when violated(O1) decide-by one(ref) approve-> enforce O1 deny-> record
}
"""


def engine_of(text=SALE, **kw):
    kw.setdefault("mode", "enforce")
    kw.setdefault("accounts", {"payer": 500, "vendor": 0})
    return ContractEngine.create(parse(text), EngineConfig(**kw))


def pay(t, amount=60, actor="payer"):
    return {"kind": "attempt", "t": t, "actor": actor, "op": "pay", "args": {"amount": amount}}


# -- construction ----------------------------------------------------------


def test_genesis_entry_binds_contract_and_config():
    eng = engine_of()
    assert len(eng.ledger.entries) == 1
    genesis = json.loads(eng.ledger.entries[0].payload_text())
    assert genesis["kind"] == "genesis"
    assert genesis["contract_id"] == "engine-sale"
    assert genesis["binding_hash"] == eng.spec.binding_hash
    assert genesis["spec_digest"] == eng.spec.digest()
    assert genesis["config"]["mode"] == "enforce"
    assert genesis["config"]["accounts"] == {"payer": 500, "vendor": 0}
    assert genesis["state_hash"] == eng.state.state_hash


def test_unknown_mode_rejected():
    with pytest.raises(CommandError):
        engine_of(mode="referee")


def test_contract_born_halted_opens_intervention_in_genesis():
    text = """
contract engine-born {
  party a
  party b
  operation pay(amount: int)
  obligation O1: a must pay(amount == 1) by t=9 when fulfilled(O2)
  obligation O2: b must pay(amount == 2) by t=9
  gap G1: when inactive(O1) decide-by one(ref) approve-> record deny-> record
}
"""
    eng = engine_of(text)
    assert eng.state.halted_on == "G1"
    assert eng.pending is not None
    genesis = json.loads(eng.ledger.entries[0].payload_text())
    assert genesis["intervention"]["gap_id"] == "G1"

    watcher = engine_of(text, mode="monitor")
    assert watcher.state.halted_on is None
    genesis = json.loads(watcher.ledger.entries[0].payload_text())
    assert genesis["needs_human"] == ["G1"]


# -- command validation (rejections must be side-effect free) --------------


@pytest.mark.parametrize(
    "cmd",
    [
        {"kind": "levitate", "t": 0},
        {"kind": "attempt", "t": -1, "actor": "payer", "op": "pay", "args": {}},
        {"kind": "attempt", "t": True, "actor": "payer", "op": "pay", "args": {}},
        {"kind": "attempt", "t": 0, "actor": "stranger", "op": "pay", "args": {}},
        {"kind": "attempt", "t": 0, "actor": "", "op": "pay", "args": {}},
        {"kind": "attempt", "t": 0, "actor": "payer", "op": "", "args": {}},
        {"kind": "attempt", "t": 0, "actor": "payer", "op": "pay", "args": {"amount": "x"}},
        {"kind": "attempt", "t": 0, "actor": "payer", "op": "pay", "args": {"amount": 1, "extra": 2}},
        {"kind": "attempt", "t": 0, "actor": "payer", "op": "pay", "args": {}},
        {"kind": "deposit", "t": 0, "party": "nobody", "amount": 5},
        {"kind": "deposit", "t": 0, "party": "payer", "amount": 0},
        {"kind": "deposit", "t": 0, "party": "payer", "amount": "5"},
        {"kind": "vote", "t": 0, "arbiter": "ref", "decision": "approve"},
    ],
)
def test_rejected_commands_leave_no_trace(cmd):
    eng = engine_of()
    before = (
        len(eng.ledger.entries),
        eng._seq,
        eng.state.state_hash,
        dict(eng.bank.accounts),
        dict(eng.bank.escrow),
    )
    with pytest.raises(CommandError):
        eng.apply_command(cmd)
    after = (
        len(eng.ledger.entries),
        eng._seq,
        eng.state.state_hash,
        dict(eng.bank.accounts),
        dict(eng.bank.escrow),
    )
    assert after == before


def test_backwards_clock_rejected():
    eng = engine_of()
    eng.apply_command({"kind": "tick", "t": 10})
    with pytest.raises(CommandError):
        eng.apply_command({"kind": "tick", "t": 9})
    with pytest.raises(CommandError):
        eng.apply_command(pay(9))


def test_unknown_operation_is_accepted_and_denied_not_rejected():
    # An op the contract never declared is not a schema error: it flows
    # through as unregulated traffic (and enforcement denies it by default).
    eng = engine_of()
    res = eng.apply_command(
        {"kind": "attempt", "t": 0, "actor": "payer", "op": "teleport", "args": {}}
    )
    assert res["action"]["kind"] == "deny"
    assert res["action"]["reason"] == "unregulated operation (deny by default)"
    assert len(eng.ledger.entries) == 2


# -- accepted commands: one audit entry each -------------------------------


def test_every_accepted_command_appends_exactly_one_entry():
    eng = engine_of()
    cmds = [
        {"kind": "deposit", "t": 0, "party": "payer", "amount": 100},
        pay(0),
        {"kind": "tick", "t": 5},
        {"kind": "attempt", "t": 6, "actor": "vendor", "op": "deliver", "args": {"item": "w1"}},
        {"kind": "tick", "t": 50},
    ]
    for i, cmd in enumerate(cmds, start=1):
        res = eng.apply_command(cmd)
        assert len(eng.ledger.entries) == 1 + i
        assert res["entry_index"] == i
        assert res["state_hash"] == eng.state.state_hash


def test_allow_result_shape():
    eng = engine_of()
    res = eng.apply_command(pay(3))
    assert res["seq"] == 0
    assert res["action"]["kind"] == "allow"
    assert res["action"]["clause_id"] == "O1"
    assert res["action"]["execution"]["outcome"] == "success"
    assert eng.state.statuses["O1"] == ClauseStatus.FULFILLED
    assert eng.bank.accounts == {"payer": 440, "vendor": 60}


def test_deny_is_audited_but_fulfils_nothing():
    eng = engine_of()
    res = eng.apply_command(pay(0, amount=7))
    assert res["action"]["kind"] == "deny"
    assert res["action"]["reason"] == "prohibited by P1"
    assert eng.state.statuses["P1"] == ClauseStatus.ACTIVE
    payload = json.loads(eng.ledger.entries[-1].payload_text())
    assert payload["action"]["kind"] == "deny"


def test_attempt_sweeps_before_judging():
    eng = engine_of()
    # Jumping straight to t=25 first processes the missed deadline (O1
    # violated, G1 fires) and only then judges the attempt — with the gap.
    res = eng.apply_command(pay(25))
    assert res["action"]["kind"] == "escalate-gap"
    assert res["action"]["gap_id"] == "G1"
    assert eng.state.halted_on == "G1"
    assert eng.pending is not None
    payload = json.loads(eng.ledger.entries[-1].payload_text())
    assert payload["sweep"]["actions"][-1]["kind"] == "escalate-gap"
    assert payload["intervention"]["id"] == "ivr-engine-sale-G1"


def test_tick_cadence_sweeps_once_per_time():
    eng = engine_of()
    first = eng.apply_command({"kind": "tick", "t": 12})
    payload = json.loads(eng.ledger.entries[-1].payload_text())
    assert "sweep" in payload  # reminder fires inside this sweep
    again = eng.apply_command({"kind": "tick", "t": 12})
    payload = json.loads(eng.ledger.entries[-1].payload_text())
    assert "sweep" not in payload  # same tick: nothing new to process
    assert first["state_hash"] == again["state_hash"]


def test_deposit_updates_escrow_without_touching_clock():
    eng = engine_of()
    eng.apply_command({"kind": "tick", "t": 10})
    # Deposits are external inflows: they never move or check the clock.
    res = eng.apply_command({"kind": "deposit", "t": 0, "party": "payer", "amount": 80})
    assert res["escrow_balance"] == 80
    assert eng.state.now == 10
    assert eng.bank.escrow == {"payer": 80}


def test_deposit_requires_enforcement_mode():
    eng = engine_of(mode="monitor")
    with pytest.raises(CommandError) as err:
        eng.apply_command({"kind": "deposit", "t": 0, "party": "payer", "amount": 5})
    assert "enforcement" in str(err.value)


# -- halt and resolution ---------------------------------------------------


def halted_engine(text=SALE, **kw):
    eng = engine_of(text, **kw)
    eng.apply_command({"kind": "tick", "t": 25})
    assert eng.state.halted_on == "G1"
    return eng


def test_halted_attempt_answers_with_gap_and_freezes_clock():
    eng = halted_engine()
    res = eng.apply_command(pay(30))
    assert res["action"]["kind"] == "escalate-gap"
    assert eng.state.now == 25  # frozen
    payload = json.loads(eng.ledger.entries[-1].payload_text())
    assert payload["halted"] is True


def test_halted_tick_is_deferred():
    eng = halted_engine()
    res = eng.apply_command({"kind": "tick", "t": 30})
    assert res["deferred"] is True
    assert eng.state.now == 25


def test_vote_waive_resumes_and_fulfils():
    eng = halted_engine()
    res = eng.apply_command(
        {"kind": "vote", "t": 26, "arbiter": "ref", "decision": "approve", "rationale": "paid off-band"}
    )
    assert res["status"] == "resolved"
    assert res["resolution"]["decision"] == "approved"
    effects = res["resolution_effects"]
    assert effects["continuation"] == "waive O1"
    assert any(e["clause_id"] == "O1" and e["new"] == "fulfilled" for e in effects["events"])
    assert eng.state.halted_on is None
    assert eng.state.statuses["O1"] == ClauseStatus.FULFILLED
    assert eng.state.statuses["O2"] == ClauseStatus.ACTIVE  # waiver fires triggers
    assert eng.pending is None
    # The world moves again.
    after = eng.apply_command({"kind": "tick", "t": 30})
    assert after["deferred"] is False


def test_vote_deny_records_and_resumes():
    eng = halted_engine()
    res = eng.apply_command({"kind": "vote", "t": 26, "arbiter": "ref", "decision": "deny"})
    assert res["resolution"]["decision"] == "denied"
    assert res["resolution_effects"]["continuation"] == "record"
    assert eng.state.halted_on is None
    assert eng.state.statuses["O1"] == ClauseStatus.VIOLATED  # stays on the record


def test_vote_by_wrong_arbiter_is_command_error():
    eng = halted_engine()
    with pytest.raises(CommandError):
        eng.apply_command({"kind": "vote", "t": 26, "arbiter": "impostor", "decision": "approve"})
    assert eng.pending.status == "pending"


def test_enforce_continuation_collects_from_escrow():
    eng = engine_of(ENFORCE_GAP, accounts={})
    eng.apply_command({"kind": "deposit", "t": 0, "party": "payer", "amount": 100})
    eng.apply_command({"kind": "tick", "t": 25})
    assert eng.state.halted_on == "G1"
    res = eng.apply_command({"kind": "vote", "t": 26, "arbiter": "ref", "decision": "approve"})
    effects = res["resolution_effects"]
    assert effects["continuation"] == "enforce O1"
    assert effects["collection"]["kind"] == "auto-execute"
    assert effects["collection"]["execution"]["source"] == "escrow"
    assert eng.state.statuses["O1"] == ClauseStatus.FULFILLED
    assert eng.bank.escrow == {"payer": 40}
    assert eng.bank.accounts == {"vendor": 60}


def test_enforce_continuation_without_funds_reviolates():
    eng = engine_of(ENFORCE_GAP, accounts={})
    eng.apply_command({"kind": "tick", "t": 25})
    res = eng.apply_command({"kind": "vote", "t": 26, "arbiter": "ref", "decision": "approve"})
    effects = res["resolution_effects"]
    assert effects["collection_failure"]["reason"].startswith("insufficient funds:")
    # The clause was already violated (that is why the gap fired) and stays so.
    assert eng.state.statuses["O1"] == ClauseStatus.VIOLATED
    assert eng.state.halted_on is None  # the gap was settled by the humans


def test_second_gap_reopens_after_resolution():
    text = """
contract engine-two-gaps {
  party payer
  party vendor
  operation pay(amount: int)
  obligation O1: payer must pay(amount == 1) by t=5 on-violation escalate GA
  obligation O2: vendor must pay(amount == 2) by t=5 on-violation escalate GB
  gap GA: when violated(O1) decide-by one(ref) approve-> record deny-> record
  gap GB: when violated(O2) decide-by one(ref) approve-> record deny-> record
}
"""
    eng = engine_of(text, accounts={})
    eng.apply_command({"kind": "tick", "t": 6})
    assert eng.state.halted_on == "GA"
    res = eng.apply_command({"kind": "vote", "t": 7, "arbiter": "ref", "decision": "approve"})
    # Settling GA exposes GB: the engine opens the next request immediately.
    assert res["resolution_effects"]["next_intervention"]["gap_id"] == "GB"
    assert eng.state.halted_on == "GB"
    assert eng.pending.gap_id == "GB"
    eng.apply_command({"kind": "vote", "t": 8, "arbiter": "ref", "decision": "deny"})
    assert eng.state.halted_on is None
    assert [r.gap_id for r in eng.interventions] == ["GA", "GB"]


def test_vote_timeout_denies_through_tick():
    eng = engine_of(vote_timeout=10)
    eng.apply_command({"kind": "tick", "t": 25})
    res = eng.apply_command({"kind": "tick", "t": 40})
    payload = json.loads(eng.ledger.entries[-1].payload_text())
    assert payload["timeout_resolution"]["decision"] == "denied"
    assert payload["timeout_resolution"]["reason"] == "quorum not met"
    assert eng.state.halted_on is None
    assert res["deferred"] is False  # resolution freed the clock in the same command


# -- monitor mode ----------------------------------------------------------


def test_monitor_executes_first_and_records_verdicts():
    eng = engine_of(mode="monitor")
    res = eng.apply_command(pay(1, amount=7))
    assert res["execution"]["outcome"] == "success"  # nothing gated it
    assert res["verdict"]["verdict"] == "illegal"
    assert res["verdict"]["reason"] == "prohibited by P1"
    assert eng.state.statuses["P1"] == ClauseStatus.VIOLATED
    assert eng.bank.accounts == {"payer": 493, "vendor": 7}
    assert eng.verdicts[-1] == res["verdict"]


def test_monitor_needs_human_notes_in_audit():
    eng = engine_of(mode="monitor")
    eng.apply_command({"kind": "tick", "t": 25})  # O1 misses its deadline
    payload = json.loads(eng.ledger.entries[-1].payload_text())
    assert payload["sweep"]["needs_human"] == ["G1"]
    assert eng.state.halted_on is None
    assert eng.state.settled_gaps == frozenset({"G1"})


# -- clone -----------------------------------------------------------------


def test_clone_is_fully_independent():
    eng = engine_of()
    eng.apply_command(pay(0))
    twin = eng.clone()
    assert twin.state.state_hash == eng.state.state_hash
    assert twin.ledger.head_hash() == eng.ledger.head_hash()

    twin.apply_command({"kind": "attempt", "t": 1, "actor": "vendor", "op": "deliver", "args": {"item": "w1"}})
    assert twin.state.statuses["O2"] == ClauseStatus.FULFILLED
    assert eng.state.statuses["O2"] == ClauseStatus.ACTIVE
    assert len(eng.ledger.entries) == 2
    assert len(twin.ledger.entries) == 3
    # Sequence counters advanced independently.
    assert twin._seq == 2 and eng._seq == 1
    # Shared immutable pieces are genuinely shared (cheap clones).
    assert twin.spec is eng.spec
    assert twin.fsm is eng.fsm


def test_clone_rebinds_enforcer_callback():
    text = """
contract engine-auto {
  party payer
  party vendor
  operation pay(amount: int)
  obligation O1: payer must pay(amount == 60) by t=20 on-violation enforce
}
"""
    eng = engine_of(text, accounts={})
    twin = eng.clone()
    twin.apply_command({"kind": "deposit", "t": 0, "party": "payer", "amount": 100})
    twin.apply_command({"kind": "tick", "t": 25})  # auto-collect consumes a twin seq
    assert twin._seq == 1
    assert twin.bank.escrow == {"payer": 40}
    assert eng._seq == 0
    assert eng.bank.escrow == {}


# -- snapshot --------------------------------------------------------------


def test_snapshot_shape():
    eng = engine_of()
    eng.apply_command(pay(2))
    snap = eng.snapshot()
    assert snap["contract_id"] == "engine-sale"
    assert snap["mode"] == "enforce"
    assert snap["state"]["statuses"]["O1"] == "fulfilled"
    assert snap["state_hash"] == eng.state.state_hash
    assert snap["quiescent"] is False
    assert snap["bank"] == {"accounts": {"payer": 440, "vendor": 60}, "escrow": {}}
    assert snap["pending_request"] is None
    json.dumps(snap)  # JSON-serializable as-is


# -- replay ----------------------------------------------------------------


def scripted_engine():
    eng = engine_of(vote_timeout=50)
    eng.apply_command({"kind": "deposit", "t": 0, "party": "payer", "amount": 30})
    eng.apply_command(pay(0, amount=7))       # denied: prohibited
    eng.apply_command({"kind": "tick", "t": 12})
    eng.apply_command(pay(12))                # allowed, O1 fulfilled
    eng.apply_command({"kind": "tick", "t": 45})  # O2 misses deadline -> violated
    eng.apply_command(
        {"kind": "attempt", "t": 45, "actor": "vendor", "op": "deliver", "args": {"item": "w1"}}
    )  # denied: outside window
    return eng


def test_replay_reproduces_run_exactly():
    eng = scripted_engine()
    result = replay(eng.spec, eng.ledger.entries)
    assert result.state_hash == eng.state.state_hash
    assert result.actions == eng.actions
    assert result.verdicts == eng.verdicts
    assert result.engine.ledger.head_hash() == eng.ledger.head_hash()
    assert [e.entry_hash for e in result.engine.ledger.entries] == [
        e.entry_hash for e in eng.ledger.entries
    ]
    assert result.engine.bank.to_dict() == eng.bank.to_dict()


def test_replay_covers_escalation_paths():
    eng = halted_engine()
    eng.apply_command({"kind": "vote", "t": 26, "arbiter": "ref", "decision": "approve"})
    eng.apply_command({"kind": "tick", "t": 30})
    result = replay(eng.spec, eng.ledger.entries)
    assert result.state_hash == eng.state.state_hash
    assert result.engine.ledger.head_hash() == eng.ledger.head_hash()


def test_replay_detects_tampered_chain():
    eng = scripted_engine()
    entries = list(eng.ledger.entries)
    victim_at = next(
        i for i, e in enumerate(entries) if b'"amount":60' in e.payload_bytes()
    )
    victim = entries[victim_at]
    payload = victim.payload_bytes().replace(b'"amount":60', b'"amount":61')
    entries[victim_at] = AuditEntry(
        index=victim.index,
        prev_hash=victim.prev_hash,
        payload=payload.decode("utf-8"),
        entry_hash=victim.entry_hash,
    )
    with pytest.raises(ChainBroken) as err:
        replay(eng.spec, entries)
    assert err.value.index == victim_at


def test_replay_rejects_foreign_contract():
    eng = scripted_engine()
    other = parse(ENFORCE_GAP)
    with pytest.raises(ReplayError):
        replay(other, eng.ledger.entries)


def test_replay_rejects_changed_prose_same_structure():
    eng = scripted_engine()
    reworded = parse(SALE.replace("party payer", "party payer  # the buying side"))
    assert reworded.digest() == eng.spec.digest()  # structurally identical
    with pytest.raises(ReplayError) as err:
        replay(reworded, eng.ledger.entries)
    assert "prose binding" in str(err.value)


def test_replay_rejects_empty_and_headless_ledgers():
    from pacta.ledger import AuditLog

    eng = scripted_engine()
    with pytest.raises(ReplayError):
        replay(eng.spec, [])
    headless = AuditLog()
    headless.append({"kind": "tick", "t": 0})  # valid chain, but no genesis
    with pytest.raises(ReplayError) as err:
        replay(eng.spec, headless.entries)
    assert "genesis" in str(err.value)


def test_determinism_identical_streams_identical_ledgers():
    cmds = [
        {"kind": "deposit", "t": 0, "party": "payer", "amount": 30},
        pay(0, amount=7),
        {"kind": "tick", "t": 12},
        pay(12),
        {"kind": "tick", "t": 45},
    ]
    a = engine_of()
    b = engine_of()
    for cmd in cmds:
        a.apply_command(dict(cmd))
        b.apply_command(dict(cmd))
    assert a.ledger.head_hash() == b.ledger.head_hash()
    assert [e.payload_bytes() for e in a.ledger.entries] == [
        e.payload_bytes() for e in b.ledger.entries
    ]
