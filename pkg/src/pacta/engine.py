"""Per-contract runtime: one ordered command stream in, one audit chain out.

The engine owns everything one running contract needs — compiled machine,
state, bank, executor, the mode's observer or enforcer, escalation — and
exposes a single entry point, :meth:`ContractEngine.apply_command`.  Commands
are plain dicts (attempt, tick, deposit, vote); every accepted command
appends exactly one audit entry capturing the command and its full effect,
so a ledger is a complete, replayable transcript of a run.

Two modes:

- ``monitor``: operations execute first, unconditionally; the engine then
  observes and records verdicts.  Gap guards produce needs-human audit notes
  and observation continues.
- ``enforce``: the engine gates operations (deny by default), reminds around
  deadlines, auto-collects enforceable obligations from escrow, and on a
  fired gap halts the contract and opens an intervention request; while
  halted the clock freezes, every attempt answers with the gap, and only a
  human resolution (or vote timeout) resumes execution with the designated
  continuation.

Determinism: no wall clock, no randomness — identical command streams give
byte-identical ledgers, which is what ``replay`` checks and what replicas
vote over.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .enforcer import Enforcer, EnforcerError, SweepResult
from .escalation import Decision, EscalationError, EscalationService, Vote
from .executor import Bank, Executor
from .fsm import ClauseStatus, CompiledContract, ContractState, compile_spec
from .ledger import AuditEntry, AuditLog, ChainBroken
from .model import ContractSpec, OperationAttempt, schema_error
from .monitor import Monitor


class EngineError(Exception):
    """Base class for engine errors."""


class CommandError(EngineError):
    """A command was malformed or not acceptable in the current state."""


class ReplayError(EngineError):
    """A ledger could not be replayed against the given contract."""


@dataclass(frozen=True)
class EngineConfig:
    """Run configuration; recorded in the genesis audit entry so that a
    ledger alone (plus the contract) reconstructs the run."""

    mode: str = "enforce"  # "monitor" | "enforce"
    accounts: Mapping[str, int] = field(default_factory=dict)
    roster: tuple[str, ...] = ()
    reminder_window: int = 10
    vote_timeout: Optional[int] = None
    context_entries: int = 5

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "accounts": dict(sorted(self.accounts.items())),
            "roster": list(self.roster),
            "reminder_window": self.reminder_window,
            "vote_timeout": self.vote_timeout,
            "context_entries": self.context_entries,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EngineConfig":
        return cls(
            mode=d["mode"],
            accounts=dict(d.get("accounts", {})),
            roster=tuple(d.get("roster", ())),
            reminder_window=d.get("reminder_window", 10),
            vote_timeout=d.get("vote_timeout"),
            context_entries=d.get("context_entries", 5),
        )


class ContractEngine:
    """One contract, one mode, one ordered command stream."""

    def __init__(self) -> None:
        raise TypeError("use ContractEngine.create(spec, config)")

    @classmethod
    def create(cls, spec: ContractSpec, config: EngineConfig) -> "ContractEngine":
        if config.mode not in ("monitor", "enforce"):
            raise CommandError(f"unknown mode {config.mode!r}")
        self = object.__new__(cls)
        self.spec = spec
        self.fsm: CompiledContract = compile_spec(spec)
        self.config = config
        self.escalation = EscalationService(
            roster=config.roster,
            vote_timeout=config.vote_timeout,
            context_entries=config.context_entries,
        )
        self.bank = Bank(accounts=dict(config.accounts))
        self.executor = Executor.with_builtins(self.bank, Executor.route_between(spec.parties))
        self._seq = 0
        self.monitor = Monitor(self.fsm) if config.mode == "monitor" else None
        self.enforcer = (
            Enforcer(self.fsm, self.executor, self._alloc_seq, config.reminder_window)
            if config.mode == "enforce"
            else None
        )
        self.ledger = AuditLog()
        self.state: ContractState = self.fsm.initial_state()
        self.pending = None  # open InterventionRequest, if any
        self.interventions: list = []
        self.verdicts: list[dict] = []
        self.actions: list[dict] = []
        self.last_swept = -1

        genesis: dict = {
            "kind": "genesis",
            "contract_id": spec.id,
            "binding_hash": spec.binding_hash,
            "spec_digest": spec.digest(),
            "config": config.to_dict(),
        }
        # A contract can be born with a firing guard.
        if self.state.halted_on is not None:
            if self.monitor is not None:
                notes: list[str] = []
                self.state = self.monitor.settle_notes(self.state, notes)
                genesis["needs_human"] = notes
            else:
                genesis["intervention"] = self._open_intervention()
        genesis["state_hash"] = self.state.state_hash
        self.ledger.append(genesis)
        return self

    # -- plumbing ----------------------------------------------------------

    def _alloc_seq(self) -> int:
        seq = self._seq
        self._seq += 1
        return seq

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def state_hash(self) -> str:
        return self.state.state_hash

    def clone(self) -> "ContractEngine":
        """Independent copy sharing only immutable pieces (spec, compiled fsm)."""
        memo = {id(self.spec): self.spec, id(self.fsm): self.fsm}
        return copy.deepcopy(self, memo)

    def __deepcopy__(self, memo: dict) -> "ContractEngine":
        other = object.__new__(ContractEngine)
        memo[id(self)] = other
        for key, value in self.__dict__.items():
            setattr(other, key, copy.deepcopy(value, memo))
        # Rebind the callables that captured self.
        if other.enforcer is not None:
            other.enforcer.alloc_seq = other._alloc_seq
        return other

    def _open_intervention(self) -> dict:
        gap = self.spec.gap(self.state.halted_on)
        recent = [e.to_dict() for e in self.ledger.entries[-self.config.context_entries:]]
        self.pending = self.escalation.raise_intervention(
            self.spec,
            gap,
            self.state.state_hash,
            recent,
            opened_at=self.state.now,
            open_request=self.pending,
        )
        self.interventions.append(self.pending)
        return self.pending.to_dict()

    def _advance(self, t: int) -> Optional[dict]:
        """Run the mode's clock sweep up to t; None when no advance was due."""
        if t <= self.last_swept:
            return None
        self.last_swept = t
        if self.enforcer is not None:
            sweep: SweepResult = self.enforcer.on_tick(self.state, t)
            self.state = sweep.state
            for action in sweep.actions:
                self.actions.append(action.to_dict())
            out: dict = {
                "actions": [a.to_dict() for a in sweep.actions],
                "events": sweep.events,
            }
            if sweep.collection_failures:
                out["collection_failures"] = sweep.collection_failures
            return out
        state, events = self.fsm.tick(self.state, t)
        notes: list[str] = []
        state = self.monitor.settle_notes(state, notes)
        self.state = state
        out = {"events": [e.to_dict() for e in events]}
        if notes:
            out["needs_human"] = notes
        return out

    def _append(self, payload: dict) -> AuditEntry:
        payload["state_hash"] = self.state.state_hash
        return self.ledger.append(payload)

    # -- commands ----------------------------------------------------------

    def apply_command(self, cmd: Mapping) -> dict:
        """Apply one command; returns a result summary for the caller.

        Raises :class:`CommandError` on malformed or unacceptable commands;
        accepted commands append exactly one audit entry.
        """
        kind = cmd.get("kind")
        if kind == "attempt":
            return self._cmd_attempt(cmd)
        if kind == "tick":
            return self._cmd_tick(cmd)
        if kind == "deposit":
            return self._cmd_deposit(cmd)
        if kind == "vote":
            return self._cmd_vote(cmd)
        raise CommandError(f"unknown command kind {kind!r}")

    def _tick_of(self, cmd: Mapping) -> int:
        t = cmd.get("t")
        if not isinstance(t, int) or isinstance(t, bool) or t < 0:
            raise CommandError(f"command needs an integer tick t >= 0, got {t!r}")
        return t

    def _check_clock(self, t: int) -> None:
        if t < self.state.now:
            raise CommandError(f"tick t={t} is in the past (clock is at t={self.state.now})")

    def _build_attempt(self, cmd: Mapping, t: int) -> OperationAttempt:
        """Validate an attempt command fully, then consume a sequence number.

        Rejected commands must be free of side effects (no seq drift between
        a live run and its replay, which only sees accepted commands).
        """
        actor = cmd.get("actor")
        op = cmd.get("op")
        args = cmd.get("args", {})
        if not isinstance(actor, str) or not actor:
            raise CommandError("attempt needs a non-empty actor")
        if actor not in self.spec.parties:
            raise CommandError(f"unknown party {actor}")
        if not isinstance(op, str) or not op:
            raise CommandError("attempt needs a non-empty op")
        if not isinstance(args, dict) or not all(
            isinstance(k, str) and (isinstance(v, str) or (isinstance(v, int) and not isinstance(v, bool)))
            for k, v in args.items()
        ):
            raise CommandError("attempt args must map names to integers or strings")
        probe = OperationAttempt(
            contract_id=self.spec.id, seq=0, actor=actor, op=op, args=dict(args), at=t
        )
        problem = schema_error(self.spec, probe)
        if problem is not None:
            raise CommandError(problem)
        return OperationAttempt(
            contract_id=self.spec.id,
            seq=self._alloc_seq(),
            actor=actor,
            op=op,
            args=dict(args),
            at=t,
        )

    def _cmd_attempt(self, cmd: Mapping) -> dict:
        t = self._tick_of(cmd)
        self._check_clock(t)

        if self.enforcer is not None and self.state.halted_on is not None:
            # Halted: frozen clock, every attempt answers with the gap.
            attempt = self._build_attempt(cmd, t)
            action = {
                "kind": "escalate-gap",
                "at": t,
                "seq": attempt.seq,
                "gap_id": self.state.halted_on,
            }
            self.actions.append(action)
            entry = self._append(
                {
                    "kind": "attempt",
                    "t": t,
                    "attempt": attempt.to_dict(),
                    "halted": True,
                    "action": action,
                }
            )
            return {
                "seq": attempt.seq,
                "action": action,
                "state_hash": self.state.state_hash,
                "entry_index": entry.index,
            }

        attempt = self._build_attempt(cmd, t)
        sweep = self._advance(t)

        if self.enforcer is not None:
            payload: dict = {"kind": "attempt", "t": t, "attempt": attempt.to_dict()}
            if sweep is not None:
                payload["sweep"] = sweep
            if self.state.halted_on is not None and self.pending is None:
                payload["intervention"] = self._open_intervention()
            if self.state.halted_on is not None:
                action = {
                    "kind": "escalate-gap",
                    "at": t,
                    "seq": attempt.seq,
                    "gap_id": self.state.halted_on,
                }
                self.actions.append(action)
                payload["action"] = action
                entry = self._append(payload)
                return {
                    "seq": attempt.seq,
                    "action": action,
                    "state_hash": self.state.state_hash,
                    "entry_index": entry.index,
                }
            result = self.enforcer.intercept(self.state, attempt)
            self.state = result.state
            action_dict = result.action.to_dict()
            self.actions.append(action_dict)
            payload["action"] = action_dict
            if result.events:
                payload["events"] = result.events
            if self.state.halted_on is not None:
                payload["intervention"] = self._open_intervention()
            entry = self._append(payload)
            return {
                "seq": attempt.seq,
                "action": action_dict,
                "state_hash": self.state.state_hash,
                "entry_index": entry.index,
            }

        # Monitoring: execution happens first, unconditionally.
        record = self.executor.execute(attempt)
        obs = self.monitor.observe(self.state, attempt, record)
        self.state = obs.state
        verdict_dict = obs.verdict.to_dict()
        self.verdicts.append(verdict_dict)
        payload = {
            "kind": "attempt",
            "t": t,
            "attempt": attempt.to_dict(),
            "execution": {
                "outcome": record.outcome,
                "reason": record.reason,
                "notifications": dict(sorted(record.notifications.items())),
                "source": record.source,
            },
            "verdict": verdict_dict,
            "events": obs.events,
        }
        if sweep is not None:
            payload["sweep"] = sweep
        if obs.needs_human:
            payload["needs_human"] = obs.needs_human
        entry = self._append(payload)
        return {
            "seq": attempt.seq,
            "verdict": verdict_dict,
            "execution": payload["execution"],
            "state_hash": self.state.state_hash,
            "entry_index": entry.index,
        }

    def _cmd_tick(self, cmd: Mapping) -> dict:
        t = self._tick_of(cmd)
        self._check_clock(t)
        payload: dict = {"kind": "tick", "t": t}

        if self.pending is not None and self.pending.resolution is None:
            resolution = self.escalation.check_timeout(self.pending, t)
            if resolution is not None:
                payload["timeout_resolution"] = resolution.to_dict()
                payload["resolution_effects"] = self._apply_resolution(t)

        if self.enforcer is not None and self.state.halted_on is not None:
            payload["deferred"] = True
            entry = self._append(payload)
            return {
                "state_hash": self.state.state_hash,
                "deferred": True,
                "entry_index": entry.index,
            }

        sweep = self._advance(t)
        if sweep is not None:
            payload["sweep"] = sweep
        if self.enforcer is not None and self.state.halted_on is not None and self.pending is None:
            payload["intervention"] = self._open_intervention()
        entry = self._append(payload)
        return {
            "state_hash": self.state.state_hash,
            "deferred": False,
            "entry_index": entry.index,
        }

    def _cmd_deposit(self, cmd: Mapping) -> dict:
        t = self._tick_of(cmd)
        if self.enforcer is None:
            raise CommandError("escrow deposits need enforcement mode")
        party = cmd.get("party")
        amount = cmd.get("amount")
        if not isinstance(party, str) or party not in self.spec.parties:
            raise CommandError(f"unknown party {party!r}")
        if not isinstance(amount, int) or isinstance(amount, bool):
            raise CommandError("deposit amount must be an integer")
        try:
            balance = self.enforcer.deposit_escrow(party, amount)
        except EnforcerError as exc:
            raise CommandError(str(exc)) from exc
        entry = self._append(
            {
                "kind": "deposit",
                "t": t,
                "party": party,
                "amount": amount,
                "escrow_balance": balance,
            }
        )
        return {
            "escrow_balance": balance,
            "state_hash": self.state.state_hash,
            "entry_index": entry.index,
        }

    def _cmd_vote(self, cmd: Mapping) -> dict:
        t = self._tick_of(cmd)
        if self.pending is None or self.pending.resolution is not None:
            raise CommandError("no open intervention request")
        arbiter = cmd.get("arbiter")
        decision_raw = cmd.get("decision")
        if not isinstance(arbiter, str) or not arbiter:
            raise CommandError("vote needs a non-empty arbiter")
        try:
            decision = Decision(decision_raw)
        except ValueError:
            raise CommandError(
                f"vote decision must be 'approve' or 'deny', got {decision_raw!r}"
            ) from None
        rationale = cmd.get("rationale", "")
        if not isinstance(rationale, str):
            raise CommandError("vote rationale must be a string")
        vote = Vote(self.pending.id, arbiter, decision, rationale, t)
        try:
            self.escalation.cast_vote(self.pending, vote)
        except EscalationError as exc:
            raise CommandError(str(exc)) from exc
        payload: dict = {"kind": "vote", "t": t, "vote": vote.to_dict()}
        resolution = self.pending.resolution
        if resolution is not None:
            payload["resolution"] = resolution.to_dict()
            payload["resolution_effects"] = self._apply_resolution(t)
        entry = self._append(payload)
        result: dict = {
            "request_id": vote.request_id,
            "status": "resolved" if resolution is not None else "pending",
            "state_hash": self.state.state_hash,
            "entry_index": entry.index,
        }
        if resolution is not None:
            result["resolution"] = resolution.to_dict()
            result["resolution_effects"] = payload["resolution_effects"]
        return result

    # -- resolutions -------------------------------------------------------

    def _apply_resolution(self, t: int) -> dict:
        request = self.pending
        resolution = request.resolution
        gap = self.spec.gap(request.gap_id)
        continuation = self.escalation.continuation_for(resolution, request, gap)
        self.state = self.fsm.settle_gap(self.state, gap.id)
        effects: dict = {"continuation": continuation.describe(), "events": []}

        if continuation.kind == "waive":
            state, events = self.fsm.force_fulfill(
                self.state, continuation.clause_id, f"resolution:{resolution.decision}:waive"
            )
            self.state = state
            effects["events"] = [e.to_dict() for e in events]
        elif continuation.kind == "enforce":
            clause = self.spec.clause(continuation.clause_id)
            state, action, events, failure = self.enforcer.collect(
                self.state, clause, self.state.now, "fulfilled-by-resolution"
            )
            self.state = state
            effects["events"] = events
            if action is not None:
                action_dict = action.to_dict()
                self.actions.append(action_dict)
                effects["collection"] = action_dict
            if failure is not None:
                effects["collection_failure"] = failure
                if self.state.status(clause.id) == ClauseStatus.ACTIVE:
                    state, events2 = self.fsm.force_violate(
                        self.state, clause.id, "enforcement-failed"
                    )
                    self.state = state
                    effects["events"] = effects["events"] + [e.to_dict() for e in events2]

        self.pending = None
        if self.state.halted_on is not None:
            effects["next_intervention"] = self._open_intervention()
        return effects

    # -- reporting ---------------------------------------------------------

    def snapshot(self) -> dict:
        """Canonical view of the whole engine, for reports and the API."""
        return {
            "contract_id": self.spec.id,
            "mode": self.mode,
            "binding_hash": self.spec.binding_hash,
            "state": self.state.to_dict(),
            "state_hash": self.state.state_hash,
            "quiescent": self.fsm.is_quiescent(self.state),
            "bank": self.bank.to_dict(),
            "pending_request": self.pending.to_dict() if self.pending is not None else None,
        }


# --------------------------------------------------------------------------
# Replay.


@dataclass
class ReplayResult:
    """Outcome of re-running a ledger from scratch."""

    state_hash: str
    verdicts: list[dict]
    actions: list[dict]
    engine: ContractEngine


def _command_of_payload(payload: Mapping) -> Optional[dict]:
    kind = payload.get("kind")
    if kind == "attempt":
        a = payload["attempt"]
        return {
            "kind": "attempt",
            "t": payload["t"],
            "actor": a["actor"],
            "op": a["op"],
            "args": a["args"],
        }
    if kind == "tick":
        return {"kind": "tick", "t": payload["t"]}
    if kind == "deposit":
        return {
            "kind": "deposit",
            "t": payload["t"],
            "party": payload["party"],
            "amount": payload["amount"],
        }
    if kind == "vote":
        v = payload["vote"]
        return {
            "kind": "vote",
            "t": payload["t"],
            "arbiter": v["arbiter"],
            "decision": v["decision"],
            "rationale": v["rationale"],
        }
    return None


def replay(spec: ContractSpec, entries: Sequence[AuditEntry]) -> ReplayResult:
    """Re-run a recorded ledger from nothing but the contract and the chain.

    Verifies the chain first (raising :class:`pacta.ledger.ChainBroken` with
    the first bad index), checks the genesis entry binds to this contract,
    then re-applies every recorded command through a fresh engine.  A correct
    implementation reproduces the final state hash, the verdict/action
    sequence and the ledger bytes exactly.
    """
    log = AuditLog(list(entries))
    broken = log.verify()
    if broken is not None:
        raise ChainBroken(broken)
    if not log.entries:
        raise ReplayError("cannot replay an empty ledger")
    genesis = json.loads(log.entries[0].payload_text())
    if genesis.get("kind") != "genesis":
        raise ReplayError("first entry is not a genesis entry")
    if genesis.get("spec_digest") != spec.digest():
        raise ReplayError("ledger was recorded against a different contract")
    if genesis.get("binding_hash") != spec.binding_hash:
        raise ReplayError("ledger prose binding does not match the contract text")
    engine = ContractEngine.create(spec, EngineConfig.from_dict(genesis["config"]))
    for entry in log.entries[1:]:
        payload = json.loads(entry.payload_text())
        cmd = _command_of_payload(payload)
        if cmd is None:
            raise ReplayError(f"entry {entry.index} has unknown kind {payload.get('kind')!r}")
        engine.apply_command(cmd)
    return ReplayResult(engine.state.state_hash, engine.verdicts, engine.actions, engine)
