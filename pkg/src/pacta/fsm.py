"""Compiled contract state machines.

A validated contract compiles into a small deterministic machine: every
clause holds one of four statuses (inactive, active, fulfilled, violated)
and only ever moves forward (inactive -> active -> fulfilled | violated).
``classify`` judges an attempt against the current statuses, ``apply``
consumes a legal attempt, and ``tick`` advances the logical clock, violating
overdue obligations.  Transitions iterate activation triggers to a fixpoint,
then evaluate gap guards in ascending gap-id order; the first firing guard
records itself in ``halted_on``.

States are immutable values identified by a hash over their canonical form,
so equal hashes mean equal futures for equal inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

from .canonical import digest_of
from .model import (
    Clause,
    ClauseKind,
    ContractSpec,
    OperationAttempt,
    ViolationPolicy,
    validate,
)


class FsmError(Exception):
    """Base class for state-machine errors."""


class CompileError(FsmError):
    """Raised when asked to compile a contract that fails validation."""

    def __init__(self, errors) -> None:
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = list(errors)


class ClockRegression(FsmError):
    """Raised when a tick would move the logical clock backwards."""


class ContractHalted(FsmError):
    """Raised when a machine transition is attempted while a gap is pending."""


class IllegalApply(FsmError):
    """Raised when apply is called with an attempt that is not legal."""


class ClauseStatus(str, Enum):
    INACTIVE = "inactive"
    ACTIVE = "active"
    FULFILLED = "fulfilled"
    VIOLATED = "violated"


class Legality(str, Enum):
    LEGAL = "legal"
    ILLEGAL = "illegal"
    UNREGULATED = "unregulated"
    GAP_HIT = "gap-hit"


@dataclass(frozen=True)
class Classification:
    """Outcome of judging one attempt: verdict, reason, involved clauses."""

    verdict: Legality
    reason: Optional[str] = None
    gap_id: Optional[str] = None
    clause_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d: dict = {"verdict": self.verdict.value}
        if self.reason is not None:
            d["reason"] = self.reason
        if self.gap_id is not None:
            d["gap_id"] = self.gap_id
        if self.clause_ids:
            d["clause_ids"] = list(self.clause_ids)
        return d


@dataclass(frozen=True)
class ClauseEvent:
    """One clause status change, with its cause and (for violations) policy."""

    clause_id: str
    old: ClauseStatus
    new: ClauseStatus
    at: int
    cause: str
    policy: Optional[ViolationPolicy] = None
    escalation_gap: Optional[str] = None

    def to_dict(self) -> dict:
        d = {
            "clause_id": self.clause_id,
            "old": self.old.value,
            "new": self.new.value,
            "at": self.at,
            "cause": self.cause,
        }
        if self.policy is not None:
            d["policy"] = self.policy.value
        if self.escalation_gap is not None:
            d["escalation_gap"] = self.escalation_gap
        return d


@dataclass(frozen=True)
class ContractState:
    """Immutable snapshot: clause statuses, logical clock, halt marker.

    ``settled_gaps`` remembers gaps that already fired and were dealt with —
    guard conditions are monotone over statuses, so without this memory a
    resolved gap would re-halt the contract forever.  It is part of the
    hashed form for that reason: the hash must determine the future.
    """

    contract_id: str
    statuses: Mapping[str, ClauseStatus]
    now: int
    halted_on: Optional[str]
    settled_gaps: frozenset[str]
    state_hash: str

    def status(self, clause_id: str) -> ClauseStatus:
        return self.statuses[clause_id]

    def to_dict(self) -> dict:
        return {
            "contract_id": self.contract_id,
            "statuses": {cid: s.value for cid, s in sorted(self.statuses.items())},
            "now": self.now,
            "halted_on": self.halted_on,
            "settled_gaps": sorted(self.settled_gaps),
        }


def _make_state(
    contract_id: str,
    statuses: Mapping[str, ClauseStatus],
    now: int,
    halted_on: Optional[str],
    settled_gaps: Iterable[str],
) -> ContractState:
    settled = frozenset(settled_gaps)
    hashed = digest_of(
        {
            "contract_id": contract_id,
            "statuses": {cid: s.value for cid, s in sorted(statuses.items())},
            "now": now,
            "halted_on": halted_on,
            "settled_gaps": sorted(settled),
        }
    )
    return ContractState(contract_id, dict(statuses), now, halted_on, settled, hashed)


class CompiledContract:
    """A validated contract, indexed for execution.

    Immutable after construction and safe to share between runtimes; all
    mutation happens on :class:`ContractState` values passed in and out.
    """

    def __init__(self, spec: ContractSpec) -> None:
        errors = validate(spec)
        if errors:
            raise CompileError(errors)
        self.spec = spec
        self.clauses: dict[str, Clause] = {c.id: c for c in spec.clauses}
        self._mentions: dict[tuple[str, str], list[str]] = {}
        for c in spec.clauses:
            self._mentions.setdefault((c.bearer, c.op), []).append(c.id)
        for ids in self._mentions.values():
            ids.sort()
        self._gaps = list(spec.gaps)  # already sorted by id
        self._escalators: dict[str, list[str]] = {}
        for c in spec.clauses:
            if c.on_violation == ViolationPolicy.ESCALATE and c.escalation_gap:
                self._escalators.setdefault(c.escalation_gap, []).append(c.id)

    # -- construction ------------------------------------------------------

    def initial_state(self) -> ContractState:
        statuses = {
            c.id: (
                ClauseStatus.ACTIVE
                if any(t.kind == "start" for t in c.triggers)
                else ClauseStatus.INACTIVE
            )
            for c in self.spec.clauses
        }
        halted = self._first_firing_gap(statuses, frozenset())
        return _make_state(self.spec.id, statuses, 0, halted, frozenset())

    # -- judgement ---------------------------------------------------------

    def mentioned_clauses(self, actor: str, op: str) -> list[str]:
        return list(self._mentions.get((actor, op), ()))

    def classify(self, state: ContractState, attempt: OperationAttempt) -> Classification:
        """Judge one attempt against the current state.

        Total over well-formed attempts:
        - halted contract: every attempt hits the pending gap;
        - nothing mentions (actor, op): unregulated;
        - a prohibiting match in window: illegal;
        - an active permitting match in window: legal;
        - otherwise illegal, with the most specific reason available
          (already fulfilled > outside window > not active > terms mismatch).
        """
        if state.halted_on is not None:
            return Classification(Legality.GAP_HIT, gap_id=state.halted_on)
        mentioned = self._mentions.get((attempt.actor, attempt.op))
        if not mentioned:
            return Classification(Legality.UNREGULATED)

        prohibitions = [c for c in map(self.clauses.get, mentioned) if c.kind == ClauseKind.PROHIBITION]  # type: ignore[union-attr]
        permits = [c for c in map(self.clauses.get, mentioned) if c.kind != ClauseKind.PROHIBITION]  # type: ignore[union-attr]

        for c in prohibitions:
            if (
                state.status(c.id) in (ClauseStatus.ACTIVE, ClauseStatus.VIOLATED)
                and c.args_match(attempt.args)
                and c.window.contains(attempt.at)
            ):
                return Classification(
                    Legality.ILLEGAL, reason=f"prohibited by {c.id}", clause_ids=(c.id,)
                )

        legal = [
            c.id
            for c in permits
            if state.status(c.id) == ClauseStatus.ACTIVE
            and c.args_match(attempt.args)
            and c.window.contains(attempt.at)
        ]
        if legal:
            return Classification(Legality.LEGAL, clause_ids=tuple(legal))

        for c in permits:
            if c.args_match(attempt.args) and state.status(c.id) == ClauseStatus.FULFILLED:
                return Classification(
                    Legality.ILLEGAL, reason=f"already fulfilled: {c.id}", clause_ids=(c.id,)
                )
        for c in permits:
            if c.args_match(attempt.args) and not c.window.contains(attempt.at):
                return Classification(
                    Legality.ILLEGAL, reason=f"outside window of {c.id}", clause_ids=(c.id,)
                )
        for c in permits:
            if c.args_match(attempt.args) and state.status(c.id) == ClauseStatus.INACTIVE:
                return Classification(
                    Legality.ILLEGAL, reason=f"not active: {c.id}", clause_ids=(c.id,)
                )
        subject = permits[0] if permits else prohibitions[0]
        return Classification(
            Legality.ILLEGAL,
            reason=f"does not satisfy terms of {subject.id}",
            clause_ids=(subject.id,),
        )

    # -- transitions -------------------------------------------------------

    def _fire_triggers(
        self, statuses: dict[str, ClauseStatus], at: int, events: list[ClauseEvent]
    ) -> bool:
        """Activate every inactive clause whose trigger condition holds. One pass."""
        changed = False
        for cid in sorted(statuses):
            if statuses[cid] != ClauseStatus.INACTIVE:
                continue
            clause = self.clauses[cid]
            for t in clause.triggers:
                if t.clause_id is None:
                    continue
                want = ClauseStatus.FULFILLED if t.kind == "fulfilled" else ClauseStatus.VIOLATED
                if statuses.get(t.clause_id) == want:
                    statuses[cid] = ClauseStatus.ACTIVE
                    events.append(
                        ClauseEvent(
                            cid,
                            ClauseStatus.INACTIVE,
                            ClauseStatus.ACTIVE,
                            at,
                            f"trigger:{t.kind}:{t.clause_id}",
                        )
                    )
                    changed = True
                    break
        return changed

    def _first_firing_gap(
        self, statuses: Mapping[str, ClauseStatus], settled: frozenset[str]
    ) -> Optional[str]:
        plain = {cid: s.value for cid, s in statuses.items()}
        for gap in self._gaps:
            if gap.id in settled:
                continue
            if gap.guard.evaluate(plain):
                return gap.id
            if any(
                statuses.get(cid) == ClauseStatus.VIOLATED
                for cid in self._escalators.get(gap.id, ())
            ):
                return gap.id
        return None

    def _finish(
        self,
        state: ContractState,
        statuses: dict[str, ClauseStatus],
        now: int,
        events: list[ClauseEvent],
    ) -> tuple[ContractState, list[ClauseEvent]]:
        halted = self._first_firing_gap(statuses, state.settled_gaps)
        return _make_state(state.contract_id, statuses, now, halted, state.settled_gaps), events

    def apply(
        self, state: ContractState, attempt: OperationAttempt
    ) -> tuple[ContractState, list[ClauseEvent]]:
        """Consume a legal attempt: fulfil every matching active clause.

        Fulfilment and trigger activation interleave to a fixpoint, so a
        chain of fulfilled-triggers whose clauses all match the same attempt
        resolves inside one apply.
        """
        cls = self.classify(state, attempt)
        if cls.verdict != Legality.LEGAL:
            raise IllegalApply(f"attempt seq={attempt.seq} is {cls.verdict.value}, not legal")
        statuses = dict(state.statuses)
        events: list[ClauseEvent] = []
        at = attempt.at
        changed = True
        while changed:
            changed = False
            for cid in sorted(statuses):
                clause = self.clauses[cid]
                if (
                    statuses[cid] == ClauseStatus.ACTIVE
                    and clause.kind != ClauseKind.PROHIBITION
                    and clause.bearer == attempt.actor
                    and clause.op == attempt.op
                    and clause.args_match(attempt.args)
                    and clause.window.contains(at)
                ):
                    statuses[cid] = ClauseStatus.FULFILLED
                    events.append(
                        ClauseEvent(
                            cid,
                            ClauseStatus.ACTIVE,
                            ClauseStatus.FULFILLED,
                            at,
                            f"attempt:{attempt.seq}",
                        )
                    )
                    changed = True
            if self._fire_triggers(statuses, at, events):
                changed = True
        return self._finish(state, statuses, max(state.now, at), events)

    def tick(self, state: ContractState, now: int) -> tuple[ContractState, list[ClauseEvent]]:
        """Advance the clock; mark overdue obligations violated.

        A deadline is inclusive: an obligation is overdue only when
        deadline < now.  Violations fire violated-triggers, which may
        activate further already-overdue obligations; iterated to fixpoint.
        Idempotent at a fixed ``now``.
        """
        if state.halted_on is not None:
            raise ContractHalted(f"contract is halted on gap {state.halted_on}")
        if now < state.now:
            raise ClockRegression(f"clock would move from t={state.now} back to t={now}")
        statuses = dict(state.statuses)
        events: list[ClauseEvent] = []
        changed = True
        while changed:
            changed = False
            for cid in sorted(statuses):
                clause = self.clauses[cid]
                if (
                    statuses[cid] == ClauseStatus.ACTIVE
                    and clause.kind == ClauseKind.OBLIGATION
                    and clause.window.deadline is not None
                    and clause.window.deadline < now
                ):
                    statuses[cid] = ClauseStatus.VIOLATED
                    events.append(
                        ClauseEvent(
                            cid,
                            ClauseStatus.ACTIVE,
                            ClauseStatus.VIOLATED,
                            now,
                            "deadline",
                            policy=clause.on_violation,
                            escalation_gap=clause.escalation_gap,
                        )
                    )
                    changed = True
            if self._fire_triggers(statuses, now, events):
                changed = True
        return self._finish(state, statuses, now, events)

    def force_fulfill(
        self, state: ContractState, clause_id: str, cause: str
    ) -> tuple[ContractState, list[ClauseEvent]]:
        """Mark one clause fulfilled outside the normal attempt path.

        Used by enforcement collection and by human resolutions (waive) —
        the latter may override a violated status, which ordinary machine
        transitions never do.
        """
        statuses = dict(state.statuses)
        events: list[ClauseEvent] = []
        old = statuses[clause_id]
        if old != ClauseStatus.FULFILLED:
            statuses[clause_id] = ClauseStatus.FULFILLED
            events.append(ClauseEvent(clause_id, old, ClauseStatus.FULFILLED, state.now, cause))
            while self._fire_triggers(statuses, state.now, events):
                pass
        return self._finish(state, statuses, state.now, events)

    def force_violate(
        self, state: ContractState, clause_id: str, cause: str
    ) -> tuple[ContractState, list[ClauseEvent]]:
        """Mark one clause violated outside the deadline path.

        Used by the observer when an executed attempt breaches a prohibition
        and by failed enforcement collection.
        """
        statuses = dict(state.statuses)
        events: list[ClauseEvent] = []
        old = statuses[clause_id]
        if old not in (ClauseStatus.VIOLATED, ClauseStatus.FULFILLED):
            clause = self.clauses[clause_id]
            statuses[clause_id] = ClauseStatus.VIOLATED
            events.append(
                ClauseEvent(
                    clause_id,
                    old,
                    ClauseStatus.VIOLATED,
                    state.now,
                    cause,
                    policy=clause.on_violation,
                    escalation_gap=clause.escalation_gap,
                )
            )
            while self._fire_triggers(statuses, state.now, events):
                pass
        return self._finish(state, statuses, state.now, events)

    def settle_gap(self, state: ContractState, gap_id: str) -> ContractState:
        """Record a gap as dealt with and lift the halt it caused.

        Other unsettled gaps are re-evaluated immediately, so a second
        pending condition halts the contract again right away.
        """
        settled = state.settled_gaps | {gap_id}
        halted = self._first_firing_gap(state.statuses, settled)
        return _make_state(state.contract_id, state.statuses, state.now, halted, settled)

    def advance_clock_only(self, state: ContractState, now: int) -> ContractState:
        """Move the clock without processing deadlines (unregulated traffic)."""
        if now < state.now:
            raise ClockRegression(f"clock would move from t={state.now} back to t={now}")
        if now == state.now:
            return state
        return _make_state(
            state.contract_id, state.statuses, now, state.halted_on, state.settled_gaps
        )

    def is_quiescent(self, state: ContractState) -> bool:
        """True when nothing remains in flight: no active clause, no pending gap."""
        return state.halted_on is None and all(
            s in (ClauseStatus.FULFILLED, ClauseStatus.VIOLATED, ClauseStatus.INACTIVE)
            for s in state.statuses.values()
        )


def compile_spec(spec: ContractSpec) -> CompiledContract:
    """Compile a validated contract; raises CompileError listing findings otherwise."""
    return CompiledContract(spec)
