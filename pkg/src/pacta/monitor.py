"""Passive observation: judge executed operations, never steer them.

A monitor watches the already-executed operation stream and keeps the
contract state machine in step with what it sees: legal attempts fulfil
clauses, prohibited ones mark the prohibition violated, unregulated traffic
moves nothing but the clock.  It produces one verdict per observed attempt
and never touches the executor, balances or the operations themselves —
detached or attached, the executed records are identical.

Gap guards still fire under observation, but a monitor cannot halt the
world: it emits a needs-human note into the audit trail, marks the gap as
noted, and keeps observing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .canonical import canonical_json
from .executor import ExecutionRecord
from .fsm import Classification, CompiledContract, ContractState, Legality
from .model import OperationAttempt


@dataclass(frozen=True)
class Verdict:
    """One ruling over one observed attempt."""

    seq: int
    verdict: str  # legality value: "legal" | "illegal" | "unregulated" | "gap-hit"
    reason: Optional[str]
    clause_ids: tuple[str, ...]
    at: int

    @classmethod
    def from_classification(cls, attempt: OperationAttempt, c: Classification) -> "Verdict":
        return cls(attempt.seq, c.verdict.value, c.reason, c.clause_ids, attempt.at)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "verdict": self.verdict,
            "reason": self.reason,
            "clause_ids": list(self.clause_ids),
            "at": self.at,
        }


def export_verdicts(verdicts: list[dict]) -> str:
    """Line-delimited canonical JSON, one verdict per line (the timeline export)."""
    return "".join(canonical_json(v) + "\n" for v in verdicts)


@dataclass
class Observation:
    """Everything one observe produced, ready for auditing."""

    state: ContractState
    verdict: Verdict
    events: list[dict]
    needs_human: list[str]


class Monitor:
    """Stateless observer bound to one compiled contract."""

    def __init__(self, fsm: CompiledContract) -> None:
        self.fsm = fsm

    def settle_notes(self, state: ContractState, notes: list[str]) -> ContractState:
        """Observation never halts: note each fired gap and keep going."""
        while state.halted_on is not None:
            notes.append(state.halted_on)
            state = self.fsm.settle_gap(state, state.halted_on)
        return state

    def observe(
        self, state: ContractState, attempt: OperationAttempt, record: ExecutionRecord
    ) -> Observation:
        """Fold one executed attempt into the observed state.

        Self-contained: if the attempt sits in the observer's future, the
        clock first advances (processing any deadlines crossed on the way).
        The verdict is the classification of the attempt against the
        advanced-but-not-yet-applied state, so window misses are judged at
        the attempt's own tick.
        """
        events: list[dict] = []
        notes: list[str] = []
        if attempt.at > state.now:
            state, tick_events = self.fsm.tick(state, attempt.at)
            events.extend(e.to_dict() for e in tick_events)
            state = self.settle_notes(state, notes)

        classification = self.fsm.classify(state, attempt)
        verdict = Verdict.from_classification(attempt, classification)

        if classification.verdict == Legality.LEGAL:
            state, apply_events = self.fsm.apply(state, attempt)
            events.extend(e.to_dict() for e in apply_events)
            state = self.settle_notes(state, notes)
        elif (
            classification.verdict == Legality.ILLEGAL
            and classification.reason is not None
            and classification.reason.startswith("prohibited by ")
            and classification.clause_ids
        ):
            state, breach_events = self.fsm.force_violate(
                state, classification.clause_ids[0], f"breach:attempt:{attempt.seq}"
            )
            events.extend(e.to_dict() for e in breach_events)
            state = self.settle_notes(state, notes)
        # Unregulated and other illegal observations change no statuses.

        return Observation(state, verdict, events, notes)
