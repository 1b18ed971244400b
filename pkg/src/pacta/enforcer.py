"""Active enforcement: gate attempts, remind, collect from escrow.

In enforcement mode the engine sits in the execution path.  Every attempt is
intercepted and classified first: legal ones are forwarded to the executor
and folded into the state, everything else is denied — including unregulated
operations (deny by default: what the contract does not provide for does not
happen).  Prohibited attempts are refused outright, so a prohibition under
enforcement is never violated; it stays active and keeps refusing.

Around deadlines the enforcer acts on its own: while an obligation's
deadline is near it issues reminders to the bearer, and at the first
processed tick past the deadline it collects the obligated operation
directly from the bearer's escrow pool ("fulfilled by enforcement") — money
set aside in advance is the only lever it has.  If escrow cannot cover the
obligation (or the obligated operation cannot be synthesized from the
clause's equality terms), the violation is recorded and, when a gap watches
that clause, escalated to humans.  An obligation is collected at most once,
ever.

Driver contract: call :meth:`Enforcer.on_tick` to advance the clock (the
engine does this before every command), then :meth:`Enforcer.intercept` for
attempts at the current tick.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .executor import ExecutionRecord, Executor
from .fsm import ClauseStatus, CompiledContract, ContractState, Legality
from .model import Clause, ClauseKind, OperationAttempt, ViolationPolicy


class EnforcerError(Exception):
    """Base class for enforcement errors."""


class NonPositiveAmount(EnforcerError):
    """Escrow deposits must move a positive number of units."""


class OutOfStep(EnforcerError):
    """intercept was called before the clock was advanced to the attempt."""


@dataclass(frozen=True)
class EnforcementAction:
    """One externally visible enforcement decision."""

    kind: str  # "allow" | "deny" | "remind" | "auto-execute" | "escalate-gap"
    at: int
    seq: Optional[int] = None
    clause_id: Optional[str] = None
    party: Optional[str] = None
    gap_id: Optional[str] = None
    reason: Optional[str] = None
    execution: Optional[dict] = None

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "at": self.at}
        for key in ("seq", "clause_id", "party", "gap_id", "reason", "execution"):
            value = getattr(self, key.replace("-", "_"))
            if value is not None:
                d[key] = value
        return d


@dataclass
class SweepResult:
    """Everything one clock advance produced."""

    state: ContractState
    actions: list[EnforcementAction] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    collection_failures: list[dict] = field(default_factory=list)


@dataclass
class InterceptResult:
    state: ContractState
    action: EnforcementAction
    events: list[dict] = field(default_factory=list)


class Enforcer:
    """Enforcement logic bound to one compiled contract and one executor."""

    def __init__(
        self,
        fsm: CompiledContract,
        executor: Executor,
        alloc_seq: Callable[[], int],
        reminder_window: int = 10,
    ) -> None:
        self.fsm = fsm
        self.executor = executor
        self.alloc_seq = alloc_seq
        self.reminder_window = reminder_window

    # -- escrow ------------------------------------------------------------

    def deposit_escrow(self, party: str, amount: int) -> int:
        """Credit a party's escrow pool (external inflow); returns the new balance."""
        if not isinstance(amount, int) or isinstance(amount, bool) or amount <= 0:
            raise NonPositiveAmount(f"escrow deposits must be positive, got {amount!r}")
        bank = self.executor.bank
        bank.escrow[party] = bank.escrow.get(party, 0) + amount
        return bank.escrow[party]

    # -- synthesis ---------------------------------------------------------

    def synthesized_args(self, clause: Clause) -> Optional[dict]:
        """Arguments for the obligated operation, if its terms pin every parameter."""
        sig = self.fsm.spec.operation(clause.op)
        if sig is None:
            return None
        pinned = {c.param: c.value for c in clause.constraints if c.kind == "eq"}
        if any(p.name not in pinned for p in sig.params):
            return None
        return {p.name: pinned[p.name] for p in sig.params}

    def collect(self, state: ContractState, clause: Clause, now: int, cause: str):
        """Try to run the obligated operation from escrow and fulfil the clause.

        Returns (state, action-or-None, events, failure-or-None).
        """
        args = self.synthesized_args(clause)
        if args is None:
            return state, None, [], {
                "clause_id": clause.id,
                "reason": "operation terms do not pin every parameter",
            }
        attempt = OperationAttempt(
            contract_id=state.contract_id,
            seq=self.alloc_seq(),
            actor=clause.bearer,
            op=clause.op,
            args=args,
            at=now,
        )
        record = self.executor.execute(attempt, source="escrow")
        if not record.ok:
            return state, None, [], {"clause_id": clause.id, "reason": record.reason}
        state, events = self.fsm.force_fulfill(state, clause.id, cause)
        action = EnforcementAction(
            kind="auto-execute",
            at=now,
            seq=attempt.seq,
            clause_id=clause.id,
            party=clause.bearer,
            execution=record.to_dict(),
        )
        return state, action, [e.to_dict() for e in events], None

    # -- clock -------------------------------------------------------------

    def on_tick(self, state: ContractState, now: int) -> SweepResult:
        """Advance to ``now``: collect overdue enforceable obligations from
        escrow, violate what cannot be collected, remind near deadlines.

        Collection happens before violation marking, so a funded obligation
        is fulfilled (never violated) at the first tick past its deadline;
        once fulfilled it can never be collected again.
        """
        if state.halted_on is not None:
            return SweepResult(
                state,
                actions=[
                    EnforcementAction(kind="escalate-gap", at=state.now, gap_id=state.halted_on)
                ],
            )
        result = SweepResult(self.fsm.advance_clock_only(state, now))

        for cid in sorted(self.fsm.clauses):
            if result.state.halted_on is not None:
                break
            clause = self.fsm.clauses[cid]
            if (
                clause.kind == ClauseKind.OBLIGATION
                and clause.on_violation == ViolationPolicy.ENFORCE
                and result.state.status(cid) == ClauseStatus.ACTIVE
                and clause.window.deadline is not None
                and clause.window.deadline < now
            ):
                state2, action, events, failure = self.collect(
                    result.state, clause, now, "fulfilled-by-enforcement"
                )
                result.state = state2
                if action is not None:
                    result.actions.append(action)
                result.events.extend(events)
                if failure is not None:
                    result.collection_failures.append(failure)

        if result.state.halted_on is None:
            state2, tick_events = self.fsm.tick(result.state, now)
            result.state = state2
            result.events.extend(e.to_dict() for e in tick_events)

        if result.state.halted_on is not None:
            result.actions.append(
                EnforcementAction(kind="escalate-gap", at=now, gap_id=result.state.halted_on)
            )
            return result

        for cid in sorted(self.fsm.clauses):
            clause = self.fsm.clauses[cid]
            if (
                clause.kind == ClauseKind.OBLIGATION
                and result.state.status(cid) == ClauseStatus.ACTIVE
                and clause.window.deadline is not None
                and now <= clause.window.deadline <= now + self.reminder_window
            ):
                result.actions.append(
                    EnforcementAction(
                        kind="remind",
                        at=now,
                        clause_id=cid,
                        party=clause.bearer,
                        reason=f"deadline t={clause.window.deadline} approaching",
                    )
                )
        return result

    # -- attempts ----------------------------------------------------------

    def intercept(self, state: ContractState, attempt: OperationAttempt) -> InterceptResult:
        """Gate one attempt at the current tick.

        Legal: forward to the executor, then fold into the state (only if
        execution succeeded — a bounced operation fulfils nothing).
        Everything else is denied and never reaches the executor; a halted
        contract answers every attempt with the pending gap.
        """
        if state.halted_on is not None:
            action = EnforcementAction(
                kind="escalate-gap", at=attempt.at, seq=attempt.seq, gap_id=state.halted_on
            )
            return InterceptResult(state, action)
        if attempt.at != state.now:
            raise OutOfStep(
                f"attempt at t={attempt.at} but clock is t={state.now}; advance via on_tick first"
            )

        classification = self.fsm.classify(state, attempt)
        if classification.verdict != Legality.LEGAL:
            if classification.verdict == Legality.UNREGULATED:
                reason = "unregulated operation (deny by default)"
            else:
                reason = classification.reason or "illegal"
            action = EnforcementAction(
                kind="deny", at=attempt.at, seq=attempt.seq, reason=reason
            )
            return InterceptResult(state, action)

        record = self.executor.execute(attempt, source="account")
        events: list[dict] = []
        if record.ok:
            state, apply_events = self.fsm.apply(state, attempt)
            events = [e.to_dict() for e in apply_events]
        action = EnforcementAction(
            kind="allow",
            at=attempt.at,
            seq=attempt.seq,
            clause_id=classification.clause_ids[0] if classification.clause_ids else None,
            execution=record.to_dict(),
        )
        return InterceptResult(state, action, events)
