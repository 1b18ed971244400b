"""Human escalation: intervention requests, votes, resolutions.

When a declared gap fires, the contract halts and an intervention request is
opened carrying enough context to judge it (state hash, recent audit
entries, the relevant slice of the contract text).  A single named arbiter
decides unilaterally, or a committee of M decides by threshold: the request
auto-resolves Approved as soon as approvals reach the threshold, and Denied
as soon as denials exceed M - threshold (approval has become impossible).
Outcomes depend only on vote counts, never on arrival order; a configurable
timeout resolves a stale request Denied ("quorum not met") — when in doubt,
do not take the automated action.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .model import ContractSpec, GapSpec

REASON_QUORUM_NOT_MET = "quorum not met"


class EscalationError(Exception):
    """Base class for escalation errors."""


class AlreadyHalted(EscalationError):
    """A request is already open for this contract."""


class AlreadyResolved(EscalationError):
    """Votes arrived after the request resolved."""


class DuplicateVote(EscalationError):
    """An arbiter tried to vote twice on one request."""


class UnknownArbiter(EscalationError):
    """The voter is not entitled to decide this request."""


class ResolutionMismatch(EscalationError):
    """A resolution was applied against the wrong request or gap."""


class Decision(str, Enum):
    APPROVE = "approve"
    DENY = "deny"


@dataclass(frozen=True)
class Vote:
    request_id: str
    arbiter: str
    decision: Decision
    rationale: str
    at: int

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "arbiter": self.arbiter,
            "decision": self.decision.value,
            "rationale": self.rationale,
            "at": self.at,
        }


@dataclass(frozen=True)
class Resolution:
    request_id: str
    decision: str  # "approved" | "denied"
    approvals: int
    denials: int
    resolved_at: int
    reason: Optional[str] = None

    @property
    def approved(self) -> bool:
        return self.decision == "approved"

    def to_dict(self) -> dict:
        d = {
            "request_id": self.request_id,
            "decision": self.decision,
            "approvals": self.approvals,
            "denials": self.denials,
            "resolved_at": self.resolved_at,
        }
        if self.reason is not None:
            d["reason"] = self.reason
        return d


@dataclass
class InterventionRequest:
    """One open question to humans about one halted contract."""

    id: str
    contract_id: str
    gap_id: str
    mode_kind: str  # "one" | "committee"
    arbiter: str  # for unilateral gaps
    m: int
    threshold: int
    opened_at: int
    context: dict
    votes: list[Vote] = field(default_factory=list)
    resolution: Optional[Resolution] = None

    @property
    def status(self) -> str:
        return "resolved" if self.resolution is not None else "pending"

    def approvals(self) -> int:
        return sum(1 for v in self.votes if v.decision == Decision.APPROVE)

    def denials(self) -> int:
        return sum(1 for v in self.votes if v.decision == Decision.DENY)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "contract_id": self.contract_id,
            "gap_id": self.gap_id,
            "mode": (
                {"kind": "one", "arbiter": self.arbiter}
                if self.mode_kind == "one"
                else {"kind": "committee", "m": self.m, "threshold": self.threshold}
            ),
            "opened_at": self.opened_at,
            "status": self.status,
            "context": self.context,
            "votes": [v.to_dict() for v in self.votes],
            "resolution": self.resolution.to_dict() if self.resolution else None,
        }


def request_id_for(contract_id: str, gap_id: str) -> str:
    # Unique because each gap fires at most once per contract.
    return f"ivr-{contract_id}-{gap_id}"


def gap_prose_excerpt(spec: ContractSpec, gap: GapSpec) -> str:
    """The line of contract text that declared the gap, if we can find it."""
    if gap.span is not None:
        lines = spec.prose.splitlines()
        if 1 <= gap.span.line <= len(lines):
            return lines[gap.span.line - 1].strip()
    return (spec.prose.strip() or spec.id)[:200]


class EscalationService:
    """Opens, tallies and resolves intervention requests.

    ``roster`` is the runtime set of humans allowed to vote on committee
    gaps (committee membership is an operational matter, not part of the
    contract text); unilateral gaps are decided by exactly the arbiter the
    gap names.  ``vote_timeout`` (ticks, None = never) denies requests that
    outwait it.
    """

    def __init__(self, roster: tuple[str, ...] = (), vote_timeout: Optional[int] = None,
                 context_entries: int = 5) -> None:
        self.roster = tuple(roster)
        self.vote_timeout = vote_timeout
        self.context_entries = context_entries

    # -- lifecycle ---------------------------------------------------------

    def raise_intervention(
        self,
        spec: ContractSpec,
        gap: GapSpec,
        state_hash: str,
        recent_audit: list[dict],
        opened_at: int,
        open_request: Optional[InterventionRequest],
    ) -> InterventionRequest:
        """Open the request for a fired gap.

        Precondition: the gap has fired (the caller's state is halted on it)
        and no other request is open for the contract.
        """
        if open_request is not None and open_request.resolution is None:
            raise AlreadyHalted(
                f"contract {spec.id} already has open request {open_request.id}"
            )
        context = {
            "state_hash": state_hash,
            "recent_audit": recent_audit[-self.context_entries:],
            "prose_excerpt": gap_prose_excerpt(spec, gap),
        }
        return InterventionRequest(
            id=request_id_for(spec.id, gap.id),
            contract_id=spec.id,
            gap_id=gap.id,
            mode_kind=gap.mode.kind,
            arbiter=gap.mode.arbiter,
            m=gap.mode.m if gap.mode.kind == "committee" else 1,
            threshold=gap.mode.threshold if gap.mode.kind == "committee" else 1,
            opened_at=opened_at,
            context=context,
        )

    # -- voting ------------------------------------------------------------

    def cast_vote(self, request: InterventionRequest, vote: Vote) -> InterventionRequest:
        """Record one vote; auto-resolves the request when the tally decides it."""
        if vote.request_id != request.id:
            raise ResolutionMismatch(
                f"vote addresses {vote.request_id}, request is {request.id}"
            )
        if request.resolution is not None:
            raise AlreadyResolved(f"request {request.id} is already resolved")
        if request.mode_kind == "one":
            if vote.arbiter != request.arbiter:
                raise UnknownArbiter(
                    f"request {request.id} is decided by {request.arbiter} alone"
                )
        else:
            if self.roster and vote.arbiter not in self.roster:
                raise UnknownArbiter(f"{vote.arbiter} is not on the arbiter roster")
        if any(v.arbiter == vote.arbiter for v in request.votes):
            raise DuplicateVote(f"{vote.arbiter} already voted on {request.id}")
        request.votes.append(vote)
        self._auto_resolve(request, vote.at)
        return request

    def _auto_resolve(self, request: InterventionRequest, at: int) -> None:
        approvals, denials = request.approvals(), request.denials()
        if approvals >= request.threshold:
            request.resolution = Resolution(request.id, "approved", approvals, denials, at)
        elif denials > request.m - request.threshold:
            # Approval can no longer reach the threshold.
            request.resolution = Resolution(request.id, "denied", approvals, denials, at)

    def check_timeout(self, request: InterventionRequest, now: int) -> Optional[Resolution]:
        """Deny a pending request whose window has closed; None otherwise."""
        if (
            request.resolution is None
            and self.vote_timeout is not None
            and now - request.opened_at >= self.vote_timeout
        ):
            request.resolution = Resolution(
                request.id,
                "denied",
                request.approvals(),
                request.denials(),
                now,
                reason=REASON_QUORUM_NOT_MET,
            )
        return request.resolution

    # -- resolution --------------------------------------------------------

    @staticmethod
    def continuation_for(
        resolution: Resolution, request: InterventionRequest, gap: GapSpec
    ):
        """Pick the designated continuation for a resolution, after sanity checks."""
        if resolution.request_id != request.id or request.gap_id != gap.id:
            raise ResolutionMismatch(
                f"resolution {resolution.request_id} does not match request "
                f"{request.id} on gap {gap.id}"
            )
        return gap.on_approve if resolution.approved else gap.on_deny
