"""Simulated replica quorum over the contract engine.

N replicas each hold a full engine and apply every submitted command
deterministically; a command commits only when at least a quorum of replicas
(default floor(N/2)+1) report the same resulting state hash.  Replicas
execute tentatively — on a clone — and the cluster adopts the clones only on
commit, so a failed quorum leaves every replica exactly where it was.

Fault injection is deliberately simple and fully deterministic: a replica is
Up (normal), Crashed (skips the command and falls behind) or Divergent
(applies correctly but reports a corrupted hash — the fault sits at the
report boundary).  Divergent reports that disagree with the committed hash
are flagged in the cluster's commit log.  This is a test harness for the
engine's determinism, not a consensus protocol: no leader election, no view
changes, no recovery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional

from .canonical import sha256_hex
from .engine import ContractEngine


class ReplicationError(Exception):
    """Base class for cluster errors."""


class BadQuorum(ReplicationError):
    """Raised for quorum sizes that cannot guarantee agreement (q <= N/2)."""


class Fault(str, Enum):
    UP = "up"
    CRASHED = "crashed"
    DIVERGENT = "divergent"


@dataclass
class SubmitResult:
    """Outcome of one cluster submission."""

    committed: bool
    state_hash: Optional[str]
    reason: Optional[str]
    reported: dict[int, str]
    flagged: tuple[int, ...]
    result: Optional[dict]  # the engine's own command result, when committed

    def to_dict(self) -> dict:
        return {
            "committed": self.committed,
            "state_hash": self.state_hash,
            "reason": self.reason,
            "reported": {str(k): v for k, v in sorted(self.reported.items())},
            "flagged": list(self.flagged),
        }


def divergent_report(true_hash: str) -> str:
    """The deterministic lie a divergent replica tells about its state."""
    return sha256_hex(true_hash + ":divergent")


class ReplicaCluster:
    """N identical engines plus a quorum rule."""

    def __init__(
        self,
        build_engine: Callable[[], ContractEngine],
        n: int = 1,
        quorum: Optional[int] = None,
    ) -> None:
        if n < 1:
            raise ReplicationError(f"need at least one replica, got {n}")
        self.n = n
        self.quorum = quorum if quorum is not None else n // 2 + 1
        if not (self.quorum > n / 2) or self.quorum > n:
            raise BadQuorum(f"quorum {self.quorum} of {n} replicas cannot guarantee agreement")
        self.replicas: list[ContractEngine] = [build_engine() for _ in range(n)]
        self.faults: dict[int, Fault] = {i: Fault.UP for i in range(n)}
        self.commit_log: list[dict] = []

    def set_fault(self, replica: int, fault: Fault) -> None:
        if replica not in self.faults:
            raise ReplicationError(f"no replica {replica}")
        self.faults[replica] = fault

    def primary(self) -> ContractEngine:
        """The first non-crashed replica; serves reads of committed state."""
        for i, engine in enumerate(self.replicas):
            if self.faults[i] != Fault.CRASHED:
                return engine
        raise ReplicationError("every replica is crashed")

    def submit(self, command: Mapping) -> SubmitResult:
        """Run one command through every live replica and tally the hashes.

        Command validation errors (CommandError) propagate from the first
        live replica before anything is tentatively applied anywhere else —
        a rejected command never changes any replica.
        """
        # Surface validation problems deterministically: probe on a clone.
        probe = self.primary().clone()
        probe_result = probe.apply_command(command)

        tentative: dict[int, ContractEngine] = {}
        reported: dict[int, str] = {}
        for i, engine in enumerate(self.replicas):
            fault = self.faults[i]
            if fault == Fault.CRASHED:
                continue
            clone = engine.clone()
            clone.apply_command(command)
            tentative[i] = clone
            true_hash = clone.state.state_hash
            reported[i] = divergent_report(true_hash) if fault == Fault.DIVERGENT else true_hash

        counts: dict[str, int] = {}
        for h in reported.values():
            counts[h] = counts.get(h, 0) + 1
        winner = None
        for h, count in sorted(counts.items()):
            if count >= self.quorum and (winner is None or count > counts[winner]):
                winner = h

        if winner is None:
            result = SubmitResult(
                committed=False,
                state_hash=None,
                reason=f"quorum not reached: need {self.quorum} matching of {self.n}",
                reported=reported,
                flagged=(),
                result=None,
            )
            self.commit_log.append(result.to_dict())
            return result

        flagged = tuple(i for i, h in sorted(reported.items()) if h != winner)
        for i, clone in tentative.items():
            # Every live replica adopts the committed outcome (the divergent
            # replica's lie was only in its report; its state is correct).
            self.replicas[i] = clone
        result = SubmitResult(
            committed=True,
            state_hash=winner,
            reason=None,
            reported=reported,
            flagged=flagged,
            result=probe_result,
        )
        self.commit_log.append(result.to_dict())
        return result
