"""Contract vocabulary: parties, operations, clauses, gaps.

A contract grants rights, imposes obligations and declares prohibitions over
named business operations.  Each clause is borne by one party, matches one
operation (optionally constraining its arguments), carries an activation
window in logical ticks, activates on declared trigger events, and names the
policy to follow when it is violated.  Gaps mark the spots where automation
must stop and ask a human (one arbiter or a committee) how to continue.

Everything here is plain immutable data plus ``validate``, which reports
structural problems without mutating anything.  Compiled execution lives in
:mod:`pacta.fsm`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Sequence, Union

from .canonical import canonical_json, digest_of, sha256_hex


class ModelError(Exception):
    """Base class for contract-model errors."""


class ParamKind(str, Enum):
    """Scalar kinds an operation parameter may take."""

    INT = "int"
    TEXT = "text"
    TIME = "time"


class ClauseKind(str, Enum):
    RIGHT = "right"
    OBLIGATION = "obligation"
    PROHIBITION = "prohibition"


class ViolationPolicy(str, Enum):
    """What the runtime does when a clause is violated."""

    RECORD = "record"
    ENFORCE = "enforce"
    ESCALATE = "escalate"


@dataclass(frozen=True)
class SourceSpan:
    """Position of a construct in contract text: 1-based line/column plus length."""

    line: int
    column: int
    length: int = 1

    def label(self) -> str:
        return f"line {self.line}, column {self.column}"


@dataclass(frozen=True)
class Param:
    name: str
    kind: ParamKind

    def to_list(self) -> list:
        return [self.name, self.kind.value]


@dataclass(frozen=True)
class OperationSig:
    """A business operation: a name plus ordered scalar parameters."""

    name: str
    params: tuple[Param, ...] = ()

    def param(self, name: str) -> Optional[Param]:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def to_dict(self) -> dict:
        return {"name": self.name, "params": [p.to_list() for p in self.params]}


@dataclass(frozen=True)
class OperationAttempt:
    """One party trying to run one operation at one tick.

    ``seq`` is a per-contract monotone counter assigned by the runtime;
    ``args`` maps parameter names to scalar values; ``at`` is the logical
    tick of the attempt.
    """

    contract_id: str
    seq: int
    actor: str
    op: str
    args: Mapping[str, Union[int, str]]
    at: int

    def to_dict(self) -> dict:
        return {
            "contract_id": self.contract_id,
            "seq": self.seq,
            "actor": self.actor,
            "op": self.op,
            "args": dict(sorted(self.args.items())),
            "at": self.at,
        }


@dataclass(frozen=True)
class ArgConstraint:
    """Constraint on one operation argument: equality, or a closed integer range."""

    param: str
    kind: str  # "eq" | "range"
    value: Union[int, str, None] = None  # for "eq"
    lo: Optional[int] = None  # for "range" (inclusive)
    hi: Optional[int] = None  # for "range" (inclusive)

    def matches(self, args: Mapping[str, Union[int, str]]) -> bool:
        if self.param not in args:
            return False
        got = args[self.param]
        if self.kind == "eq":
            return got == self.value
        return isinstance(got, int) and self.lo <= got <= self.hi  # type: ignore[operator]

    def to_list(self) -> list:
        if self.kind == "eq":
            return [self.param, "eq", self.value]
        return [self.param, "range", self.lo, self.hi]


@dataclass(frozen=True)
class Window:
    """Activation window in ticks; both bounds optional, deadline inclusive."""

    not_before: Optional[int] = None
    deadline: Optional[int] = None

    def contains(self, at: int) -> bool:
        if self.not_before is not None and at < self.not_before:
            return False
        if self.deadline is not None and at > self.deadline:
            return False
        return True

    def to_list(self) -> list:
        return [self.not_before, self.deadline]


@dataclass(frozen=True)
class Trigger:
    """Activation trigger: contract start, or another clause reaching a status."""

    kind: str  # "start" | "fulfilled" | "violated"
    clause_id: Optional[str] = None

    @classmethod
    def start(cls) -> "Trigger":
        return cls("start")

    @classmethod
    def fulfilled(cls, clause_id: str) -> "Trigger":
        return cls("fulfilled", clause_id)

    @classmethod
    def violated(cls, clause_id: str) -> "Trigger":
        return cls("violated", clause_id)

    def to_list(self) -> list:
        return [self.kind] if self.clause_id is None else [self.kind, self.clause_id]

    def sort_key(self) -> tuple:
        return (self.kind, self.clause_id or "")


@dataclass(frozen=True)
class Clause:
    """One deontic statement: bearer may/must/must-not run one operation."""

    id: str
    kind: ClauseKind
    bearer: str
    op: str
    constraints: tuple[ArgConstraint, ...] = ()
    window: Window = Window()
    triggers: tuple[Trigger, ...] = (Trigger.start(),)
    on_violation: ViolationPolicy = ViolationPolicy.RECORD
    escalation_gap: Optional[str] = None
    span: Optional[SourceSpan] = None

    def args_match(self, args: Mapping[str, Union[int, str]]) -> bool:
        return all(c.matches(args) for c in self.constraints)

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "kind": self.kind.value,
            "bearer": self.bearer,
            "op": self.op,
            "constraints": [c.to_list() for c in self.constraints],
            "window": self.window.to_list(),
            "triggers": [t.to_list() for t in sorted(self.triggers, key=Trigger.sort_key)],
            "on_violation": self.on_violation.value,
        }
        if self.escalation_gap is not None:
            d["escalation_gap"] = self.escalation_gap
        return d


# --------------------------------------------------------------------------
# Gap guards: boolean conditions over clause statuses.


@dataclass(frozen=True)
class GuardIs:
    """Atom: clause ``clause_id`` currently has status ``status``."""

    clause_id: str
    status: str  # "inactive" | "active" | "fulfilled" | "violated"

    def evaluate(self, statuses: Mapping[str, str]) -> bool:
        return statuses.get(self.clause_id) == self.status

    def clause_refs(self) -> list[str]:
        return [self.clause_id]

    def to_list(self) -> list:
        return ["is", self.clause_id, self.status]


@dataclass(frozen=True)
class GuardAnd:
    left: "Guard"
    right: "Guard"

    def evaluate(self, statuses: Mapping[str, str]) -> bool:
        return self.left.evaluate(statuses) and self.right.evaluate(statuses)

    def clause_refs(self) -> list[str]:
        return self.left.clause_refs() + self.right.clause_refs()

    def to_list(self) -> list:
        return ["and", self.left.to_list(), self.right.to_list()]


@dataclass(frozen=True)
class GuardOr:
    left: "Guard"
    right: "Guard"

    def evaluate(self, statuses: Mapping[str, str]) -> bool:
        return self.left.evaluate(statuses) or self.right.evaluate(statuses)

    def clause_refs(self) -> list[str]:
        return self.left.clause_refs() + self.right.clause_refs()

    def to_list(self) -> list:
        return ["or", self.left.to_list(), self.right.to_list()]


Guard = Union[GuardIs, GuardAnd, GuardOr]

GUARD_STATUSES = ("inactive", "active", "fulfilled", "violated")


@dataclass(frozen=True)
class GapMode:
    """Who decides a gap: a single named arbiter, or a committee of M with a threshold."""

    kind: str  # "one" | "committee"
    arbiter: str = ""
    m: int = 1
    threshold: int = 1

    @classmethod
    def unilateral(cls, arbiter: str) -> "GapMode":
        return cls("one", arbiter=arbiter, m=1, threshold=1)

    @classmethod
    def committee(cls, m: int, threshold: int) -> "GapMode":
        return cls("committee", m=m, threshold=threshold)

    def to_dict(self) -> dict:
        if self.kind == "one":
            return {"kind": "one", "arbiter": self.arbiter}
        return {"kind": "committee", "m": self.m, "threshold": self.threshold}


@dataclass(frozen=True)
class Continuation:
    """What to do after a gap decision: waive a clause, force it, or just record."""

    kind: str  # "waive" | "enforce" | "record"
    clause_id: str = ""

    def to_list(self) -> list:
        return [self.kind] if self.kind == "record" else [self.kind, self.clause_id]

    def describe(self) -> str:
        return self.kind if self.kind == "record" else f"{self.kind} {self.clause_id}"


@dataclass(frozen=True)
class GapSpec:
    """A declared hole in the contract's automation.

    When ``guard`` becomes true (or a clause whose violation policy names this
    gap is violated), execution halts and a human decision is requested under
    ``mode``; the approved/denied continuations say how to resume.
    """

    id: str
    guard: Guard
    mode: GapMode
    on_approve: Continuation
    on_deny: Continuation
    span: Optional[SourceSpan] = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "guard": self.guard.to_list(),
            "mode": self.mode.to_dict(),
            "on_approve": self.on_approve.to_list(),
            "on_deny": self.on_deny.to_list(),
        }


@dataclass(frozen=True)
class ContractSpec:
    """A full contract: parties, operations, clauses, gaps, and the bound prose.

    ``prose`` is the human-readable text the machine form was derived from;
    ``binding_hash`` is its SHA-256 and ties the two together.  Construction
    normalizes order (parties sorted, operations by name, clauses and gaps by
    id) so that structurally equal contracts serialize identically.
    """

    id: str
    parties: tuple[str, ...]
    operations: tuple[OperationSig, ...]
    clauses: tuple[Clause, ...]
    gaps: tuple[GapSpec, ...] = ()
    prose: str = ""
    binding_hash: str = field(default="")

    def __post_init__(self) -> None:
        object.__setattr__(self, "parties", tuple(sorted(self.parties)))
        object.__setattr__(
            self, "operations", tuple(sorted(self.operations, key=lambda o: o.name))
        )
        object.__setattr__(self, "clauses", tuple(sorted(self.clauses, key=lambda c: c.id)))
        object.__setattr__(self, "gaps", tuple(sorted(self.gaps, key=lambda g: g.id)))
        object.__setattr__(self, "binding_hash", sha256_hex(self.prose))

    def operation(self, name: str) -> Optional[OperationSig]:
        for op in self.operations:
            if op.name == name:
                return op
        return None

    def clause(self, clause_id: str) -> Optional[Clause]:
        for c in self.clauses:
            if c.id == clause_id:
                return c
        return None

    def gap(self, gap_id: str) -> Optional[GapSpec]:
        for g in self.gaps:
            if g.id == gap_id:
                return g
        return None

    def structural_dict(self) -> dict:
        """Machine form only — excludes prose and its binding hash.

        Two parses are considered the same contract exactly when these match;
        the prose byte form (and hence binding_hash) legitimately differs
        between an original text and its canonical re-rendering.
        """
        return {
            "id": self.id,
            "parties": list(self.parties),
            "operations": [o.to_dict() for o in self.operations],
            "clauses": [c.to_dict() for c in self.clauses],
            "gaps": [g.to_dict() for g in self.gaps],
        }

    def to_dict(self) -> dict:
        d = self.structural_dict()
        d["prose"] = self.prose
        d["binding_hash"] = self.binding_hash
        return d

    def digest(self) -> str:
        """Digest of the canonical machine form (prose excluded)."""
        return digest_of(self.structural_dict())


@dataclass(frozen=True)
class SpecError:
    """One structural problem found by validate."""

    code: str
    message: str
    subject: str = ""
    span: Optional[SourceSpan] = None

    def __str__(self) -> str:
        where = f" ({self.span.label()})" if self.span else ""
        return f"{self.code}: {self.message}{where}"


def schema_error(spec: ContractSpec, attempt: OperationAttempt) -> Optional[str]:
    """Check an attempt against the contract's operation signature.

    Returns a reason string when the attempt is malformed for a *declared*
    operation (wrong parameter names or scalar kinds).  Attempts naming
    undeclared operations are not schema errors — no clause can mention them,
    so classification handles them as unregulated.
    """
    sig = spec.operation(attempt.op)
    if sig is None:
        return None
    declared = {p.name: p.kind for p in sig.params}
    for name, value in attempt.args.items():
        if name not in declared:
            return f"operation {attempt.op} has no parameter {name}"
        kind = declared[name]
        if kind == ParamKind.TEXT and not isinstance(value, str):
            return f"parameter {name} expects text"
        if kind in (ParamKind.INT, ParamKind.TIME) and (
            not isinstance(value, int) or isinstance(value, bool)
        ):
            return f"parameter {name} expects an integer"
    missing = [n for n in declared if n not in attempt.args]
    if missing:
        return f"missing argument {missing[0]} for {attempt.op}"
    return None


def _trigger_cycle(clauses: Sequence[Clause]) -> Optional[list[str]]:
    """Find a cycle in the activation-trigger graph, if any.

    Edge S -> C when clause C activates on Fulfilled(S) or Violated(S).
    Returns one cycle as a list of clause ids, or None.
    """
    known = {c.id for c in clauses}
    edges: dict[str, list[str]] = {c.id: [] for c in clauses}
    for c in clauses:
        for t in c.triggers:
            if t.clause_id is not None and t.clause_id in known:
                edges[t.clause_id].append(c.id)

    WHITE, GREY, BLACK = 0, 1, 2
    color = {cid: WHITE for cid in edges}
    stack: list[str] = []

    def visit(node: str) -> Optional[list[str]]:
        color[node] = GREY
        stack.append(node)
        for nxt in sorted(edges[node]):
            if color[nxt] == GREY:
                return stack[stack.index(nxt):] + [nxt]
            if color[nxt] == WHITE:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for cid in sorted(edges):
        if color[cid] == WHITE:
            found = visit(cid)
            if found:
                return found
    return None


def validate(spec: ContractSpec) -> list[SpecError]:
    """Report every structural problem in a contract; empty means well-formed.

    Pure: never mutates the spec, deterministic output order (declaration
    order of the offending constructs, one error per finding).
    """
    errors: list[SpecError] = []

    def err(code: str, message: str, subject: str = "", span: Optional[SourceSpan] = None) -> None:
        errors.append(SpecError(code, message, subject, span))

    if not spec.id:
        err("EmptyContractId", "contract id must be non-empty")

    seen_parties: set[str] = set()
    for p in spec.parties:
        if not p:
            err("EmptyPartyName", "party names must be non-empty")
        elif p in seen_parties:
            err("DuplicateParty", f"party {p} declared twice", p)
        seen_parties.add(p)

    seen_ops: set[str] = set()
    for op in spec.operations:
        if op.name in seen_ops:
            err("DuplicateOperation", f"operation {op.name} declared twice", op.name)
        seen_ops.add(op.name)
        seen_params: set[str] = set()
        for param in op.params:
            if param.name in seen_params:
                err(
                    "DuplicateParam",
                    f"operation {op.name} declares parameter {param.name} twice",
                    op.name,
                )
            seen_params.add(param.name)

    clause_ids = [c.id for c in spec.clauses]
    known_clauses = set(clause_ids)
    seen_clauses: set[str] = set()
    gap_ids = {g.id for g in spec.gaps}

    for c in spec.clauses:
        if c.id in seen_clauses:
            err("DuplicateClause", f"clause id {c.id} declared twice", c.id, c.span)
            continue
        seen_clauses.add(c.id)
        if c.bearer not in seen_parties:
            err("UnknownParty", f"clause {c.id} names undeclared party {c.bearer}", c.id, c.span)
        sig = spec.operation(c.op)
        if sig is None:
            err(
                "UnknownOperation",
                f"clause {c.id} names undeclared operation {c.op}",
                c.id,
                c.span,
            )
        else:
            for con in c.constraints:
                param = sig.param(con.param)
                if param is None:
                    err(
                        "UnknownParam",
                        f"clause {c.id} constrains unknown parameter {con.param} of {c.op}",
                        c.id,
                        c.span,
                    )
                    continue
                if con.kind == "range":
                    if param.kind == ParamKind.TEXT:
                        err(
                            "RangeOnText",
                            f"clause {c.id}: range constraint on text parameter {con.param}",
                            c.id,
                            c.span,
                        )
                    elif con.lo is None or con.hi is None or con.lo > con.hi:
                        err(
                            "EmptyRange",
                            f"clause {c.id}: empty range on {con.param}",
                            c.id,
                            c.span,
                        )
                elif con.kind == "eq":
                    if param.kind == ParamKind.TEXT and not isinstance(con.value, str):
                        err(
                            "ConstraintKind",
                            f"clause {c.id}: {con.param} expects a text value",
                            c.id,
                            c.span,
                        )
                    if param.kind in (ParamKind.INT, ParamKind.TIME) and not isinstance(
                        con.value, int
                    ):
                        err(
                            "ConstraintKind",
                            f"clause {c.id}: {con.param} expects an integer value",
                            c.id,
                            c.span,
                        )
        w = c.window
        if w.not_before is not None and w.deadline is not None and w.not_before > w.deadline:
            err(
                "WindowOrder",
                f"clause {c.id}: window opens at t={w.not_before} after deadline t={w.deadline}",
                c.id,
                c.span,
            )
        for t in c.triggers:
            if t.clause_id is not None:
                if t.clause_id == c.id:
                    err("SelfTrigger", f"clause {c.id} triggers on itself", c.id, c.span)
                elif t.clause_id not in known_clauses:
                    err(
                        "UnknownClause",
                        f"clause {c.id} triggers on undeclared clause {t.clause_id}",
                        c.id,
                        c.span,
                    )
        if c.kind == ClauseKind.OBLIGATION and c.on_violation == ViolationPolicy.ENFORCE:
            if c.window.deadline is None:
                err(
                    "EnforceWithoutDeadline",
                    f"obligation {c.id} has enforcement policy but no deadline",
                    c.id,
                    c.span,
                )
        if c.on_violation == ViolationPolicy.ESCALATE:
            if not c.escalation_gap:
                err(
                    "EscalateWithoutGap",
                    f"clause {c.id} escalates but names no gap",
                    c.id,
                    c.span,
                )
            elif c.escalation_gap not in gap_ids:
                err(
                    "UnknownGap",
                    f"clause {c.id} escalates to undeclared gap {c.escalation_gap}",
                    c.id,
                    c.span,
                )

    cycle = _trigger_cycle(spec.clauses)
    if cycle:
        err("CyclicTrigger", "activation triggers form a cycle: " + " -> ".join(cycle))

    seen_gaps: set[str] = set()
    for g in spec.gaps:
        if g.id in seen_gaps:
            err("DuplicateGap", f"gap id {g.id} declared twice", g.id, g.span)
            continue
        seen_gaps.add(g.id)
        for ref in g.guard.clause_refs():
            if ref not in known_clauses:
                err(
                    "UnknownClause",
                    f"gap {g.id} guard references undeclared clause {ref}",
                    g.id,
                    g.span,
                )
        if g.mode.kind == "committee":
            if g.mode.m < 1 or not (1 <= g.mode.threshold <= g.mode.m):
                err(
                    "BadCommittee",
                    f"gap {g.id}: committee needs m >= 1 and 1 <= threshold <= m",
                    g.id,
                    g.span,
                )
        elif not g.mode.arbiter:
            err("NoArbiter", f"gap {g.id} names no arbiter", g.id, g.span)
        for cont in (g.on_approve, g.on_deny):
            if cont.kind != "record" and cont.clause_id not in known_clauses:
                err(
                    "UnknownClause",
                    f"gap {g.id} continuation names undeclared clause {cont.clause_id}",
                    g.id,
                    g.span,
                )

    return errors
