"""Contract text format (.pacta): parser and canonical serializer.

The text form is the bound, human-readable face of a contract; parsing keeps
the exact input as the contract's prose (its SHA-256 becomes the binding
hash) alongside the machine form.  The grammar is small and line-friendly::

    contract PayOnce {
      party Alice
      party Bob

      operation pay(amount: int)

      obligation O1: Bob must pay(amount == 100) by t=100 on-violation enforce

      gap G1: when violated(O1) decide-by committee(3, 2) approve-> waive O1 deny-> enforce O1
    }

Clauses read ``right ID: BEARER may OP(...)``, ``obligation ID: BEARER must
OP(...)`` or ``prohibition ID: BEARER must-not OP(...)``, each optionally
followed by ``from t=A``, ``by t=B``, ``when TRIGGER, ...`` and
``on-violation record|enforce|escalate GAP``.  ``#`` starts a comment.

Parsing is a single-lookahead recursive descent; errors carry the exact
source span of the offending token.  ``serialize`` renders the canonical
text: sections ordered, parties and operations sorted, clauses and gaps by
id, defaults omitted — so serialize after parse is a fixpoint.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Union

from .model import (
    ArgConstraint,
    Clause,
    ClauseKind,
    ContractSpec,
    Continuation,
    GapMode,
    GapSpec,
    Guard,
    GuardAnd,
    GuardIs,
    GuardOr,
    GUARD_STATUSES,
    OperationSig,
    Param,
    ParamKind,
    SourceSpan,
    SpecError,
    Trigger,
    ViolationPolicy,
    Window,
    validate,
)

__all__ = [
    "DslError",
    "ParseError",
    "InvalidContractText",
    "SourceSpan",
    "parse",
    "serialize",
]


class DslError(Exception):
    """Base class for contract-text errors."""


class ParseError(DslError):
    """A syntax problem, located by the span of the offending token."""

    def __init__(self, span: SourceSpan, message: str, found: str = "") -> None:
        super().__init__(f"{span.label()}: {message}")
        self.span = span
        self.message = message
        self.found = found


class InvalidContractText(DslError):
    """Text parsed, but the contract it describes is structurally broken."""

    def __init__(self, errors: list[SpecError]) -> None:
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors


@dataclass(frozen=True)
class _Token:
    kind: str  # "ident" | "int" | "string" | punctuation text | "eof"
    text: str
    line: int
    column: int

    def span(self) -> SourceSpan:
        return SourceSpan(self.line, self.column, max(1, len(self.text)))


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\r]+)
    | (?P<comment>\#[^\n]*)
    | (?P<nl>\n)
    | (?P<string>"(?:[^"\\\n]|\\.)*")
    | (?P<int>\d+)
    | (?P<ident>[A-Za-z_](?:[A-Za-z0-9_]|-(?=[A-Za-z0-9_]))*)
    | (?P<punct>->|==|\.\.|[{}():,=])
    """,
    re.VERBOSE,
)

_KINDS = {"right": ClauseKind.RIGHT, "obligation": ClauseKind.OBLIGATION, "prohibition": ClauseKind.PROHIBITION}
_VERB_FOR_KIND = {ClauseKind.RIGHT: "may", ClauseKind.OBLIGATION: "must", ClauseKind.PROHIBITION: "must-not"}
_PARAM_KINDS = {"int": ParamKind.INT, "text": ParamKind.TEXT, "time": ParamKind.TIME}


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(
                SourceSpan(line, col, 1), f"unexpected character {text[pos]!r}", text[pos]
            )
        kind = m.lastgroup or ""
        lexeme = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(lexeme)
        else:
            token_kind = lexeme if kind == "punct" else kind
            tokens.append(_Token(token_kind, lexeme, line, col))
            col += len(lexeme)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = _lex(text)
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def fail(self, expected: str, tok: Optional[_Token] = None) -> ParseError:
        tok = tok or self.peek()
        found = tok.text if tok.kind != "eof" else "end of input"
        return ParseError(tok.span(), f"expected {expected}, found {found!r}", tok.text)

    def expect(self, kind: str, expected: Optional[str] = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise self.fail(expected or f"'{kind}'")
        return self.next()

    def keyword(self, word: str) -> _Token:
        tok = self.peek()
        if tok.kind != "ident" or tok.text != word:
            raise self.fail(f"'{word}'")
        return self.next()

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text == word

    def ident(self, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != "ident":
            raise self.fail(what)
        return self.next()

    def integer(self, what: str = "an integer") -> int:
        tok = self.peek()
        if tok.kind != "int":
            raise self.fail(what)
        self.next()
        return int(tok.text)

    # -- grammar -----------------------------------------------------------

    def contract(self) -> ContractSpec:
        self.keyword("contract")
        name = self.ident("a contract name")
        self.expect("{")
        parties: list[str] = []
        operations: list[OperationSig] = []
        clauses: list[Clause] = []
        gaps: list[GapSpec] = []
        while not self.peek().kind == "}":
            tok = self.peek()
            if tok.kind == "eof":
                raise self.fail("'}'")
            if self.at_keyword("party"):
                self.next()
                parties.append(self.ident("a party name").text)
            elif self.at_keyword("operation"):
                self.next()
                operations.append(self.operation())
            elif tok.kind == "ident" and tok.text in _KINDS:
                clauses.append(self.clause())
            elif self.at_keyword("gap"):
                gaps.append(self.gap())
            else:
                raise self.fail("'party', 'operation', 'right', 'obligation', 'prohibition' or 'gap'")
        self.expect("}")
        tok = self.peek()
        if tok.kind != "eof":
            raise self.fail("end of input", tok)
        return ContractSpec(
            id=name.text,
            parties=tuple(parties),
            operations=tuple(operations),
            clauses=tuple(clauses),
            gaps=tuple(gaps),
            prose=self.text,
        )

    def operation(self) -> OperationSig:
        name = self.ident("an operation name")
        self.expect("(")
        params: list[Param] = []
        if self.peek().kind != ")":
            while True:
                pname = self.ident("a parameter name")
                self.expect(":")
                ktok = self.ident("'int', 'text' or 'time'")
                if ktok.text not in _PARAM_KINDS:
                    raise ParseError(
                        ktok.span(), f"expected 'int', 'text' or 'time', found {ktok.text!r}", ktok.text
                    )
                params.append(Param(pname.text, _PARAM_KINDS[ktok.text]))
                if self.peek().kind != ",":
                    break
                self.next()
        self.expect(")")
        return OperationSig(name.text, tuple(params))

    def clause(self) -> Clause:
        kind_tok = self.next()
        kind = _KINDS[kind_tok.text]
        cid = self.ident("a clause id")
        self.expect(":")
        bearer = self.ident("a party name")
        verb = self.ident("'may', 'must' or 'must-not'")
        if verb.text != _VERB_FOR_KIND[kind]:
            raise ParseError(
                verb.span(),
                f"a {kind.value} clause uses '{_VERB_FOR_KIND[kind]}', found {verb.text!r}",
                verb.text,
            )
        op = self.ident("an operation name")
        self.expect("(")
        constraints: list[ArgConstraint] = []
        if self.peek().kind != ")":
            while True:
                constraints.append(self.constraint())
                if self.peek().kind != ",":
                    break
                self.next()
        self.expect(")")

        not_before: Optional[int] = None
        deadline: Optional[int] = None
        if self.at_keyword("from"):
            self.next()
            not_before = self.tick_literal()
        if self.at_keyword("by"):
            self.next()
            deadline = self.tick_literal()

        triggers: tuple[Trigger, ...] = (Trigger.start(),)
        if self.at_keyword("when"):
            self.next()
            collected: list[Trigger] = [self.trigger()]
            while self.peek().kind == ",":
                self.next()
                collected.append(self.trigger())
            triggers = tuple(collected)

        policy = ViolationPolicy.RECORD
        gap_ref: Optional[str] = None
        if self.at_keyword("on-violation"):
            self.next()
            ptok = self.ident("'record', 'enforce' or 'escalate'")
            if ptok.text == "record":
                policy = ViolationPolicy.RECORD
            elif ptok.text == "enforce":
                policy = ViolationPolicy.ENFORCE
            elif ptok.text == "escalate":
                policy = ViolationPolicy.ESCALATE
                gap_ref = self.ident("a gap id").text
            else:
                raise ParseError(
                    ptok.span(),
                    f"expected 'record', 'enforce' or 'escalate', found {ptok.text!r}",
                    ptok.text,
                )
        return Clause(
            id=cid.text,
            kind=kind,
            bearer=bearer.text,
            op=op.text,
            constraints=tuple(constraints),
            window=Window(not_before, deadline),
            triggers=triggers,
            on_violation=policy,
            escalation_gap=gap_ref,
            span=cid.span(),
        )

    def tick_literal(self) -> int:
        self.keyword("t")
        self.expect("=")
        return self.integer("a tick number")

    def constraint(self) -> ArgConstraint:
        pname = self.ident("a parameter name")
        tok = self.peek()
        if tok.kind == "==":
            self.next()
            vtok = self.peek()
            if vtok.kind == "int":
                self.next()
                return ArgConstraint(pname.text, "eq", value=int(vtok.text))
            if vtok.kind == "string":
                self.next()
                return ArgConstraint(pname.text, "eq", value=json.loads(vtok.text))
            raise self.fail("an integer or a quoted string")
        if tok.kind == "ident" and tok.text == "in":
            self.next()
            lo = self.integer("a range start")
            self.expect("..")
            hi = self.integer("a range end")
            return ArgConstraint(pname.text, "range", lo=lo, hi=hi)
        raise self.fail("'==' or 'in'")

    def trigger(self) -> Trigger:
        tok = self.ident("'start', 'fulfilled(...)' or 'violated(...)'")
        if tok.text == "start":
            return Trigger.start()
        if tok.text in ("fulfilled", "violated"):
            self.expect("(")
            ref = self.ident("a clause id")
            self.expect(")")
            return Trigger(tok.text, ref.text)
        raise ParseError(
            tok.span(),
            f"expected 'start', 'fulfilled(...)' or 'violated(...)', found {tok.text!r}",
            tok.text,
        )

    def gap(self) -> GapSpec:
        self.keyword("gap")
        gid = self.ident("a gap id")
        self.expect(":")
        self.keyword("when")
        guard = self.guard_or()
        self.keyword("decide-by")
        mode = self.gap_mode()
        approve_tok = self.ident("'approve'")
        if approve_tok.text != "approve":
            raise ParseError(
                approve_tok.span(), f"expected 'approve', found {approve_tok.text!r}", approve_tok.text
            )
        self.expect("->", "'->'")
        on_approve = self.continuation()
        deny_tok = self.ident("'deny'")
        if deny_tok.text != "deny":
            raise ParseError(deny_tok.span(), f"expected 'deny', found {deny_tok.text!r}", deny_tok.text)
        self.expect("->", "'->'")
        on_deny = self.continuation()
        return GapSpec(
            id=gid.text,
            guard=guard,
            mode=mode,
            on_approve=on_approve,
            on_deny=on_deny,
            span=gid.span(),
        )

    def guard_or(self) -> Guard:
        left = self.guard_and()
        while self.at_keyword("or"):
            self.next()
            left = GuardOr(left, self.guard_and())
        return left

    def guard_and(self) -> Guard:
        left = self.guard_atom()
        while self.at_keyword("and"):
            self.next()
            left = GuardAnd(left, self.guard_atom())
        return left

    def guard_atom(self) -> Guard:
        tok = self.peek()
        if tok.kind == "(":
            self.next()
            inner = self.guard_or()
            self.expect(")")
            return inner
        if tok.kind == "ident" and tok.text in GUARD_STATUSES:
            self.next()
            self.expect("(")
            ref = self.ident("a clause id")
            self.expect(")")
            return GuardIs(ref.text, tok.text)
        raise self.fail("'inactive(...)', 'active(...)', 'fulfilled(...)', 'violated(...)' or '('")

    def gap_mode(self) -> GapMode:
        tok = self.ident("'one(...)' or 'committee(m, threshold)'")
        if tok.text == "one":
            self.expect("(")
            arbiter = self.ident("an arbiter name")
            self.expect(")")
            return GapMode.unilateral(arbiter.text)
        if tok.text == "committee":
            self.expect("(")
            m = self.integer("committee size")
            self.expect(",")
            threshold = self.integer("approval threshold")
            self.expect(")")
            return GapMode.committee(m, threshold)
        raise ParseError(
            tok.span(), f"expected 'one' or 'committee', found {tok.text!r}", tok.text
        )

    def continuation(self) -> Continuation:
        tok = self.ident("'waive', 'enforce' or 'record'")
        if tok.text == "record":
            return Continuation("record")
        if tok.text in ("waive", "enforce"):
            ref = self.ident("a clause id")
            return Continuation(tok.text, ref.text)
        raise ParseError(
            tok.span(), f"expected 'waive', 'enforce' or 'record', found {tok.text!r}", tok.text
        )


def parse(text: str) -> ContractSpec:
    """Parse contract text into its machine form.

    The full input becomes the contract's prose, so the binding hash ties the
    machine form to the exact bytes parsed.  Raises :class:`ParseError` on
    the first syntax problem (with the offending token's span) and
    :class:`InvalidContractText` when the text parses but fails validation.
    """
    spec = _Parser(text).contract()
    errors = validate(spec)
    if errors:
        raise InvalidContractText(errors)
    return spec


# --------------------------------------------------------------------------
# Canonical rendering.


def _render_value(value: Union[int, str, None]) -> str:
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=True)
    return str(value)


def _render_constraint(c: ArgConstraint) -> str:
    if c.kind == "eq":
        return f"{c.param} == {_render_value(c.value)}"
    return f"{c.param} in {c.lo}..{c.hi}"


def _render_trigger(t: Trigger) -> str:
    return t.kind if t.clause_id is None else f"{t.kind}({t.clause_id})"


def _render_clause(c: Clause) -> str:
    head = f"{c.kind.value} {c.id}: {c.bearer} {_VERB_FOR_KIND[c.kind]} {c.op}"
    head += "(" + ", ".join(_render_constraint(con) for con in c.constraints) + ")"
    if c.window.not_before is not None:
        head += f" from t={c.window.not_before}"
    if c.window.deadline is not None:
        head += f" by t={c.window.deadline}"
    triggers = tuple(sorted(c.triggers, key=Trigger.sort_key))
    if triggers != (Trigger.start(),):
        head += " when " + ", ".join(_render_trigger(t) for t in triggers)
    if c.on_violation == ViolationPolicy.ENFORCE:
        head += " on-violation enforce"
    elif c.on_violation == ViolationPolicy.ESCALATE:
        head += f" on-violation escalate {c.escalation_gap}"
    return head


def _render_guard(g: Guard) -> str:
    """Render a guard; nested boolean nodes are parenthesized so the exact
    tree shape survives a round trip."""
    if isinstance(g, GuardIs):
        return f"{g.status}({g.clause_id})"

    def sub(child: Guard) -> str:
        rendered = _render_guard(child)
        return rendered if isinstance(child, GuardIs) else f"({rendered})"

    word = "and" if isinstance(g, GuardAnd) else "or"
    return f"{sub(g.left)} {word} {sub(g.right)}"


def _render_gap(g: GapSpec) -> str:
    if g.mode.kind == "one":
        mode = f"one({g.mode.arbiter})"
    else:
        mode = f"committee({g.mode.m}, {g.mode.threshold})"
    return (
        f"gap {g.id}: when {_render_guard(g.guard)} decide-by {mode}"
        f" approve-> {g.on_approve.describe()} deny-> {g.on_deny.describe()}"
    )


def serialize(spec: ContractSpec) -> str:
    """Render the canonical text form.

    Deterministic: parties and operations sorted by name, clauses and gaps by
    id, defaults omitted.  Re-parsing the output yields the same machine form
    (and re-serializing that parse reproduces the output byte for byte).
    """
    sections: list[list[str]] = []
    if spec.parties:
        sections.append([f"party {p}" for p in spec.parties])
    if spec.operations:
        sections.append(
            [
                "operation {}({})".format(
                    op.name, ", ".join(f"{p.name}: {p.kind.value}" for p in op.params)
                )
                for op in spec.operations
            ]
        )
    if spec.clauses:
        sections.append([_render_clause(c) for c in spec.clauses])
    if spec.gaps:
        sections.append([_render_gap(g) for g in spec.gaps])

    lines = [f"contract {spec.id} {{"]
    for i, section in enumerate(sections):
        if i:
            lines.append("")
        lines.extend(f"  {line}" for line in section)
    lines.append("}")
    return "\n".join(lines) + "\n"
