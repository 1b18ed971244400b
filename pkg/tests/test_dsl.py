"""Contract text: lexing, parsing, located errors, canonical round trips."""

import random
from pathlib import Path

import pytest

from pacta.dsl import InvalidContractText, ParseError, parse, serialize
from pacta.model import ClauseKind, GuardAnd, GuardIs, GuardOr, ViolationPolicy

from oracles import random_contract

GOLDEN = sorted(Path(__file__).parent.joinpath("golden").glob("*.pacta"))


MINI = """
contract mini-1 {
  party a
  party b
  operation pay(amount: int)
  right R1: a may pay(amount == 5)
}
"""


def test_corpus_is_big_enough():
    assert len(GOLDEN) >= 10


@pytest.mark.parametrize("path", GOLDEN, ids=lambda p: p.name)
def test_corpus_parses(path):
    spec = parse(path.read_text())
    assert spec.id


@pytest.mark.parametrize("path", GOLDEN, ids=lambda p: p.name)
def test_corpus_round_trip_reaches_fixpoint(path):
    spec = parse(path.read_text())
    once = serialize(spec)
    again = serialize(parse(once))
    assert once == again
    assert parse(once).structural_dict() == spec.structural_dict()


def test_parse_minimal():
    spec = parse(MINI)
    assert spec.id == "mini-1"
    assert spec.parties == ("a", "b")
    assert [c.id for c in spec.clauses] == ["R1"]
    assert spec.clauses[0].kind == ClauseKind.RIGHT


def test_prose_is_the_source_text():
    spec = parse(MINI)
    assert spec.prose == MINI


def test_kind_verb_agreement_enforced():
    bad = MINI.replace("a may pay", "a must pay")
    with pytest.raises(ParseError) as err:
        parse(bad)
    assert "'may'" in str(err.value)


def test_string_escapes_round_trip():
    text = """
contract strings-1 {
  party a
  party b
  operation tag(label: text)
  right R1: a may tag(label == "he said \\"hi\\"\\n")
}
"""
    spec = parse(text)
    value = spec.clauses[0].constraints[0].value
    assert value == 'he said "hi"\n'
    assert parse(serialize(spec)).clauses[0].constraints[0].value == value


def test_comments_and_blank_lines_ignored():
    text = """
# header
contract comments-1 {  # after brace
  party a
  # middle
  party b

  operation pay(amount: int)
  right R1: a may pay()  # trailing
}
# footer
"""
    spec = parse(text)
    assert spec.parties == ("a", "b")


def test_hyphenated_identifiers():
    text = """
contract hy-1 {
  party north-co
  party south-co
  operation pay(amount: int)
  right my-right-1: north-co may pay(amount == 2)
}
"""
    spec = parse(text)
    assert spec.clauses[0].id == "my-right-1"
    assert spec.clauses[0].bearer == "north-co"


def test_arithmetic_range_and_windows():
    text = """
contract w-1 {
  party a
  party b
  operation pay(amount: int)
  obligation O1: a must pay(amount in 5..9) from t=2 by t=11
}
"""
    c = parse(text).clauses[0]
    assert (c.constraints[0].lo, c.constraints[0].hi) == (5, 9)
    assert (c.window.not_before, c.window.deadline) == (2, 11)


def test_guard_tree_shapes_survive():
    text = """
contract g-1 {
  party a
  party b
  operation pay(amount: int)
  obligation A: a must pay(amount == 1) by t=3
  obligation B: b must pay(amount == 2) by t=4
  gap G1: when (violated(A) or violated(B)) and fulfilled(A) decide-by one(x) approve-> record deny-> record
  gap G2: when violated(A) or (violated(B) and fulfilled(A)) decide-by one(x) approve-> record deny-> record
}
"""
    spec = parse(text)
    g1, g2 = spec.gaps
    assert isinstance(g1.guard, GuardAnd)
    assert isinstance(g1.guard.left, GuardOr)
    assert isinstance(g2.guard, GuardOr)
    assert isinstance(g2.guard.right, GuardAnd)
    back = parse(serialize(spec))
    assert back.gaps[0].guard == g1.guard
    assert back.gaps[1].guard == g2.guard


def test_escalation_policy_parses():
    text = """
contract e-1 {
  party a
  party b
  operation pay(amount: int)
  obligation O1: a must pay(amount == 1) by t=3 on-violation escalate G1
  gap G1: when violated(O1) decide-by committee(4, 3) approve-> waive O1 deny-> enforce O1
}
"""
    spec = parse(text)
    assert spec.clauses[0].on_violation == ViolationPolicy.ESCALATE
    assert spec.clauses[0].escalation_gap == "G1"
    gap = spec.gaps[0]
    assert (gap.mode.kind, gap.mode.m, gap.mode.threshold) == ("committee", 4, 3)
    assert (gap.on_approve.kind, gap.on_approve.clause_id) == ("waive", "O1")
    assert (gap.on_deny.kind, gap.on_deny.clause_id) == ("enforce", "O1")


# -- errors ---------------------------------------------------------------


def expect_parse_error(text, fragment, line=None):
    with pytest.raises(ParseError) as err:
        parse(text)
    assert fragment in str(err.value)
    if line is not None:
        assert err.value.span.line == line
    return err.value


def test_error_missing_brace():
    expect_parse_error("contract x {", "'}'")


def test_error_bad_top_level_keyword():
    expect_parse_error(
        "contract x {\n  fish y\n}", "'party', 'operation', 'right', 'obligation'", line=2
    )


def test_error_bad_param_kind():
    expect_parse_error(
        "contract x {\n  party a\n  operation f(v: float)\n}", "'int', 'text' or 'time'", line=3
    )


def test_error_position_is_exact():
    err = expect_parse_error("contract x {\n  party a\n  operation f(v int)\n}", "':'")
    assert (err.span.line, err.span.column) == (3, 17)


def test_error_unterminated_string():
    text = 'contract x {\n  party a\n  operation f(s: text)\n  right R1: a may f(s == "oops)\n}'
    with pytest.raises(ParseError):
        parse(text)


def test_error_junk_after_contract():
    expect_parse_error("contract x {\n}\nextra", "end of input")


def test_error_tick_literal_shape():
    expect_parse_error(
        "contract x {\n  party a\n  operation f()\n  right R1: a may f() by 5\n}", "'t'"
    )


def test_structural_errors_are_collected_not_thrown_one_by_one():
    text = """
contract bad-1 {
  party a
  party a
  operation pay(amount: int)
  right R1: zz may pay(amount == 1)
  right R1: a may pay()
  right R2: a may teleport()
}
"""
    with pytest.raises(InvalidContractText) as err:
        parse(text)
    found = {e.code for e in err.value.errors}
    assert {"DuplicateParty", "UnknownParty", "DuplicateClause", "UnknownOperation"} <= found


def test_structural_error_spans_point_into_source():
    text = """
contract bad-2 {
  party a
  party b
  operation pay(amount: int)
  right R1: nobody may pay(amount == 1)
}
"""
    with pytest.raises(InvalidContractText) as err:
        parse(text)
    spans = [e.span for e in err.value.errors if e.code == "UnknownParty"]
    assert spans and spans[0] is not None
    assert spans[0].line == 6


# -- property: generated specs survive text round trips -------------------


def test_generated_specs_round_trip_structurally():
    rng = random.Random(7)
    for index in range(150):
        spec = random_contract(rng, index)
        text = serialize(spec)
        back = parse(text)
        assert back.structural_dict() == spec.structural_dict(), text
        assert serialize(back) == text
