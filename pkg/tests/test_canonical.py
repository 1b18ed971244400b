"""Canonical JSON and digest behavior: byte-stable, order-insensitive."""

import hashlib

from pacta.canonical import ZERO_DIGEST, canonical_json, digest_of, sha256_hex


def test_zero_digest_is_64_zeros():
    assert ZERO_DIGEST == "0" * 64


def test_canonical_json_sorts_keys_and_strips_spaces():
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


def test_canonical_json_ignores_insertion_order():
    one = canonical_json({"x": 1, "y": {"b": 2, "a": 3}})
    two = canonical_json({"y": {"a": 3, "b": 2}, "x": 1})
    assert one == two


def test_canonical_json_escapes_non_ascii():
    out = canonical_json({"name": "café"})
    assert out == '{"name":"caf\\u00e9"}'
    assert out.encode("ascii")  # never raises


def test_sha256_hex_known_value():
    # sha256("") is a published constant.
    assert (
        sha256_hex(b"")
        == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert (
        sha256_hex("abc")
        == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )


def test_digest_of_matches_manual_composition():
    value = {"k": [1, 2, {"z": None}], "s": "x"}
    manual = hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()
    assert digest_of(value) == manual


def test_digest_is_lowercase_hex():
    d = digest_of(["a", 1])
    assert len(d) == 64
    assert d == d.lower()
    int(d, 16)  # parses as hex
