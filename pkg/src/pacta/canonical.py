"""Canonical bytes and digests.

Every digest in the system — prose binding hashes, contract state hashes,
audit-chain entry hashes, spec digests — is computed the same way: the value
is rendered as key-sorted compact JSON, encoded as UTF-8, and hashed with
SHA-256, rendered as lowercase hex.  Centralizing the byte form here is what
makes replay and replication comparisons byte-exact.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

#: Link value of the first audit entry: an all-zero digest.
ZERO_DIGEST = "0" * 64


def canonical_json(value: Any) -> str:
    """Render ``value`` as key-sorted, compact JSON.

    This exact string (UTF-8 encoded) is the byte form that feeds every
    digest; it is also the wire form used by reports and ledger exports.
    """
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_hex(data: bytes | str) -> str:
    """Lowercase hex SHA-256 of raw bytes (strings are UTF-8 encoded)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def digest_of(value: Any) -> str:
    """SHA-256 over the canonical JSON rendering of ``value``."""
    return sha256_hex(canonical_json(value))
