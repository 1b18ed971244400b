"""Append-only, hash-chained audit log.

Each entry links to its predecessor: ``entry_hash = SHA-256(prev_hash ||
payload)``, with the first entry linking to an all-zero digest.  Payloads
are canonical JSON strings, so the whole chain is reproducible byte for
byte.  ``verify`` walks the chain and reports the first index whose link or
recomputed hash is wrong — any single flipped bit in a payload surfaces at
exactly that entry's index.

Known limit, by design: verification proves prefix integrity, not
completeness.  Truncating the tail (dropping the last k entries) yields a
shorter chain that still verifies; detecting truncation needs an external
anchor for the head hash (e.g. the replica quorum or a published checkpoint).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Union

from .canonical import ZERO_DIGEST, canonical_json, sha256_hex

Payload = Union[str, bytes]


class LedgerError(Exception):
    """Base class for audit-log errors."""


class ChainBroken(LedgerError):
    """Raised by replay-style consumers when the chain fails verification."""

    def __init__(self, index: int) -> None:
        super().__init__(f"audit chain broken at entry {index}")
        self.index = index


@dataclass(frozen=True)
class AuditEntry:
    """One link: position, back-link, payload, and the hash sealing all three.

    ``payload`` is normally the canonical JSON string; ``bytes`` is accepted
    so that tamper checks can exercise the verifier with corruptions that are
    not valid UTF-8.
    """

    index: int
    prev_hash: str
    payload: Payload
    entry_hash: str

    def payload_bytes(self) -> bytes:
        return self.payload if isinstance(self.payload, bytes) else self.payload.encode("utf-8")

    def payload_text(self) -> str:
        return self.payload if isinstance(self.payload, str) else self.payload.decode("utf-8")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "prev_hash": self.prev_hash,
            "payload": self.payload_text(),
            "entry_hash": self.entry_hash,
        }


def entry_hash(prev_hash: str, payload: Payload) -> str:
    data = prev_hash.encode("ascii") + (
        payload if isinstance(payload, bytes) else payload.encode("utf-8")
    )
    return sha256_hex(data)


class AuditLog:
    """Grow-only list of chained entries."""

    def __init__(self, entries: Optional[Iterable[AuditEntry]] = None) -> None:
        self.entries: list[AuditEntry] = list(entries or [])

    def __len__(self) -> int:
        return len(self.entries)

    def head_hash(self) -> str:
        return self.entries[-1].entry_hash if self.entries else ZERO_DIGEST

    def append(self, payload: Union[Mapping, str]) -> AuditEntry:
        """Seal a payload onto the chain; dict payloads are canonicalized first."""
        text = payload if isinstance(payload, str) else canonical_json(payload)
        prev = self.head_hash()
        entry = AuditEntry(len(self.entries), prev, text, entry_hash(prev, text))
        self.entries.append(entry)
        return entry

    def verify(self) -> Optional[int]:
        """Walk the chain; None when intact, else the first broken index."""
        prev = ZERO_DIGEST
        for i, entry in enumerate(self.entries):
            if entry.index != i:
                return i
            if entry.prev_hash != prev:
                return i
            if entry_hash(entry.prev_hash, entry.payload) != entry.entry_hash:
                return i
            prev = entry.entry_hash
        return None

    def to_jsonl(self) -> str:
        """Line-delimited canonical JSON, one entry per line."""
        return "".join(canonical_json(e.to_dict()) + "\n" for e in self.entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "AuditLog":
        import json

        entries = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                entries.append(
                    AuditEntry(d["index"], d["prev_hash"], d["payload"], d["entry_hash"])
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise LedgerError(f"bad audit line {lineno}: {exc}") from None
        return cls(entries)

    def clone(self) -> "AuditLog":
        return AuditLog(self.entries)
