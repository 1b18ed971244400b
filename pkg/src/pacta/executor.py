"""Business-operation execution: accounts, escrow pools, handlers.

The executor actually runs operations — moving integer units between party
accounts, emitting notifications — and records exactly one immutable
:class:`ExecutionRecord` per attempt.  It knows nothing about contracts:
outcomes depend only on the attempt, the account/escrow balances and the
static routing configured at construction.  That obliviousness is what lets
a monitor watch traffic without ever changing it.

Money is integer units.  Transfers are atomic: on failure (insufficient
funds, missing route, no handler) no balance moves at all.  The sum of all
account and escrow balances is invariant under execution; only escrow
deposits (external inflows, handled by the enforcement layer) grow it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

from .model import OperationAttempt


class ExecutorError(Exception):
    """Base class for executor errors."""


class DuplicateHandler(ExecutorError):
    """Raised when a handler name is registered twice."""


class InsufficientFunds(ExecutorError):
    """Internal signal: a transfer would overdraw an account or pool."""


@dataclass
class Bank:
    """Integer-unit balances: one account per party plus per-party escrow pools."""

    accounts: dict[str, int] = field(default_factory=dict)
    escrow: dict[str, int] = field(default_factory=dict)

    def balance(self, party: str) -> int:
        return self.accounts.get(party, 0)

    def escrow_balance(self, party: str) -> int:
        return self.escrow.get(party, 0)

    def total(self) -> int:
        return sum(self.accounts.values()) + sum(self.escrow.values())

    def transfer(self, payer: str, payee: str, amount: int) -> None:
        if self.accounts.get(payer, 0) < amount:
            raise InsufficientFunds(
                f"insufficient funds: {payer} holds {self.accounts.get(payer, 0)}, needs {amount}"
            )
        self.accounts[payer] = self.accounts.get(payer, 0) - amount
        self.accounts[payee] = self.accounts.get(payee, 0) + amount

    def transfer_from_escrow(self, owner: str, payee: str, amount: int) -> None:
        if self.escrow.get(owner, 0) < amount:
            raise InsufficientFunds(
                f"insufficient funds: escrow of {owner} holds "
                f"{self.escrow.get(owner, 0)}, needs {amount}"
            )
        self.escrow[owner] = self.escrow.get(owner, 0) - amount
        self.accounts[payee] = self.accounts.get(payee, 0) + amount

    def to_dict(self) -> dict:
        return {
            "accounts": dict(sorted(self.accounts.items())),
            "escrow": dict(sorted(self.escrow.items())),
        }


@dataclass(frozen=True)
class ExecutionRecord:
    """What actually happened for one attempt; immutable once written."""

    attempt: OperationAttempt
    outcome: str  # "success" | "failure"
    reason: Optional[str]
    notifications: Mapping[str, str]
    at: int
    source: str  # "account" | "escrow"

    @property
    def ok(self) -> bool:
        return self.outcome == "success"

    def to_dict(self) -> dict:
        return {
            "attempt": self.attempt.to_dict(),
            "outcome": self.outcome,
            "reason": self.reason,
            "notifications": dict(sorted(self.notifications.items())),
            "at": self.at,
            "source": self.source,
        }


#: A handler gets the executor, the attempt and the funding source; it either
#: returns notifications or raises InsufficientFunds/ExecutorError.
Handler = Callable[["Executor", OperationAttempt, str], Mapping[str, str]]


def pay_handler(executor: "Executor", attempt: OperationAttempt, source: str) -> Mapping[str, str]:
    """Move args['amount'] from the actor (account or escrow pool) to their payee."""
    amount = attempt.args.get("amount")
    if not isinstance(amount, int) or amount <= 0:
        raise ExecutorError("pay needs a positive integer amount")
    payee = executor.payee_of.get(attempt.actor)
    if payee is None:
        raise ExecutorError(f"no payment route configured for {attempt.actor}")
    if source == "escrow":
        executor.bank.transfer_from_escrow(attempt.actor, payee, amount)
    else:
        executor.bank.transfer(attempt.actor, payee, amount)
    return {payee: f"payment of {amount} received from {attempt.actor}"}


def deliver_handler(executor: "Executor", attempt: OperationAttempt, source: str) -> Mapping[str, str]:
    """Notification stub: no balances move."""
    recipient = executor.payee_of.get(attempt.actor, attempt.actor)
    detail = ", ".join(f"{k}={v}" for k, v in sorted(attempt.args.items()))
    return {recipient: f"delivery from {attempt.actor}: {detail or 'no details'}"}


def refund_handler(executor: "Executor", attempt: OperationAttempt, source: str) -> Mapping[str, str]:
    """A compensating payment: moves args['amount'] like pay does."""
    amount = attempt.args.get("amount")
    if not isinstance(amount, int) or amount <= 0:
        raise ExecutorError("refund needs a positive integer amount")
    payee = executor.payee_of.get(attempt.actor)
    if payee is None:
        raise ExecutorError(f"no payment route configured for {attempt.actor}")
    if source == "escrow":
        executor.bank.transfer_from_escrow(attempt.actor, payee, amount)
    else:
        executor.bank.transfer(attempt.actor, payee, amount)
    return {payee: f"refund of {amount} received from {attempt.actor}"}


class Executor:
    """Runs attempts through registered handlers, atomically.

    A bare ``Executor(bank)`` has no handlers; :meth:`with_builtins` wires
    the stock pay/deliver/refund handlers plus a static actor->payee route
    table.  Registration is explicit so a double registration is always a
    programming error (:class:`DuplicateHandler`).
    """

    def __init__(self, bank: Bank, payee_of: Optional[Mapping[str, str]] = None) -> None:
        self.bank = bank
        self.payee_of: dict[str, str] = dict(payee_of or {})
        self.handlers: dict[str, Handler] = {}
        self.records: list[ExecutionRecord] = []

    @classmethod
    def with_builtins(cls, bank: Bank, payee_of: Optional[Mapping[str, str]] = None) -> "Executor":
        ex = cls(bank, payee_of)
        ex.register_handler("pay", pay_handler)
        ex.register_handler("deliver", deliver_handler)
        ex.register_handler("refund", refund_handler)
        return ex

    @classmethod
    def route_between(cls, parties: tuple[str, ...]) -> dict[str, str]:
        """Counterparty routing for two-party contracts; empty otherwise."""
        if len(parties) == 2:
            a, b = parties
            return {a: b, b: a}
        return {}

    def register_handler(self, op_name: str, handler: Handler) -> None:
        if op_name in self.handlers:
            raise DuplicateHandler(f"handler for {op_name} already registered")
        self.handlers[op_name] = handler

    def execute(self, attempt: OperationAttempt, source: str = "account") -> ExecutionRecord:
        """Run one attempt; always returns (and stores) exactly one record.

        Atomic: a failing handler leaves every balance untouched — handlers
        perform at most one transfer, and the transfer itself is the
        all-or-nothing step.
        """
        handler = self.handlers.get(attempt.op)
        if handler is None:
            record = ExecutionRecord(
                attempt, "failure", f"no handler for operation {attempt.op}", {}, attempt.at, source
            )
        else:
            try:
                notifications = handler(self, attempt, source)
            except ExecutorError as exc:
                record = ExecutionRecord(attempt, "failure", str(exc), {}, attempt.at, source)
            else:
                record = ExecutionRecord(
                    attempt, "success", None, dict(notifications), attempt.at, source
                )
        self.records.append(record)
        return record
