"""Scenario files: a contract plus a scripted event timeline.

A scenario is a JSON document that names a contract (inline text or a path
to a ``.pacta`` file), engine configuration, and a list of timed events
(attempts, ticks, escrow deposits, votes).  Event times are integer ticks;
when the scenario declares an ``epoch`` date, events may instead carry an
ISO ``date`` and the tick is the day offset from the epoch.

Running a scenario drives a replica cluster (size 1 by default) through the
events and produces a report whose byte form is canonical: two runs of the
same scenario yield identical bytes.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .canonical import canonical_json
from .dsl import InvalidContractText, ParseError, parse
from .engine import CommandError, ContractEngine, EngineConfig
from .model import ContractSpec
from .replication import Fault, ReplicaCluster, ReplicationError

_MODES = ("monitor", "enforce")
_EVENT_KINDS = ("attempt", "tick", "deposit", "vote")


class ScenarioError(Exception):
    """A scenario that cannot be loaded, validated, or run.

    ``index`` is the position of the offending event in the ``events`` list,
    or None when the problem is not tied to a single event.
    """

    def __init__(self, index: Optional[int], reason: str) -> None:
        self.index = index
        self.reason = reason
        where = "scenario" if index is None else f"event {index}"
        super().__init__(f"{where}: {reason}")


def _need(data: Mapping, key: str, kind: type, index: Optional[int] = None) -> Any:
    if key not in data:
        raise ScenarioError(index, f"missing field '{key}'")
    value = data[key]
    if kind is int and isinstance(value, bool):
        raise ScenarioError(index, f"field '{key}' must be {kind.__name__}")
    if not isinstance(value, kind):
        raise ScenarioError(index, f"field '{key}' must be {kind.__name__}")
    return value


def _event_tick(event: Mapping, epoch: Optional[_dt.date], index: int) -> int:
    has_t = "t" in event
    has_date = "date" in event
    if has_t and has_date:
        raise ScenarioError(index, "give 't' or 'date', not both")
    if has_t:
        t = event["t"]
        if isinstance(t, bool) or not isinstance(t, int):
            raise ScenarioError(index, "field 't' must be int")
        if t < 0:
            raise ScenarioError(index, f"tick must be >= 0, got {t}")
        return t
    if has_date:
        if epoch is None:
            raise ScenarioError(index, "event has a 'date' but the scenario has no 'epoch'")
        raw = event["date"]
        if not isinstance(raw, str):
            raise ScenarioError(index, "field 'date' must be an ISO date string")
        try:
            day = _dt.date.fromisoformat(raw)
        except ValueError:
            raise ScenarioError(index, f"bad date {raw!r}") from None
        t = (day - epoch).days
        if t < 0:
            raise ScenarioError(index, f"date {raw} is before the epoch")
        return t
    raise ScenarioError(index, "event needs a 't' (or a 'date' with a scenario epoch)")


@dataclass
class Scenario:
    """A validated scenario, ready to run."""

    name: str
    contract_text: str
    spec: ContractSpec
    config: EngineConfig
    replicas: int
    quorum: Optional[int]
    faults: dict[int, Fault]
    commands: list[dict]  # engine commands, in timeline order
    epoch: Optional[_dt.date] = None

    @staticmethod
    def from_dict(data: Mapping, base_dir: Optional[Path] = None) -> "Scenario":
        if not isinstance(data, Mapping):
            raise ScenarioError(None, "scenario must be a JSON object")
        name = data.get("name", "scenario")
        if not isinstance(name, str) or not name:
            raise ScenarioError(None, "field 'name' must be a non-empty string")

        contract = _need(data, "contract", object)
        if isinstance(contract, str):
            text = contract
        elif isinstance(contract, Mapping) and isinstance(contract.get("path"), str):
            root = base_dir if base_dir is not None else Path.cwd()
            target = root / contract["path"]
            try:
                text = target.read_text(encoding="utf-8")
            except OSError as exc:
                raise ScenarioError(None, f"cannot read contract file: {exc}") from None
        else:
            raise ScenarioError(None, "field 'contract' must be text or {\"path\": ...}")
        try:
            spec = parse(text)
        except ParseError as exc:
            raise ScenarioError(None, f"invalid contract: {exc}") from None
        except InvalidContractText as exc:
            first = exc.errors[0]
            raise ScenarioError(None, f"invalid contract: {first}") from None

        mode = data.get("mode", "enforce")
        if mode not in _MODES:
            raise ScenarioError(None, f"mode must be one of {list(_MODES)}, got {mode!r}")

        accounts = data.get("accounts", {})
        if not isinstance(accounts, Mapping):
            raise ScenarioError(None, "field 'accounts' must be an object")
        clean_accounts: dict[str, int] = {}
        for party, balance in accounts.items():
            if not isinstance(party, str):
                raise ScenarioError(None, "account names must be strings")
            if isinstance(balance, bool) or not isinstance(balance, int) or balance < 0:
                raise ScenarioError(None, f"account balance for {party!r} must be an int >= 0")
            clean_accounts[party] = balance

        roster = data.get("roster", [])
        if not isinstance(roster, list) or not all(isinstance(a, str) and a for a in roster):
            raise ScenarioError(None, "field 'roster' must be a list of arbiter names")

        reminder_window = data.get("reminder_window", 10)
        if isinstance(reminder_window, bool) or not isinstance(reminder_window, int) or reminder_window < 0:
            raise ScenarioError(None, "field 'reminder_window' must be an int >= 0")

        vote_timeout = data.get("vote_timeout")
        if vote_timeout is not None and (
            isinstance(vote_timeout, bool) or not isinstance(vote_timeout, int) or vote_timeout < 1
        ):
            raise ScenarioError(None, "field 'vote_timeout' must be an int >= 1 or null")

        replicas = data.get("replicas", 1)
        if isinstance(replicas, bool) or not isinstance(replicas, int) or replicas < 1:
            raise ScenarioError(None, "field 'replicas' must be an int >= 1")
        quorum = data.get("quorum")
        if quorum is not None:
            if isinstance(quorum, bool) or not isinstance(quorum, int):
                raise ScenarioError(None, "field 'quorum' must be an int")
            if not (quorum > replicas / 2) or quorum > replicas:
                raise ScenarioError(
                    None, f"quorum {quorum} of {replicas} replicas cannot guarantee agreement"
                )

        epoch: Optional[_dt.date] = None
        if "epoch" in data:
            raw = data["epoch"]
            if not isinstance(raw, str):
                raise ScenarioError(None, "field 'epoch' must be an ISO date string")
            try:
                epoch = _dt.date.fromisoformat(raw)
            except ValueError:
                raise ScenarioError(None, f"bad epoch date {raw!r}") from None

        faults: dict[int, Fault] = {}
        raw_faults = data.get("faults", {})
        if not isinstance(raw_faults, Mapping):
            raise ScenarioError(None, "field 'faults' must map replica index to fault")
        for key, value in raw_faults.items():
            try:
                idx = int(key)
            except (TypeError, ValueError):
                raise ScenarioError(None, f"bad replica index {key!r}") from None
            if not 0 <= idx < replicas:
                raise ScenarioError(None, f"replica index {idx} out of range for {replicas} replicas")
            try:
                faults[idx] = Fault(value)
            except ValueError:
                raise ScenarioError(None, f"unknown fault {value!r}") from None

        events = _need(data, "events", list)
        commands: list[dict] = []
        last_t = 0
        for index, event in enumerate(events):
            if not isinstance(event, Mapping):
                raise ScenarioError(index, "event must be a JSON object")
            kind = event.get("kind")
            if kind not in _EVENT_KINDS:
                raise ScenarioError(index, f"unknown event kind {kind!r}")
            t = _event_tick(event, epoch, index)
            if t < last_t:
                raise ScenarioError(index, f"time goes backwards: t={t} after t={last_t}")
            last_t = t
            if kind == "attempt":
                actor = _need(event, "actor", str, index)
                op = _need(event, "op", str, index)
                args = event.get("args", {})
                if not isinstance(args, Mapping):
                    raise ScenarioError(index, "field 'args' must be an object")
                commands.append(
                    {"kind": "attempt", "t": t, "actor": actor, "op": op, "args": dict(args)}
                )
            elif kind == "tick":
                commands.append({"kind": "tick", "t": t})
            elif kind == "deposit":
                if mode != "enforce":
                    raise ScenarioError(index, "escrow deposits need enforcement mode")
                party = _need(event, "party", str, index)
                amount = _need(event, "amount", int, index)
                commands.append({"kind": "deposit", "t": t, "party": party, "amount": amount})
            else:  # vote
                arbiter = _need(event, "arbiter", str, index)
                decision = _need(event, "decision", str, index)
                rationale = event.get("rationale", "")
                if not isinstance(rationale, str):
                    raise ScenarioError(index, "field 'rationale' must be a string")
                commands.append(
                    {
                        "kind": "vote",
                        "t": t,
                        "arbiter": arbiter,
                        "decision": decision,
                        "rationale": rationale,
                    }
                )

        config = EngineConfig(
            mode=mode,
            accounts=clean_accounts,
            roster=tuple(roster),
            reminder_window=reminder_window,
            vote_timeout=vote_timeout,
        )
        return Scenario(
            name=name,
            contract_text=text,
            spec=spec,
            config=config,
            replicas=replicas,
            quorum=quorum,
            faults=faults,
            commands=commands,
            epoch=epoch,
        )

    @staticmethod
    def load(path: str | Path) -> "Scenario":
        path = Path(path)
        try:
            raw = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ScenarioError(None, f"cannot read scenario: {exc}") from None
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ScenarioError(None, f"scenario is not valid JSON: {exc}") from None
        return Scenario.from_dict(data, base_dir=path.parent)


@dataclass
class ScenarioReport:
    """The canonical outcome of one scenario run."""

    name: str
    contract_id: str
    mode: str
    submissions: int
    committed: int
    final: dict
    bank: dict
    verdicts: list[dict] = field(default_factory=list)
    actions: list[dict] = field(default_factory=list)
    audit: dict = field(default_factory=dict)
    commit_log: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "contract_id": self.contract_id,
            "mode": self.mode,
            "submissions": self.submissions,
            "committed": self.committed,
            "final": self.final,
            "bank": self.bank,
            "verdicts": self.verdicts,
            "actions": self.actions,
            "audit": self.audit,
            "commit_log": self.commit_log,
        }

    def to_bytes(self) -> bytes:
        return (canonical_json(self.to_dict()) + "\n").encode("utf-8")


def run_scenario(scenario: Scenario) -> ScenarioReport:
    """Execute the scenario timeline and build its report.

    Engine-level command rejections surface as ScenarioError carrying the
    index of the offending event; nothing from a rejected event is applied.
    """
    try:
        cluster = ReplicaCluster(
            lambda: ContractEngine.create(scenario.spec, scenario.config),
            n=scenario.replicas,
            quorum=scenario.quorum,
        )
    except ReplicationError as exc:
        raise ScenarioError(None, str(exc)) from None
    for idx, fault in scenario.faults.items():
        cluster.set_fault(idx, fault)

    committed = 0
    for index, command in enumerate(scenario.commands):
        try:
            outcome = cluster.submit(command)
        except CommandError as exc:
            raise ScenarioError(index, str(exc)) from None
        if outcome.committed:
            committed += 1

    engine = cluster.primary()
    snapshot = engine.snapshot()
    broken = engine.ledger.verify()
    report = ScenarioReport(
        name=scenario.name,
        contract_id=scenario.spec.id,
        mode=engine.mode,
        submissions=len(scenario.commands),
        committed=committed,
        final={
            "t": engine.state.now,
            "state_hash": engine.state.state_hash,
            "halted_on": engine.state.halted_on,
            "statuses": dict(snapshot["state"]["statuses"]),
            "settled_gaps": list(snapshot["state"]["settled_gaps"]),
            "quiescent": snapshot["quiescent"],
        },
        bank=snapshot["bank"],
        verdicts=[v if isinstance(v, dict) else v.to_dict() for v in engine.verdicts],
        actions=[a if isinstance(a, dict) else a.to_dict() for a in engine.actions],
        audit={
            "entries": len(engine.ledger.entries),
            "head_hash": engine.ledger.head_hash(),
            "intact": broken is None,
        },
        commit_log=list(cluster.commit_log),
    )
    return report
