"""HTTP facade over hosted contract engines.

Each hosted contract gets an opaque instance id ("c1", "c2", ...) and a
lock; commands are applied strictly one at a time per instance.  All
engine-level rejections map to 400 with a plain ``{"error": ...}`` body,
unknown ids map to 404.  The escalation endpoints span every hosted
contract so an arbiter dashboard can poll one place for open requests.
"""

from __future__ import annotations

import itertools
import threading
from typing import Optional

from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse

from .dsl import InvalidContractText, ParseError, parse
from .engine import CommandError, ContractEngine, EngineConfig


class _Instance:
    def __init__(self, instance_id: str, engine: ContractEngine) -> None:
        self.id = instance_id
        self.engine = engine
        self.lock = threading.Lock()


def _bad_request(message: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": message, **extra})


def _not_found(message: str) -> JSONResponse:
    return JSONResponse(status_code=404, content={"error": message})


def create_app() -> FastAPI:
    app = FastAPI(title="pacta", docs_url=None, redoc_url=None)
    registry: dict[str, _Instance] = {}
    registry_lock = threading.Lock()
    ids = itertools.count(1)

    def _instance(instance_id: str) -> Optional[_Instance]:
        with registry_lock:
            return registry.get(instance_id)

    def _apply(instance_id: str, command: dict):
        inst = _instance(instance_id)
        if inst is None:
            return _not_found(f"no contract instance {instance_id}")
        with inst.lock:
            try:
                result = inst.engine.apply_command(command)
            except CommandError as exc:
                return _bad_request(str(exc))
            return {"result": result, "state": inst.engine.snapshot()}

    @app.post("/contracts", status_code=201)
    def create_contract(payload: dict = Body(...)):
        text = payload.get("text")
        if not isinstance(text, str) or not text.strip():
            return _bad_request("field 'text' must be the contract source")
        try:
            spec = parse(text)
        except ParseError as exc:
            return _bad_request(
                "invalid contract",
                details=[
                    {
                        "code": "Syntax",
                        "message": exc.message,
                        "line": exc.span.line if exc.span else None,
                        "column": exc.span.column if exc.span else None,
                    }
                ],
            )
        except InvalidContractText as exc:
            return _bad_request(
                "invalid contract",
                details=[
                    {
                        "code": e.code,
                        "message": e.message,
                        "line": e.span.line if e.span else None,
                        "column": e.span.column if e.span else None,
                    }
                    for e in exc.errors
                ],
            )
        try:
            config = EngineConfig.from_dict(
                {
                    "mode": payload.get("mode", "enforce"),
                    "accounts": payload.get("accounts", {}),
                    "roster": payload.get("roster", []),
                    "reminder_window": payload.get("reminder_window", 10),
                    "vote_timeout": payload.get("vote_timeout"),
                    "context_entries": payload.get("context_entries", 5),
                }
            )
            engine = ContractEngine.create(spec, config)
        except (CommandError, ValueError, TypeError) as exc:
            return _bad_request(str(exc))
        with registry_lock:
            instance_id = f"c{next(ids)}"
            registry[instance_id] = _Instance(instance_id, engine)
        return {
            "id": instance_id,
            "contract_id": spec.id,
            "mode": engine.mode,
            "state": engine.snapshot(),
        }

    @app.get("/contracts")
    def list_contracts():
        with registry_lock:
            instances = list(registry.values())
        out = []
        for inst in instances:
            with inst.lock:
                snap = inst.engine.snapshot()
            out.append(
                {
                    "id": inst.id,
                    "contract_id": snap["contract_id"],
                    "mode": snap["mode"],
                    "t": snap["state"]["now"],
                    "halted_on": snap["state"]["halted_on"],
                    "pending_request": snap["pending_request"],
                }
            )
        return {"contracts": out}

    @app.get("/contracts/{instance_id}/state")
    def contract_state(instance_id: str):
        inst = _instance(instance_id)
        if inst is None:
            return _not_found(f"no contract instance {instance_id}")
        with inst.lock:
            return inst.engine.snapshot()

    @app.get("/contracts/{instance_id}/audit")
    def contract_audit(instance_id: str):
        inst = _instance(instance_id)
        if inst is None:
            return _not_found(f"no contract instance {instance_id}")
        with inst.lock:
            entries = [e.to_dict() for e in inst.engine.ledger.entries]
            head = inst.engine.ledger.head_hash()
            broken = inst.engine.ledger.verify()
        return {"entries": entries, "head_hash": head, "intact": broken is None}

    @app.post("/contracts/{instance_id}/attempts")
    def post_attempt(instance_id: str, payload: dict = Body(...)):
        command = {
            "kind": "attempt",
            "t": payload.get("t"),
            "actor": payload.get("actor"),
            "op": payload.get("op"),
            "args": payload.get("args", {}),
        }
        return _apply(instance_id, command)

    @app.post("/contracts/{instance_id}/ticks")
    def post_tick(instance_id: str, payload: dict = Body(...)):
        return _apply(instance_id, {"kind": "tick", "t": payload.get("t")})

    @app.post("/contracts/{instance_id}/escrow")
    def post_escrow(instance_id: str, payload: dict = Body(...)):
        command = {
            "kind": "deposit",
            "t": payload.get("t"),
            "party": payload.get("party"),
            "amount": payload.get("amount"),
        }
        return _apply(instance_id, command)

    def _interventions(status: Optional[str]):
        with registry_lock:
            instances = list(registry.values())
        found = []
        for inst in instances:
            with inst.lock:
                for request in inst.engine.interventions:
                    if status is not None and request.status != status:
                        continue
                    item = request.to_dict()
                    item["instance"] = inst.id
                    found.append(item)
        found.sort(key=lambda r: (r["opened_at"], r["id"], r["instance"]))
        return found

    @app.get("/interventions")
    def list_interventions(status: Optional[str] = None):
        if status is not None and status not in ("pending", "resolved"):
            return _bad_request("status must be 'pending' or 'resolved'")
        return {"interventions": _interventions(status)}

    @app.get("/interventions/{request_id}")
    def intervention_detail(request_id: str):
        matches = [r for r in _interventions(None) if r["id"] == request_id]
        if not matches:
            return _not_found(f"no intervention request {request_id}")
        return matches[0]

    @app.post("/interventions/{request_id}/votes")
    def post_vote(request_id: str, payload: dict = Body(...)):
        with registry_lock:
            instances = list(registry.values())
        owners = []
        for inst in instances:
            with inst.lock:
                pending = inst.engine.pending
                if pending is not None and pending.id == request_id:
                    owners.append(inst)
        if not owners:
            return _not_found(f"no open intervention request {request_id}")
        if len(owners) > 1:
            return JSONResponse(
                status_code=409,
                content={"error": f"request id {request_id} is open on several instances"},
            )
        command = {
            "kind": "vote",
            "t": payload.get("t"),
            "arbiter": payload.get("arbiter"),
            "decision": payload.get("decision"),
            "rationale": payload.get("rationale", ""),
        }
        return _apply(owners[0].id, command)

    return app
