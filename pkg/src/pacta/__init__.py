"""Deterministic engine for machine-checkable contracts with human escape hatches.

Contracts are written in a small clause language (rights, obligations,
prohibitions over operations, with windows, triggers and declared decision
gaps), compiled to per-clause state machines, and run in one of two modes:
monitoring (observe and classify) or enforcement (intercept, deny by
default, auto-collect from escrow).  Every accepted command lands in a
hash-chained audit log from which a run can be replayed bit-for-bit.
"""

from .canonical import canonical_json, digest_of, sha256_hex
from .dsl import InvalidContractText, ParseError, parse, serialize
from .engine import CommandError, ContractEngine, EngineConfig, ReplayError, replay
from .fsm import (
    Classification,
    ClauseStatus,
    CompiledContract,
    ContractHalted,
    ContractState,
    Legality,
    compile_spec,
)
from .ledger import AuditEntry, AuditLog, ChainBroken
from .model import ContractSpec, OperationAttempt, SpecError, validate
from .replication import Fault, ReplicaCluster
from .scenario import Scenario, ScenarioError, ScenarioReport, run_scenario
from .service import create_app

__version__ = "0.1.0"

__all__ = [
    "AuditEntry",
    "AuditLog",
    "ChainBroken",
    "Classification",
    "ClauseStatus",
    "CommandError",
    "CompiledContract",
    "ContractEngine",
    "ContractHalted",
    "ContractSpec",
    "ContractState",
    "EngineConfig",
    "Fault",
    "InvalidContractText",
    "Legality",
    "OperationAttempt",
    "ParseError",
    "ReplayError",
    "ReplicaCluster",
    "Scenario",
    "ScenarioError",
    "ScenarioReport",
    "SpecError",
    "canonical_json",
    "compile_spec",
    "create_app",
    "digest_of",
    "parse",
    "replay",
    "run_scenario",
    "serialize",
    "sha256_hex",
    "validate",
    "__version__",
]
