"""End-to-end analysis of one contract."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .constructs import Leaf, StorageConstruct, build_constructs, dump_constructs, map_statements, unmapped_statements
from .evm import lift_bytecode, parse_hex, runtime_payload
from .guards import GuardReport, detect_guards
from .indexes import IndexAnalysis, analyze_indexes
from .ir import HashFact, Program
from .layout import emit_layout
from .memhash import detect_hashes
from .packing import AccessProfile, partition_packed
from .typeinfer import (
    STRING,
    TypeResult,
    ValueType,
    byte_array_locations,
    collect_evidence,
    resolve_types,
    type_mapping_keys,
)


class AnalysisError(RuntimeError):
    """The analysis could not produce a result for a contract."""


@dataclass
class Analysis:
    program: Program
    hashes: list[HashFact]
    indexes: IndexAnalysis
    constructs: set[StorageConstruct]
    stmt_to_var: dict[str, set[Leaf]]
    profiles: dict[Leaf, AccessProfile]
    types: TypeResult
    key_types: dict[Any, ValueType]
    byte_arrays: set[StorageConstruct]
    layout: dict[str, Any]
    diagnostics: dict[str, Any] = field(default_factory=dict)
    _guards: set[GuardReport] | None = None

    @property
    def guards(self) -> set[GuardReport]:
        if self._guards is None:
            self._guards = detect_guards(self.program, self.stmt_to_var, self.profiles)
        return self._guards

    def leaves(self) -> list[str]:
        return dump_constructs(self.constructs)


def analyze_program(prog: Program) -> Analysis:
    hashes = detect_hashes(prog)
    idx = analyze_indexes(prog, hashes)
    constructs = build_constructs(idx.actual)
    stmt_to_var = map_statements(prog, idx.var_stor_index, constructs)
    constructs, stmt_to_var, profiles = partition_packed(prog, constructs, stmt_to_var)
    types = resolve_types(collect_evidence(prog, stmt_to_var, profiles), constructs)
    key_types = type_mapping_keys(prog, idx.actual)
    byte_arrays = byte_array_locations(prog, idx.var_stor_index) & constructs
    for leaf in constructs:
        if leaf.is_leaf and leaf.par in byte_arrays:
            types.types[leaf] = STRING
    layout = emit_layout(constructs, types.types, key_types, byte_arrays)
    diagnostics = {
        "blocks": len(prog.blocks),
        "statements": len(prog.statements),
        "impreciseBlocks": sum(b.imprecise for b in prog.blocks.values()),
        "hashes": len(hashes),
        "unmappedStorageOps": unmapped_statements(prog, stmt_to_var),
        "typeConflicts": [f"{d.var}: {d.message}" for d in types.diagnostics],
    }
    return Analysis(
        prog, hashes, idx, constructs, stmt_to_var, profiles, types, key_types, byte_arrays, layout, diagnostics
    )


def analyze(code: bytes | str) -> Analysis:
    """Analyze runtime bytecode (creation code is unwrapped first)."""
    if isinstance(code, str):
        code = parse_hex(code)
    try:
        prog = lift_bytecode(code)
        payload = runtime_payload(prog, code)
        if payload is not None:
            prog = lift_bytecode(payload)
        return analyze_program(prog)
    except RecursionError as e:
        raise AnalysisError("analysis recursion limit") from e
