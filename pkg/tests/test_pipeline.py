"""End-to-end pipeline behaviour."""

import json

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from evmasm import assemble
from helpers import CORPUS, load_fixture
from storlayout import analyze, load_layout


def test_creation_code_is_unwrapped():
    doc = load_fixture("StorageExample")
    a = analyze(doc["creation"])
    b = analyze(doc["runtime"])
    assert a.layout == b.layout


def test_diagnostics_present():
    a = analyze(load_fixture("Ledger")["runtime"])
    d = a.diagnostics
    assert d["statements"] > 0 and d["blocks"] > 0
    assert d["unmappedStorageOps"] == []
    assert d["impreciseBlocks"] == 0


def test_empty_code():
    assert analyze(b"").layout == {"storage": [], "types": {}}


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.stem)
def test_corpus_layouts_are_valid_documents(path):
    a = analyze(json.loads(path.read_text())["runtime"])
    load_layout(a.layout)
    slots = [(int(e["slot"]), e["offset"]) for e in a.layout["storage"]]
    assert slots == sorted(slots)


def test_analysis_is_deterministic():
    code = load_fixture("Nested")["runtime"]
    assert analyze(code).layout == analyze(code).layout


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.binary(max_size=300))
def test_arbitrary_bytes_do_not_crash(code):
    a = analyze(code)
    load_layout(a.layout)


opcodes = st.sampled_from(
    ["ADD", "SUB", "MUL", "AND", "OR", "SHR", "SHL", "SLOAD", "SSTORE", "MSTORE", "SHA3", "DUP1", "DUP2", "SWAP1",
     "POP", "ISZERO", "CALLER", "CALLDATALOAD", "EQ", "JUMPI", "JUMP", "JUMPDEST", "0", "1", "0x20", "0x40"]
)


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(opcodes, max_size=60))
def test_random_programs_do_not_crash(tokens):
    a = analyze(assemble(" ".join(tokens)))
    load_layout(a.layout)
