"""Acceptance criteria, one test each.

The terminal summary lists a PASS/FAIL line per criterion.
"""

import json
import time

import pytest
from Crypto.Hash import keccak

from evmasm import assemble
from helpers import CORPUS, LIBRARY, corpus, load_fixture
from storlayout import analyze, analyze_program, compare_layouts
from storlayout.constructs import Array, Const, Mapping, Offset, PackedVariable, Variable
from storlayout.driver import JobConfig, run
from storlayout.evm import lift_bytecode, parse_hex
from storlayout.facts import export_facts, import_facts
from storlayout.indexes import analyze_indexes, dump_indexes
from storlayout.layout import canonical_type, render_canonical
from storlayout.memhash import detect_hashes
from storlayout.typeinfer import collect_evidence
from table1 import ROWS, WIDTHS, allowed, resolve

ADMIN_SLOT = 0xB53127684A568B3173AE13B9F8A6016E243E63B6E8EE1178D6A717850B5D6103
TERM_FACTOR = 4  # index terms per IR statement


def detail(request, text):
    request.node.acceptance_detail = text


@pytest.mark.criterion(1, "StorageExample layout matches the compiler")
def test_fig1_end_to_end(request):
    doc = load_fixture("StorageExample")
    start = time.perf_counter()
    a = analyze(doc["runtime"])
    elapsed = time.perf_counter() - start
    r = compare_layouts(a.layout, doc["storageLayout"])
    rows = [(e["slot"], e["offset"], render_canonical(canonical_type(a.layout, e["type"]))) for e in a.layout["storage"]]
    detail(request, f"P={r.precision:.2f} R={r.recall:.2f} in {elapsed:.2f}s")
    assert rows == [
        ("0", 0, "uint256"),
        ("1", 0, "address"),
        ("1", 20, "bool"),
        ("2", 0, "uint256[]"),
        ("3", 0, "mapping(address=>bool)"),
        ("4", 0, "mapping(address=>mapping(uint256=>struct{0.0:uint256,1.0:uint256}))"),
    ]
    assert r.precision == 1.0 and r.recall == 1.0
    assert elapsed < 5


@pytest.mark.criterion(2, "ActualIndex golden listing")
def test_actual_index_golden(request):
    prog = lift_bytecode(parse_hex(load_fixture("StorageExample")["runtime"]))
    got = dump_indexes(analyze_indexes(prog, detect_hashes(prog)).actual, normalize=True)
    detail(request, f"{len(got)} facts")
    assert got == [
        "ConstI(0x0)",
        "ConstI(0x1)",
        "ConstI(0x2)",
        "ConstI(0x3)",
        "ConstI(0x4)",
        "MapI(ConstI(0x3), _)",
        "MapI(ConstI(0x4), _)",
        "ArrayAI(ConstI(0x2), _)",
        "MapI(MapI(ConstI(0x4), _), _)",
        "OffsI(MapI(MapI(ConstI(0x4), _), _), 1)",
    ]


def _cyclic_phis(prog):
    """PHIs reachable from themselves along def-use edges."""
    out = []
    for phi in prog.stmts_with("PHI"):
        stack, seen = [phi.defs], set()
        while stack:
            v = stack.pop()
            for u in prog.uses_of.get(v, ()):
                if u is phi:
                    out.append(phi)
                    stack = []
                    break
                if u.defs and u.defs not in seen:
                    seen.add(u.defs)
                    stack.append(u.defs)
    return out


@pytest.mark.criterion(3, "index fixpoint terminates on loops")
def test_loop_termination(request):
    # the compiled array sweep, plus a pointer-walking loop where the storage
    # index itself is the loop PHI
    walk = assemble("2 0 MSTORE 0x20 0 SHA3 loop: DUP1 SLOAD POP 1 ADD DUP1 0 CALLDATALOAD GT @loop JUMPI STOP")
    notes = []
    for name, code in (("Loop", parse_hex(load_fixture("Loop")["runtime"])), ("walk", walk)):
        start = time.perf_counter()
        prog = lift_bytecode(code)
        ia = analyze_indexes(prog, detect_hashes(prog))
        elapsed = time.perf_counter() - start
        terms = sum(len(v) for v in ia.var_stor_index.values())
        notes.append(f"{name}: {terms} terms / {len(prog.statements)} stmts, {elapsed:.3f}s")
        assert _cyclic_phis(prog)
        assert terms <= TERM_FACTOR * len(prog.statements)
        assert elapsed < 1
    detail(request, "; ".join(notes))


@pytest.mark.criterion(4, "coverage corpus exact, library sample P>=0.9 R>=0.8")
def test_coverage_corpus(request):
    docs = corpus("coverage")
    exact, kinds, tags, packed_sizes, deep = 0, set(), set(), set(), False
    for doc in docs:
        a = analyze(doc["runtime"])
        r = compare_layouts(a.layout, doc["storageLayout"])
        exact += r.precision == 1.0 and r.recall == 1.0
        kinds |= {type(c).__name__ for c in a.constructs}
        for tc in collect_evidence(a.program, a.stmt_to_var, a.profiles):
            tags |= tc.evidence
        per_slot = {}
        for c in a.constructs:
            if isinstance(c, PackedVariable):
                per_slot[c.par] = per_slot.get(c.par, 0) + 1
            if isinstance(c, Variable) and _depth(c) >= 4:
                deep = True
        packed_sizes |= set(per_slot.values())

    gt = rep = ok = 0
    for path in LIBRARY:
        doc = json.loads(path.read_text())
        r = compare_layouts(analyze(doc["runtime"]).layout, doc["storageLayout"])
        gt, rep, ok = gt + r.ground_truth_count, rep + r.report_count, ok + r.success_count
    precision, recall = ok / rep, ok / gt
    detail(
        request,
        f"corpus {exact}/{len(docs)} exact; library {len(LIBRARY)} contracts P={precision:.3f} R={recall:.3f}",
    )
    assert len(docs) >= 15
    assert exact == len(docs)
    assert kinds >= {"Const", "Array", "Mapping", "Offset", "Variable", "PackedVariable"}
    row_tags = {
        "equal": {"equal"},
        "logical": {"logical"},
        "comp": {"comp-unsigned", "comp-signed"},
        "bitwise": {"bitwise"},
        "shifts": {"shifts"},
        "arithm": {"arithmetic-unsigned", "arithmetic-signed"},
        "byte ind": {"byte-index"},
    }
    assert all(tags & t for t in row_tags.values())
    assert {2, 3, 4} <= packed_sizes
    assert deep
    assert len(LIBRARY) >= 50
    assert precision >= 0.9 and recall >= 0.8


def _depth(sc):
    """Container nesting above a leaf (mapping of mapping of array of struct is 4)."""
    n = 0
    while sc.parent() is not None:
        sc = sc.parent()
        n += isinstance(sc, (Mapping, Array, Offset))
    return n


@pytest.mark.criterion(5, "ERC-1967 admin slot typed address")
def test_erc1967_admin_slot(request):
    h = keccak.new(digest_bits=256, data=b"eip1967.proxy.admin").digest()
    assert int.from_bytes(h, "big") - 1 == ADMIN_SLOT
    assert ADMIN_SLOT.to_bytes(32, "big").hex() == "b53127684a568b3173ae13b9f8a6016e243e63b6e8ee1178d6a717850b5d6103"
    doc = load_fixture("AdminSlot")
    a = analyze(doc["runtime"])
    entries = [e for e in a.layout["storage"] if int(e["slot"]) == ADMIN_SLOT]
    detail(request, f"{[(hex(int(e['slot'])), e['type']) for e in entries]}")
    assert [e["type"] for e in entries] == ["t_address"]
    assert all(int(e["slot"]) != ADMIN_SLOT for e in doc["storageLayout"]["storage"])


@pytest.mark.criterion(6, "reentrancy guard and its mutant")
def test_reentrancy_guards(request):
    guarded = analyze(load_fixture("Guarded")["runtime"]).guards
    mutant = analyze(load_fixture("GuardedNoUnlock")["runtime"]).guards
    detail(request, f"Guarded={len(guarded)} GuardedNoUnlock={len(mutant)}")
    assert len(guarded) == 1
    assert len(mutant) == 0


@pytest.mark.criterion(7, "fact export/import round trip")
def test_fact_round_trip(request):
    same = 0
    for path in CORPUS:
        a = analyze(json.loads(path.read_text())["runtime"])
        texts = {name: "".join("\t".join(r) + "\n" for r in rows) for name, rows in export_facts(a.program).items()}
        b = analyze_program(import_facts(texts))
        same += a.layout == b.layout
    detail(request, f"{same}/{len(CORPUS)} identical")
    assert same == len(CORPUS)


@pytest.mark.criterion(8, "operation/type elimination matrix")
def test_elimination_matrix(request):
    checked = vacuous = 0
    failures = []
    for row, ops in ROWS.items():
        for op in ops:
            for width in WIDTHS:
                for low in sorted({0, 32 - width}):
                    ok = allowed(row, width)
                    if not ok:
                        vacuous += 1  # every type of this width is excluded
                        continue
                    t = resolve(op, width, low)
                    checked += 1
                    if t.family not in ok:
                        failures.append(f"{row}/{op}/w{width}@{low}->{t}")
    distinct = []
    for width in (w for w in WIDTHS if w < 32):
        distinct.append(resolve(f"{width - 1} SIGNEXTEND", width).family == "int")
        distinct.append(resolve("0 CALLDATALOAD SLT", width).family == "int")
        distinct.append(resolve("0 BYTE", width, 32 - width).family == "bytes")
    detail(request, f"{checked} cells checked, {vacuous} with no admissible type, {sum(distinct)}/{len(distinct)} signals")
    assert not failures, failures
    assert all(distinct)


@pytest.mark.criterion(9, "throughput with 8 workers")
def test_throughput(request, tmp_path):
    inputs = [str(p) for p in CORPUS]
    start = time.perf_counter()
    batch = run(JobConfig(inputs, out_dir=str(tmp_path), jobs=8, figures=False))
    elapsed = time.perf_counter() - start
    rate = len(inputs) / elapsed
    detail(request, f"{rate:.1f} contracts/s over {len(inputs)} contracts")
    assert batch.summary()["terminated"] == len(inputs)
    assert rate >= 10
