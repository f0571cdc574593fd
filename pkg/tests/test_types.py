"""Value type inference."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evmasm import assemble
from table1 import FORBIDDEN, ROWS, WIDTHS, allowed, micro_program, resolve
from storlayout.constructs import Const, Mapping
from storlayout.evm import lift_bytecode
from storlayout.pipeline import analyze_program
from storlayout.typeinfer import (
    ADDRESS,
    ARITH_S,
    ARITH_U,
    BITWISE,
    BOOL,
    BYTE_INDEX,
    COMP_S,
    COMP_U,
    EQUAL,
    ISZERO_NORM,
    LOGICAL,
    RIGHT_PADDED,
    SHIFTS,
    SIGNEXT,
    UINT256,
    ValueType,
    collect_evidence,
    resolve_type,
)

ALL_TAGS = [EQUAL, LOGICAL, ISZERO_NORM, COMP_U, COMP_S, BITWISE, SHIFTS, ARITH_U, ARITH_S, SIGNEXT,
            BYTE_INDEX, RIGHT_PADDED]


def run(src: str):
    return analyze_program(lift_bytecode(assemble(src)))


def evidence(src: str):
    a = run(src)
    return {str(tc.var): (tc.evidence, tc.width) for tc in collect_evidence(a.program, a.stmt_to_var, a.profiles)}


# -- evidence collection -------------------------------------------------------


def test_ispaused_pattern():
    ev = evidence("1 SLOAD 0xa0 SHR 0xff AND ISZERO ISZERO 0 MSTORE 1 SLOAD 0xff AND 0x20 MSTORE STOP")
    got, width = ev["PVar(Const(0x1), 20, 20)"]
    assert {LOGICAL, ISZERO_NORM} <= got and width == 1


def test_signextend_then_slt():
    ev = evidence("0 SLOAD 0xffffffff AND 3 SIGNEXTEND 0 CALLDATALOAD SLT 0 MSTORE STOP")
    (got, width), = ev.values()
    assert {SIGNEXT, COMP_S} <= got and width == 4


def test_byte_on_full_slot():
    ev = evidence("0 SLOAD 0 BYTE 0 MSTORE STOP")
    (got, width), = ev.values()
    assert got == {BYTE_INDEX} and width == 32


def test_sub_only_tested_counts_as_equal():
    # the optimizer's `a != b` is SUB then a zero test
    ev = evidence(f"0 SLOAD {(1 << 160) - 1:#x} AND CALLER SUB @t JUMPI STOP t: STOP")
    (got, _), = ev.values()
    assert got == {EQUAL}


def test_single_iszero_is_a_zero_comparison():
    ev = evidence("0 SLOAD ISZERO 0 MSTORE STOP")
    (got, _), = ev.values()
    assert got == {EQUAL}


def test_store_side_evidence():
    ev = evidence("0 CALLDATALOAD 0 CALLDATALOAD SDIV 0 SSTORE STOP")
    (got, _), = ev.values()
    assert ARITH_S in got


# -- resolution ----------------------------------------------------------------


def test_resolution_examples():
    assert resolve_type(frozenset({LOGICAL, ISZERO_NORM}), 1)[0] == BOOL
    assert resolve_type(frozenset({LOGICAL, ARITH_U}), 1)[0] == ValueType("uint", 1)
    assert resolve_type(frozenset(), 20)[0] == ADDRESS
    assert resolve_type(frozenset({ARITH_U}), 20)[0] == ValueType("uint", 20)
    assert resolve_type(frozenset({SIGNEXT}), 4)[0] == ValueType("int", 4)
    assert resolve_type(frozenset({RIGHT_PADDED}), 8)[0] == ValueType("bytes", 8)
    assert resolve_type(frozenset({ARITH_U}), 32)[0] == UINT256
    assert resolve_type(frozenset({EQUAL}), 32)[0] == UINT256


def test_signed_and_bytes_conflict_reports():
    t, diag = resolve_type(frozenset({SIGNEXT, BYTE_INDEX}), 4)
    assert t == ValueType("uint", 4) and diag


@given(st.frozensets(st.sampled_from(ALL_TAGS)), st.sampled_from(WIDTHS))
def test_resolved_width_matches_leaf(ev, width):
    t, _ = resolve_type(ev, width)
    assert t.width == width or (t == BOOL and width == 1)
    assert t.family != "any32"


@given(st.frozensets(st.sampled_from(ALL_TAGS)), st.sampled_from(ALL_TAGS), st.sampled_from(WIDTHS))
def test_more_evidence_never_changes_width(ev, extra, width):
    assert resolve_type(ev, width)[0].width == resolve_type(ev | {extra}, width)[0].width


@given(st.lists(st.sampled_from(ALL_TAGS)))
def test_resolution_ignores_order(tags):
    assert resolve_type(frozenset(tags), 8) == resolve_type(frozenset(reversed(tags)), 8)


def test_type_id_round_trip():
    for label in ("uint8", "int128", "bytes4", "address", "bool", "uint256"):
        assert ValueType.parse("t_" + label).label == label


# -- operation/type matrix -------------------------------------------------------

CASES = [
    (row, op, w, low)
    for row, ops in ROWS.items()
    for op in ops
    for w in WIDTHS
    for low in sorted({0, 32 - w})
]


@pytest.mark.parametrize("row,op,width,low", CASES)
def test_matrix_elimination(row, op, width, low):
    t = resolve(op, width, low)
    ok = allowed(row, width)
    if ok:
        assert t.family in ok, f"{row} op {op!r} at width {width} gave {t}"
    else:
        # no type of this width admits the row; the width default stands
        assert t == resolve("", width, low)


@pytest.mark.parametrize("width", [w for w in WIDTHS if w < 32])
def test_distinctive_signals(width):
    assert resolve(f"{width - 1} SIGNEXTEND", width).family == "int"
    assert resolve("0 CALLDATALOAD SLT", width).family == "int"
    assert resolve("0 BYTE", width, 32 - width).family == "bytes"


def test_forbidden_table_shape():
    assert set(FORBIDDEN) == set(ROWS)
    assert FORBIDDEN["byte ind"] == {"uint", "int", "address", "bool"}


# -- keys and strings ------------------------------------------------------------


def test_key_types():
    a = run(
        "CALLER 0 MSTORE 3 0x20 MSTORE 0x40 0 SHA3 SLOAD POP "
        f"0 CALLDATALOAD {(1 << 160) - 1:#x} AND 0 MSTORE 4 0x20 MSTORE 0x40 0 SHA3 SLOAD POP "
        "0 CALLDATALOAD 0 MSTORE 5 0x20 MSTORE 0x40 0 SHA3 SLOAD POP STOP"
    )
    keys = {m.par: t for m, t in a.key_types.items() if isinstance(m, Mapping)}
    assert keys[Const(3)] == ADDRESS
    assert keys[Const(4)] == ADDRESS
    assert keys.get(Const(5), UINT256) == UINT256


def test_string_header_detected():
    a = run("2 SLOAD DUP1 1 AND 0 MSTORE 1 SHR 0x20 MSTORE STOP")
    assert Const(2) in a.byte_arrays
    (entry,) = a.layout["storage"]
    assert entry["type"] == "t_string_storage"
    assert a.layout["types"]["t_string_storage"]["encoding"] == "bytes"


def test_plain_counter_is_not_a_string():
    a = run("2 SLOAD 1 ADD 2 SSTORE STOP")
    assert not a.byte_arrays
    assert a.layout["storage"][0]["type"] == "t_uint256"


def test_micro_program_shape():
    src = micro_program("NOT", 4, 28)
    assert src.startswith("0 SLOAD 224 SHR")
