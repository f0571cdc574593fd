"""Micro-programs for the operation/type compatibility matrix.

Each program loads one field of slot 0, applies a single operation of one
matrix row to it and writes the result to memory.
"""

from storlayout.evm import lift_bytecode
from storlayout.pipeline import analyze_program

from evmasm import assemble

ARG = "0 CALLDATALOAD"

ROWS = {
    "equal": [f"{ARG} EQ", f"{ARG} SUB ISZERO"],
    "logical": ["ISZERO ISZERO", "@t JUMPI 0 0 RETURN t: 1"],
    "comp": [f"{ARG} LT", f"{ARG} GT", f"{ARG} SLT", f"{ARG} SGT"],
    "bitwise": [f"{ARG} AND", f"{ARG} OR", f"{ARG} XOR", "NOT"],
    "shifts": ["3 SHL", "3 SHR", "4 MUL", "4 SWAP1 DIV", "3 SAR"],
    "arithm": [
        f"{ARG} ADD",
        f"{ARG} SUB",
        f"{ARG} MUL",
        f"{ARG} SWAP1 DIV",
        f"{ARG} SWAP1 MOD",
        f"{ARG} EXP",
        f"{ARG} {ARG} ADDMOD",
        f"{ARG} {ARG} MULMOD",
        f"{ARG} SWAP1 SDIV",
        f"{ARG} SWAP1 SMOD",
    ],
    "byte ind": ["0 BYTE", "31 BYTE"],
}

# families a row never resolves to
FORBIDDEN = {
    "equal": set(),
    "logical": {"bytes", "uint", "int", "address"},
    "comp": {"bool"},
    "bitwise": {"address", "bool"},
    "shifts": {"address", "bool"},
    "arithm": {"bytes", "address", "bool"},
    "byte ind": {"uint", "int", "address", "bool"},
}

WIDTHS = [1, 2, 4, 8, 16, 20, 32]
FAMILY_WIDTHS = {"bool": {1}, "address": {20}}


def allowed(row: str, width: int) -> set[str]:
    """Families a correct answer may take for ``row`` at ``width``."""
    fams = {"bytes", "uint", "int", "address", "bool"} - FORBIDDEN[row]
    return {f for f in fams if width in FAMILY_WIDTHS.get(f, {width})}


def micro_program(op: str, width: int, low: int) -> str:
    high = low + width - 1
    mask = (1 << (8 * width)) - 1
    src = "0 SLOAD "
    if low:
        src += f"{8 * low} SHR "
    if high < 31:
        src += f"{mask:#x} AND "
    return src + op + " 0 MSTORE 0x20 0 RETURN"


def resolve(op: str, width: int, low: int = 0):
    a = analyze_program(lift_bytecode(assemble(micro_program(op, width, low))))
    leaves = [sc for sc in a.constructs if sc.is_leaf]
    assert len(leaves) == 1, leaves
    return a.types.types[leaves[0]]
