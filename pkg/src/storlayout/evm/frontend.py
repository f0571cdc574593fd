"""One-call entry points into the bytecode frontend."""

from __future__ import annotations

from .cfg import build_cfg
from .disasm import disassemble
from .fold import fold_constants
from .ssa import lift_to_ssa
from ..ir import Program


def lift_bytecode(code: bytes) -> Program:
    """Disassemble, build the CFG, lift to SSA and fold constants."""
    return fold_constants(lift_to_ssa(build_cfg(disassemble(code))))


def extract_runtime(code: bytes) -> bytes:
    """Return the runtime segment if ``code`` looks like creation code.

    Creation code copies the runtime out of its own tail and returns it:
    ``CODECOPY(dst, off, n) ... RETURN(dst, n)`` within one block, with all
    operands constant.  Anything else is assumed to be runtime code already.
    """
    payload = runtime_payload(lift_bytecode(code), code)
    return code if payload is None else payload


def runtime_payload(prog: Program, code: bytes) -> bytes | None:
    """The runtime segment deployed by ``prog`` (lifted from ``code``), if any."""
    for block in prog.blocks.values():
        pending = None
        for sid in block.stmts:
            s = prog.statements[sid]
            if s.op == "CODECOPY":
                vals = [prog.value(u) for u in s.uses]
                pending = vals if None not in vals else None
            elif s.op == "RETURN" and pending is not None:
                dst, off, size = pending
                ret_off, ret_size = (prog.value(u) for u in s.uses)
                if ret_off == dst and ret_size == size and size and off + size <= len(code):
                    return code[off : off + size]
    return None
