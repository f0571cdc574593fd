"""Recognize keccak256 slot derivations (the HASH relation).

Only the two shapes the compiler emits for storage addressing are matched:
a 64-byte hash of two stored words (mapping access) and a 32-byte hash of
one stored word (dynamic array data start).  Each word must be written by
an MSTORE that is not followed by any overlapping or unresolvable memory
write before the SHA3.  The search walks backwards through the SHA3's
block and then through single-predecessor chains, so every store it
accepts dominates the hash.
"""

from __future__ import annotations

from .ir import HashFact, Program, Statement

FMP_FLOOR = 0x80  # memory handed out via the free-memory pointer starts here

# op -> (index of destination offset, index of length or None for 32/1 bytes)
_WRITES = {
    "MSTORE": (0, 32),
    "MSTORE8": (0, 1),
    "CALLDATACOPY": (0, "len2"),
    "CODECOPY": (0, "len2"),
    "RETURNDATACOPY": (0, "len2"),
    "MCOPY": (0, "len2"),
    "EXTCODECOPY": (1, "len3"),
    "CALL": (5, "len6"),
    "CALLCODE": (5, "len6"),
    "DELEGATECALL": (4, "len5"),
    "STATICCALL": (4, "len5"),
}


class _Addr:
    __slots__ = ("base", "off", "fmp")

    def __init__(self, base: str | None, off: int | None, fmp: bool = False):
        self.base = base
        self.off = off
        self.fmp = fmp


def _address(prog: Program, var: str) -> _Addr:
    off = 0
    seen = 0
    while True:
        c = prog.value(var)
        if c is not None:
            total = c + off
            return _Addr(None, total if total < 1 << 64 else None)
        s = prog.defining(var)
        if s is not None and s.op == "ADD" and seen < 16:
            a, b = s.uses
            ca, cb = prog.value(a), prog.value(b)
            if cb is not None and cb < 1 << 64:
                off, var, seen = off + cb, a, seen + 1
                continue
            if ca is not None and ca < 1 << 64:
                off, var, seen = off + ca, b, seen + 1
                continue
        fmp = s is not None and s.op == "MLOAD" and prog.value(s.uses[0]) == 0x40
        return _Addr(var, off, fmp)


def _write_region(prog: Program, s: Statement) -> tuple[_Addr, int | None] | None:
    shape = _WRITES.get(s.op)
    if shape is None:
        return None
    idx, length = shape
    if isinstance(length, str):
        length = prog.value(s.uses[int(length[3:])])
    return _address(prog, s.uses[idx]), length


def _overlaps(word: _Addr, region: _Addr, length: int | None) -> bool:
    if length == 0:
        return False
    if word.off is None or region.off is None:
        return True
    if word.base == region.base:
        end = None if length is None else region.off + length
        return region.off < word.off + 32 and (end is None or end > word.off)
    # constant region below the free-memory floor vs a heap word, or vice versa
    if region.base is None and word.fmp and length is not None:
        return region.off + length > FMP_FLOOR
    if word.base is None and region.fmp:
        return word.off + 32 > FMP_FLOOR
    return True


def _stored_words(prog: Program, sha: Statement, words: list[_Addr]) -> list[str] | None:
    found: list[str | None] = [None] * len(words)
    block = prog.blocks[sha.block]
    stmts = block.stmts[: prog.position[sha.id]]
    visited = {block.id}
    while True:
        for sid in reversed(stmts):
            s = prog.statements[sid]
            region = _write_region(prog, s)
            if region is None:
                continue
            addr, length = region
            for i, w in enumerate(words):
                if found[i] is not None:
                    continue
                if (
                    s.op == "MSTORE"
                    and addr.base == w.base
                    and addr.off is not None
                    and addr.off == w.off
                ):
                    found[i] = s.uses[1]
                elif _overlaps(w, addr, length):
                    return None
            if all(f is not None for f in found):
                return found  # type: ignore[return-value]
        if len(block.preds) != 1 or block.preds[0] in visited:
            return None
        block = prog.blocks[block.preds[0]]
        visited.add(block.id)
        stmts = block.stmts


def detect_hashes(prog: Program) -> list[HashFact]:
    """Return the HASH facts of ``prog``.

    Imported programs that already carry HASH facts return them unchanged.
    """
    if prog.hashes is not None:
        return list(prog.hashes)
    facts = []
    for s in prog.statements.values():
        if s.op != "SHA3" or not s.defs:
            continue
        length = prog.value(s.uses[1])
        if length not in (0x20, 0x40):
            continue
        start = _address(prog, s.uses[0])
        if start.off is None:
            continue
        words = [start]
        if length == 0x40:
            words.append(_Addr(start.base, start.off + 32, start.fmp))
        args = _stored_words(prog, s, words)
        if args is not None:
            facts.append(HashFact(s.id, s.defs, tuple(args)))
    return facts
