"""SSA program representation shared by every analysis stage.

A :class:`Program` is a set of statements grouped into blocks.  Variables
are plain strings; each is defined by exactly one statement.  ``const``
holds the constant-folding result (the ``VarValue`` relation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property


@dataclass
class Statement:
    id: str
    op: str
    uses: tuple[str, ...] = ()
    defs: str | None = None
    block: str = ""
    pc: int = -1
    value: int | None = None  # CONST only

    def __str__(self) -> str:
        lhs = f"{self.defs} := " if self.defs else ""
        if self.op == "CONST":
            return f"{self.id}: {lhs}CONST {self.value:#x}"
        return f"{self.id}: {lhs}{self.op}({', '.join(self.uses)})"


@dataclass
class Block:
    id: str
    pc: int = -1
    stmts: list[str] = field(default_factory=list)
    succs: list[str] = field(default_factory=list)
    preds: list[str] = field(default_factory=list)
    imprecise: bool = False
    unanalyzable: bool = False


@dataclass(frozen=True)
class HashFact:
    """``result := keccak256(args...)`` where each arg is one 32-byte word.

    Two-arg facts are ``[key, slot]``; one-arg facts are ``[slot]``.
    """

    stmt: str
    result: str
    args: tuple[str, ...]


@dataclass
class Program:
    statements: dict[str, Statement] = field(default_factory=dict)
    blocks: dict[str, Block] = field(default_factory=dict)
    entry: str | None = None
    const: dict[str, int] = field(default_factory=dict)
    # Set when HASH facts were supplied externally instead of detected.
    hashes: list[HashFact] | None = None

    def add_block(self, block: Block) -> Block:
        self.blocks[block.id] = block
        return block

    def add(self, stmt: Statement) -> Statement:
        self.statements[stmt.id] = stmt
        if stmt.block in self.blocks:
            self.blocks[stmt.block].stmts.append(stmt.id)
        return stmt

    def invalidate(self) -> None:
        for name in ("def_of", "uses_of", "position"):
            self.__dict__.pop(name, None)

    @cached_property
    def def_of(self) -> dict[str, Statement]:
        return {s.defs: s for s in self.statements.values() if s.defs}

    @cached_property
    def uses_of(self) -> dict[str, list[Statement]]:
        out: dict[str, list[Statement]] = {}
        for s in self.statements.values():
            seen = set()
            for u in s.uses:
                if u not in seen:
                    seen.add(u)
                    out.setdefault(u, []).append(s)
        return out

    @cached_property
    def position(self) -> dict[str, int]:
        """Index of each statement within its block."""
        pos = {}
        for b in self.blocks.values():
            for i, sid in enumerate(b.stmts):
                pos[sid] = i
        return pos

    def stmts_with(self, *ops: str) -> list[Statement]:
        return [s for s in self.statements.values() if s.op in ops]

    def value(self, var: str) -> int | None:
        return self.const.get(var)

    def defining(self, var: str) -> Statement | None:
        return self.def_of.get(var)

    @property
    def variables(self) -> set[str]:
        out = set()
        for s in self.statements.values():
            if s.defs:
                out.add(s.defs)
            out.update(s.uses)
        return out

    def dump(self) -> str:
        lines = []
        for b in self.blocks.values():
            flags = "".join(
                [" imprecise" if b.imprecise else "", " unanalyzable" if b.unanalyzable else ""]
            )
            lines.append(f"block {b.id} -> {', '.join(b.succs)}{flags}")
            for sid in b.stmts:
                lines.append(f"  {self.statements[sid]}")
        return "\n".join(lines)
