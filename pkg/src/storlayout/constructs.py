"""Storage constructs recovered from actual storage indexes.

Every actual index is translated syntactically into a construct; constructs
that are never the parent of an array or mapping get a ``Variable`` leaf.
LOAD and STORE statements are then mapped to the leaves they access.
"""

from __future__ import annotations

from dataclasses import dataclass

from .indexes import (
    STORAGE_OPS,
    ArrayAI,
    ArrayDataStartI,
    ConstI,
    MapI,
    OffsI,
    SInd,
    phi_sources,
)
from .ir import Program


class StorageConstruct:
    __slots__ = ()

    def parent(self) -> StorageConstruct | None:
        return getattr(self, "par", None)

    def root(self) -> StorageConstruct:
        sc = self
        while sc.parent() is not None:
            sc = sc.parent()
        return sc

    @property
    def is_leaf(self) -> bool:
        return isinstance(self, (Variable, PackedVariable))


@dataclass(frozen=True)
class Const(StorageConstruct):
    c: int

    def __str__(self) -> str:
        return f"Const({self.c:#x})"


@dataclass(frozen=True)
class Array(StorageConstruct):
    par: StorageConstruct

    def __str__(self) -> str:
        return f"Array({self.par})"


@dataclass(frozen=True)
class Mapping(StorageConstruct):
    par: StorageConstruct

    def __str__(self) -> str:
        return f"Map({self.par})"


@dataclass(frozen=True)
class Offset(StorageConstruct):
    par: StorageConstruct
    of: int

    def __str__(self) -> str:
        return f"Offs({self.par}, {self.of})"


@dataclass(frozen=True)
class Variable(StorageConstruct):
    par: StorageConstruct
    low: int = 0
    high: int = 31

    def __str__(self) -> str:
        return f"Var({self.par})"


@dataclass(frozen=True)
class PackedVariable(StorageConstruct):
    """Bytes ``low..high`` (inclusive) of a slot; byte 0 is least significant."""

    par: StorageConstruct
    low: int
    high: int

    @property
    def width(self) -> int:
        return self.high - self.low + 1

    def __str__(self) -> str:
        return f"PVar({self.par}, {self.low}, {self.high})"


Leaf = Variable | PackedVariable


def leaf_width(leaf: Leaf) -> int:
    return leaf.high - leaf.low + 1


def translate(si: SInd) -> StorageConstruct:
    if isinstance(si, ConstI):
        return Const(si.c)
    if isinstance(si, (ArrayAI, ArrayDataStartI)):
        return Array(translate(si.par))
    if isinstance(si, MapI):
        return Mapping(translate(si.par))
    if isinstance(si, OffsI):
        return Offset(translate(si.par), si.of)
    raise TypeError(si)


def build_constructs(actual: set[SInd]) -> set[StorageConstruct]:
    base = {translate(si) for si in actual}
    containers = {sc.par for sc in base if isinstance(sc, (Array, Mapping))}
    return base | {Variable(sc) for sc in base if sc not in containers}


def map_statements(
    prog: Program,
    var_stor_index: dict[str, set[SInd]],
    constructs: set[StorageConstruct],
) -> dict[str, set[Leaf]]:
    """Map each SLOAD/SSTORE id to the Variable leaves its address may denote."""
    out: dict[str, set[Leaf]] = {}
    cache: dict[str, frozenset[str]] = {}
    for s in prog.stmts_with(*STORAGE_OPS):
        if not s.uses:
            continue
        hits = set()
        for v in phi_sources(prog, s.uses[0], cache):
            for si in var_stor_index.get(v, ()):
                leaf = Variable(translate(si))
                if leaf in constructs:
                    hits.add(leaf)
        if hits:
            out[s.id] = hits
    return out


def unmapped_statements(prog: Program, stmt_to_var: dict[str, set]) -> list[str]:
    return [s.id for s in prog.stmts_with(*STORAGE_OPS) if s.id not in stmt_to_var]


def leaves(constructs) -> list[Leaf]:
    return sorted(
        (sc for sc in constructs if sc.is_leaf), key=lambda sc: (construct_sort_key(sc.par), sc.low)
    )


def construct_sort_key(sc: StorageConstruct) -> tuple:
    chain = []
    while sc is not None:
        if isinstance(sc, Const):
            chain.append((0, sc.c))
        elif isinstance(sc, Offset):
            chain.append((3, sc.of))
        elif isinstance(sc, Array):
            chain.append((1, 0))
        elif isinstance(sc, Mapping):
            chain.append((2, 0))
        else:
            chain.append((4, sc.low))
        sc = sc.parent()
    return tuple(reversed(chain))


def dump_constructs(constructs) -> list[str]:
    return [str(sc) for sc in leaves(constructs)]
