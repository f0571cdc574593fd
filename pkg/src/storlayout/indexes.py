"""Storage index value-flow analysis.

``compute_var_stor_index`` over-approximates which storage index
expressions each variable may hold; ``compute_actual_index`` keeps the
ones that reach an SLOAD/SSTORE address, directly or through PHI copies,
plus all their parents.

PHI definitions never receive index facts of their own.  A loop that feeds
an index back into itself through a PHI would otherwise grow terms without
bound.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

from .evm.fold import MASK
from .ir import HashFact, Program

MAX_OFFSET = 0x10000  # struct offsets are 16-bit
STORAGE_OPS = ("SLOAD", "SSTORE")


class SInd:
    """Base class of storage index terms."""

    __slots__ = ()

    def parent(self) -> SInd | None:
        return getattr(self, "par", None)

    def root(self) -> SInd:
        term = self
        while term.parent() is not None:
            term = term.parent()
        return term

    def depth(self) -> int:
        n, term = 0, self
        while term.parent() is not None:
            n, term = n + 1, term.parent()
        return n


@dataclass(frozen=True)
class ConstI(SInd):
    c: int

    def __str__(self) -> str:
        return f"ConstI({self.c:#x})"


@dataclass(frozen=True)
class ArrayDataStartI(SInd):
    par: SInd

    def __str__(self) -> str:
        return f"ArrayDataStartI({self.par})"


@dataclass(frozen=True)
class ArrayAI(SInd):
    par: SInd
    iv: str

    def __str__(self) -> str:
        return f"ArrayAI({self.par}, {self.iv})"


@dataclass(frozen=True)
class MapI(SInd):
    par: SInd
    kv: str

    def __str__(self) -> str:
        return f"MapI({self.par}, {self.kv})"


@dataclass(frozen=True)
class OffsI(SInd):
    par: SInd
    of: int

    def __str__(self) -> str:
        return f"OffsI({self.par}, {self.of})"


class VarStorIndexFact(NamedTuple):
    var: str
    index: SInd


class IndexAnalysis(NamedTuple):
    var_stor_index: dict[str, set[SInd]]
    actual: set[SInd]

    def facts(self) -> set[VarStorIndexFact]:
        return {VarStorIndexFact(v, si) for v, s in self.var_stor_index.items() for si in s}


class _Interner:
    def __init__(self) -> None:
        self.table: dict[SInd, SInd] = {}

    def __call__(self, term: SInd) -> SInd:
        return self.table.setdefault(term, term)


def _small(c: int | None) -> bool:
    return c is not None and c < MAX_OFFSET


def _negative(c: int | None) -> bool:
    """A small negative constant in two's complement."""
    return c is not None and c > MASK - MAX_OFFSET


def compute_var_stor_index(
    prog: Program, hashes: list[HashFact], *, max_facts: int | None = None
) -> dict[str, set[SInd]]:
    """Least fixpoint of the index inference rules.

    ``max_facts`` bounds the relation size; exceeding it raises
    ``RuntimeError`` (a termination guard, never hit on well-formed SSA).
    """
    intern = _Interner()
    facts: dict[str, set[SInd]] = {}
    work: deque[tuple[str, SInd]] = deque()
    if max_facts is None:
        max_facts = 64 * (len(prog.statements) + 1) ** 2
    total = 0

    def add(var: str, si: SInd) -> None:
        nonlocal total
        s = facts.setdefault(var, set())
        si = intern(si)
        if si not in s:
            s.add(si)
            work.append((var, si))
            total += 1
            if total > max_facts:
                raise RuntimeError("storage index fixpoint exceeded its bound")

    map_by_slot: dict[str, list[HashFact]] = {}
    arr_by_slot: dict[str, list[HashFact]] = {}
    for h in hashes:
        if len(h.args) == 2:
            map_by_slot.setdefault(h.args[1], []).append(h)
        elif len(h.args) == 1:
            arr_by_slot.setdefault(h.args[0], []).append(h)

    adds: dict[str, list[tuple[str, str]]] = {}
    for s in prog.statements.values():
        if s.op == "ADD" and s.defs and len(s.uses) == 2:
            a, b = s.uses
            if a == b:
                continue
            adds.setdefault(a, []).append((b, s.defs))
            adds.setdefault(b, []).append((a, s.defs))

    # Base
    for var, c in prog.const.items():
        d = prog.defining(var)
        if d is not None and d.op == "PHI":
            continue
        add(var, ConstI(c))

    while work:
        pv, si = work.popleft()
        for h in map_by_slot.get(pv, ()):
            add(h.result, MapI(si, h.args[0]))
        for h in arr_by_slot.get(pv, ()):
            add(h.result, ArrayDataStartI(si))
        for other, res in adds.get(pv, ()):
            c = prog.value(other)
            if isinstance(si, ArrayDataStartI):
                if c == 0:
                    add(res, si)
                    continue
                iv = other
                d = prog.defining(other)
                if d is not None and d.op == "MUL":
                    x, y = d.uses
                    if prog.value(y) is not None and prog.value(x) is None:
                        iv = x
                    elif prog.value(x) is not None and prog.value(y) is None:
                        iv = y
                add(res, ArrayAI(si.par, iv))
            elif isinstance(si, (ArrayAI, MapI)) and _small(c):
                add(res, si if c == 0 else OffsI(si, c))
            elif isinstance(si, ArrayAI) and _negative(c):
                # the optimizer's `a[i - 1]`: still an element of the same array
                add(res, ArrayAI(si.par, res))
            elif isinstance(si, OffsI) and _small(c):
                if c == 0:
                    add(res, si)
                elif si.of + c < MAX_OFFSET:
                    add(res, OffsI(si.par, si.of + c))
    return facts


def phi_sources(prog: Program, var: str, cache: dict[str, frozenset[str]] | None = None) -> frozenset[str]:
    """``var`` plus every variable reaching it through chains of PHIs."""
    if cache is not None and var in cache:
        return cache[var]
    seen = {var}
    stack = [var]
    while stack:
        v = stack.pop()
        d = prog.defining(v)
        if d is not None and d.op == "PHI":
            for u in d.uses:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
    out = frozenset(seen)
    if cache is not None:
        cache[var] = out
    return out


def compute_actual_index(prog: Program, var_stor_index: dict[str, set[SInd]]) -> set[SInd]:
    actual: set[SInd] = set()
    cache: dict[str, frozenset[str]] = {}
    for s in prog.stmts_with(*STORAGE_OPS):
        if not s.uses:
            continue
        for sv in phi_sources(prog, s.uses[0], cache):
            actual.update(var_stor_index.get(sv, ()))
    stack = list(actual)
    while stack:
        par = stack.pop().parent()
        if par is not None and par not in actual:
            actual.add(par)
            stack.append(par)
    return actual


def analyze_indexes(prog: Program, hashes: list[HashFact]) -> IndexAnalysis:
    vsi = compute_var_stor_index(prog, hashes)
    return IndexAnalysis(vsi, compute_actual_index(prog, vsi))


def dump_indexes(terms, normalize: bool = False) -> list[str]:
    """Render terms in constructor syntax, sorted.

    With ``normalize`` variable identifiers are replaced by ``_`` and
    duplicates collapse, for comparisons that ignore naming.
    """
    lines = {_render(t, normalize) for t in terms}
    return sorted(lines, key=lambda x: (len(x), x))


def _render(term: SInd, normalize: bool) -> str:
    if isinstance(term, ConstI):
        return str(term)
    if isinstance(term, ArrayDataStartI):
        return f"ArrayDataStartI({_render(term.par, normalize)})"
    if isinstance(term, ArrayAI):
        return f"ArrayAI({_render(term.par, normalize)}, {'_' if normalize else term.iv})"
    if isinstance(term, MapI):
        return f"MapI({_render(term.par, normalize)}, {'_' if normalize else term.kv})"
    if isinstance(term, OffsI):
        return f"OffsI({_render(term.par, normalize)}, {term.of})"
    raise TypeError(term)


def dump_var_stor_index(vsi: dict[str, set[SInd]]) -> list[str]:
    return sorted(f"{v}\t{si}" for v, s in vsi.items() for si in s)
