"""Reentrancy-guard detection on top of the recovered storage model.

A guard is a storage leaf that is
  1. loaded and compared against a constant, gating a branch whose other
     side reverts,
  2. then set to a "locked" constant at a point dominated by that check,
  3. and later reset to a different "unlocked" constant.
The compared constant must be one of the two.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import networkx as nx

from .constructs import Leaf, Variable
from .ir import Program
from .packing import AccessProfile, access_profiles, low_mask_width

_EXITS = ("RETURN", "STOP", "SELFDESTRUCT")
_FAILS = ("REVERT", "INVALID")


@dataclass(frozen=True)
class GuardReport:
    guard_var: Leaf
    check_stmt: str
    lock_stmt: str
    unlock_stmt: str
    locked_value: int
    unlocked_value: int

    def to_json(self) -> dict:
        return {
            "guardVar": str(self.guard_var),
            "checkStmt": self.check_stmt,
            "lockStmt": self.lock_stmt,
            "unlockStmt": self.unlock_stmt,
            "lockedValue": hex(self.locked_value),
            "unlockedValue": hex(self.unlocked_value),
        }


class _Flow:
    def __init__(self, prog: Program):
        self.prog = prog
        g = nx.DiGraph()
        g.add_nodes_from(prog.blocks)
        for b in prog.blocks.values():
            g.add_edges_from((b.id, s) for s in b.succs)
        self.graph = g
        self._desc: dict[str, set[str]] = {}
        self._reverts: dict[str, bool] = {}

    def descendants(self, block: str) -> set[str]:
        if block not in self._desc:
            self._desc[block] = nx.descendants(self.graph, block)
        return self._desc[block]

    @cached_property
    def idom(self) -> dict[str, str]:
        if self.prog.entry is None:
            return {}
        return nx.immediate_dominators(self.graph, self.prog.entry)

    def dominates(self, a: str, b: str) -> bool:
        idom = self.idom
        if b not in idom:
            return False
        while True:
            if a == b:
                return True
            up = idom[b]
            if up == b:
                return False
            b = up

    def reverts(self, block: str) -> bool:
        """Every path from ``block`` fails without touching storage or returning."""
        if block not in self._reverts:
            self._reverts[block] = self._check_reverts(block)
        return self._reverts[block]

    def _check_reverts(self, block: str) -> bool:
        failed = False
        for bid in self.descendants(block) | {block}:
            for sid in self.prog.blocks[bid].stmts:
                op = self.prog.statements[sid].op
                if op in _EXITS or op == "SSTORE":
                    return False
                failed |= op in _FAILS
        return failed

    def after(self, sid: str) -> set[str]:
        """Statements that may execute after ``sid``."""
        s = self.prog.statements[sid]
        block = self.prog.blocks[s.block]
        out = set(block.stmts[self.prog.position[sid] + 1 :])
        for bid in self.descendants(block.id):
            out.update(self.prog.blocks[bid].stmts)
        return out


def _compared_constants(prog: Program, value: str, width: int) -> list[tuple[int, str]]:
    """``(constant, jumpi id)`` for each branch deciding on ``value == constant``."""
    found = []
    seen = set()
    stack: list[tuple[str, int | None]] = [(value, None)]
    while stack:
        x, c = stack.pop()
        if (x, c) in seen:
            continue
        seen.add((x, c))
        for s in prog.uses_of.get(x, ()):
            if s.op == "PHI":
                stack.append((s.defs, c))
            elif s.op == "JUMPI" and c is not None and len(s.uses) > 1 and s.uses[1] == x:
                found.append((c, s.id))
            elif s.op == "ISZERO":
                stack.append((s.defs, 0 if c is None else c))
            elif s.op == "EQ" and c is None:
                other = s.uses[1] if s.uses[0] == x else s.uses[0]
                k = prog.value(other)
                if k is not None:
                    stack.append((s.defs, k))
            elif s.op == "AND" and c is None:
                other = s.uses[1] if s.uses[0] == x else s.uses[0]
                w = low_mask_width(prog.value(other))
                if w is not None and w >= width:
                    stack.append((s.defs, None))
    return found


def _stored_constant(prog: Program, sid: str, prof: AccessProfile) -> int | None:
    if isinstance(prof.var, Variable) and prof.width == 32:
        return prog.value(prog.statements[sid].uses[1])
    consts = set()
    for ins in prof.writes.get(sid, ()):
        if ins.value is None:
            consts.add(0)  # field cleared
        else:
            consts.add(prog.value(ins.value))
    if len(consts) == 1:
        return consts.pop()
    return None


def detect_guards(
    prog: Program,
    stmt_to_var: dict[str, set[Leaf]],
    profiles: dict[Leaf, AccessProfile] | None = None,
) -> set[GuardReport]:
    """One report per guard leaf, using its earliest check/lock/unlock."""
    if profiles is None:
        profiles = access_profiles(prog, stmt_to_var)
    flow = _Flow(prog)
    reports = set()
    for leaf, prof in sorted(profiles.items(), key=lambda kv: str(kv[0])):
        stores = {}
        for sid in prof.writes:
            c = _stored_constant(prog, sid, prof)
            if c is not None:
                stores[sid] = c
        if len(set(stores.values())) < 2:
            continue
        best = None
        for load_id, exs in sorted(prof.reads.items()):
            for e in exs:
                for const, jumpi in _compared_constants(prog, e.value, e.high - e.low + 1):
                    jblock = prog.blocks[prog.statements[jumpi].block]
                    if not any(flow.reverts(t) for t in jblock.succs):
                        continue
                    for lock_id, locked in sorted(stores.items()):
                        lblock = prog.statements[lock_id].block
                        if lblock == jblock.id or not flow.dominates(jblock.id, lblock):
                            continue
                        later = flow.after(lock_id)
                        for unlock_id, unlocked in sorted(stores.items()):
                            if unlocked == locked or unlock_id not in later:
                                continue
                            if const not in (locked, unlocked):
                                continue
                            cand = GuardReport(leaf, load_id, lock_id, unlock_id, locked, unlocked)
                            key = (_pc(prog, load_id), _pc(prog, lock_id), _pc(prog, unlock_id))
                            if best is None or key < best[0]:
                                best = (key, cand)
        if best is not None:
            reports.add(best[1])
    return reports


def _pc(prog: Program, sid: str) -> int:
    return prog.statements[sid].pc
