"""Basic blocks and control-flow graph construction.

Jump targets in compiled Solidity are almost always constants pushed by
some earlier block (internal calls push their return address before
jumping into the callee).  The graph is therefore built over *nodes*: a
basic block paired with the jump-destination constants visible on its
entry stack.  Two entries of the same block that carry different return
addresses become different nodes, which keeps every jump resolvable and
keeps SSA values from different call sites apart.

A jump whose target is not a known constant is over-approximated to every
JUMPDEST and the source node is flagged ``imprecise``.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from .disasm import Instruction
from .fold import PURE_OPS, evaluate
from .opcodes import HALTS, TERMINATORS, info

log = logging.getLogger(__name__)

MAX_STACK = 1024
MAX_CONTEXTS_PER_BLOCK = 512
MAX_NODES = 250_000


@dataclass
class BasicBlock:
    start: int
    instructions: list[Instruction]
    fallthrough: int | None = None

    @property
    def last(self) -> Instruction:
        return self.instructions[-1]

    @property
    def end(self) -> int:
        return self.last.pc + self.last.size


@dataclass
class Node:
    id: str
    block: BasicBlock
    key: tuple
    stack: list  # joined abstract entry stack: int constant or None
    succs: list[str] = field(default_factory=list)
    preds: list[str] = field(default_factory=list)
    imprecise: bool = False
    unanalyzable: bool = False

    @property
    def height(self) -> int:
        return len(self.key)


@dataclass
class CFG:
    blocks: dict[int, BasicBlock]
    jumpdests: frozenset[int]
    nodes: dict[str, Node] = field(default_factory=dict)
    entry: str | None = None
    truncated: bool = False

    @property
    def unreachable(self) -> set[int]:
        seen = {n.block.start for n in self.nodes.values()}
        return set(self.blocks) - seen


class StackUnderflow(Exception):
    pass


def split_blocks(instructions: list[Instruction]) -> dict[int, BasicBlock]:
    blocks: dict[int, BasicBlock] = {}
    current: list[Instruction] = []

    def close(next_pc: int | None) -> None:
        if not current:
            return
        last = current[-1]
        ft = None
        if last.op not in TERMINATORS or last.op == "JUMPI":
            ft = next_pc
        blocks[current[0].pc] = BasicBlock(current[0].pc, list(current), ft)
        current.clear()

    for ins in instructions:
        if ins.op == "JUMPDEST" and current:
            close(ins.pc)
        current.append(ins)
        if ins.op in TERMINATORS:
            close(ins.pc + ins.size)
    close(None)
    for b in blocks.values():
        if b.fallthrough is not None and b.fallthrough not in blocks:
            b.fallthrough = None
    return blocks


def abstract_step(ins: Instruction, stack: list) -> None:
    """Apply one instruction to an abstract stack of constants/``None``."""
    op = ins.op
    if op.startswith("PUSH"):
        stack.append(ins.immediate if ins.immediate is not None else 0)
        return
    if op.startswith("DUP"):
        n = int(op[3:])
        if len(stack) < n:
            raise StackUnderflow(ins.pc)
        stack.append(stack[-n])
        return
    if op.startswith("SWAP"):
        n = int(op[4:])
        if len(stack) < n + 1:
            raise StackUnderflow(ins.pc)
        stack[-1], stack[-n - 1] = stack[-n - 1], stack[-1]
        return
    if op == "PC":
        stack.append(ins.pc)
        return
    meta = info(ins.byte)
    if len(stack) < meta.pops:
        raise StackUnderflow(ins.pc)
    args = [stack.pop() for _ in range(meta.pops)]
    if meta.pushes:
        if op in PURE_OPS and all(a is not None for a in args):
            stack.append(evaluate(op, args))
        else:
            stack.append(None)
    if len(stack) > MAX_STACK:
        raise StackUnderflow(ins.pc)


def run_block(block: BasicBlock, stack: list) -> tuple[list, int | None, int | None, set[int], set[int]]:
    """Execute a block abstractly.

    Returns the exit stack (jump operands removed), the jump target (if the
    block ends in a jump), the JUMPI condition, and the exit-stack positions
    known to hold zero on the taken and on the fall-through edge.  The last
    two come from ``DUP x; ISZERO; JUMPI`` style tests, which solc emits
    for try/catch and similar joins; without them the interpretation
    follows infeasible edges with misaligned stacks.
    """
    stack = list(stack)
    syms = list(range(len(stack)))  # value identity, copied by DUP
    fresh = len(stack)
    negated: dict[int, int] = {}  # ISZERO result -> operand
    target = cond = None
    cond_sym = None
    for ins in block.instructions:
        op = ins.op
        if op == "JUMP":
            if not stack:
                raise StackUnderflow(ins.pc)
            target = stack.pop()
            syms.pop()
        elif op == "JUMPI":
            if len(stack) < 2:
                raise StackUnderflow(ins.pc)
            target = stack.pop()
            cond = stack.pop()
            syms.pop()
            cond_sym = syms.pop()
        else:
            arg = syms[-1] if op == "ISZERO" and syms else None
            abstract_step(ins, stack)
            if op.startswith("DUP"):
                syms.append(syms[-int(op[3:])])
            elif op.startswith("SWAP"):
                n = int(op[4:])
                syms[-1], syms[-n - 1] = syms[-n - 1], syms[-1]
            else:
                meta = info(ins.byte)
                if not op.startswith("PUSH") and op != "PC":
                    del syms[len(syms) - meta.pops :]
                if meta.pushes or op.startswith("PUSH") or op == "PC":
                    syms.append(fresh)
                    if arg is not None:
                        negated[fresh] = arg
                    fresh += 1
    zero_taken: set[int] = set()
    zero_fall: set[int] = set()
    if cond_sym is not None:
        zero_fall = {i for i, t in enumerate(syms) if t == cond_sym}
        if cond_sym in negated:
            zero_taken = {i for i, t in enumerate(syms) if t == negated[cond_sym]}
    return stack, target, cond, zero_taken, zero_fall


def _zeroed(stack: list, positions: set[int]) -> list:
    if not positions:
        return stack
    return [0 if i in positions else v for i, v in enumerate(stack)]


def build_cfg(instructions: list[Instruction]) -> CFG:
    """Partition ``instructions`` into blocks and explore nodes from pc 0."""
    blocks = split_blocks(instructions)
    jumpdests = frozenset(
        b.start for b in blocks.values() if b.instructions[0].op == "JUMPDEST"
    )
    cfg = CFG(blocks, jumpdests)
    if 0 not in blocks:
        return cfg

    by_key: dict[tuple[int, tuple], str] = {}
    contexts: dict[int, int] = {}
    queue: deque[str] = deque()

    def keyof(stack: list) -> tuple:
        return tuple(v if v in jumpdests else None for v in stack)

    def reach(start: int, stack: list, src: Node | None) -> None:
        key = keyof(stack)
        nid = by_key.get((start, key))
        if nid is None:
            n = contexts.get(start, 0)
            if n >= MAX_CONTEXTS_PER_BLOCK or len(cfg.nodes) >= MAX_NODES:
                cfg.truncated = True
                if src is not None:
                    src.imprecise = True
                return
            contexts[start] = n + 1
            nid = f"{start:x}" if n == 0 else f"{start:x}_{n}"
            by_key[(start, key)] = nid
            cfg.nodes[nid] = Node(nid, blocks[start], key, list(stack))
            queue.append(nid)
        else:
            node = cfg.nodes[nid]
            joined = [a if a == b else None for a, b in zip(node.stack, stack)]
            if joined != node.stack:
                node.stack = joined
                queue.append(nid)
        if src is not None:
            if nid not in src.succs:
                src.succs.append(nid)
            dst = cfg.nodes[nid]
            if src.id not in dst.preds:
                dst.preds.append(src.id)

    reach(0, [], None)
    cfg.entry = "0"
    while queue:
        node = cfg.nodes[queue.popleft()]
        block = node.block
        try:
            out, target, cond, zero_taken, zero_fall = run_block(block, node.stack)
        except StackUnderflow:
            node.unanalyzable = True
            continue
        last = block.last.op
        if last == "JUMP" or last == "JUMPI":
            if target is None:
                node.imprecise = True
                for d in sorted(jumpdests):
                    reach(d, out, node)
            elif target in jumpdests and (last == "JUMP" or cond != 0):
                reach(target, _zeroed(out, zero_taken), node)
            if last == "JUMPI" and block.fallthrough is not None and not cond:
                # cond is None (unknown) or the constant 0
                reach(block.fallthrough, _zeroed(out, zero_fall), node)
        elif last not in HALTS and block.fallthrough is not None:
            reach(block.fallthrough, out, node)
    if cfg.truncated:
        log.warning("context budget exhausted; CFG is incomplete")
    return cfg
