"""Stack-to-register lifting.

Every stack slot becomes an SSA variable.  Blocks are first lifted in
isolation against placeholder inputs; the placeholders are then bound to
the predecessor's outputs (single predecessor) or to a PHI (merge point).
PHIs whose inputs all agree are removed afterwards.
"""

from __future__ import annotations

from .cfg import CFG, Node
from .opcodes import info
from ..ir import Block, Program, Statement


def _suffix(node: Node) -> str:
    _, sep, ctx = node.id.partition("_")
    return f"_{ctx}" if sep else ""


def _lift_node(node: Node):
    """Lift one node against placeholder inputs.

    Returns ``(records, out)`` where records are
    ``(sid, op, uses, defs, pc, value)`` with uses possibly placeholders.
    """
    sfx = _suffix(node)
    stack: list = [("in", i) for i in range(node.height)]
    records = []
    for ins in node.block.instructions:
        op = ins.op
        sid = f"{ins.pc:#x}{sfx}"
        var = f"v{ins.pc:x}{sfx}"
        if op.startswith("PUSH"):
            value = ins.immediate if ins.immediate is not None else 0
            records.append((sid, "CONST", (), var, ins.pc, value))
            stack.append(var)
        elif op == "PC":
            records.append((sid, "CONST", (), var, ins.pc, ins.pc))
            stack.append(var)
        elif op.startswith("DUP"):
            stack.append(stack[-int(op[3:])])
        elif op.startswith("SWAP"):
            n = int(op[4:])
            stack[-1], stack[-n - 1] = stack[-n - 1], stack[-1]
        elif op == "POP":
            stack.pop()
        elif op == "JUMPDEST":
            continue
        elif op == "JUMP":
            records.append((sid, op, (stack.pop(),), None, ins.pc, None))
        elif op == "JUMPI":
            target = stack.pop()
            cond = stack.pop()
            records.append((sid, op, (target, cond), None, ins.pc, None))
        else:
            meta = info(ins.byte)
            args = tuple(stack.pop() for _ in range(meta.pops))
            d = var if meta.pushes else None
            records.append((sid, op, args, d, ins.pc, None))
            if d:
                stack.append(d)
    return records, stack


def lift_to_ssa(cfg: CFG) -> Program:
    prog = Program(entry=cfg.entry)
    lifted: dict[str, tuple[list, list]] = {}
    for nid, node in cfg.nodes.items():
        prog.add_block(
            Block(
                nid,
                node.block.start,
                succs=list(node.succs),
                preds=list(node.preds),
                imprecise=node.imprecise,
                unanalyzable=node.unanalyzable,
            )
        )
        if not node.unanalyzable:
            lifted[nid] = _lift_node(node)

    # drop edges touching unanalyzable nodes
    for b in prog.blocks.values():
        b.succs = [s for s in b.succs if s in lifted]
        b.preds = [p for p in b.preds if p in lifted]

    phis: dict[str, list[str]] = {}
    phi_home: dict[str, tuple[str, int]] = {}
    resolved: dict[tuple[str, int], str] = {}

    def input_var(nid: str, slot: int) -> str:
        trail = []
        while True:
            key = (nid, slot)
            if key in resolved:
                v = resolved[key]
                break
            block = prog.blocks[nid]
            if len(block.preds) != 1:
                v = f"phi_{nid}_{slot}"
                phi_home[v] = key
                phis.setdefault(v, [])
                resolved[key] = v
                break
            trail.append(key)
            pred = block.preds[0]
            ref = lifted[pred][1][slot]
            if isinstance(ref, str):
                v = ref
                break
            nid, slot = pred, ref[1]
        for key in trail:
            resolved[key] = v
        return v

    def bind(ref, nid: str) -> str:
        return ref if isinstance(ref, str) else input_var(nid, ref[1])

    body: dict[str, list[Statement]] = {}
    for nid, (records, _out) in lifted.items():
        stmts = []
        for sid, op, uses, defs, pc, value in records:
            stmts.append(
                Statement(sid, op, tuple(bind(u, nid) for u in uses), defs, nid, pc, value)
            )
        body[nid] = stmts

    # fill PHI operands; new PHIs may appear while resolving
    done: set[str] = set()
    while len(done) < len(phis):
        for v in [p for p in phis if p not in done]:
            done.add(v)
            nid, slot = phi_home[v]
            ops = []
            for pred in prog.blocks[nid].preds:
                ops.append(bind(lifted[pred][1][slot], pred))
            phis[v] = ops

    repl = _simplify_phis(phis)

    def find(v: str) -> str:
        while v in repl:
            v = repl[v]
        return v

    heads: dict[str, list[tuple[int, str]]] = {}
    for v, (home, slot) in phi_home.items():
        if v not in repl:
            heads.setdefault(home, []).append((slot, v))
    for nid in lifted:
        block = prog.blocks[nid]
        for slot, v in sorted(heads.get(nid, ())):
            prog.add(
                Statement(f"{nid}_phi{slot}", "PHI", tuple(find(u) for u in phis[v]), v, nid, block.pc)
            )
        for s in body[nid]:
            s.uses = tuple(find(u) for u in s.uses)
            prog.add(s)
    return prog


def _simplify_phis(phis: dict[str, list[str]]) -> dict[str, str]:
    """Map each trivial PHI to the single value it merges."""
    repl: dict[str, str] = {}

    def find(v: str) -> str:
        root = v
        while root in repl:
            root = repl[root]
        while v in repl and repl[v] != root:
            repl[v], v = root, repl[v]
        return root

    changed = True
    while changed:
        changed = False
        for v, ops in phis.items():
            if v in repl:
                continue
            distinct = {find(o) for o in ops} - {v}
            if len(distinct) == 1:
                repl[v] = distinct.pop()
                changed = True
    return repl
