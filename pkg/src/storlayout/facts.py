"""Tab-separated fact files: the analysis input relations on disk.

Core relations (one file each):

    LOAD      stmt  index_var  result
    STORE     stmt  index_var  value
    ADD/SUB/MUL  stmt  a  b  result
    PHI       stmt  def  use          (one row per operand, in order)
    HASH      stmt  result  arg...    (key first for two-word hashes)
    VarValue  var  0x-hex-word

These are enough for the structure analysis.  Type inference and guard
detection look at every instruction and the control flow, so the exporter
also writes ``Statement``, ``Use``, ``Block``, ``Edge`` and ``Entry``; when
they are present the importer rebuilds the full program from them.
"""

from __future__ import annotations

import os
from pathlib import Path

from .ir import Block, HashFact, Program, Statement
from .memhash import detect_hashes

CORE = ("LOAD", "STORE", "ADD", "SUB", "MUL", "PHI", "HASH", "VarValue")
EXTENDED = ("Statement", "Use", "Block", "Edge", "Entry")
SUFFIX = ".facts"

_ARITY = {
    "LOAD": 3,
    "STORE": 3,
    "ADD": 4,
    "SUB": 4,
    "MUL": 4,
    "PHI": 3,
    "VarValue": 2,
    "Statement": 6,  # stmt op def block pc index
    "Use": 3,  # stmt position var
    "Block": 4,  # block pc imprecise unanalyzable
    "Edge": 2,
    "Entry": 1,
}
_OPS = {"LOAD": "SLOAD", "STORE": "SSTORE", "ADD": "ADD", "SUB": "SUB", "MUL": "MUL"}


class MalformedFact(ValueError):
    def __init__(self, relation: str, line: int, msg: str):
        super().__init__(f"{relation}:{line}: {msg}")
        self.relation = relation
        self.line = line


def word(c: int) -> str:
    return f"{c:#x}"


def parse_word(text: str, relation: str, line: int) -> int:
    if not text.startswith("0x"):
        raise MalformedFact(relation, line, f"not a 0x-prefixed word: {text!r}")
    try:
        c = int(text, 16)
    except ValueError:
        raise MalformedFact(relation, line, f"not a hex word: {text!r}") from None
    if c >> 256:
        raise MalformedFact(relation, line, f"word exceeds 256 bits: {text!r}")
    return c


def export_facts(prog: Program) -> dict[str, list[tuple[str, ...]]]:
    """Return ``relation -> rows``; rows are tuples of strings."""
    rel: dict[str, list[tuple[str, ...]]] = {name: [] for name in CORE + EXTENDED}
    for s in prog.statements.values():
        if s.op == "SLOAD" and s.uses and s.defs:
            rel["LOAD"].append((s.id, s.uses[0], s.defs))
        elif s.op == "SSTORE" and len(s.uses) == 2:
            rel["STORE"].append((s.id, s.uses[0], s.uses[1]))
        elif s.op in ("ADD", "SUB", "MUL") and len(s.uses) == 2 and s.defs:
            rel[s.op].append((s.id, s.uses[0], s.uses[1], s.defs))
        elif s.op == "PHI":
            rel["PHI"].extend((s.id, s.defs, u) for u in s.uses)
    hashes = prog.hashes if prog.hashes is not None else detect_hashes(prog)
    rel["HASH"] = [(h.stmt, h.result, *h.args) for h in hashes]
    rel["VarValue"] = [(v, word(c)) for v, c in prog.const.items()]

    for b in prog.blocks.values():
        rel["Block"].append((b.id, str(b.pc), str(int(b.imprecise)), str(int(b.unanalyzable))))
        rel["Edge"].extend((b.id, t) for t in b.succs)
        for i, sid in enumerate(b.stmts):
            s = prog.statements[sid]
            rel["Statement"].append((s.id, s.op, s.defs or "", b.id, str(s.pc), str(i)))
            rel["Use"].extend((s.id, str(k), u) for k, u in enumerate(s.uses))
    if prog.entry is not None:
        rel["Entry"].append((prog.entry,))
    return {k: sorted(v) for k, v in rel.items()}


def write_facts(prog: Program, directory: str | os.PathLike) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in export_facts(prog).items():
        text = "".join("\t".join(r) + "\n" for r in rows)
        (out / f"{name}{SUFFIX}").write_text(text, encoding="utf-8")
    return out


def read_facts(directory: str | os.PathLike) -> dict[str, str]:
    """Load relation texts from ``directory``; files may carry a ``.facts`` suffix."""
    d = Path(directory)
    texts = {}
    for name in CORE + EXTENDED:
        for candidate in (d / f"{name}{SUFFIX}", d / name):
            if candidate.is_file():
                texts[name] = candidate.read_text(encoding="utf-8")
                break
    return texts


def _rows(name: str, text: str):
    arity = _ARITY.get(name)
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        # tolerate rows that repeat the relation name in front
        if cols[0] == name and (arity is None or len(cols) == arity + 1):
            cols = cols[1:]
        if arity is not None and len(cols) != arity:
            raise MalformedFact(name, n, f"expected {arity} columns, got {len(cols)}")
        if name == "HASH" and len(cols) not in (3, 4):
            raise MalformedFact(name, n, f"expected 3 or 4 columns, got {len(cols)}")
        if any(c == "" for i, c in enumerate(cols) if not (name == "Statement" and i == 2)):
            raise MalformedFact(name, n, "empty column")
        yield n, cols


def import_facts(relations: dict[str, str] | str | os.PathLike) -> Program:
    """Build a program from relation texts (or a directory of fact files)."""
    if not isinstance(relations, dict):
        relations = read_facts(relations)
    parsed = {name: list(_rows(name, text)) for name, text in relations.items() if name in _ARITY or name == "HASH"}
    prog = Program()
    for n, (var, c) in parsed.get("VarValue", []):
        prog.const[var] = parse_word(c, "VarValue", n)

    if parsed.get("Statement"):
        _import_full(prog, parsed)
    else:
        _import_core(prog, parsed)

    hashes = []
    for n, cols in parsed.get("HASH", []):
        hashes.append(HashFact(cols[0], cols[1], tuple(cols[2:])))
    prog.hashes = sorted(hashes, key=lambda h: h.stmt)
    prog.invalidate()
    return prog


def _import_full(prog: Program, parsed) -> None:
    for n, (bid, pc, imp, una) in parsed.get("Block", []):
        try:
            prog.add_block(Block(bid, int(pc), imprecise=imp == "1", unanalyzable=una == "1"))
        except ValueError:
            raise MalformedFact("Block", n, f"bad pc {pc!r}") from None
    uses: dict[str, dict[int, str]] = {}
    for n, (sid, k, var) in parsed.get("Use", []):
        if not k.isdigit():
            raise MalformedFact("Use", n, f"bad position {k!r}")
        uses.setdefault(sid, {})[int(k)] = var
    placed = []
    for n, (sid, op, defs, bid, pc, idx) in parsed["Statement"]:
        if bid not in prog.blocks:
            raise MalformedFact("Statement", n, f"unknown block {bid!r}")
        try:
            pc_i, idx_i = int(pc), int(idx)
        except ValueError:
            raise MalformedFact("Statement", n, "pc and index must be integers") from None
        u = uses.get(sid, {})
        if sorted(u) != list(range(len(u))):
            raise MalformedFact("Statement", n, f"gaps in operands of {sid}")
        s = Statement(sid, op, tuple(u[i] for i in range(len(u))), defs or None, bid, pc_i)
        if op == "CONST":
            s.value = prog.const.get(defs)
        prog.statements[sid] = s
        placed.append((bid, idx_i, sid))
    for bid, _, sid in sorted(placed):
        prog.blocks[bid].stmts.append(sid)
    for n, (src, dst) in parsed.get("Edge", []):
        if src not in prog.blocks or dst not in prog.blocks:
            raise MalformedFact("Edge", n, f"unknown block in {src}->{dst}")
        prog.blocks[src].succs.append(dst)
        prog.blocks[dst].preds.append(src)
    for b in prog.blocks.values():
        b.succs.sort()
        b.preds.sort()
    for n, (bid,) in parsed.get("Entry", []):
        prog.entry = bid


def _import_core(prog: Program, parsed) -> None:
    """Only the core relations: one synthetic block, no control flow."""
    prog.add_block(Block("facts", 0))
    prog.entry = "facts"
    for name, op in _OPS.items():
        for n, cols in parsed.get(name, []):
            if name == "LOAD":
                sid, iv, r = cols
                prog.add(Statement(sid, op, (iv,), r, "facts"))
            elif name == "STORE":
                sid, iv, u = cols
                prog.add(Statement(sid, op, (iv, u), None, "facts"))
            else:
                sid, a, b, r = cols
                prog.add(Statement(sid, op, (a, b), r, "facts"))
    phis: dict[str, tuple[str, list[str]]] = {}
    for n, (sid, d, u) in parsed.get("PHI", []):
        if sid in phis and phis[sid][0] != d:
            raise MalformedFact("PHI", n, f"{sid} defines two variables")
        phis.setdefault(sid, (d, []))[1].append(u)
    for sid, (d, us) in phis.items():
        prog.add(Statement(sid, "PHI", tuple(us), d, "facts"))
    defined = {s.defs for s in prog.statements.values()}
    for var, c in prog.const.items():
        if var not in defined:
            prog.add(Statement(f"const_{var}", "CONST", (), var, "facts", value=c))
