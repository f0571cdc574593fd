"""Shared test utilities: fixture loading and hand-built IR."""

import json
from pathlib import Path

from storlayout.ir import Block, Program, Statement

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = sorted((FIXTURES / "corpus").glob("*.json"))
LIBRARY = sorted((FIXTURES / "library").glob("*.json"))


def load_fixture(name: str, group: str = "corpus") -> dict:
    return json.loads((FIXTURES / group / f"{name}.json").read_text())


def corpus(tag: str | None = None) -> list[dict]:
    docs = [json.loads(p.read_text()) for p in CORPUS]
    return [d for d in docs if tag is None or tag in d["tags"]]


def build_ir(text: str, consts: dict[str, int] | None = None) -> Program:
    """One statement per line: ``[def =] OP arg...``; all in block ``b0``.

    ``x = CONST 0x20`` defines a constant.
    """
    prog = Program()
    prog.add_block(Block("b0", 0))
    prog.entry = "b0"
    for n, line in enumerate(l.strip() for l in text.strip().splitlines()):
        lhs, _, rhs = line.rpartition("=")
        parts = rhs.split()
        op, args = parts[0], tuple(parts[1:])
        d = lhs.strip() or None
        if op == "CONST":
            prog.add(Statement(f"s{n}", "CONST", (), d, "b0", n, int(args[0], 0)))
            prog.const[d] = int(args[0], 0)
        else:
            prog.add(Statement(f"s{n}", op, args, d, "b0", n))
    prog.const.update(consts or {})
    prog.invalidate()
    return prog
