"""256-bit constant evaluation and SSA constant propagation."""

from __future__ import annotations

from collections import deque

from ..ir import Program

WORD = 1 << 256
MASK = WORD - 1
SIGN = 1 << 255


def to_signed(x: int) -> int:
    return x - WORD if x & SIGN else x


def from_signed(x: int) -> int:
    return x & MASK


def _sdiv(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = to_signed(a), to_signed(b)
    q = abs(sa) // abs(sb)
    return from_signed(-q if (sa < 0) != (sb < 0) else q)


def _smod(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = to_signed(a), to_signed(b)
    r = abs(sa) % abs(sb)
    return from_signed(-r if sa < 0 else r)


def _signextend(b: int, x: int) -> int:
    if b >= 31:
        return x
    bit = 8 * b + 7
    low = (1 << (bit + 1)) - 1
    if x >> bit & 1:
        return (x | (MASK ^ low)) & MASK
    return x & low


def _sar(s: int, x: int) -> int:
    v = to_signed(x)
    if s >= 256:
        return MASK if v < 0 else 0
    return from_signed(v >> s)


# Operands are in EVM pop order: the first element was the stack top.
PURE_OPS = {
    "ADD": lambda a, b: (a + b) & MASK,
    "MUL": lambda a, b: (a * b) & MASK,
    "SUB": lambda a, b: (a - b) & MASK,
    "DIV": lambda a, b: a // b if b else 0,
    "SDIV": _sdiv,
    "MOD": lambda a, b: a % b if b else 0,
    "SMOD": _smod,
    "ADDMOD": lambda a, b, n: (a + b) % n if n else 0,
    "MULMOD": lambda a, b, n: (a * b) % n if n else 0,
    "EXP": lambda a, b: pow(a, b, WORD),
    "SIGNEXTEND": _signextend,
    "LT": lambda a, b: int(a < b),
    "GT": lambda a, b: int(a > b),
    "SLT": lambda a, b: int(to_signed(a) < to_signed(b)),
    "SGT": lambda a, b: int(to_signed(a) > to_signed(b)),
    "EQ": lambda a, b: int(a == b),
    "ISZERO": lambda a: int(a == 0),
    "AND": lambda a, b: a & b,
    "OR": lambda a, b: a | b,
    "XOR": lambda a, b: a ^ b,
    "NOT": lambda a: MASK ^ a,
    "BYTE": lambda i, x: (x >> (8 * (31 - i))) & 0xFF if i < 32 else 0,
    "SHL": lambda s, x: (x << s) & MASK if s < 256 else 0,
    "SHR": lambda s, x: x >> s if s < 256 else 0,
    "SAR": _sar,
}


def evaluate(op: str, args: list[int] | tuple[int, ...]) -> int | None:
    fn = PURE_OPS.get(op)
    if fn is None:
        return None
    return fn(*args)


_TOP = object()  # not yet known
_BOT = object()  # not constant


def fold_constants(program: Program) -> Program:
    """Populate ``program.const`` by optimistic propagation over SSA.

    PHIs fold only when every resolved input agrees.  A variable is assigned
    at most one value: the lattice only descends.
    """
    state: dict[str, object] = {}
    work: deque[str] = deque()
    stmts = list(program.statements.values())

    def lower(var: str, val: object) -> None:
        old = state.get(var, _TOP)
        if old is _BOT or old == val:
            return
        new = val if old is _TOP else _BOT
        if new is not old:
            state[var] = new
            work.append(var)

    for s in stmts:
        if not s.defs:
            continue
        if s.op == "CONST":
            lower(s.defs, s.value)
        elif s.op != "PHI" and s.op not in PURE_OPS:
            lower(s.defs, _BOT)
    for s in stmts:
        if s.defs and (s.op in PURE_OPS or s.op == "PHI") and not s.uses:
            lower(s.defs, _BOT)
    # external uses without a definition are unknown values
    for s in stmts:
        for u in s.uses:
            if u not in program.def_of:
                state[u] = _BOT

    def visit(s) -> None:
        if s.op == "PHI":
            vals = [state.get(u, _TOP) for u in s.uses]
            known = [v for v in vals if v is not _TOP]
            if not known:
                return
            if any(v is _BOT for v in known) or len({v for v in known}) > 1:
                lower(s.defs, _BOT)
            else:
                lower(s.defs, known[0])
            return
        vals = [state.get(u, _TOP) for u in s.uses]
        if any(v is _BOT for v in vals):
            lower(s.defs, _BOT)
        elif all(v is not _TOP for v in vals):
            lower(s.defs, evaluate(s.op, vals))

    for s in stmts:
        if s.defs and (s.op in PURE_OPS or s.op == "PHI"):
            visit(s)
    uses_of = program.uses_of
    while work:
        var = work.popleft()
        for s in uses_of.get(var, ()):
            if s.defs and (s.op in PURE_OPS or s.op == "PHI"):
                visit(s)

    program.const = {v: c for v, c in state.items() if isinstance(c, int) and v in program.def_of}
    return program
