"""Byte-range analysis of slot reads and writes.

A read is an SLOAD followed by a right shift (``SHR`` or ``DIV`` by a
power of 256) and a width mask, or a left shift that discards the high
bytes.  A write is the read-modify-write idiom
``SSTORE(OR(AND(SLOAD(p), clear), inserted))``.  Every access yields the
byte interval it touches and the variable carrying the value itself, which
the type inference consumes.  Anything unrecognized counts as full-width.
"""

from __future__ import annotations

from dataclasses import dataclass

from .constructs import Leaf, PackedVariable, StorageConstruct, Variable
from .evm.fold import MASK
from .ir import Program, Statement

FULL = (0, 31)


@dataclass(frozen=True)
class Extraction:
    """A value read out of bytes ``low..high`` of a loaded slot."""

    low: int
    high: int
    value: str
    left_aligned: bool = False  # value was moved to the high-order bytes


@dataclass(frozen=True)
class Insertion:
    """A value written into bytes ``low..high``; ``None`` interval = neutral (zero store)."""

    interval: tuple[int, int] | None
    value: str | None
    right_aligned_source: bool = False  # value was shifted down from the high bytes


def byte_runs(c: int) -> list[tuple[int, int]]:
    """Maximal runs of 0xff bytes in ``c``; ``None`` if a byte is partial."""
    runs = []
    start = None
    for i in range(32):
        b = (c >> (8 * i)) & 0xFF
        if b not in (0, 0xFF):
            return None  # type: ignore[return-value]
        if b == 0xFF and start is None:
            start = i
        elif b == 0 and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, 31))
    return runs


def low_mask_width(c: int | None) -> int | None:
    """Byte width ``w`` if ``c == 2**(8w) - 1`` for ``0 < w < 32``."""
    if c is None or c == 0 or c == MASK:
        return None
    if c & (c + 1):
        return None
    bits = c.bit_length()
    return bits // 8 if bits % 8 == 0 else None


def power_of_256(c: int | None) -> int | None:
    if c is None or c == 0 or c & (c - 1):
        return None
    bits = c.bit_length() - 1
    return bits // 8 if bits % 8 == 0 and bits < 256 else None


def clear_interval(c: int | None) -> tuple[int, int] | None:
    """Zero-byte interval of a clear mask (all ones except one contiguous run)."""
    if c is None:
        return None
    runs = byte_runs(MASK ^ c)
    if runs and len(runs) == 1 and runs[0] != FULL:
        return runs[0]
    return None


def _other(s: Statement, var: str) -> str | None:
    if len(s.uses) != 2:
        return None
    a, b = s.uses
    if a == var and b != var:
        return b
    if b == var and a != var:
        return a
    return None


def is_load_result(prog: Program, var: str) -> bool:
    seen = set()
    stack = [var]
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        d = prog.defining(v)
        if d is None:
            return False
        if d.op == "SLOAD":
            continue
        if d.op == "PHI":
            stack.extend(d.uses)
            continue
        return False
    return True


def _same_slot(prog: Program, a: str, b: str) -> bool:
    if a == b:
        return True
    ca = prog.value(a)
    return ca is not None and ca == prog.value(b)


def _feeds_store(prog: Program, var: str, slot: str) -> bool:
    """``var`` reaches the value of an SSTORE to ``slot`` through ORs only."""
    stack, seen = [var], set()
    while stack:
        v = stack.pop()
        if v in seen or len(seen) > 16:
            continue
        seen.add(v)
        for s in prog.uses_of.get(v, ()):
            if s.op == "SSTORE" and s.uses[1] == v and _same_slot(prog, s.uses[0], slot):
                return True
            if s.op == "OR":
                stack.append(s.defs)
    return False


def read_extractions(prog: Program, load: Statement) -> list[Extraction]:
    out: dict[tuple, Extraction] = {}

    def emit(e: Extraction) -> None:
        out.setdefault((e.low, e.high, e.value), e)

    seen: set[tuple[str, int]] = set()
    stack = [(load.defs, 0)]
    while stack:
        x, shift = stack.pop()
        if (x, shift) in seen or x is None:
            continue
        seen.add((x, shift))
        for s in prog.uses_of.get(x, ()):
            op = s.op
            if op == "PHI":
                stack.append((s.defs, shift))
                continue
            if op == "AND":
                other = _other(s, x)
                c = prog.value(other) if other else None
                if shift == 0 and c is not None and _feeds_store(prog, s.defs, load.uses[0]):
                    continue  # read-modify-write of another field
                w = low_mask_width(c)
                if w is not None:
                    emit(Extraction(shift, min(31, shift + w - 1), s.defs))
                    continue
                if shift == 0 and clear_interval(c) is not None:
                    continue  # read-modify-write of another field
                runs = byte_runs(c) if c is not None else None
                if runs and len(runs) == 1:
                    lo, hi = runs[0]
                    if hi + shift <= 31:
                        emit(Extraction(lo + shift, hi + shift, s.defs, hi + shift == 31 and lo > 0))
                        continue
            elif op in ("DIV", "SHR"):
                if op == "DIV" and s.uses[0] == x:
                    k = power_of_256(prog.value(s.uses[1]))
                elif op == "SHR" and s.uses[1] == x:
                    amount = prog.value(s.uses[0])
                    k = amount // 8 if amount is not None and amount % 8 == 0 and amount < 256 else None
                else:
                    k = None
                if k is not None and shift + k <= 31:
                    stack.append((s.defs, shift + k))
                    continue
            elif op in ("SHL", "MUL"):
                if op == "SHL" and s.uses[1] == x:
                    amount = prog.value(s.uses[0])
                    m = amount // 8 if amount is not None and amount % 8 == 0 and amount < 256 else None
                elif op == "MUL":
                    other = _other(s, x)
                    m = power_of_256(prog.value(other)) if other else None
                else:
                    m = None
                if m is not None and m > 0:
                    hi = min(31, shift + 31 - m)
                    emit(Extraction(shift, hi, s.defs, True))
                    continue
            elif op == "SIGNEXTEND" and s.uses[1] == x:
                b = prog.value(s.uses[0])
                if b is not None and b < 31:
                    emit(Extraction(shift, min(31, shift + b), s.defs))
                    continue
            emit(Extraction(shift, 31, x))
    return sorted(out.values(), key=lambda e: (e.low, e.high, e.value))


def _or_terms(prog: Program, var: str, depth: int = 0) -> list[str]:
    d = prog.defining(var)
    if d is not None and d.op == "OR" and depth < 8:
        return _or_terms(prog, d.uses[0], depth + 1) + _or_terms(prog, d.uses[1], depth + 1)
    return [var]


def _clear_term(prog: Program, var: str) -> tuple[int, int] | None:
    d = prog.defining(var)
    if d is None or d.op != "AND":
        return None
    for a, b in (d.uses, d.uses[::-1]):
        iv = clear_interval(prog.value(b))
        if iv is not None and is_load_result(prog, a):
            return iv
    return None


def _peel(prog: Program, var: str, low: int, width: int) -> tuple[str, bool]:
    """Strip the shift/mask used to position an inserted value."""
    for _ in range(6):
        d = prog.defining(var)
        if d is None:
            break
        if d.op in ("MUL", "AND") and prog.value(var) is None:
            a, b = d.uses
            ca, cb = prog.value(a), prog.value(b)
            if d.op == "MUL" and power_of_256(cb) == low:
                var = a
                continue
            if d.op == "MUL" and power_of_256(ca) == low:
                var = b
                continue
            if d.op == "AND" and cb is not None and ca is None:
                var = a
                continue
            if d.op == "AND" and ca is not None and cb is None:
                var = b
                continue
        if d.op == "SHL" and prog.value(d.uses[0]) == 8 * low:
            var = d.uses[1]
            continue
        break
    d = prog.defining(var)
    if d is not None and width < 32:
        down = 32 - width
        if d.op == "SHR" and prog.value(d.uses[0]) == 8 * down:
            return d.uses[1], True
        if d.op == "DIV" and power_of_256(prog.value(d.uses[1])) == down:
            return d.uses[0], True
    return var, False


def _term_interval(prog: Program, var: str, depth: int = 0) -> tuple[int, int] | None:
    """Byte range an OR-term occupies, from its shift and mask."""
    c = prog.value(var)
    if c is not None:
        runs = byte_runs(c)
        if runs is not None and len(runs) <= 1:
            return runs[0] if runs else None
        return None
    d = prog.defining(var)
    if d is None:
        return None
    if d.op in ("MUL", "SHL"):
        if d.op == "MUL":
            k = power_of_256(prog.value(d.uses[1])) if prog.value(d.uses[0]) is None else power_of_256(prog.value(d.uses[0]))
            inner = d.uses[0] if prog.value(d.uses[0]) is None else d.uses[1]
        else:
            amount = prog.value(d.uses[0])
            k = amount // 8 if amount is not None and amount % 8 == 0 else None
            inner = d.uses[1]
        if k is None:
            return None
        di = prog.defining(inner)
        if di is not None and di.op == "AND":
            for a, b in (di.uses, di.uses[::-1]):
                w = low_mask_width(prog.value(b))
                if w is not None:
                    return (k, min(31, k + w - 1))
        return (k, 31) if 0 < k < 32 else None  # unmasked: the top field
    if d.op == "AND" and depth < 6:
        for a, b in (d.uses, d.uses[::-1]):
            c = prog.value(b)
            runs = byte_runs(c) if c is not None else None
            if runs and len(runs) == 1 and runs[0] != FULL:
                inner = _term_interval(prog, a, depth + 1)
                if inner is None:
                    return runs[0]
                lo, hi = max(inner[0], runs[0][0]), min(inner[1], runs[0][1])
                return (lo, hi) if lo <= hi else None
    return None


def write_insertions(prog: Program, store: Statement) -> list[Insertion]:
    u = store.uses[1]
    c = prog.value(u)
    if c == 0:
        return [Insertion(None, u)]
    if c is not None:
        return [Insertion(FULL, u)]
    d = prog.defining(u)
    if d is None:
        return [Insertion(FULL, u)]
    if d.op == "AND":
        iv = _clear_term(prog, u)
        if iv is not None:
            return [Insertion(iv, None)]  # field cleared (delete)
        return [Insertion(FULL, u)]
    if d.op != "OR":
        return [Insertion(FULL, u)]
    terms = _or_terms(prog, u)
    clears = [(t, _clear_term(prog, t)) for t in terms]
    clears = [(t, iv) for t, iv in clears if iv is not None]
    if not clears:
        return _whole_word(prog, u, terms)
    if len(clears) != 1:
        return [Insertion(FULL, u)]
    clear_var, (lo, hi) = clears[0]
    others = [t for t in terms if t != clear_var and prog.value(t) != 0]
    if not others:
        return [Insertion((lo, hi), None)]  # the cleared bytes stay zero
    if len(others) == 1:
        value, right = _peel(prog, others[0], lo, hi - lo + 1)
        return [Insertion((lo, hi), value, right)]
    out = []
    covered = set()
    for t in others:
        iv = _term_interval(prog, t)
        if iv is None or iv[0] < lo or iv[1] > hi:
            return [Insertion(FULL, u)]
        covered.update(range(iv[0], iv[1] + 1))
        value, right = _peel(prog, t, iv[0], iv[1] - iv[0] + 1)
        out.append(Insertion(iv, value, right))
    return out


def _whole_word(prog: Program, u: str, terms: list[str]) -> list[Insertion]:
    """A word assembled from disjoint fields and stored without reading
    the slot first (the optimizer's whole-struct write)."""
    ivs = [_term_interval(prog, t) for t in terms]
    if len(terms) < 2 or None in ivs or all(prog.value(t) is not None for t in terms):
        return [Insertion(FULL, u)]
    used: set[int] = set()
    for lo, hi in ivs:
        span = set(range(lo, hi + 1))
        if used & span:
            return [Insertion(FULL, u)]
        used |= span
    out = []
    for t, (lo, hi) in zip(terms, ivs):
        if prog.value(t) is not None:
            out.append(Insertion((lo, hi), t))
            continue
        value, right = _peel(prog, t, lo, hi - lo + 1)
        out.append(Insertion((lo, hi), value, right))
    return out


@dataclass
class AccessProfile:
    """All byte-level accesses of one Variable leaf."""

    var: StorageConstruct
    reads: dict[str, list[Extraction]]
    writes: dict[str, list[Insertion]]

    def intervals(self) -> set[tuple[int, int]]:
        return self.field_intervals() | self.cleared_intervals()

    def field_intervals(self) -> set[tuple[int, int]]:
        """Ranges read, or written with a value."""
        out = set()
        for exs in self.reads.values():
            out.update((e.low, e.high) for e in exs)
        for ins in self.writes.values():
            out.update(i.interval for i in ins if i.interval is not None and i.value is not None)
        return out

    def cleared_intervals(self) -> set[tuple[int, int]]:
        """Ranges only zeroed; a delete may span several fields."""
        out = set()
        for ins in self.writes.values():
            out.update(i.interval for i in ins if i.interval is not None and i.value is None)
        return out

    @property
    def width(self) -> int:
        """Byte width of the value: the leaf span, narrowed for a lone low-aligned interval."""
        span = self.var.high - self.var.low + 1
        ivs = self.field_intervals() or self.cleared_intervals()
        if isinstance(self.var, Variable) and len(ivs) == 1:
            lo, hi = next(iter(ivs))
            if lo == 0:
                return hi + 1
        return span


def access_profiles(prog: Program, stmt_to_var: dict[str, set[Leaf]]) -> dict[Leaf, AccessProfile]:
    profiles: dict[Leaf, AccessProfile] = {}
    reads_cache: dict[str, list[Extraction]] = {}
    writes_cache: dict[str, list[Insertion]] = {}
    for sid, vars_ in stmt_to_var.items():
        s = prog.statements[sid]
        for v in vars_:
            p = profiles.setdefault(v, AccessProfile(v, {}, {}))
            if s.op == "SLOAD":
                if sid not in reads_cache:
                    reads_cache[sid] = read_extractions(prog, s)
                p.reads[sid] = reads_cache[sid]
            else:
                if sid not in writes_cache:
                    writes_cache[sid] = write_insertions(prog, s)
                p.writes[sid] = writes_cache[sid]
    return profiles


def choose_partition(
    intervals: set[tuple[int, int]], cleared: set[tuple[int, int]] = frozenset()
) -> list[tuple[int, int]] | None:
    """Disjoint byte ranges if the accesses agree on one, else ``None``.

    A single interval starting at byte 0 is not a partition: the slot holds
    one narrow value, which stays a Variable whose width the profile records.
    ``cleared`` ranges must not cut through a field but do not make fields,
    unless nothing else is known.
    """
    if not intervals:
        intervals, cleared = set(cleared), set()
    if not intervals or FULL in intervals:
        return None
    if len(intervals) == 1 and min(intervals)[0] == 0:
        return None
    ivs = sorted(intervals)
    for (a_lo, a_hi), (b_lo, b_hi) in zip(ivs, ivs[1:]):
        if b_lo <= a_hi:
            return None
    for c_lo, c_hi in cleared:
        if any(lo < c_lo <= hi or lo <= c_hi < hi for lo, hi in ivs):
            return None
    return ivs


def partition_packed(
    prog: Program,
    constructs: set[StorageConstruct],
    stmt_to_var: dict[str, set[Leaf]],
) -> tuple[set[StorageConstruct], dict[str, set[Leaf]], dict[Leaf, AccessProfile]]:
    """Split Variables into PackedVariables where every access agrees.

    Returns the new construct set, the statement mapping re-targeted at the
    new leaves, and per-leaf access profiles.  Already-packed inputs pass
    through unchanged, so the operation is idempotent.
    """
    base_profiles = access_profiles(prog, stmt_to_var)
    out = set(constructs)
    replaced: dict[Leaf, list[PackedVariable]] = {}
    for leaf, prof in base_profiles.items():
        if not isinstance(leaf, Variable):
            continue
        parts = choose_partition(prof.field_intervals(), prof.cleared_intervals())
        if parts is None:
            continue
        pvars = [PackedVariable(leaf.par, lo, hi) for lo, hi in parts]
        replaced[leaf] = pvars
        out.discard(leaf)
        out.update(pvars)

    new_map: dict[str, set[Leaf]] = {}
    for sid, vars_ in stmt_to_var.items():
        targets: set[Leaf] = set()
        for v in vars_:
            if v not in replaced:
                targets.add(v)
                continue
            prof = base_profiles[v]
            if sid in prof.reads:
                spans = {(e.low, e.high) for e in prof.reads[sid]}
            else:
                spans = {i.interval for i in prof.writes[sid]}
            for pv in replaced[v]:
                if (pv.low, pv.high) in spans or None in spans:
                    targets.add(pv)
        if targets:
            new_map[sid] = targets

    profiles: dict[Leaf, AccessProfile] = {}
    for leaf, prof in base_profiles.items():
        if leaf not in replaced:
            profiles[leaf] = prof
            continue
        for pv in replaced[leaf]:
            span = (pv.low, pv.high)
            reads = {
                sid: [e for e in exs if (e.low, e.high) == span]
                for sid, exs in prof.reads.items()
            }
            writes = {
                sid: [i for i in ins if i.interval == span or i.interval is None]
                for sid, ins in prof.writes.items()
            }
            profiles[pv] = AccessProfile(
                pv, {k: v for k, v in reads.items() if v}, {k: v for k, v in writes.items() if v}
            )
    return out, new_map, profiles
