"""Value-type inference for storage leaves.

Evidence is the set of operation kinds applied to a leaf's value, collected
forward from every read and around every write.  Types are then chosen by
elimination over what each Solidity value type supports, with the width
fixed by the packing analysis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .constructs import Leaf, Mapping, PackedVariable, StorageConstruct, translate
from .indexes import STORAGE_OPS, MapI, SInd, phi_sources
from .ir import Program
from .packing import AccessProfile, access_profiles, byte_runs, low_mask_width, power_of_256

log = logging.getLogger(__name__)

EQUAL = "equal"
LOGICAL = "logical"
ISZERO_NORM = "iszero-normalized"
COMP_U = "comp-unsigned"
COMP_S = "comp-signed"
BITWISE = "bitwise"
SHIFTS = "shifts"
ARITH_U = "arithmetic-unsigned"
ARITH_S = "arithmetic-signed"
SIGNEXT = "sign-extended"
BYTE_INDEX = "byte-index"
RIGHT_PADDED = "right-padded"
CLEANUP = "cleanup-mask"  # AND with the leaf's own low mask, the integer cleanup idiom

SIGNED = frozenset({SIGNEXT, ARITH_S, COMP_S})
BYTES_LIKE = frozenset({BYTE_INDEX, RIGHT_PADDED})
NUMERIC = frozenset({ARITH_U, BITWISE, COMP_U, SHIFTS, CLEANUP})
ADDRESS_BREAKERS = frozenset({ARITH_U, BITWISE, SHIFTS})

_OP_TAGS = {
    "EQ": (EQUAL,),
    "SUB": (EQUAL, ARITH_U),
    "LT": (COMP_U,),
    "GT": (COMP_U,),
    "SLT": (COMP_S,),
    "SGT": (COMP_S,),
    "AND": (BITWISE,),
    "OR": (BITWISE,),
    "XOR": (BITWISE,),
    "NOT": (BITWISE,),
    "SHL": (SHIFTS,),
    "SHR": (SHIFTS,),
    "SAR": (ARITH_S,),
    "ADD": (ARITH_U,),
    "MUL": (ARITH_U,),
    "DIV": (ARITH_U,),
    "MOD": (ARITH_U,),
    "EXP": (ARITH_U,),
    "ADDMOD": (ARITH_U,),
    "MULMOD": (ARITH_U,),
    "SDIV": (ARITH_S,),
    "SMOD": (ARITH_S,),
    "SIGNEXTEND": (SIGNEXT,),
    "BYTE": (BYTE_INDEX,),
}


@dataclass(frozen=True, order=True)
class ValueType:
    family: str  # uint, int, address, bool, bytes, any32
    width: int  # bytes

    def __post_init__(self):
        if not 1 <= self.width <= 32:
            raise ValueError(f"bad width {self.width}")

    @property
    def type_id(self) -> str:
        if self.family == "string":
            return "t_string_storage"
        return "t_" + self.label

    @property
    def label(self) -> str:
        if self.family in ("uint", "int"):
            return f"{self.family}{self.width * 8}"
        if self.family == "bytes":
            return f"bytes{self.width}"
        return self.family

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, label: str) -> ValueType:
        label = label.removeprefix("t_")
        if label in ("address", "address_payable"):
            return ADDRESS
        if label == "bool":
            return BOOL
        for fam in ("uint", "int"):
            if label.startswith(fam) and label[len(fam):].isdigit():
                return cls(fam, int(label[len(fam):]) // 8)
        if label.startswith("bytes") and label[5:].isdigit():
            return cls("bytes", int(label[5:]))
        raise ValueError(f"not a value type: {label!r}")


ADDRESS = ValueType("address", 20)
BOOL = ValueType("bool", 1)
UINT256 = ValueType("uint", 32)
ANY32 = ValueType("any32", 32)
STRING = ValueType("string", 32)  # string or bytes, indistinguishable in code


@dataclass(frozen=True)
class TypeConstraint:
    var: Leaf
    evidence: frozenset[str]
    width: int = 32


@dataclass
class TypeDiagnostic:
    var: Leaf
    evidence: frozenset[str]
    message: str


@dataclass
class TypeResult:
    types: dict[Leaf, ValueType]
    diagnostics: list[TypeDiagnostic] = field(default_factory=list)


def _const(prog: Program, var: str) -> int | None:
    return prog.value(var)


def _is_cleanup(prog: Program, s, var: str, width: int) -> bool:
    if s.op != "AND":
        return False
    other = s.uses[1] if s.uses[0] == var else s.uses[0]
    w = low_mask_width(_const(prog, other))
    return w is not None and w >= width


def _moves_to_top(prog: Program, s, var: str, width: int) -> bool:
    """``var`` shifted left by exactly 32 - width bytes."""
    if width >= 32:
        return False
    k = 32 - width
    if s.op == "SHL" and s.uses[1] == var:
        return _const(prog, s.uses[0]) == 8 * k
    if s.op == "MUL":
        other = s.uses[1] if s.uses[0] == var else s.uses[0]
        return power_of_256(_const(prog, other)) == k
    return False


def _high_mask(prog: Program, s, var: str) -> bool:
    if s.op != "AND":
        return False
    other = s.uses[1] if s.uses[0] == var else s.uses[0]
    c = _const(prog, other)
    runs = byte_runs(c) if c is not None else None
    return bool(runs) and len(runs) == 1 and runs[0][1] == 31 and runs[0][0] > 0


def forward_evidence(prog: Program, var: str, width: int) -> set[str]:
    """Operation kinds applied to ``var`` by its consumers.

    PHIs, cleanup masks, SIGNEXTEND and double ISZERO pass the value through;
    any other consumer is tagged and ends the walk.
    """
    ev: set[str] = set()
    seen = set()
    stack = [var]
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        for s in prog.uses_of.get(x, ()):
            op = s.op
            if op == "PHI":
                stack.append(s.defs)
            elif op == "JUMPI" and len(s.uses) > 1 and s.uses[1] == x:
                ev.add(LOGICAL)
            elif op == "ISZERO":
                nested = [t for t in prog.uses_of.get(s.defs, ()) if t.op == "ISZERO"]
                if nested:
                    ev.update((LOGICAL, ISZERO_NORM))
                    stack.extend(t.defs for t in nested)
                else:
                    # the compiler emits `x == 0` as a single ISZERO
                    ev.add(EQUAL)
            elif _is_cleanup(prog, s, x, width):
                ev.add(CLEANUP)
                stack.append(s.defs)
            elif _high_mask(prog, s, x):
                ev.add(RIGHT_PADDED)
            elif _moves_to_top(prog, s, x, width):
                ev.add(RIGHT_PADDED)
            elif op == "SIGNEXTEND" and s.uses[1] == x:
                ev.add(SIGNEXT)
                stack.append(s.defs)
            elif op == "BYTE" and s.uses[1] == x:
                ev.add(BYTE_INDEX)
            elif op in ("MUL", "DIV") and _pow2_operand(prog, s, x):
                ev.add(SHIFTS)
            elif op in ("SHL", "SHR") and s.uses[1] == x:
                ev.add(SHIFTS)
            elif op == "SAR" and s.uses[1] == x:
                ev.add(SHIFTS)
                ev.add(ARITH_S)
            elif op == "OR" and _assembles_store(prog, s.defs):
                pass  # packing the value into another word, not arithmetic
            elif op in ("SUB", "XOR") and _only_tested(prog, s.defs):
                ev.add(EQUAL)  # optimized `a != b`
            elif op in _OP_TAGS:
                ev.update(_OP_TAGS[op])
    return ev


def _assembles_store(prog: Program, var: str) -> bool:
    """``var`` reaches an SSTORE value through ORs only."""
    stack, seen = [var], set()
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        for u in prog.uses_of.get(x, ()):
            if u.op == "SSTORE" and len(u.uses) > 1 and u.uses[1] == x:
                return True
            if u.op == "OR":
                stack.append(u.defs)
    return False


def _only_tested(prog: Program, var: str) -> bool:
    """``var`` is consumed only as a zero test."""
    uses = prog.uses_of.get(var, ())
    return bool(uses) and all(
        u.op == "ISZERO" or (u.op == "JUMPI" and len(u.uses) > 1 and u.uses[1] == var and u.uses[0] != var)
        for u in uses
    )


def _pow2_operand(prog: Program, s, var: str) -> bool:
    if s.op == "DIV" and s.uses[0] != var:
        return False
    other = s.uses[1] if s.uses[0] == var else s.uses[0]
    c = _const(prog, other)
    return c is not None and c > 1 and c & (c - 1) == 0


def producer_evidence(prog: Program, var: str, width: int) -> set[str]:
    """Evidence from how a stored value was produced."""
    d = prog.defining(var)
    ev: set[str] = set()
    if d is None:
        return ev
    if d.op == "ISZERO":
        inner = prog.defining(d.uses[0])
        ev.update((LOGICAL, ISZERO_NORM) if inner is not None and inner.op == "ISZERO" else (LOGICAL,))
    elif d.op == "SIGNEXTEND":
        ev.add(SIGNEXT)
    elif d.op == "AND" and (_is_cleanup(prog, d, d.uses[0], width) or _is_cleanup(prog, d, d.uses[1], width)):
        ev.add(CLEANUP)
    elif d.op in ("AND", "OR", "XOR", "NOT", "SHL", "SHR", "SAR", "BYTE"):
        pass  # ambiguous with positioning code
    elif d.op in _OP_TAGS and d.op not in ("EQ", "LT", "GT", "SLT", "SGT"):
        ev.update(_OP_TAGS[d.op])
    return ev


def validated_cleanups(prog: Program, var: str) -> list:
    """Uses of ``var`` that are cleanups compared back against ``var``.

    ABI decoding checks each argument with ``EQ(v, cleanup(v))``, where the
    cleanup is the type's mask, sign extension or boolean normalization.
    """
    out = []
    for u in prog.uses_of.get(var, ()):
        if u.op not in ("AND", "SIGNEXTEND", "ISZERO") or u.defs is None:
            continue
        res = u
        if u.op == "ISZERO":
            inner = [t for t in prog.uses_of.get(u.defs, ()) if t.op == "ISZERO"]
            if not inner:
                continue
            res = inner[0]
        for e in prog.uses_of.get(res.defs, ()):
            if e.op == "EQ" and var in e.uses:
                out.append(u)
                break
    return out


def validator_evidence(prog: Program, var: str, width: int) -> set[str]:
    ev: set[str] = set()
    for u in validated_cleanups(prog, var):
        if u.op == "ISZERO":
            ev.update((LOGICAL, ISZERO_NORM))
        elif u.op == "SIGNEXTEND":
            ev.add(SIGNEXT)
        elif _is_cleanup(prog, u, var, width):
            ev.add(CLEANUP)
        elif _high_mask(prog, u, var):
            ev.add(RIGHT_PADDED)
    return ev


def collect_evidence(
    prog: Program,
    stmt_to_var: dict[str, set[Leaf]],
    profiles: dict[Leaf, AccessProfile] | None = None,
) -> set[TypeConstraint]:
    if profiles is None:
        profiles = access_profiles(prog, stmt_to_var)
    out = set()
    for leaf, prof in profiles.items():
        width = prof.width
        ev: set[str] = set()
        for exs in prof.reads.values():
            for e in exs:
                if e.left_aligned:
                    ev.add(RIGHT_PADDED)
                d = prog.defining(e.value)
                if d is not None and d.op == "SIGNEXTEND":
                    ev.add(SIGNEXT)
                ev |= forward_evidence(prog, e.value, width)
        for sid, ins in prof.writes.items():
            store = prog.statements[sid]
            for i in ins:
                if i.value is None or i.interval is None:
                    continue
                if i.right_aligned_source:
                    ev.add(RIGHT_PADDED)
                if _const(prog, i.value) is not None:
                    continue
                ev |= producer_evidence(prog, i.value, width)
                ev |= validator_evidence(prog, i.value, width)
        out.add(TypeConstraint(leaf, frozenset(ev), width))
    return out


def resolve_type(evidence: frozenset[str] | set[str], width: int) -> tuple[ValueType, str | None]:
    """Pick a type for one leaf; returns the type and a diagnostic or ``None``."""
    signed = evidence & SIGNED
    bytes_like = evidence & BYTES_LIKE
    if signed and bytes_like:
        return ValueType("uint", width), "signed and bytes evidence conflict"
    if signed:
        return ValueType("int", width), None
    if bytes_like:
        if evidence & {ARITH_U}:
            return ValueType("uint", width), "bytes evidence with arithmetic"
        return ValueType("bytes", width), None
    if width == 1:
        return (ValueType("uint", 1) if evidence & NUMERIC else BOOL), None
    if width == 20:
        return (ValueType("uint", 20) if evidence & ADDRESS_BREAKERS else ADDRESS), None
    if width == 32:
        return UINT256, None  # any32 with nothing deciding
    return ValueType("uint", width), None


def resolve_types(constraints, constructs=None) -> TypeResult:
    """Resolve every constrained leaf.  Leaves of ``constructs`` without
    evidence get the default for their span."""
    result = TypeResult({})
    seen = set()
    for tc in sorted(constraints, key=lambda c: str(c.var)):
        t, diag = resolve_type(tc.evidence, tc.width)
        result.types[tc.var] = t
        seen.add(tc.var)
        if diag:
            result.diagnostics.append(TypeDiagnostic(tc.var, tc.evidence, diag))
            log.debug("%s: %s", tc.var, diag)
    for sc in constructs or ():
        if sc.is_leaf and sc not in seen:
            width = sc.width if isinstance(sc, PackedVariable) else 32
            result.types[sc] = resolve_type(frozenset(), width)[0]
    return result


def key_type(prog: Program, kv: str) -> ValueType:
    """Infer a mapping key type from how the key word was prepared.

    The defining operation decides when it is a cleanup; otherwise the
    key's other uses are checked, which catches ABI input validators.
    """
    seen = set()
    stack = [kv]
    votes = []
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        d = prog.defining(v)
        if d is not None and d.op == "PHI":
            stack.extend(d.uses)
            continue
        t = _key_from_def(prog, d) if d is not None else None
        if t is None:
            found = {_key_from_def(prog, u) for u in validated_cleanups(prog, v)}
            found.discard(None)
            t = found.pop() if len(found) == 1 else None
        votes.append(t)
    votes = [t for t in votes if t is not None]
    if votes and all(t == votes[0] for t in votes):
        return votes[0]
    return UINT256


def _key_from_def(prog: Program, d) -> ValueType | None:
    if d.op in ("CALLER", "ORIGIN", "ADDRESS", "COINBASE"):
        return ADDRESS
    if d.op == "SIGNEXTEND":
        b = _const(prog, d.uses[0])
        return ValueType("int", b + 1) if b is not None and b < 31 else None
    if d.op == "ISZERO":
        inner = prog.defining(d.uses[0])
        return BOOL if inner is not None and inner.op == "ISZERO" else None
    if d.op == "AND":
        for c in (_const(prog, d.uses[0]), _const(prog, d.uses[1])):
            if c is None:
                continue
            w = low_mask_width(c)
            if w == 20:
                return ADDRESS
            if w is not None:
                return ValueType("uint", w)
            runs = byte_runs(c)
            if runs and len(runs) == 1 and runs[0][1] == 31:
                return ValueType("bytes", 32 - runs[0][0])
    return None


def _is_byte_array_header(prog: Program, var: str) -> bool:
    """``var`` is decoded as a byte-array header: bit 0 flags the long form
    and the length is the word halved."""
    flag = half = False
    seen = set()
    stack = [var]
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        for u in prog.uses_of.get(x, ()):
            if u.op == "PHI":
                stack.append(u.defs)
            elif u.op == "AND":
                other = u.uses[1] if u.uses[0] == x else u.uses[0]
                flag |= _const(prog, other) == 1
            elif u.op == "SHR" and u.uses[1] == x:
                half |= _const(prog, u.uses[0]) == 1
            elif u.op == "DIV" and u.uses[0] == x:
                half |= _const(prog, u.uses[1]) == 2
    return flag and half


def byte_array_locations(prog: Program, var_stor_index: dict[str, set[SInd]]) -> set[StorageConstruct]:
    """Locations holding a dynamic ``string``/``bytes`` header."""
    out = set()
    cache: dict[str, frozenset[str]] = {}
    for s in prog.stmts_with("SLOAD"):
        if not s.uses or s.defs is None or not _is_byte_array_header(prog, s.defs):
            continue
        for v in phi_sources(prog, s.uses[0], cache):
            out.update(translate(si) for si in var_stor_index.get(v, ()))
    return out


def type_mapping_keys(prog: Program, actual: set[SInd]) -> dict[Mapping, ValueType]:
    keys: dict[Mapping, list[str]] = {}
    for si in actual:
        if isinstance(si, MapI):
            keys.setdefault(translate(si), []).append(si.kv)
    out = {}
    for m, kvs in keys.items():
        found = {key_type(prog, kv) for kv in kvs}
        non_default = found - {UINT256}
        out[m] = next(iter(non_default)) if len(non_default) == 1 else UINT256
    return out
