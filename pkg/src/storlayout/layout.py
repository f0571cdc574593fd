"""Emit recovered layouts as solc ``storageLayout`` JSON and score them
against compiler output."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .constructs import (
    Array,
    Const,
    Mapping,
    Offset,
    PackedVariable,
    StorageConstruct,
    Variable,
    construct_sort_key,
)
from .typeinfer import STRING, UINT256, ValueType


class SchemaError(ValueError):
    """A layout document does not follow the storageLayout schema."""


@dataclass
class _Member:
    slot: int
    offset: int
    type_id: str


class _Emitter:
    def __init__(self, constructs, types, key_types, byte_arrays=()):
        self.constructs = set(constructs)
        self.types = types
        self.key_types = key_types or {}
        self.byte_arrays = set(byte_arrays)
        self.children: dict[StorageConstruct, list[StorageConstruct]] = {}
        for sc in self.constructs:
            par = sc.parent()
            if par is not None:
                self.children.setdefault(par, []).append(sc)
        for kids in self.children.values():
            kids.sort(key=construct_sort_key)
        self.type_defs: dict[str, dict] = {}
        self.n_structs = 0

    def value_type(self, vt: ValueType) -> str:
        tid = vt.type_id
        enc = "bytes" if vt == STRING else "inplace"
        self.type_defs.setdefault(tid, {"encoding": enc, "label": vt.label, "numberOfBytes": str(vt.width)})
        return tid

    def slot_content(self, loc) -> list[_Member]:
        """Members stored in the slot at ``loc`` itself."""
        if loc in self.byte_arrays:
            return [_Member(0, 0, self.value_type(STRING))]
        kids = self.children.get(loc, [])
        maps = [k for k in kids if isinstance(k, Mapping)]
        arrays = [k for k in kids if isinstance(k, Array)]
        if maps:
            return [_Member(0, 0, self.mapping_type(maps[0]))]
        if arrays:
            return [_Member(0, 0, self.array_type(arrays[0]))]
        out = []
        for leaf in sorted((k for k in kids if k.is_leaf), key=lambda k: k.low):
            vt = self.types.get(leaf)
            if vt is None:
                vt = ValueType("uint", leaf.width) if isinstance(leaf, PackedVariable) else UINT256
            out.append(_Member(0, leaf.low, self.value_type(vt)))
        return out

    def members(self, loc) -> list[_Member]:
        out = self.slot_content(loc)
        offsets = sorted(
            (k for k in self.children.get(loc, []) if isinstance(k, Offset)), key=lambda k: k.of
        )
        for off in offsets:
            out += [_Member(off.of, m.offset, m.type_id) for m in self.slot_content(off)]
        return out

    def location_type(self, loc) -> str:
        ms = self.members(loc)
        if len(ms) == 1 and ms[0].slot == 0 and ms[0].offset == 0:
            return ms[0].type_id
        if not ms:
            return self.value_type(UINT256)
        return self.struct_type(ms)

    def struct_type(self, ms: list[_Member]) -> str:
        self.n_structs += 1
        name = f"Struct{self.n_structs}"
        tid = f"t_struct({name}){self.n_structs}_storage"
        slots = max(m.slot for m in ms) + 1
        self.type_defs[tid] = {
            "encoding": "inplace",
            "label": f"struct {name}",
            "members": [
                {
                    "label": f"member{i}",
                    "offset": m.offset,
                    "slot": str(m.slot),
                    "type": m.type_id,
                }
                for i, m in enumerate(ms)
            ],
            "numberOfBytes": str(32 * slots),
        }
        return tid

    def mapping_type(self, m: Mapping) -> str:
        key = self.value_type(self.key_types.get(m, UINT256))
        value = self.location_type(m)
        tid = f"t_mapping({key},{value})"
        self.type_defs[tid] = {
            "encoding": "mapping",
            "key": key,
            "label": f"mapping({_label(self.type_defs, key)} => {_label(self.type_defs, value)})",
            "numberOfBytes": "32",
            "value": value,
        }
        return tid

    def array_type(self, a: Array) -> str:
        base = self.location_type(a)
        tid = f"t_array({base})dyn_storage"
        self.type_defs[tid] = {
            "base": base,
            "encoding": "dynamic_array",
            "label": f"{_label(self.type_defs, base)}[]",
            "numberOfBytes": "32",
        }
        return tid


def _label(defs: dict, tid: str) -> str:
    return defs[tid]["label"]


def emit_layout(constructs, types, key_types=None, byte_arrays=()) -> dict[str, Any]:
    """Render typed constructs as a storageLayout document.

    ``types`` maps leaves to value types; ``key_types`` maps Mapping
    constructs to key types (uint256 when absent).  Locations in
    ``byte_arrays`` hold a string header; whatever the analysis found
    beneath them is the string's data and is not emitted.
    """
    em = _Emitter(constructs, types, key_types, byte_arrays)
    roots = sorted((sc for sc in em.constructs if isinstance(sc, Const)), key=lambda c: c.c)
    storage = []
    for root in roots:
        for m in em.slot_content(root):
            label = f"var_slot{root.c}" if m.offset == 0 else f"var_slot{root.c}_off{m.offset}"
            storage.append({"label": label, "offset": m.offset, "slot": str(root.c), "type": m.type_id})
    return {"storage": storage, "types": dict(sorted(em.type_defs.items()))}


def layout_leaves(constructs) -> list:
    return sorted(
        (sc for sc in constructs if isinstance(sc, (Variable, PackedVariable))),
        key=construct_sort_key,
    )


# -- parsing and comparison --------------------------------------------------


def _slot(value) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(value, str):
        try:
            return int(value, 16) if value.lower().startswith("0x") else int(value)
        except ValueError:
            pass
    raise SchemaError(f"bad slot {value!r}")


def load_layout(doc) -> dict[str, Any]:
    """Validate a storageLayout document (or a solc output holding one).

    Slots are normalized to decimal strings; everything else is kept.
    """
    if isinstance(doc, dict) and "storageLayout" in doc:
        doc = doc["storageLayout"]
    if not isinstance(doc, dict) or not isinstance(doc.get("storage"), list):
        raise SchemaError("missing 'storage' list")
    types = doc.get("types")
    if types is None:
        types = {}
    if not isinstance(types, dict):
        raise SchemaError("'types' must be an object")
    storage = []
    for i, entry in enumerate(doc["storage"]):
        if not isinstance(entry, dict):
            raise SchemaError(f"storage[{i}] is not an object")
        for key in ("slot", "offset", "type"):
            if key not in entry:
                raise SchemaError(f"storage[{i}] lacks {key!r}")
        off = entry["offset"]
        if not isinstance(off, int) or not 0 <= off < 32:
            raise SchemaError(f"storage[{i}] bad offset {off!r}")
        storage.append({**entry, "slot": str(_slot(entry["slot"]))})
    for tid, t in types.items():
        for m in t.get("members", ()):
            for key in ("slot", "offset", "type"):
                if key not in m:
                    raise SchemaError(f"member of {tid} lacks {key!r}")
    out = {"storage": storage, "types": types}
    for entry in storage:
        canonical_type(out, entry["type"])  # raises on dangling references
    return out


def canonical_type(layout: dict, tid: str, _depth: int = 0) -> tuple:
    """Structural form of a type id; names and AST ids do not matter."""
    if _depth > 64:
        raise SchemaError("type nesting too deep")
    types = layout.get("types") or {}
    t = types.get(tid)
    if t is None:
        try:
            return ("value", ValueType.parse(tid).label)
        except ValueError:
            raise SchemaError(f"unknown type {tid!r}") from None
    enc = t.get("encoding")
    if enc == "mapping":
        return (
            "mapping",
            canonical_type(layout, t["key"], _depth + 1),
            canonical_type(layout, t["value"], _depth + 1),
        )
    if enc == "dynamic_array":
        return ("array", canonical_type(layout, t["base"], _depth + 1))
    if enc == "bytes":
        return ("bytes",)
    if "members" in t:
        members = [
            (_slot(m["slot"]), m["offset"], canonical_type(layout, m["type"], _depth + 1)) for m in t["members"]
        ]
        return _struct(members)
    if "base" in t:
        n = int(t.get("numberOfBytes", 0))
        return ("static", canonical_type(layout, t["base"], _depth + 1), n)
    width = int(t.get("numberOfBytes", 32))
    if tid.startswith("t_contract") or tid.startswith("t_address"):
        return ("value", "address")
    if tid.startswith("t_enum"):
        return ("value", f"uint{8 * width}")
    try:
        return ("value", ValueType.parse(tid).label)
    except ValueError:
        return ("opaque", t.get("label", tid), width)


def _struct(members: list[tuple]) -> tuple:
    """Canonical struct: nested structs are inlined into their parent and a
    lone member at slot 0, offset 0 stands for the struct itself.  Both
    rewrites keep the storage footprint, which is all bytecode can show."""
    flat = []
    for slot, off, canon in members:
        if canon[0] == "struct":
            flat.extend((slot + s, o, c) for s, o, c in canon[1])
        else:
            flat.append((slot, off, canon))
    flat.sort(key=lambda m: (m[0], m[1]))
    if len(flat) == 1 and flat[0][:2] == (0, 0):
        return flat[0][2]
    return ("struct", tuple(flat))


@dataclass
class SlotDetail:
    slot: int
    expected: list[tuple]
    got: list[tuple]
    verdict: str  # match, mismatch, missing, extra


@dataclass
class ComparisonReport:
    ground_truth_count: int
    report_count: int
    success_count: int
    per_slot: list[SlotDetail] = field(default_factory=list)

    @property
    def precision(self) -> float:
        return self.success_count / self.report_count if self.report_count else 1.0

    @property
    def recall(self) -> float:
        return self.success_count / self.ground_truth_count if self.ground_truth_count else 1.0

    def to_json(self) -> dict:
        return {
            "groundTruthCount": self.ground_truth_count,
            "reportCount": self.report_count,
            "successCount": self.success_count,
            "precision": self.precision,
            "recall": self.recall,
            "perSlotDetail": [
                {
                    "slot": str(d.slot),
                    "expected": [_show(e) for e in d.expected],
                    "got": [_show(g) for g in d.got],
                    "verdict": d.verdict,
                }
                for d in self.per_slot
            ],
        }


def _show(entry: tuple) -> str:
    offset, canon = entry
    return f"{offset}:{render_canonical(canon)}"


def render_canonical(canon: tuple) -> str:
    kind = canon[0]
    if kind == "value":
        return canon[1]
    if kind == "mapping":
        return f"mapping({render_canonical(canon[1])}=>{render_canonical(canon[2])})"
    if kind == "array":
        return f"{render_canonical(canon[1])}[]"
    if kind == "struct":
        inner = ",".join(f"{s}.{o}:{render_canonical(c)}" for s, o, c in canon[1])
        return f"struct{{{inner}}}"
    return str(canon[1]) if len(canon) > 1 else kind


def _by_slot(layout: dict) -> dict[int, list[tuple]]:
    out: dict[int, list[tuple]] = {}
    for e in layout["storage"]:
        slot, canon = int(e["slot"]), canonical_type(layout, e["type"])
        if canon[0] == "struct":  # a top-level struct occupies its members' slots
            for s, o, c in canon[1]:
                out.setdefault(slot + s, []).append((o, c))
        else:
            out.setdefault(slot, []).append((e["offset"], canon))
    for v in out.values():
        v.sort(key=lambda x: x[0])
    return out


def compare_layouts(inferred, ground_truth, *, exclude_unused: bool = False) -> ComparisonReport:
    """Score ``inferred`` against ``ground_truth``.

    A ground-truth slot counts as a success when every variable in it has
    an inferred entry with the same offset and structural type.  With
    ``exclude_unused`` ground-truth slots the analysis never reported on are
    dropped, for contracts whose unused variables leave no trace in code.
    """
    try:
        inf = load_layout(inferred)
    except SchemaError as e:
        raise SchemaError(f"inferred layout: {e}") from e
    gt = load_layout(ground_truth)
    want = _by_slot(gt)
    got = _by_slot(inf)
    if exclude_unused:
        want = {s: v for s, v in want.items() if s in got}
    report = ComparisonReport(
        ground_truth_count=sum(len(v) for v in want.values()),
        report_count=sum(len(v) for v in got.values()),
        success_count=0,
    )
    for slot in sorted(set(want) | set(got)):
        w, g = want.get(slot, []), got.get(slot, [])
        if not w:
            verdict = "extra"
        elif not g:
            verdict = "missing"
        elif all(x in g for x in w):
            verdict = "match"
            report.success_count += len(w)
        else:
            verdict = "mismatch"
        report.per_slot.append(SlotDetail(slot, w, g, verdict))
    return report
