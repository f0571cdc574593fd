"""Linear-sweep disassembly of EVM bytecode."""

from __future__ import annotations

from dataclasses import dataclass

from .opcodes import OPCODES, push_width


@dataclass(frozen=True)
class Instruction:
    pc: int
    op: str
    byte: int
    immediate: int | None = None

    @property
    def size(self) -> int:
        return 1 + push_width(self.byte)

    def __str__(self) -> str:
        if self.immediate is None:
            return f"{self.pc:#06x} {self.op}"
        return f"{self.pc:#06x} {self.op} {self.immediate:#x}"


def parse_hex(text: str | bytes) -> bytes:
    """Decode a hex string (optionally ``0x``-prefixed, whitespace tolerant)."""
    if isinstance(text, bytes):
        text = text.decode()
    text = "".join(text.split())
    if text[:2] in ("0x", "0X"):
        text = text[2:]
    if len(text) % 2:
        raise ValueError("odd-length hex string")
    return bytes.fromhex(text)


def disassemble(code: bytes) -> list[Instruction]:
    """Decode every byte of ``code``.

    Unknown bytes become ``INVALID`` markers and a PUSH running past the end
    of the code is zero-padded on the right, as the EVM does.
    """
    out: list[Instruction] = []
    pc = 0
    n = len(code)
    while pc < n:
        byte = code[pc]
        entry = OPCODES.get(byte)
        name = entry.name if entry else "INVALID"
        width = push_width(byte)
        if width:
            raw = code[pc + 1 : pc + 1 + width]
            raw = raw + b"\x00" * (width - len(raw))
            out.append(Instruction(pc, name, byte, int.from_bytes(raw, "big")))
        else:
            out.append(Instruction(pc, name, byte))
        pc += 1 + width
    return out
