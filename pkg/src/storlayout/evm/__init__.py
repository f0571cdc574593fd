"""Bytecode frontend: disassembly, CFG, SSA lifting, constant folding."""

from .cfg import CFG, BasicBlock, build_cfg
from .disasm import Instruction, disassemble, parse_hex
from .fold import evaluate, fold_constants
from .frontend import extract_runtime, lift_bytecode, runtime_payload
from .ssa import lift_to_ssa

__all__ = [
    "CFG",
    "BasicBlock",
    "Instruction",
    "build_cfg",
    "disassemble",
    "evaluate",
    "extract_runtime",
    "fold_constants",
    "lift_bytecode",
    "lift_to_ssa",
    "parse_hex",
    "runtime_payload",
]
