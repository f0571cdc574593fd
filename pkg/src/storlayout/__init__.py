"""Recover Solidity storage layouts from EVM runtime bytecode."""

from .layout import SchemaError, compare_layouts, emit_layout, load_layout
from .pipeline import Analysis, AnalysisError, analyze, analyze_program

__all__ = [
    "Analysis",
    "AnalysisError",
    "SchemaError",
    "analyze",
    "analyze_program",
    "compare_layouts",
    "emit_layout",
    "load_layout",
]
