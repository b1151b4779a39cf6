"""Document format, command line experiments and report emission."""
from .cli import ExperimentConfig, main, run_experiment
from .document import (
    Check,
    DocumentError,
    Gamma,
    Polyhedron,
    PolyhedronDocument,
    canonical,
    load_polyhedron,
    parse_polyhedron,
    read_document,
    structural_checks,
)
from .report import Result, csv_text, emit_report, write_atomic

__all__ = [
    "Check", "DocumentError", "ExperimentConfig", "Gamma", "Polyhedron", "PolyhedronDocument", "Result",
    "canonical", "csv_text", "emit_report", "load_polyhedron", "main", "parse_polyhedron", "read_document",
    "run_experiment", "structural_checks", "write_atomic",
]
