"""Finite-element spectra, boundary spectral data and wave evolution (n = 2)."""
from .bsd import BoundarySpectralData, BSDError, BSDVerdict, bsd_bytes, bsd_equivalent, extract_bsd, read_bsd, write_bsd
from .eigen import (
    EigenError,
    EigenSystem,
    SkeletonError,
    clusters,
    compute_spectrum,
    eigenmap_rank,
    solve_eigen,
    transmission_residual,
)
from .fem import assemble_forms
from .mesh import Mesh, MeshError, refine
from .wave import DtNResult, ResolutionError, WaveField, dtn_map, synthesize_wave

__all__ = [
    "BSDError", "BSDVerdict", "BoundarySpectralData", "DtNResult", "EigenError", "EigenSystem",
    "Mesh", "MeshError", "ResolutionError", "SkeletonError", "WaveField", "assemble_forms",
    "bsd_bytes", "bsd_equivalent", "clusters", "compute_spectrum", "dtn_map", "eigenmap_rank", "extract_bsd",
    "read_bsd", "refine", "solve_eigen", "synthesize_wave", "transmission_residual", "write_bsd",
]
