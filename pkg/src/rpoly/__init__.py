"""Riemannian polyhedra: structure checks, spectra, boundary spectral data and Gaussian beams."""
import os

_threads = os.environ.get("RPOLY_NUM_THREADS")
if _threads:
    # must be set before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
