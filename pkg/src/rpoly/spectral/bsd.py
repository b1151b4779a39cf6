"""Local boundary spectral data and their equivalence up to cluster unitaries."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .eigen import EigenSystem, clusters

MAGIC = b"RPBSD001"


class BSDError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BoundarySpectralData:
    """Eigenvalues and eigenfunction traces sampled on a boundary patch.

    Attributes
    ----------
    facet : boundary (n-1)-simplex containing the patch.
    interval : (s0, s1) fractions of the facet covered by the patch.
    points : (S, n) sample coordinates.
    traces : (m, S), row k samples phi_k on the patch.
    eigenvalues : (m,)
    """

    facet: tuple[int, ...]
    interval: tuple[float, float]
    points: np.ndarray
    traces: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        if self.traces.shape != (len(self.eigenvalues), len(self.points)):
            raise BSDError("trace matrix shape does not match eigenvalues and samples")

    @property
    def n_samples(self) -> int:
        return len(self.points)


def extract_bsd(es: EigenSystem, facet, pitch: float, interval=(0.0, 1.0)) -> BoundarySpectralData:
    """Sample eigenfunction traces on ``facet`` restricted to ``interval``.

    ``facet`` is read in the given vertex order: the interval fractions and the
    sample order run from ``facet[0]`` to ``facet[-1]``.  Samples are spaced at
    most ``pitch`` apart in reference length and include both interval ends.

    Raises
    ------
    BSDError
        For an empty interval or a facet that is not in the boundary.
    """
    mesh = es.mesh
    facet = tuple(int(v) for v in facet)
    key = tuple(sorted(facet))
    s0, s1 = (float(v) for v in interval)
    if not 0.0 <= s0 < s1 <= 1.0:
        raise BSDError("empty observation set")
    if key not in mesh.complex.cofaces:
        raise BSDError(f"{facet} is not a facet of the complex")
    if len(mesh.complex.cofaces[key]) != 1:
        raise BSDError(f"observation facet {facet} is not in the boundary")
    ids = mesh.facet_nodes[key]
    if facet != key:
        ids = ids[::-1]
    A, B = mesh.nodes[ids[0]], mesh.nodes[ids[-1]]
    length = float(np.linalg.norm(B - A)) * (s1 - s0)
    count = max(2, math.ceil(length / pitch - 1e-9) + 1)
    s = np.linspace(s0, s1, count)
    t_nodes = np.linspace(0.0, 1.0, len(ids))
    V = es.vectors[ids]  # (N+1, m)
    traces = np.stack([np.interp(s, t_nodes, V[:, k]) for k in range(es.count)])
    points = A + s[:, None] * (B - A)
    return BoundarySpectralData(facet, (s0, s1), points, traces, es.eigenvalues.copy())


@dataclass(frozen=True)
class BSDVerdict:
    equivalent: bool
    reason: str
    max_eigen_gap: float
    clusters: list = field(default_factory=list)
    unitaries: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def bsd_equivalent(
    a: BoundarySpectralData,
    b: BoundarySpectralData,
    kappa=None,
    tol_lambda: float = 1e-6,
    tol_trace: float = 1e-3,
) -> BSDVerdict:
    """Decide equivalence of two boundary spectral data sets.

    Eigenvalues must agree pairwise within ``tol_lambda * (1 + lambda)``.
    Inside each eigenvalue cluster of ``a`` the orthogonal U minimizing
    ``||A - U B||_F`` is found by Procrustes; the relative residual must not
    exceed ``tol_trace``.

    Parameters
    ----------
    kappa : array of int, optional
        Sample correspondence: sample i of ``a`` matches sample ``kappa[i]``
        of ``b``.  Defaults to the identity.

    Returns
    -------
    BSDVerdict
        ``unitaries[c]`` maps the traces of ``b`` onto those of ``a`` in cluster c.

    Raises
    ------
    BSDError
        On unequal eigenvalue counts, a non-bijective ``kappa``, or clusters
        of ``a`` and ``b`` with different sizes.
    """
    if tol_lambda <= 0 or tol_trace <= 0:
        raise BSDError("tolerances must be positive")
    m = len(a.eigenvalues)
    if len(b.eigenvalues) != m:
        raise BSDError(f"eigenvalue counts differ: {m} vs {len(b.eigenvalues)}")
    S = a.n_samples
    kappa = np.arange(S) if kappa is None else np.asarray(kappa, dtype=int)
    if b.n_samples != S or kappa.shape != (S,) or not np.array_equal(np.sort(kappa), np.arange(S)):
        raise BSDError("sample correspondence is not a bijection")
    gap = np.abs(a.eigenvalues - b.eigenvalues) / (1.0 + np.abs(a.eigenvalues))
    max_gap = float(gap.max())
    if max_gap > tol_lambda:
        k = int(np.argmax(gap))
        return BSDVerdict(False, f"eigenvalue {k} differs: {float(a.eigenvalues[k])!r} vs {float(b.eigenvalues[k])!r}", max_gap)
    ca = clusters(a.eigenvalues, tol_lambda)
    cb = clusters(b.eigenvalues, tol_lambda)
    if [len(c) for c in ca] != [len(c) for c in cb]:
        raise BSDError("eigenvalue cluster sizes differ between the two data sets")
    Bt = b.traces[:, kappa]
    floor = 1e-12 * max(np.abs(a.traces).max(), np.abs(Bt).max(), 1e-300)
    unitaries, residuals = [], []
    for idx in ca:
        A, B = a.traces[idx], Bt[idx]
        R, _ = orthogonal_procrustes(B.T, A.T)
        U = R.T
        denom = max(np.linalg.norm(A), np.linalg.norm(B), floor * math.sqrt(A.size))
        unitaries.append(U)
        residuals.append(float(np.linalg.norm(A - U @ B) / denom))
    worst = max(residuals, default=0.0)
    ok = worst <= tol_trace
    reason = "equivalent" if ok else f"trace residual {worst:.3e} exceeds {tol_trace:g}"
    return BSDVerdict(ok, reason, max_gap, ca, unitaries, residuals)


def bsd_bytes(d: BoundarySpectralData) -> bytes:
    """Binary exchange form, all numbers little-endian (int64 / float64)."""
    n = d.points.shape[1]
    head = MAGIC + struct.pack("<4q", len(d.facet), n, d.n_samples, len(d.eigenvalues))
    body = [
        np.asarray(d.facet, dtype="<i8").tobytes(),
        np.asarray(d.interval, dtype="<f8").tobytes(),
        np.ascontiguousarray(d.points, dtype="<f8").tobytes(),
        np.ascontiguousarray(d.eigenvalues, dtype="<f8").tobytes(),
        np.ascontiguousarray(d.traces, dtype="<f8").tobytes(),
    ]
    return head + b"".join(body)


def write_bsd(path, d: BoundarySpectralData) -> None:
    with open(path, "wb") as fh:
        fh.write(bsd_bytes(d))


def read_bsd(path) -> BoundarySpectralData:
    raw = open(path, "rb").read()
    if raw[:8] != MAGIC:
        raise BSDError(f"{path}: not a boundary spectral data file")
    nf, n, S, m = struct.unpack_from("<4q", raw, 8)
    off = 40

    def take(count, dtype):
        nonlocal off
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        off += 8 * count
        return arr.astype(dtype[1:])

    facet = tuple(int(v) for v in take(nf, "<i8"))
    interval = tuple(float(v) for v in take(2, "<f8"))
    points = take(S * n, "<f8").reshape(S, n)
    lam = take(m, "<f8")
    traces = take(m * S, "<f8").reshape(m, S)
    if off != len(raw):
        raise BSDError(f"{path}: trailing or missing bytes")
    return BoundarySpectralData(facet, interval, points, traces, lam)
