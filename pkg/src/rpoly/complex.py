"""Combinatorial model of a finite simplicial complex and its structural checks.

Vertices carry coordinates in one shared reference chart; every n-simplex
uses the affine restriction of that chart.  Gluing is purely combinatorial
(shared vertex ids), so per-simplex metrics may disagree across a facet.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

Simplex = tuple[int, ...]


class ComplexError(ValueError):
    """Raised for malformed or non-manifold complexes."""


@dataclass(frozen=True)
class FacetClass:
    facet: Simplex
    index: int
    kind: str  # "interface" or "boundary"
    cofaces: tuple[int, ...]

    @property
    def is_interface(self) -> bool:
        return self.kind == "interface"


@dataclass(frozen=True)
class SimplicialComplex:
    """Closed, face-complete simplicial complex of dimension ``dim``.

    Attributes
    ----------
    dim : int
        Top dimension n.
    coords : dict
        Vertex id -> reference coordinates (length n).
    simplices : tuple of tuple
        ``simplices[k]`` is the sorted tuple of canonical k-simplices.
    cofaces : dict
        (n-1)-simplex -> indices of the n-simplices containing it.
    """

    dim: int
    coords: Mapping[int, np.ndarray]
    simplices: tuple[tuple[Simplex, ...], ...]
    cofaces: Mapping[Simplex, tuple[int, ...]]
    _index: tuple[Mapping[Simplex, int], ...] = field(repr=False, compare=False, default=())

    @property
    def top(self) -> tuple[Simplex, ...]:
        return self.simplices[self.dim]

    @property
    def facets(self) -> tuple[Simplex, ...]:
        return self.simplices[self.dim - 1]

    @property
    def n_top(self) -> int:
        return len(self.top)

    def index(self, simplex: Iterable[int]) -> int:
        s = tuple(sorted(simplex))
        try:
            return self._index[len(s) - 1][s]
        except (KeyError, IndexError):
            raise ComplexError(f"simplex {s} is not in the complex") from None

    def facet_index(self, facet: Iterable[int]) -> int:
        f = tuple(sorted(facet))
        if len(f) != self.dim:
            raise ComplexError(f"{f} is not an (n-1)-simplex")
        return self.index(f)

    def vertex_array(self, simplex: Sequence[int]) -> np.ndarray:
        return np.array([self.coords[v] for v in simplex], dtype=float)

    def facets_of(self, top_index: int) -> list[Simplex]:
        t = self.top[top_index]
        return [tuple(f) for f in combinations(t, self.dim)]

    def barycentric(self, top_index: int, x: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of points ``x`` (shape (..., n)) in an n-simplex."""
        verts = self.vertex_array(self.top[top_index])
        x = np.asarray(x, dtype=float)
        T = (verts[1:] - verts[0]).T
        lam = np.linalg.solve(T, (x - verts[0]).reshape(-1, self.dim).T).T
        out = np.concatenate([1.0 - lam.sum(axis=1, keepdims=True), lam], axis=1)
        return out.reshape(x.shape[:-1] + (self.dim + 1,))

    def locate(self, x: np.ndarray, tol: float = 1e-12) -> list[int]:
        """Indices of all n-simplices whose closure contains ``x``."""
        return [i for i in range(self.n_top) if self.barycentric(i, x).min() >= -tol]


def _canonical(t: Iterable[int]) -> Simplex:
    return tuple(sorted(int(v) for v in t))


def build_complex(
    n: int,
    n_simplices: Sequence[Sequence[int]],
    vertex_charts: Mapping[int, Sequence[float]],
    extra_simplices: Sequence[Sequence[int]] = (),
) -> SimplicialComplex:
    """Build a face-closed complex from its n-simplices.

    ``extra_simplices`` are lower-dimensional simplices stored in addition to
    the faces of the n-simplices (used to model dangling pieces).
    Coface counts are indexed but not validated; see ``classify_facets``.
    """
    if n < 1:
        raise ComplexError("dimension must be >= 1")
    if not n_simplices:
        raise ComplexError("complex has no n-simplices")
    top: set[Simplex] = set()
    for t in n_simplices:
        if len(t) != n + 1:
            raise ComplexError(f"simplex {tuple(t)} has {len(t)} vertices, expected {n + 1}")
        c = _canonical(t)
        if len(set(c)) != n + 1:
            raise ComplexError(f"simplex {tuple(t)} repeats a vertex")
        if c in top:
            raise ComplexError(f"duplicate n-simplex {c}")
        top.add(c)
    stored: list[set[Simplex]] = [set() for _ in range(n + 1)]
    for t in top:
        for k in range(n + 1):
            stored[k].update(combinations(t, k + 1))
    for e in extra_simplices:
        c = _canonical(e)
        if not 1 <= len(c) <= n or len(set(c)) != len(c):
            raise ComplexError(f"invalid extra simplex {tuple(e)}")
        for k in range(len(c)):
            stored[k].update(combinations(c, k + 1))
    coords = {}
    for (v,) in stored[0]:
        if v not in vertex_charts:
            raise ComplexError(f"vertex {v} has no reference coordinates")
        x = np.asarray(vertex_charts[v], dtype=float)
        if x.shape != (n,):
            raise ComplexError(f"vertex {v} coordinates must have length {n}")
        x.setflags(write=False)
        coords[v] = x
    simplices = tuple(tuple(sorted(s)) for s in stored)
    index = tuple({s: i for i, s in enumerate(level)} for level in simplices)
    cof: dict[Simplex, list[int]] = {f: [] for f in simplices[n - 1]}
    for i, t in enumerate(simplices[n]):
        for f in combinations(t, n):
            cof[f].append(i)
    for i, t in enumerate(simplices[n]):
        verts = np.array([coords[v] for v in t])
        if abs(np.linalg.det(verts[1:] - verts[0])) < 1e-14:
            raise ComplexError(f"n-simplex {t} is degenerate in its reference chart")
    return SimplicialComplex(
        dim=n,
        coords=coords,
        simplices=simplices,
        cofaces={f: tuple(v) for f, v in cof.items()},
        _index=index,
    )


def classify_facets(c: SimplicialComplex) -> list[FacetClass]:
    """Label every (n-1)-simplex as interface (2 cofaces) or boundary (1 coface)."""
    out = []
    for i, f in enumerate(c.facets):
        cf = c.cofaces[f]
        if len(cf) == 1:
            kind = "boundary"
        elif len(cf) == 2:
            kind = "interface"
        elif len(cf) == 0:
            raise ComplexError(f"facet {f} lies in no n-simplex")
        else:
            raise ComplexError(f"non-manifold facet {f}: {len(cf)} cofaces")
        out.append(FacetClass(facet=f, index=i, kind=kind, cofaces=tuple(cf)))
    return out


def check_dimensional_homogeneity(c: SimplicialComplex) -> tuple[bool, list[Simplex]]:
    """Every stored simplex must be a face of some n-simplex."""
    covered: set[Simplex] = set()
    for t in c.top:
        for k in range(1, c.dim + 2):
            covered.update(combinations(t, k))
    offenders = [s for level in c.simplices[: c.dim] for s in level if s not in covered]
    return not offenders, offenders


def dual_graph(c: SimplicialComplex, facets: Iterable[Simplex] | None = None):
    """Sparse adjacency of n-simplices glued along the given (default: all) facets."""
    rows, cols = [], []
    for f in c.facets if facets is None else facets:
        cf = c.cofaces[f]
        for a, b in combinations(cf, 2):
            rows += [a, b]
            cols += [b, a]
    data = np.ones(len(rows))
    return coo_matrix((data, (rows, cols)), shape=(c.n_top, c.n_top)).tocsr()


def check_chainability(c: SimplicialComplex) -> bool:
    """True iff the n-simplices are connected through shared (n-1)-faces."""
    ncomp, _ = connected_components(dual_graph(c), directed=False)
    return ncomp == 1


def skeleton(c: SimplicialComplex, k: int) -> set[Simplex]:
    if not 0 <= k <= c.dim:
        raise ComplexError(f"skeleton order {k} outside [0, {c.dim}]")
    return set(c.simplices[k])
