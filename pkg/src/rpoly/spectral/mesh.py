"""Uniform, interface-conforming refinement of a planar complex into P1 elements."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from ..complex import Simplex, SimplicialComplex, classify_facets

MAX_ASPECT = 50.0


class MeshError(ValueError):
    pass


def aspect_ratio(tri: np.ndarray) -> float:
    """Longest edge over smallest altitude (2/sqrt(3) for an equilateral triangle)."""
    e = [np.linalg.norm(tri[i] - tri[j]) for i, j in ((0, 1), (1, 2), (2, 0))]
    d1, d2 = tri[1] - tri[0], tri[2] - tri[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    lmax = max(e)
    return lmax / (2 * area / lmax)


@dataclass(frozen=True, eq=False)
class Mesh:
    """P1 triangulation refining every 2-simplex of ``complex`` into ``N**2`` copies.

    Attributes
    ----------
    nodes : (P, 2) reference coordinates.
    elements : (E, 3) node indices.
    parent : (E,) index of the 2-simplex containing each element.
    facet_nodes : facet -> (N + 1,) node ids ordered from facet[0] to facet[1].
    h : longest element edge.
    """

    complex: SimplicialComplex
    nodes: np.ndarray
    elements: np.ndarray
    parent: np.ndarray
    facet_nodes: dict
    N: int
    h: float
    boundary: tuple[Simplex, ...] = ()
    interfaces: tuple[Simplex, ...] = ()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        ids = set()
        for f in self.boundary:
            ids.update(self.facet_nodes[f].tolist())
        return np.array(sorted(ids), dtype=int)

    @cached_property
    def edge_elements(self) -> dict:
        """Sorted node pair -> list of elements sharing that edge."""
        out: dict[tuple[int, int], list[int]] = {}
        for e, tri in enumerate(self.elements):
            for a, b in combinations(sorted(tri.tolist()), 2):
                out.setdefault((a, b), []).append(e)
        return out

    @cached_property
    def jacobians(self) -> np.ndarray:
        X = self.nodes[self.elements]
        return np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=2)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(E, 3, 2) constant gradients of the three barycentric hat functions."""
        Binv = np.linalg.inv(self.jacobians)
        g12 = Binv  # row k is grad(lambda_{k+1})
        g0 = -(g12[:, 0] + g12[:, 1])
        return np.stack([g0, g12[:, 0], g12[:, 1]], axis=1)

    def locate(self, x, tol: float = 1e-12) -> tuple[int, np.ndarray]:
        """Element containing ``x`` and the barycentric coordinates of ``x`` in it."""
        x = np.asarray(x, dtype=float)
        X0 = self.nodes[self.elements[:, 0]]
        lam12 = np.einsum("eij,ej->ei", np.linalg.inv(self.jacobians), x - X0)
        lam = np.column_stack([1 - lam12.sum(axis=1), lam12])
        e = int(np.argmax(lam.min(axis=1)))
        if lam[e].min() < -tol:
            raise MeshError(f"point {x} is outside the mesh")
        return e, lam[e]

    def facet_s(self, facet) -> np.ndarray:
        """Reference arclength of the facet nodes measured from facet[0]."""
        ids = self.facet_nodes[tuple(sorted(facet))]
        return np.linalg.norm(self.nodes[ids] - self.nodes[ids[0]], axis=1)


def refine(c: SimplicialComplex, target_h: float) -> Mesh:
    """Split every triangle into N^2 similar triangles, N = ceil(longest edge / target_h).

    One global N keeps every shared edge subdivided identically, so element
    traces match across interfaces by construction.
    """
    if c.dim != 2:
        raise MeshError("refinement is implemented for n = 2")
    if target_h <= 0:
        raise MeshError("target_h must be positive")
    for t in c.top:
        ar = aspect_ratio(c.vertex_array(t))
        if ar > MAX_ASPECT:
            raise MeshError(f"degenerate element {t}: aspect ratio {ar:.1f} > {MAX_ASPECT}")
    lmax = max(np.linalg.norm(c.coords[a] - c.coords[b]) for a, b in c.simplices[1])
    N = max(1, math.ceil(lmax / target_h - 1e-9))
    verts = [v for (v,) in c.simplices[0]]
    vid = {v: i for i, v in enumerate(verts)}
    nodes = [np.array([c.coords[v] for v in verts])]
    count = len(verts)
    edge_off = {}
    for a, b in c.simplices[1]:
        k = np.arange(1, N)[:, None] / N
        nodes.append(c.coords[a] + k * (c.coords[b] - c.coords[a]))
        edge_off[(a, b)] = count
        count += N - 1
    A, B = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    elements, parent = [], []
    up = [(a, b) for a in range(N) for b in range(N - a)]
    down = [(a, b) for a in range(N) for b in range(N - a - 1)]
    up = np.array(up, dtype=int).reshape(-1, 2)
    down = np.array(down, dtype=int).reshape(-1, 2)
    for ti, t in enumerate(c.top):
        v0, v1, v2 = t
        lut = np.full((N + 1, N + 1), -1, dtype=int)
        W = [N - A - B, A, B]  # barycentric weights (times N) on v0, v1, v2
        valid = W[0] >= 0
        inner = valid & (W[0] > 0) & (A > 0) & (B > 0)
        ni = int(inner.sum())
        P = (W[0][inner, None] * c.coords[v0] + A[inner, None] * c.coords[v1] + B[inner, None] * c.coords[v2]) / N
        nodes.append(P)
        lut[inner] = count + np.arange(ni)
        count += ni
        lut[N, 0] = vid[v1]
        lut[0, N] = vid[v2]
        lut[0, 0] = vid[v0]
        for (p, q), (wp, wq) in (((v0, v1), (0, 1)), ((v0, v2), (0, 2)), ((v1, v2), (1, 2))):
            mask = valid & (W[wp] > 0) & (W[wq] > 0) & (W[3 - wp - wq] == 0)
            # edge sample index is the weight on the larger-id vertex
            k = W[wq][mask] if q > p else W[wp][mask]
            lo, hi = min(p, q), max(p, q)
            lut[mask] = edge_off[(lo, hi)] + k - 1
        e_up = np.column_stack([lut[up[:, 0], up[:, 1]], lut[up[:, 0] + 1, up[:, 1]], lut[up[:, 0], up[:, 1] + 1]])
        e_dn = np.column_stack([lut[down[:, 0] + 1, down[:, 1]], lut[down[:, 0] + 1, down[:, 1] + 1], lut[down[:, 0], down[:, 1] + 1]])
        el = np.vstack([e_up, e_dn])
        assert (el >= 0).all()
        elements.append(el)
        parent.append(np.full(len(el), ti))
    nodes = np.vstack(nodes)
    facet_nodes = {}
    for a, b in c.simplices[1]:
        ids = np.concatenate([[vid[a]], edge_off[(a, b)] + np.arange(N - 1), [vid[b]]]).astype(int)
        facet_nodes[(a, b)] = ids
    classes = classify_facets(c)
    return Mesh(
        complex=c,
        nodes=nodes,
        elements=np.vstack(elements),
        parent=np.concatenate(parent),
        facet_nodes=facet_nodes,
        N=N,
        h=lmax / N,
        boundary=tuple(f.facet for f in classes if not f.is_interface),
        interfaces=tuple(f.facet for f in classes if f.is_interface),
    )
