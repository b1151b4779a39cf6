"""Piecewise polynomial Riemannian metrics, admissible paths and graph distances."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, product
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .complex import SimplicialComplex

MAX_DEGREE = 4
SPD_TOL = 1e-10


class MetricError(ValueError):
    pass


class DisconnectedError(MetricError):
    pass


def _pad(c: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    out = np.zeros(shape)
    out[tuple(slice(0, s) for s in c.shape)] = c
    return out


@dataclass(frozen=True, eq=False)
class PolyMetric:
    """Metric on one n-simplex: each entry g_ij is a polynomial in reference coordinates.

    ``coeffs[i, j, a_1, ..., a_n]`` multiplies ``x_1**a_1 * ... * x_n**a_n``.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        n = c.shape[0]
        if c.ndim != n + 2 or c.shape[1] != n:
            raise MetricError(f"coefficient array of shape {c.shape} is not (n, n, d+1, ...)")
        if c.shape[2] - 1 > MAX_DEGREE:
            raise MetricError(f"polynomial degree {c.shape[2] - 1} exceeds {MAX_DEGREE}")
        if not np.allclose(c, np.swapaxes(c, 0, 1), rtol=0, atol=0):
            raise MetricError("metric coefficients are not symmetric in (i, j)")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, g) -> "PolyMetric":
        g = np.asarray(g, dtype=float)
        n = g.shape[0]
        return cls(g.reshape((n, n) + (1,) * n))

    @classmethod
    def from_entries(cls, n: int, entries: Iterable[tuple[int, int, Sequence[int], float]]) -> "PolyMetric":
        """Build from ``(i, j, multi_index, coefficient)`` records; (i, j) and (j, i) are one entry."""
        entries = list(entries)
        deg = max((max(mi) for _, _, mi, _ in entries if len(mi)), default=0)
        if deg > MAX_DEGREE:
            raise MetricError(f"monomial degree {deg} exceeds {MAX_DEGREE}")
        c = np.zeros((n, n) + (deg + 1,) * n)
        for i, j, mi, v in entries:
            if not (0 <= i < n and 0 <= j < n) or len(mi) != n:
                raise MetricError(f"bad metric entry ({i}, {j}, {tuple(mi)})")
            a, b = min(i, j), max(i, j)
            c[(a, b) + tuple(mi)] += v
            if a != b:
                c[(b, a) + tuple(mi)] = c[(a, b) + tuple(mi)]
        return cls(c)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def degree(self) -> int:
        """Largest exponent carrying a nonzero coefficient (0 for constant metrics)."""
        nz = np.argwhere(self.coeffs != 0)
        return int(nz[:, 2:].max()) if len(nz) else 0

    def entries(self) -> list[tuple[int, int, tuple[int, ...], float]]:
        out = []
        n = self.dim
        for i in range(n):
            for j in range(i, n):
                block = self.coeffs[i, j]
                for mi in zip(*np.nonzero(block)):
                    out.append((i, j, tuple(int(a) for a in mi), float(block[mi])))
        return out

    def scaled(self, factor: float) -> "PolyMetric":
        return PolyMetric(self.coeffs * factor)

    @cached_property
    def _d1(self) -> np.ndarray:
        shape = self.coeffs.shape
        return np.stack([_pad(P.polyder(self.coeffs, axis=2 + k), shape) for k in range(self.dim)])

    @cached_property
    def _d2(self) -> np.ndarray:
        shape = self.coeffs.shape
        n = self.dim
        out = np.zeros((n, n) + shape)
        for k in range(n):
            for l in range(n):
                out[k, l] = _pad(P.polyder(self._d1[k], axis=2 + l), shape)
        return out

    def _eval(self, c: np.ndarray, x: np.ndarray) -> np.ndarray:
        n = self.dim
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        x = x.reshape(-1, n)
        d1 = self.coeffs.shape[2]
        pw = x[:, :, None] ** np.arange(d1)
        mono = pw[:, 0, :]
        for k in range(1, n):
            mono = (mono[:, :, None] * pw[:, k, None, :]).reshape(len(x), -1)
        head = c.shape[: c.ndim - n]
        out = mono @ c.reshape(head + (-1,)).reshape(-1, d1**n).T
        return out.reshape(lead + head)

    def value(self, x) -> np.ndarray:
        """g_ij at points ``x`` (..., n) -> (..., n, n)."""
        return self._eval(self.coeffs, x)

    def grad(self, x) -> np.ndarray:
        """d_k g_ij -> (..., n, n, n) indexed [k, i, j]."""
        return self._eval(self._d1, x)

    def hess(self, x) -> np.ndarray:
        """d_k d_l g_ij -> (..., n, n, n, n) indexed [k, l, i, j]."""
        return self._eval(self._d2, x)


def inverse_metric_jet(g: np.ndarray, dg: np.ndarray, ddg: np.ndarray | None = None):
    """Inverse metric G = g^-1 and its first (and second) coordinate derivatives.

    Shapes follow ``PolyMetric``: dg[..., k, i, j], ddg[..., k, l, i, j].
    """
    G = np.linalg.inv(g)
    Gd = np.einsum("...ab,...kbc->...kac", G, dg)  # G dg_k
    dG = -np.einsum("...kab,...bc->...kac", Gd, G)
    if ddg is None:
        return G, dG
    t1 = -np.einsum("...ab,...klbc,...cd->...klad", G, ddg, G)
    t2 = np.einsum("...kab,...lbc,...cd->...klad", Gd, Gd, G)
    ddG = t1 + t2 + np.swapaxes(t2, -4, -3)
    return G, dG, ddG


@dataclass(frozen=True, eq=False)
class PiecewiseMetric:
    """One ``PolyMetric`` per n-simplex of ``complex`` (same order as ``complex.top``)."""

    complex: SimplicialComplex
    pieces: tuple[PolyMetric, ...]

    def __post_init__(self):
        if len(self.pieces) != self.complex.n_top:
            raise MetricError(f"{len(self.pieces)} metric pieces for {self.complex.n_top} n-simplices")
        for p in self.pieces:
            if p.dim != self.complex.dim:
                raise MetricError("metric dimension does not match the complex")

    def __getitem__(self, i: int) -> PolyMetric:
        return self.pieces[i]

    @classmethod
    def constant(cls, c: SimplicialComplex, matrices) -> "PiecewiseMetric":
        """Constant metric per simplex; a single matrix applies everywhere."""
        mats = np.asarray(matrices, dtype=float)
        if mats.ndim == 2:
            mats = np.broadcast_to(mats, (c.n_top,) + mats.shape)
        return cls(c, tuple(PolyMetric.constant(g) for g in mats))

    @classmethod
    def euclidean(cls, c: SimplicialComplex) -> "PiecewiseMetric":
        return cls.constant(c, np.eye(c.dim))

    def replace(self, index: int, piece: PolyMetric) -> "PiecewiseMetric":
        pieces = list(self.pieces)
        pieces[index] = piece
        return PiecewiseMetric(self.complex, tuple(pieces))

    def validate(self, grid: int = 6) -> None:
        """Raise ``MetricError`` unless every piece is SPD on a barycentric lattice."""
        c = self.complex
        lattice = np.array([a for a in product(range(grid + 1), repeat=c.dim + 1) if sum(a) == grid]) / grid
        for i, piece in enumerate(self.pieces):
            x = lattice @ c.vertex_array(c.top[i])
            ev = np.linalg.eigvalsh(piece.value(x))
            if not np.all(np.isfinite(ev)) or ev.min() <= SPD_TOL:
                raise MetricError(
                    f"metric on n-simplex {c.top[i]} is not positive definite "
                    f"(smallest eigenvalue {ev.min():.3g})"
                )


# ---------------------------------------------------------------- lengths


_GAUSS = {k: np.polynomial.legendre.leggauss(k) for k in (3, 5, 8)}


def segment_lengths(piece: PolyMetric, a: np.ndarray, b: np.ndarray, order: int = 3) -> np.ndarray:
    """Metric length of straight segments a->b (rows) by Gauss-Legendre quadrature."""
    nodes, weights = _GAUSS[order] if order in _GAUSS else np.polynomial.legendre.leggauss(order)
    t = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    a = np.atleast_2d(a)
    d = np.atleast_2d(b) - a
    x = a[:, None, :] + t[None, :, None] * d[:, None, :]
    g = piece.value(x)
    speed2 = np.einsum("si,sqij,sj->sq", d, g, d)
    return np.sqrt(np.maximum(speed2, 0.0)) @ w


@dataclass(frozen=True)
class AdmissiblePath:
    """Polyline with one owning n-simplex per segment."""

    points: np.ndarray
    simplices: tuple[int, ...]
    length: float = math.nan

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if len(self.simplices) != max(len(pts) - 1, 0):
            raise MetricError("need one simplex per path segment")


def path_length(p: AdmissiblePath, m: PiecewiseMetric, order: int = 3, tol: float = 1e-9) -> float:
    c = m.complex
    total = 0.0
    for k, s in enumerate(p.simplices):
        a, b = p.points[k], p.points[k + 1]
        lam = c.barycentric(s, np.stack([a, b]))
        if lam.min() < -tol:
            raise MetricError(f"segment {k} leaves n-simplex {c.top[s]}")
        total += float(segment_lengths(m[s], a, b, order)[0])
    return total


# ---------------------------------------------------------------- distances


def _point_segment_distance(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    t = np.clip(((x - a) @ d) / (d @ d), 0.0, 1.0)
    return np.linalg.norm(x - (a + t[:, None] * d), axis=1)


def skeleton_distance(c: SimplicialComplex, x: np.ndarray) -> np.ndarray:
    """Reference-chart distance from points to the (n-2)-skeleton (inf if empty)."""
    x = np.atleast_2d(x)
    out = np.full(len(x), np.inf)
    if c.dim < 2:
        return out
    for (v,) in c.simplices[0]:
        out = np.minimum(out, np.linalg.norm(x - c.coords[v], axis=1))
    if c.dim >= 3:
        if c.dim > 3:
            raise NotImplementedError("skeleton exclusion implemented for n <= 3")
        for a, b in c.simplices[1]:
            out = np.minimum(out, _point_segment_distance(x, c.coords[a], c.coords[b]))
    return out


def _as_point(c: SimplicialComplex, p) -> tuple[list[int], np.ndarray]:
    if isinstance(p, tuple) and len(p) == 2 and np.ndim(p[1]) == 1:
        s, x = int(p[0]), np.asarray(p[1], dtype=float)
        if c.barycentric(s, x).min() < -1e-9:
            raise MetricError(f"point {x} is not in n-simplex {c.top[s]}")
        return [s], x
    x = np.asarray(p, dtype=float)
    owners = c.locate(x, tol=1e-12)
    if not owners:
        raise MetricError(f"point {x} lies outside the complex")
    return owners, x


class DistanceGraph:
    """Chord graph approximating distances of a Riemannian polyhedron.

    Nodes are the vertices plus samples at pitch ``h`` on every edge; inside
    each n-simplex every pair of its nodes is joined by a straight chord
    weighted with its Gauss-quadrature metric length.
    """

    def __init__(self, m: PiecewiseMetric, h: float, order: int = 3):
        if h <= 0:
            raise MetricError("resolution must be positive")
        self.metric = m
        self.h = h
        self.order = order
        c = m.complex
        pts: list[np.ndarray] = []
        vid = {}
        for (v,) in c.simplices[0]:
            vid[v] = len(pts)
            pts.append(c.coords[v])
        edge_nodes = {}
        for a, b in c.simplices[1]:
            pa, pb = c.coords[a], c.coords[b]
            k = max(1, math.ceil(np.linalg.norm(pb - pa) / h))
            ids = [vid[a]]
            for j in range(1, k):
                ids.append(len(pts))
                pts.append(pa + (pb - pa) * j / k)
            ids.append(vid[b])
            edge_nodes[(a, b)] = ids
        self.nodes = np.array(pts)
        self.simplex_nodes = []
        for t in c.top:
            ids = set()
            for e in combinations(t, 2):
                ids.update(edge_nodes[e])
            self.simplex_nodes.append(np.array(sorted(ids)))
        self.skeleton_dist = skeleton_distance(c, self.nodes)
        rows, cols, w, own = [], [], [], []
        for s, ids in enumerate(self.simplex_nodes):
            i, j = np.triu_indices(len(ids), 1)
            i, j = ids[i], ids[j]
            rows.append(i)
            cols.append(j)
            w.append(segment_lengths(m[s], self.nodes[i], self.nodes[j], order))
            own.append(np.full(len(i), s))
        self._edges = self._reduce(np.concatenate(rows), np.concatenate(cols), np.concatenate(w), np.concatenate(own))

    @staticmethod
    def _reduce(i, j, w, own):
        """Keep the lightest chord per node pair (shared facets appear once per coface)."""
        a, b = np.minimum(i, j), np.maximum(i, j)
        order = np.lexsort((w, b, a))
        a, b, w, own = a[order], b[order], w[order], own[order]
        first = np.ones(len(a), dtype=bool)
        first[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
        return a[first], b[first], w[first], own[first]

    def _solve(self, queries, rho: float | None):
        """Distances among query points; returns (matrix, paths) with paths[i][j]."""
        c = self.metric.complex
        base = len(self.nodes)
        located = [_as_point(c, q) for q in queries]
        nodes = np.vstack([self.nodes] + [x[None, :] for _, x in located])
        rows, cols, w, own = [self._edges[0]], [self._edges[1]], [self._edges[2]], [self._edges[3]]
        for qi, (owners, x) in enumerate(located):
            for s in owners:
                ids = self.simplex_nodes[s]
                rows.append(np.full(len(ids), base + qi))
                cols.append(ids)
                w.append(segment_lengths(self.metric[s], np.broadcast_to(x, (len(ids), len(x))), self.nodes[ids], self.order))
                own.append(np.full(len(ids), s))
            for qj in range(qi):
                ow = sorted(set(owners) & set(located[qj][0]))
                for s in ow:
                    rows.append(np.array([base + qj]))
                    cols.append(np.array([base + qi]))
                    w.append(segment_lengths(self.metric[s], located[qj][1], x, self.order))
                    own.append(np.array([s]))
        i, j, wt, ow = self._reduce(*(np.concatenate(v) for v in (rows, cols, w, own)))
        if rho is not None:
            keep = np.ones(len(nodes), dtype=bool)
            keep[:base] = self.skeleton_dist > rho
            mask = keep[i] & keep[j]
            i, j, wt, ow = i[mask], j[mask], wt[mask], ow[mask]
        # zero-length chords (coincident points) must survive the sparse format
        wt = np.maximum(wt, 1e-300)
        n = len(nodes)
        graph = coo_matrix((wt, (i, j)), shape=(n, n)).tocsr()
        src = base + np.arange(len(queries))
        dist, pred = dijkstra(graph, directed=False, indices=src, return_predecessors=True)
        owner = {(int(a), int(b)): int(s) for a, b, s in zip(i, j, ow)}
        D = dist[:, src]
        D[D < 1e-200] = 0.0
        return D, pred, nodes, owner, src

    @staticmethod
    def _path(pred_row, nodes, owner, a, b) -> AdmissiblePath | None:
        if a == b:
            return AdmissiblePath(nodes[[a]], ())
        seq = [b]
        while seq[-1] != a:
            k = pred_row[seq[-1]]
            if k < 0:
                return None
            seq.append(int(k))
        seq.reverse()
        simp = tuple(owner[(min(u, v), max(u, v))] for u, v in zip(seq[:-1], seq[1:]))
        return AdmissiblePath(nodes[seq], simp)

    def distance(self, p, q) -> tuple[float, AdmissiblePath]:
        D, pred, nodes, owner, src = self._solve([p, q], None)
        d = float(D[0, 1])
        if not np.isfinite(d):
            raise DisconnectedError("points are not connected in the distance graph")
        if np.allclose(nodes[src[0]], nodes[src[1]]):
            return 0.0, AdmissiblePath(nodes[[src[0]]], ())
        path = self._path(pred[0], nodes, owner, int(src[0]), int(src[1]))
        return d, AdmissiblePath(path.points, path.simplices, d)

    def restricted_distance(self, p, q, rho: float | None = None) -> float:
        rho = 2 * self.h if rho is None else rho
        D, *_ = self._solve([p, q], rho)
        return float(D[0, 1])

    def pair_distances(self, points, rho: float | None = None) -> np.ndarray:
        D, *_ = self._solve(list(points), rho)
        return D


def distance(p, q, m: PiecewiseMetric, resolution: float) -> tuple[float, AdmissiblePath]:
    """Approximate d(p, q) by the shortest path in the chord graph at pitch ``resolution``."""
    return DistanceGraph(m, resolution).distance(p, q)


def restricted_distance(p, q, m: PiecewiseMetric, resolution: float, exclusion: float | None = None) -> float:
    """Shortest path over graph nodes farther than ``exclusion`` (default 2h) from the
    (n-2)-skeleton; endpoints exempt.  Returns inf when no such path exists."""
    return DistanceGraph(m, resolution).restricted_distance(p, q, exclusion)


@dataclass(frozen=True)
class AdmissibilityVerdict:
    admissible: bool
    worst_gap: float
    worst_pair: tuple[np.ndarray, np.ndarray] | None
    pairs_checked: int = 0
    details: list = field(default_factory=list, repr=False)


def random_points(c: SimplicialComplex, count: int, rng: np.random.Generator) -> list[tuple[int, np.ndarray]]:
    out = []
    for _ in range(count):
        s = int(rng.integers(c.n_top))
        lam = rng.dirichlet(np.ones(c.dim + 1))
        out.append((s, lam @ c.vertex_array(c.top[s])))
    return out


def check_admissibility_metric(
    m: PiecewiseMetric,
    resolution: float,
    sample_pairs: int | Sequence[tuple] = 12,
    tol: float | None = None,
    seed: int = 0,
) -> AdmissibilityVerdict:
    """Compare skeleton-avoiding and unrestricted graph distances on sampled pairs.

    Exclusion radius is ``resolution``; ``tol`` defaults to ``4 * resolution``
    times the largest metric scale.
    """
    c = m.complex
    graph = DistanceGraph(m, resolution)
    if isinstance(sample_pairs, int):
        rng = np.random.default_rng(seed)
        pts = random_points(c, 2 * sample_pairs, rng)
        pairs = list(zip(pts[0::2], pts[1::2]))
    else:
        pairs = list(sample_pairs)
    if tol is None:
        scale = max(
            float(np.sqrt(np.linalg.eigvalsh(p.value(c.vertex_array(c.top[i]))).max()))
            for i, p in enumerate(m.pieces)
        )
        tol = 4 * resolution * scale
    worst, worst_pair, details = -np.inf, None, []
    for p, q in pairs:
        D = graph.pair_distances([p, q], None)[0, 1]
        R = graph.pair_distances([p, q], resolution)[0, 1]
        gap = R - D if np.isfinite(D) else (0.0 if not np.isfinite(R) else -np.inf)
        details.append((D, R))
        if gap > worst:
            worst, worst_pair = gap, (p, q)
    return AdmissibilityVerdict(
        admissible=bool(worst <= tol),
        worst_gap=float(worst),
        worst_pair=worst_pair,
        pairs_checked=len(pairs),
        details=details,
    )


__all__ = [
    "AdmissiblePath",
    "AdmissibilityVerdict",
    "DisconnectedError",
    "DistanceGraph",
    "MetricError",
    "PiecewiseMetric",
    "PolyMetric",
    "check_admissibility_metric",
    "distance",
    "inverse_metric_jet",
    "path_length",
    "random_points",
    "restricted_distance",
    "segment_lengths",
    "skeleton_distance",
]
