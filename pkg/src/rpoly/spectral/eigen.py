"""Generalized eigenpairs K v = lambda M v and diagnostics built on them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import eigsh

from ..metric import PiecewiseMetric
from .mesh import Mesh

DENSE_LIMIT = 3000


class EigenError(RuntimeError):
    pass


class SkeletonError(ValueError):
    pass


def cluster_tolerance(lam, rel: float = 1e-6):
    return rel * (1.0 + np.abs(lam))


def clusters(eigenvalues: np.ndarray, rel: float = 1e-6) -> list[np.ndarray]:
    """Group consecutive eigenvalues closer than ``rel * (1 + lambda)``."""
    lam = np.asarray(eigenvalues)
    groups, start = [], 0
    for k in range(1, len(lam) + 1):
        if k == len(lam) or lam[k] - lam[k - 1] > cluster_tolerance(lam[k - 1], rel):
            groups.append(np.arange(start, k))
            start = k
    return groups


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Lowest eigenpairs of the discretized Laplacian.

    ``vectors[:, k]`` holds nodal values of the k-th eigenfunction (zero on
    ``fixed`` nodes for Dirichlet problems); columns are M-orthonormal.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    stiffness: csr_matrix
    mass: csr_matrix
    mesh: Mesh | None = None
    metric: PiecewiseMetric | None = None
    cluster_rel: float = 1e-6
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    residuals: np.ndarray | None = None

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def clusters(self) -> list[np.ndarray]:
        return clusters(self.eigenvalues, self.cluster_rel)

    def gram(self) -> np.ndarray:
        return self.vectors.T @ (self.mass @ self.vectors)

    def subset(self, count: int) -> "EigenSystem":
        return EigenSystem(
            self.eigenvalues[:count], self.vectors[:, :count], self.stiffness, self.mass,
            self.mesh, self.metric, self.cluster_rel, self.fixed,
            None if self.residuals is None else self.residuals[:count],
        )


def _rayleigh_ritz(K, M, V):
    S = V.T @ (M @ V)
    L = np.linalg.cholesky(0.5 * (S + S.T))
    V = sla.solve_triangular(L, V.T, lower=True).T
    A = V.T @ (K @ V)
    lam, W = np.linalg.eigh(0.5 * (A + A.T))
    return lam, V @ W


def solve_eigen(
    K,
    M,
    count: int,
    fixed=None,
    *,
    mesh: Mesh | None = None,
    metric: PiecewiseMetric | None = None,
    shift: float = -1.0,
    tol_eig: float = 1e-6,
    cluster_rel: float = 1e-6,
    seed: int = 0,
    dense_limit: int = DENSE_LIMIT,
) -> EigenSystem:
    """Lowest ``count`` eigenpairs of ``K v = lambda M v``.

    Parameters
    ----------
    fixed : array of int, optional
        Nodes with homogeneous Dirichlet conditions (eliminated).
    shift : float
        Shift-invert point for the sparse path; must lie below the spectrum.
    tol_eig : float
        Bound on ``||K v - lambda M v|| / ((||K|| + |lambda| ||M||) ||v||)``.

    Raises
    ------
    EigenError
        If the solver fails or a residual exceeds ``tol_eig``.
    """
    K = csr_matrix(K)
    M = csr_matrix(M)
    P = K.shape[0]
    fixed = np.zeros(0, dtype=int) if fixed is None else np.unique(np.asarray(fixed, dtype=int))
    free = np.setdiff1d(np.arange(P), fixed)
    Kf = K[free][:, free]
    Mf = M[free][:, free]
    n = len(free)
    if not 0 < count <= n:
        raise EigenError(f"count must be in [1, {n}]")
    if n <= dense_limit:
        lam, V = sla.eigh(Kf.toarray(), Mf.toarray(), subset_by_index=[0, count - 1])
    else:
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            _, V = eigsh(Kf.tocsc(), k=count, M=Mf.tocsc(), sigma=shift, which="LM", v0=v0, tol=1e-12)
        except Exception as exc:  # ARPACK convergence failures
            raise EigenError(f"sparse eigensolver failed: {exc}") from exc
        lam, V = _rayleigh_ritz(Kf, Mf, V)
    # normwise backward error
    kn = abs(Kf).sum(axis=1).max()
    mn = abs(Mf).sum(axis=1).max()
    res = np.linalg.norm(Kf @ V - (Mf @ V) * lam, axis=0) / ((kn + np.abs(lam) * mn) * np.linalg.norm(V, axis=0))
    if (res > tol_eig).any():
        k = int(np.argmax(res))
        raise EigenError(f"eigenpair {k} did not converge: residual {res[k]:.2e}")
    full = np.zeros((P, count))
    full[free] = V
    return EigenSystem(lam, full, K, M, mesh, metric, cluster_rel, fixed, res)


def dirichlet_nodes(mesh: Mesh, facets) -> np.ndarray:
    """Nodes on the given boundary facets."""
    ids = set()
    for f in facets:
        f = tuple(sorted(f))
        if f not in mesh.boundary:
            raise ValueError(f"{f} is not a boundary facet")
        ids.update(mesh.facet_nodes[f].tolist())
    return np.array(sorted(ids), dtype=int)


def compute_spectrum(mesh: Mesh, metric: PiecewiseMetric, count: int, dirichlet=False, **kw) -> EigenSystem:
    """Assemble and solve in one call.

    ``dirichlet`` is False (pure Neumann), True (whole boundary) or a list of
    boundary facets carrying homogeneous Dirichlet conditions.
    """
    from .fem import assemble_forms

    K, M = assemble_forms(mesh, metric)
    if dirichlet is True:
        fixed = mesh.boundary_nodes
    elif dirichlet is False or dirichlet is None:
        fixed = None
    else:
        fixed = dirichlet_nodes(mesh, dirichlet)
    return solve_eigen(K, M, count, fixed, mesh=mesh, metric=metric, **kw)


def _side_elements(mesh: Mesh, facet, side_top: int) -> np.ndarray:
    ids = mesh.facet_nodes[facet]
    out = []
    for a, b in zip(ids[:-1], ids[1:]):
        els = [e for e in mesh.edge_elements[(min(a, b), max(a, b))] if mesh.parent[e] == side_top]
        if len(els) != 1:
            raise EigenError(f"interface {facet} is not conforming")
        out.append(els[0])
    return np.array(out)


def transmission_residual(es: EigenSystem, facet, q: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """L2(gamma) norms of the trace jump and the weighted flux jump per eigenfunction.

    The flux on each side is the invariant conormal form
    ``sqrt(det g) (g^{-1} grad u) . nu`` with ``nu`` the reference unit normal,
    which equals ``sqrt(g) d_sigma u`` in interface-normal coordinates.
    Norms use reference arclength on the facet.
    """
    mesh, metric = es.mesh, es.metric
    if mesh is None or metric is None:
        raise EigenError("eigen system carries no mesh/metric")
    facet = tuple(sorted(facet))
    cof = mesh.complex.cofaces.get(facet, ())
    if len(cof) != 2:
        raise EigenError(f"{facet} is not an interface")
    ids = mesh.facet_nodes[facet]
    X = mesh.nodes[ids]
    tangent = X[-1] - X[0]
    tangent = tangent / np.linalg.norm(tangent)
    nu = np.array([-tangent[1], tangent[0]])
    t, w = np.polynomial.legendre.leggauss(q)
    t = 0.5 * (t + 1)
    w = 0.5 * w
    seg = np.linalg.norm(X[1:] - X[:-1], axis=1)
    pts = X[:-1, None, :] + t[None, :, None] * (X[1:] - X[:-1])[:, None, :]  # (S, q, 2)
    flux, trace = [], []
    for side in cof:
        els = _side_elements(mesh, facet, side)
        g = metric.pieces[side].value(pts)
        sq = np.sqrt(np.linalg.det(g))
        Gnu = np.linalg.solve(g, np.broadcast_to(nu, g.shape[:-1])[..., None])[..., 0] * sq[..., None]
        D = mesh.basis_gradients[els]  # (S, 3, 2)
        U = es.vectors[mesh.elements[els]]  # (S, 3, m)
        grad = np.einsum("sai,sam->sim", D, U)
        flux.append(np.einsum("sqi,sim->sqm", Gnu, grad))
        # P1 trace of the side element evaluated at the edge quadrature points
        X0 = mesh.nodes[mesh.elements[els, 0]]
        lam12 = np.einsum("sij,sqj->sqi", np.linalg.inv(mesh.jacobians[els]), pts - X0[:, None, :])
        lam = np.concatenate([1 - lam12.sum(axis=2, keepdims=True), lam12], axis=2)
        trace.append(np.einsum("sqa,sam->sqm", lam, U))
    W = (seg[:, None] * w[None, :])[..., None]
    tj = np.sqrt((W * (trace[1] - trace[0]) ** 2).sum(axis=(0, 1)))
    fj = np.sqrt((W * (flux[1] - flux[0]) ** 2).sum(axis=(0, 1)))
    return tj, fj


def eigenmap_rank(es: EigenSystem, p, indices, rtol: float = 0.05, skeleton_tol: float = 1e-9) -> int:
    """Numerical rank of the Jacobian of ``x -> (phi_k(x))_{k in indices}`` at ``p``.

    Columns are the FEM gradients scaled by ``1 / (sqrt(lambda_k) max|phi_k|)``,
    so a gradient of natural size has unit norm; singular values below
    ``rtol`` count as zero.

    Raises
    ------
    SkeletonError
        If ``p`` lies on an element edge or vertex.
    """
    mesh = es.mesh
    e, lam = mesh.locate(p)
    if lam.min() < skeleton_tol:
        raise SkeletonError(f"point {tuple(np.asarray(p))} lies on the mesh skeleton")
    idx = np.asarray(indices, dtype=int)
    U = es.vectors[mesh.elements[e]][:, idx]  # (3, k)
    J = mesh.basis_gradients[e].T @ U  # (2, k)
    scale = np.sqrt(np.maximum(es.eigenvalues[idx], 0)) * np.abs(es.vectors[:, idx]).max(axis=0)
    J = J / np.where(scale > 0, scale, np.inf)
    s = np.linalg.svd(J, compute_uv=False)
    return int((s > rtol).sum())
