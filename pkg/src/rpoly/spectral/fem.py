"""P1 stiffness and mass matrices of the piecewise Riemannian Dirichlet form."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from ..metric import MetricError, PiecewiseMetric
from .mesh import Mesh


@lru_cache(maxsize=8)
def triangle_rule(q: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) Gauss rule on the reference triangle.

    Returns points (q*q, 2) and weights summing to 1/2; exact for total
    degree <= 2q - 2.
    """
    t, w = np.polynomial.legendre.leggauss(q)
    t = 0.5 * (t + 1)
    w = 0.5 * w
    U, V = np.meshgrid(t, t, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([U.ravel(), (V * (1 - U)).ravel()])
    wts = (WU * WV * (1 - U)).ravel()
    return pts, wts


def element_metric(mesh: Mesh, metric: PiecewiseMetric, ref_pts: np.ndarray) -> np.ndarray:
    """Metric at mapped reference points: (E, Q, 2, 2)."""
    X0 = mesh.nodes[mesh.elements[:, 0]]
    X = X0[:, None, :] + np.einsum("eij,qj->eqi", mesh.jacobians, ref_pts)
    out = np.empty(X.shape[:2] + (2, 2))
    for i, piece in enumerate(metric.pieces):
        sel = mesh.parent == i
        if sel.any():
            out[sel] = piece.value(X[sel])
    return out


def assemble_forms(mesh: Mesh, metric: PiecewiseMetric, q: int = 4) -> tuple[csr_matrix, csr_matrix]:
    """Stiffness K and mass M of the gradient-only form.

    K_ab = sum_i int_{Omega_i} <grad phi_a, grad phi_b>_g dV_g,
    M_ab = int phi_a phi_b dV_g, with dV_g = sqrt(det g) dx.

    Raises
    ------
    MetricError
        If the metric is not positive definite at some quadrature point.
    """
    pts, wts = triangle_rule(q)
    g = element_metric(mesh, metric, pts)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    if not ((g[..., 0, 0] > 0) & (det > 0)).all():
        bad = int(np.argmin(np.minimum(g[..., 0, 0], det).min(axis=1)))
        raise MetricError(f"metric is not positive definite on simplex {metric.complex.top[mesh.parent[bad]]}")
    ginv = np.linalg.inv(g)
    vol = np.abs(np.linalg.det(mesh.jacobians))
    w = wts[None, :] * vol[:, None] * np.sqrt(det)  # (E, Q)
    D = mesh.basis_gradients
    Gbar = np.einsum("eq,eqij->eij", w, ginv)
    Ke = np.einsum("eai,eij,ebj->eab", D, Gbar, D)
    phi = np.column_stack([1 - pts.sum(axis=1), pts])  # (Q, 3)
    Me = np.einsum("eq,qa,qb->eab", w, phi, phi)
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    P = mesh.n_nodes
    K = coo_matrix((Ke.ravel(), (rows, cols)), shape=(P, P)).tocsr()
    M = coo_matrix((Me.ravel(), (rows, cols)), shape=(P, P)).tocsr()
    K = ((K + K.T) * 0.5).tocsr()
    M = ((M + M.T) * 0.5).tocsr()
    return K, M
