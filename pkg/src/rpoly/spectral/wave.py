"""Wave evolution: modal synthesis (Neumann) and implicit stepping for the DtN map."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import splu

from .eigen import EigenSystem
from .mesh import Mesh


class ResolutionError(RuntimeError):
    """Modal basis or time step too coarse for the requested data."""


@dataclass(frozen=True, eq=False)
class WaveField:
    """Nodal samples ``values[i]`` of u(., times[i]) and of its time derivative."""

    times: np.ndarray
    coefficients: np.ndarray  # (T, m)
    rates: np.ndarray  # (T, m)
    values: np.ndarray  # (T, P)
    velocities: np.ndarray  # (T, P)
    truncation: float

    def energy(self, eigenvalues: np.ndarray) -> np.ndarray:
        """Modal energy sum_k lambda_k c_k^2 + c_k'^2 = <Ku,u> + <Mu_t,u_t>."""
        return (np.maximum(eigenvalues, 0) * self.coefficients**2 + self.rates**2).sum(axis=1)


def _project(es: EigenSystem, f):
    if f is None:
        return np.zeros(es.count), 0.0
    f = np.array(f, dtype=float)
    f[es.fixed] = 0.0
    Mf = es.mass @ f
    c = es.vectors.T @ Mf
    total = float(f @ Mf)
    rest = max(total - float(c @ c), 0.0)
    return c, (np.sqrt(rest / total) if total > 0 else 0.0)


def _propagators(omega: np.ndarray, t: np.ndarray):
    """cos(w t), sin(w t)/w and -w sin(w t), with the w = 0 limits."""
    wt = np.outer(t, omega)
    cos = np.cos(wt)
    zero = omega == 0
    safe = np.where(zero, 1.0, omega)
    sinc = np.where(zero, t[:, None], np.sin(wt) / safe)
    dsin = -omega * np.sin(wt)
    return cos, sinc, dsin


def synthesize_wave(
    es: EigenSystem,
    a=None,
    b=None,
    times=(0.0,),
    source: Callable[[float], np.ndarray] | None = None,
    *,
    max_truncation: float = 0.05,
    zero_tol: float = 1e-8,
    quad: int = 64,
) -> WaveField:
    """Modal solution of u_tt + Delta u = f with Neumann conditions.

    u(t) = sum_k [cos(w_k t) a_k + sin(w_k t)/w_k b_k + int_0^t sin(w_k(t-s))/w_k f_k(s) ds] phi_k
    with w_k = sqrt(lambda_k); zero modes evolve as a_k + t b_k.

    Parameters
    ----------
    a, b : nodal arrays, optional
        Initial value and velocity.
    source : callable, optional
        ``source(t)`` returns the nodal load density at time t.
    max_truncation : float
        Largest admissible relative M-norm of the part of ``a`` or ``b``
        outside the computed modes.
    quad : int
        Gauss-Legendre nodes for the Duhamel integral over [0, t].

    Raises
    ------
    ResolutionError
        If the initial data are not resolved by the modal basis.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    ak, ra = _project(es, a)
    bk, rb = _project(es, b)
    trunc = max(ra, rb)
    if trunc > max_truncation:
        raise ResolutionError(f"initial data only resolved to relative error {trunc:.3g} by {es.count} modes")
    lam = np.where(np.abs(es.eigenvalues) <= zero_tol, 0.0, es.eigenvalues)
    omega = np.sqrt(np.maximum(lam, 0.0))
    cos, sinc, dsin = _propagators(omega, times)
    C = cos * ak + sinc * bk
    D = dsin * ak + cos * bk
    if source is not None:
        x, w = np.polynomial.legendre.leggauss(quad)
        for i, t in enumerate(times):
            if t == 0:
                continue
            s = 0.5 * t * (x + 1)
            fk = np.stack([es.vectors.T @ (es.mass @ _masked(es, source(si))) for si in s])  # (q, m)
            cq, sq, _ = _propagators(omega, t - s)
            C[i] += 0.5 * t * (w[:, None] * sq * fk).sum(axis=0)
            D[i] += 0.5 * t * (w[:, None] * cq * fk).sum(axis=0)
    return WaveField(times, C, D, C @ es.vectors.T, D @ es.vectors.T, trunc)


def _masked(es, f):
    f = np.array(f, dtype=float)
    f[es.fixed] = 0.0
    return f


@dataclass(frozen=True, eq=False)
class DtNResult:
    """Outward normal derivative samples ``flux[i, j]`` at ``times[i]``, ``points[j]``."""

    times: np.ndarray
    s: np.ndarray
    points: np.ndarray
    flux: np.ndarray
    courant: float


def _wave_speed(mesh: Mesh, metric) -> float:
    c = 0.0
    for i, piece in enumerate(metric.pieces):
        X = mesh.nodes[np.unique(mesh.elements[mesh.parent == i])]
        g = piece.value(X)
        c = max(c, float(np.sqrt(1.0 / np.linalg.eigvalsh(g)[..., 0]).max()))
    return c


def dtn_map(
    es: EigenSystem,
    facet,
    f: Callable[[float, np.ndarray], np.ndarray],
    T: float,
    *,
    interval=(0.0, 1.0),
    steps: int = 2048,
    max_courant: float = 8.0,
    start_tol: float = 1e-12,
) -> DtNResult:
    """Dirichlet-to-Neumann map on a boundary patch.

    Solves u_tt + Delta u = 0 with u = f on the patch, u = 0 on the rest of
    the boundary and zero Cauchy data, by average-acceleration Newmark
    (implicit, second order, unconditionally stable).  The normal derivative
    is recovered from the discrete reaction divided by the lumped boundary
    mass.

    Parameters
    ----------
    es : EigenSystem
        Supplies mesh, metric and the assembled K, M.
    f : callable
        ``f(t, s)`` with ``s`` the facet fraction in [0, 1]; must vanish at t = 0.
    interval : (s0, s1)
        Patch as a sub-interval of the facet.

    Raises
    ------
    ResolutionError
        If the Courant number c dt / h exceeds ``max_courant``.
    ValueError
        If the boundary data do not vanish at t = 0.
    """
    mesh, K, M = es.mesh, es.stiffness.tocsr(), es.mass.tocsr()
    facet = tuple(sorted(facet))
    if len(mesh.complex.cofaces.get(facet, ())) != 1:
        raise ValueError(f"{facet} is not a boundary facet")
    s0, s1 = interval
    ids = mesh.facet_nodes[facet]
    sfrac = np.linspace(0.0, 1.0, len(ids))
    inside = (sfrac > s0) & (sfrac < s1)
    gamma = ids[inside]
    sg = sfrac[inside]
    dt = T / steps
    courant = _wave_speed(mesh, es.metric) * dt / mesh.h
    if courant > max_courant:
        raise ResolutionError(f"Courant number {courant:.2f} exceeds {max_courant}")
    if np.abs(f(0.0, sg)).max(initial=0.0) > start_tol:
        raise ValueError("boundary data must vanish near t = 0")
    bnd = mesh.boundary_nodes
    P = mesh.n_nodes
    free = np.setdiff1d(np.arange(P), bnd)
    pos = np.searchsorted(bnd, gamma)

    def ub(t):
        u = np.zeros(len(bnd))
        u[pos] = f(t, sg)
        return u

    def ab(t):
        d = dt / 4
        return (ub(t + d) - 2 * ub(t) + ub(t - d)) / d**2

    Kii, Kib = K[free][:, free], K[free][:, bnd]
    Mii, Mib = M[free][:, free], M[free][:, bnd]
    Kbi, Kbb = K[bnd][:, free], K[bnd][:, bnd]
    Mbi, Mbb = M[bnd][:, free], M[bnd][:, bnd]
    beta = 0.25
    lu = splu((Mii + beta * dt**2 * Kii).tocsc())
    # lumped boundary mass along the facet, metric arclength
    X = mesh.nodes[ids]
    tau = (X[-1] - X[0]) / np.linalg.norm(X[-1] - X[0])
    side = mesh.complex.cofaces[facet][0]
    mid = 0.5 * (X[1:] + X[:-1])
    g = es.metric.pieces[side].value(mid)
    seg = np.linalg.norm(X[1:] - X[:-1], axis=1) * np.sqrt(np.einsum("i,sij,j->s", tau, g, tau))
    lump = np.zeros(len(ids))
    lump[:-1] += seg / 2
    lump[1:] += seg / 2
    lump = lump[inside]
    u = np.zeros(len(free))
    v = np.zeros_like(u)
    acc = np.zeros_like(u)
    times = dt * np.arange(steps + 1)
    out = np.zeros((steps + 1, len(gamma)))
    for n in range(1, steps + 1):
        t = times[n]
        uB, aB = ub(t), ab(t)
        pred = u + dt * v + 0.5 * dt**2 * (1 - 2 * beta) * acc
        rhs = -(Mib @ aB) - (Kib @ uB) - Kii @ pred
        a_new = lu.solve(rhs)
        u = pred + beta * dt**2 * a_new
        v = v + 0.5 * dt * (acc + a_new)
        acc = a_new
        react = Mbi @ acc + Mbb @ aB + Kbi @ u + Kbb @ uB
        out[n] = react[pos] / lump
    return DtNResult(times, sg, mesh.nodes[gamma], out, courant)
