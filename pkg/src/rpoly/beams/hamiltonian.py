"""Jets of the Hamiltonian p(x, xi) = |xi|_g and the beam ODE right-hand sides.

Beam states are packed in one complex vector
``z = [x (2), xi (2), Gamma (4, row major), log u00]`` with Gamma = 2H the
Hessian of the phase.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..metric import PolyMetric, inverse_metric_jet

NZ = 9


@dataclass(frozen=True)
class HamiltonianJet:
    """p and its first and second derivatives at one phase-space point."""

    G: np.ndarray
    dG: np.ndarray
    dlogsqrtg: np.ndarray
    p: float
    px: np.ndarray
    pxi: np.ndarray
    pxx: np.ndarray
    pxxi: np.ndarray  # [k, j] = d^2 p / dx_k dxi_j
    pxixi: np.ndarray


def hamiltonian_jet(piece: PolyMetric, x: np.ndarray, xi: np.ndarray) -> HamiltonianJet:
    g = piece.value(x)
    dg = piece.grad(x)
    G, dG, ddG = inverse_metric_jet(g, dg, piece.hess(x))
    v = G @ xi
    p = float(np.sqrt(xi @ v))
    dGxi = np.einsum("kij,j->ki", dG, xi)
    q = dGxi @ xi
    return HamiltonianJet(
        G=G,
        dG=dG,
        dlogsqrtg=0.5 * np.einsum("ab,kba->k", G, dg),
        p=p,
        px=0.5 * q / p,
        pxi=v / p,
        pxx=0.5 * np.einsum("klij,i,j->kl", ddG, xi, xi) / p - 0.25 * np.outer(q, q) / p**3,
        pxxi=dGxi / p - 0.5 * np.outer(q, v) / p**3,
        pxixi=G / p - np.outer(v, v) / p**3,
    )


def geodesic_rhs(piece: PolyMetric, z: np.ndarray) -> np.ndarray:
    """x' = g^{-1} xi, xi' = -1/2 d_x(g^{jk}) xi_j xi_k (unit speed on p = 1)."""
    x, xi = z[:2].real, z[2:4].real
    G, dG = inverse_metric_jet(piece.value(x), piece.grad(x))
    return np.concatenate([G @ xi, -0.5 * np.einsum("kij,i,j->k", dG, xi, xi)])


def beam_rhs(piece: PolyMetric, z: np.ndarray) -> np.ndarray:
    """Characteristics, Riccati equation for Gamma and transport of log u00."""
    x, xi = z[:2].real, z[2:4].real
    Gam = z[4:8].reshape(2, 2)
    J = hamiltonian_jet(piece, x, xi)
    xdot, xidot = J.pxi, -J.px
    dGam = -(J.pxx + J.pxxi @ Gam + Gam @ J.pxxi.T + Gam @ J.pxixi @ Gam)
    theta_tt = -xidot @ xdot + xdot @ Gam @ xdot
    lap = np.trace(J.G @ Gam) + np.einsum("iij,j->", J.dG, xi) + J.dlogsqrtg @ (J.G @ xi)
    out = np.empty(NZ, dtype=complex)
    out[:2] = xdot
    out[2:4] = xidot
    out[4:8] = dGam.ravel()
    out[8] = 0.5 * (theta_tt - lap)
    return out


def rk4(rhs, piece, z, h):
    k1 = rhs(piece, z)
    k2 = rhs(piece, z + 0.5 * h * k1)
    k3 = rhs(piece, z + 0.5 * h * k2)
    k4 = rhs(piece, z + h * k3)
    return z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
