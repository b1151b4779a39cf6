"""Interface normal coordinates, metric jump profiles, artificial interfaces and chambers.

Charts are built for planar complexes (n = 2): s is the reference arclength
along the facet from its first (smallest-id) vertex, and sigma is the signed
metric distance along normal geodesics, negative inside the minus coface
(the coface with the smaller index) and positive inside the plus coface.
Boundary facets carry only the minus side.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .complex import Simplex, SimplicialComplex, classify_facets, dual_graph
from .metric import PiecewiseMetric, PolyMetric, inverse_metric_jet

STEPS = 64


class ChartError(ValueError):
    pass


def fd_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at 0 on the given offsets."""
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    A = np.vander(offsets, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, rhs)


def _flow(piece: PolyMetric, z: np.ndarray) -> np.ndarray:
    """Geodesic flow with variational equations, batched.

    z[..., :2] = x, z[..., 2:4] = xi, z[..., 4:6] = dx/ds, z[..., 6:8] = dxi/ds.
    """
    x, xi, dx, dxi = z[..., 0:2], z[..., 2:4], z[..., 4:6], z[..., 6:8]
    G, dG, ddG = inverse_metric_jet(piece.value(x), piece.grad(x), piece.hess(x))
    xdot = np.einsum("...ij,...j->...i", G, xi)
    dGxi = np.einsum("...kij,...j->...ki", dG, xi)  # (d_k G) xi
    xidot = -0.5 * np.einsum("...ki,...i->...k", dGxi, xi)
    ddx = np.einsum("...ki,...k->...i", dGxi, dx) + np.einsum("...ij,...j->...i", G, dxi)
    hxx = -0.5 * np.einsum("...klij,...i,...j->...kl", ddG, xi, xi)
    ddxi = np.einsum("...kl,...l->...k", hxx, dx) - np.einsum("...ki,...i->...k", dGxi, dxi)
    return np.concatenate([xdot, xidot, ddx, ddxi], axis=-1)


def _rk4(piece, z, h):
    k1 = _flow(piece, z)
    k2 = _flow(piece, z + 0.5 * h * k1)
    k3 = _flow(piece, z + 0.5 * h * k2)
    k4 = _flow(piece, z + h * k3)
    return z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass(frozen=True)
class FacetFrame:
    """Pointwise interface data at ``point`` on a facet (sigma = 0 slice of the chart)."""

    facet: Simplex
    point: np.ndarray
    tangent: np.ndarray  # unit reference tangent, d x / d s
    conormal: np.ndarray  # reference unit covector, positive from minus to plus
    minus: int
    plus: int | None
    g_minus: np.ndarray
    g_plus: np.ndarray | None

    def metric(self, side: str) -> np.ndarray:
        g = self.g_minus if side == "minus" else self.g_plus
        if g is None:
            raise ChartError("boundary facet has no plus side")
        return g

    def simplex(self, side: str) -> int:
        return self.minus if side == "minus" else self.plus

    def normal(self, side: str) -> np.ndarray:
        """Metric unit normal vector d x / d sigma (points from minus to plus)."""
        G = np.linalg.inv(self.metric(side))
        v = G @ self.conormal
        return v / np.sqrt(self.conormal @ v)

    def tangential_metric(self, side: str) -> float:
        t = self.tangent
        return float(t @ self.metric(side) @ t)

    def sqrt_det(self, side: str) -> float:
        return float(np.sqrt(self.tangential_metric(side)))

    def to_chart(self, xi: np.ndarray, side: str) -> tuple[float, float]:
        """Reference covector -> (xi_s, xi_n) in interface coordinates on ``side``."""
        return float(xi @ self.tangent), float(xi @ self.normal(side))

    def from_chart(self, xi_s: float, xi_n, side: str) -> np.ndarray:
        A = np.stack([self.tangent, self.normal(side)])
        dtype = complex if np.iscomplexobj(xi_n) else float
        return np.linalg.solve(A.astype(dtype), np.array([xi_s, xi_n], dtype=dtype))

    def flipped(self) -> "FacetFrame":
        if self.plus is None:
            raise ChartError("cannot flip a boundary frame")
        return FacetFrame(
            self.facet, self.point, self.tangent, -self.conormal,
            self.plus, self.minus, self.g_plus, self.g_minus,
        )


def _facet_geometry(c: SimplicialComplex, facet: Simplex):
    if c.dim != 2:
        raise NotImplementedError("interface charts are implemented for n = 2")
    facet = tuple(sorted(facet))
    a, b = c.coords[facet[0]], c.coords[facet[1]]
    L = float(np.linalg.norm(b - a))
    t = (b - a) / L
    nu = np.array([-t[1], t[0]])
    cof = c.cofaces[facet]
    if len(cof) not in (1, 2):
        raise ChartError(f"facet {facet} has {len(cof)} cofaces")
    minus = cof[0]
    # orient the conormal to point out of the minus coface
    centroid = c.vertex_array(c.top[minus]).mean(axis=0)
    if (centroid - a) @ nu > 0:
        nu = -nu
    return facet, a, t, L, nu, minus, (cof[1] if len(cof) == 2 else None)


def facet_frame(m: PiecewiseMetric, facet, point) -> FacetFrame:
    facet, a, t, L, nu, minus, plus = _facet_geometry(m.complex, facet)
    point = np.asarray(point, dtype=float)
    return FacetFrame(
        facet, point, t, nu, minus, plus,
        m[minus].value(point),
        None if plus is None else m[plus].value(point),
    )


@dataclass(frozen=True, eq=False)
class InterfaceChart:
    """Sampled interface normal coordinates on one facet.

    ``stacks[side][k, i]`` is the k-th derivative with respect to the signed
    coordinate sigma of the tangential metric g_ss at (s_i, 0) from ``side``.
    """

    facet: Simplex
    metric: PiecewiseMetric
    origin: np.ndarray
    tangent: np.ndarray
    conormal: np.ndarray
    length: float
    minus: int
    plus: int | None
    s: np.ndarray
    thickness: float
    stacks: dict = field(repr=False)
    injectivity: float = np.inf

    @property
    def sides(self) -> tuple[str, ...]:
        return ("minus",) if self.plus is None else ("minus", "plus")

    @property
    def order(self) -> int:
        return self.stacks["minus"].shape[0] - 1

    def g_tan(self, side: str) -> np.ndarray:
        return self.stacks[side][0]

    def frame_at(self, point) -> FacetFrame:
        return facet_frame(self.metric, self.facet, point)

    def _side_of(self, sigma: float) -> str:
        if sigma > 0 and self.plus is None:
            raise ChartError("positive sigma on a boundary chart")
        return "plus" if sigma > 0 else "minus"

    def _integrate(self, s: float, sigma: float, steps: int = STEPS):
        side = self._side_of(sigma)
        z, sign = _initial_state(self.metric, side, self.origin, self.tangent, self.conormal, np.array([s]),
                                 self.minus if side == "minus" else self.plus)
        piece = self.metric[self.minus if side == "minus" else self.plus]
        h = abs(sigma) / steps
        for _ in range(steps):
            z = _rk4(piece, z, h)
        xdot = np.einsum("ij,j->i", np.linalg.inv(piece.value(z[0, :2])), z[0, 2:4])
        return z[0, :2], z[0, 4:6], sign * xdot

    def point(self, s: float, sigma: float) -> np.ndarray:
        return self._integrate(s, sigma)[0]

    def coordinates(self, x, tol: float = 1e-12, maxiter: int = 30) -> tuple[float, float]:
        """Inverse of ``point`` by Newton iteration (nearest-point projection onto the facet)."""
        x = np.asarray(x, dtype=float)
        s = float((x - self.origin) @ self.tangent)
        side = "plus" if (x - self.origin) @ self.conormal > 0 and self.plus is not None else "minus"
        g = self.metric[self.minus if side == "minus" else self.plus].value(x)
        G = np.linalg.inv(g)
        sig = float((x - self.origin) @ self.conormal) / np.sqrt(self.conormal @ G @ self.conormal)
        for _ in range(maxiter):
            p, J, v = self._integrate(s, sig if sig != 0 else 0.0)
            r = p - x
            if np.linalg.norm(r) < tol:
                break
            ds, dsig = np.linalg.solve(np.column_stack([J, v]), -r)
            s, sig = s + ds, sig + dsig
        return s, sig


def _initial_state(m, side, origin, t, nu, s, simplex):
    """Normal-geodesic initial data (x, xi, dx/ds, dxi/ds) at facet points s."""
    piece = m[simplex]
    sign = 1.0 if side == "plus" else -1.0
    x = origin + s[:, None] * t
    G, dG = inverse_metric_jet(piece.value(x), piece.grad(x))
    q = np.einsum("i,sij,j->s", nu, G, nu)
    xi = sign * nu[None, :] / np.sqrt(q)[:, None]
    dq = np.einsum("i,skij,j,k->s", nu, dG, nu, t)
    dxi = sign * nu[None, :] * (-0.5 * q ** -1.5 * dq)[:, None]
    z = np.concatenate([x, xi, np.broadcast_to(t, x.shape), dxi], axis=1)
    return z, sign


def interface_chart(
    m: PiecewiseMetric,
    facet,
    K: int = 2,
    thickness: float | None = None,
    n_samples: int = 17,
    margin: float = 0.2,
) -> InterfaceChart:
    """Build interface normal coordinates on ``facet`` and the sigma-derivative stacks
    of the tangential metric up to order ``K`` (one-sided finite differences)."""
    c = m.complex
    facet, a, t, L, nu, minus, plus = _facet_geometry(c, facet)
    if thickness is None:
        alts = []
        for s_id in (minus, plus):
            if s_id is None:
                continue
            verts = c.vertex_array(c.top[s_id])
            alts.append(min(abs((v - a) @ nu) for v in verts if abs((v - a) @ nu) > 1e-14))
        thickness = 0.1 * min(alts)
    s = np.linspace(margin * L, (1 - margin) * L, n_samples)
    h = thickness / STEPS
    npts = max(K + 5, 7)
    stacks, inj = {}, np.inf
    for side, simplex in (("minus", minus), ("plus", plus)):
        if simplex is None:
            continue
        piece = m[simplex]
        z, sign = _initial_state(m, side, a, t, nu, s, simplex)
        samples = [z]
        det0 = None
        sigma = 0.0
        while True:
            z = _rk4(piece, z, h)
            sigma += h
            lam = c.barycentric(simplex, z[:, :2])
            G = np.linalg.inv(piece.value(z[:, :2]))
            v = np.einsum("sij,sj->si", G, z[:, 2:4])
            det = z[:, 4] * v[:, 1] - z[:, 5] * v[:, 0]
            if det0 is None:
                det0 = det
            left = lam.min() < -1e-12
            fold = np.any(det / det0 < 1e-3)
            if left or fold:
                if sigma - h < thickness:
                    why = "leaves its n-simplex" if left else "folds (injectivity radius exceeded)"
                    raise ChartError(f"normal geodesic from facet {facet} {why} at sigma={sigma:.3g}")
                inj = min(inj, sigma - h)
                break
            if len(samples) < npts:
                samples.append(z)
            if sigma >= 4 * thickness and len(samples) >= npts:
                inj = min(inj, sigma)
                break
        Z = np.stack(samples)  # (npts, S, 8)
        g = piece.value(Z[..., :2])
        gss = np.einsum("psi,psij,psj->ps", Z[..., 4:6], g, Z[..., 4:6])
        offsets = sign * h * np.arange(len(samples))
        stack = np.empty((K + 1, len(s)))
        stack[0] = gss[0]
        for k in range(1, K + 1):
            stack[k] = fd_weights(offsets, k) @ gss
        stacks[side] = stack
    return InterfaceChart(
        facet=facet, metric=m, origin=a, tangent=t, conormal=nu, length=L,
        minus=minus, plus=plus, s=s, thickness=thickness, stacks=stacks, injectivity=inj,
    )


def jump_profile(chart: InterfaceChart) -> np.ndarray:
    """|d^k g_ss(plus) - d^k g_ss(minus)| at the chart samples, shape (K + 1, S)."""
    if chart.plus is None:
        raise ChartError("jump profile needs an interface, got a boundary facet")
    return np.abs(chart.stacks["plus"] - chart.stacks["minus"])


def default_jump_tol(m: PiecewiseMetric, facet) -> float:
    cof = m.complex.cofaces[tuple(sorted(facet))]
    return 1e-8 if all(m[i].degree == 0 for i in cof) else 1e-4


def detect_artificial_interfaces(m: PiecewiseMetric, K: int = 2, tol: float | None = None) -> set[int]:
    """Interfaces whose jump profile vanishes up to order K (metric smooth across)."""
    out = set()
    for fc in classify_facets(m.complex):
        if not fc.is_interface:
            continue
        prof = jump_profile(interface_chart(m, fc.facet, K=K))
        t = default_jump_tol(m, fc.facet) if tol is None else tol
        if prof.max() <= t:
            out.add(fc.index)
    return out


def chambers(m: PiecewiseMetric, K: int = 2, tol: float | None = None) -> list[list[int]]:
    """Partition of n-simplices into chambers (glued across artificial interfaces)."""
    c = m.complex
    art = detect_artificial_interfaces(m, K, tol)
    g = dual_graph(c, [c.facets[i] for i in sorted(art)])
    _, labels = connected_components(g, directed=False)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return sorted(groups.values())
