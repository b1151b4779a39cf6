"""Beam trees over a polyhedron and evaluation of the resulting wave field."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..charts import chambers
from ..metric import PiecewiseMetric
from .beam import BeamEvent, BeamState, _event, im_spd, propagate_beam
from .hamiltonian import beam_rhs, rk4

MAX_DEPTH = 8


def smoothstep_cutoff(r: np.ndarray) -> np.ndarray:
    """Quintic profile: 1 on [0, 1/2], 0 on [1, inf), C^2 in between."""
    s = np.clip(2.0 * np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


@dataclass(frozen=True, eq=False)
class BeamBranch:
    """One branch of a beam tree.

    ``times``/``Z``/``simplices`` cover the branch life [birth, death] plus
    virtual extensions on both sides, integrated in the metric of the end
    simplex without facet checks.  The branch contributes only at points of
    its chamber.
    """

    id: int
    parent: int | None
    depth: int
    kind: str  # launch | reflect | transmit
    chamber: frozenset
    birth: float
    death: float
    times: np.ndarray
    Z: np.ndarray
    simplices: np.ndarray
    theta0: float
    event: BeamEvent | None = None  # event that ended the branch

    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def vector_at(self, m: PiecewiseMetric, t: float) -> tuple[np.ndarray, int]:
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 1))
        h = t - self.times[k]
        s = int(self.simplices[k])
        z = self.Z[k] if h == 0 else rk4(beam_rhs, m[s], self.Z[k], h)
        return z, s

    def state_at(self, m: PiecewiseMetric, t: float) -> BeamState:
        z, s = self.vector_at(m, t)
        return BeamState.from_vector(z, t, s, self.theta0)


@dataclass(frozen=True, eq=False)
class BeamField:
    metric: PiecewiseMetric
    branches: list
    events: list
    cutoff: object = smoothstep_cutoff
    order: int = 0
    truncated: bool = False

    def branch(self, i: int) -> BeamBranch:
        return self.branches[i]


def _extend(m, z, t, simplex, duration, dt):
    """Free integration for ``duration`` (signed) without facet handling."""
    ts, zs = [], []
    steps = int(np.ceil(abs(duration) / dt - 1e-12))
    if steps == 0:
        return ts, zs
    h = duration / steps
    for _ in range(steps):
        try:
            z_new = rk4(beam_rhs, m[simplex], z, h)
        except np.linalg.LinAlgError:
            break
        if not im_spd(z_new) or np.linalg.eigvalsh(m[simplex].value(z_new[:2].real)).min() <= 0:
            break
        z, t = z_new, t + h
        ts.append(t)
        zs.append(z)
    return ts, zs


def locate_points(c, X: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Index of the first n-simplex containing each point, -1 if none."""
    X = np.asarray(X, dtype=float)
    out = np.full(len(X), -1, dtype=int)
    for i in range(c.n_top):
        inside = (c.barycentric(i, X).min(axis=1) >= -tol) & (out < 0)
        out[inside] = i
    return out


def transparent_facets(m: PiecewiseMetric) -> frozenset:
    """Interfaces with a smooth metric, crossed by beams without splitting."""
    from ..charts import detect_artificial_interfaces

    c = m.complex
    return frozenset(c.facets[i] for i in detect_artificial_interfaces(m))


def build_beam_tree(
    b0: BeamState,
    m: PiecewiseMetric,
    T: float,
    dt: float = 0.01,
    boundary: str | Mapping = "neumann",
    *,
    transparent=None,
    extension: float = 0.5,
    max_depth: int = MAX_DEPTH,
    min_amplitude: float = 1e-8,
) -> BeamField:
    """Propagate ``b0`` to time ``b0.t + T`` splitting at every event.

    Parameters
    ----------
    boundary : str or mapping
        Boundary condition ("dirichlet" / "neumann"), globally or per facet.
    transparent : set of facets, optional
        Interfaces crossed without splitting; defaults to the artificial ones.
    extension : float
        Duration of the virtual continuation before birth and after death.
    min_amplitude : float
        Branches with |u00| below this fraction of |u00(b0)| are dropped.
    """
    c = m.complex
    if transparent is None:
        transparent = transparent_facets(m)
    chamber_of = {}
    for ch in chambers(m):
        for s in ch:
            chamber_of[s] = frozenset(ch)
    t_end = b0.t + T
    u_ref = abs(b0.u00)
    queue = [(b0, None, 0, "launch")]
    branches, events = [], []
    truncated = False
    while queue:
        b, parent, depth, kind = queue.pop(0)
        path = propagate_beam(b, m, dt, t_end, transparent=transparent)
        ts, Z, sims = list(path.times), list(path.Z), list(path.simplices)
        # virtual continuation on both ends
        if kind != "launch":
            bt, bz = _extend(m, Z[0], ts[0], int(sims[0]), -extension, dt)
            ts = bt[::-1] + ts
            Z = bz[::-1] + Z
            sims = [int(sims[0])] * len(bt) + sims
        ev = None
        death = float(path.times[-1])
        if path.crossing is not None:
            at, az = _extend(m, Z[-1], ts[-1], int(sims[-1]), extension, dt)
            ts += at
            Z += az
            sims += [int(sims[-1])] * len(at)
            state = path.final
            cond = boundary if isinstance(boundary, str) else boundary.get(path.crossing.facet, "neumann")
            ev = _event(state, m, path.crossing.facet, cond)
            events.append(ev)
        bid = len(branches)
        branches.append(
            BeamBranch(bid, parent, depth, kind, chamber_of[b.simplex], b.t, death,
                       np.array(ts), np.array(Z), np.array(sims), b.theta0, ev)
        )
        if ev is None:
            continue
        for child, ckind in ((ev.reflected, "reflect"), (ev.transmitted, "transmit")):
            if child is None or abs(child.u00) < min_amplitude * u_ref:
                continue
            if depth + 1 > max_depth:
                truncated = True
                continue
            if child.t < t_end - 1e-14:
                queue.append((child, bid, depth + 1, ckind))
    return BeamField(m, branches, events, truncated=truncated)


def _branch_terms(m, br: BeamBranch, X, t, eps, cutoff, derivative):
    z, s = br.vector_at(m, t)
    x, xi = z[:2].real, z[2:4].real
    Gam = z[4:8].reshape(2, 2)
    Gam = 0.5 * (Gam + Gam.T)
    u = np.exp(z[8])
    Y = X - x
    theta = br.theta0 + Y @ xi + 0.5 * np.einsum("pi,ij,pj->p", Y, Gam, Y)
    M = (np.pi * eps) ** (-0.5)
    val = M * u * np.exp(1j * theta / eps)
    if cutoff is not None:
        g = m[s].value(x)
        d2 = np.einsum("pi,ij,pj->p", Y, g, Y)
        val = val * cutoff(d2 * eps ** (-5.0 / 6.0))
    if not derivative:
        return val, None
    dz = beam_rhs(m[s], z)
    xdot, xidot = dz[:2].real, dz[2:4].real
    dGam = dz[4:8].reshape(2, 2)
    theta_t = -xi @ xdot + Y @ (xidot - Gam @ xdot) + 0.5 * np.einsum("pi,ij,pj->p", Y, dGam, Y)
    dval = val * (1j * theta_t / eps + dz[8])
    return val, dval


def evaluate_beam_field(
    f: BeamField,
    eps: float,
    points,
    t: float,
    *,
    use_cutoff: bool = True,
    derivative: bool = False,
    labels: np.ndarray | None = None,
    branches=None,
):
    """Complex beam field (and optionally its time derivative) at ``points``.

    Each active branch contributes
    (pi eps)^{-1/2} u00 exp(i (theta0 + <xi, y> + <H y, y>) / eps) chi
    at the points of its chamber.

    Raises
    ------
    ValueError
        If ``eps`` is outside (0, 1) or a point lies outside every simplex.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    m = f.metric
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if labels is None:
        labels = locate_points(m.complex, X)
    if (labels < 0).any():
        raise ValueError(f"point {X[np.argmax(labels < 0)]} lies outside the polyhedron")
    cutoff = f.cutoff if use_cutoff else None
    out = np.zeros(len(X), dtype=complex)
    dout = np.zeros(len(X), dtype=complex)
    for br in f.branches if branches is None else [f.branches[i] for i in branches]:
        lo, hi = br.span()
        if not lo - 1e-12 <= t <= hi + 1e-12:
            continue
        mask = np.isin(labels, list(br.chamber))
        if not mask.any():
            continue
        val, dval = _branch_terms(m, br, X[mask], t, eps, cutoff, derivative)
        out[mask] += val
        if derivative:
            dout[mask] += dval
    return (out, dout) if derivative else out


def launch_state(m: PiecewiseMetric, p0, direction, width: float = 1.0, u00: complex = 1.0, simplex: int | None = None) -> BeamState:
    """Beam at t = 0 through ``p0`` along the reference direction, H = (i/2) width g(p0)."""
    from .geodesic import GeodesicState, unit_covector

    p0 = np.asarray(p0, dtype=float)
    if simplex is None:
        found = m.complex.locate(p0)
        if not found:
            raise ValueError(f"launch point {p0} is outside the polyhedron")
        simplex = found[0]
    xi = unit_covector(m, simplex, p0, direction)
    g = m[simplex].value(p0)
    return BeamState(GeodesicState(simplex, p0, xi, 0.0), 0.5j * width * g, complex(u00))


def beam_mass(H: np.ndarray, u00: complex) -> float:
    """Plane L2 mass of a single-branch field without cutoff: |u00|^2 det(2 Im H)^{-1/2}."""
    return float(abs(u00) ** 2 / np.sqrt(np.linalg.det(2.0 * np.asarray(H).imag)))
