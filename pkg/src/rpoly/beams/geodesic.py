"""Unit-speed geodesics on a piecewise metric with exact facet-crossing events."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..charts import facet_frame
from ..metric import PiecewiseMetric
from .hamiltonian import geodesic_rhs, rk4

BISECT_ITERS = 80


class EventError(RuntimeError):
    """Facet crossing could not be bracketed."""


class SkeletonHit(RuntimeError):
    """Trajectory reached the (n-2)-skeleton."""


@dataclass(frozen=True)
class GeodesicState:
    simplex: int
    x: np.ndarray
    xi: np.ndarray
    t: float = 0.0

    def speed_defect(self, m: PiecewiseMetric) -> float:
        """|g^{ij} xi_i xi_j - 1|."""
        G = np.linalg.inv(m[self.simplex].value(self.x))
        return abs(float(self.xi @ G @ self.xi) - 1.0)


def unit_covector(m: PiecewiseMetric, simplex: int, x, direction) -> np.ndarray:
    """Covector g v / |v|_g dual to the reference direction v."""
    g = m[simplex].value(np.asarray(x, dtype=float))
    v = np.asarray(direction, dtype=float)
    return g @ v / np.sqrt(v @ g @ v)


@dataclass(frozen=True)
class Crossing:
    t: float
    z: np.ndarray
    simplex: int
    facet: tuple[int, ...]


def _bary_min(m, simplex, x):
    return float(m.complex.barycentric(simplex, x).min())


def advance(m: PiecewiseMetric, rhs, z, t, simplex, h, transparent=frozenset(), skeleton_tol=1e-9):
    """Advance ``z`` by ``h`` inside ``simplex``.

    Crossings of facets in ``transparent`` hand over to the neighbouring
    simplex and continue; any other crossing stops the step at the crossing
    point, located by bisection on the smallest barycentric coordinate.

    Returns
    -------
    (t, z, simplex, Crossing or None)
    """
    c = m.complex
    remaining = h
    while True:
        piece = m[simplex]
        z1 = rk4(rhs, piece, z, remaining)
        if _bary_min(m, simplex, z1[:2].real) >= 0:
            return t + remaining, z1, simplex, None
        if _bary_min(m, simplex, z[:2].real) < -1e-9:
            raise EventError(f"step starts outside simplex {c.top[simplex]}")
        a, b = 0.0, remaining
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (a + b)
            if _bary_min(m, simplex, rk4(rhs, piece, z, mid)[:2].real) >= 0:
                a = mid
            else:
                b = mid
            if abs(b - a) <= 1e-15 * max(1.0, abs(t)):
                break
        s = 0.5 * (a + b)
        zs = rk4(rhs, piece, z, s)
        lam = c.barycentric(simplex, zs[:2].real)
        order = np.argsort(lam)
        if lam[order[1]] < skeleton_tol:
            raise SkeletonHit(f"trajectory hits the (n-2)-skeleton at {zs[:2].real} (t={t + s:.6g})")
        verts = c.top[simplex]
        facet = tuple(v for i, v in enumerate(verts) if i != order[0])
        if facet in transparent:
            cof = c.cofaces[facet]
            simplex = cof[1] if cof[0] == simplex else cof[0]
            z, t, remaining = zs, t + s, remaining - s
            if abs(remaining) <= 1e-15:
                return t, z, simplex, None
            continue
        return t + s, zs, simplex, Crossing(t + s, zs, simplex, facet)


def snell(m: PiecewiseMetric, facet, simplex: int, x, xi, critical_tol: float = 1e-6):
    """Covectors and amplitude data of a facet hit from ``simplex``.

    Returns
    -------
    dict with xi_r, xi_tr (None if critical or boundary), a, b, r, t, critical,
    tangent and the incidence normal component xi_n.
    """
    frame = facet_frame(m, facet, x)
    if frame.plus is not None and frame.minus != simplex:
        frame = frame.flipped()
    xs, xn = frame.to_chart(np.asarray(xi, dtype=float), "minus")
    out = {"frame": frame, "xi_s": xs, "xi_n": xn, "xi_tr": None, "t": None, "b": None, "critical": False}
    out["xi_r"] = frame.from_chart(xs, -xn, "minus")
    a = frame.sqrt_det("minus") * xn
    out["a"] = a
    if frame.plus is None:
        return out
    q = xs**2 / frame.tangential_metric("plus")
    sq = frame.sqrt_det("plus")
    if q >= 1.0 - critical_tol:
        out["critical"] = True
        b = 1j * sq * np.sqrt(q - 1.0) if q > 1.0 else sq * np.sqrt(1.0 - q)
        out["r"] = (a - b) / (a + b)
        out["b"] = b
        return out
    xn_tr = np.sqrt(1.0 - q)
    b = sq * xn_tr
    out.update(xi_tr=frame.from_chart(xs, xn_tr, "plus"), b=b, r=(a - b) / (a + b), t=2 * a / (a + b))
    return out


@dataclass(frozen=True)
class GeodesicEvent:
    t: float
    x: np.ndarray
    facet: tuple[int, ...]
    kind: str  # transmit | reflect | critical | boundary
    xi_in: np.ndarray
    xi_out: np.ndarray
    simplex_in: int
    simplex_out: int


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of a traced geodesic; ``simplices[k]`` is the simplex of the step ending at sample k."""

    times: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    simplices: np.ndarray
    events: list = field(default_factory=list)
    stopped: str | None = None

    def length(self, m: PiecewiseMetric, order: int = 5) -> float:
        """Metric length by Gauss quadrature of |x'|_g on every step."""
        from ..metric import segment_lengths

        total = 0.0
        for k in range(len(self.times) - 1):
            total += float(segment_lengths(m[int(self.simplices[k + 1])], self.x[k : k + 1], self.x[k + 1 : k + 2], order)[0])
        return total


def trace_geodesic(s0: GeodesicState, m: PiecewiseMetric, dt: float, T: float, raise_on_skeleton: bool = False) -> Trajectory:
    """Integrate the geodesic flow for time ``T``.

    Interfaces refract by Snell's law (total reflection when critical);
    boundary facets mirror the covector.  A hit on the (n-2)-skeleton stops
    the trace and is reported in ``stopped``.

    Raises
    ------
    ValueError
        If ``s0`` is not a unit covector (tolerance 1e-8).
    """
    if s0.speed_defect(m) > 1e-8:
        raise ValueError("initial covector is not unit length")
    z = np.concatenate([s0.x, s0.xi]).astype(float)
    t, simplex = s0.t, s0.simplex
    times, xs, xis, sims, events = [t], [z[:2]], [z[2:]], [simplex], []
    stopped = None
    t_end = s0.t + T
    while t < t_end - 1e-14:
        h = min(dt, t_end - t)
        try:
            t, z, simplex, cross = advance(m, geodesic_rhs, z, t, simplex, h)
        except SkeletonHit as exc:
            if raise_on_skeleton:
                raise
            stopped = str(exc)
            break
        seg = simplex
        if cross is not None:
            sn = snell(m, cross.facet, simplex, z[:2], z[2:])
            x, xi_in = z[:2].copy(), z[2:].copy()
            if sn["frame"].plus is None:
                kind, xi_out, new = "boundary", sn["xi_r"], simplex
            elif sn["critical"]:
                kind, xi_out, new = "critical", sn["xi_r"], simplex
            else:
                kind, xi_out, new = "transmit", sn["xi_tr"], sn["frame"].plus
            events.append(GeodesicEvent(t, x, cross.facet, kind, xi_in, xi_out, simplex, new))
            z = np.concatenate([x, xi_out])
            simplex = new
        times.append(t)
        xs.append(z[:2])
        xis.append(z[2:])
        sims.append(seg)
    return Trajectory(np.array(times), np.array(xs), np.array(xis), np.array(sims), events, stopped)
