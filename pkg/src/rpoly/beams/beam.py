"""Leading-order Gaussian beams: Riccati propagation and interface/boundary events."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..charts import FacetFrame, InterfaceChart
from ..metric import PiecewiseMetric
from .geodesic import Crossing, GeodesicState, advance, snell
from .hamiltonian import NZ, beam_rhs, hamiltonian_jet

CRITICAL_TOL = 1e-6
GRAZING_TOL = 1e-8


class RiccatiError(RuntimeError):
    """Im H lost positive definiteness or blew up within a step."""


class EventGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class BeamState:
    """Gaussian beam data at one time: phase theta0 + <xi, y> + <H y, y>, amplitude u00."""

    geo: GeodesicState
    H: np.ndarray
    u00: complex
    theta0: float = 0.0
    order: int = 0

    @property
    def x(self) -> np.ndarray:
        return self.geo.x

    @property
    def xi(self) -> np.ndarray:
        return self.geo.xi

    @property
    def t(self) -> float:
        return self.geo.t

    @property
    def simplex(self) -> int:
        return self.geo.simplex

    def vector(self) -> np.ndarray:
        z = np.empty(NZ, dtype=complex)
        z[:2] = self.x
        z[2:4] = self.xi
        z[4:8] = (2.0 * self.H).ravel()
        z[8] = np.log(complex(self.u00))
        return z

    @classmethod
    def from_vector(cls, z, t, simplex, theta0=0.0) -> "BeamState":
        Gam = z[4:8].reshape(2, 2)
        return cls(
            GeodesicState(int(simplex), z[:2].real.copy(), z[2:4].real.copy(), float(t)),
            0.25 * (Gam + Gam.T),
            complex(np.exp(z[8])),
            theta0,
        )

    def with_amplitude(self, u) -> "BeamState":
        return replace(self, u00=complex(u))


def im_spd(z: np.ndarray) -> bool:
    G = z[4:8].reshape(2, 2)
    if not np.all(np.isfinite(G)) or np.abs(G).max() > 1e8:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (G.imag + G.imag.T)).min() > 0)


def safe_advance(m, z, t, simplex, h, transparent, max_halvings=6):
    """One beam step with Riccati monitoring and step halving."""
    for k in range(max_halvings + 1):
        sub = h / 2**k
        zz, tt, ss = z, t, simplex
        ok = True
        for _ in range(2**k):
            tt, zz, ss, cross = advance(m, beam_rhs, zz, tt, ss, sub, transparent)
            if not im_spd(zz):
                ok = False
                break
            if cross is not None:
                return tt, zz, ss, cross
        if ok:
            return tt, zz, ss, None
    raise RiccatiError(f"Im H not positive definite near t={t:.6g} after {max_halvings} halvings")


@dataclass(frozen=True, eq=False)
class BeamPath:
    """Samples of one beam branch; ``crossing`` is the stopping event, if any."""

    times: np.ndarray
    Z: np.ndarray
    simplices: np.ndarray
    theta0: float
    crossing: Crossing | None = None

    def state(self, k: int = -1) -> BeamState:
        return BeamState.from_vector(self.Z[k], self.times[k], self.simplices[k], self.theta0)

    @property
    def final(self) -> BeamState:
        return self.state(-1)


def propagate_beam(
    b: BeamState,
    m: PiecewiseMetric,
    dt: float,
    until: float,
    *,
    stop_at_events: bool = True,
    transparent=frozenset(),
) -> BeamPath:
    """Advance H and u00 along the ray up to time ``until`` (forward or backward).

    With ``stop_at_events`` the path ends at the first crossing of a facet not
    in ``transparent``.

    Raises
    ------
    RiccatiError
        If Im H stops being positive definite and step halving does not help.
    """
    z = b.vector()
    if not im_spd(z):
        raise RiccatiError("initial Im H is not positive definite")
    t, simplex = b.t, b.simplex
    sign = 1.0 if until >= t else -1.0
    times, Z, sims = [t], [z], [simplex]
    crossing = None
    while sign * (until - t) > 1e-14:
        h = sign * min(dt, abs(until - t))
        t, z, simplex, cross = safe_advance(m, z, t, simplex, h, transparent)
        times.append(t)
        Z.append(z)
        sims.append(simplex)
        if cross is not None:
            if stop_at_events:
                crossing = cross
                break
            raise EventGeometryError(f"unexpected crossing of facet {cross.facet}")
    return BeamPath(np.array(times), np.array(Z), np.array(sims), b.theta0, crossing)


@dataclass(frozen=True)
class BeamEvent:
    """Beam hitting a facet: incident state, produced branches and coefficients."""

    t: float
    point: np.ndarray
    facet: tuple[int, ...]
    kind: str  # interface | boundary
    incident: BeamState
    reflected: BeamState
    transmitted: BeamState | None
    critical: bool
    r: complex
    t_coef: complex | None
    a: float
    b: complex | None
    xi_in: np.ndarray = field(repr=False, default=None)


def _dynamics(m, simplex, x, xi):
    J = hamiltonian_jet(m[simplex], x, xi)
    return J.pxi, -J.px


def match_hessian(Gam_in, xdot_in, xidot_in, tau, xdot_br, xidot_br) -> np.ndarray:
    """Branch phase Hessian whose restriction to the facet agrees with the
    incident one to second order in (t, s).

    Solves, for symmetric Gamma,
    tau^T Gamma tau = tau^T Gamma_in tau,
    tau . (xi' - Gamma x') equal for both beams,
    x'^T Gamma x' - xi'.x' equal for both beams.
    """
    A1 = tau @ Gam_in @ tau
    A2 = tau @ Gam_in @ xdot_in - xidot_in @ tau + xidot_br @ tau
    A3 = xdot_in @ Gam_in @ xdot_in - xidot_in @ xdot_in + xidot_br @ xdot_br
    B = np.column_stack([tau, xdot_br])
    if abs(np.linalg.det(B)) < GRAZING_TOL:
        raise EventGeometryError("branch ray is tangent to the facet")
    Binv = np.linalg.inv(B)
    out = Binv.T @ np.array([[A1, A2], [A2, A3]]) @ Binv
    return 0.5 * (out + out.T)


def _branch(m, b: BeamState, Gam_in, xdot_in, xidot_in, tau, simplex, xi, coef) -> BeamState:
    xdot, xidot = _dynamics(m, simplex, b.x, xi)
    Gam = match_hessian(Gam_in, xdot_in, xidot_in, tau, xdot, xidot)
    return BeamState(GeodesicState(simplex, b.x.copy(), np.asarray(xi, dtype=float), b.t), 0.5 * Gam, coef * b.u00, b.theta0)


def _event(b: BeamState, m: PiecewiseMetric, facet, condition: str | None) -> BeamEvent:
    facet = tuple(sorted(facet))
    sn = snell(m, facet, b.simplex, b.x, b.xi, CRITICAL_TOL)
    frame: FacetFrame = sn["frame"]
    if sn["xi_n"] <= GRAZING_TOL:
        raise EventGeometryError(f"tangential or outgoing incidence on facet {facet} (xi_n={sn['xi_n']:.3g})")
    Gam_in = 2.0 * b.H
    xdot_in, xidot_in = _dynamics(m, b.simplex, b.x, b.xi)
    tau = frame.tangent
    if frame.plus is None:
        if condition not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition {condition!r}")
        r = -1.0 if condition == "dirichlet" else 1.0
        refl = _branch(m, b, Gam_in, xdot_in, xidot_in, tau, b.simplex, sn["xi_r"], r)
        return BeamEvent(b.t, b.x.copy(), facet, "boundary", b, refl, None, False, r, None, sn["a"], None, b.xi.copy())
    refl = _branch(m, b, Gam_in, xdot_in, xidot_in, tau, b.simplex, sn["xi_r"], sn["r"])
    tr = None
    if not sn["critical"]:
        tr = _branch(m, b, Gam_in, xdot_in, xidot_in, tau, frame.plus, sn["xi_tr"], sn["t"])
    return BeamEvent(
        b.t, b.x.copy(), facet, "interface", b, refl, tr, sn["critical"], sn["r"], sn["t"], sn["a"], sn["b"], b.xi.copy()
    )


def _resolve(chart, m, facet):
    if isinstance(chart, InterfaceChart):
        return chart.metric, chart.facet
    if m is None or facet is None:
        raise ValueError("pass an InterfaceChart or both m and facet")
    return m, facet


def split_at_interface(b: BeamState, chart: InterfaceChart | None = None, *, m=None, facet=None) -> BeamEvent:
    """Reflected and (below critical incidence) transmitted beams at an interface.

    Tangential covector components are preserved, normal components follow
    xi_n^r = -xi_n^in and xi_n^tr = sqrt(1 - g_+^{ss} xi_s^2); with
    a = sqrt(g_-) xi_n^in and b = sqrt(g_+) xi_n^tr the amplitudes are
    r = (a - b)/(a + b), t = 2a/(a + b).  Above the critical threshold only
    the reflected beam is produced and r is the unimodular continuation.
    """
    m, facet = _resolve(chart, m, facet)
    if len(m.complex.cofaces[tuple(sorted(facet))]) != 2:
        raise ValueError(f"{facet} is not an interface")
    return _event(b, m, facet, None)


def reflect_at_boundary(b: BeamState, chart: InterfaceChart | None = None, condition: str = "dirichlet", *, m=None, facet=None) -> BeamEvent:
    """Mirror beam at a boundary facet; u00 flips sign for Dirichlet, keeps it for Neumann."""
    m, facet = _resolve(chart, m, facet)
    if len(m.complex.cofaces[tuple(sorted(facet))]) != 1:
        raise ValueError(f"{facet} is not a boundary facet")
    return _event(b, m, facet, condition)
