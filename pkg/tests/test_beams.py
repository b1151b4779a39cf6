import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpoly.beams import (
    BeamState,
    GeodesicState,
    beam_echo_experiment,
    beam_mass,
    build_beam_tree,
    evaluate_beam_field,
    launch_state,
    propagate_beam,
    reflect_at_boundary,
    snell,
    split_at_interface,
    trace_geodesic,
    unit_covector,
)
from rpoly.charts import interface_chart
from rpoly.complex import build_complex
from rpoly.metric import PiecewiseMetric, PolyMetric
from rpoly.spectral import compute_spectrum, refine

from conftest import STRIP, STRIP_TOP, strip, unit_square

BIG = {0: (-50.0, -30.0), 1: (50.0, -30.0), 2: (0.0, 50.0)}


@pytest.fixture(scope="module")
def plane():
    """One flat triangle large enough that beams from the origin meet no facet for t <= 10."""
    c = build_complex(2, [(0, 1, 2)], BIG)
    return PiecewiseMetric.euclidean(c)


def state_on(m, x, xi, H=None, u00=1.0):
    simplex = m.complex.locate(np.asarray(x, dtype=float))[0]
    H = 0.5j * np.eye(2) if H is None else H
    return BeamState(GeodesicState(simplex, np.asarray(x, dtype=float), np.asarray(xi, dtype=float)), H, u00)


# --------------------------------------------------------------- geodesics


def test_flat_geodesic_straight(plane):
    xi = np.array([0.6, 0.8])
    tr = trace_geodesic(GeodesicState(0, np.array([1.0, -3.0]), xi), plane, 0.05, 5.0)
    line = np.array([1.0, -3.0]) + tr.times[:, None] * xi
    assert np.abs(tr.x - line).max() < 1e-10
    assert np.abs(tr.xi - xi).max() < 1e-10


def test_scaled_metric_reference_speed(plane):
    c = plane.complex
    m = PiecewiseMetric.constant(c, 9.0 * np.eye(2))
    xi = unit_covector(m, 0, (1.0, -3.0), (1.0, 0.0))
    tr = trace_geodesic(GeodesicState(0, np.array([1.0, -3.0]), xi), m, 0.05, 2.0)
    speed = np.linalg.norm(np.diff(tr.x, axis=0), axis=1) / np.diff(tr.times)
    assert np.allclose(speed, 1.0 / 3.0, rtol=1e-12)


def test_unit_speed_length_equals_time():
    c = build_complex(2, STRIP_TOP, STRIP)
    g = PolyMetric.from_entries(2, [(0, 0, (0, 0), 1.0), (0, 0, (1, 0), 0.3), (1, 1, (0, 0), 1.0), (1, 1, (0, 1), 0.4)])
    m = PiecewiseMetric(c, (g,) * 4)
    xi = unit_covector(m, 1, (0.2, 0.7), (1.0, -0.3))
    tr = trace_geodesic(GeodesicState(1, np.array([0.2, 0.7]), xi), m, 0.01, 1.5)
    assert tr.stopped is None
    assert tr.length(m) == pytest.approx(1.5, abs=1e-6)


# ------------------------------------------------------------------ beams


def flat_riccati(Gam0, xi, t):
    """Gamma(t) = Gamma0 (I + t P Gamma0)^{-1}, P = I - xi xi^T for unit xi."""
    P = np.eye(2) - np.outer(xi, xi)
    return Gam0 @ np.linalg.inv(np.eye(2) + t * P @ Gam0)


def test_flat_riccati_closed_form(plane):
    b = launch_state(plane, (0.0, 0.0), (1.0, 2.0))
    path = propagate_beam(b, plane, 0.02, 10.0)
    assert path.crossing is None
    Gam0 = 2 * b.H
    for k in range(0, len(path.times), 25):
        s = path.state(k)
        assert np.abs(2 * s.H - flat_riccati(Gam0, b.xi, path.times[k])).max() < 1e-8
        assert np.linalg.eigvalsh(s.H.imag).min() > 0


def test_flat_transport_invariant(plane):
    b = launch_state(plane, (0.0, 0.0), (1.0, -1.0), width=2.0)
    path = propagate_beam(b, plane, 0.01, 10.0)  # RK4 error at 0.02 is 5e-8
    inv = [abs(path.state(k).u00) ** 2 / math.sqrt(np.linalg.det(path.state(k).H.imag)) for k in range(len(path.times))]
    assert np.ptp(inv) / inv[0] < 1e-8


def test_time_reversal(plane):
    b = launch_state(plane, (0.0, 0.0), (0.3, 1.0))
    fwd = propagate_beam(b, plane, 0.02, 4.0).final
    back = propagate_beam(fwd, plane, 0.02, 0.0).final
    assert np.abs(back.H - b.H).max() < 1e-7
    assert abs(back.u00 - b.u00) < 1e-7


def test_matched_metrics_transmit_everything(flat_strip_metric):
    b = state_on(flat_strip_metric, (1.0, 0.5), (1.0, 0.0))
    ev = split_at_interface(b, interface_chart(flat_strip_metric, (1, 2)))
    assert abs(ev.r) < 1e-15
    assert ev.t_coef == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(ev.transmitted.xi, b.xi, atol=1e-15)
    assert np.allclose(ev.transmitted.H, b.H, atol=1e-12)


def test_normal_incidence_coefficients(strip_metric):
    b = state_on(strip_metric, (1.0, 0.5), (1.0, 0.0))
    ev = split_at_interface(b, m=strip_metric, facet=(1, 2))
    assert (ev.a, ev.b) == pytest.approx((1.0, 2.0), abs=1e-14)
    assert ev.t_coef == pytest.approx(2 / 3, abs=1e-14)
    assert ev.r == pytest.approx(-1 / 3, abs=1e-14)
    assert 1 + ev.r == pytest.approx(ev.t_coef, abs=1e-14)


def test_supercritical_incidence_reflects_only():
    m = strip(np.diag([1.0, 0.5]))  # g_+^{ss} = 2
    b = state_on(m, (1.0, 0.5), (0.6, 0.8))
    ev = split_at_interface(b, m=m, facet=(1, 2))
    assert 2 * 0.8**2 > 1
    assert ev.critical and ev.transmitted is None
    assert abs(ev.r) == pytest.approx(1.0, abs=1e-14)


def test_dirichlet_and_neumann_boundary_signs(square_metric):
    b = state_on(square_metric, (1.0, 0.4), (0.8, 0.6), u00=0.7 + 0.2j)
    d = reflect_at_boundary(b, m=square_metric, facet=(1, 2), condition="dirichlet")
    n = reflect_at_boundary(b, m=square_metric, facet=(1, 2), condition="neumann")
    assert d.reflected.u00 / b.u00 == pytest.approx(-1.0, abs=1e-15)
    assert n.reflected.u00 / b.u00 == pytest.approx(1.0, abs=1e-15)


def test_mirror_angle_in_chart_metric():
    m = strip(np.array([[2.0, 0.3], [0.3, 1.5]]))
    c = m.complex
    facet = (1, 5)  # boundary? no: use the outer right facet
    b = state_on(m, (2.0, 0.5), unit_covector(m, 3, (2.0, 0.5), (1.0, 0.4)))
    ev = reflect_at_boundary(b, m=m, facet=(4, 5), condition="neumann")
    fr = snell(m, (4, 5), b.simplex, b.x, b.xi)["frame"]
    s_in, n_in = fr.to_chart(b.xi, "minus")
    s_out, n_out = fr.to_chart(ev.reflected.xi, "minus")
    assert s_out == pytest.approx(s_in, abs=1e-12)
    assert n_out == pytest.approx(-n_in, abs=1e-12)
    G = np.linalg.inv(m[b.simplex].value(b.x))
    assert ev.reflected.xi @ G @ ev.reflected.xi == pytest.approx(1.0, abs=1e-8)
    assert facet in c.cofaces


# -------------------------------------------------------- interface algebra


def spd(a, b, c):
    L = np.array([[a, 0.0], [b, c]])
    return L @ L.T + 0.05 * np.eye(2)


_entry = st.floats(0.3, 2.0)
_off = st.floats(-0.8, 0.8)


@settings(max_examples=200)
@given(_entry, _off, _entry, _entry, _off, _entry, st.floats(-1.4, 1.4), st.floats(0.05, 0.95))
def test_interface_identities(a1, b1, c1, a2, b2, c2, angle, y):
    gm, gp = spd(a1, b1, c1), spd(a2, b2, c2)
    c = build_complex(2, STRIP_TOP, STRIP)
    m = PiecewiseMetric.constant(c, [gm, gm, gp, gp])
    x = np.array([1.0, y])
    simplex = 0 if y < 1.0 else 1
    xi = unit_covector(m, simplex, x, (math.cos(angle), math.sin(angle)))
    b = BeamState(GeodesicState(simplex, x, xi), 0.5j * gm, 1.0)
    ev = split_at_interface(b, m=m, facet=(1, 2))
    fr = snell(m, (1, 2), simplex, x, xi)["frame"]
    s_in, _ = fr.to_chart(xi, "minus")
    # Snell: tangential component is shared by every branch
    assert abs(fr.to_chart(ev.reflected.xi, "minus")[0] - s_in) <= 1e-10
    Gm = np.linalg.inv(gm)
    assert abs(ev.reflected.xi @ Gm @ ev.reflected.xi - 1) <= 1e-8
    if ev.critical:
        assert ev.transmitted is None
        assert s_in**2 / fr.tangential_metric("plus") >= 1 - 1e-6
        return
    r, t = ev.r, ev.t_coef
    assert abs(1 + r - t) <= 1e-12
    assert abs(ev.a - (ev.a * r**2 + ev.b * t**2)) <= 1e-12 * max(1.0, ev.a)
    assert abs(fr.to_chart(ev.transmitted.xi, "plus")[0] - s_in) <= 1e-10
    Gp = np.linalg.inv(gp)
    assert abs(ev.transmitted.xi @ Gp @ ev.transmitted.xi - 1) <= 1e-8


@given(st.floats(-1.3, 1.3), st.floats(0.1, 0.9))
def test_double_reflection_restores_covector(strip_metric, angle, y):
    x = np.array([1.0, y])
    xi = unit_covector(strip_metric, 0, x, (math.cos(angle), math.sin(angle)))
    once = snell(strip_metric, (1, 2), 0, x, xi)["xi_r"]
    twice = snell(strip_metric, (1, 2), 0, x, once)["xi_r"]
    assert np.abs(twice - xi).max() < 1e-12


# ------------------------------------------------------------------ fields


def test_centre_amplitude_and_gaussian_profile(plane):
    eps = 0.02
    b = launch_state(plane, (0.0, 0.0), (1.0, 0.5), width=1.5, u00=0.8)
    f = build_beam_tree(b, plane, 0.0 + 1e-9, 0.01)
    centre = evaluate_beam_field(f, eps, [b.x], 0.0, use_cutoff=False)[0]
    assert abs(centre) == pytest.approx((math.pi * eps) ** -0.5 * 0.8, rel=1e-12)
    rng = np.random.default_rng(0)
    Y = rng.normal(scale=0.1, size=(50, 2))
    vals = evaluate_beam_field(f, eps, b.x + Y, 0.0, use_cutoff=False)
    expect = np.exp(-np.einsum("pi,ij,pj->p", Y, b.H.imag, Y) / eps)
    assert np.abs(np.abs(vals) / abs(centre) - expect).max() < 1e-10


def test_plane_mass_against_quadrature(plane):
    eps = 0.01
    b = launch_state(plane, (0.0, 0.0), (1.0, 0.0), width=1.2, u00=1.3)
    f = build_beam_tree(b, plane, 1e-9, 0.01)
    g = np.linspace(-1.0, 1.0, 801)
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    U = evaluate_beam_field(f, eps, X, 0.0, use_cutoff=False)
    mass = (np.abs(U) ** 2).sum() * (g[1] - g[0]) ** 2
    assert mass == pytest.approx(beam_mass(b.H, b.u00), rel=1e-4)


def test_tree_branches_keep_im_h_positive(strip_metric):
    b = launch_state(strip_metric, (0.3, 0.5), (1.0, 0.2))
    f = build_beam_tree(b, strip_metric, 2.0, 0.01)
    assert {br.kind for br in f.branches} == {"launch", "reflect", "transmit"}
    for br in f.branches:
        for z in br.Z:
            G = z[4:8].reshape(2, 2).imag
            assert np.linalg.eigvalsh(0.5 * (G + G.T)).min() > 0


def test_artificial_interfaces_are_not_split(flat_strip_metric):
    b = launch_state(flat_strip_metric, (0.3, 0.5), (1.0, 0.2))
    f = build_beam_tree(b, flat_strip_metric, 1.2, 0.01)
    assert all(ev.kind == "boundary" for ev in f.events)


# -------------------------------------------------------------------- echo


@pytest.fixture(scope="module")
def square_es_300(square_metric):
    return compute_spectrum(refine(square_metric.complex, 0.02), square_metric, 300)


def test_neumann_wall_echo_sign_positive(square_metric, square_es_300):
    rep = beam_echo_experiment(square_metric, (1, 2), (0.35, 0.5), 0.3, (1.0, 0.0), 0.05, square_es_300,
                               boundary="neumann", width=4.0, max_truncation=0.1)
    assert rep.predicted_r == 1.0
    assert rep.detected
    assert rep.correlation > 0.8


def test_echo_rejects_under_resolved_mesh(square_metric):
    from rpoly.spectral import ResolutionError

    es = compute_spectrum(refine(square_metric.complex, 0.05), square_metric, 20)
    with pytest.raises(ResolutionError):
        beam_echo_experiment(square_metric, (1, 2), (0.35, 0.5), 0.3, (1.0, 0.0), 0.05, es)


def test_unit_square_fixture_is_flat():
    assert unit_square().n_top == 2
