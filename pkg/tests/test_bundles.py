import numpy as np
import pytest
from hypothesis import given, strategies as st

from pullback_lab.bundles import (PullbackBundle, compose_projections, connector, diffeomorphism,
                                  disk_bundle_projection, distance_to_zero_section, fiber_integrate,
                                  fiber_volume_submersion, horizontal_isometry_defect, nested_fiber_volume,
                                  projection, quotient_by_pullback_volume, sasaki_inverse, sasaki_metric,
                                  tangent_bundle, vertical_drift)
from pullback_lab.errors import (CoverageError, DegenerateSubmersionError, DescriptorError, DiskOverflowError,
                                 DomainError)
from pullback_lab.forms import DifferentialForm, FiberDisk, form_from_expressions, pullback, wedge
from pullback_lab.geometry import christoffel, custom_diag, euclidean, sphere_chart, torus
from pullback_lab.maps import SmoothMap, linear, theta_shear

S = sphere_chart(margin=0.3)
TS = tangent_bundle(S, 0.5)


def _sphere_points(rng, n):
    return np.column_stack([rng.uniform(0.5, np.pi - 0.5, n), rng.uniform(0, 2 * np.pi, n)])


def _fiber_points(b, rng, x, frac=0.9):
    """Random μ with |μ|_H ≤ frac·δ over each x."""
    H = b.bundle_metric(x)
    u = rng.standard_normal((len(x), b.rank))
    u *= (frac * b.delta * rng.random(len(x)) ** 0.5 / np.linalg.norm(u, axis=1))[:, None]
    L = np.linalg.cholesky(H)
    return np.linalg.solve(np.swapaxes(L, 1, 2), u[..., None])[..., 0]


# ----------------------------------------------------------------- Sasaki metric


def test_flat_sasaki_is_identity():
    b = tangent_bundle(torus((1.0, 1.0)), 0.3)
    assert np.array_equal(sasaki_metric(b, [0.2, 0.4], [0.1, -0.2]), np.eye(4))
    assert np.array_equal(sasaki_inverse(b, [0.2, 0.4], [0.1, -0.2]), np.eye(4))


def test_zero_section_block_diagonal(rng):
    x = _sphere_points(rng, 5)
    G = sasaki_metric(TS, x, np.zeros((5, 2)))
    g = S.metric(x)
    assert np.array_equal(G[:, :2, 2:], np.zeros((5, 2, 2)))
    assert np.array_equal(G[:, :2, :2], g) and np.array_equal(G[:, 2:, 2:], g)


def test_sasaki_symbolic_oracle(oracles):
    o = oracles["sasaki_sphere"]
    G = sasaki_metric(TS, o["x"], o["mu"])
    assert np.max(np.abs(G - np.array(o["matrix"]))) < 1e-8
    # the numeric-Christoffel path agrees too
    bn = tangent_bundle(sphere_chart(margin=0.3, analytic=False), 0.5)
    assert np.max(np.abs(sasaki_metric(bn, o["x"], o["mu"]) - np.array(o["matrix"]))) < 1e-8


def test_sasaki_inverse_product(rng):
    x = _sphere_points(rng, 10)
    mu = _fiber_points(TS, rng, x)
    G, Gi = sasaki_metric(TS, x, mu), sasaki_inverse(TS, x, mu)
    assert np.max(np.abs(G @ Gi - np.eye(4))) < 1e-10
    assert np.array_equal(Gi[:, :2, :2], np.linalg.inv(S.metric(x)))


def test_sasaki_positive_definite(rng):
    f = theta_shear(S, S, 0.1)
    b = PullbackBundle(S, S, f, 0.5)
    x = np.column_stack([rng.uniform(0.6, np.pi - 0.6, 100), rng.uniform(0, 2 * np.pi, 100)])
    mu = _fiber_points(b, rng, x, 1.0)
    G = sasaki_metric(b, x, mu)
    assert np.array_equal(G, np.swapaxes(G, 1, 2))
    assert np.min(np.linalg.eigvalsh(G)) > 0


def test_disk_overflow():
    with pytest.raises(DiskOverflowError):
        sasaki_metric(TS, [1.0, 0.0], [0.6, 0.0])


def test_delta_bounded_by_injectivity_hint():
    with pytest.raises(DomainError):
        T = torus((1.0, 1.0))
        PullbackBundle(T, T, None, 0.6)


def test_pullback_christoffels(rng):
    f = theta_shear(S, S, 0.1)
    b = PullbackBundle(S, S, f, 0.5)
    x = np.column_stack([rng.uniform(0.6, 2.4, 5), rng.uniform(0, 6, 5)])
    gam = christoffel(S, f(x))
    J = f.raw_jacobian_fd(x)
    want = np.einsum("nabl,nli->nabi", gam, J)
    assert np.max(np.abs(b.connection(x) - want)) < 1e-8


# ----------------------------------------------------------------- connector


def test_connector_examples(oracles):
    flat = tangent_bundle(torus((1.0, 1.0)), 0.3)
    assert connector(flat, [0.1, 0.2], [0.1, 0.0], [3.0, 4.0, 0.5, -0.5]) == pytest.approx([0.5, -0.5])
    assert connector(TS, [1.1, 0.4], [0.1, 0.2], [0, 0, 0.7, 0.2]) == pytest.approx([0.7, 0.2])
    o = oracles["connector_sphere"]
    assert np.max(np.abs(connector(TS, o["x"], o["mu"], o["tangent"]) - o["value"])) < 1e-12


# ----------------------------------------------------------------- fiber integration


def _trivial():
    R2 = euclidean(2)
    return PullbackBundle(R2, R2, None, 1.0)


def test_fiber_integrate_constant_fiber():
    b = _trivial()
    eta = DifferentialForm(b.total, 2, lambda z: np.column_stack([np.zeros((len(z), 5)), np.sin(z[:, 0]) + 2]),
                           support=FiberDisk(1.0, 2))
    x = np.array([[0.3, 0.1], [-1.0, 2.0]])
    assert fiber_integrate(b, eta)(x)[:, 0] == pytest.approx(np.pi * (np.sin(x[:, 0]) + 2), rel=1e-13)


def test_fiber_integrate_drops_non_top_components():
    b = _trivial()
    eta = DifferentialForm(b.total, 2, lambda z: np.column_stack([np.ones((len(z), 5)), np.zeros(len(z))]),
                           support=FiberDisk(1.0, 2))
    assert np.array_equal(fiber_integrate(b, eta)([[0.2, 0.2]]), [[0.0]])


def test_fiber_integrate_degree_three(oracles):
    b = _trivial()
    eta = form_from_expressions(b.total, 3, {"2,3,4": "x1"}, support=FiberDisk(1.0, 2))
    out = fiber_integrate(b, eta)
    x = np.array([[0.5, 0.0], [-0.25, 1.0]])
    assert out.degree == 1
    assert out(x) == pytest.approx(oracles["disk_area_unit"] * np.column_stack([np.zeros(2), x[:, 0]]), rel=1e-13)


def test_fiber_integrate_requires_support():
    b = _trivial()
    eta = form_from_expressions(b.total, 2, {"3,4": "1"})
    with pytest.raises(CoverageError):
        fiber_integrate(b, eta)


def test_projection_formula(rng):
    f = theta_shear(S, S, 0.1)
    b = PullbackBundle(S, S, f, 0.5)
    E = b.total
    pr = SmoothMap(E, S, lambda z: np.atleast_2d(z)[:, :2],
                   lambda z: np.broadcast_to(np.eye(2, 4), (len(np.atleast_2d(z)), 2, 4)))
    alpha = form_from_expressions(S, 1, {"1": "cos(phi)", "2": "sin(theta)^2"})
    eta = form_from_expressions(E, 2, {"3,4": "1 + theta*mu1", "1,3": "mu2", "2,4": "cos(phi)"},
                                support=FiberDisk(0.5, 2))
    x = np.column_stack([rng.uniform(0.8, 2.3, 6), rng.uniform(0, 6, 6)])
    lhs = fiber_integrate(b, wedge(pullback(alpha, pr), eta))(x)
    rhs = wedge(alpha, fiber_integrate(b, eta))(x)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


# ----------------------------------------------------------------- quotients and fiber volumes


def test_quotient_examples(oracles):
    W = custom_diag(["1", "1 + x1^2"], [-2, -2], [2, 2])
    pi = projection(W, euclidean(1, [-2], [2]), [-1], [1])
    assert quotient_by_pullback_volume(W, pi, [[1.0, 0.3]])[0] == pytest.approx(oracles["warped_quotient_x1"],
                                                                                 rel=1e-14)
    P = euclidean(3, metric=np.diag([1.0, 4.0, 9.0]))
    pi2 = projection(P, euclidean(1), [-1, -1], [1, 1])
    assert quotient_by_pullback_volume(P, pi2, [[0.0, 0.0, 0.0]])[0] == pytest.approx(6.0)
    # Sasaki disk bundle at a Christoffel-vanishing point (the equator) with unit fiber metric
    pi3 = disk_bundle_projection(TS)
    assert quotient_by_pullback_volume(TS.total, pi3, [[np.pi / 2, 0.3, 0.2, -0.1]])[0] == pytest.approx(1.0)
    degenerate_base = custom_diag(["x1^2"], [-1], [1])
    with pytest.raises(DegenerateSubmersionError):
        quotient_by_pullback_volume(R2 := euclidean(2), projection(R2, degenerate_base, [0], [1]), [[0.0, 0.0]])


def test_fiber_volume_examples(rng):
    R2 = euclidean(2)
    b = PullbackBundle(R2, R2, None, 1.0)
    assert fiber_volume_submersion(disk_bundle_projection(b), [0.3, -0.2]) == pytest.approx(np.pi, rel=1e-13)
    R1 = euclidean(1, [-2], [2])
    R1b = euclidean(1, [-4], [4])
    f = linear(R1, [[2.0]], R1b)
    assert fiber_volume_submersion(diffeomorphism(f), [1.0]) == pytest.approx(0.5)
    assert fiber_volume_submersion(diffeomorphism(f), [5.0]) == 0.0
    with pytest.raises(DescriptorError):
        fiber_volume_submersion(projection(R2, R1), [0.0])


def test_fiber_volume_composition():
    R3, R2, R1 = euclidean(3), euclidean(2), euclidean(1)
    inner = projection(R3, R2, [0.0], [1.0])
    outer = projection(R2, R1, [0.0], [1.0])
    direct = fiber_volume_submersion(compose_projections(inner, outer), [0.5])
    nested = nested_fiber_volume(inner, outer, [0.5])[0]
    assert direct == pytest.approx(1.0) and nested == pytest.approx(1.0)
    W = custom_diag(["1", "1 + x1^2", "1 + x2^2"], [-2] * 3, [2] * 3)
    Wm = custom_diag(["1", "1 + x1^2"], [-2] * 2, [2] * 2)
    inner = projection(W, Wm, [0.0], [1.0])
    outer = projection(Wm, R1, [0.0], [1.0])
    q = [0.7]
    assert fiber_volume_submersion(compose_projections(inner, outer), q) == pytest.approx(
        nested_fiber_volume(inner, outer, q)[0], rel=1e-12)


# ----------------------------------------------------------------- submersion geometry


def test_horizontal_lifts_isometric(rng):
    x = np.array([[np.pi / 2, 0.4], [np.pi / 2, 2.0]])
    mu = _fiber_points(TS, rng, x)
    assert horizontal_isometry_defect(TS, x, mu, np.eye(2)) < 1e-14
    x = _sphere_points(rng, 4)
    assert horizontal_isometry_defect(TS, x, _fiber_points(TS, rng, x), rng.standard_normal((3, 2))) < 1e-12


def test_vertical_lines_are_geodesics_generic_point(rng):
    # fibers are totally geodesic everywhere, not only where Christoffels vanish
    x = np.array([[1.0, 0.3]])
    drift = vertical_drift(TS, x, [[0.05, 0.0]], [[0.1, 0.2]])
    assert drift[0] < 1e-7


def test_distance_to_zero_section(rng):
    x = np.column_stack([rng.uniform(0.9, 2.2, 20), rng.uniform(0, 6, 20)])
    mu = _fiber_points(TS, rng, x)
    d = distance_to_zero_section(TS, x, mu)
    assert np.max(np.abs(d - TS.fiber_norm(x, mu))) < 1e-6
