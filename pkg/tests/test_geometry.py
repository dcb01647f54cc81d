import numpy as np
import pytest
from hypothesis import given, strategies as st

from pullback_lab.errors import DegreeError, DomainError, SingularMetricError
from pullback_lab.geometry import (ChartManifold, check_metric, christoffel, custom_diag, euclidean,
                                   pointwise_tensor_norm, riemann_tensor, sectional_curvature, sphere_chart,
                                   torus, volume_form)
from pullback_lab.thom import curvature_two_form

POLAR = custom_diag(["1", "x1^2"], [0.5, -4.0], [4.0, 4.0], name="polar")
WARPED = custom_diag(["1 + x2^2", "exp(x1)", "2 + sin(x1*x2)"], [-1, -1, -1], [1, 1, 1], name="warped3")


def test_euclidean_christoffel_zero(rng):
    x = rng.uniform(-1, 1, (5, 2))
    assert np.all(christoffel(euclidean(2), x) == 0.0)


def test_flat_torus_numeric_christoffel_zero(rng):
    T = torus((1.0, 2.0))
    assert np.max(np.abs(christoffel(T, rng.random((5, 2))))) < 1e-12


def test_sphere_christoffel_oracle(oracles):
    S = sphere_chart(analytic=False)
    gam = christoffel(S, [np.pi / 3, 0.0])
    assert gam[0, 1, 1] == pytest.approx(oracles["sphere_christoffel_pi3"], abs=1e-9)
    assert gam[0, 1, 1] == pytest.approx(-0.43301, abs=1e-5)
    table = np.array(oracles["sphere_christoffel_table"])
    assert np.max(np.abs(christoffel(S, [1.1, 0.3]) - table)) < 1e-9
    # the analytic override agrees with the numeric path
    assert np.max(np.abs(christoffel(sphere_chart(), [1.1, 0.3]) - table)) < 1e-14


def test_polar_christoffel_oracle(oracles):
    gam = christoffel(POLAR, [2.0, 1.0])
    assert gam[0, 1, 1] == pytest.approx(oracles["polar_christoffel"]["r_pp"], abs=1e-9)
    assert gam[1, 0, 1] == pytest.approx(oracles["polar_christoffel"]["p_rp"], abs=1e-9)


def test_christoffel_stencil_order(oracles):
    S = sphere_chart(analytic=False)
    exact = np.array(oracles["sphere_christoffel_table"])
    x = [1.1, 0.3]
    for order, factor in ((2, 3.5), (4, 12.0)):
        e1 = np.max(np.abs(christoffel(S, x, h=0.02, order=order) - exact))
        e2 = np.max(np.abs(christoffel(S, x, h=0.01, order=order) - exact))
        assert e1 / e2 >= factor


@given(st.floats(0.2, 2.9), st.floats(0, 6.2))
def test_christoffel_symmetric_sphere(th, ph):
    gam = christoffel(sphere_chart(analytic=False), [th, ph])
    assert np.array_equal(gam, np.swapaxes(gam, 1, 2))


@given(st.lists(st.floats(-0.8, 0.8), min_size=3, max_size=3))
def test_christoffel_symmetric_custom(x):
    gam = christoffel(WARPED, x)
    assert np.array_equal(gam, np.swapaxes(gam, 1, 2))


def test_christoffel_domain_and_singular_errors():
    with pytest.raises(DomainError):
        christoffel(WARPED, [1.0, 0.0, 0.0])
    degenerate = custom_diag(["x1^2", "1"], [-1, -1], [1, 1])
    with pytest.raises(SingularMetricError):
        christoffel(degenerate, [0.0, 0.0])
    with pytest.raises(SingularMetricError):
        volume_form(degenerate, [0.0, 0.0])


def test_volume_form_examples():
    assert volume_form(euclidean(3), [0.1, 0.2, 0.3]) == 1.0
    assert volume_form(sphere_chart(), [np.pi / 2, 0.0]) == pytest.approx(1.0, abs=1e-15)
    diag = euclidean(2, metric=np.diag([4.0, 9.0]))
    assert volume_form(diag, [0.0, 0.0]) == pytest.approx(6.0, rel=1e-15)


@given(st.lists(st.floats(-0.9, 0.9), min_size=3, max_size=3))
def test_volume_form_squared_is_det(x):
    v = volume_form(WARPED, x)
    assert v * v == pytest.approx(np.linalg.det(WARPED.metric(x)), rel=1e-13)


def test_norm_examples():
    assert pointwise_tensor_norm(euclidean(2), [0, 0], [1.0, 0.0], 1) == pytest.approx(1.0)
    diag = euclidean(2, metric=np.diag([4.0, 1.0]))
    assert pointwise_tensor_norm(diag, [0, 0], [1.0, 0.0], 1) == pytest.approx(0.5)
    S = sphere_chart()
    assert pointwise_tensor_norm(S, [np.pi / 6, 0.0], [0.0, 1.0], 1) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(DegreeError):
        pointwise_tensor_norm(euclidean(2), [0, 0], [1.0], 3)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(-10, 10),
       st.integers(0, 3), st.lists(st.floats(-0.9, 0.9), min_size=3, max_size=3))
def test_norm_homogeneous(coeffs, c, k, x):
    from pullback_lab.multiindex import n_components
    v = np.resize(np.asarray(coeffs), n_components(3, k))
    a = pointwise_tensor_norm(WARPED, x, c * v, k)
    b = abs(c) * pointwise_tensor_norm(WARPED, x, v, k)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


def test_norm_zero_iff_zero():
    assert pointwise_tensor_norm(WARPED, [0.1, 0.2, 0.3], np.zeros(3), 2) == 0.0
    assert pointwise_tensor_norm(WARPED, [0.1, 0.2, 0.3], [0, 1e-8, 0], 2) > 0.0


def test_metric_invariants_sampled(rng):
    for M in (WARPED, sphere_chart(), torus((1.0, 1.0))):
        x = M.lower + rng.random((50, M.dim)) * (M.upper - M.lower)
        x = np.clip(x, M.lower + 0.1, M.upper - 0.1)
        asym, eig = check_metric(M, x)
        assert asym == 0.0 and eig > 0.0


def test_sphere_curvature(oracles):
    S = sphere_chart(analytic=False)
    assert sectional_curvature(S, [np.pi / 2, 0.0]) == pytest.approx(oracles["sphere_sectional_curvature"],
                                                                     abs=1e-6)
    assert np.max(np.abs(riemann_tensor(torus((1.0, 1.0)), [0.3, 0.4]))) < 1e-10


@given(st.floats(0.3, 2.8), st.floats(0, 6))
def test_curvature_two_form_antisymmetric(th, ph):
    R = curvature_two_form(sphere_chart(), [th, ph])
    assert np.max(np.abs(R + np.swapaxes(R, 1, 2))) < 1e-6
    assert np.max(np.abs(R + np.swapaxes(R, 3, 4))) < 1e-12


def test_wrap_and_orientation():
    T = torus((1.0, 2.0))
    assert np.allclose(T.wrap([1.25, -0.5]), [0.25, 1.5])
    with pytest.raises(ValueError):
        ChartManifold(1, [0], [1], (False,), lambda x: np.ones((len(x), 1, 1)), orientation=-1)
