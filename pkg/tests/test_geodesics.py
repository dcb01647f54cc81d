import numpy as np
import pytest
from hypothesis import given, strategies as st

from pullback_lab.errors import ChartExitError, DomainError, NoConvergenceError
from pullback_lab.geodesics import (SHOOT_TOL, exp_map, geodesic_flow, kinetic_energy, log_map)
from pullback_lab.geometry import custom_diag, euclidean, sphere_chart, torus

S = sphere_chart(margin=0.1)
S_NUM = sphere_chart(margin=0.1, analytic=False)


def test_euclidean_straight_line():
    st_ = geodesic_flow(euclidean(2), [0.0, 0.0], [1.0, 2.0], 0.5)
    assert np.allclose(st_.x, [0.5, 1.0]) and np.allclose(st_.mu, [1.0, 2.0])


def test_t_zero_exact():
    p, v = np.array([1.0, 0.3]), np.array([0.2, -0.1])
    st_ = geodesic_flow(S, p, v, 0.0)
    assert np.array_equal(st_.x, p) and np.array_equal(st_.mu, v)


def test_great_circle(oracles):
    # θ grows southward, so the unit north-pointing vector is −∂_θ
    north = geodesic_flow(S, [np.pi / 2, 0.0], [-1.0, 0.0], np.pi / 4)
    assert north.x == pytest.approx([oracles["sphere_geodesic_north"], 0.0], abs=1e-9)
    assert np.sqrt(kinetic_energy(S, north.x, north.mu))[0] == pytest.approx(1.0, abs=1e-9)
    south = geodesic_flow(S, [np.pi / 2, 0.0], [1.0, 0.0], np.pi / 4)
    assert south.x[0] == pytest.approx(oracles["sphere_geodesic_south"], abs=1e-9)


def test_torus_wrap():
    st_ = geodesic_flow(torus((1.0, 1.0)), [0.9, 0.0], [0.3, 0.0], 1.0)
    assert st_.x == pytest.approx([0.2, 0.0], abs=1e-14)


def test_exp_examples():
    E = euclidean(2)
    assert exp_map(E, [0.1, 0.2], [0.3, -0.4]) == pytest.approx([0.4, -0.2])
    p = np.array([1.2, 0.4])
    assert np.array_equal(exp_map(S, p, [0.0, 0.0]), p)
    v = 0.7
    assert exp_map(S, [np.pi / 2, 0.0], [-v, 0.0])[0] == pytest.approx(np.pi / 2 - v, abs=1e-9)
    with pytest.raises(DomainError):
        exp_map(torus((1.0, 1.0)), [0.0, 0.0], [0.6, 0.0])


def test_chart_exit_reports_time():
    with pytest.raises(ChartExitError) as info:
        geodesic_flow(S, [0.3, 0.0], [-1.0, 0.0], 1.0)
    assert info.value.exit_time == pytest.approx(0.2, abs=1e-3)


def test_log_examples():
    E = euclidean(2)
    assert log_map(E, [0.1, 0.2], [0.5, -0.1]) == pytest.approx([0.4, -0.3])
    T = torus((1.0, 1.0))
    assert log_map(T, [0.9, 0.05], [0.1, 0.95]) == pytest.approx([0.2, -0.1])
    with pytest.raises(NoConvergenceError):
        log_map(S, [1.0, 0.3], [1.4, 0.7], max_iter=1)


@given(st.floats(0.6, 2.5), st.floats(0, 6.28), st.floats(0, 2 * np.pi))
def test_exp_log_round_trip(th, ph, ang):
    p = np.array([th, ph])
    # |v|_g = 0.3
    v = 0.3 * np.array([np.cos(ang), np.sin(ang) / np.sin(th)])
    back = log_map(S, p, exp_map(S, p, v))
    assert np.max(np.abs(back - v)) <= 10 * SHOOT_TOL


@given(st.floats(0.6, 2.5), st.floats(0, 6.28), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_energy_conserved(th, ph, a, b):
    st_ = geodesic_flow(S_NUM, [th, ph], [a, b], 1.0)
    e0 = kinetic_energy(S_NUM, [th, ph], [a, b])[0]
    e1 = kinetic_energy(S_NUM, st_.x, st_.mu)[0]
    assert abs(e1 - e0) <= 1e-8


@given(st.floats(0.8, 2.3), st.floats(0, 6.28), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3),
       st.sampled_from([0.5, 2.0]))
def test_scaling(th, ph, a, b, c):
    x1 = geodesic_flow(S, [th, ph], [c * a, c * b], 1.0).x
    x2 = geodesic_flow(S, [th, ph], [a, b], c).x
    assert np.max(np.abs(x1 - x2)) < 1e-8


def test_batched_equals_single(rng):
    p = np.column_stack([rng.uniform(1.0, 2.0, 6), rng.uniform(0, 6, 6)])
    v = rng.uniform(-0.3, 0.3, (6, 2))
    batch = geodesic_flow(S, p, v, 1.0).x
    singles = np.array([geodesic_flow(S, p[i], v[i], 1.0).x for i in range(6)])
    assert np.max(np.abs(batch - singles)) < 1e-9


def test_warped_geodesic_energy():
    M = custom_diag(["1 + x2^2", "exp(x1)"], [-2, -2], [2, 2])
    st_ = geodesic_flow(M, [0.1, 0.2], [0.4, -0.3], 1.0)
    assert abs(kinetic_energy(M, st_.x, st_.mu)[0] - kinetic_energy(M, [0.1, 0.2], [0.4, -0.3])[0]) < 1e-8
