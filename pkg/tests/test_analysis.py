import numpy as np
import pytest
from hypothesis import given, strategies as st

from pullback_lab.analysis import (MollifierConfig, chi_modulus, epsnu_condition, estimate_moduli, kernel_mass,
                                   mollify, second_derivative_bound, smoothstep, sup_error)
from pullback_lab.errors import DomainError, UndersamplingError
from pullback_lab.geometry import torus
from pullback_lab.maps import identity, shear, translation


def lin(x):
    return np.column_stack([2 * x[:, 0] - x[:, 1], x[:, 0] + 0.5 * x[:, 1]])


# ----------------------------------------------------------------- mollifier


def test_kernel_mass_is_one():
    for dim in (1, 2, 3):
        assert kernel_mass(MollifierConfig(0.1, dim=dim)) == pytest.approx(1.0, abs=1e-8)


def test_linear_maps_are_reproduced(rng):
    # the kernel is even, so affine maps are fixed by convolution
    cfg = MollifierConfig(0.2, dim=2)
    x = (rng.random((50, 2)) - 0.5)
    assert np.allclose(mollify(lin, cfg, x), lin(x), atol=1e-13)


def test_nu_zero_is_identity(rng):
    x = rng.standard_normal((30, 1))
    g = lambda x: np.abs(x[:, 0])
    assert np.array_equal(mollify(g, MollifierConfig(0.0), x), g(x))


def test_abs_at_zero_oracle(oracles):
    g = lambda x: np.abs(x[:, 0])
    val = mollify(g, MollifierConfig(0.1), [[0.0]])[0]
    assert val == pytest.approx(oracles["mollifier_abs_at_zero_nu0.1"], abs=1e-8)


@given(st.floats(0.76, 5.0), st.floats(0.01, 0.3))
def test_locality(rad, nu):
    cfg = MollifierConfig(nu, r=0.5, h=0.25, dim=2)
    x = np.array([[rad * 0.6, rad * 0.8]])
    g = lambda x: np.sin(x[:, 0]) * x[:, 1] ** 3
    assert np.array_equal(mollify(g, cfg, x), g(x))


def test_sin_error_bound(rng):
    g = lambda x: np.sin(x[:, 0])
    x = rng.uniform(-1, 1, (200, 1))
    assert sup_error(g, MollifierConfig(0.01), x) <= 0.01


def test_constant_and_window():
    g = lambda x: np.full(x.shape[0], 3.0)
    assert sup_error(g, MollifierConfig(0.1), np.linspace(-1, 1, 21)[:, None]) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        mollify(g, MollifierConfig(0.3), [[0.0]], window=([-0.1], [0.1]))
    with pytest.raises(DomainError):
        mollify(g, MollifierConfig(0.3), [[0.0, 0.0]])
    with pytest.raises(ValueError):
        MollifierConfig(-1.0)


def test_cutoff_monotone():
    cfg = MollifierConfig(0.1, r=0.5, h=0.25)
    t = np.linspace(0, 1.2, 2001)
    chi = cfg.chi(t)
    assert np.all(np.diff(chi) <= 1e-15)
    assert np.all(chi[t <= 0.5] == 1.0) and np.all(chi[t >= 0.75] == 0.0)
    assert smoothstep(np.array([-1.0, 0.5, 2.0])) == pytest.approx([0.0, 0.5, 1.0])


def test_chi_modulus_and_condition():
    cfg = MollifierConfig(0.1, r=0.5, h=0.25)
    d1, d2 = chi_modulus(cfg, 0.1), chi_modulus(cfg, 0.2)
    assert d2 == pytest.approx(2 * d1) and d1 > 0
    holds, dchi = epsnu_condition(cfg, 0.1, 2.0, 0.0)
    assert holds and dchi == pytest.approx(chi_modulus(cfg, 0.05))
    assert not epsnu_condition(cfg, 0.1, 2.0, 10.0)[0]


def test_second_derivative_bound_abs(rng):
    # |x| has a kink; smoothing makes it C² with |G''| ~ 1/ν inside B_r
    g = lambda x: np.abs(x[:, 0])
    x = rng.uniform(-0.4, 0.4, (200, 1))
    b1, gs = second_derivative_bound(g, MollifierConfig(0.1), x)
    b2, _ = second_derivative_bound(g, MollifierConfig(0.05), x)
    assert np.isfinite(b1) and 0 < b1 < b2 and gs <= 0.4


# ----------------------------------------------------------------- moduli


def test_moduli_of_doubling():
    eps = np.array([0.1, 0.2, 0.4])
    mod = estimate_moduli(lambda x: 2 * x, [-1.0], [1.0], n=401, eps=eps, radii=[0.2, 0.4])
    assert np.allclose(mod.delta_hat, eps / 2, atol=mod.spacing)
    assert np.allclose(mod.S_hat, [0.1, 0.2], atol=mod.spacing)


def test_moduli_isometry_and_monotone(T2):
    eps = np.array([0.05, 0.1, 0.2])
    mod = estimate_moduli(translation(T2, [0.1, 0.3]), n=40, eps=eps, radii=[0.1, 0.2])
    assert np.allclose(mod.delta_hat, eps, atol=mod.spacing)
    assert np.all(np.diff(mod.delta_hat) >= 0) and np.all(np.diff(mod.S_hat) >= 0)
    assert mod.as_dict()["label"] == "empirical at grid scale"


def test_moduli_undersampling():
    with pytest.raises(UndersamplingError):
        estimate_moduli(lambda x: x, [0.0], [1.0], n=40)


def test_moduli_shear_stable(T2):
    f = shear(T2, 0.1)
    eps = [0.1, 0.2]
    a = estimate_moduli(f, n=30, eps=eps, radii=[0.1])
    b = estimate_moduli(f, n=60, eps=eps, radii=[0.1])
    assert np.all(np.abs(a.delta_hat - b.delta_hat) <= 0.10 * b.delta_hat + a.spacing)
