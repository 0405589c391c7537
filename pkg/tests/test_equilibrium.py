import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from spinplasma.equilibrium import (
    Equilibrium1D, EquilibriumSpin, QuadratureError, hermite_rule, maxwellian_1d,
    normalize_and_moments, sphere_rule, spin_maxwellian,
)

speeds = st.floats(min_value=1e-3, max_value=10.0)
args = st.floats(min_value=-20.0, max_value=20.0)


def test_maxwellian_peak():
    f = maxwellian_1d(0.3)
    assert f(0.0) == pytest.approx(1 / (math.sqrt(math.pi) * 0.3), rel=1e-15)


@given(vt=speeds)
def test_maxwellian_normalized(vt):
    x, w = np.polynomial.hermite.hermgauss(40)
    # integral of f = amplitude * scale * sum(w) with the Gaussian in the rule
    f = maxwellian_1d(vt)
    assert f.amplitude * vt * w.sum() == pytest.approx(1.0, abs=1e-12)


@given(vt=speeds, p=st.floats(min_value=-50, max_value=50))
def test_maxwellian_even(vt, p):
    f = maxwellian_1d(vt)
    assert f(p) == f(-p)


def test_maxwellian_derivative_against_finite_difference():
    f = maxwellian_1d(0.7)
    p = np.linspace(-2, 2, 11)
    h = 1e-5
    assert np.allclose(f.dp(p), (f(p + h) - f(p - h)) / (2 * h), atol=1e-9)


def test_rejects_nonpositive_speed():
    with pytest.raises(ValueError):
        Equilibrium1D(0.0)
    with pytest.raises(ValueError):
        EquilibriumSpin(-1.0)


def test_spin_isotropic_at_zero_argument():
    f = spin_maxwellian(0.4, 0.0)
    th = np.linspace(0, np.pi, 9)
    vals = f(0.1, -0.2, th)
    assert np.allclose(vals, vals[0], rtol=1e-15, atol=0)


def test_spin_half_polarization_by_product_quadrature():
    # oracle: scipy adaptive quadrature over (p, theta_s) of the unnormalized bracket
    a, vt = 0.5, 0.2

    def shape(th, p):
        return p * p * math.exp(-(p / vt) ** 2) * (
            math.exp(a) * (1 + math.cos(th)) + math.exp(-a) * (1 - math.cos(th))) * math.sin(th)

    num = integrate.dblquad(lambda th, p: shape(th, p) * math.cos(th), 0, 8 * vt, 0, math.pi,
                            epsabs=1e-14, epsrel=1e-13)[0]
    den = integrate.dblquad(shape, 0, 8 * vt, 0, math.pi, epsabs=1e-14, epsrel=1e-13)[0]
    assert 3 * num / den == pytest.approx(math.tanh(0.5), rel=1e-10)
    assert math.tanh(0.5) == pytest.approx(0.4621, abs=1e-4)
    m = normalize_and_moments(EquilibriumSpin(vt, a))
    assert m.sz == pytest.approx(3 * num / den, rel=1e-10)


def test_large_argument_concentrates_on_up_state():
    f = EquilibriumSpin(1.0, a=50.0)
    assert f(0.0, 0.0, np.pi) / f(0.0, 0.0, 0.0) < 1e-15
    g = EquilibriumSpin(1.0, a=math.inf)
    assert g(0.0, 0.0, np.pi) == 0.0 and np.isfinite(g(0.0, 0.0, 0.0))


def test_rejects_theta_outside_range():
    f = EquilibriumSpin(1.0, 0.3)
    with pytest.raises(ValueError):
        f(0.0, 0.0, -0.1)
    with pytest.raises(ValueError):
        f(0.0, 0.0, 3.2)


def test_electron_sign_convention():
    f = spin_maxwellian(1.0, 0.8)
    assert f.a == -0.8
    assert f(0.0, 0.0, np.pi) > f(0.0, 0.0, 0.0)
    assert normalize_and_moments(f).sz == pytest.approx(-math.tanh(0.8), rel=1e-12)


@pytest.mark.parametrize("a", [0.0, 0.1, 0.5, 2.0, -1.3])
def test_spin_moments(a):
    vt = 0.3
    m = normalize_and_moments(EquilibriumSpin(vt, a))
    assert m.pz2 == pytest.approx(vt**2 / 2, rel=1e-12)
    assert m.sz == pytest.approx(math.tanh(a), abs=1e-12)
    assert m.norm == pytest.approx(EquilibriumSpin(vt, a).norm, rel=1e-12)


def test_1d_moments():
    m = normalize_and_moments(Equilibrium1D(0.25))
    assert m.pz2 == pytest.approx(0.25**2 / 2, rel=1e-13)
    assert m.sz == 0.0


def test_full_measure_normalization_by_brute_force():
    # d^3p d^2s with a 3D Cartesian Hermite rule and the sphere rule
    f = EquilibriumSpin(0.4, 0.9)
    p, w = hermite_rule(20, f.scale)
    th, wt, ph, wph = sphere_rule(12, 4)
    gauss = np.exp(-(p / f.scale) ** 2)
    px, py, pz = np.meshgrid(p, p, p, indexing="ij")
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]) / (
        gauss[:, None, None] * gauss[None, :, None] * gauss[None, None, :])
    pperp = np.hypot(px, py)
    total = 0.0
    for t, wtt in zip(th, wt):
        total += wtt * wph.sum() * np.sum(W * f(pperp, pz, t))
    assert total == pytest.approx(1.0, rel=1e-12)


def test_spin_transverse_moments_vanish():
    f = EquilibriumSpin(0.4, 1.1)
    th, wt, ph, wph = sphere_rule(16, 8)
    vals = f(0.0, 0.0, th)
    sx = np.sum(wt * vals * np.sin(th)) * np.sum(wph * np.cos(ph))
    sy = np.sum(wt * vals * np.sin(th)) * np.sum(wph * np.sin(ph))
    assert abs(sx) < 1e-14 and abs(sy) < 1e-14


@given(a=args, pp=st.floats(0, 3), pz=st.floats(-3, 3), th=st.floats(0, math.pi))
def test_nonnegative_and_separable(a, pp, pz, th):
    f = EquilibriumSpin(1.0, a)
    v = f(pp, pz, th)
    assert v >= 0
    ref = f(0.0, 0.0, th)
    if ref > 0:
        assert v / ref == pytest.approx(math.exp(-(pp**2 + pz**2)), rel=1e-12)


def test_normalization_idempotent():
    f = EquilibriumSpin(0.5, 0.7)
    g = EquilibriumSpin(0.5, 0.7, n_p=48, n_theta=32)
    assert abs(f.norm - g.norm) / g.norm < 1e-12


def test_analytic_derivatives_against_finite_differences():
    f = EquilibriumSpin(0.8, 0.6)
    pp, pz, th, h = 0.3, -0.4, 1.1, 1e-5
    assert f.d_pz(pp, pz, th) == pytest.approx((f(pp, pz + h, th) - f(pp, pz - h, th)) / (2 * h), rel=1e-8)
    assert f.d_pperp(pp, pz, th) == pytest.approx((f(pp + h, pz, th) - f(pp - h, pz, th)) / (2 * h), rel=1e-8)
    assert f.d_theta(pp, pz, th) == pytest.approx((f(pp, pz, th + h) - f(pp, pz, th - h)) / (2 * h), rel=1e-8)


def test_under_resolved_quadrature_reports_error():
    with pytest.raises(QuadratureError) as exc:
        normalize_and_moments(EquilibriumSpin(1.0, 0.5), n_p=1, n_theta=1)
    assert exc.value.error_estimate > 1e-12
