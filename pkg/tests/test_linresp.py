import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinplasma.dispersion import DispersionProblem, find_root
from spinplasma.equilibrium import Equilibrium1D, EquilibriumSpin, QuadratureError
from spinplasma.linresp import (
    HarmonicSolution, ModeSpec, ResonanceError, SpinCoefficients, dispersion_general,
    dispersion_terms, f1_darwin, f1_spin_orbit, psi_n, psi_n_bessel,
    spin_orbit_operator_residual, write_residual_grid,
)
from spinplasma.params import NormalizedParams

G = 2.0023


def coefficients(eps=0.05, B0=2.0, g=G):
    return SpinCoefficients(omega_c=-B0, omega_cg=-0.5 * g * B0, mu=-g * eps / 4, hbar=eps, B0=B0)


def normalized(eps, vt, B0, a, g=G):
    return NormalizedParams(vt=vt, eps_q=eps, omega_c=B0, delta_omega_c=(g / 2 - 1) * B0,
                            mu=-g * eps / 4, B0=B0, a=a, g=g)


# ------------------------------------------------------------------ psi_n
def test_psi_zero_mode_is_constant():
    assert np.allclose(psi_n(0, 0.3, np.linspace(0, 6, 7)), 1 / math.sqrt(2 * math.pi), rtol=1e-15)


@pytest.mark.parametrize("k_perp", [0.0, 0.7])
def test_psi_orthonormal(k_perp):
    phi = 2 * np.pi * np.arange(64) / 64
    w = 2 * np.pi / 64
    for n in range(-2, 3):
        for m in range(-2, 3):
            ip = np.sum(psi_n(n, 0.4, phi, k_perp, 1.3) * np.conj(psi_n(m, 0.4, phi, k_perp, 1.3))) * w
            assert ip == pytest.approx(float(n == m), abs=1e-13)


@given(n=st.integers(-3, 3), pp=st.floats(0, 2), phi=st.floats(0, 2 * math.pi))
def test_psi_bessel_expansion(n, pp, phi):
    a = psi_n(n, pp, phi, 0.9, -1.2)
    b = psi_n_bessel(n, pp, phi, 0.9, -1.2)
    assert abs(a - b) < 1e-10


def test_psi_needs_cyclotron_frequency():
    with pytest.raises(ValueError):
        psi_n(1, 0.3, 0.0, k_perp=0.5, omega_c=0.0)
    with pytest.raises(ValueError):
        psi_n_bessel(1, 0.3, 0.0, k_perp=0.5, omega_c=0.0)


def test_mode_spec_validation():
    with pytest.raises(ValueError):
        ModeSpec(1.0, math.inf)
    with pytest.raises(ValueError):
        ModeSpec(1.0, 0.1, E1=0.0)


# -------------------------------------------------------------- f1 darwin
def test_darwin_factor_and_classical_limit():
    eq = Equilibrium1D(0.2)
    mode = ModeSpec(1.1 + 0.1j, 0.8)
    p = np.linspace(-1, 1, 20)
    ratio = f1_darwin(eq, mode, eps_q=0.3)(p) / f1_darwin(eq, mode, eps_q=0.0)(p)
    assert np.allclose(ratio, 1 + 0.09 * 0.64 / 8, rtol=1e-14)


def test_f1_linear_in_field():
    eq = Equilibrium1D(0.2)
    p = np.linspace(-1, 1, 21)
    a = f1_darwin(eq, ModeSpec(1.1 + 0.1j, 0.8, E1=1.0))(p)
    b = f1_darwin(eq, ModeSpec(1.1 + 0.1j, 0.8, E1=3.5))(p)
    assert np.allclose(b, 3.5 * a, rtol=1e-14, atol=0)


@pytest.mark.parametrize("eps_q", [0.0, 0.5])
def test_f1_closes_gauss_law_at_the_root(eps_q):
    # i k E1 = q int f1 dp_z holds exactly when omega solves the exact relation
    vt, k = 0.1, 1.0
    p = normalized(eps_q, vt, 0.0, 0.0)
    root = find_root(DispersionProblem("langmuir_exact", k, p, nu=0.0), 1.02)
    eq = Equilibrium1D(vt)
    f1 = f1_darwin(eq, ModeSpec(root.omega, k), eps_q=eps_q, nu=0.0)
    pz = np.linspace(-8 * vt, 8 * vt, 4001)
    n1 = np.trapezoid(f1(pz), pz)
    assert -n1 == pytest.approx(1j * k, rel=1e-9)
    # off the root the closure fails
    f1_off = f1_darwin(eq, ModeSpec(root.omega * 1.01, k), eps_q=eps_q, nu=0.0)
    assert abs(-np.trapezoid(f1_off(pz), pz) - 1j * k) > 1e-3


def test_real_pole_in_support_raises():
    with pytest.raises(ResonanceError):
        f1_darwin(Equilibrium1D(0.1), ModeSpec(0.1, 1.0), nu=0.0)
    f1_darwin(Equilibrium1D(0.1), ModeSpec(0.1, 1.0), nu=1e-6)


# ---------------------------------------------------------- f1 spin-orbit
def test_no_moment_leaves_only_charge_channel():
    c = SpinCoefficients(omega_c=-1.0, omega_cg=-1.001, mu=0.0, hbar=0.05, B0=1.0)
    f0 = EquilibriumSpin(0.3, -0.8)
    sol = f1_spin_orbit(f0, ModeSpec(1.2 + 0.3j, 0.5), c)
    h = sol(0.2, 0.1, 0.7)
    assert h[(1, -1)] == 0 and h[(-1, 1)] == 0 and h[(0, 0)] != 0
    ref = f1_darwin(Equilibrium1D(0.3), ModeSpec(1.2 + 0.3j, 0.5), eps_q=0.05, nu=0.0)
    # same denominator and Darwin factor as the 1D solution
    assert h[(0, 0)] / f0.d_pz(0.2, 0.1, 0.7) == pytest.approx(
        ref(0.1) / Equilibrium1D(0.3).dp(0.1), rel=1e-14)


def test_zero_field_makes_denominators_coincide():
    c = SpinCoefficients(omega_c=0.0, omega_cg=0.0, mu=-0.05, hbar=0.1, B0=0.0)
    f0 = EquilibriumSpin(0.3, 0.0)
    w, k = 1.2 + 0.3j, 0.5
    sol = f1_spin_orbit(f0, ModeSpec(w, k), c)
    pp, pz, th = 0.2, 0.1, 0.7
    h = sol(pp, pz, th)
    # with a = 0 the d/dtheta source vanishes and only the mixed term is left, odd between harmonics
    assert h[(1, -1)] == pytest.approx(-h[(-1, 1)], rel=1e-14)
    X = np.sin(th) * f0.d_pz(pp, pz, th)
    assert h[(1, -1)] == pytest.approx(1j * k * c.mu / 4 * pp * X / (w - k * pz), rel=1e-12)


def test_solution_satisfies_linearized_equation():
    f0 = EquilibriumSpin(0.3, -0.8)
    sol = f1_spin_orbit(f0, ModeSpec(1.2 + 0.3j, 0.5), coefficients())
    assert isinstance(sol, HarmonicSolution)
    r = spin_orbit_operator_residual(sol, f0)
    assert r.relative < 1e-9
    assert r.leakage < 1e-12


def test_dropping_b0_source_breaks_the_equation():
    f0 = EquilibriumSpin(0.3, -0.8)
    sol = f1_spin_orbit(f0, ModeSpec(1.2 + 0.3j, 0.5), coefficients(), include_b0_coupling=False)
    r = spin_orbit_operator_residual(sol, f0)
    assert r.per_harmonic[(0, 0)] < 1e-9
    assert r.per_harmonic[(1, -1)] > 0.1


def test_spin_resonance_in_support_raises():
    c = coefficients()
    f0 = EquilibriumSpin(0.3, -0.8)
    w = abs(c.delta) + 0.01
    with pytest.raises(ResonanceError):
        f1_spin_orbit(f0, ModeSpec(w, 0.5), c)
    with pytest.raises(ValueError):
        f1_spin_orbit(f0, ModeSpec(1.2 + 0.3j, 0.5, k_perp=0.1), c)


# ---------------------------------------------------- general relation
def test_cold_unmagnetized_limit_has_plasma_root():
    f0 = EquilibriumSpin(1e-3, 0.0)
    p = normalized(0.0, 1e-3, 0.0, 0.0)
    assert abs(dispersion_general(1.0, 0.0, f0, p, nu=0.0)) < 1e-12
    assert abs(dispersion_general(1.1, 0.0, f0, p, nu=0.0)) > 0.1


def test_warm_unmagnetized_limit_matches_taylor_root():
    vt, k = 0.05, 1.0
    from spinplasma.dispersion import classical_root
    w = classical_root(k, vt)
    f0 = EquilibriumSpin(vt, 0.0)
    D = dispersion_general(w, k, f0, normalized(0.0, vt, 0.0, 0.0), nu=0.0)
    # what is left is the next Taylor term, -15 k^4 <p_z^2>^2 / omega^4
    assert D.real == pytest.approx(-15 / 4 * (k * vt) ** 4 / w**4, rel=0.05)
    assert abs(D.imag) < 1e-15


def test_conjugate_symmetry():
    f0 = EquilibriumSpin(0.3, -0.8)
    p = normalized(0.05, 0.3, 2.0, 0.8)
    w = 1.1 + 0.2j
    a = dispersion_general(w, 0.5, f0, p, nu=0.0, include_b0_coupling=True)
    b = dispersion_general(w.conjugate(), 0.5, f0, p, nu=0.0, include_b0_coupling=True)
    assert abs(a.conjugate() - b) < 1e-12 * abs(a)


def test_closed_form_is_small_wavenumber_limit_of_quadrature():
    # spin + mixed channels against the closed bracket with derived coefficients;
    # the channels enter the residual as -omega * T
    eps, vt, B0, a = 0.05, 0.3, 20.0, 0.8
    p = normalized(eps, vt, B0, a)
    f0 = EquilibriumSpin(vt, -a, n_p=40)
    D = (G / 2 - 1) * B0
    t = math.tanh(a)
    A = -(G / 2) ** 2 * eps**2 / 32
    B = -(G / 2) ** 2 * eps * vt**2 / 16
    k = 1e-5
    errs = []
    for dl in (2e-4, 1e-4, 5e-5):
        w = D + dl
        T = dispersion_terms(w, k, f0, p, nu=0.0, resonant_only=True, n_pperp=16, n_pz=96, n_theta=16)
        x = k * vt
        closed = w * w * (A * (x**2 / dl**2 + 1.5 * x**4 / dl**4) + B * t * (1 / dl + x**2 / (2 * dl**3)))
        errs.append(abs(-w * (T["spin"] + T["mixed"]) - closed) / abs(closed))
    assert errs[0] < 1e-6 and errs[-1] < 1e-4
    # mismatch grows as (k v_t / d)^4
    for r in np.array(errs[1:]) / np.array(errs[:-1]):
        assert r == pytest.approx(16, rel=0.15)


def test_unconverged_quadrature_raises():
    f0 = EquilibriumSpin(0.3, -0.8)
    p = normalized(0.05, 0.3, 2.0, 0.8)
    with pytest.raises(QuadratureError) as exc:
        dispersion_general(1.1 + 0.2j, 0.5, f0, p, tol=1e-30, max_doublings=1,
                           n_pperp=2, n_pz=4, n_theta=2)
    assert exc.value.error_estimate > 0
    with pytest.raises(ValueError):
        dispersion_general(1.1, 0.5, f0, p, max_doublings=0)


def test_residual_grid_csv(tmp_path):
    path = write_residual_grid(tmp_path / "grid.csv", lambda w: w * w - 1, (0, 2), (-1, 1), 5, 3)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["re_omega", "im_omega", "re_D", "im_D", "abs_D"]
    assert len(rows) == 16
    for r in rows[1:]:
        w = complex(float(r[0]), float(r[1]))
        d = w * w - 1
        assert float(r[2]) == d.real and float(r[3]) == d.imag and float(r[4]) == abs(d)
