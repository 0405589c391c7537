"""Linear response of the spin plasma to a longitudinal electrostatic wave.

Everything here is in normalized units (time 1/omega_p, speed c, momentum
m c, charge e, rationalized fields), so omega_p = m = c = 1, q = -1,
hbar = eps_q and mu = -g eps_q / 4.  Frequencies that carry a sign
(``omega_c``, ``omega_cg``, ``Delta``) follow q B0 / m c, which is negative for
electrons.

The perturbation is f1 exp(i k z - i omega t).  With k_perp = 0 only the
harmonics (0, 0) and (+-1, -+1) of exp(i n phi_p + i n' phi_s) are excited;
:class:`HarmonicSolution` holds their coefficients.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial.laguerre import laggauss
from scipy.special import jv

from .equilibrium import Equilibrium1D, EquilibriumSpin, QuadratureError, hermite_rule, sphere_rule
from .params import NormalizedParams

DEFAULT_NU = 1e-6


class ResonanceError(ValueError):
    """A resonant denominator vanishes inside the momentum support."""


@dataclass(frozen=True)
class ModeSpec:
    """Wave parameters in normalized units.

    ``omega`` in omega_p, ``k`` and ``k_perp`` in omega_p/c, ``E1`` in
    m c omega_p / e.  ``E1`` only sets the linear scale.
    """

    omega: complex
    k: float
    k_perp: float = 0.0
    E1: float = 1.0

    def __post_init__(self):
        if isinstance(self.k, complex) or not math.isfinite(self.k):
            raise ValueError("k must be real and finite")
        if not self.E1 > 0:
            raise ValueError("E1 must be positive")

    @classmethod
    def from_physical(cls, omega, k, omega_p, E1=1.0, k_perp=0.0, E_unit=1.0):
        """Build from CGS values: omega [1/s], k [1/cm], fields in ``E_unit``."""
        from .params import C_LIGHT
        scale = C_LIGHT / omega_p
        return cls(omega / omega_p, k * scale, k_perp * scale, E1 / E_unit)


@dataclass(frozen=True)
class SpinCoefficients:
    """Signed frequencies and couplings for the magnetized problem."""

    omega_c: float
    omega_cg: float
    mu: float
    hbar: float
    B0: float
    q: float = -1.0

    @property
    def delta(self) -> float:
        return self.omega_cg - self.omega_c

    @property
    def darwin(self) -> float:
        return self.hbar**2 / 8.0

    @classmethod
    def from_params(cls, p: NormalizedParams, q: float = -1.0):
        wc = q * p.B0
        return cls(omega_c=wc, omega_cg=0.5 * p.g * wc, mu=p.mu, hbar=p.eps_q,
                   B0=p.B0, q=q)


def psi_n(n: int, p_perp, phi_p, k_perp: float = 0.0, omega_c: float = 0.0, m: float = 1.0):
    """Azimuthal eigenfunction exp[i(n phi - beta sin phi)] / sqrt(2 pi).

    ``beta = k_perp p_perp / (m omega_c)``.  Reduces to
    exp(i n phi_p)/sqrt(2 pi) for ``k_perp = 0``.
    """
    phi_p = np.asarray(phi_p, dtype=float)
    if k_perp == 0.0:
        return np.exp(1j * n * phi_p) / math.sqrt(2.0 * math.pi) * np.ones_like(np.asarray(p_perp, float))
    if omega_c == 0.0:
        raise ValueError("k_perp != 0 requires a nonzero cyclotron frequency")
    beta = k_perp * np.asarray(p_perp, dtype=float) / (m * omega_c)
    return np.exp(1j * (n * phi_p - beta * np.sin(phi_p))) / math.sqrt(2.0 * math.pi)


def psi_n_bessel(n: int, p_perp, phi_p, k_perp: float, omega_c: float, m: float = 1.0,
                 n_terms: int = 40):
    """Truncated Bessel series sum_j J_j(beta) exp(i(n-j) phi) / sqrt(2 pi)."""
    phi_p = np.asarray(phi_p, dtype=float)
    if k_perp != 0.0 and omega_c == 0.0:
        raise ValueError("k_perp != 0 requires a nonzero cyclotron frequency")
    beta = 0.0 if k_perp == 0.0 else k_perp * np.asarray(p_perp, dtype=float) / (m * omega_c)
    out = np.zeros(np.broadcast(phi_p, beta).shape, dtype=complex)
    for j in range(-n_terms, n_terms + 1):
        out += jv(j, beta) * np.exp(1j * (n - j) * phi_p)
    return out / math.sqrt(2.0 * math.pi)


def _shifted(omega, nu):
    return complex(omega) + 1j * nu


def _check_pole(omega_eff: complex, shift: float, k: float, support: float, label: str):
    if omega_eff.imag != 0.0 or k == 0.0:
        return
    pole = (omega_eff.real - shift) / k
    if abs(pole) < support:
        raise ResonanceError(
            f"{label} pole at p_z = {pole:.6g} lies inside the support |p_z| < {support:.6g}; "
            "give omega an imaginary part or a regularization nu > 0")


def f1_darwin(f0: Equilibrium1D, mode: ModeSpec, *, eps_q: float = 0.0, q: float = -1.0,
              nu: float = DEFAULT_NU, support: float = 6.0) -> Callable:
    """Perturbed 1D distribution.

    f1 = -i q E1 (1 + eps_q^2 k^2 / 8) d f0/dp_z / (omega + i nu - k p_z).

    Returns a vectorized function of p_z.  ``support`` is in thermal
    momenta; a real pole inside it without regularization raises.
    """
    w = _shifted(mode.omega, nu)
    _check_pole(w, 0.0, mode.k, support * f0.scale, "Landau")
    amp = -1j * q * mode.E1 * (1.0 + eps_q**2 * mode.k**2 / 8.0)

    def f1(p_z):
        p_z = np.asarray(p_z, dtype=float)
        return amp * f0.dp(p_z) / (w - mode.k * p_z / f0.m)

    return f1


@dataclass(frozen=True)
class HarmonicSolution:
    """Coefficients of f1 on the harmonics (0,0), (1,-1) and (-1,1).

    f1 = g00 + g1m1 exp(i(phi_p - phi_s)) + gm11 exp(-i(phi_p - phi_s)).
    Each coefficient is a callable of (p_perp, p_z, theta_s).
    """

    g00: Callable
    g1m1: Callable
    gm11: Callable
    mode: ModeSpec
    coeffs: SpinCoefficients

    HARMONICS = ((0, 0), (1, -1), (-1, 1))

    def __call__(self, p_perp, p_z, theta_s) -> dict:
        return {(0, 0): self.g00(p_perp, p_z, theta_s),
                (1, -1): self.g1m1(p_perp, p_z, theta_s),
                (-1, 1): self.gm11(p_perp, p_z, theta_s)}

    def evaluate(self, p_perp, p_z, theta_s, phi_p, phi_s):
        """Full f1 on broadcastable arrays of all five coordinates."""
        h = self(p_perp, p_z, theta_s)
        chi = np.asarray(phi_p) - np.asarray(phi_s)
        return h[(0, 0)] + h[(1, -1)] * np.exp(1j * chi) + h[(-1, 1)] * np.exp(-1j * chi)


def f1_spin_orbit(f0: EquilibriumSpin, mode: ModeSpec, params: NormalizedParams | SpinCoefficients,
                  *, include_b0_coupling: bool = True, nu: float = 0.0,
                  support: float = 6.0) -> HarmonicSolution:
    """Harmonic solution of the linearized magnetized equation (k_perp = 0).

    The mixed-derivative channel uses d f0/dp_z, which is what the
    linearized equation produces.  ``include_b0_coupling`` keeps the
    mu B0 E1 source proportional to d f0/dp_perp, which also lands on the
    (+-1, -+1) harmonics; without it the solution no longer satisfies the
    linearized equation exactly when B0 > 0.
    """
    if mode.k_perp != 0.0:
        raise ValueError("only k_perp = 0 is supported")
    c = params if isinstance(params, SpinCoefficients) else SpinCoefficients.from_params(params)
    w = _shifted(mode.omega, nu)
    k, E1, mu, m = mode.k, mode.E1, c.mu, f0.m
    dlt = c.delta
    pmax = support * f0.scale
    _check_pole(w, 0.0, k, pmax, "Landau")
    if mu != 0.0:
        _check_pole(w, dlt, k, pmax, "spin resonance (omega - Delta)")
        _check_pole(w, -dlt, k, pmax, "spin resonance (omega + Delta)")
    a00 = -1j * c.q * E1 * (1.0 + c.darwin * k**2)
    a_s = 0.0 if mu == 0.0 else 1j * mu * E1 / (2.0 * c.hbar)
    a_x = 1j * k * mu * E1 / 4.0
    a_b = -1j * c.q * mu * c.B0 * E1 / 4.0 if include_b0_coupling else 0.0

    def g00(pp, pz, th):
        return a00 * f0.d_pz(pp, pz, th) / (w - k * np.asarray(pz) / m)

    def parts(pp, pz, th):
        pp = np.asarray(pp, dtype=float)
        s, co = np.sin(th), np.cos(th)
        # d/dtheta of d f0/dp_z and d f0/dp_perp for the spin Maxwellian
        X = s * f0.d_pz(pp, pz, th) + co * (-2.0 * np.asarray(pz) / f0.scale**2) * f0.d_theta(pp, pz, th)
        Y = s * f0.d_pperp(pp, pz, th) + co * (-2.0 * pp / f0.scale**2) * f0.d_theta(pp, pz, th)
        return pp, a_s * pp * f0.d_theta(pp, pz, th), a_x * pp * X, a_b * Y

    def g1m1(pp, pz, th):
        _, S, X, Y = parts(pp, pz, th)
        return (S + X + Y) / (w - dlt - k * np.asarray(pz) / m)

    def gm11(pp, pz, th):
        _, S, X, Y = parts(pp, pz, th)
        return (S - X + Y) / (w + dlt - k * np.asarray(pz) / m)

    return HarmonicSolution(g00, g1m1, gm11, mode, c)


def _fd6(fun, x, h):
    """Sixth-order central difference of ``fun`` at ``x`` with step ``h``."""
    c = (1 / 60, -3 / 20, 3 / 4)
    return (c[0] * (fun(x + 3 * h) - fun(x - 3 * h)) + c[1] * (fun(x + 2 * h) - fun(x - 2 * h))
            + c[2] * (fun(x + h) - fun(x - h))) / h


@dataclass(frozen=True)
class OperatorResidual:
    relative: float
    per_harmonic: dict
    leakage: float


def spin_orbit_operator_residual(solution: HarmonicSolution, f0: EquilibriumSpin, *,
                                 n_pperp: int = 8, n_pz: int = 16, n_theta: int = 8,
                                 n_phi: int = 8, fd_step: float = 1e-2) -> OperatorResidual:
    """Substitute ``solution`` into the linearized equation and measure the mismatch.

    The left side (-i omega + i k p_z - omega_c d/dphi_p - omega_cg d/dphi_s) f1
    uses spectral angle derivatives; the right side uses finite-difference
    derivatives of f0, so neither side reuses the closed-form derivatives in
    the solution.  ``relative`` is the largest per-harmonic ratio
    max|LHS - RHS| / max|RHS|; ``leakage`` is the largest harmonic outside
    {(0,0), (+-1,-+1)} relative to max|RHS|.
    """
    mode, c = solution.mode, solution.coeffs
    s = f0.scale
    u, _ = laggauss(n_pperp)
    pp = s * np.sqrt(u)
    pz, _ = hermite_rule(n_pz, s)
    th, _, _, _ = sphere_rule(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    PP, PZ, TH, FP, FS = np.meshgrid(pp, pz, th, phi, phi, indexing="ij")
    f1 = solution.evaluate(PP, PZ, TH, FP, FS)

    m = np.fft.fftfreq(n_phi, 1.0 / n_phi)
    F = np.fft.fft2(f1, axes=(3, 4))
    dphi_p = np.fft.ifft2(1j * m[:, None] * F, axes=(3, 4))
    dphi_s = np.fft.ifft2(1j * m[None, :] * F, axes=(3, 4))
    w, k = complex(mode.omega), mode.k
    lhs = (-1j * w + 1j * k * PZ / f0.m) * f1 - c.omega_c * dphi_p - c.omega_cg * dphi_s

    h = fd_step * s
    base = lambda pp_, pz_, th_: f0(pp_, pz_, th_)
    d_pz = _fd6(lambda x: base(PP, x, TH), PZ, h)
    d_pp = _fd6(lambda x: base(x, PZ, TH), PP, h)
    dh = fd_step
    d_th = _fd6(lambda t: f0.momentum_factor(PP, PZ) * f0.spin_factor(t) / f0.norm, TH, dh)
    d_th_pz = _fd6(lambda t: _fd6(lambda x: f0.momentum_factor(PP, x) * f0.spin_factor(t) / f0.norm,
                                  PZ, h), TH, dh)
    d_th_pp = _fd6(lambda t: _fd6(lambda x: f0.momentum_factor(x, PZ) * f0.spin_factor(t) / f0.norm,
                                  PP, h), TH, dh)
    E1, q, mu = mode.E1, c.q, c.mu
    sT, cT = np.sin(TH), np.cos(TH)
    rhs = -q * E1 * (1.0 + c.darwin * k**2) * d_pz
    rhs = rhs - 1j * k * mu * PP * E1 / 2.0 * (np.cos(FP) * np.sin(FS) - np.sin(FP) * np.cos(FS)) \
        * (sT * d_pz + cT * d_th_pz)
    if mu != 0.0:
        rhs = rhs + mu / c.hbar * PP * E1 * np.cos(FP - FS) * d_th
    rhs = rhs - q * mu * c.B0 * E1 / 2.0 * np.cos(FP - FS) * (sT * d_pp + cT * d_th_pp)

    R = np.fft.fft2(lhs - rhs, axes=(3, 4)) / n_phi**2
    S = np.fft.fft2(rhs, axes=(3, 4)) / n_phi**2
    scale = np.max(np.abs(rhs))
    per = {}
    idx = lambda n: n % n_phi
    for hn in HarmonicSolution.HARMONICS:
        ref = np.max(np.abs(S[..., idx(hn[0]), idx(hn[1])]))
        err = np.max(np.abs(R[..., idx(hn[0]), idx(hn[1])]))
        per[hn] = err / ref if ref > 0 else err / scale
    mask = np.ones((n_phi, n_phi), dtype=bool)
    for hn in HarmonicSolution.HARMONICS:
        mask[idx(hn[0]), idx(hn[1])] = False
    leak = float(np.max(np.abs(R[..., mask]))) / scale
    return OperatorResidual(max(per.values()), per, leak)


# ---------------------------------------------------------------------------
# general dispersion function by product quadrature


@dataclass(frozen=True)
class _Nodes:
    pp: np.ndarray
    pz: np.ndarray
    th: np.ndarray
    w: np.ndarray  # Gaussian times p_perp dp_perp dp_z sin(theta) dtheta


def _nodes(f0: EquilibriumSpin, n_pperp: int, n_pz: int, n_theta: int) -> _Nodes:
    """Product rule whose weights already contain exp(-p^2/m^2 v_t^2)."""
    s = f0.scale
    u, wu = laggauss(n_pperp)
    pp = s * np.sqrt(u)
    # int_0^inf p exp(-p^2/s^2) g(p) dp = (s^2/2) int_0^inf exp(-u) g du
    wpp = 0.5 * s**2 * wu
    pz, wz = hermite_rule(n_pz, s)
    th, wt, _, _ = sphere_rule(n_theta)
    PP, PZ, TH = np.meshgrid(pp, pz, th, indexing="ij")
    W = wpp[:, None, None] * wz[None, :, None] * wt[None, None, :]
    return _Nodes(PP, PZ, TH, W)


def dispersion_terms(omega, k: float, f0hat: EquilibriumSpin,
                     params: NormalizedParams | SpinCoefficients, *, nu: float = DEFAULT_NU,
                     resonant_only: bool = False, n_pperp: int = 12, n_pz: int = 48,
                     n_theta: int = 12) -> dict:
    """Per-channel contributions T with omega = sum(T).

    Keys: ``free`` (Darwin-corrected free current), ``spin`` (the
    d f0/dtheta_s channel), ``mixed`` (the (sin + cos d/dtheta) d f0/dp_z
    channel) and ``b0`` (the mu B0 coupling through d f0/dp_perp).  The
    polarization current is J_pol = d P_z/dt with
    P_z = -(3 mu/2) int (s x p)_z f1 dOmega and the phi integrals done
    analytically: int (s x p)_z e^{+-i(phi_p - phi_s)} = +-2 pi^2 i sin(theta) p_perp.
    ``resonant_only`` drops the (omega - omega_cg + omega_c ...) partner that
    does not resonate at positive omega.
    """
    c = params if isinstance(params, SpinCoefficients) else SpinCoefficients.from_params(params)
    nd = _nodes(f0hat, n_pperp, n_pz, n_theta)
    w = complex(omega)
    wr = w + 1j * nu
    m = f0hat.m
    pp, pz, th, W = nd.pp, nd.pz, nd.th, nd.w
    # f0 without its Gaussian, which lives in the weights
    f = f0hat.spin_factor(th) / f0hat.norm
    dpz = -2.0 * pz / f0hat.scale**2 * f
    dpp = -2.0 * pp / f0hat.scale**2 * f
    dth = -f0hat.polarization * np.sin(th) / f0hat.norm
    s, co = np.sin(th), np.cos(th)
    X = s * dpz + co * (-2.0 * pz / f0hat.scale**2) * dth
    Y = s * dpp + co * (-2.0 * pp / f0hat.scale**2) * dth
    Dp = wr - c.delta - k * pz / m
    Dm = wr + c.delta - k * pz / m
    # the resonant partner at omega > 0 is omega - |Delta|
    if resonant_only:
        res, off = (Dp, Dm) if c.delta >= 0 else (Dm, Dp)
        Gminus = (1.0 / res) * (1.0 if res is Dp else -1.0)
        Gplus = 1.0 / res
    else:
        Gminus = 1.0 / Dp - 1.0 / Dm
        Gplus = 1.0 / Dp + 1.0 / Dm
    four_pi2 = 4.0 * np.pi**2
    out = {"free": -(1.0 + c.darwin * k**2) * four_pi2 * np.sum(W * pz * dpz / (wr - k * pz / m))}
    mu = c.mu
    pref = 3.0 * np.pi**2 * mu**2 * w
    out["spin"] = 0.0 if mu == 0.0 else -pref / (2.0 * c.hbar) * np.sum(W * s * pp**2 * dth * Gminus)
    out["mixed"] = -pref * k / 4.0 * np.sum(W * s * pp**2 * X * Gplus)
    out["b0"] = pref * c.q * c.B0 / 4.0 * np.sum(W * s * pp * Y * Gminus)
    return {key: complex(v) for key, v in out.items()}


def dispersion_general(omega, k: float, f0hat: EquilibriumSpin,
                       params: NormalizedParams | SpinCoefficients, *, nu: float = DEFAULT_NU,
                       include_b0_coupling: bool = False, resonant_only: bool = False,
                       n_pperp: int = 12, n_pz: int = 48, n_theta: int = 12,
                       tol: float = 1e-9, max_doublings: int = 3) -> complex:
    """Residual omega^2 - omega * sum(T) of the general magnetized relation.

    Node counts are doubled until the residual changes by less than ``tol``
    (relative to max(1, |omega|^2)); otherwise :class:`QuadratureError`.
    The mu B0 channel is excluded by default, matching the closed-form
    relation.
    """
    if max_doublings < 1:
        raise ValueError("max_doublings must be at least 1")
    keys = ("free", "spin", "mixed") + (("b0",) if include_b0_coupling else ())

    def value(scale):
        t = dispersion_terms(omega, k, f0hat, params, nu=nu, resonant_only=resonant_only,
                             n_pperp=n_pperp * scale, n_pz=n_pz * scale, n_theta=n_theta * scale)
        return complex(omega) ** 2 - complex(omega) * sum(t[key] for key in keys)

    ref = max(1.0, abs(complex(omega)) ** 2)
    prev = value(1)
    for i in range(1, max_doublings + 1):
        cur = value(2**i)
        err = abs(cur - prev) / ref
        if err < tol:
            return cur
        prev = cur
    raise QuadratureError("dispersion_general quadrature did not converge", err)


def write_residual_grid(path: str | Path, func: Callable[[complex], complex],
                        re_range: tuple, im_range: tuple, n_re: int = 41, n_im: int = 41) -> Path:
    """Sample ``func`` on a complex-omega rectangle and write a CSV grid.

    Columns: re_omega, im_omega, re_D, im_D, abs_D.
    """
    path = Path(path)
    re = np.linspace(*re_range, n_re)
    im = np.linspace(*im_range, n_im)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["re_omega", "im_omega", "re_D", "im_D", "abs_D"])
        for x in re:
            for y in im:
                d = complex(func(complex(x, y)))
                wr.writerow([repr(float(x)), repr(float(y)), repr(d.real), repr(d.imag), repr(abs(d))])
    return path
