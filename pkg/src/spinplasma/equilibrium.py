"""Equilibrium distributions: the 1D Maxwellian and the spin Maxwellian.

Both are written in terms of a momentum variable ``p`` with mass ``m`` and
thermal speed ``v_t`` in the convention exp(-p^2 / m^2 v_t^2).  The spin
equilibrium lives on d^3p d^2s with d^2s = sin(theta_s) dtheta_s dphi_s and
is always renormalized numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss


class QuadratureError(RuntimeError):
    """Raised when a quadrature fails to converge; carries the estimate."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


def hermite_rule(n: int, scale: float):
    """Nodes/weights for the integral of g(p) exp(-p^2/scale^2) over the real line."""
    x, w = hermgauss(n)
    return scale * x, scale * w


def sphere_rule(n_theta: int, n_phi: int = 1):
    """Gauss-Legendre in cos(theta) times a uniform trapezoid in phi.

    Returns ``theta, w_theta, phi, w_phi``.  ``w_theta`` already carries the
    sin(theta) Jacobian.
    """
    x, w = leggauss(n_theta)
    theta = np.arccos(x[::-1])
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    return theta, w[::-1], phi, np.full(n_phi, 2.0 * np.pi / n_phi)


@dataclass(frozen=True)
class Equilibrium1D:
    """Normalized 1D Maxwellian exp(-p_z^2/m^2 v_t^2) / (sqrt(pi) m v_t)."""

    v_t: float
    m: float = 1.0

    def __post_init__(self):
        if not self.v_t > 0:
            raise ValueError("v_t must be positive")

    @property
    def amplitude(self) -> float:
        return 1.0 / (math.sqrt(math.pi) * self.m * self.v_t)

    @property
    def scale(self) -> float:
        return self.m * self.v_t

    def __call__(self, p_z):
        p_z = np.asarray(p_z, dtype=float)
        return self.amplitude * np.exp(-(p_z / self.scale) ** 2)

    def dp(self, p_z):
        p_z = np.asarray(p_z)
        return -2.0 * p_z / self.scale**2 * self(p_z)


@dataclass(frozen=True)
class EquilibriumSpin:
    """Magnetized spin Maxwellian.

    f(p, theta_s) = exp(-p^2/m^2 v_t^2) [e^a (1+cos) + e^-a (1-cos)] / norm.

    The bracket is evaluated as 2 cosh(a) (1 + tanh(a) cos theta_s) so that
    large ``a`` (including ``inf``) stays finite; the 2 cosh(a) is absorbed
    into the numerically determined norm.  Depends on neither phi_s nor phi_p.
    """

    v_t: float
    a: float = 0.0
    m: float = 1.0
    n_p: int = 24
    n_theta: int = 16
    norm: float = field(init=False)

    def __post_init__(self):
        if not self.v_t > 0:
            raise ValueError("v_t must be positive")
        if math.isnan(self.a):
            raise ValueError("a must not be NaN")
        object.__setattr__(self, "norm", self._integrate_shape(self.n_p, self.n_theta))

    @property
    def scale(self) -> float:
        return self.m * self.v_t

    @property
    def polarization(self) -> float:
        return math.tanh(self.a)

    def _integrate_shape(self, n_p: int, n_theta: int) -> float:
        _, wp = hermite_rule(n_p, self.scale)
        theta, wt, _, wphi = sphere_rule(n_theta)
        spin = np.sum(wt * (1.0 + self.polarization * np.cos(theta))) * wphi.sum()
        return float(wp.sum() ** 3 * spin)

    def spin_factor(self, theta_s):
        return 1.0 + self.polarization * np.cos(theta_s)

    def momentum_factor(self, p_perp, p_z):
        return np.exp(-(np.asarray(p_perp) ** 2 + np.asarray(p_z) ** 2) / self.scale**2)

    def __call__(self, p_perp, p_z, theta_s):
        theta_s = np.asarray(theta_s, dtype=float)
        if np.any((theta_s < 0) | (theta_s > np.pi)):
            raise ValueError("theta_s must lie in [0, pi]")
        return self.momentum_factor(p_perp, p_z) * self.spin_factor(theta_s) / self.norm

    # analytic derivatives used by the linear-response solution
    def d_pz(self, p_perp, p_z, theta_s):
        return -2.0 * np.asarray(p_z) / self.scale**2 * self(p_perp, p_z, theta_s)

    def d_pperp(self, p_perp, p_z, theta_s):
        return -2.0 * np.asarray(p_perp) / self.scale**2 * self(p_perp, p_z, theta_s)

    def d_theta(self, p_perp, p_z, theta_s):
        return (-self.polarization * np.sin(theta_s)
                * self.momentum_factor(p_perp, p_z) / self.norm)


class EquilibriumMoments(NamedTuple):
    norm: float
    pz2: float
    sz: float


def normalize_and_moments(eq, n_p: int = 32, n_theta: int = 16,
                          tol: float = 1e-12) -> EquilibriumMoments:
    """Normalization, <p_z^2> and the factor-3 spin polarization 3<s_z>.

    Each quantity is computed at ``n`` and ``2n`` nodes; a change above
    ``tol`` (relative, absolute for the polarization) raises
    :class:`QuadratureError`.
    """
    def evaluate(n_p, n_theta):
        if isinstance(eq, Equilibrium1D):
            pz, wz = hermite_rule(n_p, eq.scale)
            # weight exp(-p^2/s^2) is built into the rule
            mass = eq.amplitude * wz.sum()
            pz2 = eq.amplitude * np.sum(wz * pz**2) / mass
            return float(wz.sum()), pz2, 0.0
        p, wp = hermite_rule(n_p, eq.scale)
        theta, wt, _, wphi = sphere_rule(n_theta)
        mom = wp.sum() ** 2  # p_x, p_y factors
        spin = eq.spin_factor(theta)
        mass = mom * wp.sum() * np.sum(wt * spin) * wphi.sum() / eq.norm
        pz2 = mom * np.sum(wp * p**2) * np.sum(wt * spin) * wphi.sum() / eq.norm
        sz = 3.0 * mom * wp.sum() * np.sum(wt * spin * np.cos(theta)) * wphi.sum() / eq.norm
        return eq.norm * mass, pz2 / mass, sz / mass

    a = evaluate(n_p, n_theta)
    b = evaluate(2 * n_p, 2 * n_theta)
    # norm and <p_z^2> relative; the polarization is bounded by 1, so absolute
    scales = (abs(b[0]), abs(b[1]), 1.0)
    err = max(abs(x - y) / max(s, 1e-300) for x, y, s in zip(a, b, scales))
    if err > tol:
        raise QuadratureError("equilibrium moments did not converge", err)
    return EquilibriumMoments(*b)


def maxwellian_1d(v_t: float, m: float = 1.0) -> Equilibrium1D:
    return Equilibrium1D(v_t, m)


def spin_maxwellian(v_t: float, a: float, m: float = 1.0, *, mu_sign: float = -1.0) -> EquilibriumSpin:
    """Spin Maxwellian with the signed argument mu B0/k_B T.

    ``a`` is the magnitude |mu| B0 / k_B T; ``mu_sign`` is -1 for electrons,
    so the populated spin direction is anti-parallel to B0.
    """
    return EquilibriumSpin(v_t, a=math.copysign(abs(a), mu_sign) if a else 0.0, m=m)
