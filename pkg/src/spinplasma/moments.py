"""Moment closures and conservation audits.

Everything here is in the normalized, rationalized unit system used by the
kinetic solver: time in 1/omega_p, speed in c, momentum in m c, length in
c/omega_p, charge in e, fields in m c omega_p / e.  In these units Gauss's law
reads dE_z/dz = rho_T, Ampere's law (1D, longitudinal) dE_z/dt = -J_T and the
field energy density is (E^2 + B^2)/2.  Electrons have q = -1, m = c = 1 and
the magnetic moment is ``mu = -g eps_q / 4``.

Angular integrals over (phi_p, theta_s, phi_s) are done by quadrature on a
reconstruction of f from its harmonics; a field with no theta_s axis is
treated as spin-isotropic, f(s) = f / 4 pi.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .equilibrium import sphere_rule
from .phasespace import DistributionField


class GridMismatchError(ValueError):
    pass


def spectral_dz(u: np.ndarray, L: float, axis: int = -1) -> np.ndarray:
    """Periodic spectral derivative along ``axis`` (real input, real output)."""
    n = u.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=L / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * u.ndim
    shape[axis] = n
    return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(u, axis=axis), axis=axis).real


def time_derivative(series: np.ndarray, dt: float):
    """Centered finite-difference d/dt along axis 0.

    Fourth order (5-point stencil) when at least five samples are present,
    otherwise second order.  Returns ``(values, index)`` where ``index`` are
    the sample indices at which the derivative is defined.
    """
    n = series.shape[0]
    if n >= 5:
        idx = np.arange(2, n - 2)
        d = (series[idx - 2] - 8.0 * series[idx - 1] + 8.0 * series[idx + 1]
             - series[idx + 2]) / (12.0 * dt)
    elif n >= 3:
        idx = np.arange(1, n - 1)
        d = (series[idx + 1] - series[idx - 1]) / (2.0 * dt)
    else:
        raise ValueError("need at least 3 snapshots for centered differencing")
    return d, idx


def _ddt_full(series: np.ndarray, dt: float) -> np.ndarray:
    """Derivative at every sample: centered inside, one-sided 2nd order at the ends."""
    n = series.shape[0]
    if n < 3:
        raise ValueError("need at least 3 samples")
    out = np.empty_like(series)
    out[1:-1] = (series[2:] - series[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * dt)
    out[-1] = (3.0 * series[-1] - 4.0 * series[-2] + series[-3]) / (2.0 * dt)
    return out


# --------------------------------------------------------------- expansion
@dataclass
class _Expanded:
    f: np.ndarray          # f over (z, pz, pp, th, php, phs)
    w: np.ndarray          # quadrature weight over the same axes (no z)
    p: tuple               # (px, py, pz) broadcastable
    s: tuple               # (sx, sy, sz) broadcastable


def _expand(f: DistributionField) -> _Expanded:
    g = f.grid
    nmax = max(max(abs(a), abs(b)) for a, b in g.harmonics)
    nphi = 2 * (nmax + 4)

    pz = g.pz[:, None, None, None, None]
    wz = np.full(g.n_pz, g.dpz)[:, None, None, None, None]
    if g.has_pperp:
        pp = np.asarray(g.pperp_nodes)[None, :, None, None, None]
        wpp = np.asarray(g.pperp_weights)[None, :, None, None, None]
        php = (2 * np.pi * np.arange(nphi) / nphi)[None, None, None, :, None]
        wphp = 2 * np.pi / nphi
    else:
        pp = np.zeros((1, 1, 1, 1, 1))
        wpp = np.ones((1, 1, 1, 1, 1))
        php = np.zeros((1, 1, 1, 1, 1))
        wphp = 1.0
    if g.has_theta:
        th = np.asarray(g.theta_nodes)
        wth = np.asarray(g.theta_weights)
        iso = 1.0
    else:
        th, wth, _, _ = sphere_rule(4)
        iso = 1.0 / (4.0 * np.pi)
    th = th[None, None, :, None, None]
    wth = wth[None, None, :, None, None]
    phs = (2 * np.pi * np.arange(nphi) / nphi)[None, None, None, None, :]
    wphs = 2 * np.pi / nphi

    total = 0.0
    for (n, m), v in f.values.items():
        vv = v
        if not g.has_pperp:
            vv = vv[:, :, None]
        if not g.has_theta:
            vv = vv[..., None]
        phase = np.exp(1j * (n * php + m * phs))
        total = total + vv[..., None, None] * phase[None]
    fr = np.real(total) * iso

    w = wz * wpp * wth * wphp * wphs
    p = (pp * np.cos(php), pp * np.sin(php), pz)
    st = np.sin(th)
    s = (st * np.cos(phs), st * np.sin(phs), np.cos(th))
    return _Expanded(fr, w, p, s)


def _integrate(ex: _Expanded, integrand) -> np.ndarray:
    """Integral over (p, s) at each z of f * integrand."""
    return np.sum(ex.f * (integrand * ex.w)[None], axis=(1, 2, 3, 4, 5))


def _field3(x, n_z):
    """Promote a field to shape (3, n_z); scalars/1D arrays are the z component."""
    if x is None:
        return np.zeros((3, n_z))
    x = np.asarray(x, dtype=float)
    if x.shape == (n_z,):
        out = np.zeros((3, n_z))
        out[2] = x
        return out
    if x.shape == (3,):
        return np.repeat(x[:, None], n_z, axis=1)
    if x.shape == (3, n_z):
        return x
    raise GridMismatchError(f"field shape {x.shape} incompatible with n_z={n_z}")


@dataclass
class MomentSet:
    rho_F: np.ndarray
    J_F: np.ndarray
    M: np.ndarray
    P: np.ndarray
    rho_T: np.ndarray
    J_T: np.ndarray
    W: np.ndarray
    K: np.ndarray


def compute_moments(f: DistributionField, E, B=None, *, mu: float, q: float = -1.0,
                    m: float = 1.0, c: float = 1.0, background: float = 0.0,
                    darwin: float = 0.0, dPdt=None) -> MomentSet:
    """Free/total charge and current, magnetization, polarization, W and K.

    ``E`` and ``B`` are (3, n_z) arrays, uniform 3-vectors, or (n_z,) arrays
    taken as the z component.  ``background`` is an immobile charge density
    added to rho_F (the neutralizing ions).  ``darwin`` is the coefficient
    lambda = hbar^2/(8 m^2 c^2) of the Darwin force; it adds the interaction
    energy (lambda/2) (dE_z/dz)^2 to W and lambda (dE_z/dz) J_z to K_z.
    """
    g = f.grid
    Ev = _field3(E, g.n_z)
    Bv = _field3(B, g.n_z)
    ex = _expand(f)
    px, py, pz = ex.p
    sx, sy, sz = ex.s
    zshape = (slice(None),) + (None,) * 5

    def zf(a):
        return a[zshape]

    Ex, Ey, Ez = (zf(Ev[i]) for i in range(3))
    Bx, By, Bz = (zf(Bv[i]) for i in range(3))
    ones = np.ones_like(ex.w)

    # integrands carrying z dependence through the fields are assembled on the
    # full grid; this is cheap for the reduced grids in use
    def integ(expr):
        return np.sum(ex.f * expr * ex.w[None], axis=(1, 2, 3, 4, 5))

    dens = _integrate(ex, ones)
    k3 = 1.5 * mu / (m * c)
    # E x s
    Exs = (Ey * sz - Ez * sy, Ez * sx - Ex * sz, Ex * sy - Ey * sx)
    vel = (px / m + k3 * Exs[0], py / m + k3 * Exs[1], pz / m + k3 * Exs[2])
    J_F = np.array([q * integ(v) for v in vel])
    rho_F = q * dens + background
    M = np.array([3.0 * mu * _integrate(ex, s) for s in ex.s])
    sxp = (sy * pz - sz * py, sz * px - sx * pz, sx * py - sy * px)
    P = np.array([-3.0 * mu / (2.0 * m * c) * _integrate(ex, a) for a in sxp])

    L = g.L
    dPz = spectral_dz(P[2], L)
    rho_T = rho_F + dPz
    curlM = np.array([-spectral_dz(M[1], L), spectral_dz(M[0], L), np.zeros(g.n_z)])
    dPdt = np.zeros_like(P) if dPdt is None else np.asarray(dPdt)
    J_T = J_F + curlM + dPdt

    p2 = px**2 + py**2 + pz**2
    sB = sx * Bx + sy * By + sz * Bz
    W = 0.5 * (np.sum(Ev**2, axis=0) + np.sum(Bv**2, axis=0)) + integ(p2 / (2 * m) - 3.0 * mu * sB)
    dEz = spectral_dz(Ev[2], L)
    if darwin:
        W = W + 0.5 * darwin * dEz**2

    # p x E
    pxE = (py * Ez - pz * Ey, pz * Ex - px * Ez, px * Ey - py * Ex)
    bracket = p2 / (2 * m) + 3.0 * mu * ((Bx - pxE[0] / (2 * m * c)) * sx
                                        + (By - pxE[1] / (2 * m * c)) * sy
                                        + (Bz - pxE[2] / (2 * m * c)) * sz)
    BmM = Bv - M
    poynting = np.cross(Ev.T, BmM.T).T
    K = poynting + np.array([integ(bracket * v) for v in vel])
    if darwin:
        K[2] = K[2] + darwin * dEz * J_F[2]
    return MomentSet(rho_F, J_F, M, P, rho_T, J_T, W, K)


# ------------------------------------------------------------------ audits
@dataclass
class Snapshot:
    f: DistributionField
    E: np.ndarray
    B: np.ndarray | None = None

    @property
    def time(self) -> float:
        return self.f.time


def _uniform_dt(snaps: Sequence[Snapshot]) -> float:
    t = np.array([s.time for s in snaps])
    dt = np.diff(t)
    if len(dt) == 0 or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("snapshots must be equally spaced in time")
    return float(dt[0])


def _check_grids(snaps):
    g0 = snaps[0].f.grid
    for s in snaps[1:]:
        if not s.f.grid.compatible(g0):
            raise GridMismatchError("snapshots live on different grids")
    return g0


@dataclass
class ContinuityReport:
    times: np.ndarray
    residual: np.ndarray   # (n_t, n_z)
    max_norm: float


def continuity_residual(snapshots: Sequence[Snapshot], *, mu: float = 0.0,
                        q: float = -1.0) -> ContinuityReport:
    """r = d(rho_F)/dt + d(J_Fz)/dz over a uniformly spaced snapshot series.

    The time derivative is a centered 5-point (4th order) stencil when five or
    more snapshots are available, 3-point otherwise; the space derivative is
    the same spectral operator the solver uses.
    """
    if len(snapshots) < 3:
        raise ValueError("continuity_residual needs at least 3 snapshots")
    g = _check_grids(snapshots)
    dt = _uniform_dt(snapshots)
    rho, jz = [], []
    reduced = not (g.has_pperp or g.has_theta)
    for s in snapshots:
        if reduced:
            # (z, p_z) grids: rho_F and J_Fz are plain p_z quadratures
            f00 = s.f.f00
            rho.append(q * f00.sum(axis=1) * g.dpz)
            jz.append(q * (f00 * g.pz[None, :]).sum(axis=1) * g.dpz)
            continue
        ms = compute_moments(s.f, s.E, s.B, mu=mu, q=q)
        rho.append(ms.rho_F)
        jz.append(ms.J_F[2])
    rho = np.array(rho)
    jz = np.array(jz)
    drho, idx = time_derivative(rho, dt)
    r = drho + spectral_dz(jz[idx], g.L, axis=-1)
    t = np.array([s.time for s in snapshots])[idx]
    return ContinuityReport(t, r, float(np.max(np.abs(r))))


@dataclass
class EnergyAudit:
    times: np.ndarray
    W_total: np.ndarray
    drift: float
    drift_series: np.ndarray
    flux_imbalance: np.ndarray   # max_z |dW/dt + dK_z/dz| per time (NaN where undefined)
    max_flux_imbalance: float


def energy_audit(snapshots: Sequence[Snapshot], *, mu: float = 0.0, q: float = -1.0,
                 darwin: float = 0.0, background: float = 0.0,
                 periodic: bool = True, boundary_flux=None) -> EnergyAudit:
    """Total energy history, relative drift and pointwise flux balance."""
    if not periodic and boundary_flux is None:
        raise ValueError("non-periodic audit requires boundary flux data")
    g = _check_grids(snapshots)
    t = np.array([s.time for s in snapshots])
    W, Kz = [], []
    for s in snapshots:
        ms = compute_moments(s.f, s.E, s.B, mu=mu, q=q, darwin=darwin, background=background)
        W.append(ms.W)
        Kz.append(ms.K[2])
    W = np.array(W)
    Kz = np.array(Kz)
    W_total = W.sum(axis=1) * g.dz
    if not periodic:
        bf = np.asarray(boundary_flux, dtype=float)
        # cumulative energy that has left through the boundaries
        W_total = W_total + np.concatenate([[0.0], np.cumsum(0.5 * (bf[1:] + bf[:-1]) * np.diff(t))])
    drift_series = np.abs(W_total - W_total[0]) / abs(W_total[0])
    imbalance = np.full(len(t), np.nan)
    if len(t) >= 3:
        dt = _uniform_dt(snapshots)
        dW, idx = time_derivative(W, dt)
        bal = dW + spectral_dz(Kz[idx], g.L, axis=-1)
        imbalance[idx] = np.max(np.abs(bal), axis=1)
    finite = imbalance[np.isfinite(imbalance)]
    return EnergyAudit(t, W_total, float(drift_series.max()), drift_series, imbalance,
                       float(finite.max()) if finite.size else float("nan"))


AUDIT_COLUMNS = ("t", "W_total", "drift", "max_continuity_residual", "max_flux_imbalance")


def write_audit_csv(path: str | Path, audit: EnergyAudit,
                    continuity: ContinuityReport | None = None) -> Path:
    cont = {}
    if continuity is not None:
        for tt, row in zip(continuity.times, continuity.residual):
            cont[float(tt)] = float(np.max(np.abs(row)))
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AUDIT_COLUMNS)
        for i, tt in enumerate(audit.times):
            c = cont.get(float(tt), float("nan"))
            w.writerow([repr(float(tt)), repr(float(audit.W_total[i])),
                        repr(float(audit.drift_series[i])), repr(c),
                        repr(float(audit.flux_imbalance[i]))])
    return path
