"""Nonlinear reduced Vlasov-Poisson solver in (z, p_z) with the Darwin term.

Normalized units as in :mod:`spinplasma.moments` (q = -1, m = c = 1).  The
semi-discrete system is Fourier collocation in both z and p_z (periodic in
p_z on [-p_max, p_max), where f is negligible), advanced with classical RK4.
The field is refreshed from Poisson's equation at every stage.

    df/dt = -v(p) df/dz - q (E - lambda d2E/dz2) df/dp,   lambda = hbar^2/8

where v(p) = p (or p (1 - p^2/2) with the optional mass-velocity term).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import least_squares

from .equilibrium import Equilibrium1D
from .moments import Snapshot
from .phasespace import DistributionField, PhaseGrid, make_grid

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Solver blow-up, CFL violation or non-finite state."""


@dataclass(frozen=True)
class SolverConfig:
    """Run configuration (all quantities normalized).

    ``L`` is the box length in c/omega_p, ``vt`` is v_t/c, ``dt`` and
    ``t_end`` are in 1/omega_p.  The Darwin coefficient is
    ``(hbar_scale * eps_q)**2 / 8`` when ``quantum_toggle`` is on.
    """

    n_z: int = 64
    n_pz: int = 512
    L: float = 2 * np.pi
    vt: float = 1.0
    dt: float = 0.05
    t_end: float = 10.0
    quantum_toggle: bool = True
    eps_q: float = 0.0
    hbar_scale: float = 1.0
    mode: int = 1
    amplitude: float = 1e-5
    background: float = 1.0
    cutoff: float = 6.0
    mass_velocity: bool = False
    snapshot_stride: int = 0
    mode_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if not self.vt > 0:
            raise ValueError("vt must be positive")
        if self.n_z < 2 or self.n_pz < 4:
            raise ValueError("grid too small")
        if self.mode < 1 or self.mode > self.n_z // 2 - 1:
            raise ValueError("mode number not resolved by the grid")
        if self.cfl >= 1.0:
            raise NumericalError(f"CFL number {self.cfl:.3f} >= 1; reduce dt")

    @classmethod
    def for_wavenumber(cls, k_vt_over_wp: float, vt: float, **kw) -> "SolverConfig":
        """Box sized so that the chosen mode has k v_t / omega_p = ``k_vt_over_wp``."""
        mode = kw.get("mode", 1)
        k = k_vt_over_wp / vt
        return cls(L=2 * np.pi * mode / k, vt=vt, **kw)

    @property
    def k(self) -> float:
        return 2 * np.pi * self.mode / self.L

    @property
    def darwin(self) -> float:
        if not self.quantum_toggle:
            return 0.0
        return (self.hbar_scale * self.eps_q) ** 2 / 8.0

    @property
    def pz_max(self) -> float:
        return self.cutoff * self.vt

    @property
    def cfl(self) -> float:
        """Spectral advection rate times dt over the RK4 limit 2 sqrt(2).

        Both directions count: v_max k_max in z and E_max k_p,max in p_z,
        with E_max the seeded field amplitude (Darwin force included).
        """
        vmax = self.pz_max * (1.0 - 0.5 * self.pz_max**2 if self.mass_velocity else 1.0)
        kmax = np.pi * self.n_z / self.L
        kpmax = np.pi * self.n_pz / (2.0 * self.pz_max)
        emax = self.background * self.amplitude / self.k * (1.0 + self.darwin * self.k**2)
        return self.dt * (vmax * kmax + emax * kpmax) / (2.0 * math.sqrt(2.0))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def grid(self) -> PhaseGrid:
        return make_grid(self.L, self.n_z, self.vt, self.n_pz, cutoff=self.cutoff)


@dataclass
class FieldState:
    """Longitudinal field E_z(z) and the static uniform background B0."""

    E: np.ndarray
    B0: float = 0.0

    def total_charge_consistent(self, L: float, tol: float = 1e-12) -> bool:
        return abs(np.mean(self.E)) <= tol * max(1.0, np.max(np.abs(self.E)))


# ------------------------------------------------------------ operators
class _Spectral:
    """Cached wavenumbers for one grid."""

    def __init__(self, grid: PhaseGrid):
        self.grid = grid
        kz = grid.kz.copy()
        kp = grid.kp.copy()
        if grid.n_z % 2 == 0:
            kz[grid.n_z // 2] = 0.0
        if grid.n_pz % 2 == 0:
            kp[grid.n_pz // 2] = 0.0
        self.ikz = 1j * kz
        self.ikp = 1j * kp
        self.kz = kz

    def dz(self, u):
        if u.ndim == 1:
            return np.fft.ifft(self.ikz * np.fft.fft(u)).real
        return np.fft.ifft(self.ikz[:, None] * np.fft.fft(u, axis=0), axis=0).real

    def dp(self, u):
        return np.fft.ifft(self.ikp[None, :] * np.fft.fft(u, axis=1), axis=1).real

    def kinetic_weight(self, v):
        """K(p) with dK/dp = v under the discrete p derivative.

        The spectral antiderivative of the sawtooth v(p).  It equals p^2/2 up
        to a constant wherever f is resolved, and together with the Nyquist
        projection of the right-hand side it makes the discrete energy an
        exact invariant of the semi-discrete system.
        """
        vh = np.fft.fft(v)
        Kh = np.zeros_like(vh)
        nz = self.ikp != 0
        Kh[nz] = vh[nz] / self.ikp[nz]
        K = np.fft.ifft(Kh).real
        mid = len(v) // 2
        p = self.grid.pz
        # fix the constant so K matches p^2/2 at the centre of the grid
        return K - K[mid] + 0.5 * p[mid] ** 2


_CACHE: dict = {}


def _ops(grid: PhaseGrid) -> _Spectral:
    key = (grid.L, grid.n_z, grid.pz_max, grid.n_pz)
    ops = _CACHE.get(key)
    if ops is None:
        ops = _CACHE[key] = _Spectral(grid)
    return ops


def poisson_1d(rho_T, L: float, *, four_pi: float = 1.0, tol: float = 1e-10) -> np.ndarray:
    """Solve dE/dz = four_pi * rho_T on a periodic domain with zero-mean E.

    ``four_pi`` is 1 in the normalized (rationalized) units and 4 pi in CGS.
    """
    rho = np.asarray(rho_T, dtype=float)
    scale = max(np.max(np.abs(rho)), 1e-300)
    if abs(rho.mean()) > tol * max(scale, 1.0):
        raise ValueError(f"net charge {rho.mean():.3e} is not zero")
    n = rho.size
    k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
    rk = np.fft.fft(rho)
    Ek = np.zeros_like(rk)
    nz = k != 0
    if n % 2 == 0:
        nz[n // 2] = False
    Ek[nz] = four_pi * rk[nz] / (1j * k[nz])
    return np.fft.ifft(Ek).real


def charge_density(f00: np.ndarray, grid: PhaseGrid, background: float, q: float = -1.0):
    return q * f00.sum(axis=1) * grid.dpz + background


def _velocity(grid: PhaseGrid, mass_velocity: bool):
    p = grid.pz
    return p * (1.0 - 0.5 * p**2) if mass_velocity else p


def _drop_p_nyquist(u):
    """Remove the p_z Nyquist mode (even n_pz only).

    The discrete p derivative annihilates this mode, so keeping f free of it
    makes the discrete energy an exact invariant; it never touches the
    density or current of a resolved f.
    """
    n = u.shape[-1]
    if n % 2:
        return u
    sign = (-1.0) ** np.arange(n)
    return u - sign * np.mean(u * sign, axis=-1, keepdims=True)


def rhs_1d(f: DistributionField, field: FieldState, *, darwin: float = 0.0,
           q: float = -1.0, mass_velocity: bool = False) -> np.ndarray:
    """Time derivative of the (0,0) harmonic for the reduced 1D system.

    With ``darwin == 0`` the Darwin term is skipped entirely so the classical
    right-hand side is evaluated with exactly the same operations.
    """
    g = f.grid
    if g.has_pperp or g.has_theta:
        raise ValueError("rhs_1d needs a reduced (z, p_z) grid")
    if field.E.shape != (g.n_z,):
        raise ValueError("field/grid mismatch")
    return _rhs(f.f00, field.E, _ops(g), _velocity(g, mass_velocity), darwin, q)


def _rhs(f, E, ops: _Spectral, v, darwin, q):
    force = E
    if darwin:
        force = E - darwin * ops.dz(ops.dz(E))
    return _drop_p_nyquist(-v[None, :] * ops.dz(f) - q * force[:, None] * ops.dp(f))


def _field_from(f, grid, background, q):
    return poisson_1d(charge_density(f, grid, background, q), grid.L)


def initial_state(config: SolverConfig, equilibrium: Equilibrium1D | None = None):
    """Maxwellian times (1 + A cos(k z)), scaled to the background density."""
    grid = config.grid()
    eq = equilibrium or Equilibrium1D(config.vt)
    z = grid.z
    prof = eq(grid.pz)
    # discrete renormalization so the grid density matches the ions exactly
    prof = prof / (prof.sum() * grid.dpz)
    f = config.background * prof[None, :] * (1.0 + config.amplitude * np.cos(config.k * z))[:, None]
    f = _drop_p_nyquist(f)
    fd = DistributionField(grid, {(0, 0): f}, 0.0)
    return fd, FieldState(_field_from(f, grid, config.background, -1.0))


def _rk4(f, dt, ops, grid, v, darwin, background, q):
    def stage(u):
        E = _field_from(u, grid, background, q)
        return _rhs(u, E, ops, v, darwin, q)
    k1 = stage(f)
    k2 = stage(f + 0.5 * dt * k1)
    k3 = stage(f + 0.5 * dt * k2)
    k4 = stage(f + dt * k3)
    return f + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def advance(f: DistributionField, field: FieldState, config: SolverConfig):
    """One RK4 step; returns the new ``(DistributionField, FieldState)``."""
    if config.cfl >= 1.0:
        raise NumericalError("CFL violation")
    g = f.grid
    new = _rk4(f.f00, config.dt, _ops(g), g, _velocity(g, config.mass_velocity),
               config.darwin, config.background, -1.0)
    if not np.all(np.isfinite(new)):
        raise NumericalError(f"non-finite distribution at t={f.time + config.dt:.6g}")
    E = _field_from(new, g, config.background, -1.0)
    return DistributionField(g, {(0, 0): new}, f.time + config.dt), FieldState(E, field.B0)


@dataclass
class RunResult:
    config: SolverConfig
    times: np.ndarray
    mode_series: np.ndarray        # complex E_k(t) for the seeded mode
    mass: np.ndarray
    energy: np.ndarray             # W_total(t) from the reduced closed form
    snapshots: list = field(default_factory=list)
    final: DistributionField | None = None
    final_field: FieldState | None = None


def mode_amplitude(E: np.ndarray, k: float, L: float) -> complex:
    """Projection of E(z) onto exp(i k z): (1/N) sum E exp(-i k z)."""
    n = E.size
    z = L * np.arange(n) / n
    return complex(np.mean(E * np.exp(-1j * k * z)))


def reduced_energy(f, E, grid, darwin, mass_velocity: bool = False):
    """W_total for the reduced system: field + kinetic + Darwin interaction.

    The kinetic part uses the discrete-consistent weight
    :meth:`_Spectral.kinetic_weight`, so only time stepping and roundoff
    change it.
    """
    ops = _ops(grid)
    K = ops.kinetic_weight(_velocity(grid, mass_velocity))
    ke = np.sum(f * K[None, :]) * grid.dpz * grid.dz
    fe = 0.5 * np.sum(E**2) * grid.dz
    de = 0.5 * darwin * np.sum(ops.dz(E) ** 2) * grid.dz if darwin else 0.0
    return ke + fe + de


def simulate(config: SolverConfig, *, equilibrium: Equilibrium1D | None = None,
             callback: Callable | None = None) -> RunResult:
    """Run from the seeded initial state to ``t_end``.

    Mode amplitudes are recorded every ``mode_stride`` steps and full
    snapshots every ``snapshot_stride`` steps (0 disables snapshots).
    """
    f, fs = initial_state(config, equilibrium)
    g = f.grid
    peak = np.max(np.abs(f.f00))
    edge = max(np.max(np.abs(f.f00[:, 0])), np.max(np.abs(f.f00[:, -1])))
    if edge > 1e-14 * peak:
        warnings.warn(f"distribution not negligible at |p_z|max (edge/peak={edge / peak:.2e})")
    ops = _ops(g)
    v = _velocity(g, config.mass_velocity)
    darwin = config.darwin
    u = f.f00.copy()
    E = fs.E
    times, modes, mass, energy, snaps = [], [], [], [], []

    def record(step, t):
        if step % config.mode_stride == 0:
            times.append(t)
            modes.append(mode_amplitude(E, config.k, config.L))
            mass.append(u.sum() * g.dpz * g.dz)
            energy.append(reduced_energy(u, E, g, darwin, config.mass_velocity))
        if config.snapshot_stride and step % config.snapshot_stride == 0:
            snaps.append(Snapshot(DistributionField(g, {(0, 0): u.copy()}, t), E.copy()))

    record(0, 0.0)
    for step in range(1, config.n_steps + 1):
        try:
            u = _rk4(u, config.dt, ops, g, v, darwin, config.background, -1.0)
            if not np.all(np.isfinite(u)):
                raise NumericalError(f"non-finite distribution at step {step}")
            E = _field_from(u, g, config.background, -1.0)
        except ValueError as exc:
            raise NumericalError(f"solver blew up at step {step}: {exc}") from exc
        t = step * config.dt
        record(step, t)
        if callback is not None:
            callback(step, t, u, E)
    return RunResult(config, np.array(times), np.array(modes), np.array(mass),
                     np.array(energy), snaps,
                     DistributionField(g, {(0, 0): u}, config.n_steps * config.dt),
                     FieldState(E))


# ---------------------------------------------------------- mode fitting
@dataclass
class ModeFit:
    omega: float
    growth_rate: float
    uncertainty: float
    growth_uncertainty: float
    amplitude: float
    relative_residual: float
    low_snr: bool


def _design(t, omega, gamma):
    env = np.exp(gamma * t)
    return np.stack([env * np.exp(-1j * omega * t), env * np.exp(1j * omega * t)], axis=1)


def measure_mode(times, signal, *, k: float | None = None, L: float | None = None,
                 omega_guess: float | None = None, t_min: float = 0.0,
                 snr_threshold: float = 0.2) -> ModeFit:
    """Fit A+ exp((-i w + g) t) + A- exp((i w + g) t) to a mode signal.

    ``signal`` is either the complex projected series E_k(t) or a (n_t, n_z)
    array of E(z, t) that is projected on exp(i k z) first.  The amplitudes
    enter linearly and are eliminated; (w, g) are fitted by least squares and
    their uncertainties come from the Gauss-Newton covariance.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(signal)
    if y.ndim == 2:
        if k is None or L is None:
            raise ValueError("k and L are required to project E(z, t)")
        y = np.array([mode_amplitude(row, k, L) for row in y])
    y = y.astype(complex)
    sel = t >= t_min
    t, y = t[sel], y[sel]
    t0 = t[0]
    t = t - t0
    if omega_guess is None:
        nfft = 16 * len(t)
        spec = np.abs(np.fft.fft(y - y.mean(), n=nfft))
        freqs = 2 * np.pi * np.fft.fftfreq(nfft, d=t[1] - t[0])
        omega_guess = abs(freqs[np.argmax(spec)])
    if t[-1] * omega_guess / (2 * np.pi) < 10:
        warnings.warn("fewer than 10 oscillation periods in the fit window")

    def resid(x):
        A = _design(t, x[0], x[1])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        r = A @ coef - y
        return np.concatenate([r.real, r.imag])

    sol = least_squares(resid, x0=[omega_guess, 0.0], x_scale=[max(omega_guess, 1e-12), 1e-3],
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
    r = sol.fun
    dof = max(r.size - 6, 1)
    s2 = float(r @ r) / dof
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac) * s2
        err = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        err = np.array([np.inf, np.inf])
    A = _design(t, sol.x[0], sol.x[1])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rel = math.sqrt(float(r @ r) / max(float(np.sum(np.abs(y) ** 2)), 1e-300))
    amp = float(np.sum(np.abs(coef)))
    low = rel > snr_threshold
    if low:
        warnings.warn(f"mode fit has low signal-to-noise (relative residual {rel:.2e})")
    return ModeFit(float(abs(sol.x[0])), float(sol.x[1]), float(err[0]), float(err[1]),
                   amp, rel, low)
