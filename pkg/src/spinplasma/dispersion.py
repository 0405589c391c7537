"""Closed-form dispersion functions, a complex root finder and k scans.

Normalized units as in :mod:`spinplasma.linresp`: omega in omega_p, k in
omega_p/c, momenta in m c, hbar = eps_q.  The thermal speed follows
exp(-p^2/m^2 v_t^2), so <p_z^2>/m^2 = v_t^2/2.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .equilibrium import Equilibrium1D, hermite_rule
from .params import NormalizedParams, PlasmaState, derive_params, C_LIGHT

KINDS = ("langmuir_exact", "darwin_langmuir", "bohm_gross_taylor", "spin_orbit_magnetized")
CONVENTIONS = ("reference", "derived")
DEFAULT_NU = 1e-6


class ResonanceError(ValueError):
    """Closed relation evaluated exactly on its spin resonance."""


class RootFindingError(RuntimeError):
    """Iteration failed; ``trace`` holds (omega, |D|) for every iterate."""

    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


def _reg(D, nu: float, power: int):
    """Symmetric regularization 0.5 [(D + i nu)^-p + (D - i nu)^-p].

    Keeps real-coefficient relations real on the real axis and moves roots
    only at O(nu^2).
    """
    if nu == 0.0:
        return D ** (-power)
    return 0.5 * ((D + 1j * nu) ** (-power) + (D - 1j * nu) ** (-power))


def D_langmuir_exact(omega, k: float, f0hat: Equilibrium1D | None, *, eps_q: float = 0.0,
                     nu: float = DEFAULT_NU, n_nodes: int = 96) -> complex:
    """1 - (1 + eps_q^2 k^2/8) int f0hat / (k p_z/m - omega)^2 dp_z.

    Equivalent to the (omega_p^2/k^2) int f0hat/(p_z/m - omega/k)^2 form
    and regular at k = 0.  ``f0hat=None`` is the cold limit.  Gauss-Hermite
    quadrature with ``n_nodes`` nodes; the integrand is regularized by
    ``nu`` as in :func:`_reg`.
    """
    w = complex(omega)
    lam = 1.0 + eps_q**2 * k**2 / 8.0
    if f0hat is None:
        return 1.0 - lam * _reg(-w, nu, 2)
    p, wts = hermite_rule(n_nodes, f0hat.scale)
    integral = f0hat.amplitude * np.sum(wts * _reg(k * p / f0hat.m - w, nu, 2))
    return complex(1.0 - lam * integral)


def D_darwin_langmuir(omega, k: float, pz2: float, eps_q: float = 0.0) -> complex:
    """omega^2 - 1 - k^2 (<p_z^2>/m^2 + v_Zitt^2/2), with v_Zitt = eps_q/2."""
    w = complex(omega)
    return w * w - 1.0 - k**2 * (pz2 + eps_q**2 / 8.0)


def D_bohm_gross_taylor(omega, k: float, pz2: float, eps_q: float = 0.0) -> complex:
    """omega^2 - (1 + eps_q^2 k^2/8)(1 + 3 k^2 <p_z^2>/omega^2).

    Leading Taylor form of :func:`D_langmuir_exact` for k v_t << omega.
    """
    w = complex(omega)
    return w * w - (1.0 + eps_q**2 * k**2 / 8.0) * (1.0 + 3.0 * k**2 * pz2 / (w * w))


def bohm_gross_taylor_root(k: float, pz2: float, eps_q: float = 0.0) -> float:
    """Positive root of :func:`D_bohm_gross_taylor` from the quadratic in omega^2."""
    A = 1.0 + eps_q**2 * k**2 / 8.0
    C = 3.0 * A * k**2 * pz2
    return math.sqrt(0.5 * (A + math.sqrt(A * A + 4.0 * C)))


def group_velocity(k: float, pz2: float, eps_q: float = 0.0) -> float:
    """d omega/dk of the Darwin-Langmuir branch; nonzero at v_t = 0 when eps_q > 0."""
    w = math.sqrt(1.0 + k**2 * (pz2 + eps_q**2 / 8.0))
    return k * (pz2 + eps_q**2 / 8.0) / w


def spin_orbit_coefficients(eps_q: float, v_t: float, g: float, convention: str = "reference"):
    """(A, B) multiplying the hbar^2 and hbar brackets of the closed relation.

    ``reference`` uses A = pi^2 eps_q^2/8 and B = pi^2 eps_q v_t^2/4 with + signs.
    ``derived`` re-derives them from the polarization current under the
    d^3p d^2s measure: A = -(g/2)^2 eps_q^2/32, B = -(g/2)^2 eps_q v_t^2/16.
    """
    if convention == "reference":
        return math.pi**2 * eps_q**2 / 8.0, math.pi**2 * eps_q * v_t**2 / 4.0
    if convention == "derived":
        h = (0.5 * g) ** 2
        return -h * eps_q**2 / 32.0, -h * eps_q * v_t**2 / 16.0
    raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")


def D_spin_orbit_magnetized(omega, k: float, params: NormalizedParams, v_t: float | None = None,
                            a: float | None = None, *, detuning=None,
                            convention: str = "reference") -> complex:
    """Closed magnetized relation LHS - RHS.

    omega^2 {1 + A [x^2/d^2 + 3 x^4/(2 d^4)] + B tanh(a) [1/d + x^2/(2 d^3)]}
    - (1 + eps_q^2 k^2/8)(1 + 3 x^2/(2 omega^2)),  x = k v_t, d = omega - Delta.

    Delta and tanh(a) are taken as magnitudes.  ``detuning`` supplies d
    directly, which avoids cancellation when d/Delta is below machine
    precision; ``omega`` is then only used where it is not differenced.
    """
    v_t = params.vt if v_t is None else v_t
    a = params.a if a is None else a
    w = complex(omega)
    dlt = abs(params.delta_omega_c)
    d = w - dlt if detuning is None else complex(detuning)
    if d == 0:
        raise ResonanceError("closed relation evaluated at omega = Delta")
    A, B = spin_orbit_coefficients(params.eps_q, v_t, params.g, convention)
    x2 = (k * v_t) ** 2
    t = math.tanh(abs(a))
    brace = 1.0 + A * (x2 / d**2 + 1.5 * x2**2 / d**4) + B * t * (1.0 / d + 0.5 * x2 / d**3)
    rhs = (1.0 + params.eps_q**2 * k**2 / 8.0) * (1.0 + 1.5 * x2 / (w * w))
    return w * w * brace - rhs


def normalized_with(p: NormalizedParams, *, eps_q=None, B0=None, a=None, g=None) -> NormalizedParams:
    """Copy of ``p`` with some knobs changed and the dependent groups rebuilt."""
    eps_q = p.eps_q if eps_q is None else eps_q
    B0 = p.B0 if B0 is None else B0
    a = p.a if a is None else a
    g = p.g if g is None else g
    return replace(p, eps_q=eps_q, B0=B0, omega_c=B0, delta_omega_c=(0.5 * g - 1.0) * B0,
                   mu=-g * eps_q / 4.0, a=a, g=g)


@dataclass(frozen=True)
class DispersionProblem:
    """A dispersion function D(omega) at fixed k.

    ``variable='detuning'`` (spin_orbit_magnetized only) makes the unknown
    d = omega - Delta instead of omega.
    """

    kind: str
    k: float
    params: NormalizedParams
    equilibrium: Equilibrium1D | None = None
    pz2: float | None = None
    convention: str = "reference"
    variable: str = "omega"
    nu: float = DEFAULT_NU
    n_nodes: int = 96
    allow_b0_zero: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        if self.variable not in ("omega", "detuning"):
            raise ValueError("variable must be 'omega' or 'detuning'")
        if self.variable == "detuning" and self.kind != "spin_orbit_magnetized":
            raise ValueError("detuning variable only applies to spin_orbit_magnetized")
        if self.kind == "spin_orbit_magnetized" and not (self.params.B0 > 0 or self.allow_b0_zero):
            raise ValueError("spin_orbit_magnetized needs B0 > 0 or allow_b0_zero=True")
        if not math.isfinite(self.k):
            raise ValueError("k must be finite")

    @property
    def moment(self) -> float:
        """<p_z^2>/m^2 used by the closed forms."""
        if self.pz2 is not None:
            return self.pz2
        return 0.5 * self.params.vt**2

    @property
    def delta(self) -> float:
        return abs(self.params.delta_omega_c)

    def omega_of(self, x) -> complex:
        return complex(x) + self.delta if self.variable == "detuning" else complex(x)

    def residual(self, x) -> complex:
        p = self.params
        if self.kind == "langmuir_exact":
            eq = self.equilibrium
            if eq is None and p.vt > 0:
                eq = Equilibrium1D(p.vt)
            return D_langmuir_exact(x, self.k, eq, eps_q=p.eps_q, nu=self.nu, n_nodes=self.n_nodes)
        if self.kind == "darwin_langmuir":
            return D_darwin_langmuir(x, self.k, self.moment, p.eps_q)
        if self.kind == "bohm_gross_taylor":
            return D_bohm_gross_taylor(x, self.k, self.moment, p.eps_q)
        if self.variable == "detuning":
            return D_spin_orbit_magnetized(self.omega_of(x), self.k, p, detuning=x,
                                           convention=self.convention)
        return D_spin_orbit_magnetized(x, self.k, p, convention=self.convention)

    def with_k(self, k: float) -> "DispersionProblem":
        return replace(self, k=k)

    @property
    def real_coefficients(self) -> bool:
        return True

    @classmethod
    def from_state(cls, kind: str, state: PlasmaState, k_cgs: float, **kw) -> "DispersionProblem":
        """Build from a CGS state and a wavenumber in 1/cm."""
        pp = derive_params(state)
        return cls(kind=kind, k=k_cgs * C_LIGHT / pp.omega_p, params=pp.normalized(), **kw)


@dataclass
class DispersionRoot:
    omega: complex
    residual: float
    iterations: int
    branch_id: int = 0
    continuation_parent: int | None = None
    detuning: complex | None = None
    trace: list = field(default_factory=list, repr=False)


def _muller_step(x0, x1, x2, f0, f1, f2):
    h1, h2 = x1 - x0, x2 - x1
    d1, d2 = (f1 - f0) / h1, (f2 - f1) / h2
    a = (d2 - d1) / (h2 + h1)
    b = a * h2 + d2
    disc = np.sqrt(complex(b * b - 4.0 * f2 * a))
    den = b + disc if abs(b + disc) >= abs(b - disc) else b - disc
    if den == 0 or not np.isfinite(den):
        raise ZeroDivisionError
    return -2.0 * f2 / den


def find_root(problem: DispersionProblem, omega_guess, *, tol: float = 1e-10,
              step_tol: float = 1e-12, max_iter: int = 100) -> DispersionRoot:
    """Muller iteration in the complex unknown with a secant fallback.

    Converged when |D| < tol * max(1, |omega|^2) and the last step is below
    ``step_tol`` relative to the unknown.  For the detuning variable the
    step is measured relative to |d|.  Raises :class:`RootFindingError`
    with the iterate trace otherwise.
    """
    x2 = complex(omega_guess)
    f = problem.residual
    f2 = f(x2)
    if not np.isfinite(f2):
        raise RootFindingError(f"residual not finite at guess {x2}", [(x2, abs(f2))])
    h = 1e-3 * abs(x2) if x2 != 0 else 1e-3
    x0, x1 = x2 - h, x2 + h
    f0, f1 = f(x0), f(x1)
    trace = [(x2, abs(f2))]
    for it in range(1, max_iter + 1):
        try:
            step = _muller_step(x0, x1, x2, f0, f1, f2)
        except ZeroDivisionError:
            den = f2 - f1
            if den == 0:
                raise RootFindingError("flat residual; iteration stalled", trace)
            step = -f2 * (x2 - x1) / den
        x0, x1, f0, f1 = x1, x2, f1, f2
        x2 = x2 + step
        f2 = f(x2)
        trace.append((x2, abs(f2)))
        if not np.isfinite(f2):
            raise RootFindingError(f"residual became non-finite at {x2}", trace)
        w = problem.omega_of(x2)
        ok_res = abs(f2) < tol * max(1.0, abs(w) ** 2)
        ok_step = abs(step) <= step_tol * max(abs(x2), 1e-300)
        if ok_res and (ok_step or f2 == 0):
            if problem.real_coefficients and x2.imag < 0:
                x2 = x2.conjugate()
            det = x2 if problem.variable == "detuning" else None
            return DispersionRoot(problem.omega_of(x2), float(abs(f2)), it, detuning=det, trace=trace)
    raise RootFindingError(f"no convergence in {max_iter} iterations", trace)


@dataclass
class BranchTable:
    """Rows of a k scan; failed points carry NaN and a flag."""

    k: np.ndarray
    omega: np.ndarray
    residual: np.ndarray
    branch_id: np.ndarray
    flags: list
    detuning: np.ndarray | None = None

    COLUMNS = ("k", "re_omega", "im_omega", "residual", "branch_id")

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.COLUMNS)
            for k, w, r, b in zip(self.k, self.omega, self.residual, self.branch_id):
                wr.writerow([repr(float(k)), repr(float(w.real)), repr(float(w.imag)),
                             repr(float(r)), int(b)])
        return path


def scan_k(problem: DispersionProblem, k_grid: Sequence[float], omega_guess,
           *, split_tol: float = 1e-6, **root_kw) -> BranchTable:
    """Follow one branch across ``k_grid`` by continuation.

    Each root seeds the next guess (linear extrapolation once two roots
    exist).  The plain previous root is also tried; if the two guesses land
    on different roots the branch is flagged as split and the root nearer
    the extrapolation is kept under a new branch id.  A failed solve is
    flagged and the scan continues from the last good root.
    """
    ks = np.asarray(k_grid, dtype=float)
    d = np.diff(ks)
    if len(ks) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("k_grid must be strictly monotone")
    n = len(ks)
    omega = np.full(n, np.nan + 0j, dtype=complex)
    res = np.full(n, np.nan)
    bid = np.zeros(n, dtype=int)
    flags: list = [""] * n
    det = np.full(n, np.nan + 0j, dtype=complex) if problem.variable == "detuning" else None
    branch = 0
    good: list[tuple[float, complex]] = []
    guess = complex(omega_guess)
    for i, k in enumerate(ks):
        prob = problem.with_k(float(k))
        x_prev = guess
        if len(good) >= 2:
            (ka, xa), (kb, xb) = good[-2], good[-1]
            guess = xb + (xb - xa) * (k - kb) / (kb - ka)
        try:
            r = find_root(prob, guess, **root_kw)
        except RootFindingError:
            flags[i] = "lost"
            bid[i] = branch
            continue
        x = r.detuning if r.detuning is not None else r.omega
        if len(good) >= 2:
            try:
                r2 = find_root(prob, x_prev, **root_kw)
                x2 = r2.detuning if r2.detuning is not None else r2.omega
                if abs(x2 - x) > split_tol * max(abs(x), 1e-300):
                    branch += 1
                    flags[i] = "split"
            except RootFindingError:
                pass
        omega[i], res[i], bid[i] = r.omega, r.residual, branch
        if det is not None:
            det[i] = r.detuning
        good.append((float(k), complex(x)))
        guess = complex(x)
    return BranchTable(ks, omega, res, bid, flags, det)


LIMITS = ("hbar", "B0", "a", "g")


def apply_limits(params: NormalizedParams, k: float, order: Sequence[str], omega_guess=1.0, *,
                 convention: str = "reference", n_steps: int = 6, factor: float = 1e-2) -> DispersionRoot:
    """Take the limits hbar->0, B0->0, a->0, g->2 in ``order`` by continuation.

    Each limit shrinks its knob geometrically over ``n_steps`` steps and then
    sets it exactly; the root of the magnetized relation is re-solved at every
    step from the previous root.
    """
    p = params
    x = complex(omega_guess)
    root = None
    for name in order:
        if name not in LIMITS:
            raise ValueError(f"unknown limit {name!r}")
        start = {"hbar": p.eps_q, "B0": p.B0, "a": p.a, "g": p.g - 2.0}[name]
        for j in range(n_steps + 1):
            val = 0.0 if j == n_steps else start * factor**j
            kw = {"hbar": {"eps_q": val}, "B0": {"B0": val}, "a": {"a": val},
                  "g": {"g": 2.0 + val}}[name]
            p = normalized_with(p, **kw)
            prob = DispersionProblem("spin_orbit_magnetized", k, p, convention=convention,
                                     allow_b0_zero=True)
            root = find_root(prob, x)
            x = root.omega
    return root


def classical_root(k: float, v_t: float) -> float:
    """Root of omega^2 = 1 + 3 k^2 v_t^2/(2 omega^2)."""
    return bohm_gross_taylor_root(k, 0.5 * v_t**2, 0.0)


def resonant_guess(params: NormalizedParams, convention: str = "reference") -> float:
    """Leading-order spin-branch detuning B tanh(a) Delta^2 / (1 - Delta^2).

    Balances the B/d term against the right side with omega ~ Delta << 1.
    """
    _, B = spin_orbit_coefficients(params.eps_q, params.vt, params.g, convention)
    d = abs(params.delta_omega_c)
    return B * math.tanh(abs(params.a)) * d * d / (1.0 - d * d)


def resonance_estimate(params: NormalizedParams) -> float:
    """Order estimate (hbar Delta/m c^2) tanh(a) for (omega - Delta)/Delta."""
    return params.eps_q * abs(params.delta_omega_c) * math.tanh(abs(params.a))
