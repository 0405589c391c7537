"""Physical constants, derived plasma parameters and regime classification.

All inputs are Gaussian CGS.  The kinetic solver and the linear-response
code work in normalized units (time in 1/omega_p, speed in c, momentum in
m c, length in c/omega_p); :meth:`PlasmaParams.normalized` produces the
dimensionless groups they need.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

# CODATA 2018, Gaussian CGS.  Fixed here so every run is bit-reproducible.
CONSTANTS = {
    "e": (4.803204712570263e-10, "statC", "elementary charge"),
    "m_e": (9.1093837015e-28, "g", "electron mass"),
    "c": (2.99792458e10, "cm/s", "speed of light"),
    "hbar": (1.054571817e-27, "erg s", "reduced Planck constant"),
    "k_B": (1.380649e-16, "erg/K", "Boltzmann constant"),
    "eV": (1.602176634e-12, "erg", "electron volt"),
    "g_QED": (2.00231930436256, "1", "QED-corrected electron g-factor"),
}

E_CHARGE = CONSTANTS["e"][0]
M_E = CONSTANTS["m_e"][0]
C_LIGHT = CONSTANTS["c"][0]
HBAR = CONSTANTS["hbar"][0]
K_B = CONSTANTS["k_B"][0]
EV = CONSTANTS["eV"][0]
G_QED = CONSTANTS["g_QED"][0]
Q_ELECTRON = -E_CHARGE


def write_constants_table(path: str | Path) -> Path:
    """Write the constants table as a whitespace-separated text file.

    Columns are ``name value unit description``; lines starting with ``#``
    are comments.
    """
    path = Path(path)
    lines = ["# spinplasma physical constants (Gaussian CGS, CODATA 2018)",
             "# name value unit description"]
    for name, (value, unit, desc) in CONSTANTS.items():
        lines.append(f"{name} {value!r} {unit.replace(' ', '*')} {desc}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_constants_table(path: str | Path) -> dict[str, float]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        name, value = line.split()[:2]
        out[name] = float(value)
    return out


def _check_finite(name: str, value: float, minimum: float, strict: bool) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    if strict and value <= minimum:
        raise ValueError(f"{name} must be > {minimum}, got {value!r}")
    if not strict and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value!r}")


@dataclass(frozen=True)
class PlasmaState:
    """Electron plasma state: density [cm^-3], temperature [K], field [G]."""

    n_e: float
    T: float
    B0: float = 0.0
    g: float = G_QED

    def __post_init__(self):
        _check_finite("n_e", self.n_e, 0.0, strict=True)
        _check_finite("T", self.T, 0.0, strict=False)
        _check_finite("B0", self.B0, 0.0, strict=False)
        _check_finite("g", self.g, 0.0, strict=True)


@dataclass(frozen=True)
class NormalizedParams:
    """Dimensionless groups used by the solvers.

    ``vt`` is v_t/c, ``eps_q`` is hbar*omega_p/(m c^2) (i.e. hbar in units of
    m c^2/omega_p), ``omega_c`` and ``delta_omega_c`` are in units of
    omega_p, ``mu`` is the signed magnetic moment in units of
    e*(c/omega_p) (so that mu*B is in m c^2 when B is in m c omega_p/e),
    ``B0`` is omega_c/omega_p and ``a`` is |mu| B0/(k_B T).
    """

    vt: float
    eps_q: float
    omega_c: float
    delta_omega_c: float
    mu: float
    B0: float
    a: float
    g: float


@dataclass(frozen=True)
class PlasmaParams:
    """Derived frequencies, speeds and scales for one :class:`PlasmaState`.

    Frequencies are magnitudes; the electron sign lives in ``mu`` (negative)
    and in ``Q_ELECTRON``.
    """

    state: PlasmaState
    omega_p: float
    omega_c: float
    omega_cg: float
    delta_omega_c: float
    v_t: float
    mu: float
    v_zitt: float
    x_osc: float
    p_F: float
    T_F: float
    eps_q: float
    eps_B: float

    @property
    def spin_argument(self) -> float:
        """|mu| B0 / (k_B T); infinite at T = 0 with B0 > 0."""
        num = abs(self.mu) * self.state.B0
        if self.state.T == 0.0:
            return 0.0 if num == 0.0 else math.inf
        return num / (K_B * self.state.T)

    def normalized(self) -> NormalizedParams:
        wp = self.omega_p
        return NormalizedParams(
            vt=self.v_t / C_LIGHT,
            eps_q=self.eps_q,
            omega_c=self.omega_c / wp,
            delta_omega_c=self.delta_omega_c / wp,
            mu=-self.state.g * self.eps_q / 4.0,
            B0=self.omega_c / wp,
            a=self.spin_argument,
            g=self.state.g,
        )

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "state"}
        d["state"] = asdict(self.state)
        d["spin_argument"] = self.spin_argument
        return d


def plasma_frequency(n_e):
    return np.sqrt(4.0 * np.pi * n_e * E_CHARGE**2 / M_E)


def fermi_momentum(n_e):
    return HBAR * np.cbrt(3.0 * np.pi**2 * n_e)


def derive_params(state: PlasmaState) -> PlasmaParams:
    """Evaluate the CGS formulas for every derived quantity.

    The thermal speed follows the equilibrium exponent exp(-p^2/m^2 v_t^2),
    so v_t = sqrt(2 k_B T / m) and <p_z^2> = m^2 v_t^2 / 2.
    """
    n, T, B0, g = state.n_e, state.T, state.B0, state.g
    omega_p = float(plasma_frequency(n))
    omega_c = E_CHARGE * B0 / (M_E * C_LIGHT)
    omega_cg = 0.5 * g * omega_c
    mu = g * HBAR * Q_ELECTRON / (4.0 * M_E * C_LIGHT)
    p_F = float(fermi_momentum(n))
    mc2 = M_E * C_LIGHT**2
    return PlasmaParams(
        state=state,
        omega_p=omega_p,
        omega_c=omega_c,
        omega_cg=omega_cg,
        delta_omega_c=omega_cg - omega_c,
        v_t=math.sqrt(2.0 * K_B * T / M_E),
        mu=mu,
        v_zitt=HBAR * omega_p / (2.0 * M_E * C_LIGHT),
        x_osc=HBAR / (2.0 * M_E * C_LIGHT),
        p_F=p_F,
        T_F=p_F**2 / (2.0 * M_E * K_B),
        eps_q=HBAR * omega_p / mc2,
        eps_B=abs(mu) * B0 / mc2,
    )


def zitt_fermi_ratio(n_e):
    """m v_Zitt / p_F = omega_p / (2 c (3 pi^2 n_e)^(1/3)); scales as n^(1/6)."""
    n_e = np.asarray(n_e, dtype=float)
    if np.any(~(n_e > 0)):
        raise ValueError("n_e must be positive")
    out = plasma_frequency(n_e) / (2.0 * C_LIGHT * np.cbrt(3.0 * np.pi**2 * n_e))
    return out if out.ndim else float(out)


def wigner_seitz_radius(n_e):
    return np.cbrt(3.0 / (4.0 * np.pi * n_e))


@dataclass(frozen=True)
class RegimeReport:
    gamma: float
    gamma_F: float
    hbar_wp_over_kT: float
    TF_over_T: float
    zitt_fermi_ratio: float
    labels: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def enc(x):
            if isinstance(x, float) and math.isinf(x):
                return "inf"
            return x
        d = {k: enc(v) for k, v in asdict(self).items() if k != "labels"}
        d["labels"] = dict(self.labels)
        return json.dumps(d, indent=2, sort_keys=True)


def classify_regime(state: PlasmaState) -> RegimeReport:
    """Coupling parameters and regime flags for a plasma state.

    Gamma uses the nearest-neighbour energy e^2/a with the Wigner-Seitz
    radius a; Gamma_F replaces k_B T by k_B (T + T_F).  At T = 0 the
    temperature-based ratios are reported as ``inf``.
    """
    p = derive_params(state)
    n, T = state.n_e, state.T
    E_p = E_CHARGE**2 / float(wigner_seitz_radius(n))
    kT = K_B * T
    gamma = E_p / kT if T > 0 else math.inf
    gamma_F = E_p / (K_B * (T + p.T_F))
    hw = HBAR * p.omega_p / kT if T > 0 else math.inf
    tf = p.T_F / T if T > 0 else math.inf
    quantum = hw >= 1.0 or tf >= 1.0
    labels = {
        "strongly_coupled": gamma_F >= 1.0,
        "quantum": quantum,
        "classical": not quantum,
        "mean_field_valid": gamma_F < 1.0,
    }
    return RegimeReport(gamma, gamma_F, hw, tf, float(zitt_fermi_ratio(n)), labels)


def crossover_density(lo: float = 1e20, hi: float = 1e40, rtol: float = 1e-12) -> float:
    """Density where m v_Zitt / p_F = 1, by bisection in log density."""
    f = lambda logn: zitt_fermi_ratio(10.0**logn) - 1.0
    a, b = math.log10(lo), math.log10(hi)
    if f(a) * f(b) > 0:
        raise ValueError("crossover not bracketed")
    while b - a > rtol:
        mid = 0.5 * (a + b)
        if f(a) * f(mid) <= 0:
            b = mid
        else:
            a = mid
    return 10.0 ** (0.5 * (a + b))


def regime_contours(n_grid):
    """Temperatures of the regime-map contours at each density.

    Returns a dict of arrays: ``T_gamma1`` (Gamma = 1), ``T_gammaF1``
    (Gamma_F = 1, NaN where the strong-coupling dome has closed),
    ``T_hbarwp1`` (hbar omega_p = k_B T) and ``T_F``.
    """
    n = np.asarray(n_grid, dtype=float)
    E_p = E_CHARGE**2 / wigner_seitz_radius(n)
    T_F = fermi_momentum(n) ** 2 / (2.0 * M_E * K_B)
    T_g1 = E_p / K_B
    T_gF1 = T_g1 - T_F
    T_gF1 = np.where(T_gF1 > 0, T_gF1, np.nan)
    return {
        "n_e": n,
        "T_gamma1": T_g1,
        "T_gammaF1": T_gF1,
        "T_hbarwp1": HBAR * plasma_frequency(n) / K_B,
        "T_F": T_F,
    }


def temperature_from(value: float, unit: str) -> float:
    """Convert a temperature given in ``K`` or ``eV`` to kelvin."""
    if unit == "K":
        return float(value)
    if unit == "eV":
        return float(value) * EV / K_B
    if unit == "keV":
        return float(value) * 1e3 * EV / K_B
    raise ValueError(f"unknown temperature unit {unit!r}")
