"""Run configuration: INI files with explicit units, presets and a resolved echo.

A config is an INI file (read with :mod:`configparser`) whose physical
values carry a unit after the number::

    [run]
    schema_version = 1

    [plasma]
    n_e = 1e23 cm^-3
    T = 1e5 K
    B0 = 0 G

Counts, flags and names take no unit; dimensionless numbers accept an
optional ``1``.  Unknown sections or keys are rejected, and every error
names the offending line.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .params import EV, G_QED, K_B, PlasmaState, derive_params, PlasmaParams, C_LIGHT

SCHEMA_VERSION = 1
ECHO_NAME = "resolved_config.ini"


class ConfigError(ValueError):
    """Parse or validation failure; the message carries line context."""


# unit -> factor to the canonical unit of each dimension
_UNITS = {
    "density": {"cm^-3": 1.0, "m^-3": 1e-6},
    "temperature": {"K": 1.0, "eV": EV / K_B, "keV": 1e3 * EV / K_B},
    "field": {"G": 1.0, "T": 1e4},
    # resolved against omega_p later
    "time": {"1/wp": None, "s": None},
    "wavenumber": {"wp/c": None, "wp/vt": None, "cm^-1": None},
}
_CANONICAL = {"density": "cm^-3", "temperature": "K", "field": "G", "time": "1/wp",
              "wavenumber": "wp/c"}


@dataclass(frozen=True)
class Key:
    kind: str                 # quantity | number | int | bool | str | choice
    default: object = None
    dim: str | None = None
    choices: tuple = ()
    required: bool = False


SCHEMA: dict[str, dict[str, Key]] = {
    "run": {
        "schema_version": Key("int", required=True),
        "preset": Key("str"),
    },
    "plasma": {
        "n_e": Key("quantity", dim="density", required=True),
        "T": Key("quantity", dim="temperature", required=True),
        "B0": Key("quantity", (0.0, "G"), dim="field"),
        "g": Key("number", G_QED),
    },
    "equilibrium": {
        "kind": Key("choice", "maxwellian", choices=("maxwellian", "spin_maxwellian")),
    },
    "solver": {
        "n_z": Key("int", 64),
        "n_pz": Key("int", 512),
        "k": Key("quantity", (0.1, "wp/vt"), dim="wavenumber"),
        "mode": Key("int", 1),
        "dt": Key("quantity", (0.05, "1/wp"), dim="time"),
        "t_end": Key("quantity", (100.0, "1/wp"), dim="time"),
        "amplitude": Key("number", 1e-5),
        "quantum_toggle": Key("bool", True),
        "hbar_scale": Key("number", 1.0),
        "eps_q": Key("number", None),
        "cutoff": Key("number", 6.0),
        "snapshot_stride": Key("int", 0),
        "mode_stride": Key("int", 1),
    },
    "dispersion": {
        "kind": Key("choice", "langmuir_exact", choices=(
            "langmuir_exact", "darwin_langmuir", "bohm_gross_taylor", "spin_orbit_magnetized")),
        "k_min": Key("quantity", (0.01, "wp/vt"), dim="wavenumber"),
        "k_max": Key("quantity", (0.1, "wp/vt"), dim="wavenumber"),
        "n_k": Key("int", 10),
        "omega_guess": Key("number", 1.0),
        "convention": Key("choice", "reference", choices=("reference", "derived")),
        "variable": Key("choice", "omega", choices=("omega", "detuning")),
        "n_nodes": Key("int", 96),
    },
    "regime": {
        "n_min": Key("quantity", (1e18, "cm^-3"), dim="density"),
        "n_max": Key("quantity", (1e34, "cm^-3"), dim="density"),
        "n_points": Key("int", 161),
    },
    "output": {
        "dir": Key("str", "out"),
    },
}


PRESETS = {
    "classical-langmuir": """
[run]
schema_version = 1
[plasma]
n_e = 1e23 cm^-3
T = 1e5 K
B0 = 0 G
[solver]
n_z = 64
n_pz = 512
k = 0.1 wp/vt
dt = 0.05 1/wp
t_end = 100 1/wp
amplitude = 1e-5
quantum_toggle = false
[dispersion]
kind = langmuir_exact
k_min = 0.01 wp/vt
k_max = 0.1 wp/vt
n_k = 10
""",
    "darwin-highdensity": """
[run]
schema_version = 1
[plasma]
n_e = 2e29 cm^-3
T = 1e5 K
B0 = 0 G
[solver]
n_z = 64
n_pz = 512
k = 0.1 wp/vt
dt = 0.05 1/wp
t_end = 100 1/wp
amplitude = 1e-5
quantum_toggle = true
[dispersion]
kind = langmuir_exact
k_min = 0.01 wp/vt
k_max = 0.1 wp/vt
n_k = 10
""",
    "spin-orbit-magnetized": """
[run]
schema_version = 1
[plasma]
n_e = 1e20 cm^-3
T = 1e9 K
B0 = 1e7 G
[equilibrium]
kind = spin_maxwellian
[dispersion]
kind = spin_orbit_magnetized
variable = detuning
convention = reference
k_min = 1e-30 wp/c
k_max = 1e-26 wp/c
n_k = 9
omega_guess = 1.0
""",
    "regime-map": """
[run]
schema_version = 1
[plasma]
n_e = 1e23 cm^-3
T = 1e5 K
[regime]
n_min = 1e18 cm^-3
n_max = 1e34 cm^-3
n_points = 161
""",
}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    cur = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1].strip()
            if key is None and cur == section:
                return i
            continue
        if cur == section and key is not None and "=" in line:
            if line.split("=", 1)[0].strip() == key:
                return i
    return None


def _where(source: str, text: str, section: str, key: str | None = None) -> str:
    ln = _line_of(text, section, key)
    loc = f"{source}:{ln}" if ln else source
    what = f"[{section}]" + (f" {key}" if key else "")
    return f"{loc}: {what}"


def _parse_value(spec: Key, raw: str, ctx: str):
    raw = raw.strip()
    if spec.kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{ctx}: expected true/false, got {raw!r}")
    if spec.kind == "str":
        if not raw:
            raise ConfigError(f"{ctx}: empty value")
        return raw
    if spec.kind == "choice":
        if raw not in spec.choices:
            raise ConfigError(f"{ctx}: {raw!r} is not one of {', '.join(spec.choices)}")
        return raw
    parts = raw.split(None, 1)
    if not parts:
        raise ConfigError(f"{ctx}: empty value")
    try:
        num = int(parts[0]) if spec.kind == "int" else float(parts[0])
    except ValueError:
        raise ConfigError(f"{ctx}: cannot read number from {parts[0]!r}") from None
    unit = parts[1].strip() if len(parts) > 1 else None
    if spec.kind == "int":
        if unit:
            raise ConfigError(f"{ctx}: counts take no unit (got {unit!r})")
        return num
    if not math.isfinite(num):
        raise ConfigError(f"{ctx}: value must be finite")
    if spec.kind == "number":
        if unit not in (None, "1"):
            raise ConfigError(f"{ctx}: dimensionless value takes no unit (got {unit!r})")
        return num
    allowed = _UNITS[spec.dim]
    if unit is None:
        raise ConfigError(f"{ctx}: missing unit; expected one of {', '.join(allowed)}")
    if unit not in allowed:
        raise ConfigError(f"{ctx}: unknown unit {unit!r}; expected one of {', '.join(allowed)}")
    factor = allowed[unit]
    if factor is None:
        return (num, unit)
    return (num * factor, _CANONICAL[spec.dim])


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse and validate config text; returns {section: {key: value}}.

    Quantities are ``(value, unit)`` pairs.  A ``preset`` in ``[run]`` is
    loaded first and the file's entries override it.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   comment_prefixes=("#", ";"), default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    raw: dict[str, dict[str, str]] = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{_where(source, text, sec)}: unknown section")
        for key, val in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{_where(source, text, sec, key)}: unknown key")
            raw.setdefault(sec, {})[key] = val
    base: dict = {}
    preset = raw.get("run", {}).get("preset")
    if preset is not None:
        if preset.strip() not in PRESETS:
            raise ConfigError(f"{_where(source, text, 'run', 'preset')}: unknown preset "
                              f"{preset.strip()!r}; available: {', '.join(PRESETS)}")
        base = parse_text(PRESETS[preset.strip()], source=f"<preset {preset.strip()}>")
    out: dict = {sec: dict(vals) for sec, vals in base.items()}
    for sec, vals in raw.items():
        for key, val in vals.items():
            ctx = _where(source, text, sec, key)
            out.setdefault(sec, {})[key] = _parse_value(SCHEMA[sec][key], val, ctx)
    if "run" not in out or "schema_version" not in out["run"]:
        raise ConfigError(f"{source}: [run] schema_version is required")
    if out["run"]["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"{_where(source, text, 'run', 'schema_version')}: unsupported schema_version "
                          f"{out['run']['schema_version']} (expected {SCHEMA_VERSION})")
    for sec, keys in SCHEMA.items():
        if sec not in out:
            continue
        for key, spec in keys.items():
            if spec.required and key not in out[sec]:
                raise ConfigError(f"{_where(source, text, sec)}: missing required key {key!r}")
    return out


@dataclass
class RunConfig:
    """Validated configuration with helpers that produce solver inputs."""

    sections: dict
    source: str = "<config>"
    plasma: PlasmaState | None = field(default=None, init=False)

    def __post_init__(self):
        if "plasma" in self.sections:
            p = self.sections["plasma"]
            try:
                self.plasma = PlasmaState(n_e=p["n_e"][0], T=p["T"][0],
                                          B0=self.value("plasma", "B0")[0],
                                          g=self.value("plasma", "g"))
            except ValueError as exc:
                raise ConfigError(f"{self.source}: [plasma] {exc}") from None

    @property
    def schema_version(self) -> int:
        return self.sections["run"]["schema_version"]

    def value(self, section: str, key: str):
        sec = self.sections.get(section, {})
        if key in sec:
            return sec[key]
        return SCHEMA[section][key].default

    def has_section(self, section: str) -> bool:
        return section in self.sections

    def params(self) -> PlasmaParams:
        if self.plasma is None:
            raise ConfigError(f"{self.source}: a [plasma] section is required")
        return derive_params(self.plasma)

    def time(self, section: str, key: str) -> float:
        v, unit = self.value(section, key)
        return v if unit == "1/wp" else v * self.params().omega_p

    def wavenumber(self, section: str, key: str) -> float:
        """Wavenumber in omega_p/c."""
        v, unit = self.value(section, key)
        pp = self.params()
        if unit == "wp/c":
            return v
        if unit == "wp/vt":
            return v * C_LIGHT / pp.v_t if pp.v_t > 0 else math.inf
        return v * C_LIGHT / pp.omega_p

    def eps_q(self) -> float:
        override = self.value("solver", "eps_q")
        return self.params().eps_q if override is None else override

    def solver_config(self):
        """:class:`~spinplasma.kinetic.SolverConfig` for this run."""
        from .kinetic import SolverConfig
        pp = self.params()
        if pp.v_t == 0:
            raise ConfigError(f"{self.source}: the kinetic solver needs T > 0")
        vt = pp.v_t / C_LIGHT
        k = self.wavenumber("solver", "k")
        mode = self.value("solver", "mode")
        hs = self.value("solver", "hbar_scale")
        toggle = self.value("solver", "quantum_toggle") and hs != 0.0
        try:
            return self._solver_config(SolverConfig, vt, k, mode, hs, toggle)
        except ValueError as exc:
            raise ConfigError(f"{self.source}: [solver] {exc}") from None

    def _solver_config(self, SolverConfig, vt, k, mode, hs, toggle):
        return SolverConfig(
            n_z=self.value("solver", "n_z"), n_pz=self.value("solver", "n_pz"),
            L=2.0 * math.pi * mode / k, vt=vt, dt=self.time("solver", "dt"),
            t_end=self.time("solver", "t_end"), quantum_toggle=toggle, eps_q=self.eps_q(),
            hbar_scale=hs, mode=mode, amplitude=self.value("solver", "amplitude"),
            cutoff=self.value("solver", "cutoff"),
            snapshot_stride=self.value("solver", "snapshot_stride"),
            mode_stride=self.value("solver", "mode_stride"))

    def echo(self) -> str:
        """Resolved config text in canonical units; reloading it is lossless."""
        lines = [f"# resolved from {self.source}"]
        for sec, keys in SCHEMA.items():
            if sec not in self.sections:
                continue
            lines.append(f"[{sec}]")
            for key, spec in keys.items():
                if key == "preset":
                    continue
                v = self.value(sec, key)
                if v is None:
                    continue
                if spec.kind == "quantity":
                    num, unit = v
                    if spec.dim == "time":
                        num, unit = self.time(sec, key), "1/wp"
                    elif spec.dim == "wavenumber":
                        num, unit = self.wavenumber(sec, key), "wp/c"
                    lines.append(f"{key} = {num!r} {unit}")
                elif spec.kind == "bool":
                    lines.append(f"{key} = {'true' if v else 'false'}")
                elif spec.kind in ("number",):
                    lines.append(f"{key} = {float(v)!r}")
                else:
                    lines.append(f"{key} = {v}")
            lines.append("")
        return "\n".join(lines)

    def write_echo(self, directory: str | Path) -> Path:
        path = Path(directory) / ECHO_NAME
        path.write_text(self.echo())
        return path


def load_text(text: str, source: str = "<config>") -> RunConfig:
    return RunConfig(parse_text(text, source), source)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    return load_text(path.read_text(), str(path))


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return load_text(PRESETS[name], f"<preset {name}>")
