"""Reduced extended-phase-space grids and the scalar distribution field.

The full state f(x, p, s) lives on an eight-dimensional space.  Here it is
reduced to one periodic coordinate ``z``, the parallel momentum ``p_z``,
optionally the perpendicular momentum ``p_perp`` and the spin polar angle
``theta_s``, with the two azimuths (phi_p, phi_s) carried as a finite set of
Fourier harmonics:

    f = sum_{(n, n')} g_{n n'}(z, p_z, p_perp, theta_s) exp(i (n phi_p + n' phi_s))

Without a ``p_perp`` axis the field is understood to carry delta(p_x) delta(p_y)
and only n = 0 harmonics are allowed; without a ``theta_s`` axis the field is
already integrated over the spin sphere and only n' = 0 is allowed.
"""
from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .equilibrium import sphere_rule

Harmonic = tuple[int, int]
DEFAULT_HARMONICS: tuple[Harmonic, ...] = ((0, 0), (1, -1), (-1, 1))

_MAGIC = b"SPPF"
_VERSION = 1


@dataclass(frozen=True)
class PhaseGrid:
    """Tensor-product grid; every axis carries its own quadrature weights.

    ``pz`` uses midpoint nodes of the periodic interval [-pz_max, pz_max) so
    the node set is symmetric and spectral differentiation applies.
    ``pperp_weights`` include the p_perp Jacobian and ``theta_weights``
    include sin(theta_s).
    """

    L: float
    n_z: int
    pz_max: float
    n_pz: int
    pperp_nodes: np.ndarray | None = None
    pperp_weights: np.ndarray | None = None
    theta_nodes: np.ndarray | None = None
    theta_weights: np.ndarray | None = None
    harmonics: tuple[Harmonic, ...] = ((0, 0),)

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.n_z < 1 or self.n_pz < 2:
            raise ValueError("grid sizes too small")
        if not self.pz_max > 0:
            raise ValueError("pz_max must be positive")
        harm = tuple((int(a), int(b)) for a, b in self.harmonics)
        if (0, 0) not in harm:
            raise ValueError("harmonic set must contain (0, 0)")
        if self.pperp_nodes is None and any(n != 0 for n, _ in harm):
            raise ValueError("phi_p harmonics need a p_perp axis")
        if self.theta_nodes is None and any(m != 0 for _, m in harm):
            raise ValueError("phi_s harmonics need a theta_s axis")
        object.__setattr__(self, "harmonics", harm)

    # ------------------------------------------------------------------ axes
    @property
    def z(self) -> np.ndarray:
        return self.L * np.arange(self.n_z) / self.n_z

    @property
    def dz(self) -> float:
        return self.L / self.n_z

    @property
    def dpz(self) -> float:
        return 2.0 * self.pz_max / self.n_pz

    @property
    def pz(self) -> np.ndarray:
        return -self.pz_max + (np.arange(self.n_pz) + 0.5) * self.dpz

    @property
    def kz(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_z, d=self.dz)

    @property
    def kp(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_pz, d=self.dpz)

    @property
    def has_pperp(self) -> bool:
        return self.pperp_nodes is not None

    @property
    def has_theta(self) -> bool:
        return self.theta_nodes is not None

    @property
    def shape(self) -> tuple[int, ...]:
        s = [self.n_z, self.n_pz]
        if self.has_pperp:
            s.append(len(self.pperp_nodes))
        if self.has_theta:
            s.append(len(self.theta_nodes))
        return tuple(s)

    @property
    def phi_p_factor(self) -> float:
        return 2.0 * np.pi if self.has_pperp else 1.0

    @property
    def phi_s_factor(self) -> float:
        return 2.0 * np.pi if self.has_theta else 1.0

    def momentum_weights(self) -> np.ndarray:
        """Weights over (p_z[, p_perp][, theta_s]) excluding the azimuths."""
        w = np.full(self.n_pz, self.dpz)
        if self.has_pperp:
            w = w[:, None] * np.asarray(self.pperp_weights)[None, :]
        if self.has_theta:
            w = w[..., None] * np.asarray(self.theta_weights)
        return w

    def velocity_weights(self) -> np.ndarray:
        """Weights for d^3p over (p_z[, p_perp]) -- used by the (z, s) marginal."""
        w = np.full(self.n_pz, self.dpz)
        if self.has_pperp:
            w = w[:, None] * np.asarray(self.pperp_weights)[None, :]
        return w

    def mesh(self):
        """Broadcastable arrays (z, p_z, p_perp, theta) over :attr:`shape`."""
        nd = len(self.shape)
        def put(arr, axis):
            s = [1] * nd
            s[axis] = len(arr)
            return np.asarray(arr).reshape(s)
        out = {"z": put(self.z, 0), "pz": put(self.pz, 1)}
        ax = 2
        if self.has_pperp:
            out["pperp"] = put(self.pperp_nodes, ax)
            ax += 1
        if self.has_theta:
            out["theta"] = put(self.theta_nodes, ax)
        return out

    def compatible(self, other: "PhaseGrid") -> bool:
        return self.descriptor() == other.descriptor()

    def descriptor(self) -> dict:
        def arr(x):
            return None if x is None else [float(v) for v in x]
        return {
            "L": float(self.L), "n_z": self.n_z,
            "pz_max": float(self.pz_max), "n_pz": self.n_pz,
            "pperp_nodes": arr(self.pperp_nodes), "pperp_weights": arr(self.pperp_weights),
            "theta_nodes": arr(self.theta_nodes), "theta_weights": arr(self.theta_weights),
            "harmonics": [list(h) for h in self.harmonics],
        }

    @classmethod
    def from_descriptor(cls, d: dict) -> "PhaseGrid":
        def arr(x):
            return None if x is None else np.asarray(x, dtype=float)
        return cls(d["L"], d["n_z"], d["pz_max"], d["n_pz"],
                   arr(d["pperp_nodes"]), arr(d["pperp_weights"]),
                   arr(d["theta_nodes"]), arr(d["theta_weights"]),
                   tuple(tuple(h) for h in d["harmonics"]))


def make_grid(L: float, n_z: int, v_t: float, n_pz: int, *, m: float = 1.0,
              cutoff: float = 6.0, n_pperp: int = 0, n_theta: int = 0,
              harmonics=None) -> PhaseGrid:
    """Grid with |p_z| <= cutoff * m v_t and optional Gauss-rule p_perp/theta axes."""
    pperp = wperp = theta = wtheta = None
    if n_pperp:
        # Gauss-Laguerre in u = (p_perp/(m v_t))^2 covers  p_perp dp_perp exp(-u)
        u, w = np.polynomial.laguerre.laggauss(n_pperp)
        s = m * v_t
        pperp = s * np.sqrt(u)
        wperp = 0.5 * s**2 * w * np.exp(u)
    if n_theta:
        theta, wtheta, _, _ = sphere_rule(n_theta)
    if harmonics is None:
        harmonics = DEFAULT_HARMONICS if (n_pperp and n_theta) else ((0, 0),)
    return PhaseGrid(L, n_z, cutoff * m * v_t, n_pz, pperp, wperp, theta, wtheta,
                     tuple(harmonics))


@dataclass
class DistributionField:
    """Harmonic coefficient arrays of f on a :class:`PhaseGrid`."""

    grid: PhaseGrid
    values: dict
    time: float = 0.0

    def __post_init__(self):
        vals = {}
        for h in self.grid.harmonics:
            if h not in self.values:
                raise ValueError(f"missing harmonic {h}")
            arr = np.asarray(self.values[h])
            if arr.shape != self.grid.shape:
                raise ValueError(f"harmonic {h} has shape {arr.shape}, expected {self.grid.shape}")
            vals[h] = arr.real.astype(float) if h == (0, 0) else arr.astype(complex)
        extra = set(self.values) - set(self.grid.harmonics)
        if extra:
            raise ValueError(f"harmonics {sorted(extra)} not in grid harmonic set")
        self.values = vals

    @classmethod
    def zeros(cls, grid: PhaseGrid, time: float = 0.0) -> "DistributionField":
        return cls(grid, {h: np.zeros(grid.shape, dtype=float if h == (0, 0) else complex)
                          for h in grid.harmonics}, time)

    @property
    def f00(self) -> np.ndarray:
        return self.values[(0, 0)]

    def copy(self) -> "DistributionField":
        return DistributionField(self.grid, {h: v.copy() for h, v in self.values.items()}, self.time)

    def check(self, atol: float = 0.0) -> None:
        """Raise if values are non-finite or conjugate pairing is broken."""
        for h, v in self.values.items():
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite values in harmonic {h}")
            mirror = (-h[0], -h[1])
            if mirror in self.values and mirror != h:
                if not np.allclose(self.values[mirror], np.conj(v), rtol=0.0, atol=atol):
                    raise ValueError(f"conjugate pairing broken for {h}")

    def integrate_all(self) -> float:
        """Integral of f over z and the full (p, s) measure."""
        g = self.grid
        return float(g.dz * np.sum(self.f00 * g.momentum_weights()) * g.phi_p_factor * g.phi_s_factor)

    # ------------------------------------------------------------------ I/O
    def to_bytes(self) -> bytes:
        header = json.dumps({"grid": self.grid.descriptor(), "time": self.time,
                             "order": [list(h) for h in self.grid.harmonics]}).encode()
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(struct.pack("<IQ", _VERSION, len(header)))
        buf.write(header)
        for h in self.grid.harmonics:
            dt = "<f8" if h == (0, 0) else "<c16"
            buf.write(np.ascontiguousarray(self.values[h], dtype=dt).tobytes(order="C"))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "DistributionField":
        if data[:4] != _MAGIC:
            raise ValueError("not a spinplasma field snapshot")
        version, hlen = struct.unpack("<IQ", data[4:16])
        if version != _VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        header = json.loads(data[16:16 + hlen])
        grid = PhaseGrid.from_descriptor(header["grid"])
        pos = 16 + hlen
        n = int(np.prod(grid.shape))
        values = {}
        for h in header["order"]:
            h = tuple(h)
            dt = np.dtype("<f8") if h == (0, 0) else np.dtype("<c16")
            size = n * dt.itemsize
            values[h] = np.frombuffer(data[pos:pos + size], dtype=dt).reshape(grid.shape).copy()
            pos += size
        return cls(grid, values, header["time"])

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "DistributionField":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path: str | Path, max_points: int = 200_000) -> None:
        g = self.grid
        if np.prod(g.shape) * len(g.harmonics) > max_points:
            raise ValueError("grid too large for CSV export; use the binary format")
        axes = [("z", g.z), ("pz", g.pz)]
        if g.has_pperp:
            axes.append(("pperp", g.pperp_nodes))
        if g.has_theta:
            axes.append(("theta", g.theta_nodes))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([a for a, _ in axes] + ["n", "n_prime", "re", "im"])
            for h in g.harmonics:
                v = self.values[h]
                for idx in np.ndindex(*g.shape):
                    coords = [repr(float(ax[i])) for (_, ax), i in zip(axes, idx)]
                    val = complex(v[idx])
                    w.writerow(coords + [h[0], h[1], repr(val.real), repr(val.imag)])


# ---------------------------------------------------------------- marginals
def marginal_position_spin(f: DistributionField) -> dict:
    """Integrate over d^3p: returns {n': array over (z[, theta_s])}.

    Only n = 0 harmonics survive the phi_p integral.  The result is the
    coefficient of exp(i n' phi_s) on the spin sphere.
    """
    g = f.grid
    w = g.velocity_weights()
    axes = tuple(range(1, 1 + w.ndim))
    w = w.reshape((1,) + w.shape + ((1,) if g.has_theta else ()))
    out = {}
    for (n, m), v in f.values.items():
        if n != 0:
            continue
        out[m] = np.sum(v * w, axis=axes) * g.phi_p_factor
    return out


def marginal_momentum_spin(f: DistributionField) -> dict:
    """Integrate over z: returns {(n, n'): array over (p_z[, p_perp][, theta_s])}."""
    return {h: f.grid.dz * np.sum(v, axis=0) for h, v in f.values.items()}


def zero_mode_average(f: DistributionField) -> np.ndarray:
    """z-average of the (0,0) harmonic from its k = 0 Fourier coefficient."""
    return np.fft.fft(f.f00, axis=0)[0].real / f.grid.n_z


# ------------------------------------------------------------- kinematics
@dataclass(frozen=True)
class SpinVector:
    theta_s: float
    phi_s: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta_s <= np.pi:
            raise ValueError("theta_s must lie in [0, pi]")

    @property
    def vector(self) -> np.ndarray:
        st = np.sin(self.theta_s)
        return np.array([st * np.cos(self.phi_s), st * np.sin(self.phi_s), np.cos(self.theta_s)])


def _as_vec(s):
    return s.vector if isinstance(s, SpinVector) else np.asarray(s, dtype=float)


def velocity_of(p, s, E, *, mu: float, m: float = 1.0, c: float = 1.0) -> np.ndarray:
    """Spin-dependent velocity p/m + (3 mu / 2 m c) E x s."""
    p = np.asarray(p, dtype=float)
    return p / m + 1.5 * mu / (m * c) * np.cross(np.asarray(E, dtype=float), _as_vec(s))


def lab_frame_spin(s, v, *, c: float = 1.0) -> np.ndarray:
    """Spatial part of the spin four-vector, S = s + gamma^2/(gamma+1) (v.s) v / c^2."""
    s = _as_vec(s)
    v = np.asarray(v, dtype=float)
    beta2 = float(np.dot(v, v)) / c**2
    if beta2 >= 1.0:
        raise ValueError("|v| must be below c")
    gamma = 1.0 / np.sqrt(1.0 - beta2)
    return s + gamma**2 / (gamma + 1.0) * float(np.dot(v, s)) * v / c**2
