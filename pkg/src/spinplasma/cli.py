"""Command-line front end.

    spinplasma params|regime|dispersion|simulate|verify|audit
               [CONFIG] [--preset NAME] [--out DIR]

Exit codes: 0 success, 1 usage or config error, 2 numerical failure (a
``diagnostic.txt`` is written to the output directory when one exists).
``SPINPLASMA_NUM_THREADS`` caps the BLAS/FFT thread pools.
"""
from __future__ import annotations

import os
import sys

_threads = os.environ.get("SPINPLASMA_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import csv
import json
import math
import traceback
from pathlib import Path

import numpy as np

from .config import ConfigError, ECHO_NAME, PRESETS, RunConfig, load_config, load_preset
from .dispersion import DispersionProblem, RootFindingError, find_root, resonant_guess, scan_k
from .equilibrium import Equilibrium1D, QuadratureError
from .kinetic import NumericalError, measure_mode, poisson_1d, charge_density, simulate
from .moments import Snapshot, continuity_residual, energy_audit
from .params import classify_regime, regime_contours, zitt_fermi_ratio
from .phasespace import DistributionField

COMMANDS = ("params", "regime", "dispersion", "simulate", "verify", "audit")
AUDIT_CLI_COLUMNS = ("t", "W_total", "drift", "continuity_max")
MODE_COLUMNS = ("t", "re_Ek", "im_Ek")
VERIFY_TOLERANCE = 0.01


class UsageError(Exception):
    pass


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def _clean(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


PLOT_TEMPLATE = '''"""Standalone plot of {csv}; needs matplotlib."""
import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("{csv}")))
x = [float(r["{x}"]) for r in rows]
fig, ax = plt.subplots()
for col in {ys!r}:
    ax.plot(x, [float(r[col]) for r in rows], marker=".", label=col)
ax.set_xlabel("{x}")
{extra}ax.legend()
fig.savefig("{png}", dpi=150)
'''


def _plot_script(out: Path, csv_name: str, x: str, ys, extra: str = "") -> Path:
    path = out / (Path(csv_name).stem + "_plot.py")
    path.write_text(PLOT_TEMPLATE.format(csv=csv_name, x=x, ys=list(ys), extra=extra,
                                         png=Path(csv_name).stem + ".png"))
    return path


def _prepare_out(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override or cfg.value("output", "dir"))
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_echo(out)
    return out


# ------------------------------------------------------------------ commands
def cmd_params(cfg: RunConfig, out: Path | None) -> dict:
    pp = cfg.params()
    report = {"cgs": pp.to_dict(), "normalized": vars(pp.normalized()).copy()}
    if out is not None:
        (out / "params.json").write_text(_dump(report) + "\n")
    return report


def cmd_regime(cfg: RunConfig, out: Path | None) -> dict:
    rep = classify_regime(cfg.plasma)
    report = json.loads(rep.to_json())
    if out is not None and cfg.has_section("regime"):
        n_lo = cfg.value("regime", "n_min")[0]
        n_hi = cfg.value("regime", "n_max")[0]
        n = np.logspace(math.log10(n_lo), math.log10(n_hi), cfg.value("regime", "n_points"))
        c = regime_contours(n)
        ratio = zitt_fermi_ratio(n)
        cols = ("n_e", "T_gamma1", "T_gammaF1", "T_hbarwp1", "T_F", "zitt_fermi_ratio")
        rows = zip(c["n_e"], c["T_gamma1"], c["T_gammaF1"], c["T_hbarwp1"], c["T_F"], ratio)
        _write_csv(out / "regime_map.csv", cols, rows)
        _plot_script(out, "regime_map.csv", "n_e", cols[1:5],
                     extra="ax.set_xscale('log')\nax.set_yscale('log')\nax.set_ylabel('T [K]')\n")
        report["regime_map"] = "regime_map.csv"
    if out is not None:
        (out / "regime.json").write_text(_dump(report) + "\n")
    return report


def _problem(cfg: RunConfig, k: float) -> DispersionProblem:
    pn = cfg.params().normalized()
    kind = cfg.value("dispersion", "kind")
    eq = Equilibrium1D(pn.vt) if kind == "langmuir_exact" and pn.vt > 0 else None
    return DispersionProblem(kind=kind, k=k, params=pn, equilibrium=eq,
                             convention=cfg.value("dispersion", "convention"),
                             variable=cfg.value("dispersion", "variable"),
                             n_nodes=cfg.value("dispersion", "n_nodes"))


def cmd_dispersion(cfg: RunConfig, out: Path) -> dict:
    k_lo = cfg.wavenumber("dispersion", "k_min")
    k_hi = cfg.wavenumber("dispersion", "k_max")
    ks = np.linspace(k_lo, k_hi, cfg.value("dispersion", "n_k"))
    try:
        prob = _problem(cfg, float(ks[0]))
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: [dispersion] {exc}") from None
    guess = cfg.value("dispersion", "omega_guess")
    if prob.variable == "detuning":
        guess = resonant_guess(prob.params, prob.convention)
    table = scan_k(prob, ks, guess)
    table.write_csv(out / "dispersion.csv")
    _plot_script(out, "dispersion.csv", "k", ("re_omega", "im_omega"))
    if table.detuning is not None:
        # omega - Delta is far below the resolution of omega itself
        dlt = prob.delta
        rows = [(k, d.real, d.real / dlt) for k, d in zip(table.k, table.detuning)]
        _write_csv(out / "detuning.csv", ("k", "detuning", "relative_detuning"), rows)
    lost = [float(k) for k, fl in zip(table.k, table.flags) if fl == "lost"]
    if len(lost) == len(ks):
        raise NumericalError("no root found at any k")
    return {"csv": "dispersion.csv", "n_k": len(ks), "lost": lost,
            "splits": int(sum(fl == "split" for fl in table.flags))}


def _run_simulation(cfg: RunConfig, out: Path, *, snapshots: bool = True):
    sc = cfg.solver_config()
    result = simulate(sc)
    rows = [(t, e.real, e.imag) for t, e in zip(result.times, result.mode_series)]
    _write_csv(out / "mode_series.csv", MODE_COLUMNS, rows)
    _plot_script(out, "mode_series.csv", "t", ("re_Ek", "im_Ek"))
    if snapshots and result.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for i, s in enumerate(result.snapshots):
            s.f.save(snap_dir / f"snap_{i:06d}.sppf")
    return sc, result


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    sc, result = _run_simulation(cfg, out)
    e = result.energy
    return {"mode_series": "mode_series.csv", "n_snapshots": len(result.snapshots),
            "energy_drift": float(abs(e[-1] - e[0]) / abs(e[0])),
            "mass_drift": float(abs(result.mass[-1] - result.mass[0]) / abs(result.mass[0]))}


def cmd_verify(cfg: RunConfig, out: Path) -> dict:
    sc, result = _run_simulation(cfg, out, snapshots=False)
    fit = measure_mode(result.times, result.mode_series)
    pn = cfg.params().normalized()
    eps = sc.eps_q * sc.hbar_scale if sc.quantum_toggle else 0.0
    pn = type(pn)(**{**vars(pn), "eps_q": eps})
    prob = DispersionProblem("langmuir_exact", sc.k, pn, equilibrium=Equilibrium1D(sc.vt))
    root = find_root(prob, fit.omega)
    rel = abs(fit.omega - root.omega.real) / abs(root.omega.real)
    report = {"predicted_omega": root.omega.real, "predicted_im_omega": root.omega.imag,
              "measured_omega": fit.omega, "measured_uncertainty": fit.uncertainty,
              "measured_growth_rate": fit.growth_rate, "relative_error": rel,
              "tolerance": VERIFY_TOLERANCE, "passed": bool(rel < VERIFY_TOLERANCE),
              "k": sc.k, "k_vt": sc.k * sc.vt, "eps_q": eps}
    (out / "verify_report.json").write_text(_dump(report) + "\n")
    if not report["passed"]:
        raise NumericalError(f"verification failed: relative error {rel:.3e} >= {VERIFY_TOLERANCE}")
    return report


def cmd_audit(cfg: RunConfig, out: Path, source: Path) -> dict:
    snap_dir = source / "snapshots"
    files = sorted(snap_dir.glob("snap_*.sppf"))
    if len(files) < 3:
        raise UsageError(f"{snap_dir}: need at least 3 stored snapshots (run simulate with snapshot_stride > 0)")
    sc = cfg.solver_config()
    snaps = []
    for fpath in files:
        f = DistributionField.load(fpath)
        E = poisson_1d(charge_density(f.f00, f.grid, sc.background), f.grid.L)
        snaps.append(Snapshot(f, E))
    audit = energy_audit(snaps, darwin=sc.darwin, background=sc.background)
    cont = continuity_residual(snaps)
    cmax = {float(t): float(np.max(np.abs(r))) for t, r in zip(cont.times, cont.residual)}
    rows = [(t, w, d, cmax.get(float(t), float("nan")))
            for t, w, d in zip(audit.times, audit.W_total, audit.drift_series)]
    _write_csv(out / "audit.csv", AUDIT_CLI_COLUMNS, rows)
    _plot_script(out, "audit.csv", "t", ("drift", "continuity_max"), extra="ax.set_yscale('log')\n")
    return {"audit": "audit.csv", "drift": audit.drift, "continuity_max": cont.max_norm,
            "n_snapshots": len(snaps)}


# ------------------------------------------------------------------ driver
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinplasma", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("config", nargs="?", help="config file (INI with units)")
    ap.add_argument("--preset", choices=sorted(PRESETS), help="built-in configuration")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--source", help="audit: directory written by 'simulate' (default: --out)")
    return ap


def _load(args) -> RunConfig:
    if args.config and args.preset:
        raise UsageError("give either a config file or --preset, not both")
    if args.config:
        return load_config(args.config)
    if args.preset:
        return load_preset(args.preset)
    if args.command == "audit" and args.source:
        echo = Path(args.source) / ECHO_NAME
        return load_config(echo)
    raise UsageError("a config file or --preset is required")


def run_command(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    out = cfg = None
    try:
        cfg = _load(args)
        if args.command in ("params", "regime"):
            out = _prepare_out(cfg, args.out) if args.out else None
            report = cmd_params(cfg, out) if args.command == "params" else cmd_regime(cfg, out)
            print(_dump(report))
            return 0
        if args.command == "audit":
            source = Path(args.source or args.out or cfg.value("output", "dir"))
            if not source.is_dir():
                raise UsageError(f"{source}: not a directory")
            out = _prepare_out(cfg, args.out or str(source))
            report = cmd_audit(cfg, out, source)
        else:
            if args.command in ("simulate", "verify"):
                cfg.solver_config()  # validate before touching the filesystem
            if args.command == "dispersion" and not cfg.has_section("dispersion"):
                raise ConfigError(f"{cfg.source}: a [dispersion] section is required")
            out = _prepare_out(cfg, args.out)
            handler = {"dispersion": cmd_dispersion, "simulate": cmd_simulate,
                       "verify": cmd_verify}[args.command]
            report = handler(cfg, out)
        print(_dump(report))
        return 0
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, RootFindingError, QuadratureError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if out is None and cfg is not None and args.command not in ("params", "regime"):
            out = Path(args.out or cfg.value("output", "dir"))
            out.mkdir(parents=True, exist_ok=True)
        if out is not None:
            diag = [f"{type(exc).__name__}: {exc}", ""]
            trace = getattr(exc, "trace", None)
            if trace:
                diag += ["iterate trace (x, |D|):"] + [f"{x!r} {r!r}" for x, r in trace] + [""]
            diag.append(traceback.format_exc())
            (out / "diagnostic.txt").write_text("\n".join(diag))
        return 2


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
