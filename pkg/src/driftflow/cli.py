"""Command-line interface: ``driftflow run|check|compare``.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 I/O
failure, 4 a verification check failed (``check`` only).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import ConfigError, load_config
from .dynamics import SolverError, Trajectory, run
from .grid import write_csv

log = logging.getLogger("driftflow")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO, EXIT_CHECK = 0, 1, 2, 3, 4

#: relative-energy values below this are treated as converged when fitting
FIT_FLOOR = 1e-9


def _fmt(v) -> str:
    return repr(float(v))


def snapshot_name(t: float, prefix: str = "density") -> str:
    return f"{prefix}_t{t:010.4f}.csv"


def relative_energy(traj: Trajectory, kind: str) -> np.ndarray:
    """Energy gap to the terminal sample, oriented to be nonnegative for Lyapunov regimes."""
    e = np.asarray(traj.energies)
    sgn = -1.0 if kind == "competitive_fastx" else 1.0
    return sgn * (e - e[-1])


def sample_dissipation(traj: Trajectory, model, regime) -> np.ndarray:
    if regime.kind == "two_populations":
        return np.full(len(traj.times), np.nan)
    return np.array([dg.dissipation(r, x, model, regime) for r, x in zip(traj.densities, traj.xs)])


def write_energy_csv(path: Path, traj: Trajectory, rel, diss) -> None:
    dim = traj.xs[0].size
    xcols = ["x"] if dim == 1 else [f"x{i + 1}" for i in range(dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "energy", "relative_energy", "dissipation", *xcols, "modes"])
        for i, t in enumerate(traj.times):
            modes = dg.count_modes(traj.densities[i], 0.2)
            w.writerow([_fmt(t), _fmt(traj.energies[i]), _fmt(rel[i]), _fmt(diss[i]),
                        *(_fmt(v) for v in traj.xs[i]), modes])


def fitted_rate(traj: Trajectory, kind: str):
    """Decay rate fitted to the trailing half of the relative energy, or None."""
    rel = relative_energy(traj, kind)
    floor = FIT_FLOOR * max(1.0, float(np.max(np.abs(traj.energies))))
    try:
        return dg.fit_decay_rate(traj.times, rel, window=0.5, floor=floor)
    except ValueError:
        return None


def _write_run(cfg, traj: Trajectory, out: Path) -> dict:
    model = cfg.model()
    regime = cfg.regime()
    out.mkdir(parents=True, exist_ok=True)
    for t, rho in zip(traj.times, traj.densities):
        write_csv(rho, out / snapshot_name(t))
    for t, tau in zip(traj.times, traj.second):
        write_csv(tau, out / snapshot_name(t, "tau"))
    rel = relative_energy(traj, cfg.kind)
    diss = sample_dissipation(traj, model, regime)
    write_energy_csv(out / "energy.csv", traj, rel, diss)
    info = {
        "regime": cfg.kind,
        "final_time": traj.times[-1],
        "steps": traj.steps,
        "substeps": traj.substeps,
        "final_energy": traj.energies[-1],
        "final_x": [float(v) for v in traj.final_x],
        "final_modes": dg.count_modes(traj.final_density, 0.2),
        "max_step_mass_drift": traj.max_step_drift,
        "cumulative_mass_drift": traj.cumulative_drift,
        "min_cell_value": traj.min_value,
        "final_classifier_loss": traj.classifier_loss[-1],
        "final_population_loss": traj.population_loss[-1],
    }
    if cfg.kind != "two_populations":
        info["steady_state_residual"] = dg.steady_state_residual(traj.final_density, traj.final_x,
                                                                 model, regime)
    lam, applicable = dg.rate_constant(model, regime)
    info["theory_rate"] = lam if applicable else "not applicable"
    info["fitted_rate"] = fitted_rate(traj, cfg.kind)
    with open(out / "summary.txt", "w") as fh:
        for k, v in info.items():
            fh.write(f"{k}: {v}\n")
    return info


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.stride is not None:
        cfg = cfg.replace(time__stride=args.stride)
    out = Path(args.out or cfg["run.output"])
    traj = run(cfg)
    info = _write_run(cfg, traj, out)
    print(f"{cfg.kind}: {traj.steps} steps to t={info['final_time']:g}, "
          f"energy {info['final_energy']:.6g}, output in {out}")
    return EXIT_OK


def _energy_monotone(traj: Trajectory, slack: float = 1e-6) -> bool:
    d = np.diff(traj.energies)
    return bool(np.all(d <= slack) or np.all(d >= -slack))


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg["run.output"])
    model = cfg.model()
    regime = cfg.regime()
    traj = run(cfg)
    info = _write_run(cfg, traj, out)
    verdicts = {
        "mass_conservation": traj.max_step_drift <= 1e-12 and traj.cumulative_drift <= 1e-8,
        "positivity": traj.min_value >= 0,
    }
    lam, applicable = dg.rate_constant(model, regime)
    lyapunov = cfg.kind in ("aligned", "competitive_fastx", "competitive_fastrho")
    if lyapunov:
        verdicts["energy_monotone"] = _energy_monotone(traj)
    elif cfg.kind == "competitive_2d":
        verdicts["energy_trend_monotone"] = _energy_monotone(traj)
    report = None
    if lyapunov and applicable and model.grid.dim == 1:
        rate = info["fitted_rate"]
        verdicts["decay_rate"] = rate is not None and rate >= 0.8 * lam
        report = dg.inequality_report(traj, model, regime, lam)
        report.write_csv(out / "inequality.csv")
        verdicts.update(report.passed)
    elif lyapunov:
        print(f"rate and inequality checks: not applicable (lambda = {lam:.4g}, hypothesis unmet); "
              f"fitted rate {info['fitted_rate']}")
    with open(out / "summary.txt", "a") as fh:
        block = {"verdicts": verdicts, "lambda": lam if applicable else None}
        if report is not None:
            block["inequalities"] = report.summary()
        fh.write("checks: " + json.dumps(block, default=bool) + "\n")
    for name, ok in verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if all(verdicts.values()) else EXIT_CHECK


def _shared_setup(a, b) -> bool:
    keys = [k for k in a.values if k.split(".")[0] in ("grid", "model", "reference", "static")]
    return all(a[k] == b[k] for k in keys)


def cmd_compare(args) -> int:
    ca, cb = load_config(args.config_a), load_config(args.config_b)
    if not _shared_setup(ca, cb):
        raise ConfigError("compare: configurations differ in grid or model settings")
    ta, tb = run(ca), run(cb)
    if not np.allclose(ta.times, tb.times, rtol=0, atol=1e-12):
        raise ConfigError("compare: runs are sampled at different times (check time.T, dt, stride)")
    names = (Path(args.config_a).stem, Path(args.config_b).stem)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "compare.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", f"classifier_loss_{names[0]}", f"classifier_loss_{names[1]}",
                        f"population_loss_{names[0]}", f"population_loss_{names[1]}"])
            for i, t in enumerate(ta.times):
                w.writerow([_fmt(t), _fmt(ta.classifier_loss[i]), _fmt(tb.classifier_loss[i]),
                            _fmt(ta.population_loss[i]), _fmt(tb.population_loss[i])])
    rows = [("classifier loss, initial", ta.classifier_loss[0], tb.classifier_loss[0]),
            ("classifier loss, final", ta.classifier_loss[-1], tb.classifier_loss[-1]),
            ("population loss, initial", ta.population_loss[0], tb.population_loss[0]),
            ("population loss, final", ta.population_loss[-1], tb.population_loss[-1])]
    print(f"{'quantity':<26}{names[0]:>18}{names[1]:>18}{'difference':>14}")
    for label, va, vb in rows:
        print(f"{label:<26}{va:>18.8g}{vb:>18.8g}{va - vb:>14.4g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="driftflow",
                                description="Strategic population / classifier gradient-flow simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write CSV output")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: run.output from the config)")
    r.add_argument("--stride", type=int, help="record every K steps (overrides time.stride)")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="run a scenario and verify decay rates and inequalities")
    c.add_argument("config")
    c.add_argument("--out", help="output directory (default: run.output from the config)")
    c.set_defaults(func=cmd_check)
    m = sub.add_parser("compare", help="compare classifier and population losses of two scenarios")
    m.add_argument("config_a")
    m.add_argument("config_b")
    m.add_argument("--out", help="also write the paired series to DIR/compare.csv")
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc} (residual {exc.residual:.3e})", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # invalid inputs surfacing while building the model (e.g. a bad density file)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
