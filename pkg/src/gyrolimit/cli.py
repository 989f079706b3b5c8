"""Command-line entry point.

Verbs::

    gyrolimit run   --config PATH [--out DIR] [--seed N] [--threads N]
    gyrolimit sweep --config PATH [--out DIR] [--seed N] [--threads N]
    gyrolimit check RUN_DIR [--threads N]

Exit codes: 0 success, 1 a check failed, 2 configuration error,
3 numerical abort (blow-up or near-collision).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._parallel import set_threads
from .config import ConfigError, RunConfig, parse_config, serialize
from .diagnostics import holder_statistic, weak_form_residual
from .measures import Bump, SymbolicTestFunction, smooth_cutoff
from .study import load_vp_run, run_convergence_study, run_dir_name, run_vp, run_vw
from .vp_sim import SimulationError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

log = logging.getLogger("gyrolimit")


def _load_config(args) -> RunConfig:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(None, f"cannot read config: {exc}") from None
    cfg = parse_config(text)
    overrides = {}
    if args.out is not None:
        overrides["out"] = args.out
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed", "must be >= 0")
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    return replace(cfg, **overrides)


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_for_file = replace(cfg, threads=1, out=".")
    (out / "config.txt").write_text(serialize(cfg_for_file), encoding="utf-8")
    return out


def cmd_run(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    if cfg.mode == "vw":
        run_vw(cfg, cfg.eps[0], out / "vw")
        log.info("vortex-wave run written to %s", out / "vw")
        return EXIT_OK
    if cfg.mode == "sweep":
        return cmd_sweep(cfg)
    for eps in cfg.eps:
        run_vp(cfg, eps, out / run_dir_name(eps))
        log.info("eps = %g written to %s", eps, out / run_dir_name(eps))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    report = run_convergence_study(cfg, out)
    for r in report.rows:
        log.info("eps=%g t=%g rho=%.3e xi=%.3e %s", r.eps, r.t, r.rho_distance, r.xi_distance, r.status)
    return EXIT_ABORT if report.failed else EXIT_OK


def cmd_check(run_dir: Path, drift_tol: float) -> int:
    """Invariant suite on a saved finite-eps run."""
    header, traj = load_vp_run(run_dir)
    mass, H, I = traj.channel("mass"), traj.channel("H"), traj.channel("I")
    t_end = float(traj.times[-1])
    h_drift = float(np.max(np.abs(H - H[0]))) / max(1.0, abs(H[0]))
    i_drift = float(np.max(np.abs(I - I[0]))) / max(1.0, abs(I[0]))
    min_dist = float(np.min(traj.channel("min_dist")))
    # equal to 1 on a disk holding every particle and the charge at every sample
    reach = max(float(np.max(np.hypot(s.x[:, 0], s.x[:, 1]))) for s in traj.snapshots)
    reach = max(reach, float(np.max(np.hypot(traj.xi[:, 0], traj.xi[:, 1])))) + 1.0
    flat = SymbolicTestFunction(smooth_cutoff(reach, 2 * reach), support_radius=2 * reach)
    flat_res = weak_form_residual(traj, flat, t_end)
    checks = [
        ("mass constant (0 ulp)", bool(np.all(mass == mass[0])), repr(float(mass[0]))),
        ("energy drift", h_drift <= drift_tol, f"{h_drift:.3e}"),
        ("momentum drift", i_drift <= drift_tol, f"{i_drift:.3e}"),
        ("separation from charge", min_dist > 0, f"{min_dist:.3e}"),
        ("weak residual, constant test function", abs(flat_res) <= 1e-10, f"{flat_res:.3e}"),
    ]
    ok = True
    for name, passed, value in checks:
        ok = ok and passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {value}")
    phi = Bump(traj.xi[0], reach)
    print(f"INFO  weak residual, bump over charge and plasma: {weak_form_residual(traj, phi, t_end):.3e}")
    print(f"INFO  Holder statistic: {holder_statistic(traj, header['eps']):.4f}")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gyrolimit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, text in (("run", "finite-eps or vortex-wave runs"), ("sweep", "eps convergence study")):
        p = sub.add_parser(verb, help=text)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed (overrides config)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (output is identical)")
    p = sub.add_parser("check", help="invariant suite on a saved finite-eps run directory")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--drift-tol", type=float, default=1e-3, help="relative energy/momentum drift bound")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.verb == "check":
            set_threads(args.threads or 1)
            return cmd_check(args.run_dir, args.drift_tol)
        cfg = _load_config(args)
        if cfg.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        set_threads(cfg.threads)
        if args.verb == "sweep":
            if cfg.mode != "sweep":
                raise ConfigError("mode", "sweep verb needs mode = sweep")
            return cmd_sweep(cfg)
        return cmd_run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"numerical abort at t = {exc.t}: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
