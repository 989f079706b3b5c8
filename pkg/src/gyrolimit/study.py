"""Run orchestration and file output for finite-eps, vortex-wave and sweep runs.

Each run writes into its own directory, built under a temporary name and
renamed into place once complete:

``diagnostics.jsonl``
    a header record followed by one record per sample.
``charge.csv``
    ``t,xi1,xi2,eta1,eta2`` (``t,xi1,xi2`` for vortex-wave runs).
``particles_t{t}.csv``
    ``x1,x2,v1,v2,w`` (``x1,x2,w``) at ``t = 0``, each checkpoint and ``t_end``.
``trajectory.npy``
    finite-eps runs only: ``(samples, N, 4)`` array of ``x, v`` at the rows
    of ``charge.csv``; used by ``check``.

Nothing written depends on the worker count or the wall clock.
"""

from __future__ import annotations

import json
import math
import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .diagnostics import conc_key, standard_observer
from .fields import BlobParams
from .measures import TestDictionary, WeightedMeasure, concentration_modulus, dual_norm_distance
from .vortex_wave import (
    VortexState,
    VortexTrajectory,
    interaction_energy,
    project_initial_data,
    vorticity_centroid,
    vw_run,
)
from .vp_sim import SimulationError, Snapshot, Trajectory, VPState, run, sample_initial_data

FMT = "%.17g"


def run_dir_name(eps: float) -> str:
    return f"eps_{eps:g}"


def _times_to_save(cfg: RunConfig) -> list[float]:
    return sorted({0.0, float(cfg.t_end)} | {float(c) for c in cfg.checkpoints if c < cfg.t_end})


def _jsonable(val):
    if isinstance(val, np.ndarray):
        return val.tolist()
    if isinstance(val, (np.floating, np.integer)):
        return val.item()
    return val


def _write_jsonl(path: Path, header: dict, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"type": "header", **header}, sort_keys=True) + "\n")
        for rec in records:
            row = {"type": "sample", **{k: _jsonable(v) for k, v in rec.items()}}
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_csv(path: Path, header: str, rows: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, rows, fmt=FMT, delimiter=",", header=header, comments="")


class _RunDir:
    """Context manager that builds a directory under a temporary name, then renames it."""

    def __init__(self, final: Path):
        self.final = final
        self.tmp = final.with_name("." + final.name + ".tmp")

    def __enter__(self) -> Path:
        if self.tmp.exists():
            shutil.rmtree(self.tmp)
        self.tmp.mkdir(parents=True)
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.final.exists():
            shutil.rmtree(self.final)
        os.replace(self.tmp, self.final)
        return False


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------


def initial_state(cfg: RunConfig, eps: float) -> VPState:
    return sample_initial_data(cfg.initial_data(), eps, cfg.xi0, cfg.eta0,
                               gamma=cfg.gamma, blob=BlobParams(cfg.delta))


def run_vp(cfg: RunConfig, eps: float, out_dir: Path | None = None) -> Trajectory:
    """Finite-eps run with the standard observer; writes files when ``out_dir`` is given."""
    state = initial_state(cfg, eps)
    dt = cfg.dt(eps)
    traj = run(state, cfg.t_end, dt, [standard_observer(cfg.conc_radii)], stride=cfg.stride,
               checkpoints=cfg.checkpoints, keep_snapshots=True, c_rot=cfg.c_rot)
    if out_dir is not None:
        header = {
            "kind": "vp", "eps": eps, "gamma": cfg.gamma, "N": cfg.N, "dt": dt, "delta": cfg.delta,
            "seed": cfg.seed, "stride": cfg.stride, "c_rot": cfg.c_rot, "t_end": cfg.t_end,
            "xi0": list(cfg.xi0), "eta0": list(cfg.eta0), **state.meta,
        }
        write_vp_run(Path(out_dir), header, traj, _times_to_save(cfg))
    return traj


def write_vp_run(path: Path, header: dict, traj: Trajectory, save_times: list[float]) -> None:
    with _RunDir(path) as d:
        _write_jsonl(d / "diagnostics.jsonl", header, traj.records)
        charge = np.column_stack([traj.times, traj.xi, traj.eta])
        _write_csv(d / "charge.csv", "t,xi1,xi2,eta1,eta2", charge)
        snaps = traj.snapshots
        np.save(d / "trajectory.npy", np.stack([np.hstack([s.x, s.v]) for s in snaps]))
        times = np.array([s.t for s in snaps])
        for t in save_times:
            s = snaps[int(np.argmin(np.abs(times - t)))]
            rows = np.column_stack([s.x, s.v, traj.weights])
            _write_csv(d / f"particles_t{t:g}.csv", "x1,x2,v1,v2,w", rows)


def _vw_observer(conc_radii):
    def observe(state: VortexState) -> dict:
        rec = {"W": interaction_energy(state), "centroid": vorticity_centroid(state),
               "mass": math.fsum(state.rho.weights)}
        for r in conc_radii:
            rec[conc_key(r)] = concentration_modulus(state.rho, r)
        return rec

    return observe


def run_vw(cfg: RunConfig, eps: float | None = None, out_dir: Path | None = None) -> VortexTrajectory:
    """Vortex-wave reference run from the projected finite-eps initial data."""
    state = project_initial_data(initial_state(cfg, cfg.eps[0] if eps is None else eps))
    traj = vw_run(state, cfg.t_end, cfg.dt_vw, [_vw_observer(cfg.conc_radii)], stride=cfg.stride,
                  checkpoints=cfg.checkpoints, keep_states=True)
    if out_dir is not None:
        header = {
            "kind": "vw", "gamma": cfg.gamma, "N": cfg.N, "dt": cfg.dt_vw, "delta": cfg.delta,
            "seed": cfg.seed, "stride": cfg.stride, "t_end": cfg.t_end, "xi0": list(cfg.xi0),
        }
        with _RunDir(Path(out_dir)) as d:
            _write_jsonl(d / "diagnostics.jsonl", header, traj.records)
            _write_csv(d / "charge.csv", "t,xi1,xi2", np.column_stack([traj.times, traj.xi]))
            for t in _times_to_save(cfg):
                s = traj.state_at(t)
                _write_csv(d / f"particles_t{t:g}.csv", "x1,x2,w",
                           np.column_stack([s.rho.points, s.rho.weights]))
    return traj


# ---------------------------------------------------------------------------
# Convergence study
# ---------------------------------------------------------------------------


@dataclass
class StudyRow:
    eps: float
    t: float
    rho_distance: float
    xi_distance: float
    status: str


@dataclass
class StudyReport:
    rows: list[StudyRow]
    trajectories: dict[float, Trajectory]
    references: dict[float, VortexTrajectory]

    @property
    def failed(self) -> list[float]:
        return sorted({r.eps for r in self.rows if r.status != "ok"})

    def column(self, name: str, t: float) -> np.ndarray:
        """Values of a distance column at checkpoint ``t``, in the order of the eps list."""
        return np.array([getattr(r, name) for r in self.rows if r.t == t])


def dictionary(cfg: RunConfig) -> TestDictionary:
    return TestDictionary(extent=cfg.dict_extent, spacing=cfg.dict_spacing,
                          widths=cfg.dict_widths, center=cfg.xi0)


def compare(traj: Trajectory, ref: VortexTrajectory, t: float, dic: TestDictionary) -> tuple[float, float]:
    """Dual-norm distance of the densities and distance of the charges at ``t``."""
    times = np.array([s.t for s in traj.snapshots])
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"no finite-eps snapshot at t = {t}")
    snap: Snapshot = traj.snapshots[k]
    ref_state = ref.state_at(t)
    rho = WeightedMeasure(snap.x, traj.weights)
    d_rho = dual_norm_distance(rho, ref_state.rho, dic)
    d_xi = float(np.hypot(*(snap.xi - ref_state.xi)))
    return d_rho, d_xi


def run_convergence_study(cfg: RunConfig, out: Path | None = None) -> StudyReport:
    """Finite-eps runs against vortex-wave references at the checkpoint times.

    A run that aborts is recorded with its error in the ``status`` column and
    the remaining eps values still run.
    """
    dic = dictionary(cfg)
    times = sorted({float(c) for c in cfg.checkpoints if c <= cfg.t_end} | {float(cfg.t_end)})
    rows: list[StudyRow] = []
    trajs: dict[float, Trajectory] = {}
    refs: dict[float, VortexTrajectory] = {}
    ref_cache: dict[bytes, VortexTrajectory] = {}
    for eps in cfg.eps:
        sub = None if out is None else Path(out) / run_dir_name(eps)
        try:
            key = project_initial_data(initial_state(cfg, eps))
            key = key.rho.points.tobytes() + key.xi.tobytes()
            if key not in ref_cache:
                vw_dir = None if out is None else Path(out) / f"vw_{len(ref_cache)}"
                ref_cache[key] = run_vw(cfg, eps, vw_dir)
            refs[eps] = ref_cache[key]
            trajs[eps] = run_vp(cfg, eps, sub)
        except SimulationError as exc:
            status = f"failed: {type(exc).__name__} at t={exc.t:g}" if exc.t is not None else \
                f"failed: {type(exc).__name__}"
            rows.extend(StudyRow(eps, t, math.nan, math.nan, status) for t in times)
            continue
        for t in times:
            d_rho, d_xi = compare(trajs[eps], refs[eps], t, dic)
            rows.append(StudyRow(eps, t, d_rho, d_xi, "ok"))
    report = StudyReport(rows, trajs, refs)
    if out is not None:
        write_summary(Path(out) / "summary.csv", rows)
    return report


def write_summary(path: Path, rows: list[StudyRow]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("eps,t,rho_distance,xi_distance,status\n")
        for r in rows:
            fh.write(",".join([FMT % r.eps, FMT % r.t, FMT % r.rho_distance, FMT % r.xi_distance,
                               r.status]) + "\n")


# ---------------------------------------------------------------------------
# Reloading saved runs
# ---------------------------------------------------------------------------


def load_vp_run(path: Path) -> tuple[dict, Trajectory]:
    """Rebuild the header and a snapshot-carrying trajectory from a finite-eps run directory."""
    path = Path(path)
    with open(path / "diagnostics.jsonl", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    header, records = lines[0], lines[1:]
    if header.get("type") != "header" or header.get("kind") != "vp":
        raise ValueError(f"{path} is not a finite-eps run directory")
    charge = np.loadtxt(path / "charge.csv", delimiter=",", skiprows=1, ndmin=2)
    xv = np.load(path / "trajectory.npy")
    p0 = np.loadtxt(path / "particles_t0.csv", delimiter=",", skiprows=1, ndmin=2)
    weights = p0[:, 4].copy()
    traj = Trajectory(eps=header["eps"], gamma=header["gamma"], weights=weights,
                      blob=BlobParams(header["delta"]), dt=header["dt"], stride=header["stride"])
    for rec, row, snap in zip(records, charge, xv):
        rec = {k: (np.asarray(v) if isinstance(v, list) else v) for k, v in rec.items() if k != "type"}
        traj.records.append(rec)
        traj.snapshots.append(Snapshot(row[0], snap[:, :2].copy(), snap[:, 2:].copy(),
                                       row[1:3].copy(), row[3:5].copy()))
    return header, traj
