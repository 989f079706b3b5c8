"""Conserved functionals and estimate monitors for finite-eps runs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fields import SHARP, SingularityError, field_at, log_interaction_energy
from .measures import (
    TestFunction,
    WeightedMeasure,
    concentration_modulus,
    h_phi_bilinear,
)
from .vp_sim import Trajectory, VPState, perp

# ---------------------------------------------------------------------------
# Conserved quantities
# ---------------------------------------------------------------------------


def energy(state: VPState, include_charge: bool = True) -> float:
    """Discrete energy ``1/2 sum w|v|^2 + 1/2|eta|^2 - 1/2 sum' w w ln|x-y| - gamma sum w ln|x-xi|``.

    The plasma self-interaction uses the state's blob length and skips the
    diagonal. ``include_charge=False`` drops the plasma-charge logarithm
    (charge sent to infinity).
    """
    kinetic = 0.5 * float(np.sum(state.w * np.sum(state.v**2, axis=1))) + 0.5 * float(state.charge.eta @ state.charge.eta)
    rho = state.density
    pot = -0.5 * log_interaction_energy(rho, rho, state.blob, skip_diagonal=True)
    if include_charge:
        pot -= state.charge.gamma * log_interaction_energy(rho, WeightedMeasure.dirac(state.charge.xi), SHARP)
    return kinetic + pot


def momentum(state: VPState, include_charge: bool = True) -> float:
    """``sum w (|x|^2 + 2 eps x.v^perp) + gamma|xi|^2 + 2 eps xi.eta^perp``."""
    eps = state.eps
    x, v = state.x, state.v
    val = float(np.sum(state.w * (np.sum(x * x, axis=1) + 2 * eps * np.sum(x * perp(v), axis=1))))
    if include_charge:
        ch = state.charge
        val += ch.gamma * float(ch.xi @ ch.xi) + 2 * eps * float(ch.xi @ perp(ch.eta))
    return val


def momentum_defining(state: VPState, include_charge: bool = True) -> float:
    """Same quantity in the form ``sum w(|x + eps v^perp|^2 - eps^2|v|^2) + gamma|h|^2 - (eps^2/gamma)|eta|^2``."""
    eps = state.eps
    g = state.x + eps * perp(state.v)
    val = float(np.sum(state.w * (np.sum(g * g, axis=1) - eps**2 * np.sum(state.v**2, axis=1))))
    if include_charge:
        ch = state.charge
        h = ch.guiding_center(eps)
        val += ch.gamma * float(h @ h) - eps**2 / ch.gamma * float(ch.eta @ ch.eta)
    return val


# ---------------------------------------------------------------------------
# Time integrals over recorded samples
# ---------------------------------------------------------------------------


def _integral(times: np.ndarray, values: np.ndarray, s: float, t: float) -> float:
    """Exact integral of the piecewise-linear interpolant on ``[s, t]``."""
    lo, hi = times[0], times[-1]
    if not (lo - 1e-12 <= s <= t <= hi + 1e-12):
        raise ValueError(f"interval [{s}, {t}] outside recorded range [{lo}, {hi}]")
    if s == t:
        return 0.0
    inner = (times > s) & (times < t)
    tt = np.concatenate([[s], times[inner], [t]])
    vv = np.concatenate([[np.interp(s, times, values)], values[inner], [np.interp(t, times, values)]])
    return float(np.sum(0.5 * (vv[1:] + vv[:-1]) * np.diff(tt)))


def charge_field_time_integral(traj: Trajectory, s: float, t: float) -> float:
    """``int_s^t |E(tau, xi(tau))| dtau`` from the recorded field at the charge."""
    if s > t:
        raise ValueError("need s <= t")
    mags = np.linalg.norm(traj.channel("E_at_xi").reshape(-1, 2), axis=1)
    return _integral(traj.times, mags, s, t)


def _sample_index(times: np.ndarray, t: float) -> int:
    if not times[0] - 1e-12 <= t <= times[-1] + 1e-12:
        raise ValueError(f"t = {t} outside recorded range [{times[0]}, {times[-1]}]")
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t = {t} is not a recorded sample time")
    return k


def weak_form_terms(traj: Trajectory, phi: TestFunction, t: float) -> dict:
    """All terms of the symmetrized weak formulation for a time-independent ``phi``.

    Returns ``lhs`` (change of ``int phi d(rho + gamma delta_xi)``) and the
    time integrals ``nonlinear`` (``H_phi[rho + gamma delta_xi]``),
    ``moment`` (``D grad^perp phi : int v(x)v f dv``) and ``charge``
    (``eta . D grad^perp phi(xi) eta``). Time derivatives of ``phi`` vanish.
    """
    if not traj.snapshots:
        raise ValueError("trajectory has no snapshots; run with keep_snapshots=True")
    times = np.array([s.t for s in traj.snapshots])
    k = _sample_index(times, t)
    w, gamma, delta = traj.weights, traj.gamma, traj.blob.delta
    nonlinear = np.empty(k + 1)
    moment = np.empty(k + 1)
    charge = np.empty(k + 1)
    for i, snap in enumerate(traj.snapshots[: k + 1]):
        rho = WeightedMeasure(snap.x, w)
        nonlinear[i] = (h_phi_bilinear(phi, rho, rho, delta)
                        + 2.0 * h_phi_bilinear(phi, rho, WeightedMeasure.dirac(snap.xi, gamma)))
        D = phi.hess_perp(snap.x)
        moment[i] = float(np.sum(w * np.einsum("nij,ni,nj->n", D, snap.v, snap.v)))
        Dxi = phi.hess_perp(snap.xi[None, :])[0]
        charge[i] = float(snap.eta @ Dxi @ snap.eta)

    def total(snap):
        return float(np.sum(w * phi.value(snap.x))) + gamma * float(phi.value(snap.xi[None, :])[0])

    tt = times[: k + 1]

    def trap(y):
        return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(tt))) if k else 0.0

    return {
        "lhs": total(traj.snapshots[k]) - total(traj.snapshots[0]) if k else 0.0,
        "nonlinear": trap(nonlinear),
        "moment": trap(moment),
        "charge": trap(charge),
    }


def weak_form_residual(traj: Trajectory, phi: TestFunction, t: float) -> float:
    """LHS minus every explicit right-hand term: the remainder plus quadrature error."""
    terms = weak_form_terms(traj, phi, t)
    return terms["lhs"] - (terms["nonlinear"] - terms["moment"] - terms["charge"])


def holder_statistic(charge_traj, eps: float, *, stride: int = 1) -> float:
    """``max_{s<t} |xi(t) - xi(s)| / ((t - s)^{1/2} + eps^{1/3})`` over sample pairs.

    ``charge_traj`` is a :class:`Trajectory` or a ``(times, xi)`` pair.
    """
    if isinstance(charge_traj, Trajectory):
        times, xi = charge_traj.times, charge_traj.xi
    else:
        times, xi = (np.asarray(a, dtype=np.float64) for a in charge_traj)
    times, xi = times[::stride], xi.reshape(-1, 2)[::stride]
    if len(times) < 2:
        raise ValueError("need at least two samples")
    best = 0.0
    floor = eps ** (1.0 / 3.0)
    for i in range(len(times) - 1):
        dt = np.abs(times[i + 1:] - times[i])
        dist = np.linalg.norm(xi[i + 1:] - xi[i], axis=1)
        best = max(best, float(np.max(dist / (np.sqrt(dt) + floor))))
    return best


# ---------------------------------------------------------------------------
# Defect-measure proxy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, float]
    cell: float
    shape: tuple[int, int]

    def __post_init__(self):
        if not (self.cell > 0 and self.shape[0] >= 1 and self.shape[1] >= 1):
            raise ValueError("degenerate grid: need cell > 0 and at least one cell per axis")

    def centers(self) -> np.ndarray:
        ix = self.origin[0] + self.cell * (np.arange(self.shape[0]) + 0.5)
        iy = self.origin[1] + self.cell * (np.arange(self.shape[1]) + 0.5)
        gx, gy = np.meshgrid(ix, iy, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    def bin(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell indices of each point and the mask of points inside the grid."""
        idx = np.floor((x - np.asarray(self.origin)) / self.cell).astype(np.int64)
        inside = (idx[:, 0] >= 0) & (idx[:, 0] < self.shape[0]) & (idx[:, 1] >= 0) & (idx[:, 1] < self.shape[1])
        return idx[:, 0], idx[:, 1], inside


@dataclass(frozen=True)
class DefectProxy:
    grid: GridSpec
    moment: np.ndarray  # (nx, ny, 2, 2), per-cell sum of w v (x) v
    a: float  # eta1 * eta2
    b: float  # (eta2^2 - eta1^2) / 2

    @property
    def trace(self) -> np.ndarray:
        return self.moment[..., 0, 0] + self.moment[..., 1, 1]

    @property
    def off_diagonal(self) -> np.ndarray:
        return self.moment[..., 0, 1]

    @property
    def difference(self) -> np.ndarray:
        return self.moment[..., 1, 1] - self.moment[..., 0, 0]

    @property
    def isotropic(self) -> np.ndarray:
        return 0.5 * self.trace[..., None, None] * np.eye(2)

    @property
    def traceless(self) -> np.ndarray:
        return self.moment - self.isotropic


def second_moment_tensor(state: VPState, grid: GridSpec) -> DefectProxy:
    """Bin ``w v (x) v`` by particle cell; charge scalars from ``eta``."""
    ix, iy, inside = grid.bin(state.x)
    M = np.zeros(grid.shape + (2, 2))
    vv = (state.v[:, :, None] * state.v[:, None, :]) * state.w[:, None, None]  # exactly symmetric
    np.add.at(M, (ix[inside], iy[inside]), vv[inside])
    eta = state.charge.eta
    return DefectProxy(grid, M, float(eta[0] * eta[1]), float(0.5 * (eta[1] ** 2 - eta[0] ** 2)))


def angular_moment(state: VPState, phi_circle: Callable[[np.ndarray], np.ndarray], grid: GridSpec) -> np.ndarray:
    """Per-cell ``sum w phi(v/|v|) |v|^2``; particles at rest contribute nothing."""
    ix, iy, inside = grid.bin(state.x)
    speed2 = np.sum(state.v**2, axis=1)
    moving = inside & (speed2 > 0)
    theta = state.v[moving] / np.sqrt(speed2[moving])[:, None]
    out = np.zeros(grid.shape)
    np.add.at(out, (ix[moving], iy[moving]), state.w[moving] * np.asarray(phi_circle(theta)) * speed2[moving])
    return out


def channel_rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.asarray(a) ** 2)))


# ---------------------------------------------------------------------------
# Virial ingredients and per-sample observer
# ---------------------------------------------------------------------------


def virial_monitor(state: VPState) -> dict:
    """``I_abs = sum w|x-xi|``, ``inv_dist = sum w/|x-xi|``, ``|E(xi)|`` and ``min |x-xi|``."""
    d = np.linalg.norm(state.x - state.charge.xi, axis=1)
    if np.any(d == 0):
        raise SingularityError("particle located on the charge")
    E = field_at(state.density, state.charge.xi[None, :], SHARP)[0] if len(state) else np.zeros(2)
    return {
        "I_abs": float(np.sum(state.w * d)),
        "inv_dist": float(np.sum(state.w / d)),
        "E_at_xi_norm": float(np.hypot(*E)),
        "min_dist": float(d.min()) if len(d) else math.inf,
    }


def conc_key(r: float) -> str:
    return f"conc_r{r:g}"


def standard_observer(conc_radii: Sequence[float] = (0.25, 0.1, 0.05, 0.01),
                      centers: np.ndarray | None = None) -> Callable[[VPState], dict]:
    """Observer producing the JSONL diagnostic channels for one sample."""

    def observe(state: VPState) -> dict:
        rec = {"H": energy(state), "I": momentum(state), "mass": state.mass}
        rec.update(virial_monitor(state))
        rho = state.density
        for r in conc_radii:
            rec[conc_key(r)] = concentration_modulus(rho, r, centers)
        return rec

    return observe
