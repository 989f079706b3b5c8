"""Vortex-blob solver for the vortex-wave system and its charge-free Euler case.

Blobs move with ``E^perp + gamma (x - xi)^perp / |x - xi|^2`` and the point
``xi`` moves with ``E^perp(xi)``, where ``E = x/|x|^2 * rho``. Blob-blob
interactions use the blob kernel; the charge couples through the sharp
kernel, as in the finite-eps integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .fields import SHARP, BlobParams, SingularityError, field_at, log_interaction_energy, self_field
from .measures import WeightedMeasure
from .vp_sim import COLLISION_FLOOR, BlowUpError, NearCollisionError, SimulationError, VPState, perp

DEFAULT_DT = 0.01


@dataclass(frozen=True)
class VortexState:
    rho: WeightedMeasure
    xi: np.ndarray
    gamma: float = 0.0
    t: float = 0.0
    blob: BlobParams = SHARP

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=np.float64).reshape(2).copy())
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if self.gamma > 0 and len(self.rho) and self.min_charge_distance() == 0.0:
            raise ValueError("a blob sits on the point vortex")

    def min_charge_distance(self) -> float:
        if len(self.rho) == 0:
            return math.inf
        d = self.rho.points - self.xi
        return float(np.min(np.hypot(d[:, 0], d[:, 1])))

    def with_positions(self, points: np.ndarray, xi: np.ndarray, t: float) -> VortexState:
        return replace(self, rho=WeightedMeasure(points, self.rho.weights), xi=xi, t=t)


def project_initial_data(state: VPState) -> VortexState:
    """Limit-system data from a finite-eps state: keep ``(x, w)`` and ``xi``, drop velocities and ``eta``."""
    return VortexState(rho=state.density, xi=state.charge.xi.copy(), gamma=state.charge.gamma,
                       t=state.t, blob=state.blob)


def velocities(state: VortexState) -> tuple[np.ndarray, np.ndarray]:
    """Blob velocities (own blob excluded) and the velocity of ``xi``."""
    rho = state.rho
    if len(rho) == 0:
        return np.zeros((0, 2)), np.zeros(2)
    u = perp(self_field(rho, state.blob))
    u_xi = np.zeros(2)
    if state.gamma > 0:
        d = rho.points - state.xi
        r = np.hypot(d[:, 0], d[:, 1])
        if np.any(r == 0):
            raise SingularityError("blob located on the point vortex")
        u = u + state.gamma * perp((d / r[:, None]) / r[:, None])
        u_xi = perp(field_at(rho, state.xi[None, :], SHARP)[0])
    return u, u_xi


def vw_velocity(state: VortexState, x, exclude_index: int | None = None) -> np.ndarray:
    """Advecting velocity at ``x``.

    At a blob (``exclude_index`` given) or a generic point the charge term is
    included; at ``x == xi`` only ``E^perp(xi)`` acts, since the point vortex
    does not advect itself.
    """
    x = np.asarray(x, dtype=np.float64).reshape(2)
    rho = state.rho
    if exclude_index is not None:
        keep = np.ones(len(rho), dtype=bool)
        keep[exclude_index] = False
        rho = WeightedMeasure(rho.points[keep], rho.weights[keep])
    at_charge = bool(np.all(x == state.xi))
    blob = SHARP if at_charge else state.blob
    u = perp(field_at(rho, x[None, :], blob)[0]) if len(rho) else np.zeros(2)
    if state.gamma > 0 and not at_charge:
        d = x - state.xi
        r = math.hypot(*d)
        u = u + state.gamma * perp((d / r) / r)
    return u


def _check(state: VortexState) -> None:
    if not (np.all(np.isfinite(state.rho.points)) and np.all(np.isfinite(state.xi))):
        raise BlowUpError("non-finite vortex state", state.t)
    if state.gamma > 0 and state.min_charge_distance() < COLLISION_FLOOR:
        raise NearCollisionError("blob-vortex distance below hard floor", state.t)


def vw_step(state: VortexState, dt: float) -> VortexState:
    """Classical RK4 on all blob positions and ``xi`` jointly."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    x0, xi0 = state.rho.points, state.xi

    def stage(px, pxi):
        try:
            s = state.with_positions(px, pxi, state.t)
        except ValueError as exc:
            raise BlowUpError(str(exc), state.t) from exc
        return velocities(s)

    k1 = stage(x0, xi0)
    k2 = stage(x0 + 0.5 * dt * k1[0], xi0 + 0.5 * dt * k1[1])
    k3 = stage(x0 + 0.5 * dt * k2[0], xi0 + 0.5 * dt * k2[1])
    k4 = stage(x0 + dt * k3[0], xi0 + dt * k3[1])
    x1 = x0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    xi1 = xi0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    out = state.with_positions(x1, xi1, state.t + dt)
    _check(out)
    return out


@dataclass
class VortexTrajectory:
    weights: np.ndarray
    gamma: float
    blob: BlobParams
    dt: float
    records: list[dict] = field(default_factory=list)
    states: list[VortexState] = field(default_factory=list)
    final: VortexState | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.records])

    def channel(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    @property
    def xi(self) -> np.ndarray:
        return self.channel("xi").reshape(-1, 2)

    def state_at(self, t: float) -> VortexState:
        times = np.array([s.t for s in self.states])
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no stored state at t = {t}")
        return self.states[k]


def vw_run(
    state: VortexState,
    t_end: float,
    dt: float = DEFAULT_DT,
    observers: Sequence[Callable[[VortexState], dict]] = (),
    *,
    stride: int = 1,
    checkpoints: Sequence[float] = (),
    keep_states: bool = False,
) -> VortexTrajectory:
    """Integrate with equal RK4 steps per segment so checkpoints are hit exactly."""
    if not dt > 0 or stride < 1:
        raise ValueError("need dt > 0 and stride >= 1")
    if t_end < state.t:
        raise ValueError("t_end precedes the state time")
    traj = VortexTrajectory(weights=state.rho.weights.copy(), gamma=state.gamma, blob=state.blob, dt=dt)

    def record(s: VortexState) -> None:
        u_xi = perp(field_at(s.rho, s.xi[None, :], SHARP)[0]) if len(s.rho) else np.zeros(2)
        rec = {"t": s.t, "xi": s.xi.copy(), "xi_velocity": u_xi}
        for obs in observers:
            rec.update(obs(s))
        traj.records.append(rec)
        if keep_states:
            traj.states.append(s)

    if t_end == state.t:
        traj.final = state
        return traj
    record(state)
    stops = sorted({float(c) for c in checkpoints if state.t < c < t_end} | {float(t_end)})
    k = 0
    for stop in stops:
        span = stop - state.t
        n = max(1, math.ceil(span / dt - 1e-9))
        h = span / n
        for j in range(n):
            try:
                state = vw_step(state, h)
            except SimulationError as exc:
                if exc.t is None:
                    exc.t = state.t
                raise
            k += 1
            if j == n - 1:
                state = replace(state, t=stop)
            if k % stride == 0 or j == n - 1:
                record(state)
    traj.final = state
    return traj


def interaction_energy(state: VortexState) -> float:
    """``-sum_{i != j} w_i w_j ln|x_i - x_j|`` with the state's blob length."""
    return -log_interaction_energy(state.rho, state.rho, state.blob, skip_diagonal=True)


def vorticity_centroid(state: VortexState) -> np.ndarray:
    """``sum w x + gamma xi`` (unnormalized)."""
    return np.sum(state.rho.weights[:, None] * state.rho.points, axis=0) + state.gamma * state.xi
