"""Particle integrator for the magnetized Vlasov-Poisson system with a point charge.

Characteristics, with ``F = E + L`` the plasma field plus the charge field::

    x' = v / eps
    v' = v^perp / eps^2 + F(x) / eps
    xi' = eta / eps
    eta' = gamma (eta^perp / eps^2 + E(xi) / eps)

``a^perp = (-a2, a1)``. One step is kick / exact gyration / kick (Strang).
Under pure gyration ``x + eps v^perp`` and ``xi + (eps/gamma) eta^perp`` are
invariant, which gives the closed-form drift of the middle substep.

Plasma-plasma interactions use the blob kernel; plasma-charge interactions use
the sharp kernel in both directions so that energy and momentum are exact
invariants of the semi-discrete system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .fields import SHARP, BlobParams, charge_field, field_at, self_field
from .measures import WeightedMeasure

COLLISION_FLOOR = 1e-10
DEFAULT_C_ROT = 0.1


class SimulationError(RuntimeError):
    """Numerical failure of a run; ``t`` is the time at which it was detected."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} (t = {t!r})")
        self.t = t


class BlowUpError(SimulationError):
    pass


class NearCollisionError(SimulationError):
    pass


def perp(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return np.stack([-a[..., 1], a[..., 0]], axis=-1)


def rotate(a: np.ndarray, angle: float) -> np.ndarray:
    """Counterclockwise rotation, the flow of ``a' = a^perp`` for unit time ``angle``."""
    c, s = math.cos(angle), math.sin(angle)
    a = np.asarray(a, dtype=np.float64)
    return np.stack([c * a[..., 0] - s * a[..., 1], s * a[..., 0] + c * a[..., 1]], axis=-1)


class PhaseParticle(NamedTuple):
    x: np.ndarray
    v: np.ndarray
    w: float


@dataclass(frozen=True)
class ChargeState:
    xi: np.ndarray
    eta: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=np.float64).reshape(2).copy())
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=np.float64).reshape(2).copy())
        if not self.gamma > 0:
            raise ValueError("charge strength gamma must be > 0")
        if not (np.all(np.isfinite(self.xi)) and np.all(np.isfinite(self.eta))):
            raise ValueError("charge state must be finite")

    def guiding_center(self, eps: float) -> np.ndarray:
        """``xi + (eps / gamma) eta^perp``, invariant under the charge gyration."""
        return self.xi + (eps / self.gamma) * perp(self.eta)


@dataclass(frozen=True)
class VPState:
    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    charge: ChargeState
    eps: float
    t: float = 0.0
    blob: BlobParams = SHARP
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64).reshape(-1, 2))
        v = np.ascontiguousarray(np.asarray(self.v, dtype=np.float64).reshape(-1, 2))
        w = np.ascontiguousarray(np.asarray(self.w, dtype=np.float64).reshape(-1))
        if not (x.shape == v.shape and x.shape[0] == w.shape[0]):
            raise ValueError("x, v, w must describe the same number of particles")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if np.any(w <= 0):
            raise ValueError("particle weights must be > 0")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return self.w.shape[0]

    def particle(self, i: int) -> PhaseParticle:
        return PhaseParticle(self.x[i].copy(), self.v[i].copy(), float(self.w[i]))

    @property
    def particles(self) -> list[PhaseParticle]:
        return [self.particle(i) for i in range(len(self))]

    @property
    def density(self) -> WeightedMeasure:
        """Spatial marginal ``rho`` as an atomic measure."""
        return WeightedMeasure(self.x, self.w)

    @property
    def mass(self) -> float:
        return math.fsum(self.w)

    def min_charge_distance(self) -> float:
        if len(self) == 0:
            return math.inf
        d = self.x - self.charge.xi
        return float(np.min(np.hypot(d[:, 0], d[:, 1])))


def max_time_step(eps: float, c_rot: float = DEFAULT_C_ROT) -> float:
    """Largest step resolving the gyration angle: ``c_rot * eps^2``."""
    return c_rot * eps**2


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialDataSpec:
    """Uniform phase-space density on (spatial region) x (velocity disk).

    ``region`` is ``"annulus"`` (radii ``r_inner..r_outer`` about the charge)
    or ``"disk"`` (radius ``disk_radius`` centred at charge + ``disk_offset``).
    If ``height_coef > 0`` the sup of ``f0`` is ``height_coef * eps**-height_exp``
    and the velocity radius follows from the mass; otherwise ``v_radius`` is
    used and the implied height is reported.
    """

    n_particles: int
    mass: float = 0.9
    region: str = "disk"
    r_inner: float = 0.2
    r_outer: float = 1.0
    disk_offset: tuple[float, float] = (1.0, 0.0)
    disk_radius: float = 0.6
    v_radius: float = 1.0
    exclusion: float = 0.2
    height_coef: float = 0.0
    height_exp: float = 1.0
    sampling: str = "stratified"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "disk_offset", tuple(float(c) for c in self.disk_offset))
        if not 0.0 < self.mass < 1.0:
            raise ValueError("total mass must lie in (0, 1)")
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if not self.exclusion > 0:
            raise ValueError("exclusion radius must be > 0")
        if self.region not in ("annulus", "disk"):
            raise ValueError(f"unknown region {self.region!r}")
        if self.sampling not in ("stratified", "grid"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.height_coef < 0 or (self.height_coef == 0 and not self.v_radius > 0):
            raise ValueError("need v_radius > 0 or a positive height_coef")

    def spatial_area(self) -> float:
        if self.region == "annulus":
            return math.pi * (self.r_outer**2 - self.r_inner**2)
        return math.pi * self.disk_radius**2

    def height(self, eps: float) -> float:
        """Sup norm of ``f0`` at this ``eps``."""
        if self.height_coef > 0:
            return self.height_coef * eps ** (-self.height_exp)
        return self.mass / (self.spatial_area() * math.pi * self.v_radius**2)

    def velocity_radius(self, eps: float) -> float:
        if self.height_coef > 0:
            return math.sqrt(self.mass / (self.spatial_area() * math.pi * self.height(eps)))
        return self.v_radius

    def as_dict(self) -> dict:
        return {
            "n_particles": self.n_particles, "mass": self.mass, "region": self.region,
            "r_inner": self.r_inner, "r_outer": self.r_outer, "disk_offset": list(self.disk_offset),
            "disk_radius": self.disk_radius, "v_radius": self.v_radius, "exclusion": self.exclusion,
            "height_coef": self.height_coef, "height_exp": self.height_exp,
            "sampling": self.sampling, "seed": self.seed,
        }


def _equal_area_polar(n: int, r_in: float, r_out: float, rng: np.random.Generator | None) -> np.ndarray:
    """``n`` nodes, one per equal-area polar cell of the annulus ``r_in <= r <= r_out``.

    Cell centres (in ``r^2`` and angle) when ``rng`` is None, otherwise one
    uniform sample per cell.
    """
    n_rings = max(1, int(round(math.sqrt(n * (r_out - r_in) / (math.pi * (r_out + r_in))))))
    n_rings = min(n_rings, n)
    counts = np.full(n_rings, n // n_rings)
    counts[: n % n_rings] += 1
    cum = np.concatenate([[0], np.cumsum(counts)])
    s_edges = r_in**2 + (r_out**2 - r_in**2) * cum / n
    out = np.empty((n, 2))
    for k in range(n_rings):
        m = counts[k]
        j = np.arange(m)
        if rng is None:
            s = np.full(m, 0.5 * (s_edges[k] + s_edges[k + 1]))
            th = 2 * np.pi * (j + 0.5) / m
        else:
            s = s_edges[k] + (s_edges[k + 1] - s_edges[k]) * rng.random(m)
            th = 2 * np.pi * (j + rng.random(m)) / m
        r = np.sqrt(s)
        out[cum[k]:cum[k + 1], 0] = r * np.cos(th)
        out[cum[k]:cum[k + 1], 1] = r * np.sin(th)
    return out


def _exact_weights(n: int, mass: float) -> np.ndarray:
    """Equal weights nudged so that ``fsum(w) == mass`` exactly."""
    w = np.full(n, mass / n)
    for _ in range(4):
        gap = mass - math.fsum(w)
        if gap == 0.0:
            return w
        w[-1] += gap
    # the last weight may have a finer ulp than the mass; walk it one ulp at a time
    while (total := math.fsum(w)) != mass:
        w[-1] = np.nextafter(w[-1], math.inf if total < mass else -math.inf)
    return w


def sample_initial_data(
    spec: InitialDataSpec,
    eps: float,
    xi0=(0.0, 0.0),
    eta0=(0.0, 0.0),
    *,
    gamma: float = 1.0,
    blob: BlobParams = SHARP,
) -> VPState:
    """Quadrature of a uniform ``f0`` satisfying the exclusion and small-mass hypotheses.

    Spatial and velocity nodes come from equal-area polar cells of the
    spatial region and of the velocity disk; they are paired by a seeded
    permutation (``stratified``) or a golden-ratio permutation (``grid``).
    All weights are ``mass / N``, corrected so that ``fsum(w) == mass``.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    xi0 = np.asarray(xi0, dtype=np.float64).reshape(2)
    n = spec.n_particles
    root = np.random.SeedSequence(spec.seed)
    space_seed, vel_seed, pair_seed = root.spawn(3)
    stratified = spec.sampling == "stratified"

    if spec.region == "annulus":
        if not (spec.exclusion <= spec.r_inner < spec.r_outer):
            raise ValueError("infeasible annulus: need exclusion <= r_inner < r_outer")
        local = _equal_area_polar(n, spec.r_inner, spec.r_outer,
                                  np.random.default_rng(space_seed) if stratified else None)
        x = xi0 + local
    else:
        offset = np.asarray(spec.disk_offset)
        gap = float(np.hypot(*offset)) - spec.disk_radius
        if not spec.disk_radius > 0 or gap < spec.exclusion:
            raise ValueError("infeasible disk: support must stay at distance >= exclusion from the charge")
        local = _equal_area_polar(n, 0.0, spec.disk_radius,
                                  np.random.default_rng(space_seed) if stratified else None)
        x = xi0 + offset + local

    v_rad = spec.velocity_radius(eps)
    v = _equal_area_polar(n, 0.0, v_rad, np.random.default_rng(vel_seed) if stratified else None)
    if stratified:
        v = v[np.random.default_rng(pair_seed).permutation(n)]
    else:
        golden = (math.sqrt(5.0) - 1.0) / 2.0
        v = v[np.argsort((np.arange(n) * golden) % 1.0, kind="stable")]

    meta = {
        "initial_data": spec.as_dict(),
        "f0_height": spec.height(eps),
        "velocity_radius": v_rad,
    }
    return VPState(x=x, v=v, w=_exact_weights(n, spec.mass), charge=ChargeState(xi0, eta0, gamma),
                   eps=eps, t=0.0, blob=blob, meta=meta)


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------


def forces(state: VPState, couple_charge: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """``(E + L)`` at every particle and the sharp plasma field ``E`` at the charge."""
    rho = state.density
    F = self_field(rho, state.blob) if len(state) else np.zeros((0, 2))
    if couple_charge and len(state):
        F = F + charge_field(state.x, state.charge.xi, state.charge.gamma)
        E_xi = field_at(rho, state.charge.xi[None, :], SHARP)[0]
    else:
        E_xi = np.zeros(2)
    return F, E_xi


def rotate_substep(state: VPState, dt: float, freeze_charge: bool = False) -> VPState:
    """Exact flow of the gyration part over ``dt``: velocities rotate, positions drift."""
    eps = state.eps
    theta = dt / eps**2
    v_new = rotate(state.v, theta)
    x_new = state.x + eps * (perp(state.v) - perp(v_new))
    ch = state.charge
    if freeze_charge:
        charge = ch
    else:
        eta_new = rotate(ch.eta, ch.gamma * theta)
        xi_new = ch.xi + (eps / ch.gamma) * (perp(ch.eta) - perp(eta_new))
        charge = ChargeState(xi_new, eta_new, ch.gamma)
    return replace(state, x=x_new, v=v_new, charge=charge)


def _kick(state: VPState, F: np.ndarray, E_xi: np.ndarray, tau: float, freeze_charge: bool) -> VPState:
    eps = state.eps
    v = state.v + (tau / eps) * F
    ch = state.charge
    if freeze_charge:
        return replace(state, v=v)
    eta = ch.eta + (ch.gamma * tau / eps) * E_xi
    return replace(state, v=v, charge=ChargeState(ch.xi, eta, ch.gamma))


def _check(state: VPState, couple_charge: bool) -> None:
    finite = (np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.v))
              and np.all(np.isfinite(state.charge.xi)) and np.all(np.isfinite(state.charge.eta)))
    if not finite:
        raise BlowUpError("non-finite particle or charge state", state.t)
    if couple_charge and state.min_charge_distance() < COLLISION_FLOOR:
        raise NearCollisionError("particle-charge distance below hard floor", state.t)


def _step(state: VPState, dt: float, start_forces, couple_charge: bool, freeze_charge: bool):
    F0, E0 = start_forces if start_forces is not None else forces(state, couple_charge)
    half = 0.5 * dt
    s = _kick(state, F0, E0, half, freeze_charge)
    s = rotate_substep(s, dt, freeze_charge)
    _check(s, couple_charge)
    F1, E1 = forces(s, couple_charge)
    s = _kick(s, F1, E1, half, freeze_charge)
    s = replace(s, t=state.t + dt)
    _check(s, couple_charge)
    return s, (F1, E1)


def step(state: VPState, dt: float, *, couple_charge: bool = True, freeze_charge: bool = False) -> VPState:
    """Advance one kick-gyrate-kick step.

    ``couple_charge=False`` removes the charge field from the plasma and the
    plasma field from the charge; ``freeze_charge=True`` pins ``xi`` and
    ``eta``. Both are test hooks.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return _step(state, dt, None, couple_charge, freeze_charge)[0]


# ---------------------------------------------------------------------------
# Runs and trajectories
# ---------------------------------------------------------------------------


class Snapshot(NamedTuple):
    t: float
    x: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    eta: np.ndarray


@dataclass
class Trajectory:
    """Recorded samples of a run.

    ``records`` holds one dict per sample: always ``t``, ``xi``, ``eta`` and
    ``E_at_xi`` (field at the charge), plus whatever the observers return.
    """

    eps: float
    gamma: float
    weights: np.ndarray
    blob: BlobParams
    dt: float
    stride: int
    records: list[dict] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    final: VPState | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.records])

    def channel(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    @property
    def xi(self) -> np.ndarray:
        return self.channel("xi").reshape(-1, 2)

    @property
    def eta(self) -> np.ndarray:
        return self.channel("eta").reshape(-1, 2)


Observer = Callable[[VPState], dict]


def run(
    state: VPState,
    t_end: float,
    dt: float,
    observers: Sequence[Observer] = (),
    *,
    stride: int = 1,
    checkpoints: Iterable[float] = (),
    keep_snapshots: bool = False,
    c_rot: float | None = DEFAULT_C_ROT,
    couple_charge: bool = True,
    freeze_charge: bool = False,
) -> Trajectory:
    """Integrate to ``t_end``, sampling every ``stride`` steps and at checkpoints.

    Each segment between consecutive checkpoints is split into equal steps no
    longer than ``dt``, so checkpoints and ``t_end`` are hit exactly. With
    ``c_rot`` set, ``dt`` may not exceed ``c_rot * eps**2``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if c_rot is not None and dt > max_time_step(state.eps, c_rot) * (1 + 1e-12):
        raise ValueError(f"dt = {dt} exceeds c_rot * eps^2 = {max_time_step(state.eps, c_rot)}")
    if t_end < state.t:
        raise ValueError("t_end precedes the state time")
    traj = Trajectory(eps=state.eps, gamma=state.charge.gamma, weights=state.w.copy(),
                      blob=state.blob, dt=dt, stride=stride)
    cached = forces(state, couple_charge)

    def record(s: VPState, E_xi: np.ndarray) -> None:
        rec = {"t": s.t, "xi": s.charge.xi.copy(), "eta": s.charge.eta.copy(), "E_at_xi": E_xi.copy()}
        for obs in observers:
            rec.update(obs(s))
        traj.records.append(rec)
        if keep_snapshots:
            traj.snapshots.append(Snapshot(s.t, s.x.copy(), s.v.copy(), s.charge.xi.copy(), s.charge.eta.copy()))

    if t_end == state.t:
        traj.final = state
        return traj

    record(state, cached[1])
    stops = sorted({float(c) for c in checkpoints if state.t < c < t_end} | {float(t_end)})
    k = 0
    t_seg = state.t
    for stop in stops:
        span = stop - t_seg
        n = max(1, math.ceil(span / dt - 1e-9))
        h = span / n
        for j in range(n):
            try:
                state, cached = _step(state, h, cached, couple_charge, freeze_charge)
            except SimulationError as exc:
                if exc.t is None:
                    exc.t = state.t
                raise
            k += 1
            if j == n - 1:
                # land exactly on the segment end
                state = replace(state, t=stop)
            if k % stride == 0 or j == n - 1:
                record(state, cached[1])
        t_seg = stop
    traj.final = state
    return traj
