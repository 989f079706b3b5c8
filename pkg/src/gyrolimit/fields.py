"""Self-consistent field ``E = x/|x|^2 * rho``, the point-charge field, and log energies.

The kernel carries no ``1/(2 pi)`` factor. The regularized kernel is
``K_delta(z) = z / (|z|^2 + delta^2)``; ``delta = 0`` gives the sharp kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._parallel import for_chunks
from .measures import WeightedMeasure


class SingularityError(ValueError):
    """Raised when a sharp kernel is evaluated at zero separation."""


@dataclass(frozen=True)
class BlobParams:
    delta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta >= 0.0):
            raise ValueError(f"blob delta must be finite and >= 0, got {self.delta}")

    @property
    def mode(self) -> str:
        return "sharp" if self.delta == 0.0 else "blob"


SHARP = BlobParams(0.0)


def _xy(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1])


def field_at(rho: WeightedMeasure, targets: np.ndarray, blob: BlobParams = SHARP) -> np.ndarray:
    """Field of ``rho`` at an ``(M, 2)`` array of target points."""
    tx, ty = _xy(targets)
    sx, sy = _xy(rho.points)
    ex = np.zeros_like(tx)
    ey = np.zeros_like(ty)
    d2 = blob.delta**2
    bad = for_chunks(
        tx.shape[0],
        lambda i0, i1: _kernels.field_block(tx, ty, sx, sy, rho.weights, d2, False, i0, i1, ex, ey),
    )
    if bad >= 0:
        raise SingularityError(f"sharp field evaluated on a source point (target {bad})")
    return np.stack([ex, ey], axis=1)


def self_field(rho: WeightedMeasure, blob: BlobParams = SHARP) -> np.ndarray:
    """Field of ``rho`` at each of its own atoms, the atom itself excluded."""
    sx, sy = _xy(rho.points)
    ex = np.zeros_like(sx)
    ey = np.zeros_like(sy)
    d2 = blob.delta**2
    bad = for_chunks(
        sx.shape[0],
        lambda i0, i1: _kernels.field_block(sx, sy, sx, sy, rho.weights, d2, True, i0, i1, ex, ey),
    )
    if bad >= 0:
        raise SingularityError(f"two atoms coincide in sharp mode (atom {bad})")
    return np.stack([ex, ey], axis=1)


def coulomb_field(
    rho: WeightedMeasure,
    x,
    blob: BlobParams = SHARP,
    exclude_index: int | None = None,
) -> np.ndarray:
    """Field ``sum_{j != exclude} w_j K_delta(x - x_j)`` at a single point ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(2)
    if exclude_index is not None:
        if not 0 <= exclude_index < len(rho):
            raise IndexError(f"exclude_index {exclude_index} out of range for {len(rho)} atoms")
        keep = np.ones(len(rho), dtype=bool)
        keep[exclude_index] = False
        rho = WeightedMeasure(rho.points[keep], rho.weights[keep])
    return field_at(rho, x[None, :], blob)[0]


def charge_field(x, xi, gamma: float) -> np.ndarray:
    """Point-charge field ``gamma (x - xi)/|x - xi|^2`` at one point or an ``(M, 2)`` array."""
    x = np.asarray(x, dtype=np.float64)
    z = x - np.asarray(xi, dtype=np.float64)
    r = np.hypot(z[..., 0], z[..., 1])
    if np.any(r == 0.0):
        raise SingularityError("charge field evaluated at the charge position")
    # divide twice by |z| so that |z|^2 never underflows
    return gamma * (z / r[..., None]) / r[..., None]


def log_interaction_energy(
    rho: WeightedMeasure,
    mu: WeightedMeasure,
    blob: BlobParams = SHARP,
    skip_diagonal: bool = False,
) -> float:
    """Raw ``sum_i sum_j w_i m_j ln sqrt(|x_i - y_j|^2 + delta^2)``.

    With ``skip_diagonal`` the pairs ``i == j`` are dropped, which is the
    self-energy convention when ``rho`` and ``mu`` are the same measure.
    """
    if skip_diagonal and len(rho) != len(mu):
        raise ValueError("skip_diagonal requires measures of equal length")
    ax, ay = _xy(rho.points)
    bx, by = _xy(mu.points)
    out = np.zeros_like(ax)
    d2 = blob.delta**2
    bad = for_chunks(
        ax.shape[0],
        lambda i0, i1: _kernels.log_block(ax, ay, bx, by, mu.weights, d2, skip_diagonal, i0, i1, out),
    )
    if bad >= 0:
        raise SingularityError(f"coincident atoms in sharp log energy (atom {bad})")
    return float(np.sum(rho.weights * out))
