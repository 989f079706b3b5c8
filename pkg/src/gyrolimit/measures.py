"""Atomic positive measures on the plane and the functionals acting on them.

Contents:

* :class:`WeightedMeasure` -- points with positive weights.
* :class:`TestFunction` and two concrete families: the analytic :class:`Bump`
  ``A (1 - |x - c|^2 / R^2)^4`` (C^3, compact support) and
  :class:`SymbolicTestFunction` built from a sympy expression.
* :class:`TestDictionary` -- a finite family of W^{3,inf}-normalized bumps used
  as a surrogate for a negative-order Sobolev dual norm.
* The symmetrized bilinear form ``H_Phi[rho, mu]`` and related estimators.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy
from scipy import optimize

from . import _kernels
from ._parallel import for_chunks


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedMeasure:
    points: np.ndarray
    weights: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 2))
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64).reshape(-1))
        if pts.shape[0] != w.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValueError("measure contains non-finite values")
        if np.any(w <= 0.0):
            raise ValueError("all weights must be > 0")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total_mass", math.fsum(w))

    @classmethod
    def empty(cls) -> WeightedMeasure:
        return cls(np.zeros((0, 2)), np.zeros(0))

    @classmethod
    def dirac(cls, point, weight: float = 1.0) -> WeightedMeasure:
        return cls(np.asarray(point, dtype=np.float64).reshape(1, 2), [weight])

    def __len__(self) -> int:
        return self.weights.shape[0]

    def concat(self, other: WeightedMeasure) -> WeightedMeasure:
        return WeightedMeasure(
            np.concatenate([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
        )

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """``int fn d(self)`` for a vectorized ``fn`` on ``(n, 2)`` arrays."""
        if len(self) == 0:
            return 0.0
        return float(np.sum(self.weights * fn(self.points)))


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------


class TestFunction:
    """Compactly supported C^3 function with derivatives up to order three.

    Subclasses implement ``value``, ``grad``, ``hess`` and ``third`` on
    ``(n, 2)`` arrays and the per-order sup norms ``order_sup(j)``.
    Tensor magnitudes are Frobenius norms.
    """

    __test__ = False  # not a pytest class

    center: np.ndarray
    support_radius: float

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def third(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def order_sup(self, order: int) -> float:
        raise NotImplementedError

    def norm(self, k: int) -> float:
        """``||Phi||_{W^{k,inf}}``: the largest sup norm among orders ``0..k``."""
        if not 0 <= k <= 3:
            raise ValueError("only orders 0..3 are available")
        return max(self.order_sup(j) for j in range(k + 1))

    def hess_perp(self, x: np.ndarray) -> np.ndarray:
        """Jacobian of the rotated gradient ``(-d2 Phi, d1 Phi)``."""
        h = self.hess(x)
        out = np.empty_like(h)
        out[..., 0, :] = -h[..., 1, :]
        out[..., 1, :] = h[..., 0, :]
        return out

    def __call__(self, x) -> np.ndarray:
        return self.value(x)


def _pts(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1, 2)


@functools.lru_cache(maxsize=1)
def _unit_bump_sups() -> tuple[float, float, float, float]:
    # Magnitudes of every derivative order are radial for the bump; maximize the
    # unit profile on s in [0, 1] by dense sampling then bounded refinement.
    unit = Bump((0.0, 0.0), 1.0, 1.0, _sups=(1.0, 1.0, 1.0, 1.0))
    fns = [
        lambda s: np.abs(unit.value(np.array([[s, 0.0]])))[0],
        lambda s: np.linalg.norm(unit.grad(np.array([[s, 0.0]]))[0]),
        lambda s: np.linalg.norm(unit.hess(np.array([[s, 0.0]]))[0]),
        lambda s: np.linalg.norm(unit.third(np.array([[s, 0.0]]))[0]),
    ]
    grid = np.linspace(0.0, 1.0, 4001)
    sups = []
    for fn in fns:
        vals = np.array([fn(s) for s in grid])
        k = int(np.argmax(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        res = optimize.minimize_scalar(lambda s: -fn(s), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        sups.append(max(vals[k], -res.fun) * (1.0 + 1e-9))
    return tuple(sups)


class Bump(TestFunction):
    """``A (1 - |x - c|^2 / R^2)^4`` inside ``|x - c| < R``, zero outside."""

    def __init__(self, center, radius: float, amplitude: float = 1.0, *, _sups=None):
        if not radius > 0:
            raise ValueError("bump radius must be > 0")
        self.center = np.asarray(center, dtype=np.float64).reshape(2)
        self.support_radius = float(radius)
        self.amplitude = float(amplitude)
        self._sups = _sups

    def _zq(self, x):
        z = _pts(x) - self.center
        q = 1.0 - np.sum(z * z, axis=1) / self.support_radius**2
        q = np.where(q > 0.0, q, 0.0)
        return z, q

    def value(self, x):
        _, q = self._zq(x)
        return self.amplitude * q**4

    def grad(self, x):
        z, q = self._zq(x)
        R2 = self.support_radius**2
        return (-8.0 * self.amplitude / R2 * q**3)[:, None] * z

    def hess(self, x):
        z, q = self._zq(x)
        A, R2 = self.amplitude, self.support_radius**2
        eye = np.eye(2)[None, :, :]
        return ((-8.0 * A / R2 * q**3)[:, None, None] * eye
                + (48.0 * A / R2**2 * q**2)[:, None, None] * z[:, :, None] * z[:, None, :])

    def third(self, x):
        z, q = self._zq(x)
        A, R2 = self.amplitude, self.support_radius**2
        d = np.eye(2)
        sym = (np.einsum("nk,ij->nijk", z, d) + np.einsum("ni,jk->nijk", z, d)
               + np.einsum("nj,ik->nijk", z, d))
        zzz = np.einsum("ni,nj,nk->nijk", z, z, z)
        return ((48.0 * A / R2**2 * q**2)[:, None, None, None] * sym
                - (192.0 * A / R2**3 * q)[:, None, None, None] * zzz)

    def order_sup(self, order):
        sups = self._sups if self._sups is not None else _unit_bump_sups()
        return abs(self.amplitude) * sups[order] / self.support_radius**order


X1, X2 = sympy.symbols("x1 x2", real=True)


def smooth_cutoff(r_plateau: float, r_support: float, center=(0.0, 0.0)) -> sympy.Expr:
    """C^3 radial cutoff: 1 on ``|x - c| <= r_plateau``, 0 beyond ``r_support``."""
    if not 0 < r_plateau < r_support:
        raise ValueError("need 0 < r_plateau < r_support")
    c1, c2 = (sympy.Float(float(c)) for c in center)
    r2 = (X1 - c1) ** 2 + (X2 - c2) ** 2
    a2, b2 = sympy.Float(r_plateau**2), sympy.Float(r_support**2)
    u = (b2 - r2) / (b2 - a2)
    step = 35 * u**4 - 84 * u**5 + 70 * u**6 - 20 * u**7
    return sympy.Piecewise((sympy.Integer(1), r2 <= a2), (step, r2 < b2), (sympy.Integer(0), True))


class SymbolicTestFunction(TestFunction):
    """Test function given as a sympy expression in ``X1, X2``.

    The expression must vanish with its derivatives outside the disk of radius
    ``support_radius`` about ``center``; multiply by :func:`smooth_cutoff` to
    localize a polynomial. Sup norms are found by sampling the support disk and
    refining the best candidates with a local optimizer.
    """

    def __init__(self, expr: sympy.Expr, support_radius: float, center=(0.0, 0.0)):
        self.expr = expr
        self.center = np.asarray(center, dtype=np.float64).reshape(2)
        self.support_radius = float(support_radius)
        v = (X1, X2)
        g = [sympy.diff(expr, a) for a in v]
        h = [[sympy.diff(gi, b) for b in v] for gi in g]
        t = [[[sympy.diff(hij, c) for c in v] for hij in hi] for hi in h]
        self._f = sympy.lambdify(v, expr, "numpy")
        self._g = [sympy.lambdify(v, e, "numpy") for e in g]
        self._h = [[sympy.lambdify(v, e, "numpy") for e in row] for row in h]
        self._t = [[[sympy.lambdify(v, e, "numpy") for e in r2] for r2 in r1] for r1 in t]
        self._sups: dict[int, float] = {}

    @staticmethod
    def _ev(fn, p):
        return np.broadcast_to(np.asarray(fn(p[:, 0], p[:, 1]), dtype=np.float64), (p.shape[0],))

    def value(self, x):
        return self._ev(self._f, _pts(x)).copy()

    def grad(self, x):
        p = _pts(x)
        return np.stack([self._ev(f, p) for f in self._g], axis=-1)

    def hess(self, x):
        p = _pts(x)
        return np.stack([np.stack([self._ev(f, p) for f in row], axis=-1) for row in self._h], axis=-2)

    def third(self, x):
        p = _pts(x)
        return np.stack(
            [np.stack([np.stack([self._ev(f, p) for f in r2], axis=-1) for r2 in r1], axis=-2)
             for r1 in self._t],
            axis=-3,
        )

    def _magnitude(self, order: int, p: np.ndarray) -> np.ndarray:
        if order == 0:
            return np.abs(self.value(p))
        ev = (self.grad, self.hess, self.third)[order - 1](p)
        return np.sqrt(np.sum(ev.reshape(p.shape[0], -1) ** 2, axis=1))

    def order_sup(self, order):
        if order not in self._sups:
            R = self.support_radius
            rr = R * np.sqrt(np.linspace(0.0, 1.0, 201))
            th = np.linspace(0.0, 2 * np.pi, 256, endpoint=False)
            pts = self.center + np.stack(
                [np.outer(rr, np.cos(th)).ravel(), np.outer(rr, np.sin(th)).ravel()], axis=1)
            mags = self._magnitude(order, pts)
            best = float(mags.max())
            for k in np.argsort(mags)[-5:]:
                res = optimize.minimize(lambda p: -self._magnitude(order, p[None, :])[0], pts[k],
                                        method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
                best = max(best, -float(res.fun))
            self._sups[order] = best * (1.0 + 1e-9)
        return self._sups[order]


# ---------------------------------------------------------------------------
# Dictionary of normalized bumps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestDictionary:
    """Bumps on a square grid of centers, one per (center, width), with W^{3,inf} norm 1."""

    __test__ = False

    extent: float = 2.0
    spacing: float = 0.5
    widths: tuple[float, ...] = (0.5, 1.0)
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (self.extent >= 0 and self.spacing > 0 and self.widths):
            raise ValueError("dictionary needs extent >= 0, spacing > 0 and at least one width")
        if any(w <= 0 for w in self.widths):
            raise ValueError("dictionary widths must be > 0")

    @functools.cached_property
    def _arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = int(math.floor(self.extent / self.spacing + 1e-9))
        axis = self.spacing * np.arange(-n, n + 1)
        gx, gy = np.meshgrid(axis + self.center[0], axis + self.center[1], indexing="ij")
        grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
        centers, radii, amps = [], [], []
        for R in self.widths:
            norm3 = Bump((0.0, 0.0), R, 1.0).norm(3)
            centers.append(grid)
            radii.append(np.full(len(grid), R))
            amps.append(np.full(len(grid), 1.0 / norm3))
        return np.concatenate(centers), np.concatenate(radii), np.concatenate(amps)

    def __len__(self) -> int:
        return len(self._arrays[1])

    @property
    def members(self) -> list[Bump]:
        c, r, a = self._arrays
        return [Bump(ci, ri, ai) for ci, ri, ai in zip(c, r, a)]

    def integrals(self, rho: WeightedMeasure) -> np.ndarray:
        """Vector of ``int Phi_k d rho`` over all members."""
        c, r, a = self._arrays
        out = np.zeros(len(r))
        if len(rho) == 0:
            return out
        for k0 in range(0, len(r), 32):
            sl = slice(k0, k0 + 32)
            z = rho.points[None, :, :] - c[sl, None, :]
            q = 1.0 - np.sum(z * z, axis=2) / r[sl, None] ** 2
            q = np.where(q > 0.0, q, 0.0)
            out[sl] = a[sl] * np.sum(rho.weights[None, :] * q**4, axis=1)
        return out


# ---------------------------------------------------------------------------
# Symmetrized nonlinearity and estimators
# ---------------------------------------------------------------------------


def h_phi_pair(phi: TestFunction, x, y) -> float:
    """``(x - y)^perp / |x - y|^2 . (grad Phi(x) - grad Phi(y))``, zero on the diagonal."""
    x = np.asarray(x, dtype=np.float64).reshape(2)
    y = np.asarray(y, dtype=np.float64).reshape(2)
    d = x - y
    r2 = float(d @ d)
    if r2 == 0.0:
        return 0.0
    g = phi.grad(np.stack([x, y]))
    dg = g[0] - g[1]
    return float((-d[1] * dg[0] + d[0] * dg[1]) / r2)


def h_phi_bilinear(phi: TestFunction, rho: WeightedMeasure, mu: WeightedMeasure,
                   delta: float = 0.0) -> float:
    """``1/2 sum_i sum_j w_i m_j H_Phi(x_i, y_j)``; coincident pairs contribute 0.

    ``delta > 0`` replaces ``(x-y)^perp/|x-y|^2`` by ``(x-y)^perp/(|x-y|^2+delta^2)``,
    the form matching dynamics driven by the regularized kernel.
    """
    if len(rho) == 0 or len(mu) == 0:
        return 0.0
    ga = np.ascontiguousarray(phi.grad(rho.points))
    gb = np.ascontiguousarray(phi.grad(mu.points))
    ax, ay = np.ascontiguousarray(rho.points[:, 0]), np.ascontiguousarray(rho.points[:, 1])
    bx, by = np.ascontiguousarray(mu.points[:, 0]), np.ascontiguousarray(mu.points[:, 1])
    agx, agy = np.ascontiguousarray(ga[:, 0]), np.ascontiguousarray(ga[:, 1])
    bgx, bgy = np.ascontiguousarray(gb[:, 0]), np.ascontiguousarray(gb[:, 1])
    out = np.zeros(len(rho))
    d2 = float(delta) ** 2
    for_chunks(len(rho), lambda i0, i1: _kernels.hphi_block(
        ax, ay, agx, agy, bx, by, mu.weights, bgx, bgy, d2, i0, i1, out))
    return 0.5 * float(np.sum(rho.weights * out))


def symmetrization_check(phi: TestFunction, rho: WeightedMeasure, delta_blob: float) -> tuple[float, float]:
    """Both sides of ``<div(E^perp rho), Phi> = -H_Phi[rho, rho]`` for an atomic ``rho``.

    ``lhs = -sum_i w_i E(x_i)^perp . grad Phi(x_i)`` with the blob field (own
    atom excluded); ``rhs = -H_Phi[rho, rho]`` with the sharp kernel.
    """
    from .fields import BlobParams, self_field

    if not delta_blob > 0:
        raise ValueError("delta_blob must be > 0")
    if len(rho) == 0:
        return 0.0, 0.0
    E = self_field(rho, BlobParams(delta_blob))
    g = phi.grad(rho.points)
    e_perp_dot_g = -E[:, 1] * g[:, 0] + E[:, 0] * g[:, 1]
    lhs = -float(np.sum(rho.weights * e_perp_dot_g))
    rhs = -h_phi_bilinear(phi, rho, rho)
    return lhs, rhs


def dual_norm_distance(rho1: WeightedMeasure, rho2: WeightedMeasure, dictionary: TestDictionary) -> float:
    """``max_Phi |int Phi d rho1 - int Phi d rho2|`` over the dictionary members."""
    if len(dictionary) == 0:
        raise ValueError("empty test dictionary")
    return float(np.max(np.abs(dictionary.integrals(rho1) - dictionary.integrals(rho2))))


def concentration_modulus(rho: WeightedMeasure, r: float, centers: Sequence | np.ndarray | None = None) -> float:
    """Largest mass of a closed ball of radius ``r`` centered at a supplied point or an atom."""
    if not 0.0 < r < 0.5:
        raise ValueError(f"radius must lie in (0, 1/2), got {r}")
    if len(rho) == 0:
        return 0.0
    c = rho.points if centers is None else np.concatenate([_pts(centers), rho.points])
    cx, cy = np.ascontiguousarray(c[:, 0]), np.ascontiguousarray(c[:, 1])
    px, py = np.ascontiguousarray(rho.points[:, 0]), np.ascontiguousarray(rho.points[:, 1])
    out = np.zeros(len(c))
    r2 = r * r
    for_chunks(len(c), lambda i0, i1: _kernels.ball_mass_block(cx, cy, px, py, rho.weights, r2, i0, i1, out))
    return float(out.max())
