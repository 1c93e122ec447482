"""Closed paths in R-space at fixed Gamma, the degeneracy circle, and path topology.

Two levels coincide where ``R**2 = Gamma**2 / 4`` and ``R . Gamma = 0``: a
circle of radius ``|Gamma|/2`` centred at the origin in the plane normal to
Gamma.  Loops are classified by their winding ``W`` about the Gamma axis and
their linking number ``L`` with that circle.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .errors import (
    AmbiguousCrossingError,
    InvalidArgumentError,
    InvalidSpecError,
    LocusDegenerateError,
    LoopTooCloseError,
    WindingUndefinedError,
)
from .spectral import ParameterPoint, aligned_coordinates

MIN_SAMPLES = 8


def _vec3(value, name):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidSpecError(f"{name} must be a finite real 3-vector, got {value!r}")
    return arr


class LoopSpec:
    """A closed path ``R(t)``, ``t`` in [0, 1], at fixed Gamma and energy offset.

    Subclasses provide :meth:`position` and :meth:`velocity` (derivative with
    respect to ``t``), both vectorised over ``t``.
    """

    gamma: np.ndarray
    E_offset: complex

    def position(self, t):
        raise NotImplementedError

    def velocity(self, t):
        raise NotImplementedError

    @property
    def breakpoints(self):
        """Parameters where the path is not smooth (always includes 0 and 1)."""
        return np.array([0.0, 1.0])

    def reversed(self) -> "LoopSpec":
        return ReversedLoop(self)

    def with_gamma(self, gamma) -> "LoopSpec":
        raise NotImplementedError


class Circle3D(LoopSpec):
    """Circle ``center + radius (cos a u + sin a v)``, ``a = 2 pi turns t + phase0``.

    ``(u, v, normal)`` is right-handed, so the circle runs counter-clockwise
    seen from the tip of ``normal``.  ``u`` is the projection of the x axis
    onto the plane (the y axis if ``normal`` is along x).
    """

    def __init__(self, center, radius, normal, gamma, E_offset=0.0, phase0=0.0, turns=1):
        self.center = _vec3(center, "center")
        self.radius = float(radius)
        if not self.radius > 0:
            raise InvalidSpecError(f"radius must be positive, got {radius}")
        n = _vec3(normal, "normal")
        nn = np.linalg.norm(n)
        if nn == 0:
            raise InvalidSpecError("normal must be non-zero")
        self.normal = n / nn
        self.gamma = _vec3(gamma, "gamma")
        self.E_offset = complex(E_offset)
        self.phase0 = float(phase0)
        self.turns = int(turns)
        if self.turns == 0:
            raise InvalidSpecError("turns must be non-zero")
        x = np.array([1.0, 0.0, 0.0])
        if abs(self.normal @ x) > 0.9:
            x = np.array([0.0, 1.0, 0.0])
        u = x - (x @ self.normal) * self.normal
        self.u = u / np.linalg.norm(u)
        self.v = np.cross(self.normal, self.u)

    def _angle(self, t):
        return 2 * np.pi * self.turns * np.asarray(t, dtype=float) + self.phase0

    def position(self, t):
        a = self._angle(t)[..., None]
        return self.center + self.radius * (np.cos(a) * self.u + np.sin(a) * self.v)

    def velocity(self, t):
        a = self._angle(t)[..., None]
        w = 2 * np.pi * self.turns * self.radius
        return w * (-np.sin(a) * self.u + np.cos(a) * self.v)

    def with_gamma(self, gamma):
        return Circle3D(self.center, self.radius, self.normal, gamma, self.E_offset,
                        self.phase0, self.turns)

    def __repr__(self):
        return (f"Circle3D(center={self.center.tolist()}, radius={self.radius}, "
                f"normal={self.normal.tolist()}, turns={self.turns})")


class PolyPath(LoopSpec):
    """Closed polygon; the first and last vertices must coincide.

    The parameter runs proportionally to arc length.
    """

    def __init__(self, vertices, gamma, E_offset=0.0):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 4:
            raise InvalidSpecError("PolyPath needs at least 4 vertices (3 distinct + closure) of 3 components")
        if not np.all(np.isfinite(v)):
            raise InvalidSpecError("PolyPath vertices must be finite")
        if not np.array_equal(v[0], v[-1]):
            raise InvalidSpecError("PolyPath is not closed: first vertex differs from last")
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        if np.any(seg == 0):
            raise InvalidSpecError("PolyPath has repeated consecutive vertices")
        self.vertices = v
        self.gamma = _vec3(gamma, "gamma")
        self.E_offset = complex(E_offset)
        self._knots = np.concatenate(([0.0], np.cumsum(seg) / seg.sum()))
        self._knots[-1] = 1.0

    @property
    def breakpoints(self):
        return self._knots.copy()

    def _segment(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self._knots, t, side="right") - 1, 0, len(self._knots) - 2)
        return t, k

    def position(self, t):
        t, k = self._segment(t)
        t0, t1 = self._knots[k], self._knots[k + 1]
        w = ((t - t0) / (t1 - t0))[..., None]
        return self.vertices[k] * (1 - w) + self.vertices[k + 1] * w

    def velocity(self, t):
        t, k = self._segment(t)
        dt = (self._knots[k + 1] - self._knots[k])[..., None]
        return (self.vertices[k + 1] - self.vertices[k]) / dt

    def with_gamma(self, gamma):
        return PolyPath(self.vertices, gamma, self.E_offset)


class Parametric(LoopSpec):
    """Closed loop through a table of samples, interpolated by a periodic cubic spline.

    ``table`` has shape (M, 3) with rows ``R``, or (M, 6) with rows
    ``(R, Gamma)``; in the latter case Gamma must be the same on every row.
    A repeated closing row is optional.
    """

    def __init__(self, table, gamma=None, E_offset=0.0):
        a = np.asarray(table, dtype=float)
        if a.ndim != 2 or a.shape[1] not in (3, 6):
            raise InvalidSpecError("sample table must have 3 or 6 columns")
        if not np.all(np.isfinite(a)):
            raise InvalidSpecError("sample table must be finite")
        if a.shape[1] == 6:
            g = a[:, 3:]
            if not np.all(g == g[0]):
                raise InvalidSpecError("Gamma must stay fixed along the loop")
            if gamma is not None and not np.array_equal(_vec3(gamma, "gamma"), g[0]):
                raise InvalidSpecError("Gamma column disagrees with the gamma argument")
            gamma = g[0]
            a = a[:, :3]
        if gamma is None:
            raise InvalidSpecError("gamma is required")
        if not np.array_equal(a[0], a[-1]):
            a = np.vstack([a, a[:1]])
        if len(a) < 5:
            raise InvalidSpecError("sample table needs at least 4 distinct points")
        self.table = a
        self.gamma = _vec3(gamma, "gamma")
        self.E_offset = complex(E_offset)
        self._spline = CubicSpline(np.linspace(0.0, 1.0, len(a)), a, bc_type="periodic")
        self._dspline = self._spline.derivative()

    def position(self, t):
        return self._spline(np.mod(np.asarray(t, dtype=float), 1.0))

    def velocity(self, t):
        return self._dspline(np.mod(np.asarray(t, dtype=float), 1.0))

    def with_gamma(self, gamma):
        return Parametric(self.table, gamma, self.E_offset)


class ReversedLoop(LoopSpec):
    def __init__(self, base: LoopSpec):
        self.base = base
        self.gamma = base.gamma
        self.E_offset = base.E_offset

    def position(self, t):
        return self.base.position(1.0 - np.asarray(t, dtype=float))

    def velocity(self, t):
        return -self.base.velocity(1.0 - np.asarray(t, dtype=float))

    @property
    def breakpoints(self):
        return np.sort(1.0 - self.base.breakpoints)

    def reversed(self):
        return self.base

    def with_gamma(self, gamma):
        return ReversedLoop(self.base.with_gamma(gamma))


class PathLabel(enum.Enum):
    TRIVIAL = "Trivial"
    KIND_I = "KindI"
    KIND_II = "KindII"
    MIXED = "Mixed"


@dataclass(frozen=True)
class PathClass:
    winding: int
    linking: int
    label: PathLabel = field(init=False)

    def __post_init__(self):
        if self.winding == 0 and self.linking == 0:
            label = PathLabel.TRIVIAL
        elif self.linking == 0:
            label = PathLabel.KIND_I
        elif self.winding == 0:
            label = PathLabel.KIND_II
        else:
            label = PathLabel.MIXED
        object.__setattr__(self, "label", label)


@dataclass(frozen=True)
class SampledLoop:
    """``N`` samples ``R(t_k)``, ``t_k = k/N``; sample ``N`` is sample 0 again."""

    spec: LoopSpec
    t: np.ndarray
    R: np.ndarray
    min_degeneracy_distance: float

    @property
    def N(self) -> int:
        return len(self.t)

    @property
    def gamma(self):
        return self.spec.gamma

    @property
    def E_offset(self):
        return self.spec.E_offset

    @property
    def points(self):
        return [ParameterPoint(r, self.gamma, self.E_offset) for r in self.R]

    @property
    def closed_R(self):
        return np.vstack([self.R, self.R[:1]])

    def reversed(self) -> "SampledLoop":
        rev = self.spec.reversed()
        # sample k of the reversed loop sits at t = k/N, i.e. original t = 1 - k/N
        R = np.vstack([self.R[:1], self.R[:0:-1]])
        return SampledLoop(rev, self.t.copy(), R, self.min_degeneracy_distance)

    def rolled(self, shift: int) -> "SampledLoop":
        """Same loop with the sample list cyclically re-indexed (topology only)."""
        return SampledLoop(self.spec, self.t.copy(), np.roll(self.R, -shift, axis=0),
                           self.min_degeneracy_distance)


def degeneracy_residual(point: ParameterPoint):
    """``(R^2 - Gamma^2/4, R . Gamma)``; both vanish exactly on the degeneracy locus."""
    R, G = point.R, point.Gamma
    return float(R @ R - 0.25 * (G @ G)), float(R @ G)


@dataclass(frozen=True)
class DiabolicalCircle:
    center: np.ndarray
    radius: float
    plane_normal: np.ndarray


def diabolical_circle(gamma) -> DiabolicalCircle:
    gamma = _vec3(gamma, "gamma")
    g = np.linalg.norm(gamma)
    if g == 0:
        raise LocusDegenerateError("Gamma = 0: the degeneracy locus is the single point R = 0")
    return DiabolicalCircle(np.zeros(3), 0.5 * g, gamma / g)


def distance_to_locus(R, gamma):
    """Euclidean distance from each R to the degeneracy circle (or to the origin when Gamma = 0)."""
    X, Y, Z, g = aligned_coordinates(R, gamma)
    rho = np.hypot(X, Y)
    return np.hypot(rho - 0.5 * g, Z)


def default_min_dist(gamma) -> float:
    g = float(np.linalg.norm(gamma))
    return 1e-3 * g if g > 0 else 1e-3


def sample_loop(spec: LoopSpec, N: int, min_dist: Optional[float] = None) -> SampledLoop:
    """Sample ``spec`` at ``N`` equally spaced parameters and check its clearance.

    The clearance to the degeneracy locus is found by a dense scan at
    ``16 N`` parameters followed by a bounded 1-D minimisation around the
    closest scan point.
    """
    N = int(N)
    if N < MIN_SAMPLES:
        raise InvalidArgumentError(f"N must be >= {MIN_SAMPLES}, got {N}")
    if min_dist is None:
        min_dist = default_min_dist(spec.gamma)
    if not min_dist > 0:
        raise InvalidArgumentError(f"min_dist must be positive, got {min_dist}")
    start, end = spec.position(np.array([0.0, 1.0]))
    if not np.allclose(start, end, rtol=0, atol=1e-12 * (1 + np.abs(start).max())):
        raise InvalidSpecError("loop does not close: R(0) != R(1)")

    t = np.arange(N) / N
    R = spec.position(t)

    dense_t = np.arange(16 * N) / (16 * N)
    d = distance_to_locus(spec.position(dense_t), spec.gamma)
    k = int(np.argmin(d))
    h = 1.0 / (16 * N)
    res = minimize_scalar(
        lambda s: float(distance_to_locus(spec.position(np.array([s])), spec.gamma)[0]),
        bounds=(dense_t[k] - h, dense_t[k] + h),
        method="bounded",
        options={"xatol": 1e-12},
    )
    dmin, tmin = float(d[k]), float(dense_t[k])
    if res.fun < dmin:
        dmin, tmin = float(res.fun), float(res.x) % 1.0
    if dmin < min_dist:
        raise LoopTooCloseError(
            f"loop comes within {dmin:.3g} of the degeneracy locus (R^2 = Gamma^2/4, "
            f"R.Gamma = 0) at t = {tmin:.6g}; minimum allowed distance is {min_dist:.3g}",
            parameter=tmin,
            distance=dmin,
        )
    return SampledLoop(spec, t, R, dmin)


def azimuth_increments(loop: SampledLoop):
    """Per-step azimuth changes about the Gamma axis, each wrapped to (-pi, pi]."""
    X, Y, _, _ = aligned_coordinates(loop.closed_R, loop.gamma)
    rho = np.hypot(X, Y)
    scale = max(1.0, float(np.abs(loop.R).max()))
    if rho.min() <= 1e-12 * scale:
        raise WindingUndefinedError("loop passes through the Gamma axis; winding is undefined")
    dphi = np.diff(np.arctan2(Y, X))
    dphi = np.pi - np.mod(np.pi - dphi, 2 * np.pi)
    if np.abs(dphi).max() > 0.9 * np.pi:
        raise WindingUndefinedError(
            "loop passes within sampling resolution of the Gamma axis; winding is undefined (refine N)"
        )
    return dphi


def winding_number(loop: SampledLoop) -> int:
    turns = float(np.sum(azimuth_increments(loop))) / (2 * np.pi)
    w = int(round(turns))
    if abs(turns - w) >= 1e-6:
        raise WindingUndefinedError(f"azimuth sum is not an integer number of turns: {turns}")
    return w


def linking_number(loop: SampledLoop) -> int:
    """Signed crossings of the open disk spanning the degeneracy circle.

    A crossing in the +Gamma direction counts +1.  Samples with ``Z >= 0``
    count as above the plane, so a segment touching the plane is counted once.
    """
    gmag = float(np.linalg.norm(loop.gamma))
    if gmag == 0:
        raise LocusDegenerateError("Gamma = 0: no degeneracy circle to link with")
    X, Y, Z, _ = aligned_coordinates(loop.closed_R, loop.gamma)
    radius = 0.5 * gmag
    above = Z >= 0
    total = 0
    for k in np.flatnonzero(above[:-1] != above[1:]):
        s = Z[k] / (Z[k] - Z[k + 1])
        rho = np.hypot(X[k] + s * (X[k + 1] - X[k]), Y[k] + s * (Y[k + 1] - Y[k]))
        if abs(rho - radius) < 1e-9:
            raise AmbiguousCrossingError(
                f"segment {k} crosses the plane within 1e-9 of the degeneracy circle; refine N"
            )
        if rho < radius:
            total += 1 if Z[k + 1] > Z[k] else -1
    return total


def classify_path(loop: SampledLoop) -> PathClass:
    return PathClass(winding_number(loop), linking_number(loop))


class StaticPoint(LoopSpec):
    """Degenerate "loop" that stays at one point; useful as a null drive."""

    def __init__(self, R, gamma, E_offset=0.0):
        self.R = _vec3(R, "R")
        self.gamma = _vec3(gamma, "gamma")
        self.E_offset = complex(E_offset)

    def position(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.R, t.shape + (3,)).copy()

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        return np.zeros(t.shape + (3,))

    def with_gamma(self, gamma):
        return StaticPoint(self.R, gamma, self.E_offset)
