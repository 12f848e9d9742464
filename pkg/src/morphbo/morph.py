"""Radial-matrix shape representation and Design-by-Morphing.

A shape is a matrix of boundary radii ``R[k, j]`` measured from an origin
curve, with ``k`` indexing equally spaced polar angles in each plane
perpendicular to the curve and ``j`` indexing equally spaced arc-length
stations. Shapes sharing a grid can be morphed by a normalized weighted sum.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DimensionMismatch, GridMismatch, InvalidShape, ParseError, ZeroWeightSum

WEIGHT_BOUNDS = (-0.5, 1.0)
ZERO_SUM_TOL = 1e-12
FORMAT_VERSION = 1


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CollocationGrid:
    """Equally spaced arc-length stations and polar angles."""

    n_s: int
    n_phi: int
    arc_length: float

    def __post_init__(self):
        if int(self.n_s) != self.n_s or self.n_s < 2:
            raise GridMismatch(f"need at least 2 streamwise planes, got n_s={self.n_s}")
        if int(self.n_phi) != self.n_phi or self.n_phi < 3:
            raise GridMismatch(f"need at least 3 polar angles, got n_phi={self.n_phi}")
        if not (np.isfinite(self.arc_length) and self.arc_length > 0):
            raise GridMismatch(f"arc length must be positive, got {self.arc_length}")
        object.__setattr__(self, "n_s", int(self.n_s))
        object.__setattr__(self, "n_phi", int(self.n_phi))
        object.__setattr__(self, "arc_length", float(self.arc_length))

    @property
    def arc_positions(self):
        return np.linspace(0.0, self.arc_length, self.n_s)

    @property
    def angles(self):
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    @property
    def ds(self):
        return self.arc_length / (self.n_s - 1)

    @property
    def dphi(self):
        return 2.0 * np.pi / self.n_phi

    @property
    def shape(self):
        return (self.n_phi, self.n_s)


def _rotation_minimizing_frames(points, tangents, u0):
    """Transport ``u0`` along the curve by the double-reflection method."""
    n = len(points)
    us = np.empty((n, 3))
    u = u0 - np.dot(u0, tangents[0]) * tangents[0]
    us[0] = u / np.linalg.norm(u)
    for i in range(n - 1):
        v1 = points[i + 1] - points[i]
        c1 = v1 @ v1
        if c1 < 1e-300:
            us[i + 1] = us[i]
            continue
        rL = us[i] - (2.0 / c1) * (v1 @ us[i]) * v1
        tL = tangents[i] - (2.0 / c1) * (v1 @ tangents[i]) * v1
        v2 = tangents[i + 1] - tL
        c2 = v2 @ v2
        r = rL if c2 < 1e-300 else rL - (2.0 / c2) * (v2 @ rL) * v2
        # re-orthonormalize against round-off drift
        r = r - (r @ tangents[i + 1]) * tangents[i + 1]
        us[i + 1] = r / np.linalg.norm(r)
    vs = np.cross(tangents, us)
    return us, vs


@dataclass(frozen=True, eq=False)
class OriginCurve:
    """Sampled origin curve with per-plane orthonormal frames.

    ``frame_u`` is the polar axis ``phi = 0`` (kept in the x-z plane for
    curves lying in that plane), ``frame_v = tangent x frame_u``.
    """

    grid: CollocationGrid
    points: np.ndarray
    tangents: np.ndarray
    frame_u: np.ndarray
    frame_v: np.ndarray
    curvature: np.ndarray

    @classmethod
    def _build(cls, grid, points, tangents, curvature, u0=(1.0, 0.0, 0.0)):
        points = np.asarray(points, dtype=float)
        tangents = np.asarray(tangents, dtype=float)
        tangents = tangents / np.linalg.norm(tangents, axis=1, keepdims=True)
        us, vs = _rotation_minimizing_frames(points, tangents, np.asarray(u0, dtype=float))
        return cls(grid, _frozen(points), _frozen(tangents), _frozen(us), _frozen(vs), _frozen(curvature))

    @classmethod
    def straight(cls, grid, start=(0.0, 0.0, 0.0), direction=(0.0, 0.0, -1.0)):
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        s = grid.arc_positions
        points = np.asarray(start, dtype=float) + s[:, None] * d
        u0 = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
        return cls._build(grid, points, np.tile(d, (grid.n_s, 1)), np.zeros(grid.n_s), u0)

    @classmethod
    def quarter_turn(cls, grid, cone_length, elbow_radius, start=(0.0, 0.0, 0.0)):
        """Vertical straight leg (-z), circular elbow, horizontal leg (+x).

        The horizontal leg gets the remaining arc length.
        """
        arc = 0.5 * np.pi * elbow_radius
        if cone_length <= 0 or elbow_radius <= 0 or cone_length + arc >= grid.arc_length:
            raise GridMismatch("quarter turn does not fit in the grid arc length")
        s = grid.arc_positions
        x0 = np.asarray(start, dtype=float)
        theta = np.clip((s - cone_length) / elbow_radius, 0.0, 0.5 * np.pi)
        points = np.empty((grid.n_s, 3))
        tangents = np.empty((grid.n_s, 3))
        curvature = np.zeros(grid.n_s)
        elbow_top = x0 + np.array([0.0, 0.0, -cone_length])
        center = elbow_top + np.array([elbow_radius, 0.0, 0.0])
        elbow_end = center + np.array([0.0, 0.0, -elbow_radius])
        for j, sj in enumerate(s):
            if sj <= cone_length:
                points[j] = x0 + np.array([0.0, 0.0, -sj])
                tangents[j] = (0.0, 0.0, -1.0)
            elif sj < cone_length + arc:
                th = theta[j]
                points[j] = center + elbow_radius * np.array([-np.cos(th), 0.0, -np.sin(th)])
                tangents[j] = (np.sin(th), 0.0, -np.cos(th))
            else:
                points[j] = elbow_end + np.array([sj - cone_length - arc, 0.0, 0.0])
                tangents[j] = (1.0, 0.0, 0.0)
            # planes bounding the elbow count as curved (conservative)
            if cone_length - 1e-12 <= sj <= cone_length + arc + 1e-12:
                curvature[j] = 1.0 / elbow_radius
        return cls._build(grid, points, tangents, curvature)

    @classmethod
    def from_points(cls, grid, points, u0=(1.0, 0.0, 0.0)):
        """Curve from samples taken at the grid's arc-length stations.

        Tangents are finite differences; curvature is the reciprocal radius of
        the circle through consecutive samples.
        """
        P = np.asarray(points, dtype=float)
        if P.shape != (grid.n_s, 3):
            raise GridMismatch(f"expected {grid.n_s} points in 3-space, got shape {P.shape}")
        T = np.gradient(P, axis=0)
        kappa = np.zeros(len(P))
        for j in range(1, len(P) - 1):
            a, b, c = P[j - 1], P[j], P[j + 1]
            area2 = np.linalg.norm(np.cross(b - a, c - a))
            denom = np.linalg.norm(b - a) * np.linalg.norm(c - b) * np.linalg.norm(c - a)
            kappa[j] = 2.0 * area2 / denom if denom > 0 else 0.0
        if len(P) > 2:
            kappa[0], kappa[-1] = kappa[1], kappa[-2]
        return cls._build(grid, P, T, kappa, u0)

    def with_grid(self, grid):
        """Same samples, relabelled with a grid of equal ``n_s`` and arc length."""
        if grid.n_s != len(self.points) or not np.isclose(grid.arc_length, self.grid.arc_length):
            raise GridMismatch("grid does not match the curve samples")
        return OriginCurve(grid, self.points, self.tangents, self.frame_u, self.frame_v, self.curvature)

    def sample(self, j):
        return self.points[j]

    @property
    def curvature_radius(self):
        with np.errstate(divide="ignore"):
            return np.where(self.curvature > 0, 1.0 / np.maximum(self.curvature, 1e-300), np.inf)


@dataclass(frozen=True, eq=False)
class RadialMatrix:
    """Boundary radii ``radii[k, j]`` on a collocation grid."""

    grid: CollocationGrid
    radii: np.ndarray

    def __post_init__(self):
        r = _frozen(self.radii)
        if r.shape != self.grid.shape:
            raise DimensionMismatch(f"radii shape {r.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "radii", r)

    def __eq__(self, other):
        return (isinstance(other, RadialMatrix) and self.grid == other.grid
                and np.array_equal(self.radii, other.radii))

    @property
    def inlet(self):
        return self.radii[:, 0]

    @property
    def top_profile(self):
        """``R[0, j]``, the radius at ``phi = 0`` along the curve."""
        return self.radii[0]

    def areas(self):
        """Polygon cross-section area at every plane."""
        return kernels.polygon_areas(self.radii, self.grid.dphi)


@dataclass(frozen=True)
class MorphWeights:
    """Six design weights: five tube weights and the first hub weight.

    The second hub weight is ``0.5 - hub_alpha1``.
    """

    tube_w: tuple
    hub_alpha1: float

    def __post_init__(self):
        w = tuple(float(v) for v in self.tube_w)
        object.__setattr__(self, "tube_w", w)
        object.__setattr__(self, "hub_alpha1", float(self.hub_alpha1))
        lo, hi = WEIGHT_BOUNDS
        tol = 1e-12
        if any(not (lo - tol <= v <= hi + tol) for v in w + (self.hub_alpha1,)):
            raise ValueError(f"weights must lie in [{lo}, {hi}], got {w + (self.hub_alpha1,)}")

    @property
    def hub_alpha(self):
        return (self.hub_alpha1, 0.5 - self.hub_alpha1)

    def as_vector(self):
        return np.array(self.tube_w + (self.hub_alpha1,))

    @classmethod
    def from_vector(cls, v, n_tube=5):
        v = [float(x) for x in v]
        if len(v) != n_tube + 1:
            raise DimensionMismatch(f"expected {n_tube + 1} weights, got {len(v)}")
        return cls(tuple(v[:n_tube]), v[n_tube])


def morph_radial(baselines, weights):
    """Morph radial matrices: ``|sum_p w_p R^p| / |sum_p w_p|`` elementwise.

    Raises
    ------
    ZeroWeightSum
        If the weights sum to (nearly) zero.
    GridMismatch
        If the baselines do not share one grid.
    """
    baselines = list(baselines)
    w = np.asarray(weights, dtype=float).ravel()
    if len(baselines) == 0 or w.size != len(baselines):
        raise DimensionMismatch(f"{w.size} weights for {len(baselines)} baselines")
    grid = baselines[0].grid
    for b in baselines[1:]:
        if b.grid.shape != grid.shape:
            raise GridMismatch(f"baseline grids differ: {b.grid.shape} vs {grid.shape}")
    total = math.fsum(w)
    if abs(total) < ZERO_SUM_TOL:
        raise ZeroWeightSum(f"weights sum to {total!r}")
    acc = _dot2(w, [b.radii for b in baselines])
    return RadialMatrix(grid, np.abs(acc) / abs(total))


_SPLIT = 2.0**27 + 1


def _two_prod(a, b):
    # Dekker: a * b == x + y exactly
    x = a * b
    c = _SPLIT * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLIT * b
    bh = c - (c - b)
    bl = b - bh
    return x, al * bl - (((x - ah * bh) - al * bh) - ah * bl)


def _two_sum(a, b):
    s = a + b
    z = s - a
    return s, (a - (s - z)) + (b - z)


def _dot2(w, arrays):
    """Weighted sum of arrays, accurate as if computed in doubled precision.

    Weighted sums with cancelling weights lose digits in plain float
    arithmetic; compensation keeps the morph scale invariant to a few ulp.
    """
    p, s = _two_prod(float(w[0]), arrays[0])
    for wp, a in zip(w[1:], arrays[1:]):
        h, r = _two_prod(float(wp), a)
        p, q = _two_sum(p, h)
        s = s + (q + r)
    return p + s


class FailureKind(str, enum.Enum):
    OK = "ok"
    NON_FINITE = "NonFinite"
    RADIUS_TOO_SMALL = "RadiusTooSmall"
    PLANE_INTERSECTION = "PlaneIntersection"
    HUB_INTERSECTION = "HubIntersection"


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    kind: FailureKind = FailureKind.OK
    k: int | None = None
    j: int | None = None
    detail: str = ""

    def __bool__(self):
        return self.valid

    def to_dict(self):
        return {"valid": self.valid, "kind": self.kind.value, "k": self.k, "j": self.j,
                "detail": self.detail}


def validate_shape(shape: RadialMatrix, curve: OriginCurve, r_min: float) -> ValidityReport:
    """Check radii against ``r_min`` and the origin-curve curvature radius.

    A plane is rejected if its largest radius reaches the local curvature
    radius, where neighbouring perpendicular planes meet.
    """
    if r_min <= 0:
        raise ValueError("r_min must be positive")
    if shape.grid.n_s != curve.grid.n_s:
        raise GridMismatch("shape and curve have different plane counts")
    R = shape.radii
    bad = ~np.isfinite(R)
    if bad.any():
        k, j = _first(bad)
        return ValidityReport(False, FailureKind.NON_FINITE, k, j, "non-finite radius")
    small = R < r_min
    if small.any():
        k, j = _first(small)
        return ValidityReport(False, FailureKind.RADIUS_TOO_SMALL, k, j,
                              f"radius {R[k, j]!r} below r_min {r_min!r}")
    rho = curve.curvature_radius
    for j in range(1, shape.grid.n_s - 1):
        k = int(np.argmax(R[:, j]))
        if R[k, j] >= rho[j]:
            return ValidityReport(False, FailureKind.PLANE_INTERSECTION, k, j,
                                  f"radius {R[k, j]!r} reaches curvature radius {rho[j]!r}")
    return ValidityReport(True)


def _first(mask):
    """First ``(k, j)`` of a mask, scanning plane by plane."""
    jj, kk = np.nonzero(mask.T)
    return int(kk[0]), int(jj[0])


@dataclass(frozen=True, eq=False)
class SurfacePointCloud:
    """Surface samples ordered plane by plane (index ``j * n_phi + k``)."""

    points: np.ndarray
    n_s: int
    n_phi: int

    def faces(self):
        """Quad faces (0-based vertex indices), wrapping in ``k``."""
        j, k = np.meshgrid(np.arange(self.n_s - 1), np.arange(self.n_phi), indexing="ij")
        j, k = j.ravel(), k.ravel()
        kn = (k + 1) % self.n_phi
        a = j * self.n_phi + k
        return np.stack([a, j * self.n_phi + kn, (j + 1) * self.n_phi + kn, (j + 1) * self.n_phi + k], axis=1)

    def to_obj(self):
        lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in self.points.tolist()]
        lines += ["f " + " ".join(str(i + 1) for i in quad) for quad in self.faces().tolist()]
        return "\n".join(lines) + "\n"

    def write_obj(self, path):
        Path(path).write_text(self.to_obj(), encoding="utf-8")


def project_to_3d(shape: RadialMatrix, curve: OriginCurve, r_min=None) -> SurfacePointCloud:
    """Place every radius in its plane around the origin curve.

    ``r_min`` defaults to ``1e-3`` times the mean inlet diameter.
    """
    if r_min is None:
        r_min = 1e-3 * 2.0 * float(np.mean(shape.inlet))
    report = validate_shape(shape, curve, r_min)
    if not report.valid:
        raise InvalidShape(report)
    phi = shape.grid.angles
    c, s = np.cos(phi), np.sin(phi)
    # (n_s, n_phi, 3)
    dirs = c[None, :, None] * curve.frame_u[:, None, :] + s[None, :, None] * curve.frame_v[:, None, :]
    pts = curve.points[:, None, :] + shape.radii.T[:, :, None] * dirs
    return SurfacePointCloud(_frozen(pts.reshape(-1, 3)), shape.grid.n_s, shape.grid.n_phi)


def save_radial(shape: RadialMatrix, path):
    """Write a radial matrix: a JSON header line, then one line per plane."""
    header = {"format_version": FORMAT_VERSION, "n_s": shape.grid.n_s, "n_phi": shape.grid.n_phi,
              "arc_length": shape.grid.arc_length}
    lines = [json.dumps(header)]
    for j in range(shape.grid.n_s):
        lines.append(" ".join(repr(float(v)) for v in shape.radii[:, j]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_radial(path) -> RadialMatrix:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines()]
    if not lines:
        raise ParseError("empty file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"header is not a JSON object: {exc.msg}", line=1) from None
    if not isinstance(header, dict):
        raise ParseError("header is not a JSON object", line=1)
    for key in ("format_version", "n_s", "n_phi", "arc_length"):
        if key not in header:
            raise ParseError("missing header key", line=1, field=key)
    if header["format_version"] != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {header['format_version']!r}", line=1,
                         field="format_version")
    n_s, n_phi = header["n_s"], header["n_phi"]
    if not (isinstance(n_s, int) and isinstance(n_phi, int)):
        raise ParseError("grid sizes must be integers", line=1, field="n_s" if not isinstance(n_s, int) else "n_phi")
    values = []
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        row = []
        for col, tok in enumerate(ln.split()):
            try:
                row.append(float(tok))
            except ValueError:
                raise ParseError(f"not a number: {tok!r}", line=lineno, field=f"radius[{col}]") from None
        values.append(row)
    flat = [v for row in values for v in row]
    if len(flat) != n_s * n_phi:
        raise DimensionMismatch(f"expected {n_s * n_phi} radii for a {n_s}x{n_phi} grid, found {len(flat)}")
    if any(len(row) != n_phi for row in values) or len(values) != n_s:
        raise DimensionMismatch(f"expected {n_s} rows of {n_phi} radii")
    grid = CollocationGrid(n_s, n_phi, float(header["arc_length"]))
    return RadialMatrix(grid, np.array(values).T)
