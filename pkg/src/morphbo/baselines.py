"""Parametric baseline shapes and the design-level morph.

Five draft-tube archetypes share a quarter-turn origin curve (vertical cone,
circular elbow, horizontal diffuser) and a circular inlet; two hub
archetypes share a straight vertical axis, inlet radius, end radius and
length. Cross-sections are superellipses whose half-height may differ on
the ``phi = 0`` side and the opposite side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import GridMismatch, SpecInvalid
from .morph import (
    CollocationGrid,
    FailureKind,
    MorphWeights,
    OriginCurve,
    RadialMatrix,
    ValidityReport,
    morph_radial,
    validate_shape,
)

TUBE_LABELS = (
    "sharp-heel",
    "low-head-a",
    "low-head-b",
    "averaged-rounded-outlet",
    "averaged-circular-diffuser",
)
HUB_LABELS = ("kaplan", "cone")


@dataclass(frozen=True)
class BaselineGenSpec:
    """Dimensions for the generated baselines (lengths in inlet diameters)."""

    n_s: int = 64
    n_phi: int = 72
    diameter: float = 1.0
    outlet_aspect: float = 2.0
    cone_length: float = 1.0
    elbow_radius: float = 1.6
    diffuser_length: float = 3.5
    hub_n_s: int = 25
    hub_length: float = 0.6
    hub_inlet_radius: float = 0.2
    hub_end_radius: float = 0.05
    tube_archetypes: tuple = TUBE_LABELS
    hub_archetypes: tuple = HUB_LABELS

    def validate(self):
        for name in ("diameter", "outlet_aspect", "cone_length", "elbow_radius", "diffuser_length",
                     "hub_length", "hub_inlet_radius", "hub_end_radius"):
            if not getattr(self, name) > 0:
                raise SpecInvalid(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.n_s < 2 or self.hub_n_s < 2 or self.n_phi < 3:
            raise SpecInvalid("grid too small")
        if self.hub_length > self.cone_length:
            raise SpecInvalid("hub must end inside the vertical cone")
        if self.hub_end_radius >= self.hub_inlet_radius or self.hub_inlet_radius >= 0.5:
            raise SpecInvalid("hub radii must satisfy end < inlet < tube inlet radius")
        unknown = set(self.tube_archetypes) - set(TUBE_LABELS)
        if unknown or len(self.tube_archetypes) != 5:
            raise SpecInvalid(f"need five tube archetypes from {TUBE_LABELS}, got {self.tube_archetypes}")
        unknown = set(self.hub_archetypes) - set(HUB_LABELS)
        if unknown or len(self.hub_archetypes) != 2:
            raise SpecInvalid(f"need two hub archetypes from {HUB_LABELS}, got {self.hub_archetypes}")

    @property
    def arc_length(self):
        return (self.cone_length + 0.5 * np.pi * self.elbow_radius + self.diffuser_length) * self.diameter


@dataclass(frozen=True, eq=False)
class BaselineSet:
    tube: tuple
    hub: tuple
    tube_curve: OriginCurve
    hub_curve: OriginCurve
    tube_labels: tuple = TUBE_LABELS
    hub_labels: tuple = HUB_LABELS
    diameter: float = 1.0
    r_min: float = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "tube", tuple(self.tube))
        object.__setattr__(self, "hub", tuple(self.hub))
        if self.r_min is None:
            object.__setattr__(self, "r_min", 1e-3 * self.diameter)
        g = self.tube[0].grid
        if any(t.grid != g for t in self.tube):
            raise GridMismatch("tube baselines must share one grid")
        if any(not np.array_equal(t.inlet, self.tube[0].inlet) for t in self.tube):
            raise GridMismatch("tube baselines must share the inlet column")
        hg = self.hub[0].grid
        if any(h.grid != hg for h in self.hub):
            raise GridMismatch("hub baselines must share one grid")
        for h in self.hub[1:]:
            if not (np.array_equal(h.radii[:, 0], self.hub[0].radii[:, 0])
                    and np.array_equal(h.radii[:, -1], self.hub[0].radii[:, -1])):
                raise GridMismatch("hub baselines must share inlet and end radii")
        if self.tube_curve.grid.n_s != g.n_s or self.hub_curve.grid.n_s != hg.n_s:
            raise GridMismatch("origin curves do not match baseline grids")

    @property
    def n_tube(self):
        return len(self.tube)


def _superellipse(phi, a_top, a_bot, b, m):
    """Polar radius of a superellipse with a split half-height, shape (n_phi, n_s)."""
    c = np.cos(phi)[:, None]
    s = np.abs(np.sin(phi))[:, None]
    a = np.where(c >= 0, a_top[None, :], a_bot[None, :])
    m = m[None, :]
    return ((np.abs(c) / a) ** m + (s / b[None, :]) ** m) ** (-1.0 / m)


def _profile(knots, values, s, smooth):
    if smooth:
        return PchipInterpolator(knots, values)(s)
    return np.interp(s, knots, values)


def _tube_profiles(spec):
    """Control values (half-height top, half-height bottom, half-width, exponent).

    Knots sit at the inlet, the heel plane (start of the elbow), mid-elbow,
    end of the elbow and the outlet.
    """
    r0 = 0.5
    h_out = 0.62
    w_out = h_out * spec.outlet_aspect * 0.9
    sharp = dict(a_top=[r0, 0.56, 0.55, 0.52, h_out], a_bot=[r0, 0.56, 0.50, 0.50, h_out],
                 b=[r0, 0.56, 0.70, 0.85, w_out], m=[2.0, 2.0, 2.5, 3.0, 4.0], smooth=False)
    low_a = dict(a_top=[r0, 0.60, 0.58, 0.55, 0.72], a_bot=[r0, 0.60, 0.58, 0.55, 0.72],
                 b=[r0, 0.60, 0.74, 0.90, w_out * 1.1], m=[2.0, 2.0, 2.4, 3.0, 3.5], smooth=True)
    low_b = dict(a_top=[r0, 0.55, 0.50, 0.45, 0.52], a_bot=[r0, 0.55, 0.52, 0.47, 0.56],
                 b=[r0, 0.60, 0.85, 1.05, w_out * 1.25], m=[2.0, 2.2, 3.0, 4.0, 5.0], smooth=True)
    avg = {key: list(np.mean([sharp[key], low_a[key], low_b[key]], axis=0))
           for key in ("a_top", "a_bot", "b", "m")}
    rounded = dict(avg, m=[2.0, 2.1, 2.4, 2.6, 2.0], smooth=True)
    rounded["b"] = avg["b"][:4] + [avg["b"][4] * 0.85]
    r_diff = 0.5 * (avg["a_top"][3] + avg["b"][3])
    circular = dict(a_top=avg["a_top"][:3] + [r_diff, 0.85], a_bot=avg["a_bot"][:3] + [r_diff, 0.85],
                    b=avg["b"][:3] + [r_diff, 0.85], m=[2.0, 2.0, 2.2, 2.0, 2.0], smooth=True)
    return {"sharp-heel": sharp, "low-head-a": low_a, "low-head-b": low_b,
            "averaged-rounded-outlet": rounded, "averaged-circular-diffuser": circular}


def _hub_radii(kind, spec, grid):
    sigma = grid.arc_positions / grid.arc_length
    r_in, r_end = spec.hub_inlet_radius * spec.diameter, spec.hub_end_radius * spec.diameter
    if kind == "cone":
        prof = r_in + (r_end - r_in) * sigma
    else:
        # convex Kaplan-style nose: flat near the runner, closing near the tip
        prof = r_end + (r_in - r_end) * (1.0 - sigma**2.5)
    prof[0], prof[-1] = r_in, r_end
    return np.tile(prof, (grid.n_phi, 1))


def generate_baselines(spec: BaselineGenSpec | None = None) -> BaselineSet:
    """Deterministic baseline set for ``spec`` (defaults if omitted)."""
    spec = spec or BaselineGenSpec()
    spec.validate()
    D = spec.diameter
    grid = CollocationGrid(spec.n_s, spec.n_phi, spec.arc_length)
    curve = OriginCurve.quarter_turn(grid, spec.cone_length * D, spec.elbow_radius * D)
    s = grid.arc_positions
    s_heel = spec.cone_length * D
    s_elbow = s_heel + 0.5 * np.pi * spec.elbow_radius * D
    knots = np.array([0.0, s_heel, 0.5 * (s_heel + s_elbow), s_elbow, grid.arc_length])
    profiles = _tube_profiles(spec)
    phi = grid.angles
    tube = []
    for label in spec.tube_archetypes:
        p = profiles[label]
        curves = [_profile(knots, np.asarray(p[key]) * (D if key != "m" else 1.0), s, p["smooth"])
                  for key in ("a_top", "a_bot", "b", "m")]
        R = _superellipse(phi, *curves)
        R[:, 0] = 0.5 * D
        tube.append(RadialMatrix(grid, R))
    hub_grid = CollocationGrid(spec.hub_n_s, spec.n_phi, spec.hub_length * D)
    hub_curve = OriginCurve.straight(hub_grid)
    hub = [RadialMatrix(hub_grid, _hub_radii(kind, spec, hub_grid)) for kind in spec.hub_archetypes]
    return BaselineSet(tuple(tube), tuple(hub), curve, hub_curve, tuple(spec.tube_archetypes),
                       tuple(spec.hub_archetypes), D)


def morph_design(baselines: BaselineSet, w: MorphWeights):
    """Morph the tube with the five tube weights and the hub with ``(a1, 0.5 - a1)``."""
    tube = morph_radial(baselines.tube, w.tube_w)
    hub = morph_radial(baselines.hub, w.hub_alpha)
    return tube, hub


def hub_area_on_tube(baselines: BaselineSet, hub: RadialMatrix):
    """Hub cross-section area interpolated at each tube plane (0 past the hub end)."""
    s_tube = baselines.tube_curve.grid.arc_positions
    s_hub = hub.grid.arc_positions
    A = hub.areas()
    return np.where(s_tube <= s_hub[-1] + 1e-12, np.interp(s_tube, s_hub, A), 0.0)


def validate_design(baselines: BaselineSet, tube: RadialMatrix, hub: RadialMatrix) -> ValidityReport:
    """Validate tube and hub, and check that the hub stays inside the tube."""
    r = validate_shape(tube, baselines.tube_curve, baselines.r_min)
    if not r.valid:
        return r
    r = validate_shape(hub, baselines.hub_curve, baselines.r_min)
    if not r.valid:
        return ValidityReport(False, r.kind, r.k, r.j, "hub: " + r.detail)
    s_tube = baselines.tube_curve.grid.arc_positions
    s_hub = hub.grid.arc_positions
    hub_max = np.interp(s_tube, s_hub, hub.radii.max(axis=0))
    inside = s_tube <= s_hub[-1] + 1e-12
    tube_min = tube.radii.min(axis=0)
    clash = inside & (hub_max >= tube_min - baselines.r_min)
    if clash.any():
        j = int(np.argmax(clash))
        return ValidityReport(False, FailureKind.HUB_INTERSECTION, int(np.argmin(tube.radii[:, j])), j,
                              "hub reaches the tube wall")
    return ValidityReport(True)
