import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from morphbo.baselines import (
    HUB_LABELS,
    TUBE_LABELS,
    BaselineGenSpec,
    generate_baselines,
    hub_area_on_tube,
    morph_design,
    validate_design,
)
from morphbo.errors import SpecInvalid
from morphbo.morph import FailureKind, MorphWeights, load_radial, project_to_3d, validate_shape

FIXTURES = Path(__file__).parent / "fixtures"
OPTIMAL = MorphWeights((0.90, -0.14, 0.22, -0.25, 0.99), 0.99)


def test_default_set_shape(baselines):
    assert baselines.tube_labels == TUBE_LABELS and baselines.hub_labels == HUB_LABELS
    assert len(baselines.tube) == 5 and len(baselines.hub) == 2
    for t in baselines.tube:
        assert t.radii.shape == (72, 64)
        assert np.array_equal(t.inlet, baselines.tube[0].inlet)
        assert validate_shape(t, baselines.tube_curve, baselines.r_min).valid
    for h in baselines.hub:
        assert validate_shape(h, baselines.hub_curve, baselines.r_min).valid
    h0, h1 = baselines.hub
    assert np.array_equal(h0.radii[:, 0], h1.radii[:, 0])
    assert np.array_equal(h0.radii[:, -1], h1.radii[:, -1])


def test_generation_is_deterministic(baselines):
    again = generate_baselines()
    for a, b in zip(baselines.tube + baselines.hub, again.tube + again.hub):
        assert a == b


def test_every_baseline_design_valid(baselines):
    for p in range(5):
        for a1 in (0.0, 0.25, 0.5, 1.0):
            w = [0.0] * 5
            w[p] = 1.0
            tube, hub = morph_design(baselines, MorphWeights(tuple(w), a1))
            assert validate_design(baselines, tube, hub).valid


def test_cone_hub_linear_in_s(baselines):
    cone = baselines.hub[HUB_LABELS.index("cone")]
    s = cone.grid.arc_positions
    for k in range(cone.grid.n_phi):
        coef = np.polyfit(s, cone.radii[k], 1)
        assert np.allclose(np.polyval(coef, s), cone.radii[k], atol=1e-14)


def test_sharp_heel_top_profile_kink(baselines):
    tube = baselines.tube[TUBE_LABELS.index("sharp-heel")]
    r0 = tube.top_profile
    s = tube.grid.arc_positions
    slope = np.diff(r0) / np.diff(s)
    jump = np.abs(np.diff(slope))
    j_heel = int(np.searchsorted(s, 1.0))
    # the largest slope change sits at the heel plane
    assert abs(int(np.argmax(jump)) + 1 - j_heel) <= 1
    assert jump.max() > 0.05
    ref = json.loads((FIXTURES / "sharp_heel_top_profile.json").read_text())["R0"]
    assert np.allclose(r0, ref, rtol=0, atol=1e-14)
    # a smooth archetype shows no such jump
    smooth = baselines.tube[TUBE_LABELS.index("low-head-a")].top_profile
    sj = np.abs(np.diff(np.diff(smooth) / np.diff(s)))
    assert sj.max() < 0.5 * jump.max()


def test_sharp_heel_row():
    b = generate_baselines()
    tube, hub = morph_design(b, MorphWeights((1, 0, 0, 0, 0), 0.5))
    assert tube == b.tube[0]
    # hub weights (0.5, 0.0) normalize to the first hub exactly
    assert np.array_equal(hub.radii, b.hub[0].radii)


def test_hub_extrapolation_weights():
    w = MorphWeights((1, 0, 0, 0, 0), 1.0)
    assert w.hub_alpha == (1.0, -0.5)
    b = generate_baselines()
    _, hub = morph_design(b, w)
    expect = np.abs(b.hub[0].radii - 0.5 * b.hub[1].radii) / 0.5
    assert np.allclose(hub.radii, expect, rtol=1e-15)


def test_optimal_row_regression(baselines):
    tube, hub = morph_design(baselines, OPTIMAL)
    assert validate_design(baselines, tube, hub).valid
    ref_tube = load_radial(FIXTURES / "optimal_tube.txt")
    ref_hub = load_radial(FIXTURES / "optimal_hub.txt")
    assert np.array_equal(tube.radii, ref_tube.radii)
    assert np.array_equal(hub.radii, ref_hub.radii)
    pts = json.loads((FIXTURES / "optimal_points.json").read_text())
    cloud = project_to_3d(tube, baselines.tube_curve)
    assert np.allclose(cloud.points[pts["indices"]], pts["points"], rtol=0, atol=1e-13)


def test_hub_intersection_detected(baselines):
    # a fat hub pushed through a narrow tube
    fat = dataclasses.replace(BaselineGenSpec(), hub_inlet_radius=0.49, hub_end_radius=0.05)
    b = generate_baselines(fat)
    tube, hub = morph_design(b, MorphWeights((1, 0, 0, 0, 0), 1.0))
    report = validate_design(b, tube, hub)
    assert not report.valid and report.kind == FailureKind.HUB_INTERSECTION


def test_hub_area_vanishes_downstream(baselines):
    _, hub = morph_design(baselines, MorphWeights((1, 0, 0, 0, 0), 0.5))
    A = hub_area_on_tube(baselines, hub)
    s = baselines.tube_curve.grid.arc_positions
    assert np.all(A[s > hub.grid.arc_length + 1e-9] == 0)
    assert A[0] == pytest.approx(hub.areas()[0])


@pytest.mark.parametrize("change", [{"diameter": 0.0}, {"elbow_radius": -1.0}, {"n_s": 1},
                                    {"hub_length": 5.0}, {"tube_archetypes": ("sharp-heel",)},
                                    {"hub_end_radius": 0.3}])
def test_spec_invalid(change):
    with pytest.raises(SpecInvalid):
        generate_baselines(dataclasses.replace(BaselineGenSpec(), **change))
