import numpy as np
import pytest

from chiptrap.scene import (
    BUILTIN_RANGES, Body, Cuboid, Scene, SceneParseError, SceneValidationError,
    baseline_config_text, builtin_scene, dump_scene, fiber_scene, load_scene,
)

MM = 1e-3

VACUUM = """
[units]
length = mm

[box]
size = 10, 10, 10
"""


def test_baseline_has_six_electrodes_and_defaults():
    s = builtin_scene("baseline")
    assert len(s.bodies) == 6
    assert s.box_size == pytest.approx((0.05, 0.05, 0.05))
    assert s.ion_position == (0.0, 0.0, 0.0)
    assert s.rf_frequency == pytest.approx(16e6)
    assert s.species_mass == pytest.approx(171 * 1.66053906660e-27, rel=1e-9)
    assert s.rf_body_ids == frozenset({"rf_a", "rf_b"})
    assert s.body("dc_a").n_segments == 5
    assert s.body("rf_a").shapes[0].size == pytest.approx((0.4 * MM, 5 * MM, 26 * MM))
    assert s.body("endcap_pos").shapes[0].size == pytest.approx((0.4 * MM, 2 * MM, 1 * MM))


def test_baseline_ion_electrode_distance():
    s = builtin_scene("baseline")
    rf = s.body("rf_a").shapes[0]
    # nearest corner of the RF electrode as seen from the ion
    corner = np.array([rf.lo[0], rf.lo[1], 0.0])
    assert np.linalg.norm(corner) == pytest.approx(np.hypot(0.5, 0.5) * MM)
    assert rf.lo[0] - (-rf.lo[0]) == pytest.approx(1.0 * MM)


def test_central_segments_are_2mm():
    c = builtin_scene("baseline").body("dc_a").shapes[0]
    boxes = sorted(c.solid_boxes(), key=lambda b: b[2])
    lengths = [hi[2] - lo[2] for lo, hi, _ in boxes]
    assert lengths[1:4] == pytest.approx([2 * MM] * 3)


def test_vacuum_scene_is_valid():
    s = load_scene(VACUUM)
    assert s.bodies == ()
    assert s.box_size == pytest.approx((0.01, 0.01, 0.01))


def test_round_trip_is_exact():
    for s in [builtin_scene("baseline"), builtin_scene("optic_on_axis", 3.0),
              builtin_scene("optic_between_chips", 0.5), builtin_scene("optics_both_sides", 2.0),
              builtin_scene("shielded_fiber", 1.0), load_scene(VACUUM)]:
        assert load_scene(dump_scene(s)) == s


def test_builtin_baseline_equals_shipped_config():
    assert builtin_scene("baseline") == load_scene(baseline_config_text())


def test_mirror_symmetry_of_baseline():
    s = builtin_scene("baseline")
    cents = {tuple(np.round(np.asarray(sh.center) / MM, 9)) for b in s.bodies for sh in b.shapes}
    for flip in (np.array([-1, 1, 1]), np.array([1, -1, 1])):
        flipped = {tuple(np.round(np.asarray(c) * flip, 9)) for c in cents}
        assert flipped == cents


def test_on_axis_optic_geometry():
    s = builtin_scene("optic_on_axis", 3.0)
    optic = s.body("optic")
    assert optic.is_conductor and optic.potential == 0.0
    sh = optic.shapes[0]
    assert sh.center == pytest.approx((0, 0, 3.5 * MM))
    assert sh.lo[2] == pytest.approx(3 * MM)
    assert sorted(sh.size) == pytest.approx(sorted((0.8 * MM, 1.0 * MM, 1.0 * MM)))


def test_fiber_scene_geometry():
    s = fiber_scene(1.0)
    tube = s.body("shield").shapes[0]
    fib = s.body("fiber")
    assert fib.kind == "fixed_charge_dielectric"
    assert fib.shapes[0].outer_diameter == pytest.approx(0.35 * MM)
    assert fib.shapes[0].length == pytest.approx(5 * MM)
    assert tube.inner_diameter == pytest.approx(0.5 * MM)
    assert tube.length == pytest.approx(10 * MM)
    mouth = tube.origin[2] + tube.length
    fiber_end = fib.shapes[0].origin[2] + fib.shapes[0].length
    assert mouth - fiber_end == pytest.approx(1.0 * MM)
    assert fib.charge_density == pytest.approx(-160 * 1.602176634e-19 / 1e-12)


@pytest.mark.parametrize("name,d", [("optic_on_axis", 2.0), ("optic_between_chips", 9.5),
                                    ("optics_both_sides", 0.5), ("shielded_fiber", 6.0)])
def test_builtin_distance_out_of_range(name, d):
    lo, hi = BUILTIN_RANGES[name]
    assert not lo <= d <= hi
    with pytest.raises(ValueError):
        builtin_scene(name, d)


def test_unknown_builtin():
    with pytest.raises(ValueError):
        builtin_scene("nonsense", 1.0)


def test_body_outside_box_rejected():
    text = VACUUM + """
[body.far]
kind = conductor
potential = 0
center = 20, 0, 0
size = 1, 1, 1
"""
    with pytest.raises(SceneValidationError) as exc:
        load_scene(text)
    assert exc.value.body_id == "far"


def test_overlap_rejected():
    text = VACUUM + """
[body.a]
potential = 0
center = 0, 0, 2
size = 1, 1, 1

[body.b]
potential = 1
center = 0.5, 0, 2
size = 1, 1, 1
"""
    with pytest.raises(SceneValidationError, match="overlap"):
        load_scene(text)


def test_ion_inside_body_rejected():
    text = VACUUM + """
[body.a]
potential = 0
center = 0, 0, 0
size = 1, 1, 1
"""
    with pytest.raises(SceneValidationError, match="ion"):
        load_scene(text)


def test_parse_error_reports_line_and_key():
    text = VACUUM + """
[body.a]
potential = 0
center = 0, 0, x
size = 1, 1, 1
"""
    with pytest.raises(SceneParseError) as exc:
        load_scene(text)
    assert exc.value.key is not None and "center" in exc.value.key
    assert exc.value.line is not None


def test_bad_units_rejected():
    with pytest.raises(SceneParseError):
        load_scene("[units]\nlength = furlong\n")


def test_conductor_and_dielectric_fields_exclusive():
    text = VACUUM + """
[body.a]
kind = fixed_charge_dielectric
potential = 1
charge_density = 1
center = 0, 0, 3
size = 1, 1, 1
"""
    with pytest.raises(SceneValidationError):
        load_scene(text)


def test_slit_wider_than_segment_rejected():
    text = VACUUM + """
[body.a]
potential = 0
center = 0, 0, 3
size = 1, 1, 2
slits = 3
slit_width = 1.5
"""
    with pytest.raises(SceneValidationError, match="slit"):
        load_scene(text)


def test_rf_body_must_exist():
    text = VACUUM + "\n[drive]\nrf_bodies = ghost\n"
    with pytest.raises(SceneValidationError):
        load_scene(text)


def test_translation_moves_everything():
    s = builtin_scene("optic_on_axis", 5.0)
    t = s.translated((1e-3, -2e-3, 0.5e-3))
    assert t.ion_position == pytest.approx((1e-3, -2e-3, 0.5e-3))
    a, b = s.body("dc_a").shapes[0], t.body("dc_a").shapes[0]
    assert np.asarray(b.center) - np.asarray(a.center) == pytest.approx([1e-3, -2e-3, 0.5e-3])
    assert b.n_segments == 5


def test_scene_objects_are_immutable():
    s = builtin_scene("baseline")
    with pytest.raises(Exception):
        s.name = "other"
    with pytest.raises(Exception):
        s.bodies[0].potential = 3.0


def test_hand_built_scene_validates():
    body = Body(id="plate", kind="conductor", potential=1.0,
                shapes=(Cuboid(center=(0, 0, 2e-3), size=(1e-3, 1e-3, 1e-3)),))
    s = Scene(name="hand", bodies=(body,), box_size=(0.01, 0.01, 0.01))
    assert load_scene(dump_scene(s)) == s
