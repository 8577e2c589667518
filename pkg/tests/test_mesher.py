import numpy as np
import pytest

from chiptrap.mesher import (
    BOX_ID, MeshBudgetError, MeshParams, graded_axis, mesh_body, mesh_scene, refine,
)
from chiptrap.scene import Body, Cuboid, Cylinder, Scene, builtin_scene

NO_FOCUS = dict(focus_radius=0.0, edge_refinement_ratio=1.0)
BASELINE_PANELS = 9028


def cube_scene(size=1.0):
    body = Body(id="cube", kind="conductor", potential=1.0,
                shapes=(Cuboid(center=(0, 0, 0), size=(size, size, size)),))
    return Scene(name="cube", bodies=(body,), box_size=(10 * size,) * 3,
                 ion_position=(2 * size, 0, 0))


def tube_body(ngon_len=10e-3):
    return Body(id="tube", kind="conductor", potential=0.0,
                shapes=(Cylinder(origin=(0, 0, -ngon_len), axis=(0, 0, 1), length=ngon_len,
                                 outer_diameter=1e-3, inner_diameter=0.5e-3),))


def test_unit_cube_gives_24_outward_panels():
    m = mesh_scene(cube_scene(), MeshParams(base_panel_size=0.5, **NO_FOCUS), include_box=False)
    assert len(m) == 24
    assert np.all(np.einsum("ij,ij->i", m.normals, m.centroids) > 0)
    assert m.areas == pytest.approx(np.full(24, 0.25))


def test_refine_cube_by_two_gives_96():
    m = mesh_scene(cube_scene(), MeshParams(base_panel_size=0.5, **NO_FOCUS), include_box=False)
    r = refine(m, 2)
    assert len(r) == 96
    assert r.areas.sum() == pytest.approx(6.0)
    assert r.diameters.max() == pytest.approx(0.5 * m.diameters.max())


def test_refine_budget_error():
    m = mesh_scene(cube_scene(), MeshParams(base_panel_size=0.5, **NO_FOCUS), include_box=False)
    with pytest.raises(MeshBudgetError) as exc:
        refine(m, 1.0001, max_panels=50)
    assert exc.value.required == 96
    with pytest.raises(ValueError):
        refine(m, 1.0)


def test_mesh_budget_error_reports_count():
    with pytest.raises(MeshBudgetError) as exc:
        mesh_scene(builtin_scene("baseline"), MeshParams(max_panels=100))
    assert exc.value.required > 100 and exc.value.budget == 100


def test_tube_panel_structure():
    p = MeshParams(ngon=24, **NO_FOCUS, base_panel_size=1e-3)
    verts, normals, segs = mesh_body(tube_body(), p)
    rings = len(graded_axis(0.0, 10e-3, 1e-3, None, 1.0)) - 1
    assert rings == 10
    n_cap = 24  # one annulus ring per end
    assert len(verts) == 24 * rings * 2 + 2 * n_cap


def test_tube_normals_point_out_of_material():
    p = MeshParams(ngon=24)
    verts, normals, _ = mesh_body(tube_body(), p)
    c = verts.mean(axis=1)
    radial = c.copy()
    radial[:, 2] = 0.0
    r = np.linalg.norm(radial, axis=1)
    side = np.abs(normals[:, 2]) < 1e-9
    outer = side & (r > 0.4e-3)
    inner = side & (r < 0.3e-3)
    assert np.all(np.einsum("ij,ij->i", normals[outer], radial[outer]) > 0)
    assert np.all(np.einsum("ij,ij->i", normals[inner], radial[inner]) < 0)
    caps = ~side
    assert np.all(np.sign(normals[caps, 2]) == np.where(c[caps, 2] > -5e-3, 1, -1))


def test_area_sums_match_geometry():
    s = builtin_scene("baseline")
    m = mesh_scene(s)
    for b in s.bodies:
        exact = sum(sh.surface_area() for sh in b.shapes)
        assert m.body_area(b.id) == pytest.approx(exact, rel=5e-3), b.id
    assert m.body_area(BOX_ID) == pytest.approx(6 * 0.05 ** 2, rel=1e-12)


def test_ngon_area_for_cylinders():
    n = 24
    p = MeshParams(ngon=n)
    verts, normals, _ = mesh_body(tube_body(), p)
    a = 0.5 * np.linalg.norm(np.cross(verts[:, 2] - verts[:, 0], verts[:, 3] - verts[:, 1]), axis=1)
    ro, ri, L = 0.5e-3, 0.25e-3, 10e-3
    side = n * 2 * np.sin(np.pi / n) * (ro + ri) * L
    caps = 2 * 0.5 * n * np.sin(2 * np.pi / n) * (ro ** 2 - ri ** 2)
    assert a.sum() == pytest.approx(side + caps, rel=1e-9)


def test_panels_are_planar_and_positive():
    m = mesh_scene(builtin_scene("optic_on_axis", 3.0))
    v = m.verts
    d = np.einsum("ikj,ij->ik", v - v[:, :1], m.normals)
    assert np.abs(d).max() < 1e-12
    assert np.all(m.areas > 0)
    edge = v[:, 1] - v[:, 0]
    assert np.abs(np.einsum("ij,ij->i", edge, m.normals)).max() < 1e-12


def test_outward_normals_for_every_electrode():
    s = builtin_scene("baseline")
    m = mesh_scene(s)
    for b in s.bodies:
        mask = m.body_mask(b.id)
        # probe just outside each panel: it must not be inside the body
        probe = m.centroids[mask] + 1e-7 * m.normals[mask]
        assert not b.contains(probe).any()
        probe_in = m.centroids[mask] - 1e-7 * m.normals[mask]
        assert b.contains(probe_in).all()


def test_box_normals_face_inward():
    m = mesh_scene(cube_scene(), MeshParams(base_panel_size=0.5, box_panel_size=2.5, **NO_FOCUS))
    mask = m.body_mask(BOX_ID)
    assert np.all(np.einsum("ij,ij->i", m.normals[mask], m.centroids[mask]) < 0)


def test_every_panel_tagged_with_segment():
    s = builtin_scene("baseline")
    m = mesh_scene(s)
    for b in ("dc_a", "dc_b"):
        segs = set(m.segment[m.body_mask(b)].tolist())
        assert segs == {0, 1, 2, 3, 4}
    assert set(m.segment[m.body_mask("rf_a")].tolist()) == {0}


def test_no_panel_overlap_within_a_face():
    m = mesh_scene(builtin_scene("baseline"))
    mask = m.body_mask("dc_a") & (m.normals[:, 0] < -0.5)
    v = m.verts[mask]
    lo = v.min(axis=1)[:, 1:]
    hi = v.max(axis=1)[:, 1:]
    # coplanar face at x = 0.5 mm: summed area equals the union (5 segments minus slits)
    assert (np.prod(hi - lo, axis=1)).sum() == pytest.approx(5e-3 * (26e-3 - 4 * 0.04e-3), rel=1e-9)
    order = np.lexsort((lo[:, 0], lo[:, 1]))
    lo, hi = lo[order], hi[order]
    for i in range(len(lo)):
        ov = np.all((np.minimum(hi[i], hi[i + 1:]) - np.maximum(lo[i], lo[i + 1:])) > 1e-12, axis=1)
        assert not ov.any()


def test_panel_count_regression():
    m = mesh_scene(builtin_scene("baseline"))
    assert len(m) <= 20000
    assert len(m) == BASELINE_PANELS


def test_meshing_is_deterministic():
    a = mesh_scene(builtin_scene("baseline"))
    b = mesh_scene(builtin_scene("baseline"))
    assert np.array_equal(a.verts, b.verts)


def test_refinement_concentrates_near_focus_and_edges():
    m = mesh_scene(builtin_scene("baseline"))
    mask = m.body_mask("rf_a")
    d = m.diameters[mask]
    r = np.linalg.norm(m.centroids[mask], axis=1)
    assert d[r < 1.5e-3].max() < d[r > 8e-3].min()


def test_csv_dump():
    m = mesh_scene(cube_scene(), MeshParams(base_panel_size=0.5, **NO_FOCUS), include_box=False)
    lines = m.to_csv().splitlines()
    assert len(lines) == 25
    head = lines[0].split(",")
    assert head[:3] == ["v0x_m", "v0y_m", "v0z_m"] and head[-2:] == ["body", "segment"]
    row = lines[1].split(",")
    assert row[-2] == "cube" and row[-1] == "0"
    assert float(row[12]) ** 2 + float(row[13]) ** 2 + float(row[14]) ** 2 == pytest.approx(1.0)


def test_fiber_facet_only_is_meshed():
    from chiptrap.scene import fiber_scene
    s = fiber_scene(1.0)
    m = mesh_scene(s)
    mask = m.body_mask("fiber")
    assert np.all(m.normals[mask, 2] > 0.999)
    assert np.allclose(m.centroids[mask, 2], -1e-3)
    assert m.fixed[mask].all() and not m.fixed[~mask].any()


def test_invalid_params():
    with pytest.raises(ValueError):
        MeshParams(base_panel_size=0.0)
    with pytest.raises(ValueError):
        MeshParams(edge_refinement_ratio=0.5)
    with pytest.raises(ValueError):
        MeshParams(ngon=2)


def test_oversized_box_fails_before_allocating():
    with pytest.raises(MeshBudgetError) as exc:
        mesh_scene(cube_scene(), MeshParams(base_panel_size=0.5, **NO_FOCUS))
    assert exc.value.required > 1e6


def test_scaled_params():
    p = MeshParams().scaled(0.5)
    assert p.base_panel_size == pytest.approx(0.75e-3)
    assert p.focus_panel_size == pytest.approx(0.15e-3)
    assert p.ngon == 48 and p.max_panels == 20000
    assert len(mesh_scene(builtin_scene("baseline"), MeshParams().scaled(2.0))) < 0.6 * BASELINE_PANELS
    with pytest.raises(ValueError):
        MeshParams().scaled(0.0)
