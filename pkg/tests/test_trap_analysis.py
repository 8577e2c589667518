import math
import warnings

import numpy as np
import pytest
from scipy import constants as ct

from chiptrap.field_solver import BoundarySolver, Excitation
from chiptrap.mesher import MeshParams, mesh_scene
from chiptrap.scene import Body, Cuboid, Scene
from chiptrap.trap_analysis import (
    DistanceError, TrapReport, analyze_scene, axial_rf_profile, characteristic_distance,
    pair_excitation, pseudopotential_at, rf_excitation, secular_frequencies, static_excitation,
)

MM = 1e-3
MASS = 171 * ct.physical_constants["atomic mass constant"][0]
OMEGA = 2 * np.pi * 16e6


class Field:
    """Analytic source: potential and field of a quadratic form about ``origin``.

    phi(r) = 0.5 * d^T H d + g . d with d = r - origin.
    """

    def __init__(self, hessian, grad=(0, 0, 0), origin=(0, 0, 0)):
        self.H = np.asarray(hessian, dtype=float)
        self.g = np.asarray(grad, dtype=float)
        self.o = np.asarray(origin, dtype=float)

    def potential_at(self, points):
        d = np.atleast_2d(points) - self.o
        phi = 0.5 * np.einsum("ij,jk,ik->i", d, self.H, d) + d @ self.g
        return phi[0] if np.ndim(points) == 1 else phi

    def field_at(self, points):
        d = np.atleast_2d(points) - self.o
        E = -(d @ self.H.T + self.g)
        return E[0] if np.ndim(points) == 1 else E


def quadrupole(A, origin=(0, 0, 0)):
    # E = A (x, -y, 0)
    return Field(np.diag([-A, A, 0.0]), origin=origin)


def harmonic(kappa, origin=(0, 0, 0)):
    # phi = kappa/2 (z^2 - (x^2 + y^2)/2), Laplace-compliant
    return Field(np.diag([-kappa / 2, -kappa / 2, kappa]), origin=origin)


def test_radial_frequency_of_pure_quadrupole():
    A = 5e7
    res = secular_frequencies(quadrupole(A), None, MASS, OMEGA)
    expected = ct.e * A / (math.sqrt(2) * MASS * OMEGA) / (2 * np.pi)
    assert res.nu_r1 == pytest.approx(expected, rel=1e-6)
    assert res.nu_r2 == pytest.approx(expected, rel=1e-6)
    assert math.isnan(res.nu_z)
    assert res.q_r == pytest.approx(2 * ct.e * A / (MASS * OMEGA ** 2), rel=1e-9)
    assert res.flags == ()


def test_axial_curvature_recovered_exactly():
    kappa = 4e4
    res = secular_frequencies(quadrupole(5e7), harmonic(kappa), MASS, OMEGA)
    assert res.k_z == pytest.approx(ct.e * kappa, rel=1e-6)
    assert res.nu_z == pytest.approx(math.sqrt(ct.e * kappa / MASS) / (2 * np.pi), rel=1e-6)
    assert res.fit_residual < 1e-9
    k_r = ct.e ** 2 * 5e7 ** 2 / (2 * MASS * OMEGA ** 2) - ct.e * kappa / 2
    assert res.radial_curvatures == pytest.approx((k_r, k_r), rel=1e-6)


def test_rotated_quadrupole_gives_same_frequencies():
    A, th = 5e7, 0.3
    R = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    rotated = Field(R @ np.diag([-A, A, 0.0]) @ R.T)
    a = secular_frequencies(quadrupole(A), None, MASS, OMEGA)
    b = secular_frequencies(rotated, None, MASS, OMEGA)
    assert b.nu_r1 == pytest.approx(a.nu_r1, rel=1e-6)
    assert b.q_r == pytest.approx(a.q_r, rel=1e-9)


def test_pseudopotential_vanishes_at_field_null():
    src = quadrupole(5e7, origin=(1e-4, 0, 0))
    assert pseudopotential_at(src, np.array([1e-4, 0, 0]), OMEGA, MASS) == 0.0
    psi = pseudopotential_at(src, np.array([[1e-4, 1e-5, 0], [1e-4, 2e-5, 0]]), OMEGA, MASS)
    assert psi[1] == pytest.approx(4 * psi[0])
    with pytest.raises(ValueError):
        pseudopotential_at(src, np.zeros(3), 0.0, MASS)


def test_translation_invariance():
    off = np.array([0.3e-3, -0.2e-3, 1.1e-3])
    a = secular_frequencies(quadrupole(5e7), harmonic(4e4), MASS, OMEGA)
    b = secular_frequencies(quadrupole(5e7, off), harmonic(4e4, off), MASS, OMEGA, ion=off)
    assert (b.nu_z, b.nu_r1, b.nu_r2) == pytest.approx((a.nu_z, a.nu_r1, a.nu_r2), rel=1e-6)


def test_voltage_scaling_laws():
    a = secular_frequencies(quadrupole(5e7), harmonic(4e4), MASS, OMEGA)
    b = secular_frequencies(quadrupole(5e7), harmonic(4 * 4e4), MASS, OMEGA)
    assert b.nu_z == pytest.approx(2 * a.nu_z, rel=1e-6)
    c = secular_frequencies(quadrupole(3 * 5e7), None, MASS, OMEGA)
    d = secular_frequencies(quadrupole(5e7), None, MASS, OMEGA)
    assert c.nu_r1 == pytest.approx(3 * d.nu_r1, rel=1e-6)
    assert c.q_r == pytest.approx(3 * d.q_r, rel=1e-9)


def test_anti_trapping_and_stability_flags():
    res = secular_frequencies(quadrupole(5e7), harmonic(-4e4), MASS, OMEGA)
    assert math.isnan(res.nu_z)
    assert any("anti-trapping along z" in f for f in res.flags)
    hot = secular_frequencies(quadrupole(2e10), None, MASS, OMEGA)
    assert any("q_r" in f for f in hot.flags)
    weak = secular_frequencies(quadrupole(1e3), harmonic(4e6), MASS, OMEGA)
    assert math.isnan(weak.nu_r1)
    assert any("xy" in f for f in weak.flags)


def test_axial_profile_of_linear_gradient():
    g = 3.2e4
    src = Field(np.diag([g / 2, g / 2, -g]))  # E_z = g z
    pr = axial_rf_profile(src)
    assert pr.gradient == pytest.approx(g, rel=1e-9)
    assert pr.ez_ion == pytest.approx(0.0, abs=1e-12)
    assert pr.ez == pytest.approx(g * pr.z, rel=1e-9, abs=1e-12)
    assert pr.max_abs_ez == pytest.approx(g * 1e-3)
    assert len(pr.z) == 81 and pr.z[0] == -1e-3 and pr.z[-1] == 1e-3


def test_axial_profile_gradient_matches_samples():
    # cubic potential: E_z = -(3 c z^2 + 2 b z), non-constant gradient
    class Cubic:
        def field_at(self, p):
            p = np.atleast_2d(p)
            ez = -(3 * 1e9 * p[:, 2] ** 2 + 2 * 5e3 * p[:, 2])
            return np.c_[np.zeros(len(p)), np.zeros(len(p)), ez]

    pr = axial_rf_profile(Cubic(), z_range=(-1e-4, 1e-4), n=201)
    fd = np.gradient(pr.ez, pr.z)
    assert pr.gradient == pytest.approx(fd[100], rel=1e-6)
    assert pr.gradient == pytest.approx(-1e4, rel=1e-9)


def test_axial_profile_rejects_bad_window():
    with pytest.raises(ValueError):
        axial_rf_profile(quadrupole(1.0), n=1)
    with pytest.raises(ValueError):
        axial_rf_profile(quadrupole(1.0), z_range=(1e-3, -1e-3))


def plates_scene(gap=1.0):
    z = (gap + 0.2) / 2 * MM
    top = Body(id="top", kind="conductor", potential=1.0,
               shapes=(Cuboid(center=(0, 0, z), size=(10 * MM, 10 * MM, 0.2 * MM)),))
    bot = Body(id="bot", kind="conductor", potential=0.0,
               shapes=(Cuboid(center=(0, 0, -z), size=(10 * MM, 10 * MM, 0.2 * MM)),))
    return Scene(name="plates", bodies=(top, bot), box_size=(0.1, 0.1, 0.1))


@pytest.fixture(scope="module")
def plate_solver():
    p = MeshParams(base_panel_size=1 * MM, focus_radius=0.0, box_panel_size=10 * MM)
    return BoundarySolver(mesh_scene(plates_scene(), p))


def test_parallel_plate_distance_equals_gap(plate_solver):
    d = characteristic_distance(plate_solver, [("top", 0)])
    assert d == pytest.approx(1 * MM, rel=1e-2)
    # D is a geometric quantity: independent of the voltage used to probe it
    assert characteristic_distance(plate_solver, [("top", 0)], voltage=-7.0) == pytest.approx(d)


def test_distance_diverges_for_symmetric_pair(plate_solver):
    with pytest.raises(DistanceError):
        characteristic_distance(plate_solver, [("top", 0), ("bot", 0)])
    with pytest.raises(ValueError):
        characteristic_distance(plate_solver, [])


def test_distance_accepts_a_mesh():
    s = plates_scene(gap=2.0)
    mesh = mesh_scene(s, MeshParams(base_panel_size=1 * MM, focus_radius=0.0,
                                    box_panel_size=10 * MM))
    assert characteristic_distance(mesh, [("top", 0)]) == pytest.approx(2 * MM, rel=2e-2)


def test_excitation_helpers():
    s = plates_scene()
    assert static_excitation(s).conductor_potentials == {("top", 0): 1.0, ("bot", 0): 0.0}
    assert pair_excitation([["top", 0]], 2.0) == Excitation({("top", 0): 2.0})
    assert rf_excitation(s).conductor_potentials == {}


def rod_trap():
    """Four square rods around the z axis, RF on one diagonal, no slits."""
    rods = []
    for i, (sx, sy) in enumerate([(1, 1), (-1, -1), (1, -1), (-1, 1)]):
        rods.append(Body(id=f"rod{i}", kind="conductor", potential=0.0,
                         shapes=(Cuboid(center=(sx * 0.7 * MM, sy * 0.7 * MM, 0),
                                        size=(0.4 * MM, 0.4 * MM, 8 * MM)),)))
    return Scene(name="rods", bodies=tuple(rods), box_size=(0.03, 0.03, 0.03),
                 rf_body_ids=frozenset({"rod0", "rod1"}), rf_amplitude=100.0)


def test_symmetric_rod_trap_has_no_axial_field():
    s = rod_trap()
    p = MeshParams(base_panel_size=1 * MM, focus_panel_size=0.3 * MM, box_panel_size=10 * MM)
    rep = analyze_scene(s, p, n=21)
    assert abs(rep.profile.ez_ion) < 1e-6 * rep.profile.max_abs_ez + 1e-9
    # mirror symmetry z -> -z makes E_z odd along the axis
    assert rep.profile.ez == pytest.approx(-rep.profile.ez[::-1], rel=1e-6, abs=1e-9)
    assert rep.secular.nu_r1 == pytest.approx(rep.secular.nu_r2, rel=1e-3)
    assert rep.distance is None and math.isnan(rep.secular.nu_z)


def test_report_deltas_and_exports():
    pr = axial_rf_profile(Field(np.diag([1.0, 1.0, -2.0])))
    sec = secular_frequencies(quadrupole(5e7), harmonic(4e4), MASS, OMEGA)
    ref = TrapReport("ref", pr, sec, 2e-3, 100)
    sec2 = secular_frequencies(quadrupole(5e7), harmonic(1.1 ** 2 * 4e4), MASS, OMEGA)
    rep = TrapReport("other", pr, sec2, 2.2e-3, 100).compared_to(ref)
    assert rep.deltas["nu_z"] == pytest.approx(10.0, rel=1e-5)
    assert rep.deltas["distance"] == pytest.approx(10.0)
    assert math.isnan(rep.deltas["ez_ion"])
    lines = rep.to_csv().splitlines()
    assert lines[0] == "quantity,unit,value"
    assert "delta_nu_z,%," in rep.to_csv()
    assert "reference = ref" in rep.text()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        TrapReport("x", pr, sec, None).text()
