"""Analytic oracles and a mesh-convergence check for the boundary-element solver.

Each check builds a small problem with a known answer, solves it with the
production code path and returns a :class:`Check`.  ``run_all`` is what the
``chiptrap validate`` command prints.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import constants as ct

from .field_solver import K_E, BoundarySolver, Excitation, NearSurfaceWarning
from .mesher import MeshParams, PanelMesh, mesh_scene, refine
from .scene import Body, Cuboid, Scene, builtin_scene

__all__ = ["Check", "Convergence", "plates_check", "sphere_check", "image_check",
           "superposition_check", "gauss_check", "mesh_convergence", "convergence_check",
           "run_all", "sphere_mesh"]

MM = 1e-3


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    reference: float
    tolerance: float
    passed: bool
    detail: str = ""

    @property
    def error(self):
        if self.reference == 0:
            return abs(self.value)
        return abs(self.value / self.reference - 1)

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}  {self.name:<22s} value={self.value:.6g} reference={self.reference:.6g} "
                f"tol={self.tolerance:g} {self.detail}").rstrip()


def _rel_check(name, value, reference, tol, detail=""):
    ok = bool(np.isfinite(value) and abs(value / reference - 1) <= tol)
    return Check(name, float(value), float(reference), tol, ok, detail)


def _plates_scene(gap=1.0, side=10.0, thick=0.2):
    z = (gap + thick) / 2 * MM
    top = Body(id="top", kind="conductor", potential=0.5,
               shapes=(Cuboid(center=(0, 0, z), size=(side * MM, side * MM, thick * MM)),))
    bot = Body(id="bot", kind="conductor", potential=-0.5,
               shapes=(Cuboid(center=(0, 0, -z), size=(side * MM, side * MM, thick * MM)),))
    return Scene(name="plates", bodies=(top, bot), box_size=(0.1, 0.1, 0.1))


def _plates_solver():
    p = MeshParams(base_panel_size=1 * MM, focus_radius=0.0, box_panel_size=10 * MM)
    return BoundarySolver(mesh_scene(_plates_scene(), p))


def plates_check(solver=None, tol=1e-2):
    """Field midway between 10 x 10 mm plates 1 mm apart at +-0.5 V."""
    solver = solver or _plates_solver()
    sol = solver.solve(Excitation({("top", 0): 0.5, ("bot", 0): -0.5}))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearSurfaceWarning)
        ez = sol.field_at(np.zeros(3))[2]
    return _rel_check("parallel_plate_field", -ez, 1.0 / MM, tol, "V/m")


def sphere_mesh(radius, n):
    """Cube-projected sphere, each quad flattened onto its mean plane."""
    u = np.linspace(-1.0, 1.0, n + 1)
    a, b = np.meshgrid(u[:-1], u[:-1], indexing="ij")
    corners = [(a, b), (a + np.diff(u)[0], b), (a + np.diff(u)[0], b + np.diff(u)[0]),
               (a, b + np.diff(u)[0])]
    quads = []
    for ax in range(3):
        for sgn in (1.0, -1.0):
            pts = []
            for ca, cb in corners:
                p = np.empty(ca.shape + (3,))
                p[..., ax], p[..., (ax + 1) % 3], p[..., (ax + 2) % 3] = sgn, ca, cb
                pts.append(p.reshape(-1, 3))
            q = np.stack(pts, axis=1)
            quads.append(q if sgn > 0 else q[:, ::-1])
    v = np.concatenate(quads)
    v = radius * v / np.linalg.norm(v, axis=2, keepdims=True)
    nrm = np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 1])
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    c = v.mean(axis=1)
    v = v - np.einsum("ikj,ij->ik", v - c[:, None], nrm)[:, :, None] * nrm[:, None, :]
    k = len(v)
    return PanelMesh(v, nrm, np.zeros(k, int), np.zeros(k, int), ("ball",), np.zeros(k, bool))


def sphere_check(n=14, tol=2e-2):
    """Capacitance of an isolated 1 mm sphere against 4 pi eps0 R."""
    sol = BoundarySolver(sphere_mesh(MM, n)).solve(Excitation({("ball", 0): 1.0}))
    return _rel_check("sphere_capacitance", sol.charge(), 4 * math.pi * ct.epsilon_0 * MM, tol,
                      f"F, {6 * n * n} panels")


def image_check(tol=5e-2):
    """Potential induced by a grounded plate under a small charged cube."""
    h = 1 * MM
    charge = Body(id="q", kind="fixed_charge_dielectric", charge_density=1e-6,
                  shapes=(Cuboid(center=(0, 0, h), size=(0.1 * MM,) * 3),))
    plate = Body(id="plate", kind="conductor", potential=0.0,
                 shapes=(Cuboid(center=(0, 0, -0.25 * MM), size=(30 * MM, 30 * MM, 0.5 * MM)),))
    s = Scene(name="image", bodies=(charge, plate), box_size=(0.1, 0.1, 0.1),
              ion_position=(0, 0, 3 * MM))
    p = MeshParams(base_panel_size=3 * MM, focus_center=(0, 0, 0), focus_radius=1 * MM,
                   focus_panel_size=0.2 * MM, box_panel_size=20 * MM)
    sol = BoundarySolver(mesh_scene(s, p)).solve(Excitation(fixed_charges={"q": 1e-6}))
    q = sol.charge("q")
    induced = sol.potential_at(np.array([0, 0, 2 * h])) - K_E * q / h
    return _rel_check("image_charge", induced, -K_E * q / (3 * h), tol, "V")


def superposition_check(solver=None, tol=1e-9):
    solver = solver or _plates_solver()
    a = Excitation({("top", 0): 1.0})
    b = Excitation({("bot", 0): -2.5})
    sa, sb, sab = solver.solve(a), solver.solve(b), solver.solve(a + b)
    err = float(np.abs(sa.sigma + sb.sigma - sab.sigma).max() / np.abs(sab.sigma).max())
    return Check("superposition", err, 0.0, tol, err <= tol, "max relative deviation")


def gauss_check(tol=1e-2):
    """Charge induced on the closed grounded box equals minus the enclosed charge."""
    cube = Body(id="cube", kind="conductor", potential=1.0,
                shapes=(Cuboid(center=(1 * MM, 0, 0), size=(2 * MM,) * 3),))
    s = Scene(name="gauss", bodies=(cube,), box_size=(0.02, 0.02, 0.02),
              ion_position=(-5 * MM, 0, 0))
    p = MeshParams(base_panel_size=0.5 * MM, focus_radius=0.0, box_panel_size=2 * MM)
    sol = BoundarySolver(mesh_scene(s, p)).solve(Excitation({("cube", 0): 1.0}))
    return _rel_check("grounded_box_gauss", sol.box_charge(), -sol.charge("cube"), tol, "C")


@dataclass(frozen=True)
class Convergence:
    """|E| at the ion on nested meshes, each level halving every panel size."""

    panels: tuple
    values: tuple
    differences: tuple
    order: float
    extrapolated: float
    error_estimate: float

    @property
    def converging(self):
        d = self.differences
        return len(d) >= 2 and all(b < a for a, b in zip(d, d[1:]))


#: Coarse starting mesh for the refinement study: no edge grading, so that two
#: uniform subdivisions stay within a dense solve on a small machine.
CONVERGENCE_BASE = MeshParams(edge_refinement_ratio=1.0).scaled(3.0)


def mesh_convergence(scene=None, refs=None, params=None, levels=3):
    """Richardson analysis of |E(ion)| under uniform nested refinement.

    Defaults to the baseline trap with the characteristic-distance excitation,
    starting from :data:`CONVERGENCE_BASE` and splitting every panel into 2 x 2
    sub-panels ``levels - 1`` times.
    """
    scene = scene or builtin_scene("baseline")
    refs = refs if refs is not None else scene.d_pair
    exc = Excitation({tuple(r): 1.0 for r in refs})
    ion = np.asarray(scene.ion_position, dtype=float)
    mesh = mesh_scene(scene, params or CONVERGENCE_BASE)
    vals, counts = [], []
    for level in range(levels):
        if level:
            mesh = refine(mesh, 2, max_panels=mesh.params.max_panels)
        sol = BoundarySolver(mesh).solve(exc)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearSurfaceWarning)
            vals.append(float(np.linalg.norm(sol.field_at(ion))))
        counts.append(len(mesh))
        del sol
    diffs = tuple(abs(b - a) for a, b in zip(vals, vals[1:]))
    order, extrap, est = float("nan"), vals[-1], float("nan")
    if len(diffs) >= 2 and diffs[-1] > 0 and diffs[-2] > diffs[-1]:
        order = math.log2(diffs[-2] / diffs[-1])
        est = diffs[-1] / (2.0 ** order - 1)
        extrap = vals[-1] + math.copysign(est, vals[-1] - vals[-2])
    return Convergence(tuple(counts), tuple(vals), diffs, order, extrap, est)


def convergence_check(**kwargs):
    c = mesh_convergence(**kwargs)
    rel = c.error_estimate / abs(c.extrapolated) if np.isfinite(c.error_estimate) else float("nan")
    detail = ("panels=" + "/".join(map(str, c.panels))
              + " |E|=" + "/".join(f"{v:.5g}" for v in c.values)
              + f" order={c.order:.2f} est_rel_error={rel:.2g}")
    return Check("mesh_convergence", c.values[-1], c.extrapolated, float("nan"), c.converging,
                 detail)


def run_all(convergence=True):
    solver = _plates_solver()
    checks = [plates_check(solver), sphere_check(), image_check(),
              superposition_check(solver), gauss_check()]
    if convergence:
        checks.append(convergence_check())
    return checks
