"""Collocation boundary-element solver for conductors and fixed surface charge.

Every conductor panel carries an unknown uniform charge density.  Collocating
the prescribed potential at panel centroids gives the dense system

    P sigma = v - P_fixed sigma_fixed,

with ``P[i, j]`` the potential at centroid ``i`` from unit density on panel ``j``.
Entries use the exact flat-panel integral; an optional finite ``near_factor``
switches entries beyond that many panel diameters to the centroid monopole.
The system is factored once (LU) so several excitations share one assembly.
Above ``KEEP_MATRIX_LIMIT`` panels the matrix is factored in place and the
collocation residual is evaluated matrix-free, so only one dense copy exists.
"""

from __future__ import annotations

import csv
import io
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import constants as ct

from . import _kernels
from .mesher import BOX_ID

__all__ = ["Excitation", "BoundarySolution", "BoundarySolver", "assemble_and_solve",
           "SolverError", "InsideConductorError", "NearSurfaceWarning",
           "potential_at", "field_at", "K_E"]

log = logging.getLogger(__name__)

K_E = 1.0 / (4 * np.pi * ct.epsilon_0)
KEEP_MATRIX_LIMIT = 12000


class SolverError(RuntimeError):
    """Singular, ill-conditioned or non-finite boundary system."""

    def __init__(self, message, rcond=None):
        self.rcond = rcond
        super().__init__(message if rcond is None else f"{message} (rcond={rcond:.3g})")


class InsideConductorError(ValueError):
    pass


class NearSurfaceWarning(UserWarning):
    """Field evaluated closer to a surface than the panel resolution supports."""


@dataclass(frozen=True)
class Excitation:
    """Conductor potentials per (body id, segment) and fixed densities per dielectric body.

    Conductor segments absent from ``conductor_potentials`` are grounded.
    """

    conductor_potentials: dict = field(default_factory=dict)
    fixed_charges: dict = field(default_factory=dict)

    def scaled(self, s):
        return Excitation({k: s * v for k, v in self.conductor_potentials.items()},
                          {k: s * v for k, v in self.fixed_charges.items()})

    def __add__(self, other):
        pots = dict(self.conductor_potentials)
        for k, v in other.conductor_potentials.items():
            pots[k] = pots.get(k, 0.0) + v
        fixed = dict(self.fixed_charges)
        for k, v in other.fixed_charges.items():
            fixed[k] = fixed.get(k, 0.0) + v
        return Excitation(pots, fixed)


def _validate_excitation(mesh, exc):
    for (bid, seg) in exc.conductor_potentials:
        if bid not in mesh.body_ids:
            raise KeyError(f"excitation names unknown body {bid!r}")
        mask = mesh.body_mask(bid, seg)
        if not mask.any():
            raise KeyError(f"body {bid!r} has no segment {seg}")
        if mesh.fixed[mask].any():
            raise ValueError(f"body {bid!r} is a fixed-charge dielectric, not a conductor")
    for bid in exc.fixed_charges:
        if bid not in mesh.body_ids:
            raise KeyError(f"excitation names unknown body {bid!r}")
        if not mesh.fixed[mesh.body_mask(bid)].all():
            raise ValueError(f"body {bid!r} is a conductor; fixed charge needs a dielectric")


class BoundarySolver:
    """Assembles and LU-factors the collocation matrix of one mesh."""

    def __init__(self, mesh, near_factor=np.inf, check_condition=True, keep_matrix=None):
        self.mesh = mesh
        self.near_factor = float(near_factor)
        self.free = np.flatnonzero(~mesh.fixed)
        self.fixed_idx = np.flatnonzero(mesh.fixed)
        t0 = time.perf_counter()
        c = mesh.centroids
        v = np.ascontiguousarray(mesh.verts)
        nrm = np.ascontiguousarray(mesh.normals)
        a = mesh.areas
        d = mesh.diameters
        f = self.free
        targets = np.ascontiguousarray(c[f])
        self._P = K_E * _kernels.influence_matrix(
            targets, np.ascontiguousarray(v[f]), np.ascontiguousarray(nrm[f]),
            np.ascontiguousarray(c[f]), a[f], d[f], self.near_factor)
        if self.fixed_idx.size:
            fi = self.fixed_idx
            self._P_fixed = K_E * _kernels.influence_matrix(
                targets, np.ascontiguousarray(v[fi]), np.ascontiguousarray(nrm[fi]),
                np.ascontiguousarray(c[fi]), a[fi], d[fi], self.near_factor)
        else:
            self._P_fixed = np.zeros((len(f), 0))
        if not np.all(np.isfinite(self._P)) or not np.all(np.isfinite(self._P_fixed)):
            raise SolverError("non-finite entries in the influence matrix")
        t1 = time.perf_counter()
        if keep_matrix is None:
            keep_matrix = len(f) <= KEEP_MATRIX_LIMIT
        anorm = np.linalg.norm(self._P, 1) if len(f) else 0.0
        self._lu = sla.lu_factor(self._P, overwrite_a=not keep_matrix, check_finite=False)
        if not keep_matrix:
            self._P = None
        self.rcond = None
        if check_condition and len(f):
            gecon = sla.get_lapack_funcs("gecon", (self._lu[0],))
            self.rcond, _ = gecon(self._lu[0], anorm, norm="1")
            if not self.rcond > 10 * np.finfo(float).eps:
                raise SolverError("boundary system is singular or ill-conditioned", self.rcond)
        log.info("assembled %d panels in %.1fs, factored in %.1fs",
                 len(mesh), t1 - t0, time.perf_counter() - t1)

    def rhs(self, excitation):
        mesh = self.mesh
        _validate_excitation(mesh, excitation)
        v_all = np.zeros(len(mesh))
        for (bid, seg), volts in excitation.conductor_potentials.items():
            v_all[mesh.body_mask(bid, seg)] = volts
        sigma_fixed = np.zeros(len(mesh))
        for bid, dens in excitation.fixed_charges.items():
            sigma_fixed[mesh.body_mask(bid)] = dens
        b = v_all[self.free]
        if self.fixed_idx.size:
            b = b - self._P_fixed @ sigma_fixed[self.fixed_idx]
        return b, sigma_fixed

    def solve(self, excitation):
        b, sigma_fixed = self.rhs(excitation)
        sigma = sigma_fixed.copy()
        if self.free.size:
            x = sla.lu_solve(self._lu, b, check_finite=False)
            if not np.all(np.isfinite(x)):
                raise SolverError("non-finite solution", self.rcond)
            sigma[self.free] = x
            scale = max(np.linalg.norm(b), np.finfo(float).tiny)
            resid = float(np.linalg.norm(self._apply(x) - b) / scale) if np.any(b) else 0.0
        else:
            resid = 0.0
        return BoundarySolution(self.mesh, sigma, excitation, resid, self.near_factor)


    def _apply(self, x):
        """P @ x for the free panels, from the stored matrix or matrix-free."""
        if self._P is not None:
            return self._P @ x
        m = self.mesh
        f = self.free
        out = _kernels.superpose(np.ascontiguousarray(m.centroids[f]),
                                 np.ascontiguousarray(m.verts[f]),
                                 np.ascontiguousarray(m.normals[f]),
                                 np.ascontiguousarray(m.centroids[f]), m.areas[f],
                                 m.diameters[f], self.near_factor,
                                 np.ascontiguousarray(x), False)
        return K_E * out[:, 0]


def assemble_and_solve(mesh, excitation, near_factor=np.inf):
    return BoundarySolver(mesh, near_factor).solve(excitation)


@dataclass(frozen=True, eq=False)
class BoundarySolution:
    """Panel charge densities (C/m^2) plus the excitation that produced them."""

    mesh: object
    sigma: np.ndarray
    excitation: Excitation
    residual_norm: float
    near_factor: float = np.inf

    def charge(self, body_id=None, segment=None):
        """Total charge (C) on one body/segment or on the whole mesh."""
        q = self.sigma * self.mesh.areas
        if body_id is None:
            return float(q.sum())
        return float(q[self.mesh.body_mask(body_id, segment)].sum())

    def box_charge(self):
        return self.charge(BOX_ID) if BOX_ID in self.mesh.body_ids else 0.0

    def _eval(self, points, want_grad):
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        m = self.mesh
        return _kernels.superpose(pts, np.ascontiguousarray(m.verts),
                                  np.ascontiguousarray(m.normals), m.centroids, m.areas,
                                  m.diameters, self.near_factor,
                                  np.ascontiguousarray(self.sigma), want_grad)

    def _check_inside(self, pts):
        for bid, body in self.mesh.solids.items():
            if body.is_conductor and body.contains(pts).any():
                raise InsideConductorError(f"evaluation point inside conductor {bid!r}")

    def potential_at(self, points):
        """Potential (V) at one point (3,) or many (M, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._check_inside(pts)
        phi = K_E * self._eval(pts, False)[:, 0]
        return phi[0] if np.ndim(points) == 1 else phi

    def field_at(self, points, warn=True):
        """Electric field E = -grad(phi) in V/m at one point or many."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._check_inside(pts)
        if warn and len(self.mesh):
            rel = _kernels.nearest_relative_distance(
                np.ascontiguousarray(pts), self.mesh.centroids, self.mesh.diameters)
            if np.any(rel < 1.0):
                i = int(np.argmin(rel))
                warnings.warn(NearSurfaceWarning(
                    f"point {pts[i]} lies within {rel[i]:.2f} panel diameters of a panel "
                    "centroid; field accuracy not guaranteed"), stacklevel=2)
        E = -K_E * self._eval(pts, True)[:, 1:]
        return E[0] if np.ndim(points) == 1 else E

    def potential_and_field(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._check_inside(pts)
        out = self._eval(pts, True)
        return K_E * out[:, 0], -K_E * out[:, 1:]

    def sigma_csv(self):
        m = self.mesh
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["panel", "body", "segment", "cx_m", "cy_m", "cz_m", "area_m2",
                    "sigma_C_per_m2"])
        c, a = m.centroids, m.areas
        for i in range(len(m)):
            w.writerow([i, m.body_ids[m.body[i]], int(m.segment[i])]
                       + [repr(float(x)) for x in c[i]] + [repr(float(a[i])),
                                                            repr(float(self.sigma[i]))])
        return buf.getvalue()

    def field_grid_csv(self, points):
        phi, E = self.potential_and_field(points)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x_m", "y_m", "z_m", "Ex_V_per_m", "Ey_V_per_m", "Ez_V_per_m", "phi_V"])
        for p, e, f in zip(np.atleast_2d(points), E, phi):
            w.writerow([repr(float(x)) for x in (*p, *e, f)])
        return buf.getvalue()


def potential_at(sol, p):
    return sol.potential_at(p)


def field_at(sol, p):
    return sol.field_at(p)
