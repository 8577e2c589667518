"""Trap physics from field solutions: axial RF profile, secular frequencies, D.

Every function here takes *field sources*: any object with vectorized
``potential_at(points)`` and ``field_at(points)`` methods in SI units.  A
:class:`~chiptrap.field_solver.BoundarySolution` is one; analytic test fields
are another.  RF sources are expected to be solved at the actual drive
amplitude, so their fields are physical amplitudes.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants as ct

from .field_solver import BoundarySolver, Excitation, NearSurfaceWarning

__all__ = ["AxialProfile", "SecularResult", "TrapReport", "DistanceError",
           "axial_rf_profile", "pseudopotential_at", "secular_frequencies",
           "characteristic_distance", "rf_excitation", "dc_excitation", "pair_excitation",
           "static_excitation", "analyze_scene"]


class DistanceError(ValueError):
    """Field at the ion too small for a meaningful characteristic distance."""


def _pts(points):
    return np.atleast_2d(np.asarray(points, dtype=float))


def _field(src, points):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearSurfaceWarning)
        return np.atleast_2d(src.field_at(_pts(points)))


def _potential(src, points):
    return np.atleast_1d(src.potential_at(_pts(points)))


def _five_point(f_m2, f_m1, f_p1, f_p2, h):
    return (f_m2 - 8 * f_m1 + 8 * f_p1 - f_p2) / (12 * h)


# ----------------------------------------------------------------- excitations

def rf_excitation(scene, amplitude=None):
    """RF electrodes at the drive amplitude, every other conductor grounded."""
    v = scene.rf_amplitude if amplitude is None else amplitude
    return Excitation({(b.id, k): v for b in scene.bodies if b.id in scene.rf_body_ids
                       for k in range(b.n_segments)})


def dc_excitation(scene, voltage=None):
    """Axial-confinement segments at ``dc_voltage``, everything else grounded."""
    v = scene.dc_voltage if voltage is None else voltage
    return Excitation({ref: v for ref in scene.dc_segments})


def pair_excitation(refs, voltage=1.0):
    return Excitation({tuple(ref): voltage for ref in refs})


def static_excitation(scene):
    """Conductor potentials and dielectric charges as written in the scene."""
    pots, fixed = {}, {}
    for b in scene.bodies:
        if b.is_conductor:
            for k in range(b.n_segments):
                pots[(b.id, k)] = b.segment_potential(k)
        else:
            fixed[b.id] = b.charge_density
    return Excitation(pots, fixed)


# --------------------------------------------------------------- axial profile

@dataclass(frozen=True)
class AxialProfile:
    """E_z sampled on the trap axis plus the stencil gradient at the ion.

    ``z`` is measured from the ion (m).  ``gradient`` (V/m^2) uses a 5-point
    central stencil of step ``step`` around the ion.
    """

    z: np.ndarray
    ez: np.ndarray
    gradient: float
    ez_ion: float
    step: float

    @property
    def max_abs_ez(self):
        return float(np.max(np.abs(self.ez)))


def axial_rf_profile(sol_rf, z_range=(-1e-3, 1e-3), n=81, ion=(0.0, 0.0, 0.0), step=10e-6):
    """Sample E_z along the axis through ``ion`` and differentiate at the ion.

    Parameters
    ----------
    sol_rf : field source
        RF solution at the drive amplitude.
    z_range : (float, float)
        Axial window relative to the ion (m).
    n : int
        Number of samples (>= 2).
    """
    if n < 2:
        raise ValueError("need at least two samples")
    z0, z1 = z_range
    if not z1 > z0:
        raise ValueError("z_range must be increasing")
    ion = np.asarray(ion, dtype=float)
    z = np.linspace(z0, z1, n)
    ez = _field(sol_rf, ion + np.outer(z, [0.0, 0.0, 1.0]))[:, 2]
    stencil = ion + np.outer(np.array([-2, -1, 0, 1, 2]) * step, [0.0, 0.0, 1.0])
    e = _field(sol_rf, stencil)[:, 2]
    grad = _five_point(e[0], e[1], e[3], e[4], step)
    return AxialProfile(z, ez, float(grad), float(e[2]), step)


# ------------------------------------------------------------ pseudopotential

def pseudopotential_at(sol_rf, points, omega, mass, charge=ct.e):
    """Ponderomotive energy Q^2 |E|^2 / (4 m Omega^2) in joules."""
    if not omega > 0:
        raise ValueError("RF angular frequency must be positive")
    E = _field(sol_rf, points)
    psi = charge ** 2 * np.einsum("ij,ij->i", E, E) / (4 * mass * omega ** 2)
    return psi[0] if np.ndim(points) == 1 else psi


@dataclass(frozen=True)
class SecularResult:
    """Secular frequencies (Hz) and the RF stability parameter.

    Non-positive curvatures give ``nan`` frequencies and an entry in ``flags``.
    """

    nu_z: float
    nu_r1: float
    nu_r2: float
    q_r: float
    k_z: float
    radial_curvatures: tuple
    fit_window: float
    fit_samples: int
    hessian_step: float
    fit_residual: float
    flags: tuple = ()


def _freq(k, mass):
    return float(np.sqrt(k / mass) / (2 * np.pi)) if k > 0 else float("nan")


def secular_frequencies(sol_rf, sol_dc, mass, omega, charge=ct.e, ion=(0.0, 0.0, 0.0),
                        window=0.2e-3, samples=41, step=10e-6, max_fit_residual=1e-2):
    """Axial, radial frequencies and q_r at ``ion``.

    The axial spring constant comes from a quadratic fit of ``Q phi_dc(z)`` over
    ``+-window``.  Radial frequencies are eigenvalues of the xy Hessian of the
    pseudopotential plus ``Q phi_dc``, from central differences with ``step``.
    ``sol_dc`` may be ``None`` for RF-only radial analysis (then ``nu_z`` is nan).
    """
    ion = np.asarray(ion, dtype=float)
    flags = []
    k_z, resid = float("nan"), 0.0
    if sol_dc is not None:
        z = np.linspace(-window, window, samples)
        u = charge * _potential(sol_dc, ion + np.outer(z, [0.0, 0.0, 1.0]))
        coef, res, *_ = np.polyfit(z, u, 2, full=True)
        k_z = 2 * coef[0]
        fitted = np.polyval(coef, z)
        span = np.ptp(fitted) or 1.0
        resid = float(np.sqrt(np.mean((u - fitted) ** 2)) / span)
        if k_z <= 0:
            flags.append("axial curvature not positive (anti-trapping along z)")
        if resid > max_fit_residual:
            flags.append(f"axial fit residual {resid:.2g} above {max_fit_residual:g}")

    h = step
    offs = np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h],
                     [h, h], [h, -h], [-h, h], [-h, -h]])
    pts = ion + np.c_[offs, np.zeros(len(offs))]

    def energy(p):
        u = pseudopotential_at(sol_rf, p, omega, mass, charge)
        if sol_dc is not None:
            u = u + charge * _potential(sol_dc, p)
        return np.atleast_1d(u)

    u = energy(pts)
    hxx = (u[1] - 2 * u[0] + u[2]) / h ** 2
    hyy = (u[3] - 2 * u[0] + u[4]) / h ** 2
    hxy = (u[5] - u[6] - u[7] + u[8]) / (4 * h ** 2)
    curv = np.linalg.eigvalsh(np.array([[hxx, hxy], [hxy, hyy]]))
    for lam in curv:
        if lam <= 0:
            flags.append("radial curvature not positive (anti-trapping in xy)")
            break

    E = _field(sol_rf, pts[1:5])
    jac = np.array([[(E[0, 0] - E[1, 0]) / (2 * h), (E[2, 0] - E[3, 0]) / (2 * h)],
                    [(E[0, 1] - E[1, 1]) / (2 * h), (E[2, 1] - E[3, 1]) / (2 * h)]])
    A = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (jac + jac.T)))))
    q_r = 2 * charge * A / (mass * omega ** 2)
    if q_r >= 0.9:
        flags.append(f"q_r = {q_r:.3g} outside the pseudopotential regime")
    return SecularResult(_freq(k_z, mass), _freq(curv[0], mass), _freq(curv[1], mass), q_r,
                         float(k_z), tuple(float(c) for c in curv), window, samples, step,
                         resid, tuple(flags))


# ------------------------------------------------------- characteristic distance

def characteristic_distance(mesh_or_solver, refs, ion=(0.0, 0.0, 0.0), voltage=1.0,
                            floor=1e-9):
    """D = V / |E(ion)| with ``voltage`` on the electrode(s) ``refs``, all else grounded.

    ``mesh_or_solver`` is a mesh (assembled here) or a factored
    :class:`~chiptrap.field_solver.BoundarySolver` (reused).  ``refs`` is a list
    of ``(body_id, segment)`` pairs.  Raises :class:`DistanceError` when the
    field is below ``floor`` V/m per applied volt.
    """
    refs = [tuple(r) for r in refs]
    if not refs:
        raise ValueError("no electrodes given")
    solver = mesh_or_solver if isinstance(mesh_or_solver, BoundarySolver) \
        else BoundarySolver(mesh_or_solver)
    sol = solver.solve(pair_excitation(refs, voltage))
    E = _field(sol, np.asarray(ion, dtype=float))[0]
    mag = float(np.linalg.norm(E))
    if not mag > floor * abs(voltage):
        raise DistanceError(f"|E(ion)| = {mag:.3g} V/m for {voltage} V: electrodes "
                            "too symmetric about the ion, D diverges")
    return abs(voltage) / mag


# ------------------------------------------------------------------- reports

_DELTA_KEYS = ("nu_z", "nu_r1", "nu_r2", "ez_ion", "gradient", "distance")


@dataclass(frozen=True)
class TrapReport:
    """Trap figures of one solved scene, optionally compared with a reference."""

    scene: str
    profile: AxialProfile
    secular: SecularResult
    distance: float | None = None
    n_panels: int = 0
    reference: str | None = None
    deltas: dict = field(default_factory=dict)

    def values(self):
        return {"nu_z": self.secular.nu_z, "nu_r1": self.secular.nu_r1,
                "nu_r2": self.secular.nu_r2, "ez_ion": self.profile.ez_ion,
                "gradient": self.profile.gradient,
                "distance": float("nan") if self.distance is None else self.distance}

    def compared_to(self, ref):
        """Copy with relative changes (%) against the report ``ref``."""
        mine, theirs = self.values(), ref.values()
        deltas = {}
        for k in _DELTA_KEYS:
            b = theirs[k]
            deltas[k] = 100.0 * (mine[k] - b) / b if b not in (0.0,) and np.isfinite(b) \
                else float("nan")
        return replace(self, reference=ref.scene, deltas=deltas)

    def rows(self):
        s = self.secular
        rows = [("scene", "", self.scene), ("panels", "1", self.n_panels),
                ("ez_ion", "V/m", self.profile.ez_ion),
                ("max_abs_ez", "V/m", self.profile.max_abs_ez),
                ("gradient", "V/m^2", self.profile.gradient),
                ("nu_z", "Hz", s.nu_z), ("nu_r1", "Hz", s.nu_r1), ("nu_r2", "Hz", s.nu_r2),
                ("q_r", "1", s.q_r),
                ("distance", "m", float("nan") if self.distance is None else self.distance)]
        if self.reference is not None:
            rows.append(("reference", "", self.reference))
            rows += [(f"delta_{k}", "%", v) for k, v in self.deltas.items()]
        return rows

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "unit", "value"])
        for name, unit, v in self.rows():
            w.writerow([name, unit, repr(float(v)) if isinstance(v, (float, np.floating)) else v])
        return buf.getvalue()

    def text(self):
        out = []
        for name, unit, v in self.rows():
            val = f"{v:.6g}" if isinstance(v, (float, np.floating)) else str(v)
            out.append(f"{name:>14s} = {val} {unit}".rstrip())
        out += [f"flag: {f}" for f in self.secular.flags]
        return "\n".join(out) + "\n"


def analyze_scene(scene, params=None, z_range=(-1e-3, 1e-3), n=81, solver=None):
    """Mesh, solve RF / DC / D excitations once each and build a :class:`TrapReport`."""
    from .mesher import mesh_scene

    if solver is None:
        solver = BoundarySolver(mesh_scene(scene, params))
    ion = np.asarray(scene.ion_position, dtype=float)
    sol_rf = solver.solve(rf_excitation(scene))
    sol_dc = solver.solve(dc_excitation(scene)) if scene.dc_segments else None
    profile = axial_rf_profile(sol_rf, z_range, n, ion)
    sec = secular_frequencies(sol_rf, sol_dc, scene.species_mass, scene.rf_omega,
                              scene.charge, ion)
    dist = characteristic_distance(solver, scene.d_pair, ion) if scene.d_pair else None
    return TrapReport(scene.name, profile, sec, dist, len(solver.mesh))
