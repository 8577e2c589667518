"""Command-line front end: single solves, optics sweeps, fiber shielding, noise.

Subcommands
-----------
``solve <scene>``     analyze one scene (INI file or built-in name)
``study <spec>``      sweep an optic over distances (study name or INI spec file)
``fiber``             shielded-fiber field beyond the tube end
``noise [config]``    Johnson-noise heating rate of a filter chain
``validate``          analytic oracle suite plus a mesh-convergence check

Exit codes: 0 success, 1 usage error, 2 validation failure (bad config, failed
oracle), 3 solver or meshing failure.  Every CSV starts with a ``#`` line
carrying the SHA-256 of the inputs that produced it, followed by a header row
whose column names end in their unit.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .field_solver import BoundarySolver, Excitation, NearSurfaceWarning, SolverError
from .mesher import MeshBudgetError, MeshParams, mesh_scene
from .noise_model import NoiseConfigError, chain_report, load_noise_config, default_chain_config_text
from .scene import (BUILTIN_RANGES, FIBER_CHARGE, SceneParseError, SceneValidationError,
                    builtin_scene, dump_scene, fiber_scene, load_scene)
from .trap_analysis import TrapReport, analyze_scene, static_excitation

__all__ = ["SweepSpec", "ThresholdVerdict", "StudyResult", "FiberResult", "run_study",
           "run_fiber_shield", "run_noise", "validate", "load_sweep_spec", "main",
           "STUDY_SCENES", "DEFAULT_DISTANCES", "FIBER_MESH"]

log = logging.getLogger("chiptrap")

STUDY_SCENES = {
    "on_axis": "optic_on_axis",
    "between_chips": "optic_between_chips",
    "both_sides": "optics_both_sides",
    "fiber_shield": "shielded_fiber",
}

DEFAULT_DISTANCES = {
    "on_axis": (3.0, 4.0, 5.0, 7.0, 9.0, 11.0, 13.0),
    "between_chips": (0.5, 1.0, 1.25, 1.5, 1.75, 2.0, 3.0, 5.0, 7.0, 9.0),
    "both_sides": (1.0, 1.25, 1.5, 1.75, 2.0, 3.0, 5.0, 7.0, 9.0),
    "fiber_shield": (0.5, 1.0, 2.0),
}

OUTPUTS = frozenset({"axial_profile", "gradient", "secular", "thresholds"})

#: Residual axial RF field tolerated (V/m).  It is judged both at the ion
#: (``abs_ez_ion``) and as the largest value over the sampled axial window
#: (``max_abs_ez``, by default the central +-1 mm segment).
EZ_THRESHOLD = 100.0

#: Secular-frequency change limits (%) reported per study.
DNU_THRESHOLDS = {
    "on_axis": (0.5, 1.0),
    "between_chips": (1.0, 5.0),
    "both_sides": (1.0,),
    "fiber_shield": (),
}

#: Fiber study: finer panels at the tube mouth and rounder cylinders.
FIBER_MESH = MeshParams(ngon=48, focus_panel_size=0.1e-3)


class UsageError(Exception):
    pass


# ------------------------------------------------------------------- specs

@dataclass(frozen=True)
class SweepSpec:
    study: str
    distances: tuple
    outputs: frozenset = OUTPUTS

    def __post_init__(self):
        if self.study not in STUDY_SCENES:
            raise ValueError(f"unknown study {self.study!r}; choose from {sorted(STUDY_SCENES)}")
        if not self.distances:
            raise ValueError("distance list is empty")
        lo, hi = BUILTIN_RANGES[STUDY_SCENES[self.study]]
        bad = [d for d in self.distances if not lo <= d <= hi]
        if bad:
            raise ValueError(f"{self.study}: distances {bad} outside [{lo:g}, {hi:g}] mm")
        unknown = set(self.outputs) - OUTPUTS
        if unknown:
            raise ValueError(f"unknown outputs {sorted(unknown)}")
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        object.__setattr__(self, "outputs", frozenset(self.outputs))


def _float_list(text):
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def load_sweep_spec(text):
    """Parse ``[study]`` with keys ``study``, ``distances`` (mm) and ``outputs``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
        sec = cp["study"]
        study = sec["study"].strip()
        dist = sec.get("distances")
        distances = _float_list(dist) if dist is not None else DEFAULT_DISTANCES.get(study, ())
        outputs = sec.get("outputs")
        outs = {o.strip() for o in outputs.split(",") if o.strip()} if outputs else OUTPUTS
        return SweepSpec(study, tuple(distances), frozenset(outs))
    except (configparser.Error, KeyError) as exc:
        raise ValueError(f"bad study spec: {exc}") from exc


# ---------------------------------------------------------------- verdicts

@dataclass(frozen=True)
class ThresholdVerdict:
    """``value < threshold`` per distance, with interpolated crossings (mm)."""

    metric: str
    threshold: float
    unit: str
    distances: tuple
    values: tuple
    passed: tuple
    crossings: tuple

    @classmethod
    def build(cls, metric, threshold, unit, distances, values):
        d = np.asarray(distances, dtype=float)
        v = np.asarray(values, dtype=float)
        ok = tuple(bool(np.isfinite(x) and x < threshold) for x in v)
        cross = []
        for i in range(len(d) - 1):
            if ok[i] != ok[i + 1] and np.isfinite(v[i]) and np.isfinite(v[i + 1]) \
                    and v[i] != v[i + 1]:
                t = (threshold - v[i]) / (v[i + 1] - v[i])
                cross.append(float(d[i] + min(max(t, 0.0), 1.0) * (d[i + 1] - d[i])))
        return cls(metric, float(threshold), unit, tuple(d.tolist()), tuple(v.tolist()), ok,
                   tuple(cross))

    @property
    def crossing(self):
        return self.crossings[0] if self.crossings else None

    @property
    def all_pass(self):
        return all(self.passed)


# ------------------------------------------------------------------ hashing

def config_hash(*parts):
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return "" if x is None else str(x)


def _csv(rows, header, digest, note=""):
    buf = io.StringIO()
    buf.write(f"# chiptrap {__version__} config_sha256={digest}{' ' + note if note else ''}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


# ------------------------------------------------------------------- studies

@dataclass(frozen=True)
class StudyPoint:
    distance: float
    report: TrapReport | None
    error: str | None = None


@dataclass(frozen=True)
class StudyResult:
    spec: SweepSpec
    reference: TrapReport
    points: tuple
    verdicts: tuple
    digest: str
    params: MeshParams = field(default_factory=MeshParams)

    def verdict(self, metric):
        for v in self.verdicts:
            if v.metric == metric:
                return v
        raise KeyError(metric)

    def summary_csv(self):
        outs = self.spec.outputs
        head = ["distance_mm", "panels", "ez_ion_V_per_m", "max_abs_ez_V_per_m"]
        if "gradient" in outs:
            head.append("gradient_V_per_m2")
        if "secular" in outs:
            head += ["nu_z_Hz", "delta_nu_z_pct", "nu_r1_Hz", "nu_r2_Hz", "q_r_1", "D_mm"]
        head += ["flags", "error"]
        rows = [self._row(self.reference, None, outs, None)]
        for p in self.points:
            rows.append(self._row(p.report, p.distance, outs, p.error))
        return _csv(rows, head, self.digest, f"study={self.spec.study}")

    @staticmethod
    def _row(rep, d, outs, error):
        if rep is None:
            n = 4 + ("gradient" in outs) + 6 * ("secular" in outs)
            return [d] + [None] * (n - 1) + [None, error]
        row = [d, rep.n_panels, rep.profile.ez_ion, rep.profile.max_abs_ez]
        if "gradient" in outs:
            row.append(rep.profile.gradient)
        if "secular" in outs:
            s = rep.secular
            row += [s.nu_z, rep.deltas.get("nu_z") if rep.deltas else None, s.nu_r1, s.nu_r2,
                    s.q_r, None if rep.distance is None else rep.distance * 1e3]
        return row + ["; ".join(rep.secular.flags), error]

    def profiles_csv(self):
        z = self.reference.profile.z
        cols = [("baseline", self.reference)] + [(f"d={p.distance:g}mm", p.report)
                                                 for p in self.points if p.report is not None]
        head = ["z_mm"] + [f"ez_{name}_V_per_m" for name, _ in cols]
        rows = [[zi * 1e3] + [rep.profile.ez[i] for _, rep in cols] for i, zi in enumerate(z)]
        return _csv(rows, head, self.digest, f"study={self.spec.study}")

    def verdicts_csv(self):
        head = ["metric", "threshold", "unit", "distance_mm", "value", "pass", "crossing_mm"]
        rows = []
        for v in self.verdicts:
            cross = ";".join(f"{c:.6g}" for c in v.crossings)
            for d, x, ok in zip(v.distances, v.values, v.passed):
                rows.append([v.metric, v.threshold, v.unit, d, x, "pass" if ok else "fail", cross])
        return _csv(rows, head, self.digest, f"study={self.spec.study}")

    def svg(self):
        series = [("baseline", self.reference.profile.z * 1e3, self.reference.profile.ez)]
        series += [(f"d = {p.distance:g} mm", p.report.profile.z * 1e3, p.report.profile.ez)
                   for p in self.points if p.report is not None]
        return svg_plot(series, "z (mm)", "E_z (V/m)", f"{self.spec.study}: axial RF field")

    def text(self):
        out = [f"study {self.spec.study}  ({len(self.points)} distances, config {self.digest})"]
        for p in self.points:
            if p.report is None:
                out.append(f"  d = {p.distance:6.3g} mm  ERROR {p.error}")
                continue
            r = p.report
            out.append(f"  d = {p.distance:6.3g} mm  max|E_z| = {r.profile.max_abs_ez:9.4g} V/m"
                       f"  dE_z/dz = {r.profile.gradient:10.4g} V/m^2"
                       f"  nu_z = {r.secular.nu_z / 1e3:8.4f} kHz"
                       f"  d_nu = {r.deltas.get('nu_z', float('nan')):+7.3f} %")
        for v in self.verdicts:
            c = ", ".join(f"{x:.3g} mm" for x in v.crossings) or "none"
            out.append(f"  {v.metric} < {v.threshold:g} {v.unit}: "
                       f"{sum(v.passed)}/{len(v.passed)} pass, crossing {c}")
        return "\n".join(out) + "\n"


def _analyze_point(args):
    name, d, params = args
    try:
        return d, analyze_scene(builtin_scene(name, d), params), None
    except (SolverError, MeshBudgetError, SceneValidationError, ValueError) as exc:
        return d, None, f"{type(exc).__name__}: {exc}"


def run_study(spec, params=None, reference=None, jobs=1):
    """Analyze every distance of ``spec`` and compare with the optic-free baseline.

    A failing distance becomes an error row; the rest of the sweep continues.
    ``jobs > 1`` runs distances in worker processes; results keep spec order.
    """
    if spec.study == "fiber_shield":
        raise ValueError("use run_fiber_shield for the fiber study")
    params = params or MeshParams()
    name = STUDY_SCENES[spec.study]
    if reference is None:
        reference = analyze_scene(builtin_scene("baseline"), params)
    tasks = [(name, d, params) for d in spec.distances]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_analyze_point, tasks))
    else:
        results = []
        for t in tasks:
            log.info("%s d=%g mm", name, t[1])
            results.append(_analyze_point(t))
    points = tuple(StudyPoint(d, rep.compared_to(reference) if rep else None, err)
                   for d, rep, err in results)
    verdicts = _study_verdicts(spec, points) if "thresholds" in spec.outputs else ()
    digest = config_hash(spec, params, dump_scene(builtin_scene("baseline")),
                         [dump_scene(builtin_scene(name, d)) for d in spec.distances])
    return StudyResult(spec, reference, points, verdicts, digest, params)


def _study_verdicts(spec, points):
    ds = [p.distance for p in points]
    nan = float("nan")
    ez0 = [abs(p.report.profile.ez_ion) if p.report else nan for p in points]
    ez = [p.report.profile.max_abs_ez if p.report else nan for p in points]
    out = [ThresholdVerdict.build("abs_ez_ion", EZ_THRESHOLD, "V/m", ds, ez0),
           ThresholdVerdict.build("max_abs_ez", EZ_THRESHOLD, "V/m", ds, ez)]
    dnu = [abs(p.report.deltas["nu_z"]) if p.report else nan for p in points]
    for t in DNU_THRESHOLDS[spec.study]:
        out.append(ThresholdVerdict.build(f"abs_delta_nu_z_{t:g}pct", t, "%", ds, dnu))
    return tuple(out)


# --------------------------------------------------------------------- fiber

@dataclass(frozen=True)
class FiberResult:
    protrusions: tuple
    charge: float
    z: np.ndarray
    ez: tuple
    digest: str

    def max_abs(self, i):
        return float(np.max(np.abs(self.ez[i])))

    def at(self, i, z):
        return float(np.interp(z, self.z, np.abs(self.ez[i])))

    def field_csv(self):
        head = ["z_mm"] + [f"ez_protrusion_{p:g}mm_V_per_m" for p in self.protrusions]
        rows = [[zi * 1e3] + [e[k] for e in self.ez] for k, zi in enumerate(self.z)]
        return _csv(rows, head, self.digest, f"study=fiber_shield charge={self.charge:g}e/um2")

    def summary_csv(self):
        head = ["protrusion_mm", "max_abs_ez_V_per_m", "abs_ez_at_0.5mm_V_per_m",
                "below_100_V_per_m", "below_1_V_per_m_at_0.5mm"]
        rows = []
        for i, p in enumerate(self.protrusions):
            m, half = self.max_abs(i), self.at(i, 0.5e-3)
            rows.append([p, m, half, "pass" if m < 100 else "fail",
                         "pass" if half < 1 else "fail"])
        return _csv(rows, head, self.digest, f"study=fiber_shield charge={self.charge:g}e/um2")

    def svg(self):
        return svg_plot([(f"protrusion {p:g} mm", self.z * 1e3, e)
                         for p, e in zip(self.protrusions, self.ez)],
                        "distance from tube end (mm)", "E_z (V/m)", "shielded fiber")

    def text(self):
        out = [f"fiber shielding, charge {self.charge:g} e/um^2 (config {self.digest})"]
        for i, p in enumerate(self.protrusions):
            out.append(f"  protrusion {p:g} mm: max|E_z| beyond tube end = {self.max_abs(i):.4g} V/m,"
                       f" |E_z|(0.5 mm) = {self.at(i, 0.5e-3):.4g} V/m")
        return "\n".join(out) + "\n"


def run_fiber_shield(protrusions, charge=FIBER_CHARGE, params=None, z_max=5e-3, samples=101):
    """E_z on the axis from the tube end (z = 0) out to ``z_max``.

    ``charge`` is the fiber facet charge in electrons per um^2 (sign: electrons,
    so a positive number means a negative surface charge).
    """
    protrusions = tuple(float(p) for p in protrusions)
    if not protrusions:
        raise ValueError("protrusion list is empty")
    params = params or FIBER_MESH
    z = np.linspace(0.0, z_max, samples)
    pts = np.outer(z, [0.0, 0.0, 1.0])
    ez = []
    scenes = []
    for p in protrusions:
        scene = fiber_scene(p, charge)
        scenes.append(dump_scene(scene))
        sol = BoundarySolver(mesh_scene(scene, params)).solve(static_excitation(scene))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearSurfaceWarning)
            ez.append(np.asarray(sol.field_at(pts))[:, 2])
    return FiberResult(protrusions, float(charge), z, tuple(ez),
                       config_hash(params, scenes, z_max, samples))


# --------------------------------------------------------------------- noise

def run_noise(config_text=None, sweep_omega=None):
    """Heating-rate report for a noise config, optionally over a secular-frequency grid.

    ``sweep_omega`` is an iterable of angular frequencies (rad/s).  Returns
    ``(estimate, sweep_rows, digest)``.
    """
    text = default_chain_config_text() if config_text is None else config_text
    chain, p = load_noise_config(text)
    est = chain_report(chain, **p)
    rows = []
    if sweep_omega is not None:
        for w in sweep_omega:
            e = chain_report(chain, w, p["mass"], p["distance"], p["charge"])
            rows.append([w, w / (2 * math.pi), e.r_eff, e.s_v, e.heating_rate])
    return est, rows, config_hash(text, None if sweep_omega is None else list(sweep_omega))


# ------------------------------------------------------------------ validate

def validate(convergence=True):
    from .validation import run_all
    return run_all(convergence)


# ----------------------------------------------------------------------- svg

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")


def svg_plot(series, xlabel, ylabel, title, width=640, height=400):
    """Minimal line plot as a standalone SVG string."""
    ml, mr, mt, mb = 70, 150, 30, 45
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{ml + pw / 2}" y="18" text-anchor="middle">{title}</text>',
           f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{xlabel}</text>',
           f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" '
           f'transform="rotate(-90 14 {mt + ph / 2})">{ylabel}</text>']
    for v in np.linspace(x0, x1, 5):
        out.append(f'<text x="{px(v):.1f}" y="{mt + ph + 15}" text-anchor="middle">{v:.3g}</text>')
    for v in np.linspace(y0, y1, 5):
        out.append(f'<text x="{ml - 5}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    for k, (label, x, y) in enumerate(series):
        c = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 14 * (k + 1)
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------- CLI

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _mesh_params(args, base=None):
    p = base or MeshParams()
    if args.mesh_size is not None:
        if not args.mesh_size > 0:
            raise UsageError("--mesh-size must be positive")
        p = p.scaled(args.mesh_size * 1e-3 / p.base_panel_size)
    if args.refine is not None:
        if not args.refine > 0:
            raise UsageError("--refine must be positive")
        p = p.scaled(1.0 / args.refine)
    return p


def _write(out_dir, files):
    """Write all files at once, only after every computation succeeded."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text)
        log.info("wrote %s", out_dir / name)


def _load_scene_arg(arg, distance):
    if arg in BUILTIN_RANGES or arg == "baseline":
        return builtin_scene(arg, distance)
    path = Path(arg)
    if not path.is_file():
        raise UsageError(f"{arg!r} is neither a built-in scene nor a file")
    if distance is not None:
        raise UsageError("--distance applies to built-in scenes only")
    return load_scene(path.read_text())


def _cmd_solve(args):
    scene = _load_scene_arg(args.scene, args.distance)
    params = _mesh_params(args)
    mesh = mesh_scene(scene, params)
    solver = BoundarySolver(mesh)
    rep = analyze_scene(scene, params, solver=solver)
    digest = config_hash(dump_scene(scene), params)
    stem = _safe(scene.name)
    prof = rep.profile
    files = {
        f"{stem}_report.csv": f"# chiptrap {__version__} config_sha256={digest}\n" + rep.to_csv(),
        f"{stem}_profile.csv": _csv([[z * 1e3, e] for z, e in zip(prof.z, prof.ez)],
                                    ["z_mm", "ez_V_per_m"], digest),
    }
    if args.sigma:
        exc = static_excitation(scene)
        files[f"{stem}_sigma.csv"] = f"# chiptrap {__version__} config_sha256={digest}\n" \
            + solver.solve(exc).sigma_csv()
    if args.format == "svg":
        files[f"{stem}_profile.svg"] = svg_plot([(scene.name, prof.z * 1e3, prof.ez)],
                                                "z (mm)", "E_z (V/m)", scene.name)
    sys.stdout.write(rep.text())
    _write(args.out_dir, files)
    return 0


def _safe(name):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name).strip("_")


def _cmd_study(args):
    if args.spec in STUDY_SCENES:
        dist = _float_list(args.distances) if args.distances is not None \
            else DEFAULT_DISTANCES[args.spec]
        try:
            spec = SweepSpec(args.spec, tuple(dist))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        path = Path(args.spec)
        if not path.is_file():
            raise UsageError(f"{args.spec!r} is neither a study name nor a spec file")
        try:
            spec = load_sweep_spec(path.read_text())
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    if spec.study == "fiber_shield":
        return _run_fiber(args, spec.distances, FIBER_CHARGE)
    res = run_study(spec, _mesh_params(args), jobs=args.jobs)
    files = {f"{spec.study}_summary.csv": res.summary_csv()}
    if "axial_profile" in spec.outputs:
        files[f"{spec.study}_profiles.csv"] = res.profiles_csv()
    if "thresholds" in spec.outputs:
        files[f"{spec.study}_verdicts.csv"] = res.verdicts_csv()
    if args.format == "svg":
        files[f"{spec.study}_profiles.svg"] = res.svg()
    sys.stdout.write(res.text())
    _write(args.out_dir, files)
    if all(p.report is None for p in res.points):
        return 3
    return 0


def _run_fiber(args, protrusions, charge):
    res = run_fiber_shield(protrusions, charge, _mesh_params(args, FIBER_MESH))
    files = {"fiber_field.csv": res.field_csv(), "fiber_summary.csv": res.summary_csv()}
    if args.format == "svg":
        files["fiber_field.svg"] = res.svg()
    sys.stdout.write(res.text())
    _write(args.out_dir, files)
    return 0


def _cmd_fiber(args):
    prot = _float_list(args.protrusions)
    if not prot:
        raise UsageError("protrusion list is empty")
    return _run_fiber(args, prot, args.charge)


def _cmd_noise(args):
    text = None
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"no such config file {args.config!r}")
        text = path.read_text()
    sweep = None
    if args.sweep_omega:
        lo, hi, n = args.sweep_omega
        sweep = 2 * math.pi * np.linspace(lo, hi, int(n))
    est, rows, digest = run_noise(text, sweep)
    files = {"noise_report.csv": _csv([list(r) for r in est.rows()], ["quantity", "unit", "value"],
                                      digest)}
    if rows:
        files["noise_sweep.csv"] = _csv(rows, ["omega_sec_rad_per_s", "nu_sec_Hz", "r_eff_ohm",
                                               "s_v_V2_per_Hz", "heating_rate_per_s"], digest)
        if args.format == "svg":
            files["noise_sweep.svg"] = svg_plot(
                [("heating rate", [r[1] / 1e3 for r in rows], [r[4] for r in rows])],
                "secular frequency (kHz)", "heating rate (1/s)", "Johnson-noise heating")
    sys.stdout.write(est.text())
    _write(args.out_dir, files)
    return 0


def _cmd_validate(args):
    checks = validate(convergence=not args.quick)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print("all checks passed" if ok else "validation FAILED")
    return 0 if ok else 2


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mesh-size", type=float, metavar="MM",
                        help="base panel size in mm; focus and box sizes scale with it")
    common.add_argument("--refine", type=float, metavar="F",
                        help="divide every panel size by F (graded re-mesh)")
    common.add_argument("--out-dir", type=Path, default=Path("."), metavar="DIR")
    common.add_argument("--format", choices=("csv", "svg"), default="csv",
                        help="svg adds a quick-look plot next to the CSV files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="chiptrap", description="Electrostatics and noise analysis for chip Paul traps")
    p.add_argument("--version", action="version", version=f"chiptrap {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", parents=[common], help="analyze one scene")
    s.add_argument("scene", help="INI scene file or built-in name")
    s.add_argument("--distance", type=float, metavar="MM", help="distance for built-in optics scenes")
    s.add_argument("--sigma", action="store_true", help="also dump panel charge densities")
    s.set_defaults(func=_cmd_solve)

    s = sub.add_parser("study", parents=[common], help="sweep an optic over distances")
    s.add_argument("spec", help=f"study name ({', '.join(STUDY_SCENES)}) or INI spec file")
    s.add_argument("--distances", metavar="LIST", help="comma-separated distances in mm")
    s.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    s.set_defaults(func=_cmd_study)

    s = sub.add_parser("fiber", parents=[common], help="shielded-fiber field beyond the tube")
    s.add_argument("--protrusions", default="1", metavar="LIST",
                   help="tube protrusions beyond the fiber end, mm")
    s.add_argument("--charge", type=float, default=FIBER_CHARGE,
                   help="facet charge in electrons per um^2")
    s.set_defaults(func=_cmd_fiber)

    s = sub.add_parser("noise", parents=[common], help="Johnson-noise heating rate")
    s.add_argument("config", nargs="?", help="INI file with a [noise] section (default: shipped chain)")
    s.add_argument("--sweep-omega", nargs=3, type=float, metavar=("LO_HZ", "HI_HZ", "N"),
                   help="also tabulate the rate for N secular frequencies in [LO, HI] Hz")
    s.set_defaults(func=_cmd_noise)

    s = sub.add_parser("validate", parents=[common], help="analytic oracle suite")
    s.add_argument("--quick", action="store_true", help="skip the mesh-convergence check")
    s.set_defaults(func=_cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"chiptrap: error: {exc}", file=sys.stderr)
        return 1
    except (SceneParseError, SceneValidationError, NoiseConfigError) as exc:
        print(f"chiptrap: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (SolverError, MeshBudgetError) as exc:
        print(f"chiptrap: solver failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"chiptrap: invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
