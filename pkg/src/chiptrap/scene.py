"""Declarative trap geometry: bodies, grounded box, RF drive and ion species.

Scenes are read from INI-style text (``[units]``, ``[scene]``, ``[box]``,
``[drive]``, ``[species]``, ``[trap]``, ``[body.<id>]`` sections).  Values are
converted to SI on load; :func:`dump_scene` writes SI units with ``repr`` floats
so that ``load_scene(dump_scene(s)) == s`` holds bit for bit.

Coordinate convention for the built-in trap: ``z`` is the trap axis, the two
chips are stacked along ``x`` (inner faces at x = +-0.5 mm) and each chip has
its 1 mm slot centred on y = 0.  Cuboid sizes are given as world (x, y, z)
extents, i.e. (width, height, length) for the trap electrodes.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from scipy import constants as ct

__all__ = [
    "Body", "Cuboid", "Cylinder", "Scene", "SlitPattern",
    "SceneParseError", "SceneValidationError",
    "load_scene", "dump_scene", "builtin_scene", "validate_scene",
    "BUILTIN_RANGES",
]

AXES = {"x": 0, "y": 1, "z": 2}

_LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6}
_FREQ_UNITS = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6}
_MASS_UNITS = {"kg": 1.0, "amu": ct.physical_constants["atomic mass constant"][0]}
_CHARGE_DENSITY_UNITS = {"C/m2": 1.0, "e/um2": ct.e / 1e-12}

CONDUCTOR = "conductor"
DIELECTRIC = "fixed_charge_dielectric"
CHARGE_SURFACES = ("all", "end")


class SceneParseError(ValueError):
    """Config text could not be parsed; carries the offending line and key."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class SceneValidationError(ValueError):
    """A scene invariant is violated."""

    def __init__(self, message, body_id=None):
        self.body_id = body_id
        super().__init__(f"[{body_id}] {message}" if body_id else message)


@dataclass(frozen=True)
class SlitPattern:
    """Slits cut across a cuboid perpendicular to ``axis``.

    ``positions`` are slit centres (world coordinate along ``axis``).  With
    ``depth=None`` the slits go all the way through and split the cuboid into
    electrically separate segments, numbered by increasing coordinate.  With a
    finite ``depth`` they are notches opening onto face ``side`` (e.g. ``"-y"``)
    and the cuboid stays one segment.
    """

    positions: tuple
    width: float
    axis: str = "z"
    depth: float | None = None
    side: str | None = None

    @property
    def through(self):
        return self.depth is None


@dataclass(frozen=True)
class Cuboid:
    center: tuple
    size: tuple
    slits: SlitPattern | None = None

    kind = "cuboid"

    @property
    def lo(self):
        return np.asarray(self.center) - 0.5 * np.asarray(self.size)

    @property
    def hi(self):
        return np.asarray(self.center) + 0.5 * np.asarray(self.size)

    def bbox(self):
        return self.lo, self.hi

    @property
    def n_segments(self):
        if self.slits is not None and self.slits.through:
            return len(self.slits.positions) + 1
        return 1

    def solid_boxes(self):
        """Axis-aligned boxes ``(lo, hi, segment)`` whose union is the solid."""
        lo, hi = self.lo, self.hi
        s = self.slits
        if s is None:
            return [(lo, hi, 0)]
        ax = AXES[s.axis]
        cuts = sorted(s.positions)
        edges = [lo[ax]]
        for c in cuts:
            edges += [c - 0.5 * s.width, c + 0.5 * s.width]
        edges.append(hi[ax])
        pieces = [(edges[2 * k], edges[2 * k + 1]) for k in range(len(cuts) + 1)]
        boxes = []
        if s.through:
            for k, (a, b) in enumerate(pieces):
                blo, bhi = lo.copy(), hi.copy()
                blo[ax], bhi[ax] = a, b
                boxes.append((blo, bhi, k))
            return boxes
        sign, nax = (-1 if s.side[0] == "-" else 1), AXES[s.side[1]]
        # full-length core behind the notches, then fingers between notches
        core_lo, core_hi = lo.copy(), hi.copy()
        if sign < 0:
            core_lo[nax] = lo[nax] + s.depth
        else:
            core_hi[nax] = hi[nax] - s.depth
        boxes.append((core_lo, core_hi, 0))
        for a, b in pieces:
            flo, fhi = lo.copy(), hi.copy()
            flo[ax], fhi[ax] = a, b
            if sign < 0:
                fhi[nax] = core_lo[nax]
            else:
                flo[nax] = core_hi[nax]
            boxes.append((flo, fhi, 0))
        return boxes

    def contains(self, points, tol=0.0):
        """True for points strictly inside the solid (shrunk by ``tol``)."""
        pts = np.atleast_2d(points)
        inside = np.zeros(len(pts), dtype=bool)
        for blo, bhi, _ in self.solid_boxes():
            inside |= np.all((pts > blo + tol) & (pts < bhi - tol), axis=1)
        return inside

    def surface_area(self):
        area = 0.0
        boxes = self.solid_boxes()
        for blo, bhi, _ in boxes:
            d = bhi - blo
            area += 2 * (d[0] * d[1] + d[1] * d[2] + d[0] * d[2])
        if self.slits is not None and not self.slits.through:
            # subtract the finger/core contact patches (counted twice)
            s = self.slits
            nax = AXES[s.side[1]]
            ax = AXES[s.axis]
            other = 3 - nax - ax
            core = boxes[0]
            for flo, fhi, _ in boxes[1:]:
                area -= 2 * (fhi[ax] - flo[ax]) * (core[1][other] - core[0][other])
        return area

    def surface_samples(self):
        pts = []
        for blo, bhi, _ in self.solid_boxes():
            c = 0.5 * (blo + bhi)
            for ax in range(3):
                for v in (blo[ax], bhi[ax]):
                    p = c.copy()
                    p[ax] = v
                    pts.append(p)
            for corner in np.array(np.meshgrid(*zip(blo, bhi))).reshape(3, -1).T:
                pts.append(corner)
        return np.array(pts)

    def translated(self, offset):
        off = np.asarray(offset, dtype=float)
        slits = self.slits
        if slits is not None:
            ax = AXES[slits.axis]
            slits = replace(slits, positions=tuple(p + off[ax] for p in slits.positions))
        return replace(self, center=tuple(np.asarray(self.center) + off), slits=slits)


@dataclass(frozen=True)
class Cylinder:
    """Solid rod or tube along ``axis`` starting at ``origin``."""

    origin: tuple
    axis: tuple
    length: float
    outer_diameter: float
    inner_diameter: float | None = None

    kind = "cylinder"
    n_segments = 1

    def frame(self):
        a = np.asarray(self.axis, dtype=float)
        a = a / np.linalg.norm(a)
        ref = np.array([1.0, 0, 0]) if abs(a[0]) < 0.9 else np.array([0, 1.0, 0])
        e1 = np.cross(a, ref)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(a, e1)
        return a, e1, e2

    def bbox(self):
        a, _, _ = self.frame()
        o = np.asarray(self.origin, dtype=float)
        end = o + a * self.length
        r = 0.5 * self.outer_diameter
        ext = r * np.sqrt(np.clip(1 - a ** 2, 0, None))
        return np.minimum(o, end) - ext, np.maximum(o, end) + ext

    def _local(self, points):
        a, _, _ = self.frame()
        rel = np.atleast_2d(points) - np.asarray(self.origin)
        t = rel @ a
        rad = np.linalg.norm(rel - np.outer(t, a), axis=1)
        return t, rad

    def contains(self, points, tol=0.0):
        t, rad = self._local(points)
        inside = (t > tol) & (t < self.length - tol) & (rad < 0.5 * self.outer_diameter - tol)
        if self.inner_diameter is not None:
            inside &= rad > 0.5 * self.inner_diameter + tol
        return inside

    def surface_area(self):
        ro = 0.5 * self.outer_diameter
        ri = 0.5 * self.inner_diameter if self.inner_diameter else 0.0
        return 2 * math.pi * (ro + ri) * self.length + 2 * math.pi * (ro * ro - ri * ri)

    def surface_samples(self, n=16):
        a, e1, e2 = self.frame()
        o = np.asarray(self.origin, dtype=float)
        radii = [0.5 * self.outer_diameter]
        if self.inner_diameter:
            radii.append(0.5 * self.inner_diameter)
        pts = []
        for t in np.linspace(0, self.length, 5):
            for r in radii:
                for th in np.linspace(0, 2 * np.pi, n, endpoint=False):
                    pts.append(o + t * a + r * (np.cos(th) * e1 + np.sin(th) * e2))
        if not self.inner_diameter:
            pts += [o, o + self.length * a]
        return np.array(pts)

    def translated(self, offset):
        return replace(self, origin=tuple(np.asarray(self.origin) + np.asarray(offset)))


@dataclass(frozen=True)
class Body:
    """A conductor held at fixed potential(s) or a dielectric with fixed surface charge.

    ``potential`` applies to every segment unless ``segment_potentials`` is set.
    ``charge_density`` is in C/m^2.  For dielectrics ``charge_surface`` selects
    where that charge sits: ``"all"`` faces, or only the ``"end"`` cap of a
    cylinder (the cap at ``origin + length * axis``, e.g. a fiber facet).
    """

    id: str
    kind: str
    shapes: tuple
    potential: float | None = None
    segment_potentials: tuple | None = None
    charge_density: float | None = None
    charge_surface: str = "all"

    @property
    def n_segments(self):
        return max(s.n_segments for s in self.shapes)

    @property
    def is_conductor(self):
        return self.kind == CONDUCTOR

    def bbox(self):
        los, his = zip(*(s.bbox() for s in self.shapes))
        return np.min(los, axis=0), np.max(his, axis=0)

    def contains(self, points, tol=0.0):
        inside = np.zeros(len(np.atleast_2d(points)), dtype=bool)
        for s in self.shapes:
            inside |= s.contains(points, tol)
        return inside

    def segment_potential(self, k):
        if self.segment_potentials is not None:
            return self.segment_potentials[k]
        return self.potential

    def translated(self, offset):
        return replace(self, shapes=tuple(s.translated(offset) for s in self.shapes))


@dataclass(frozen=True)
class Scene:
    """Complete electrostatic configuration, SI units throughout."""

    name: str
    bodies: tuple
    box_size: tuple = (0.05, 0.05, 0.05)
    ion_position: tuple = (0.0, 0.0, 0.0)
    rf_body_ids: frozenset = frozenset()
    rf_amplitude: float = 1000.0
    rf_frequency: float = 16e6
    species_mass: float = 171 * _MASS_UNITS["amu"]
    species_charge: float = 1.0
    dc_segments: tuple = ()
    dc_voltage: float = 1.0
    d_pair: tuple = ()
    box_center: tuple = (0.0, 0.0, 0.0)

    @property
    def rf_omega(self):
        return 2 * math.pi * self.rf_frequency

    @property
    def charge(self):
        """Ion charge in coulombs."""
        return self.species_charge * ct.e

    def body(self, body_id):
        for b in self.bodies:
            if b.id == body_id:
                return b
        raise KeyError(body_id)

    def translated(self, offset):
        off = np.asarray(offset, dtype=float)
        return replace(
            self,
            bodies=tuple(b.translated(off) for b in self.bodies),
            ion_position=tuple(np.asarray(self.ion_position) + off),
            box_center=tuple(np.asarray(self.box_center) + off),
        )


# ---------------------------------------------------------------- validation

def validate_scene(scene):
    """Raise :class:`SceneValidationError` on the first violated invariant."""
    box_c = np.asarray(scene.box_center, dtype=float)
    half = 0.5 * np.asarray(scene.box_size, dtype=float)
    if np.any(half <= 0):
        raise SceneValidationError("bounding box extents must be positive")
    box_lo, box_hi = box_c - half, box_c + half
    ids = [b.id for b in scene.bodies]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise SceneValidationError("duplicate body id", dup)
    for b in scene.bodies:
        _validate_body(b)
        lo, hi = b.bbox()
        if np.any(lo <= box_lo) or np.any(hi >= box_hi):
            raise SceneValidationError("body extends outside the bounding box", b.id)
    ion = np.asarray(scene.ion_position, dtype=float)
    if np.any(ion <= box_lo) or np.any(ion >= box_hi):
        raise SceneValidationError("ion_position lies outside the bounding box")
    for b in scene.bodies:
        if b.contains(ion[None, :])[0]:
            raise SceneValidationError("ion_position lies inside a body", b.id)
    for i, a in enumerate(scene.bodies):
        for b in scene.bodies[i + 1:]:
            if _bodies_overlap(a, b):
                raise SceneValidationError(f"overlaps body {b.id!r}", a.id)
    for rid in scene.rf_body_ids:
        if rid not in ids:
            raise SceneValidationError("rf body id does not exist", rid)
        if not scene.body(rid).is_conductor:
            raise SceneValidationError("rf body must be a conductor", rid)
    for label, segs in (("dc segment", scene.dc_segments), ("D pair segment", scene.d_pair)):
        for bid, k in segs:
            if bid not in ids or not scene.body(bid).is_conductor:
                raise SceneValidationError(f"{label} does not name a conductor", bid)
            if not 0 <= k < scene.body(bid).n_segments:
                raise SceneValidationError(f"{label} index {k} out of range", bid)
    if scene.rf_frequency <= 0 or scene.species_mass <= 0:
        raise SceneValidationError("drive frequency and species mass must be positive")


def _validate_body(b):
    if b.kind not in (CONDUCTOR, DIELECTRIC):
        raise SceneValidationError(f"unknown body kind {b.kind!r}", b.id)
    if not b.shapes:
        raise SceneValidationError("body has no shape", b.id)
    if b.kind == CONDUCTOR:
        if b.potential is None or b.charge_density is not None:
            raise SceneValidationError("conductor needs a potential and no charge density", b.id)
        if b.segment_potentials is not None and len(b.segment_potentials) != b.n_segments:
            raise SceneValidationError("segment_potentials length must match segment count", b.id)
    else:
        if b.charge_density is None or b.potential is not None:
            raise SceneValidationError("dielectric needs a charge density and no potential", b.id)
    if b.charge_surface not in CHARGE_SURFACES:
        raise SceneValidationError(f"charge_surface must be one of {CHARGE_SURFACES}", b.id)
    if b.charge_surface != "all":
        if b.kind != DIELECTRIC or not all(isinstance(x, Cylinder) for x in b.shapes):
            raise SceneValidationError("charge_surface = end needs a cylinder dielectric", b.id)
    if len(b.shapes) > 1 and b.n_segments > 1:
        raise SceneValidationError("multi-part bodies cannot carry through slits", b.id)
    for s in b.shapes:
        if isinstance(s, Cuboid):
            if min(s.size) <= 0:
                raise SceneValidationError("cuboid extents must be positive", b.id)
            sl = s.slits
            if sl is not None:
                ax = AXES[sl.axis]
                edges = [s.lo[ax]]
                for c in sorted(sl.positions):
                    edges += [c - 0.5 * sl.width, c + 0.5 * sl.width]
                edges.append(s.hi[ax])
                seg_widths = np.diff(edges)[::2]
                if sl.width <= 0 or np.any(seg_widths <= sl.width):
                    raise SceneValidationError(
                        "slit width must be positive and smaller than every segment width", b.id)
                if np.any(np.diff(edges) <= 0):
                    raise SceneValidationError("slits overlap or leave the cuboid", b.id)
                if not sl.through:
                    if sl.side is None or len(sl.side) != 2 or sl.side[1] not in AXES \
                            or sl.side[1] == sl.axis:
                        raise SceneValidationError("partial slits need a side like '-y'", b.id)
                    if not 0 < sl.depth < s.size[AXES[sl.side[1]]]:
                        raise SceneValidationError("slit depth must lie inside the cuboid", b.id)
        elif isinstance(s, Cylinder):
            if s.length <= 0 or s.outer_diameter <= 0:
                raise SceneValidationError("cylinder length and diameter must be positive", b.id)
            if s.inner_diameter is not None and not 0 < s.inner_diameter < s.outer_diameter:
                raise SceneValidationError("inner diameter must be below outer diameter", b.id)
            if np.linalg.norm(s.axis) == 0:
                raise SceneValidationError("cylinder axis must be non-zero", b.id)
        else:
            raise SceneValidationError(f"unsupported shape {type(s).__name__}", b.id)


def _bodies_overlap(a, b):
    alo, ahi = a.bbox()
    blo, bhi = b.bbox()
    if np.any(ahi <= blo) or np.any(bhi <= alo):
        return False
    scale = max(np.max(ahi - alo), np.max(bhi - blo))
    tol = 1e-9 * scale
    for s in a.shapes:
        if b.contains(s.surface_samples(), tol).any():
            return True
    for s in b.shapes:
        if a.contains(s.surface_samples(), tol).any():
            return True
    # a box fully swallowing the other's samples would be caught above; check centres too
    for s in a.shapes:
        lo, hi = s.bbox()
        if b.contains(0.5 * (lo + hi)[None, :], tol).any() and s.contains(0.5 * (lo + hi)[None, :]).any():
            return True
    return False


# ------------------------------------------------------------------- parsing

def _floats(text):
    return tuple(float(v) for v in re.split(r"[,\s]+", text.strip()) if v)


def _segment_refs(text):
    refs = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        bid, _, k = item.partition(":")
        refs.append((bid.strip(), int(k) if k else 0))
    return tuple(refs)


def _line_of(text, section, key=None):
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            if key is None and current == section:
                return n
        elif current == section and key is not None:
            if re.match(rf"{re.escape(key)}\s*[=:]", s):
                return n
    return None


class _Reader:
    def __init__(self, text, cp):
        self.text = text
        self.cp = cp

    def get(self, section, key, conv=str, default=None, required=False):
        if not self.cp.has_option(section, key):
            if required:
                raise SceneParseError("missing required key", _line_of(self.text, section),
                                      f"{section}.{key}")
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, KeyError) as exc:
            raise SceneParseError(f"bad value {raw!r}: {exc}",
                                  _line_of(self.text, section, key), f"{section}.{key}") from None

    def unit(self, key, table, default):
        name = self.get("units", key, str, default)
        if name not in table:
            raise SceneParseError(f"unknown unit {name!r}", _line_of(self.text, "units", key),
                                  f"units.{key}")
        return table[name]


def _parser(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise SceneParseError(f"syntax error: {exc.message.splitlines()[0]}", line) from None
    except configparser.Error as exc:
        raise SceneParseError(f"syntax error: {exc}", getattr(exc, "lineno", None)) from None
    return cp


def load_scene(config_text, validate=True):
    """Parse scene config text into a validated :class:`Scene`.

    Defaults: 50 mm grounded box, ion at origin, 171Yb+ (171 u, +1 e),
    16 MHz drive at 1000 V amplitude.
    """
    cp = _parser(config_text)
    r = _Reader(config_text, cp)
    known = {"units", "scene", "box", "drive", "species", "trap"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith("body."):
            raise SceneParseError(f"unknown section [{sec}]", _line_of(config_text, sec))
    L = r.unit("length", _LENGTH_UNITS, "mm")
    F = r.unit("frequency", _FREQ_UNITS, "MHz")
    M = r.unit("mass", _MASS_UNITS, "amu")
    Q = r.unit("charge_density", _CHARGE_DENSITY_UNITS, "e/um2")

    def length_vec(sec, key, default=None, n=3, required=False):
        vals = r.get(sec, key, _floats, None, required)
        if vals is None:
            return default
        if n is not None and len(vals) != n:
            raise SceneParseError(f"expected {n} values", _line_of(config_text, sec, key),
                                  f"{sec}.{key}")
        return tuple(v * L for v in vals)

    bodies = []
    for sec in cp.sections():
        if sec.startswith("body."):
            bodies.append(_read_body(r, sec, L, Q))

    defaults = Scene(name="", bodies=())
    scene = Scene(
        name=r.get("scene", "name", str, "scene"),
        bodies=tuple(bodies),
        box_size=length_vec("box", "size", defaults.box_size),
        box_center=length_vec("box", "center", defaults.box_center),
        ion_position=length_vec("scene", "ion_position", defaults.ion_position),
        rf_body_ids=frozenset(
            t.strip() for t in r.get("drive", "rf_bodies", str, "").split(",") if t.strip()),
        rf_amplitude=r.get("drive", "amplitude", float, defaults.rf_amplitude),
        rf_frequency=(r.get("drive", "frequency", float, None) * F
                      if cp.has_option("drive", "frequency") else defaults.rf_frequency),
        species_mass=(r.get("species", "mass", float, None) * M
                      if cp.has_option("species", "mass") else defaults.species_mass),
        species_charge=r.get("species", "charge", float, defaults.species_charge),
        dc_segments=r.get("trap", "dc_segments", _segment_refs, ()),
        dc_voltage=r.get("trap", "dc_voltage", float, defaults.dc_voltage),
        d_pair=r.get("trap", "d_pair", _segment_refs, ()),
    )
    if validate:
        validate_scene(scene)
    return scene


def _read_body(r, sec, L, Q):
    text = r.text
    bid = sec[len("body."):]
    if not bid:
        raise SceneParseError("empty body id", _line_of(text, sec))
    kind = r.get(sec, "kind", str, CONDUCTOR)
    shape = r.get(sec, "shape", str, "cuboid")

    def vec(key, n=3, required=True):
        vals = r.get(sec, key, _floats, None, required)
        if vals is None:
            return None
        if n is not None and len(vals) != n:
            raise SceneParseError(f"expected {n} values", _line_of(text, sec, key), f"{sec}.{key}")
        return tuple(v * L for v in vals)

    if shape == "cuboid":
        size = vec("size")
        if r.cp.has_option(sec, "centers"):
            flat = vec("centers", None)
            if len(flat) % 3:
                raise SceneParseError("centers must be a multiple of 3 values",
                                      _line_of(text, sec, "centers"), f"{sec}.centers")
            centers = [flat[i:i + 3] for i in range(0, len(flat), 3)]
        else:
            centers = [vec("center")]
        slits = None
        if r.cp.has_option(sec, "slits"):
            depth = r.get(sec, "slit_depth", float, None)
            slits = SlitPattern(
                positions=vec("slits", None),
                width=r.get(sec, "slit_width", float, required=True) * L,
                axis=r.get(sec, "slit_axis", _axis_name, "z"),
                depth=None if depth is None else depth * L,
                side=r.get(sec, "slit_side", str, None),
            )
        shapes = tuple(Cuboid(center=c, size=size, slits=slits) for c in centers)
    elif shape == "cylinder":
        inner = r.get(sec, "inner_diameter", float, None)
        shapes = (Cylinder(
            origin=vec("origin"),
            axis=r.get(sec, "axis", _floats, (0.0, 0.0, 1.0)),
            length=r.get(sec, "length", float, required=True) * L,
            outer_diameter=r.get(sec, "outer_diameter", float, required=True) * L,
            inner_diameter=None if inner is None else inner * L,
        ),)
    else:
        raise SceneParseError(f"unknown shape {shape!r}", _line_of(text, sec, "shape"),
                              f"{sec}.shape")
    density = r.get(sec, "charge_density", float, None)
    return Body(
        id=bid,
        kind=kind,
        shapes=shapes,
        potential=r.get(sec, "potential", float, None),
        segment_potentials=r.get(sec, "segment_potentials", _floats, None),
        charge_density=None if density is None else density * Q,
        charge_surface=r.get(sec, "charge_surface", str, "all"),
    )


def _axis_name(text):
    text = text.strip()
    if text not in AXES:
        raise ValueError("axis must be x, y or z")
    return text


def _fmt(values):
    return ", ".join(repr(float(v)) for v in values)


def dump_scene(scene):
    """Serialize in SI units (exact round trip through :func:`load_scene`)."""
    out = [
        "[units]", "length = m", "frequency = Hz", "mass = kg", "charge_density = C/m2", "",
        "[scene]", f"name = {scene.name}", f"ion_position = {_fmt(scene.ion_position)}", "",
        "[box]", f"size = {_fmt(scene.box_size)}", f"center = {_fmt(scene.box_center)}", "",
        "[drive]", f"amplitude = {scene.rf_amplitude!r}",
        f"frequency = {float(scene.rf_frequency)!r}",
        f"rf_bodies = {', '.join(sorted(scene.rf_body_ids))}", "",
        "[species]", f"mass = {float(scene.species_mass)!r}",
        f"charge = {float(scene.species_charge)!r}", "",
        "[trap]",
        f"dc_segments = {', '.join(f'{b}:{k}' for b, k in scene.dc_segments)}",
        f"dc_voltage = {float(scene.dc_voltage)!r}",
        f"d_pair = {', '.join(f'{b}:{k}' for b, k in scene.d_pair)}", "",
    ]
    for b in scene.bodies:
        out += [f"[body.{b.id}]", f"kind = {b.kind}"]
        s0 = b.shapes[0]
        if isinstance(s0, Cuboid):
            out += ["shape = cuboid", f"size = {_fmt(s0.size)}"]
            if len(b.shapes) == 1:
                out.append(f"center = {_fmt(s0.center)}")
            else:
                out.append("centers = " + ", ".join(_fmt(s.center) for s in b.shapes))
            sl = s0.slits
            if sl is not None:
                out += [f"slits = {_fmt(sl.positions)}", f"slit_width = {float(sl.width)!r}",
                        f"slit_axis = {sl.axis}"]
                if sl.depth is not None:
                    out += [f"slit_depth = {float(sl.depth)!r}", f"slit_side = {sl.side}"]
        else:
            out += ["shape = cylinder", f"origin = {_fmt(s0.origin)}", f"axis = {_fmt(s0.axis)}",
                    f"length = {float(s0.length)!r}",
                    f"outer_diameter = {float(s0.outer_diameter)!r}"]
            if s0.inner_diameter is not None:
                out.append(f"inner_diameter = {float(s0.inner_diameter)!r}")
        if b.potential is not None:
            out.append(f"potential = {float(b.potential)!r}")
        if b.segment_potentials is not None:
            out.append(f"segment_potentials = {_fmt(b.segment_potentials)}")
        if b.charge_density is not None:
            out.append(f"charge_density = {float(b.charge_density)!r}")
        if b.charge_surface != "all":
            out.append(f"charge_surface = {b.charge_surface}")
        out.append("")
    return "\n".join(out)


# ------------------------------------------------------------------ builtins

#: Allowed distance ranges (mm) per built-in configuration.
BUILTIN_RANGES = {
    "optic_on_axis": (3.0, 13.0),
    "optic_between_chips": (0.5, 9.0),
    "optics_both_sides": (1.0, 9.0),
    "shielded_fiber": (0.0, 5.0),
}

#: Modelling choices for optics whose cross-sections the source leaves open (mm).
ON_AXIS_OPTIC_SIZE = (0.8, 1.0, 1.0)
BETWEEN_CHIPS_OPTIC_SIZE = (0.8, 0.8, 26.0)
BOTH_SIDES_OPTIC_SIZE = (1.0, 5.0, 26.0)
FIBER_DIAMETER = 0.350
FIBER_LENGTH = 5.00
TUBE_INNER_DIAMETER = 0.5
TUBE_OUTER_DIAMETER = 1.0
TUBE_LENGTH = 10.0
FIBER_CHARGE = 160.0  # electrons per um^2


def baseline_config_text():
    return resources.files("chiptrap.data").joinpath("baseline.ini").read_text()


def _grounded_cuboid(bid, centers_mm, size_mm):
    mm = _LENGTH_UNITS["mm"]
    return Body(
        id=bid, kind=CONDUCTOR, potential=0.0,
        shapes=tuple(Cuboid(center=tuple(c * mm for c in ctr),
                            size=tuple(s * mm for s in size_mm)) for ctr in centers_mm),
    )


def builtin_scene(name, d=None):
    """Return one of the built-in study configurations.

    ``d`` (mm) is the distance from the ion to the nearest face of the optic,
    or the shielding-tube protrusion beyond the fiber end for ``shielded_fiber``.
    """
    if name == "baseline":
        if d is not None:
            raise ValueError("baseline takes no distance")
        return load_scene(baseline_config_text())
    if name not in BUILTIN_RANGES:
        raise ValueError(f"unknown builtin scene {name!r}")
    if d is None:
        raise ValueError(f"{name} needs a distance")
    lo, hi = BUILTIN_RANGES[name]
    if not lo <= d <= hi:
        raise ValueError(f"{name}: d={d} mm outside [{lo}, {hi}] mm")
    if name == "shielded_fiber":
        return _fiber_scene(d)
    base = builtin_scene("baseline")
    if name == "optic_on_axis":
        sz = ON_AXIS_OPTIC_SIZE[2]
        optic = _grounded_cuboid("optic", [(0.0, 0.0, d + 0.5 * sz)], ON_AXIS_OPTIC_SIZE)
    elif name == "optic_between_chips":
        sx, sy, sz = BETWEEN_CHIPS_OPTIC_SIZE
        optic = _grounded_cuboid("optic", [(0.0, d + 0.5 * sy, 0.0)], BETWEEN_CHIPS_OPTIC_SIZE)
    else:
        sx = BOTH_SIDES_OPTIC_SIZE[0]
        optic = _grounded_cuboid("optics", [(d + 0.5 * sx, 0.0, 0.0), (-d - 0.5 * sx, 0.0, 0.0)],
                                 BOTH_SIDES_OPTIC_SIZE)
    scene = replace(base, name=f"{name}({d:g})", bodies=base.bodies + (optic,))
    validate_scene(scene)
    return scene


def _fiber_scene(protrusion, charge=FIBER_CHARGE):
    """Fiber with a charged facet inside a grounded tube whose mouth sits at z = 0."""
    mm = _LENGTH_UNITS["mm"]
    tube = Body(
        id="shield", kind=CONDUCTOR, potential=0.0,
        shapes=(Cylinder(origin=(0.0, 0.0, -TUBE_LENGTH * mm), axis=(0.0, 0.0, 1.0),
                         length=TUBE_LENGTH * mm, outer_diameter=TUBE_OUTER_DIAMETER * mm,
                         inner_diameter=TUBE_INNER_DIAMETER * mm),),
    )
    fiber = Body(
        id="fiber", kind=DIELECTRIC, charge_surface="end",
        charge_density=-charge * _CHARGE_DENSITY_UNITS["e/um2"],
        shapes=(Cylinder(origin=(0.0, 0.0, -(protrusion + FIBER_LENGTH) * mm),
                         axis=(0.0, 0.0, 1.0), length=FIBER_LENGTH * mm,
                         outer_diameter=FIBER_DIAMETER * mm),),
    )
    scene = Scene(name=f"shielded_fiber({protrusion:g})", bodies=(tube, fiber))
    validate_scene(scene)
    return scene


def fiber_scene(protrusion, charge=FIBER_CHARGE):
    """Shielded-fiber scene with an explicit charge (electrons per um^2)."""
    lo, hi = BUILTIN_RANGES["shielded_fiber"]
    if not lo <= protrusion <= hi:
        raise ValueError(f"protrusion {protrusion} mm outside [{lo}, {hi}] mm")
    return _fiber_scene(protrusion, charge)
