"""Surface panelization of scenes into flat quadrilateral panels.

Each cuboid face is split by anisotropic bisection until every cell meets a
local target size.  The target shrinks towards the focus sphere (the trap
centre) and, across each edge or slit line of the body, falls to
``1 / edge_refinement_ratio**2`` of the local size on the line and grows
linearly away from it.  Cells narrow across an edge but stay long along it.
Cylinders become N-gon prisms whose end caps are rings of trapezoids
(triangles at a solid centre).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .scene import Cuboid, Cylinder, DIELECTRIC

__all__ = ["MeshParams", "Panel", "PanelMesh", "MeshBudgetError", "DegenerateBodyError",
           "mesh_scene", "mesh_body", "refine", "BOX_ID"]

BOX_ID = "box"


class MeshBudgetError(RuntimeError):
    def __init__(self, required, budget):
        self.required = required
        self.budget = budget
        super().__init__(f"mesh needs {required} panels but max_panels is {budget}")


class DegenerateBodyError(ValueError):
    pass


@dataclass(frozen=True)
class MeshParams:
    """Discretization controls (lengths in metres).

    Away from edges the target panel size is ``base_panel_size``, reduced to
    ``focus_panel_size`` inside the focus sphere and growing with slope
    ``focus_grading`` outside it.  Next to an edge the size drops by
    ``edge_refinement_ratio**2`` and recovers with slope ``edge_grading``;
    a ratio of 1 disables edge refinement.
    """

    base_panel_size: float = 1.5e-3
    edge_refinement_ratio: float = 2.0
    focus_center: tuple = (0.0, 0.0, 0.0)
    focus_radius: float = 1.5e-3
    focus_panel_size: float = 0.3e-3
    focus_grading: float = 0.5
    edge_grading: float = 0.5
    box_panel_size: float = 5e-3
    ngon: int = 24
    max_panels: int = 20000

    def __post_init__(self):
        if self.base_panel_size <= 0 or self.box_panel_size <= 0:
            raise ValueError("panel sizes must be positive")
        if self.edge_refinement_ratio < 1:
            raise ValueError("edge_refinement_ratio must be >= 1")
        if self.focus_panel_size <= 0 or self.focus_radius < 0:
            raise ValueError("focus region needs a positive panel size and radius >= 0")
        if self.ngon < 3:
            raise ValueError("ngon must be >= 3")

    def scaled(self, s):
        """Same grading with every panel size multiplied by ``s`` (s < 1 refines)."""
        if not s > 0:
            raise ValueError("scale must be positive")
        return replace(self, base_panel_size=self.base_panel_size * s,
                       focus_panel_size=self.focus_panel_size * s,
                       box_panel_size=self.box_panel_size * s,
                       ngon=max(6, int(round(self.ngon / s))))


@dataclass(frozen=True)
class Panel:
    vertices: np.ndarray
    centroid: np.ndarray
    normal: np.ndarray
    area: float
    body_id: str
    segment_index: int


@dataclass(frozen=True, eq=False)
class PanelMesh:
    """Struct-of-arrays panel set.

    ``verts`` is (N, 4, 3), counter-clockwise about ``normals``.  ``body`` holds
    an index into ``body_ids``; ``fixed`` marks fixed-charge (dielectric) panels.
    ``solids`` maps body id to the :class:`~chiptrap.scene.Body` used for
    inside-conductor checks (may be empty for hand-built meshes).
    """

    verts: np.ndarray
    normals: np.ndarray
    body: np.ndarray
    segment: np.ndarray
    body_ids: tuple
    fixed: np.ndarray
    solids: dict = field(default_factory=dict)
    params: MeshParams | None = None

    def __post_init__(self):
        for name in ("verts", "normals", "body", "segment", "fixed"):
            getattr(self, name).setflags(write=False)

    def __len__(self):
        return len(self.verts)

    def __getitem__(self, i):
        return Panel(self.verts[i], self.centroids[i], self.normals[i], float(self.areas[i]),
                     self.body_ids[self.body[i]], int(self.segment[i]))

    @property
    def centroids(self):
        return _cached(self, "_centroids", lambda: _quad_centroids(self.verts))

    @property
    def areas(self):
        return _cached(self, "_areas", lambda: _quad_areas(self.verts))

    @property
    def diameters(self):
        def diam():
            v = self.verts
            d1 = np.linalg.norm(v[:, 2] - v[:, 0], axis=1)
            d2 = np.linalg.norm(v[:, 3] - v[:, 1], axis=1)
            return np.maximum(d1, d2)
        return _cached(self, "_diam", diam)

    def body_mask(self, body_id, segment=None):
        idx = self.body_ids.index(body_id)
        mask = self.body == idx
        if segment is not None:
            mask &= self.segment == segment
        return mask

    def body_area(self, body_id):
        return float(self.areas[self.body_mask(body_id)].sum())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = [f"v{k}{c}_m" for k in range(4) for c in "xyz"]
        w.writerow(head + ["nx", "ny", "nz", "body", "segment"])
        for i in range(len(self)):
            w.writerow([repr(float(x)) for x in self.verts[i].ravel()]
                       + [repr(float(x)) for x in self.normals[i]]
                       + [self.body_ids[self.body[i]], int(self.segment[i])])
        return buf.getvalue()


def _cached(obj, name, fn):
    try:
        return obj.__dict__[name]
    except KeyError:
        val = fn()
        val.setflags(write=False)
        object.__setattr__(obj, name, val)
        return val


def _quad_areas(v):
    return 0.5 * np.linalg.norm(np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 1]), axis=1)


def _quad_centroids(v):
    # area-weighted centroid of the two triangles (0,1,2) and (0,2,3)
    a1 = 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    a2 = 0.5 * np.linalg.norm(np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]), axis=1)
    c1 = (v[:, 0] + v[:, 1] + v[:, 2]) / 3
    c2 = (v[:, 0] + v[:, 2] + v[:, 3]) / 3
    tot = a1 + a2
    return (c1 * a1[:, None] + c2 * a2[:, None]) / tot[:, None]


# ------------------------------------------------------------- 1-D grading

def graded_axis(lo, hi, base, focus=None, ratio=2.0, edge_grading=0.5):
    """Grid points on [lo, hi] following the same size rule as cuboid faces.

    ``focus`` is ``(a, b, size, grading)``: inside [a, b] the size is ``size``
    and grows with slope ``grading`` outside.  Both ends count as edges.
    """
    s = np.linspace(lo, hi, 4001)
    h = np.full_like(s, base)
    if focus is not None:
        fa, fb, size, grading = focus
        h = np.minimum(h, size + grading * np.maximum(0.0, np.maximum(fa - s, s - fb)))
    if ratio > 1:
        h = _edge_size(np.minimum(s - lo, hi - s), h, ratio, edge_grading)
    dens = 1.0 / h
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(s))])
    n = max(1, math.ceil(cum[-1] - 1e-9))
    out = np.interp(np.linspace(0.0, cum[-1], n + 1), cum, s)
    out[0], out[-1] = lo, hi
    return out


# ----------------------------------------------------------- face builders

def _cuboid_quads(shape, params, refine_edges=True, base=None, use_focus=True):
    """(verts, normals, segments) for the exposed surface of a (slitted) cuboid."""
    boxes = shape.solid_boxes()
    base = params.base_panel_size if base is None else base
    ratio = params.edge_refinement_ratio if refine_edges else 1.0
    for blo, bhi, _ in boxes:
        if np.any(bhi - blo <= 0):
            raise DegenerateBodyError("zero extent after slitting")
    faces = []
    for bi, (blo, bhi, seg) in enumerate(boxes):
        for ax in range(3):
            for side, plane in ((-1, blo[ax]), (1, bhi[ax])):
                faces.append((bi, ax, side, plane, blo, bhi, seg))
    verts, normals, segs = [], [], []
    for bi, ax, side, plane, blo, bhi, seg in faces:
        u, v = (ax + 1) % 3, (ax + 2) % 3
        # boundary lines of every coplanar face rectangle of this body
        lines_u, lines_v = [], []
        for _, ax2, _, plane2, lo2, hi2, _ in faces:
            if ax2 != ax or abs(plane2 - plane) > 1e-12 * max(1.0, abs(plane)):
                continue
            lines_u += [(lo2[u], lo2[v], hi2[v]), (hi2[u], lo2[v], hi2[v])]
            lines_v += [(lo2[v], lo2[u], hi2[u]), (hi2[v], lo2[u], hi2[u])]
        focus = params if use_focus else None
        cells = _quadtree(blo, bhi, ax, plane, u, v, base, focus, ratio,
                          np.array(lines_u), np.array(lines_v), params.edge_grading)
        U0, U1, V0, V1 = cells.T
        cu, cv = 0.5 * (U0 + U1), 0.5 * (V0 + V1)
        keep = np.ones(len(cu), dtype=bool)
        for bj, (olo, ohi, _) in enumerate(boxes):
            if bj == bi:
                continue
            touch = olo[ax] if side > 0 else ohi[ax]
            if abs(touch - plane) > 1e-12 * max(1.0, abs(plane)):
                continue
            keep &= ~((cu > olo[u]) & (cu < ohi[u]) & (cv > olo[v]) & (cv < ohi[v]))
        n = int(keep.sum())
        q = np.empty((n, 4, 3))
        q[:, :, ax] = plane
        corners = [(U0, V0), (U1, V0), (U1, V1), (U0, V1)]
        if side < 0:
            corners = corners[::-1]
        for k, (cu_, cv_) in enumerate(corners):
            q[:, k, u] = cu_[keep]
            q[:, k, v] = cv_[keep]
        nrm = np.zeros((n, 3))
        nrm[:, ax] = side
        verts.append(q)
        normals.append(nrm)
        segs.append(np.full(n, seg))
    return np.concatenate(verts), np.concatenate(normals), np.concatenate(segs)


def _edge_size(dist, size, ratio, grading):
    """Target size near an edge: ``size / ratio**2`` on the edge, growing linearly."""
    return np.minimum(size, size / ratio ** 2 + grading * dist)


def _line_distance(a0, a1, b0, b1, lines):
    """Distance from cells [a0,a1]x[b0,b1] to segments (a=const, b in [lo,hi])."""
    if len(lines) == 0:
        return np.full(len(a0), np.inf)
    la, lb0, lb1 = lines[:, 0], lines[:, 1], lines[:, 2]
    da = np.maximum(0.0, np.maximum(a0[:, None] - la, la - a1[:, None]))
    db = np.maximum(0.0, np.maximum(b0[:, None] - lb1, lb0 - b1[:, None]))
    return np.sqrt(da * da + db * db).min(axis=1)


def _quadtree(blo, bhi, ax, plane, u, v, base, focus, ratio, lines_u, lines_v,
              edge_grading=0.5):
    """Anisotropic bisection of one face rectangle until local target sizes are met."""
    nu = max(1, math.ceil((bhi[u] - blo[u]) / base - 1e-9))
    nv = max(1, math.ceil((bhi[v] - blo[v]) / base - 1e-9))
    gu = np.linspace(blo[u], bhi[u], nu + 1)
    gv = np.linspace(blo[v], bhi[v], nv + 1)
    U0, V0 = np.meshgrid(gu[:-1], gv[:-1], indexing="ij")
    U1, V1 = np.meshgrid(gu[1:], gv[1:], indexing="ij")
    cells = np.stack([U0.ravel(), U1.ravel(), V0.ravel(), V1.ravel()], axis=1)
    done = []
    while len(cells):
        u0, u1, v0, v1 = cells.T
        size = np.full(len(cells), base)
        if focus is not None and focus.focus_radius > 0:
            c = np.asarray(focus.focus_center, dtype=float)
            du = np.maximum(0.0, np.maximum(u0 - c[u], c[u] - u1))
            dv = np.maximum(0.0, np.maximum(v0 - c[v], c[v] - v1))
            dist = np.sqrt(du * du + dv * dv + (plane - c[ax]) ** 2) - focus.focus_radius
            size = np.minimum(size, focus.focus_panel_size
                              + focus.focus_grading * np.maximum(dist, 0.0))
        hu, hv = size.copy(), size.copy()
        if ratio > 1:
            hu = _edge_size(_line_distance(u0, u1, v0, v1, lines_u), size, ratio, edge_grading)
            hv = _edge_size(_line_distance(v0, v1, u0, u1, lines_v), size, ratio, edge_grading)
        su = (u1 - u0) > hu * (1 + 1e-9)
        sv = (v1 - v0) > hv * (1 + 1e-9)
        fin = ~(su | sv)
        done.append(cells[fin])
        nxt = []
        um = 0.5 * (u0 + u1)
        vm = 0.5 * (v0 + v1)
        for mask_u, mask_v in ((True, False), (False, True), (True, True)):
            sel = (su == mask_u) & (sv == mask_v) & ~fin
            if not sel.any():
                continue
            a0, a1, b0, b1, am, bm = u0[sel], u1[sel], v0[sel], v1[sel], um[sel], vm[sel]
            us = [(a0, am), (am, a1)] if mask_u else [(a0, a1)]
            vs = [(b0, bm), (bm, b1)] if mask_v else [(b0, b1)]
            for x0, x1 in us:
                for y0, y1 in vs:
                    nxt.append(np.stack([x0, x1, y0, y1], axis=1))
        cells = np.concatenate(nxt) if nxt else np.empty((0, 4))
    out = np.concatenate(done)
    order = np.lexsort((out[:, 0], out[:, 2]))
    return out[order]


def _cylinder_quads(shape, params, end_only=False):
    a, e1, e2 = shape.frame()
    o = np.asarray(shape.origin, dtype=float)
    L = shape.length
    N = params.ngon
    th = 2 * np.pi * np.arange(N + 1) / N
    ring = np.cos(th)[:, None] * e1 + np.sin(th)[:, None] * e2  # (N+1, 3), last == first
    # focus along the axis: project the sphere centre onto the axis line
    c = np.asarray(params.focus_center, dtype=float)
    t_c = float((c - o) @ a)
    radial = np.linalg.norm((c - o) - t_c * a)
    focus = None
    if params.focus_radius > 0 and radial < params.focus_radius + 0.5 * shape.outer_diameter:
        focus = (t_c - params.focus_radius, t_c + params.focus_radius,
                 params.focus_panel_size, params.focus_grading)
    tg = graded_axis(0.0, L, params.base_panel_size, focus, params.edge_refinement_ratio,
                     params.edge_grading)
    ro = 0.5 * shape.outer_diameter
    ri = 0.5 * shape.inner_diameter if shape.inner_diameter else 0.0
    quads = []
    t0, t1 = tg[:-1], tg[1:]
    for r, outward in (() if end_only else ((ro, True), (ri, False))):
        if r == 0.0:
            continue
        for k in range(N):
            p0 = o + r * ring[k]
            p1 = o + r * ring[k + 1]
            q = np.empty((len(t0), 4, 3))
            q[:, 0] = p0 + t0[:, None] * a
            q[:, 1] = p1 + t0[:, None] * a
            q[:, 2] = p1 + t1[:, None] * a
            q[:, 3] = p0 + t1[:, None] * a
            if not outward:
                q = q[:, ::-1]
            quads.append(q)
    # end caps: rings of trapezoids, triangles (repeated vertex) at a solid centre
    step = min(params.base_panel_size, params.focus_panel_size if focus else params.base_panel_size)
    nr = max(1, math.ceil((ro - ri) / step - 1e-9))
    radii = np.linspace(ri, ro, nr + 1)
    for t, sign in (((L, 1.0),) if end_only else ((0.0, -1.0), (L, 1.0))):
        base = o + t * a
        for r0, r1 in zip(radii[:-1], radii[1:]):
            q = np.empty((N, 4, 3))
            q[:, 0] = base + r0 * ring[:-1]
            q[:, 1] = base + r1 * ring[:-1]
            q[:, 2] = base + r1 * ring[1:]
            q[:, 3] = base + r0 * ring[1:]
            # (e1, e2, a) is right-handed: this ordering is CCW about +a
            if sign < 0:
                q = q[:, ::-1]
            quads.append(q)
    verts = np.concatenate(quads)
    normals = _normals_of(verts)
    return verts, normals, np.zeros(len(verts), dtype=int)


def _normals_of(verts):
    n = np.cross(verts[:, 2] - verts[:, 0], verts[:, 3] - verts[:, 1])
    return n / np.linalg.norm(n, axis=1)[:, None]


def _box_quads(scene, params):
    half = 0.5 * np.asarray(scene.box_size, dtype=float)
    c = np.asarray(scene.box_center, dtype=float)
    box = Cuboid(center=tuple(c), size=tuple(2 * half))
    verts, normals, segs = _cuboid_quads(box, params, refine_edges=False,
                                         base=params.box_panel_size, use_focus=False)
    # the box is seen from inside: flip orientation so normals face the domain
    return verts[:, ::-1].copy(), -normals, segs


def mesh_body(body, params):
    """Panels of one body.

    A dielectric whose charge sits only on its end cap contributes just that
    cap: uncharged dielectric faces carry no charge and have no other effect.
    """
    parts = []
    for shape in body.shapes:
        if isinstance(shape, Cuboid):
            parts.append(_cuboid_quads(shape, params))
        elif isinstance(shape, Cylinder):
            parts.append(_cylinder_quads(shape, params, body.charge_surface == "end"))
        else:
            raise TypeError(f"cannot mesh {type(shape).__name__}")
    verts, normals, segs = (np.concatenate(x) for x in zip(*parts))
    return verts, normals, segs


def mesh_scene(scene, params=None, include_box=True):
    """Panelize every body plus the inner surface of the grounded box."""
    params = params or MeshParams()
    chunks = []
    body_ids = []
    for i, body in enumerate(scene.bodies):
        v, n, s = mesh_body(body, params)
        chunks.append((v, n, s, np.full(len(v), i), body.kind == DIELECTRIC))
        body_ids.append(body.id)
    if include_box:
        # the box grid is uniform, so its size is known before any allocation
        bx, by, bz = (int(np.ceil(L / params.box_panel_size - 1e-9)) for L in scene.box_size)
        n_box = 2 * (bx * by + by * bz + bx * bz)
        so_far = sum(len(c[0]) for c in chunks)
        if so_far + n_box > params.max_panels:
            raise MeshBudgetError(so_far + n_box, params.max_panels)
        v, n, s = _box_quads(scene, params)
        chunks.append((v, n, s, np.full(len(v), len(body_ids)), False))
        body_ids.append(BOX_ID)
    total = sum(len(c[0]) for c in chunks)
    if total > params.max_panels:
        raise MeshBudgetError(total, params.max_panels)
    if total == 0:
        verts = np.empty((0, 4, 3))
        return PanelMesh(verts, np.empty((0, 3)), np.empty(0, int), np.empty(0, int),
                         tuple(body_ids), np.empty(0, bool), {}, params)
    verts = np.concatenate([c[0] for c in chunks])
    normals = np.concatenate([c[1] for c in chunks])
    segs = np.concatenate([c[2] for c in chunks]).astype(int)
    body = np.concatenate([c[3] for c in chunks]).astype(int)
    fixed = np.concatenate([np.full(len(c[0]), c[4]) for c in chunks]).astype(bool)
    return PanelMesh(verts, normals, body, segs, tuple(body_ids), fixed,
                     {b.id: b for b in scene.bodies}, params)


def refine(mesh, factor, max_panels=None):
    """Split every panel into k x k sub-panels, k = ceil(factor)."""
    if factor <= 1:
        raise ValueError("refinement factor must exceed 1")
    k = math.ceil(factor - 1e-12)
    budget = max_panels if max_panels is not None else (
        mesh.params.max_panels if mesh.params else None)
    required = len(mesh) * k * k
    if budget is not None and required > budget:
        raise MeshBudgetError(required, budget)
    v = mesh.verts
    s = np.linspace(0.0, 1.0, k + 1)
    sub = []
    for i in range(k):
        for j in range(k):
            corners = [(s[i], s[j]), (s[i + 1], s[j]), (s[i + 1], s[j + 1]), (s[i], s[j + 1])]
            q = np.stack([_bilinear(v, a, b) for a, b in corners], axis=1)
            sub.append(q)
    verts = np.stack(sub, axis=1).reshape(-1, 4, 3)
    rep = k * k
    return PanelMesh(verts, np.repeat(mesh.normals, rep, axis=0), np.repeat(mesh.body, rep),
                     np.repeat(mesh.segment, rep), mesh.body_ids, np.repeat(mesh.fixed, rep),
                     mesh.solids, mesh.params)


def _bilinear(v, a, b):
    return (1 - a) * (1 - b) * v[:, 0] + a * (1 - b) * v[:, 1] \
        + a * b * v[:, 2] + (1 - a) * b * v[:, 3]
