"""Triangulation of a :class:`~wgtrap.geometry.DomainSpec`.

The mesh is assembled from pieces that share their interface nodes:

* an unstructured core (constrained Delaunay with minimum-angle
  refinement, via Shewchuk's Triangle) around the obstacle and the
  branch junction, graded towards the re-entrant branch corners;
* structured right-triangle strips for the straight duct extensions and
  for the branch above the core.

The core depends only on the features, never on truncations or on the
branch / half-guide length, so a family of domains differs only in the
straight strips.  Strip breakpoints fall on multiples of 0.2 (plus any
requested section lines) so extraction sections are mesh lines.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import triangle

from .errors import MeshingError, InvalidArgumentError
from .geometry import DomainSpec

GRID_STEP = 0.2
MIN_ANGLE_DEG = 20.0
_ROUND = 11


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) counterclockwise
    boundary_edges: np.ndarray  # (nbe, 2)
    boundary_tags: Tuple[str, ...]
    h: float = float("nan")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self) -> float:
        return float(self.signed_areas().sum())

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        ang = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            c = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return float(np.min(ang))

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unique sorted edges and the (nt, 3) triangle-to-edge map.

        Local edge ``i`` of a triangle joins local vertices ``i`` and
        ``(i + 1) % 3``.
        """
        return self._edges

    @functools.cached_property
    def _edges(self) -> Tuple[np.ndarray, np.ndarray]:
        t = self.triangles
        all_e = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        all_e = np.sort(all_e, axis=1)
        uniq, inv = np.unique(all_e, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 3)

    def tagged_edges(self, tag: str) -> np.ndarray:
        sel = [i for i, t in enumerate(self.boundary_tags) if t == tag]
        return self.boundary_edges[sel]

    def check(self) -> None:
        """Raise :class:`MeshingError` if an invariant is violated."""
        if np.any(self.signed_areas() <= 1e-14):
            raise MeshingError("inverted or degenerate triangle")
        edges, tri_e = self.edges()
        count = np.bincount(tri_e.ravel(), minlength=len(edges))
        if np.any(count > 2):
            raise MeshingError("non-manifold edge shared by more than two triangles")
        bnd = {tuple(e) for e in edges[count == 1]}
        tagged = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if bnd != tagged or len(tagged) != len(self.boundary_edges):
            raise MeshingError("boundary edges and tagged edges disagree")


def core_margin(h: float) -> float:
    """Clearance of the unstructured core around the features.

    The interface nodes on the core boundary are fixed, so the distance
    between a re-entrant corner and the interface must be a bit larger
    than ``h`` for the minimum-angle refinement to succeed.
    """
    return max(0.15, 1.5 * h)


def strip_step(h: float) -> float:
    """Cell size of the structured strips: their diagonals have length ``h``."""
    return h / math.sqrt(2.0)


def _split(a: float, b: float, h: float) -> np.ndarray:
    n = max(1, int(math.ceil((b - a) / h - 1e-9)))
    return np.linspace(a, b, n + 1)


def _breaks(a: float, b: float, extra: Sequence[float], h: float, origin: float = 0.0) -> np.ndarray:
    """Nodes on [a, b]: uniform pieces between grid/extra breakpoints.

    ``extra`` coordinates inside (a, b) are always nodes; grid points of
    step ``GRID_STEP`` are added where they leave pieces of at least
    ``max(0.1, h/2)``, which keeps the strip cells well shaped.
    """
    gap = max(0.1, 0.5 * h)
    fixed = sorted({a, b} | {round(e, 12) for e in extra if a < e < b})
    for u, v in zip(fixed[:-1], fixed[1:]):
        if v - u < 0.5 * h:
            raise InvalidArgumentError(
                f"section lines {u:g} and {v:g} are closer than {0.5 * h:.3g} (strip ({a:g}, {b:g}))"
            )
    m0 = math.ceil((a - origin) / GRID_STEP - 1e-9)
    m1 = math.floor((b - origin) / GRID_STEP + 1e-9)
    grid = [round(origin + m * GRID_STEP, 12) for m in range(m0, m1 + 1)]
    keep = list(fixed)
    for p in grid:
        if all(abs(p - q) >= gap - 1e-12 for q in keep):
            keep.append(p)
    keep.sort()
    nodes = [np.array([keep[0]])]
    for u, v in zip(keep[:-1], keep[1:]):
        nodes.append(_split(u, v, h)[1:])
    return np.concatenate(nodes)


def _duct_ys(h: float) -> np.ndarray:
    """Transverse duct nodes: an even number of cells so the strips can be mirrored."""
    n = max(2, int(math.ceil(1.0 / strip_step(h) - 1e-9)))
    n += n % 2
    return np.linspace(0.0, 1.0, n + 1)


def _strip(xs: np.ndarray, ys: np.ndarray, mirror: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Two triangles per cell of the tensor grid ``xs`` x ``ys``.

    With ``mirror`` the diagonals of the upper half are reflected so the
    strip is symmetric about its mid line.
    """
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    nx, ny = len(xs), len(ys)
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    p00 = (i * ny + j).ravel()
    p10 = ((i + 1) * ny + j).ravel()
    p11 = ((i + 1) * ny + j + 1).ravel()
    p01 = (i * ny + j + 1).ravel()
    up = np.zeros(p00.shape, dtype=bool)
    if mirror:
        up = (0.5 * (ys[:-1] + ys[1:]) > 0.5 * (ys[0] + ys[-1]))[j.ravel()]
    t1 = np.where(up[:, None], np.column_stack([p00, p10, p01]), np.column_stack([p00, p10, p11]))
    t2 = np.where(up[:, None], np.column_stack([p10, p11, p01]), np.column_stack([p00, p11, p01]))
    return verts, np.concatenate([t1, t2])


def _polyline(points: List[Tuple[float, float]], h: float, fixed: dict, graded=(), spacing=None, radii=()) -> List[Tuple[float, float]]:
    """Closed loop through ``points``; pieces listed in ``fixed`` use given nodes.

    Pieces touching a vertex in ``graded`` get extra nodes at the corner
    seed radii; ``spacing`` maps pieces to a node spacing other than ``h``.
    """
    spacing = spacing or {}
    out = []
    n = len(points)
    for i in range(n):
        a, b = points[i], points[(i + 1) % n]
        key = (a, b)
        if key in fixed:
            seg = fixed[key]
        else:
            length = math.hypot(b[0] - a[0], b[1] - a[1])
            hh = spacing.get(key, h)
            if a in graded or b in graded:
                t = list(_graded(length, hh, radii, a in graded, b in graded) / length)
            else:
                t = list(_split(0.0, length, hh) / length)
            seg = [(a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])) for s in t]
        out.extend(seg[:-1])
    return out


def _graded(length: float, h: float, radii: Sequence[float], at_start: bool, at_end: bool) -> np.ndarray:
    """Nodes on [0, length] refined geometrically towards graded ends."""
    def ramp():
        out = sorted(radii)
        r = out[-1] if out else h
        while r * 1.6 < h:
            r *= 1.6
            out.append(r)
        return out

    lo, hi = 0.0, length
    head, tail = [], []
    if at_start:
        head = [r for r in ramp() if r < (0.45 if at_end else 0.7) * length]
        lo = head[-1] if head else 0.0
    if at_end:
        tail = [length - r for r in ramp() if r < (0.45 if at_start else 0.7) * length]
        hi = tail[-1] if tail else length
    mid = _split(lo, hi, h)
    return np.array(sorted({0.0, length, *head, *tail, *mid.tolist()}))


def _radii(h: float) -> List[float]:
    """Ring radii of the corner grading for a local size ``h``."""
    r0 = 0.5 * h
    return [r0 * 0.45**j for j in range(4)]


def _corner_seeds(corner: Tuple[float, float], start_deg: float, h: float) -> List[Tuple[float, float]]:
    """Graded rings inside the 270 degree sector of a re-entrant corner."""
    pts = []
    for r in _radii(h):
        for a in np.linspace(start_deg, start_deg + 270.0, 9)[1:-1]:
            t = math.radians(a)
            pts.append((corner[0] + r * math.cos(t), corner[1] + r * math.sin(t)))
    return pts


@functools.lru_cache(maxsize=32)
def _core_mesh(key) -> Tuple[np.ndarray, np.ndarray]:
    (x0, x1, ytop), branch, obstacle, h, sides, top_closed, right_closed = key
    ys = tuple(_duct_ys(h))
    fixed = {}
    if not right_closed:
        fixed[((x1, 0.0), (x1, 1.0))] = [(x1, y) for y in ys]
    fixed[((x0, 1.0), (x0, 0.0))] = [(x0, y) for y in reversed(ys)]
    b0 = b1 = None
    if branch is not None:
        b0, b1 = branch
        outer = [(x0, 0.0), (x1, 0.0), (x1, 1.0), (b1, 1.0), (b1, ytop), (b0, ytop), (b0, 1.0), (x0, 1.0)]
        if not top_closed:
            xs = _split(b0, b1, strip_step(h))
            fixed[((b1, ytop), (b0, ytop))] = [(x, ytop) for x in reversed(xs)]
    else:
        outer = [(x0, 0.0), (x1, 0.0), (x1, ytop), (x0, ytop)]
    # walls next to a narrow gap get a finer spacing, since Triangle may not
    # split boundary segments
    spacing = {}
    if branch is not None:
        if top_closed:
            spacing[((b1, ytop), (b0, ytop))] = min(h, ytop - 1.0)
        if right_closed:
            spacing[((x1, 0.0), (x1, 1.0))] = min(h, x1 - b1)
    if obstacle is not None:
        (cx, cy), r = obstacle
        spacing[((x0, 0.0), (x1, 0.0))] = min(h, cy - r)
        if branch is None:
            spacing[((x1, ytop), (x0, ytop))] = min(h, ytop - cy - r)
        elif not b0 < cx < b1:
            wall = ((x1, 1.0), (b1, 1.0)) if cx > b1 else ((b0, 1.0), (x0, 1.0))
            spacing[wall] = min(h, 1.0 - cy - r)
    hc = h
    if branch is not None:
        # keep the grading rings clear of nearby walls in short configurations
        hc = min(h, 0.8 * min(ytop - 1.0, x1 - b1, b0 - x0))
    loop = _polyline(outer, h, fixed, graded=((b0, 1.0), (b1, 1.0)) if branch else (), spacing=spacing, radii=_radii(hc))
    verts = list(loop)
    segs = [(i, (i + 1) % len(loop)) for i in range(len(loop))]
    holes = []
    if obstacle is not None:
        (cx, cy), r = obstacle
        corners = [(cx + r * math.cos(2 * math.pi * i / sides), cy + r * math.sin(2 * math.pi * i / sides))
                   for i in range(sides)]
        # split the polygon sides to the target size; the polygon itself does not depend on h
        sub = max(1, math.ceil(2 * r * math.sin(math.pi / sides) / h - 1e-9))
        base = len(verts)
        for i, (ax, ay) in enumerate(corners):
            bx, by = corners[(i + 1) % sides]
            verts += [(ax + (bx - ax) * j / sub, ay + (by - ay) * j / sub) for j in range(sub)]
        n = sides * sub
        segs += [(base + i, base + (i + 1) % n) for i in range(n)]
        holes.append((cx, cy))
    if branch is not None:
        b0, b1 = branch
        seeds = _corner_seeds((b0, 1.0), 180.0, hc) + _corner_seeds((b1, 1.0), 90.0, hc)
        if obstacle is not None:
            (cx, cy), r = obstacle
            seeds = [p for p in seeds if math.hypot(p[0] - cx, p[1] - cy) > r + 0.01]
        verts += seeds
    data = {"vertices": np.array(verts), "segments": np.array(segs)}
    if holes:
        data["holes"] = np.array(holes)
    amax = math.sqrt(3.0) / 4.0 * h * h
    try:
        out = triangle.triangulate(data, "pq30a%.12fYQ" % amax)
    except Exception as exc:  # Triangle reports failures as generic errors
        raise MeshingError(f"Triangle failed on the core region: {exc}") from exc
    return out["vertices"], out["triangles"]


def triangulate(spec: DomainSpec, h: float, polygon_sides: int = None, sections: Sequence[float] = (),
                branch_sections: Sequence[float] = ()) -> Mesh:
    """Conforming triangulation with tagged boundary edges.

    ``h`` is the target edge length.  ``sections`` are x-coordinates in
    the ducts and ``branch_sections`` y-coordinates in the branch that
    must be mesh lines.
    """
    if not 0.0 < h <= 0.25:
        raise InvalidArgumentError(f"h must lie in (0, 0.25], got {h}")
    sides = polygon_sides or (spec.obstacle.polygon_sides if spec.obstacle else 64)
    if spec.obstacle is not None and sides < 16:
        raise InvalidArgumentError("polygon_sides must be at least 16")
    x0, x1, ytop = spec.core_box_with(core_margin(h))
    hs = strip_step(h)
    # a closed end that falls inside (or just beyond) the core closes the core itself
    top_in_core = spec.has_branch and not spec.branch_open and spec.branch_end < ytop + 2 * hs
    right_in_core = spec.right_closed and spec.x_right < x1 + 2 * hs
    if top_in_core:
        ytop = spec.branch_end
    if right_in_core:
        x1 = spec.x_right
    if not (spec.x_left < x0 < x1 and (not spec.has_branch or spec.branch_end >= ytop)):
        raise InvalidArgumentError(
            f"h={h} needs a core box ({x0:g}, {x1:g}) x (0, {ytop:g}) inside the truncated domain"
        )
    branch = None
    if spec.has_branch:
        branch = (spec.branch_x_center - spec.branch_width / 2, spec.branch_x_center + spec.branch_width / 2)
        if not branch[1] < x1:
            raise InvalidArgumentError(f"closed end x={spec.x_right:g} cuts the branch")
    obstacle = (tuple(spec.obstacle.center), spec.obstacle.radius) if spec.obstacle else None
    ys = _duct_ys(h)
    if branch is None and obstacle is None:
        # nothing to resolve: one mirror-symmetric strip
        pieces = [_strip(_breaks(spec.x_left, spec.x_right, sections, hs), ys, mirror=True)]
    else:
        pieces = [_core_mesh(((x0, x1, ytop), branch, obstacle, float(h), int(sides), top_in_core, right_in_core))]
        pieces.append(_strip(_breaks(spec.x_left, x0, sections, hs), ys, mirror=True))
        if not right_in_core:
            pieces.append(_strip(_breaks(x1, spec.x_right, sections, hs), ys, mirror=True))
    if branch is not None and not top_in_core:
        pieces.append(_strip(_split(branch[0], branch[1], hs), _breaks(ytop, spec.branch_end, branch_sections, hs, origin=1.0)))

    verts = np.concatenate([p[0] for p in pieces])
    offs = np.cumsum([0] + [len(p[0]) for p in pieces[:-1]])
    tris = np.concatenate([p[1] + o for p, o in zip(pieces, offs)])
    key = np.round(verts, _ROUND)
    uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    # keep a deterministic vertex order: order of first appearance
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    verts = verts[first[order]]
    tris = rank[inv[tris]]
    # orient counterclockwise
    p = verts[tris]
    sa = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = sa < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    mesh0 = Mesh(verts, tris, np.zeros((0, 2), dtype=int), (), float(h))
    edges, tri_e = mesh0.edges()
    count = np.bincount(tri_e.ravel(), minlength=len(edges))
    bedges = edges[count == 1]
    tags = tuple(_tag(spec, verts[a], verts[b]) for a, b in bedges)
    mesh = Mesh(verts, tris, bedges, tags, float(h))
    mesh.check()
    ang = mesh.min_angle()
    if ang < MIN_ANGLE_DEG - 1e-9:
        raise MeshingError(f"minimum angle {ang:.2f} deg below {MIN_ANGLE_DEG} deg (h={h})")
    return mesh


def _tag(spec: DomainSpec, a: np.ndarray, b: np.ndarray) -> str:
    tol = 1e-10
    for cid, axis in spec.channels.items():
        if axis == "x-" and abs(a[0] - spec.x_left) < tol and abs(b[0] - spec.x_left) < tol:
            return f"channel:{cid}"
        if axis == "x+" and abs(a[0] - spec.x_right) < tol and abs(b[0] - spec.x_right) < tol:
            return f"channel:{cid}"
        if axis == "y+" and abs(a[1] - spec.branch_truncation) < tol and abs(b[1] - spec.branch_truncation) < tol:
            return f"channel:{cid}"
    return "wall"


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as f:
        f.write(f"{len(mesh.vertices)} {len(mesh.triangles)} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            f.write(f"{i} {j} {k}\n")
        for (i, j), t in zip(mesh.boundary_edges, mesh.boundary_tags):
            f.write(f"{i} {j} {t}\n")


def read_mesh(path) -> Mesh:
    with open(path) as f:
        nv, nt, nbe = (int(v) for v in f.readline().split())
        verts = np.array([[float(v) for v in f.readline().split()] for _ in range(nv)]).reshape(nv, 2)
        tris = np.array([[int(v) for v in f.readline().split()] for _ in range(nt)], dtype=int).reshape(nt, 3)
        be, tags = [], []
        for _ in range(nbe):
            i, j, t = f.readline().split()
            be.append((int(i), int(j)))
            tags.append(t)
    return Mesh(verts, tris, np.array(be, dtype=int).reshape(nbe, 2), tuple(tags))
