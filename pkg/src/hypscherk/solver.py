"""Minimal surface equation on masked conformal grids.

In a conformal chart with metric lambda^2 (dx^2 + dy^2) the minimal surface
equation reads div(grad u / W) = 0 with W = sqrt(1 + |grad u|^2 / lambda^2),
all operators Euclidean.  It is the Euler-Lagrange equation of the
hyperbolic area

    E(u) = integral of lambda * sqrt(lambda^2 + |grad u|^2) dx dy.

The grid is a uniform lattice of spacing h.  Each cell is cut by both
diagonals' triangulations (four corner triangles, weight 1/2 each), u is
piecewise linear on every triangle and lambda is taken at the triangle
centroid.  The discrete energy is convex, its gradient is the residual and
its Hessian is the Newton matrix, so the line search can use the energy.

Boundary data comes in two flavours.  Finite data is imposed at Dirichlet
nodes just outside the region.  Edges carrying the truncated values +m or
-m are "walls": they enter through the relaxed boundary term

    sum over quadrature points q of w_q * psi(u(q) - g_q),

where w_q is the hyperbolic length element and psi a smoothed |.|.  This is
the lower semicontinuous extension of the area functional, so the flux
through a wall never exceeds its length and equals it exactly once the
wall is saturated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import shapely
from scipy.spatial import cKDTree
from shapely.geometry import LineString, Polygon

from .errors import DomainError, GridError
from .geometry import (Geodesic, HPoint, IdealPoint, PolarChart, angle_of_ideal,
                       disk_to_halfplane, geodesic_between, halfplane_to_disk,
                       is_ideal, truncated_side_length, truncation_points)

SOLVER_TOL = 1e-10
MAX_NEWTON = 200
DEFAULT_LEVELS = (2, 4, 8, 16, 32)


# ---------------------------------------------------------------------------
# charts


class Chart:
    """A conformal chart of the hyperbolic plane with factor lambda."""

    name = ""
    coords = ("x", "y")

    def lam(self, x, y):
        raise NotImplementedError

    def from_halfplane(self, z):
        raise NotImplementedError

    def to_halfplane(self, x, y):
        raise NotImplementedError


class HalfPlaneChart(Chart):
    name = "half-plane"

    def lam(self, x, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(y > 0, 1.0 / np.where(y > 0, y, 1.0), np.nan)

    def from_halfplane(self, z):
        z = np.asarray(z, dtype=complex)
        return z.real, z.imag

    def to_halfplane(self, x, y):
        return np.asarray(x) + 1j * np.asarray(y)


class PolarGridChart(Chart):
    """Coordinates (phi, theta) at an ideal point; lambda = 1 / sin(theta)."""

    name = "polar"
    coords = ("phi", "theta")

    def __init__(self, base: Optional[IdealPoint] = None):
        self.polar = PolarChart(base if base is not None else IdealPoint(0.0))

    def lam(self, x, y):
        y = np.asarray(y, dtype=float)
        s = np.sin(y)
        ok = (y > 0) & (y < math.pi)
        return np.where(ok, 1.0 / np.where(ok, s, 1.0), np.nan)

    def from_halfplane(self, z):
        return self.polar.to_polar_array(z)

    def to_halfplane(self, x, y):
        return self.polar.to_halfplane_array(x, y)


class DiskChart(Chart):
    name = "disk"

    def lam(self, x, y):
        r2 = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2
        ok = r2 < 1.0
        return np.where(ok, 2.0 / np.where(ok, 1.0 - r2, 1.0), np.nan)

    def from_halfplane(self, z):
        w = halfplane_to_disk(np.asarray(z, dtype=complex))
        return w.real, w.imag

    def to_halfplane(self, x, y):
        return disk_to_halfplane(np.asarray(x) + 1j * np.asarray(y))


def make_chart(name: str, base: Optional[IdealPoint] = None) -> Chart:
    if name == "half-plane":
        return HalfPlaneChart()
    if name == "polar":
        return PolarGridChart(base)
    if name == "disk":
        return DiskChart()
    raise GridError("unknown chart %r" % name)


# ---------------------------------------------------------------------------
# regions


@dataclass
class Piece:
    """A boundary polyline in chart coordinates.

    ``kind`` is "dirichlet" or "wall".  Dirichlet pieces carry ``values`` at
    their points, or a callable ``func(x, y)`` evaluated at the projection of
    each Dirichlet node.  Walls carry ``sign`` (+1 for A, -1 for B) and the
    exact hyperbolic ``length`` used to normalise the quadrature weights.
    """

    points: np.ndarray
    kind: str
    label: str
    values: Optional[np.ndarray] = None
    func: Optional[Callable] = None
    sign: float = 0.0
    length: Optional[float] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.kind not in ("dirichlet", "wall"):
            raise GridError("piece kind must be 'dirichlet' or 'wall'")
        if self.kind == "dirichlet" and self.values is None and self.func is None:
            self.values = np.zeros(len(self.points))

    def value_at_projection(self, line: LineString, px, py) -> np.ndarray:
        pts = shapely.points(px, py)
        s = shapely.line_locate_point(line, pts)
        if self.func is not None:
            proj = shapely.line_interpolate_point(line, s)
            xy = shapely.get_coordinates(proj)
            return np.asarray(self.func(xy[:, 0], xy[:, 1]), dtype=float)
        seg = np.hypot(*np.diff(self.points, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        return np.interp(s, cum, self.values)


@dataclass
class Region:
    """Closed rings of boundary pieces; the largest ring is the outer one."""

    chart: Chart
    rings: List[List[Piece]]
    label: str = ""
    vertices: Optional[np.ndarray] = None  # chart positions of domain vertices

    def ring_coords(self, ring):
        return np.vstack([p.points[:-1] for p in ring])

    def polygon(self) -> Polygon:
        rings = [self.ring_coords(r) for r in self.rings]
        areas = [abs(_area(r)) for r in rings]
        k = int(np.argmax(areas))
        return Polygon(rings[k], [r for i, r in enumerate(rings) if i != k])

    @property
    def pieces(self) -> List[Piece]:
        return [p for r in self.rings for p in r]


def _area(r):
    x, y = r[:, 0], r[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def rectangle_region(x0, x1, y0, y1, data, chart: Optional[Chart] = None,
                     n: int = 256) -> Region:
    """Rectangle with Dirichlet data given by data(x, y) in chart coordinates."""
    chart = chart or HalfPlaneChart()
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
    ring = []
    for k in range(4):
        a, b = np.array(corners[k]), np.array(corners[k + 1])
        t = np.linspace(0, 1, n)[:, None]
        pts = a * (1 - t) + b * t
        ring.append(Piece(pts, "dirichlet", "side%d" % k, func=data))
    return Region(chart, [ring], "rectangle", np.array(corners[:4], dtype=float))


# ---------------------------------------------------------------------------
# regions from Scherk domains


def _sample_geodesic(chart: Chart, g: Geodesic, s0: float, s1: float, spacing: float):
    """Points of g between coordinates s0 and s1, about ``spacing`` apart in the chart."""
    s = np.linspace(s0, s1, 2001)
    x, y = chart.from_halfplane(g.points_at(s))
    seg = np.hypot(np.diff(x), np.diff(y))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(int(math.ceil(cum[-1] / spacing)), 8)
    s_new = np.interp(np.linspace(0, cum[-1], n + 1), cum, s)
    s_new[0], s_new[-1] = s0, s1
    x, y = chart.from_halfplane(g.points_at(s_new))
    return np.column_stack([x, y])


def _disk_length_param(pts_disk: np.ndarray) -> np.ndarray:
    seg = np.abs(np.diff(pts_disk))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return cum / cum[-1] if cum[-1] > 0 else cum


def _cap_towards_d(vertex_angle: float, x1: complex, rho: float, side: int):
    """Geodesic through x1 symmetric about the radius to the vertex, cut at |z| = rho.

    ``side`` is +1 when the D arc lies counter-clockwise from the vertex.
    Returns disk points from x1 to the standoff circle.
    """
    e = complex(math.cos(vertex_angle), math.sin(vertex_angle))
    proj = (x1 * e.conjugate()).real
    c = (abs(x1) ** 2 + 1.0) / (2.0 * proj)
    cen = c * e
    rad = math.sqrt(c * c - 1.0)
    # intersection with |z| = rho: |z - cen|^2 = rad^2
    # rho^2 - 2 rho c cos(t - va) + c^2 = rad^2  ->  cos(t - va) = (rho^2 + 1) / (2 rho c)
    cosd = (rho * rho + 1.0) / (2.0 * rho * c)
    if cosd > 1.0:
        raise GridError("standoff circle misses the cap geodesic; refine the standoff")
    t_end = vertex_angle + side * math.acos(cosd)
    z_end = rho * complex(math.cos(t_end), math.sin(t_end))
    a0 = np.angle(x1 - cen)
    a1 = np.angle(z_end - cen)
    da = (a1 - a0 + math.pi) % (2 * math.pi) - math.pi
    ts = a0 + da * np.linspace(0, 1, 400)
    return cen + rad * np.exp(1j * ts), t_end


def domain_region(d, chart: Optional[Chart] = None, generation: int = 1,
                  h: float = 0.02, standoff: Optional[float] = None,
                  cap_value: float = 0.0) -> Region:
    """Chart region of the truncated domain at horocycle generation n.

    Ideal vertices between two geodesic edges are cut off by the geodesic
    joining the horocycle crossings (Dirichlet value ``cap_value``).  D arcs
    are replaced by the circle |z| = 1 - standoff of the disk chart, with the
    data carried over radially; the cut at a vertex between a geodesic edge
    and a D arc is the geodesic through the crossing which is symmetric
    about the radius to the vertex.
    """
    from .domain import EdgeKind
    has_ideal = bool(d.ideal_vertices)
    has_d = EdgeKind.D in d.kinds()
    if chart is None:
        chart = DiskChart() if has_ideal else HalfPlaneChart()
    if has_d and chart.name != "disk":
        raise GridError("domains with D edges need the disk chart")
    spacing = h / 8.0
    rho = 1.0 - (standoff if standoff is not None else 2.0 * h)

    rings = []
    for comp in d.components:
        n = len(comp)
        # trimmed end points of every edge, half-plane complex (None for D edges)
        ends = []
        for e in comp:
            if e.kind == EdgeKind.D:
                ends.append(None)
                continue
            g = d.geodesic(e)
            hs = d.horocycle(e.i, generation) if is_ideal(d.vertices[e.i]) else None
            he = d.horocycle(e.j, generation) if is_ideal(d.vertices[e.j]) else None
            p, q = truncation_points(g, hs, he)
            ends.append((p.z, q.z, g, hs, he))
        # D-side cap geometry at each vertex
        d_start_angle = {}
        d_end_angle = {}
        caps_after = {}
        for k in range(n):
            e, f = comp[k], comp[(k + 1) % n]
            v = e.j
            if not is_ideal(d.vertices[v]):
                continue
            va = angle_of_ideal(d.vertices[v])
            if e.kind != EdgeKind.D and f.kind != EdgeKind.D:
                x1, x2 = ends[k][1], ends[(k + 1) % n][0]
                g = geodesic_between(HPoint.from_complex(x1), HPoint.from_complex(x2))
                s0, s1 = g.coord(HPoint.from_complex(x1)), g.coord(HPoint.from_complex(x2))
                pts = _sample_geodesic(chart, g, s0, s1, spacing)
                caps_after[k] = Piece(pts, "dirichlet", "cap%d" % v,
                                      values=np.full(len(pts), cap_value))
            elif e.kind != EdgeKind.D and f.kind == EdgeKind.D:
                x1 = complex(halfplane_to_disk(ends[k][1]))
                arc, t_end = _cap_towards_d(va, x1, rho, +1)
                d_start_angle[(k + 1) % n] = t_end
                caps_after[k] = Piece(np.column_stack([arc.real, arc.imag]), "dirichlet",
                                      "cap%d" % v, values=np.full(len(arc), cap_value))
            elif e.kind == EdgeKind.D and f.kind != EdgeKind.D:
                x2 = complex(halfplane_to_disk(ends[(k + 1) % n][0]))
                arc, t_end = _cap_towards_d(va, x2, rho, -1)
                d_end_angle[k] = t_end
                arc = arc[::-1]
                caps_after[k] = Piece(np.column_stack([arc.real, arc.imag]), "dirichlet",
                                      "cap%d" % v, values=np.full(len(arc), cap_value))
            else:
                raise GridError("consecutive D edges are not supported")
        ring = []
        for k, e in enumerate(comp):
            label = "%s%d" % (e.kind.value, k)
            if e.kind == EdgeKind.D:
                t0 = angle_of_ideal(d.vertices[e.i])
                t1 = angle_of_ideal(d.vertices[e.j])
                span = (t1 - t0) % (2 * math.pi)
                a0 = d_start_angle.get(k, t0)
                a1 = d_end_angle.get(k, t0 + span)
                a0 = t0 + ((a0 - t0) % (2 * math.pi))
                a1 = t0 + ((a1 - t0) % (2 * math.pi))
                m = max(int(math.ceil(rho * (a1 - a0) / spacing)), 16)
                ts = np.linspace(a0, a1, m + 1)
                pts = np.column_stack([rho * np.cos(ts), rho * np.sin(ts)])
                vals = e.value_at((ts - t0) / span)
                ring.append(Piece(pts, "dirichlet", label, values=vals))
            else:
                p, q, g, hs, he = ends[k]
                if e.arc is not None:
                    zs = np.concatenate([[p], np.asarray(e.arc, dtype=complex), [q]])
                    x, y = chart.from_halfplane(zs)
                    pts = _densify(np.column_stack([x, y]), spacing)
                else:
                    s0 = g.coord(HPoint.from_complex(p))
                    s1 = g.coord(HPoint.from_complex(q))
                    pts = _sample_geodesic(chart, g, s0, s1, spacing)
                if e.kind in (EdgeKind.A, EdgeKind.B):
                    length = truncated_side_length(g, hs, he)
                    ring.append(Piece(pts, "wall", label,
                                      sign=1.0 if e.kind == EdgeKind.A else -1.0,
                                      length=length))
                else:
                    zs = chart.to_halfplane(pts[:, 0], pts[:, 1])
                    t = _disk_length_param(halfplane_to_disk(zs))
                    ring.append(Piece(pts, "dirichlet", label, values=e.value_at(t)))
            if k in caps_after:
                ring.append(caps_after[k])
        rings.append(ring)
    verts = []
    for v in d.vertices:
        if is_ideal(v):
            if chart.name == "disk":
                a = angle_of_ideal(v)
                verts.append((math.cos(a), math.sin(a)))
            continue
        x, y = chart.from_halfplane(np.array([v.z]))
        verts.append((float(x[0]), float(y[0])))
    return Region(chart, rings, d.name, np.array(verts, dtype=float).reshape(-1, 2))


def _densify(pts: np.ndarray, spacing: float) -> np.ndarray:
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(int(math.ceil(np.hypot(*(b - a)) / spacing)), 1)
        t = np.linspace(0, 1, k + 1)[1:, None]
        out.append(a * (1 - t) + b * t)
    return np.vstack(out)


# ---------------------------------------------------------------------------
# grid

EXTERIOR, INTERIOR, DIRICHLET = 0, 1, 2

# corner triangles of a cell with corners 0=SW, 1=SE, 2=NE, 3=NW
_TRIANGLES = ((0, 1, 2), (0, 2, 3), (0, 1, 3), (1, 2, 3))
_CORNER = ((0, 0), (1, 0), (1, 1), (0, 1))


def _local_gradients():
    mats = []
    for tri in _TRIANGLES:
        P = np.array([_CORNER[c] for c in tri], dtype=float)
        A = np.column_stack([P[1] - P[0], P[2] - P[0]])  # 2x2
        Ainv = np.linalg.inv(A.T)
        G = np.zeros((2, 3))
        G[:, 1:] = Ainv
        G[:, 0] = -Ainv.sum(axis=1)
        mats.append(G)
    return np.array(mats)


_GLOCAL = _local_gradients()


@dataclass
class ConformalGrid:
    """Lattice, masks, conformal factor, triangles and wall quadrature."""

    chart: Chart
    h: float
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    values: np.ndarray
    lam: np.ndarray
    tri: np.ndarray
    tri_G: np.ndarray
    tri_lam: np.ndarray
    wall_node: np.ndarray
    wall_weight: np.ndarray
    wall_sign: np.ndarray
    wall_label: np.ndarray
    dirichlet_label: np.ndarray
    region: Optional[Region] = None
    level: float = 1.0
    wall_delta: float = 0.0

    @property
    def shape(self):
        return self.mask.shape

    @property
    def size(self):
        return self.mask.size

    @property
    def unknowns(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel() == INTERIOR)

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel() == DIRICHLET)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.mask == INTERIOR))

    @property
    def tri_weight(self) -> float:
        return 0.25 * self.h * self.h  # half of the triangle area h^2/2

    @property
    def wall_target(self) -> np.ndarray:
        return self.wall_sign * self.level

    def with_level(self, m: float) -> "ConformalGrid":
        g = ConformalGrid(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        g.level = float(m)
        return g

    def node_xy(self):
        X, Y = np.meshgrid(self.x, self.y)
        return X, Y


def build_grid(region: Region, h: float, level: float = 1.0,
               wall_delta: Optional[float] = None, bounds=None,
               spread: float = 2.5, origin=(0.0, 0.0)) -> ConformalGrid:
    """Mask a lattice of spacing h against the region.

    Interior nodes lie strictly inside the region.  Outside nodes that touch
    an interior node (8-neighbourhood) become Dirichlet nodes when the
    nearest boundary piece carries finite data, taking the value at their
    projection onto that piece; next to walls they stay exterior.  Triangles
    need three non-exterior corners, and interior nodes left without a
    triangle are dropped.  The lattice is ``origin + h * (i, j)``.
    """
    if not h > 0:
        raise GridError("h must be positive")
    chart = region.chart
    poly = region.polygon()
    if poly.is_empty or not poly.is_valid:
        poly = shapely.make_valid(poly)
    xmin, ymin, xmax, ymax = poly.bounds if bounds is None else bounds
    ox, oy = origin
    i0, i1 = int(math.floor((xmin - ox) / h)) - 1, int(math.ceil((xmax - ox) / h)) + 1
    j0, j1 = int(math.floor((ymin - oy) / h)) - 1, int(math.ceil((ymax - oy) / h)) + 1
    x = ox + np.arange(i0, i1 + 1) * h
    y = oy + np.arange(j0, j1 + 1) * h
    X, Y = np.meshgrid(x, y)
    lam = chart.lam(X, Y)
    inside = shapely.contains_xy(poly, X, Y) & np.isfinite(lam)
    if not inside.any():
        raise GridError("empty interior")
    near = np.zeros_like(inside)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if di or dj:
                near |= _shift(inside, dj, di)
    cand = near & ~inside & np.isfinite(lam)

    pieces = region.pieces
    lines = [LineString(p.points) for p in pieces]
    cj, ci = np.nonzero(cand)
    px, py = X[cj, ci], Y[cj, ci]
    pts = shapely.points(px, py)
    dist = np.array([shapely.distance(line, pts) for line in lines]).reshape(len(lines), -1)
    nearest = np.argmin(dist, axis=0) if len(px) else np.zeros(0, dtype=int)
    mask = np.where(inside, INTERIOR, EXTERIOR).astype(np.int8)
    values = np.full(X.shape, np.nan)
    dlabel = np.full(X.shape, "", dtype=object)
    for k, piece in enumerate(pieces):
        sel = nearest == k
        if not sel.any() or piece.kind != "dirichlet":
            continue
        vals = piece.value_at_projection(lines[k], px[sel], py[sel])
        mask[cj[sel], ci[sel]] = DIRICHLET
        values[cj[sel], ci[sel]] = vals
        dlabel[cj[sel], ci[sel]] = piece.label

    # triangles; drop interior nodes that end up without any
    for _ in range(10):
        tri, G, tlam = _triangles(mask, X, Y, h, chart)
        used = np.zeros(mask.size, dtype=bool)
        used[tri.ravel()] = True
        orphan = (mask.ravel() != EXTERIOR) & ~used
        if not orphan.any():
            break
        mask.ravel()[orphan] = EXTERIOR
    values[mask != DIRICHLET] = np.nan
    dlabel[mask != DIRICHLET] = ""
    if not np.any(mask == INTERIOR):
        raise GridError("empty interior after masking")
    lam = np.where(mask != EXTERIOR, lam, np.nan)

    # wall quadrature attached to the nearest interior node
    unk = np.flatnonzero(mask.ravel() == INTERIOR)
    tree = cKDTree(np.column_stack([X.ravel()[unk], Y.ravel()[unk]]))
    wn, ww, ws, wl = [], [], [], []
    for piece in pieces:
        if piece.kind != "wall":
            continue
        q = _densify(piece.points, h / 4.0)
        mid = 0.5 * (q[1:] + q[:-1])
        ds = np.hypot(*np.diff(q, axis=0).T)
        w = chart.lam(mid[:, 0], mid[:, 1]) * ds
        if piece.length is not None and w.sum() > 0:
            w = w * (piece.length / w.sum())
        nodes, shares = _spread(tree, mid, spread * h)
        wn.append(unk[nodes.ravel()])
        ww.append(np.repeat(w, shares.shape[1]) * shares.ravel())
        ws.append(np.full(nodes.size, piece.sign))
        wl.append(np.full(nodes.size, piece.label, dtype=object))
    cat = lambda a, dt: np.concatenate(a) if a else np.zeros(0, dtype=dt)
    return ConformalGrid(chart, h, x, y, mask, values, lam, tri, G, tlam,
                         cat(wn, int), cat(ww, float), cat(ws, float), cat(wl, object),
                         dlabel, region, float(level),
                         h * h if wall_delta is None else wall_delta)


def _spread(tree, pts, radius, k=6):
    """Hat-function shares of each point among nearby nodes (nearest node if none)."""
    dist, idx = tree.query(pts, k=k)
    wts = np.clip(radius - dist, 0.0, None)
    none = wts.sum(axis=1) == 0
    wts[none, 0] = 1.0
    wts /= wts.sum(axis=1, keepdims=True)
    keep = wts > 0
    # flatten to fixed width with zero shares where unused
    idx = np.where(keep, idx, idx[:, :1])
    return idx.ravel().reshape(idx.shape), wts


def _shift(a, dj, di):
    out = np.zeros_like(a)
    ny, nx = a.shape
    src = a[max(0, -dj):ny - max(0, dj), max(0, -di):nx - max(0, di)]
    out[max(0, dj):ny - max(0, -dj), max(0, di):nx - max(0, -di)] = src
    return out


def _triangles(mask, X, Y, h, chart):
    ny, nx = mask.shape
    active = mask != EXTERIOR
    idx = np.arange(mask.size).reshape(mask.shape)
    corners = [idx[:-1, :-1], idx[:-1, 1:], idx[1:, 1:], idx[1:, :-1]]
    act = [active[:-1, :-1], active[:-1, 1:], active[1:, 1:], active[1:, :-1]]
    x0 = X[:-1, :-1]
    y0 = Y[:-1, :-1]
    tris, Gs, lams = [], [], []
    for t, (a, b, c) in enumerate(_TRIANGLES):
        ok = act[a] & act[b] & act[c]
        # never build a triangle from Dirichlet nodes only
        ok &= (mask.ravel()[corners[a]] == INTERIOR) | (mask.ravel()[corners[b]] == INTERIOR) | \
              (mask.ravel()[corners[c]] == INTERIOR)
        tri = np.column_stack([corners[a][ok], corners[b][ok], corners[c][ok]])
        cx = x0[ok] + h * (_CORNER[a][0] + _CORNER[b][0] + _CORNER[c][0]) / 3.0
        cy = y0[ok] + h * (_CORNER[a][1] + _CORNER[b][1] + _CORNER[c][1]) / 3.0
        tris.append(tri)
        Gs.append(np.broadcast_to(_GLOCAL[t] / h, (len(tri), 2, 3)))
        lams.append(chart.lam(cx, cy))
    tri = np.vstack(tris).astype(np.int64)
    G = np.concatenate(Gs)
    lamc = np.concatenate(lams)
    order = np.lexsort((tri[:, 2], tri[:, 1], tri[:, 0]))
    return tri[order], np.ascontiguousarray(G[order]), lamc[order]


# ---------------------------------------------------------------------------
# energy, residual, Jacobian


def _psi(r, delta):
    return delta * (np.sqrt(1.0 + (r / delta) ** 2) - 1.0)


def _dpsi(r, delta):
    return r / np.sqrt(delta * delta + r * r)


def _ddpsi(r, delta):
    return delta * delta / (delta * delta + r * r) ** 1.5


def _tri_gradients(grid: ConformalGrid, U: np.ndarray) -> np.ndarray:
    return np.einsum("tij,tj->ti", grid.tri_G, U[grid.tri])


def area_functional(grid: ConformalGrid, U: np.ndarray) -> float:
    """Discrete hyperbolic area plus the relaxed wall term."""
    p = _tri_gradients(grid, U)
    lam = grid.tri_lam
    S = np.sqrt(lam * lam + np.einsum("ti,ti->t", p, p))
    e = grid.tri_weight * math.fsum(lam * S)
    if len(grid.wall_node):
        r = U[grid.wall_node] - grid.wall_target
        e += math.fsum(grid.wall_weight * _psi(r, grid.wall_delta))
    return e


def energy_gradient(grid: ConformalGrid, U: np.ndarray, walls: bool = True) -> np.ndarray:
    p = _tri_gradients(grid, U)
    lam = grid.tri_lam
    S = np.sqrt(lam * lam + np.einsum("ti,ti->t", p, p))
    q = grid.tri_weight * (lam / S)[:, None] * p  # dE/dp
    loc = np.einsum("ti,tij->tj", q, grid.tri_G)
    g = np.zeros(grid.size)
    for k in range(3):
        g += np.bincount(grid.tri[:, k], weights=loc[:, k], minlength=grid.size)
    if walls and len(grid.wall_node):
        r = U[grid.wall_node] - grid.wall_target
        g += np.bincount(grid.wall_node, weights=grid.wall_weight * _dpsi(r, grid.wall_delta),
                         minlength=grid.size)
    return g


def residual(grid: ConformalGrid, U: np.ndarray) -> np.ndarray:
    """Nodal residual, a discrete div(grad u / W); zero off the interior nodes.

    Equal to minus the energy gradient divided by h^2, so at interior nodes
    with a full stencil it approximates the Euclidean divergence of the
    field grad u / W.
    """
    g = energy_gradient(grid, np.asarray(U, dtype=float).ravel())
    R = np.zeros(grid.size)
    unk = grid.unknowns
    R[unk] = -g[unk] / (grid.h * grid.h)
    return R.reshape(grid.shape)


def jacobian(grid: ConformalGrid, U: np.ndarray) -> sp.csr_matrix:
    """Hessian of the discrete energy restricted to the interior nodes."""
    p = _tri_gradients(grid, U)
    lam = grid.tri_lam
    S2 = lam * lam + np.einsum("ti,ti->t", p, p)
    S = np.sqrt(S2)
    a = grid.tri_weight * lam / S
    M = a[:, None, None] * (np.eye(2)[None] - np.einsum("ti,tj->tij", p, p) / S2[:, None, None])
    K = np.einsum("tki,tkl,tlj->tij", grid.tri_G, M, grid.tri_G)
    unk = grid.unknowns
    pos = np.full(grid.size, -1)
    pos[unk] = np.arange(len(unk))
    rows = np.repeat(pos[grid.tri], 3, axis=1).ravel()
    cols = np.tile(pos[grid.tri], (1, 3)).ravel()
    vals = K.reshape(len(K), 9).ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = len(unk)
    H = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    if len(grid.wall_node):
        r = U[grid.wall_node] - grid.wall_target
        d = np.bincount(pos[grid.wall_node], weights=grid.wall_weight * _ddpsi(r, grid.wall_delta),
                        minlength=n)
        H = H + sp.diags(d)
    return H


def jacobian_residual(grid: ConformalGrid, U: np.ndarray) -> sp.csr_matrix:
    """Derivative of ``residual`` (interior nodes) with respect to interior values."""
    return -jacobian(grid, U) / (grid.h * grid.h)


# ---------------------------------------------------------------------------
# Newton solve


@dataclass
class SolverConfig:
    tol: float = SOLVER_TOL
    max_iter: int = MAX_NEWTON
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_halvings: int = 40
    verbose: bool = False


@dataclass
class DiscreteSolution:
    grid: ConformalGrid
    u: np.ndarray  # (ny, nx), nan on exterior nodes
    residual_max: float
    residual_l2: float
    iterations: int
    converged: bool
    hit_cap: bool
    energies: List[float] = field(default_factory=list)
    message: str = ""

    @property
    def level(self):
        return self.grid.level

    def values_flat(self) -> np.ndarray:
        return np.nan_to_num(self.u.ravel(), nan=0.0)

    def W(self) -> np.ndarray:
        return nodal_W(self.grid, self.values_flat())

    def interpolate(self, px, py) -> np.ndarray:
        return bilinear(self.grid, self.u, px, py)


def initial_guess(grid: ConformalGrid) -> np.ndarray:
    """Harmonic interpolation of the data, walls entering as stiff Robin terms."""
    U = np.zeros(grid.size)
    dn = grid.dirichlet_nodes
    U[dn] = grid.values.ravel()[dn]
    unk = grid.unknowns
    pos = np.full(grid.size, -1)
    pos[unk] = np.arange(len(unk))
    w = grid.tri_weight
    K = np.einsum("tki,tkj->tij", grid.tri_G, grid.tri_G) * w
    rows = np.repeat(grid.tri, 3, axis=1).ravel()
    cols = np.tile(grid.tri, (1, 3)).ravel()
    L = sp.coo_matrix((K.reshape(-1), (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    Luu = L[unk][:, unk]
    rhs = -(L[unk] @ U)
    if len(grid.wall_node):
        kappa = grid.wall_weight / grid.h
        d = np.bincount(pos[grid.wall_node], weights=kappa, minlength=len(unk))
        Luu = Luu + sp.diags(d)
        rhs += np.bincount(pos[grid.wall_node], weights=kappa * grid.wall_target, minlength=len(unk))
    U[unk] = spla.spsolve(Luu.tocsc(), rhs)
    return U


def solve_dirichlet(grid: ConformalGrid, config: Optional[SolverConfig] = None,
                    u0: Optional[np.ndarray] = None) -> DiscreteSolution:
    """Damped Newton on the discrete area functional."""
    cfg = config or SolverConfig()
    unk = grid.unknowns
    dn = grid.dirichlet_nodes
    if u0 is None:
        U = initial_guess(grid)
    else:
        U = np.nan_to_num(np.asarray(u0, dtype=float).ravel(), nan=0.0).copy()
        U[dn] = grid.values.ravel()[dn]
    h2 = grid.h * grid.h
    E = area_functional(grid, U)
    energies = [E]
    converged = False
    msg = ""
    it = 0
    for it in range(cfg.max_iter + 1):
        g = energy_gradient(grid, U)
        R = g[unk] / h2
        rmax = float(np.max(np.abs(R))) if len(R) else 0.0
        scale = 1.0 + float(np.max(np.abs(U[np.concatenate([unk, dn])])))
        if cfg.verbose:
            print("newton", it, "E", E, "rmax", rmax)
        if rmax < cfg.tol * scale:
            converged = True
            break
        if it == cfg.max_iter:
            msg = "iteration cap reached"
            break
        H = jacobian(grid, U)
        try:
            step = spla.spsolve(H.tocsc(), -g[unk])
        except RuntimeError as exc:  # singular factorisation
            step = -g[unk] / max(H.diagonal().max(), 1e-300)
            msg = "singular Jacobian (%s); gradient step used" % exc
        if not np.all(np.isfinite(step)):
            step = -g[unk] / max(H.diagonal().max(), 1e-300)
        slope = float(g[unk] @ step)
        t = 1.0
        accepted = False
        for _ in range(cfg.max_halvings):
            V = U.copy()
            V[unk] += t * step
            En = area_functional(grid, V)
            if En <= E + cfg.armijo * t * slope:
                accepted = True
                break
            if t == 1.0 and abs(En - E) <= 1e-13 * abs(E) + 1e-300:
                # energy differences are at roundoff level; judge by the residual
                gn = energy_gradient(grid, V)
                if np.max(np.abs(gn[unk])) / h2 < rmax:
                    accepted = True
                    break
            t *= cfg.backtrack
        if not accepted:
            msg = "line search failed"
            break
        U, E = V, En
        energies.append(E)
    g = energy_gradient(grid, U)
    R = g[unk] / h2
    u = np.full(grid.size, np.nan)
    active = grid.mask.ravel() != EXTERIOR
    u[active] = U[active]
    return DiscreteSolution(grid, u.reshape(grid.shape),
                            float(np.max(np.abs(R))) if len(R) else 0.0,
                            float(np.sqrt(np.mean(R * R))) if len(R) else 0.0,
                            it, converged, (not converged) and it >= cfg.max_iter,
                            energies, msg)


# ---------------------------------------------------------------------------
# post-processing


def nodal_gradient(grid: ConformalGrid, U: np.ndarray):
    """Central-difference Euclidean gradient at active nodes (one-sided at the rim)."""
    Uf = U.reshape(grid.shape)
    active = grid.mask != EXTERIOR
    h = grid.h
    gx = np.full(grid.shape, np.nan)
    gy = np.full(grid.shape, np.nan)
    for arr, axis in ((gx, 1), (gy, 0)):
        fwd_ok = _shift(active, 0, -1) if axis == 1 else _shift(active, -1, 0)
        bwd_ok = _shift(active, 0, 1) if axis == 1 else _shift(active, 1, 0)
        fwd = np.roll(Uf, -1, axis=axis)
        bwd = np.roll(Uf, 1, axis=axis)
        c = active & fwd_ok & bwd_ok
        arr[c] = (fwd[c] - bwd[c]) / (2 * h)
        f = active & fwd_ok & ~bwd_ok
        arr[f] = (fwd[f] - Uf[f]) / h
        b = active & bwd_ok & ~fwd_ok
        arr[b] = (Uf[b] - bwd[b]) / h
    return gx, gy


def nodal_W(grid: ConformalGrid, U: np.ndarray, interior_only: bool = True) -> np.ndarray:
    """Area element W at each node, averaged over its triangles.

    With ``interior_only`` only triangles whose corners are all interior
    nodes count, so boundary layers next to Dirichlet nodes are left out.
    Nodes without such triangles get nan.
    """
    p = _tri_gradients(grid, U)
    lam = grid.tri_lam
    W = np.sqrt(1.0 + np.einsum("ti,ti->t", p, p) / (lam * lam))
    keep = np.ones(len(W), dtype=bool)
    if interior_only:
        keep = np.all(grid.mask.ravel()[grid.tri] == INTERIOR, axis=1)
    tot = np.zeros(grid.size)
    cnt = np.zeros(grid.size)
    for k in range(3):
        tot += np.bincount(grid.tri[keep, k], weights=W[keep], minlength=grid.size)
        cnt += np.bincount(grid.tri[keep, k], minlength=grid.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = tot / cnt
    out[cnt == 0] = np.nan
    return out.reshape(grid.shape)


def bilinear(grid: ConformalGrid, F: np.ndarray, px, py) -> np.ndarray:
    """Bilinear interpolation of a nodal field; nan when a cell corner is inactive."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    h = grid.h
    fi = (px - grid.x[0]) / h
    fj = (py - grid.y[0]) / h
    i = np.clip(np.floor(fi).astype(int), 0, len(grid.x) - 2)
    j = np.clip(np.floor(fj).astype(int), 0, len(grid.y) - 2)
    s = fi - i
    t = fj - j
    F = np.asarray(F).reshape(grid.shape)
    out = (F[j, i] * (1 - s) * (1 - t) + F[j, i + 1] * s * (1 - t)
           + F[j + 1, i + 1] * s * t + F[j + 1, i] * (1 - s) * t)
    outside = (fi < 0) | (fj < 0) | (fi > len(grid.x) - 1) | (fj > len(grid.y) - 1)
    out = np.where(outside, np.nan, out)
    return out


def reaction_fluxes(sol: DiscreteSolution) -> Dict[str, float]:
    """Outward flux through each labelled boundary piece, from nodal reactions.

    Dirichlet pieces report the sum of the energy derivatives at their
    nodes; walls report minus the sum of their relaxed-term derivatives.
    The values add up to zero up to the solver residual.
    """
    grid = sol.grid
    U = sol.values_flat()
    g = energy_gradient(grid, U, walls=False)
    out: Dict[str, float] = {}
    dn = grid.dirichlet_nodes
    labels = grid.dirichlet_label.ravel()[dn]
    for lab in sorted(set(labels)):
        sel = dn[labels == lab]
        out[lab] = math.fsum(g[sel])
    if len(grid.wall_node):
        r = U[grid.wall_node] - grid.wall_target
        contrib = -grid.wall_weight * _dpsi(r, grid.wall_delta)
        for lab in sorted(set(grid.wall_label)):
            out[lab] = math.fsum(contrib[grid.wall_label == lab])
    return out


def write_grid_csv(sol: DiscreteSolution, path) -> None:
    """CSV with chart coordinates, u and W at every active node."""
    grid = sol.grid
    X, Y = grid.node_xy()
    W = nodal_W(grid, sol.values_flat(), interior_only=False)
    active = grid.mask != EXTERIOR
    cx, cy = grid.chart.coords
    with open(path, "w", newline="\n") as fh:
        fh.write("%s,%s,u,W\n" % (cx, cy))
        for a, b, c, d in zip(X[active], Y[active], sol.u[active], W[active]):
            fh.write("%s,%s,%s,%s\n" % (fmt17(a), fmt17(b), fmt17(c), fmt17(d)))


def fmt17(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return "%.17g" % v


# ---------------------------------------------------------------------------
# truncation sequences


@dataclass
class SequenceLevel:
    level: float
    generation: int
    solution: DiscreteSolution
    probe_values: np.ndarray
    max_W: float

    def to_dict(self):
        s = self.solution
        return {"m": self.level, "n": self.generation,
                "converged": s.converged, "iterations": s.iterations,
                "residual_max": s.residual_max, "residual_l2": s.residual_l2,
                "probe_values": [float(v) for v in self.probe_values],
                "max_W": self.max_W}


@dataclass
class TruncationSequence:
    domain_name: str
    h: float
    probes: np.ndarray  # chart coordinates (k, 2)
    levels: List[SequenceLevel]
    flagged: bool = False

    def probe_table(self) -> np.ndarray:
        return np.array([lv.probe_values for lv in self.levels])

    def increments(self) -> np.ndarray:
        """max |probe change| between consecutive levels."""
        t = self.probe_table()
        return np.max(np.abs(np.diff(t, axis=0)), axis=1)

    def is_cauchy(self, tol: float = 1e-3) -> bool:
        inc = self.increments()
        return len(inc) >= 2 and bool(inc[-1] < tol) and bool(np.all(inc[-2:] <= inc[-3:-1] + 1e-14))

    def to_dict(self):
        return {"domain": self.domain_name, "h": self.h, "flagged": self.flagged,
                "probes": self.probes.tolist(),
                "levels": [lv.to_dict() for lv in self.levels]}


def default_probes(d, chart: Chart, k: int = 6) -> np.ndarray:
    """Interior probe points: Klein centroids of the inscribed polygons, then of the domain."""
    from .domain import enumerate_inscribed_polygons
    from .geometry import from_disk
    pts = []
    try:
        polys = enumerate_inscribed_polygons(d)
    except Exception:
        polys = []
    for p in sorted(polys, key=lambda p: (not p.is_domain, len(p.vertices), p.vertices)):
        c = np.mean([d.klein_vertex(v) for v in p.vertices], axis=0)
        pts.append(c)
    rp = d.klein_polygon().representative_point()
    pts.append(np.array([rp.x, rp.y]))
    out = []
    for c in pts[:k] + pts[-1:]:
        kz = complex(c[0], c[1])
        r2 = abs(kz) ** 2
        z = kz / (1.0 + math.sqrt(max(1.0 - r2, 0.0)))  # Klein -> disk
        w = complex(disk_to_halfplane(z))
        x, y = chart.from_halfplane(np.array([w]))
        out.append((float(x[0]), float(y[0])))
    return np.array(out)


def run_truncation_sequence(d, levels: Sequence[float] = DEFAULT_LEVELS,
                            generations: Optional[Sequence[int]] = None, h: float = 1 / 32,
                            chart: Optional[Chart] = None, probes: Optional[np.ndarray] = None,
                            config: Optional[SolverConfig] = None,
                            standoff: Optional[float] = None) -> TruncationSequence:
    """Solve the truncated problems u_m^n for each level m (and generation n).

    ``generations`` defaults to 1 for every level.  Consecutive levels on the
    same generation share the grid and the previous solution is the
    starting guess.
    """
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise GridError("levels must be strictly increasing")
    gens = list(generations) if generations is not None else [1] * len(levels)
    if len(gens) != len(levels):
        raise GridError("one generation per level is needed")
    base = None
    prev = None
    out = []
    flagged = False
    for m, n in zip(levels, gens):
        if base is None or base[0] != n:
            region = domain_region(d, chart, generation=n, h=h, standoff=standoff)
            base = (n, build_grid(region, h))
            prev = None
        grid = base[1].with_level(m)
        if chart is None:
            chart = grid.chart
        if probes is None:
            probes = default_probes(d, grid.chart)
        u0 = None
        if prev is not None:
            # shift the previous solution towards the new wall level
            u0 = prev.values_flat()
        sol = solve_dirichlet(grid, config, u0)
        flagged |= not sol.converged
        pv = sol.interpolate(probes[:, 0], probes[:, 1])
        W = sol.W()
        out.append(SequenceLevel(float(m), int(n), sol, pv, float(np.nanmax(W))))
        prev = sol
    return TruncationSequence(d.name, h, np.asarray(probes), out, flagged)


# ---------------------------------------------------------------------------
# divergence lines


@dataclass
class DivergenceLineCandidate:
    endpoints: Tuple[Tuple[float, float], Tuple[float, float]]  # chart coordinates
    snapped: Tuple[Optional[int], Optional[int]]  # vertex indices of the region, if snapped
    score: float
    width: float
    fit_residual: float
    nodes: int
    geodesic: Tuple[str, float, float]  # ("circle", centre, radius) or ("line", x, 0) in the fit model

    def to_dict(self):
        return {"endpoints": [list(p) for p in self.endpoints],
                "snapped": list(self.snapped), "score": self.score, "width": self.width,
                "fit_residual": self.fit_residual, "nodes": self.nodes,
                "geodesic": list(self.geodesic)}


def _fit_geodesic(chart: Chart, px, py):
    """Least-squares geodesic through chart points, in the chart's own circle model.

    Half-plane: circles centred on the real axis or vertical lines.  Disk:
    circles orthogonal to the unit circle or diameters.  Returns the fit and
    the chart-space distance function.
    """
    if chart.name == "polar":
        z = chart.to_halfplane(px, py)
        fit, _ = _fit_geodesic(HalfPlaneChart(), z.real, z.imag)

        def dist(qx, qy):
            zz = chart.to_halfplane(qx, qy)
            return _geo_dist(fit, zz.real, zz.imag)
        return fit, dist
    if chart.name == "half-plane":
        A = np.column_stack([2 * px, np.ones_like(px)])
        b = px * px + py * py
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        c, k = sol
        r2 = k + c * c
        fit_c = ("circle", float(c), float(math.sqrt(max(r2, 0.0))))
        fit_l = ("line", float(np.mean(px)), 0.0)
        ec = np.max(np.abs(_geo_dist(fit_c, px, py))) if r2 > 0 else np.inf
        el = np.max(np.abs(px - np.mean(px)))
        fit = fit_c if ec <= el else fit_l
        return fit, lambda qx, qy: _geo_dist(fit, qx, qy)
    # disk: x^2 + y^2 - 2 a x - 2 b y + 1 = 0
    A = np.column_stack([2 * px, 2 * py])
    b = px * px + py * py + 1.0
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    a, bb = sol
    fit_c = ("dcircle", float(a), float(bb))
    ec = np.max(np.abs(_geo_dist(fit_c, px, py))) if a * a + bb * bb > 1 else np.inf
    # diameter through the origin
    ang = 0.5 * math.atan2(2 * np.sum(px * py), np.sum(px * px - py * py))
    fit_l = ("diameter", float(ang), 0.0)
    el = np.max(np.abs(_geo_dist(fit_l, px, py)))
    fit = fit_c if ec <= el else fit_l
    return fit, lambda qx, qy: _geo_dist(fit, qx, qy)


def _geo_dist(fit, x, y):
    kind, a, b = fit
    if kind == "circle":
        return np.hypot(x - a, y) - b
    if kind == "line":
        return x - a
    if kind == "dcircle":
        return np.hypot(x - a, y - b) - math.sqrt(a * a + b * b - 1.0)
    return -np.sin(a) * x + np.cos(a) * y


def _fit_points(fit, n=4000):
    """Chart points along the full fitted geodesic (fit model = chart model)."""
    kind, a, b = fit
    if kind == "circle":
        t = np.linspace(1e-4, math.pi - 1e-4, n)
        return a + b * np.cos(t), b * np.sin(t)
    if kind == "line":
        t = np.linspace(-8, 8, n)
        return np.full(n, a), np.exp(t)
    if kind == "dcircle":
        r = math.sqrt(a * a + b * b - 1.0)
        t = np.linspace(0, 2 * math.pi, 4 * n)
        x, y = a + r * np.cos(t), b + r * np.sin(t)
        keep = x * x + y * y < 1
        return x[keep], y[keep]
    t = np.linspace(-1, 1, n)
    return t * math.cos(a), t * math.sin(a)


def detect_divergence_lines(seq: TruncationSequence, ratio: float = 1.5,
                            min_nodes: int = 5, boundary_margin: float = 3.0,
                            core_fraction: float = 0.2) -> List[DivergenceLineCandidate]:
    """Geodesic lines along which W grows without bound across the levels.

    Nodes whose W grows by more than ``ratio`` between the top two levels
    are flagged, except within ``boundary_margin`` cells of a Dirichlet
    boundary piece, where the discrete solution develops boundary layers
    against finite data.  Flagged nodes are clustered (8-neighbourhood), each
    cluster is fitted by a geodesic and the fitted geodesic is cut to the
    domain; endpoints within 3h of a domain vertex are snapped to it.  Within
    a cluster only nodes with W above ``core_fraction`` of the cluster peak
    are kept, since the flat tails of the layer follow grid lines rather
    than the line itself.
    """
    from scipy import ndimage
    if len(seq.levels) < 3:
        raise GridError("divergence detection needs at least three levels")
    grids = {id(lv.solution.grid.mask) for lv in seq.levels[-3:]}
    top, prev = seq.levels[-1].solution, seq.levels[-2].solution
    if top.grid.shape != prev.grid.shape or len(grids) > 1 and not np.array_equal(
            top.grid.mask, prev.grid.mask):
        raise GridError("the top levels must share the grid")
    grid = top.grid
    h = grid.h
    Wt = top.W()
    Wp = prev.W()
    with np.errstate(invalid="ignore", divide="ignore"):
        flag = (Wt / Wp > ratio) & np.isfinite(Wt) & np.isfinite(Wp)
    X, Y = grid.node_xy()
    # keep away from finite-data boundaries
    region = grid.region
    dpieces = [LineString(p.points) for p in region.pieces if p.kind == "dirichlet"]
    fj, fi = np.nonzero(flag)
    if len(fj) and dpieces:
        pts = shapely.points(X[fj, fi], Y[fj, fi])
        dmin = np.min([shapely.distance(l, pts) for l in dpieces], axis=0)
        far = dmin > boundary_margin * h
        flag[fj[~far], fi[~far]] = False
    lab, nlab = ndimage.label(flag, structure=np.ones((3, 3)))
    poly = region.polygon()
    cands = []
    clusters = []
    for k in range(1, nlab + 1):
        cj, ci = np.nonzero(lab == k)
        # keep the core of the layer: nodes where W is a sizeable part of the peak
        core = Wt[cj, ci] >= core_fraction * np.max(Wt[cj, ci])
        if np.count_nonzero(core) >= min_nodes:
            clusters.append((cj[core], ci[core]))
    growth = np.log(Wt / Wp)

    def make(cl):
        cj, ci = cl
        px, py = X[cj, ci], Y[cj, ci]
        fit, dist = _fit_geodesic(grid.chart, px, py)
        res = float(np.max(np.abs(dist(px, py))))
        if grid.chart.name == "polar":
            z = grid.chart.to_halfplane(px, py)
            gx, gy = _fit_points(fit)
            cx, cy = grid.chart.from_halfplane(gx + 1j * gy)
        else:
            cx, cy = _fit_points(fit)
        inside = shapely.contains_xy(poly.buffer(1e-9), cx, cy)
        # the inside run closest to the cluster
        runs = _runs(inside)
        if not runs:
            return None
        cmx, cmy = np.mean(px), np.mean(py)
        best = min(runs, key=lambda r: np.min(np.hypot(cx[r[0]:r[1]] - cmx, cy[r[0]:r[1]] - cmy)))
        a, b = best
        e0 = (float(cx[a]), float(cy[a]))
        e1 = (float(cx[b - 1]), float(cy[b - 1]))
        snapped = [None, None]
        ends = [e0, e1]
        if region.vertices is not None and len(region.vertices):
            for k, e in enumerate(ends):
                dv = np.hypot(region.vertices[:, 0] - e[0], region.vertices[:, 1] - e[1])
                j = int(np.argmin(dv))
                if dv[j] <= 3 * h:
                    snapped[k] = j
                    ends[k] = (float(region.vertices[j, 0]), float(region.vertices[j, 1]))
        return DivergenceLineCandidate(tuple(ends), tuple(snapped),
                                       float(np.median(growth[cj, ci])),
                                       float(np.std(dist(px, py))), res, len(cj), fit)

    for cl in clusters:
        c = make(cl)
        if c is not None:
            cands.append((c, cl))
    # merge candidates whose fitted geodesics overlap
    merged = True
    while merged and len(cands) > 1:
        merged = False
        for a in range(len(cands)):
            for b in range(a + 1, len(cands)):
                ca, cb = cands[a][0], cands[b][0]
                _, dist = _fit_geodesic(grid.chart, *_cluster_xy(X, Y, cands[a][1]))
                bx, by = _cluster_xy(X, Y, cands[b][1])
                if np.max(np.abs(dist(bx, by))) < 3 * h:
                    cl = (np.concatenate([cands[a][1][0], cands[b][1][0]]),
                          np.concatenate([cands[a][1][1], cands[b][1][1]]))
                    c = make(cl)
                    cands = [x for k, x in enumerate(cands) if k not in (a, b)]
                    if c is not None:
                        cands.append((c, cl))
                    merged = True
                    break
            if merged:
                break
    out = [c for c, _ in cands]
    out.sort(key=lambda c: (-c.nodes, c.endpoints))
    return out


def _cluster_xy(X, Y, cl):
    return X[cl[0], cl[1]], Y[cl[0], cl[1]]


def _runs(mask):
    runs = []
    start = None
    for k, v in enumerate(mask):
        if v and start is None:
            start = k
        if not v and start is not None:
            runs.append((start, k))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


# ---------------------------------------------------------------------------
# flux along polylines


def discrete_flux(sol: DiscreteSolution, polyline, reverse: bool = False):
    """Flux of X_u across a chart polyline (midpoint rule), normal to the right.

    The integrand <grad u / W, nu> ds is the same in every conformal chart,
    so it is evaluated with Euclidean quantities and the chart's lambda in W.
    The error estimate compares with the same rule on every other vertex.
    """
    from .flux import FluxResult
    P = np.asarray(polyline, dtype=float)
    if reverse:
        P = P[::-1]
    grid = sol.grid
    gx, gy = nodal_gradient(grid, sol.values_flat())

    def rule(Q):
        mid = 0.5 * (Q[1:] + Q[:-1])
        d = np.diff(Q, axis=0)
        ux = bilinear(grid, gx, mid[:, 0], mid[:, 1])
        uy = bilinear(grid, gy, mid[:, 0], mid[:, 1])
        if not (np.all(np.isfinite(ux)) and np.all(np.isfinite(uy))):
            raise GridError("polyline leaves the active part of the grid")
        lam = grid.chart.lam(mid[:, 0], mid[:, 1])
        W = np.sqrt(1.0 + (ux * ux + uy * uy) / (lam * lam))
        # right normal times Euclidean length: (dy, -dx)
        flux = (ux * d[:, 1] - uy * d[:, 0]) / W
        length = lam * np.hypot(d[:, 0], d[:, 1])
        return math.fsum(flux), math.fsum(length)

    val, length = rule(P)
    coarse = P[::2] if len(P) % 2 == 1 else np.vstack([P[::2], P[-1:]])
    val2, _ = rule(coarse)
    return FluxResult("polyline(%d points)" % len(P), val, length, abs(val - val2),
                      "right-hand normal")
