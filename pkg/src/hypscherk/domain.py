"""Scherk domains, inscribed polygons and the Jenkins-Serrin type checks.

Vertices are stored once per domain and edges refer to them by index.  Each
boundary component is a closed cycle of edges traversed with the domain on
the left.  Containment questions are answered in the Klein model, where
geodesics are straight segments, so geodesic polygons are ordinary
Euclidean polygons there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import Polygon

from .errors import (CombinatorialLimitError, DomainError, EmptySegmentError,
                     MisconfigurationError)
from .geometry import (Geodesic, HPoint, Horocycle, IdealPoint, Mobius, Point,
                       angle_of_ideal, geodesic_between, halfplane_to_disk,
                       horocycle_geodesic_intersection, hyperbolic_distance,
                       is_ideal, to_disk, to_klein, truncated_side_length)

TOL_STRICT = 1e-7
MAX_VERTICES = 16
MAX_CANDIDATES = 20000
CHORD_SAMPLES = 64
MAX_CLOSED_CYCLES = 2000000
LN2 = math.log(2.0)


class EdgeKind(str, Enum):
    A = "A"  # +infinity
    B = "B"  # -infinity
    C = "C"  # finite data on an interior convex arc
    D = "D"  # finite data on an arc of the ideal boundary


@dataclass
class Edge:
    """A boundary edge from vertex ``i`` to vertex ``j``.

    ``arc`` holds interior sample points (half-plane complex numbers) of a
    non-geodesic C edge; it is None for geodesic edges.  ``data`` is a list
    of (t, value) pairs with t in [0, 1] increasing along the edge, used for
    C and D edges; the data is piecewise linear in t.  On D edges t is
    proportional to the disk angle; on C edges to Euclidean disk length.
    """

    kind: EdgeKind
    i: int
    j: int
    arc: Optional[np.ndarray] = None
    data: Optional[List[Tuple[float, float]]] = None

    def __post_init__(self):
        self.kind = EdgeKind(self.kind)
        if self.kind in (EdgeKind.A, EdgeKind.B) and self.arc is not None:
            raise DomainError("A and B edges are geodesic; no arc samples allowed")
        if self.kind == EdgeKind.D and self.arc is not None:
            raise DomainError("D edges lie on the ideal boundary")
        if self.data is not None:
            ts = [t for t, _ in self.data]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise DomainError("edge data parameters must be strictly increasing")
            if ts and (ts[0] < 0 or ts[-1] > 1):
                raise DomainError("edge data parameters must lie in [0, 1]")

    @property
    def is_geodesic(self) -> bool:
        return self.kind != EdgeKind.D and self.arc is None

    def value_at(self, t) -> np.ndarray:
        """Boundary data at parameter(s) t; 0 when no data is attached."""
        t = np.asarray(t, dtype=float)
        if not self.data:
            return np.zeros_like(t)
        ts = np.array([a for a, _ in self.data])
        vs = np.array([b for _, b in self.data])
        return np.interp(t, ts, vs)


@dataclass
class ScherkDomain:
    """A (possibly ideal) Scherk domain.

    Attributes:
        vertices: finite (HPoint) and ideal (IdealPoint) vertices.
        components: boundary cycles as lists of edges, domain on the left.
        horocycles: one horocycle per ideal vertex index.
        name: free text label.
    """

    vertices: List[Point]
    components: List[List[Edge]]
    horocycles: Dict[int, Horocycle] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        for comp in self.components:
            if not comp:
                raise DomainError("empty boundary component")
            for e in comp:
                for v in (e.i, e.j):
                    if not 0 <= v < len(self.vertices):
                        raise DomainError("edge refers to a missing vertex %d" % v)
        self._klein_polygon = None

    # -- basic queries --------------------------------------------------

    @property
    def edges(self) -> List[Edge]:
        return [e for comp in self.components for e in comp]

    @property
    def ideal_vertices(self) -> List[int]:
        return [k for k, v in enumerate(self.vertices) if is_ideal(v)]

    def kinds(self) -> set:
        return {e.kind for e in self.edges}

    def geodesic(self, e: Edge) -> Geodesic:
        return geodesic_between(self.vertices[e.i], self.vertices[e.j])

    def horocycle(self, v: int, generation: int = 1) -> Horocycle:
        if v not in self.horocycles:
            raise DomainError("ideal vertex %d has no horocycle" % v)
        return self.horocycles[v].generation(generation)

    def is_polygonal(self) -> bool:
        return len(self.components) == 1 and all(e.is_geodesic for e in self.edges)

    def transformed(self, m: Mobius) -> "ScherkDomain":
        """Image of the domain under an orientation preserving isometry."""
        verts = [m.apply(v) for v in self.vertices]
        comps = []
        for comp in self.components:
            new = []
            for e in comp:
                arc = None if e.arc is None else m.apply_complex(np.asarray(e.arc))
                new.append(Edge(e.kind, e.i, e.j, arc, e.data))
            comps.append(new)
        hors = {}
        for v, h in self.horocycles.items():
            hors[v] = _map_horocycle(m, h)
        return ScherkDomain(verts, comps, hors, self.name)

    def swapped_ab(self) -> "ScherkDomain":
        swap = {EdgeKind.A: EdgeKind.B, EdgeKind.B: EdgeKind.A}
        comps = [[Edge(swap.get(e.kind, e.kind), e.i, e.j, e.arc, e.data) for e in comp]
                 for comp in self.components]
        return ScherkDomain(list(self.vertices), comps, dict(self.horocycles), self.name)

    def reindexed(self, perm: Sequence[int]) -> "ScherkDomain":
        """Same domain with vertex k stored at position perm[k]."""
        verts = [None] * len(self.vertices)
        for k, v in enumerate(self.vertices):
            verts[perm[k]] = v
        comps = [[Edge(e.kind, perm[e.i], perm[e.j], e.arc, e.data) for e in comp]
                 for comp in self.components]
        hors = {perm[v]: h for v, h in self.horocycles.items()}
        return ScherkDomain(verts, comps, hors, self.name)

    # -- sampling and containment in the Klein model --------------------

    def klein_vertex(self, v: int) -> np.ndarray:
        return np.array(to_klein(self.vertices[v]))

    def edge_klein_samples(self, e: Edge, n: int = 64) -> np.ndarray:
        """Points along the edge in Klein coordinates, endpoints included."""
        a = self.klein_vertex(e.i)
        b = self.klein_vertex(e.j)
        if e.kind == EdgeKind.D:
            t0 = angle_of_ideal(self.vertices[e.i])
            t1 = angle_of_ideal(self.vertices[e.j])
            span = (t1 - t0) % (2 * math.pi)
            ts = t0 + span * np.linspace(0.0, 1.0, n)
            return np.column_stack([np.cos(ts), np.sin(ts)])
        if e.arc is None:
            s = np.linspace(0.0, 1.0, n)[:, None]
            return a[None, :] * (1 - s) + b[None, :] * s
        z = np.asarray(e.arc, dtype=complex)
        w = halfplane_to_disk(z)
        k = 2 * w / (1 + np.abs(w) ** 2)
        inner = np.column_stack([k.real, k.imag])
        return np.vstack([a, inner, b])

    def boundary_rings(self, n: int = 64) -> List[np.ndarray]:
        rings = []
        for comp in self.components:
            pts = [self.edge_klein_samples(e, n)[:-1] for e in comp]
            rings.append(np.vstack(pts))
        return rings

    def klein_polygon(self) -> Polygon:
        if self._klein_polygon is None:
            rings = self.boundary_rings()
            areas = [abs(_signed_area(r)) for r in rings]
            outer = int(np.argmax(areas))
            holes = [r for k, r in enumerate(rings) if k != outer]
            self._klein_polygon = shapely.make_valid(Polygon(rings[outer], holes))
        return self._klein_polygon

    def contains_klein(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return shapely.contains_xy(self.klein_polygon(), pts[:, 0], pts[:, 1])

    def contains(self, p: HPoint) -> bool:
        return bool(self.contains_klein(np.array([to_klein(p)]))[0])


def _signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _map_horocycle(m: Mobius, h: Horocycle) -> Horocycle:
    """Image of a horocycle under a Moebius map, via one of its points."""
    c = m.apply(h.center)
    if h.center.is_infinite:
        q = complex(0.0, h.size)
    else:
        q = complex(h.center.x, h.size)  # top point of the tangent circle
    w = m.apply_complex(q)
    if c.is_infinite:
        return Horocycle(c, w.imag)
    return Horocycle(c, abs(w - c.x) ** 2 / w.imag)


def horocycle_from_disk(angle: float, diameter: float) -> Horocycle:
    """Half-plane horocycle whose disk picture at exp(i angle) has the given diameter."""
    from .geometry import disk_to_halfplane, ideal_from_angle
    center = ideal_from_angle(angle)
    w = complex(disk_to_halfplane((1.0 - diameter) * complex(math.cos(angle), math.sin(angle))))
    if center.is_infinite:
        return Horocycle(center, w.imag)
    return Horocycle(center, abs(w - center.x) ** 2 / w.imag)


# ---------------------------------------------------------------------------
# structural validation


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def to_dict(self):
        return {"code": self.code, "message": self.message}


def _edge_direction(d: ScherkDomain, e: Edge, at_start: bool) -> complex:
    """Unit Euclidean direction of travel along e at one of its ends (half-plane)."""
    p = d.vertices[e.i] if at_start else d.vertices[e.j]
    if e.arc is not None:
        nxt = e.arc[0] if at_start else e.arc[-1]
        v = (nxt - p.z) if at_start else (p.z - nxt)
        return v / abs(v)
    q = d.vertices[e.j] if at_start else d.vertices[e.i]
    g = geodesic_between(p, q)
    t = g.unit_tangent(p)  # points from p towards q
    return t if at_start else -t


def interior_angle(d: ScherkDomain, incoming: Edge, outgoing: Edge) -> float:
    """Interior angle at the vertex shared by two consecutive edges (0 at ideal vertices)."""
    v = d.vertices[outgoing.i]
    if is_ideal(v):
        return 0.0
    din = _edge_direction(d, incoming, at_start=False)
    dout = _edge_direction(d, outgoing, at_start=True)
    turn = math.atan2((dout / din).imag, (dout / din).real)
    return math.pi - turn


def _runs_connected(d: ScherkDomain, kind: EdgeKind) -> bool:
    """Whether the union of the closed edges of one kind is connected."""
    marked = [(c, k) for c, comp in enumerate(d.components)
              for k, e in enumerate(comp) if e.kind == kind]
    if len(marked) <= 1:
        return True
    comps = {c for c, _ in marked}
    if len(comps) > 1:
        return False
    c = marked[0][0]
    comp = d.components[c]
    n = len(comp)
    flags = [e.kind == kind for e in comp]
    if all(flags):
        # a full cycle is connected unless an ideal vertex breaks it
        return not any(is_ideal(d.vertices[e.i]) for e in comp)
    # count maximal runs, where consecutive edges must share a finite vertex
    runs = 0
    for k in range(n):
        if flags[k]:
            prev = (k - 1) % n
            joined = flags[prev] and not is_ideal(d.vertices[comp[k].i])
            if not joined:
                runs += 1
    return runs == 1


def validate_domain(d: ScherkDomain) -> List[Diagnostic]:
    """All violated structural conditions, as a list of diagnostics."""
    out = []
    for c, comp in enumerate(d.components):
        n = len(comp)
        for k in range(n):
            e, f = comp[k], comp[(k + 1) % n]
            if e.j != f.i:
                out.append(Diagnostic("cycle", "component %d: edge %d does not end where edge %d starts"
                                      % (c, k, (k + 1) % n)))
    if out:
        return out
    # corner rule
    for c, comp in enumerate(d.components):
        n = len(comp)
        for k in range(n):
            e, f = comp[k], comp[(k + 1) % n]
            if e.kind == f.kind and e.kind in (EdgeKind.A, EdgeKind.B):
                ang = interior_angle(d, e, f)
                if ang < math.pi - 1e-9:
                    out.append(Diagnostic("corner", "two %s edges meet at a strictly convex corner "
                                          "(vertex %d, interior angle %.6g)" % (e.kind.value, f.i, ang)))
    # (C1): needed when there are no C (and no D) edges
    kinds = d.kinds()
    if EdgeKind.C not in kinds and EdgeKind.D not in kinds:
        for kind in (EdgeKind.A, EdgeKind.B):
            if _runs_connected(d, kind):
                out.append(Diagnostic("C1", "the union of the %s edges is connected" % kind.value))
    # ideal vertices need horocycles; D edges end at ideal vertices
    for v in d.ideal_vertices:
        if v not in d.horocycles:
            out.append(Diagnostic("horocycle", "ideal vertex %d has no horocycle" % v))
        elif not _same_ideal(d.horocycles[v].center, d.vertices[v]):
            out.append(Diagnostic("horocycle", "horocycle of vertex %d is not centred there" % v))
    for e in d.edges:
        if e.kind == EdgeKind.D and not (is_ideal(d.vertices[e.i]) and is_ideal(d.vertices[e.j])):
            out.append(Diagnostic("D-edge", "D edge %d-%d must join ideal vertices" % (e.i, e.j)))
        if e.kind == EdgeKind.C and e.arc is not None:
            bad = _convexity_defect(d, e)
            if bad is not None:
                out.append(Diagnostic("convexity", "C edge %d-%d is not convex towards the domain "
                                      "(turn %.3g)" % (e.i, e.j, bad)))
    out.extend(_horocycle_diagnostics(d))
    return out


def _same_ideal(a: IdealPoint, b: Point) -> bool:
    if not is_ideal(b):
        return False
    if a.is_infinite or b.is_infinite:
        return a.is_infinite and b.is_infinite
    return abs(a.x - b.x) <= 1e-12 * max(1.0, abs(a.x))


def _convexity_defect(d: ScherkDomain, e: Edge, tol: float = 1e-8):
    pts = d.edge_klein_samples(e)
    v1 = pts[1:-1] - pts[:-2]
    v2 = pts[2:] - pts[1:-1]
    n1 = np.linalg.norm(v1, axis=1)
    n2 = np.linalg.norm(v2, axis=1)
    cross = (v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]) / np.maximum(n1 * n2, 1e-300)
    worst = float(cross.min()) if len(cross) else 0.0
    return worst if worst < -tol else None


def _horocycle_diagnostics(d: ScherkDomain) -> List[Diagnostic]:
    out = []
    items = sorted(d.horocycles.items())
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            (va, ha), (vb, hb) = items[a], items[b]
            if _horodisks_overlap(ha, hb):
                out.append(Diagnostic("horocycle", "horodisks at vertices %d and %d overlap" % (va, vb)))
    for e in d.edges:
        if e.kind == EdgeKind.D:
            continue
        g_ends_ideal = [v for v in (e.i, e.j) if is_ideal(d.vertices[v])]
        pts = _edge_interior_points(d, e)
        for v, h in items:
            if v in g_ends_ideal and e.is_geodesic:
                continue
            if e.kind == EdgeKind.C and v in g_ends_ideal:
                continue
            if len(pts) and np.any(h.contains_array(pts)):
                out.append(Diagnostic("horocycle", "horodisk at vertex %d meets edge %d-%d"
                                      % (v, e.i, e.j)))
    return out


def _edge_interior_points(d: ScherkDomain, e: Edge) -> np.ndarray:
    if e.arc is not None:
        return np.asarray(e.arc, dtype=complex)
    g = d.geodesic(e)
    s0, s1 = g.coord(d.vertices[e.i]), g.coord(d.vertices[e.j])
    s0 = max(min(s0, 50.0), -50.0)
    s1 = max(min(s1, 50.0), -50.0)
    return g.points_at(np.linspace(s0, s1, 66)[1:-1])


def _horodisks_overlap(h1: Horocycle, h2: Horocycle) -> bool:
    if h1.center.is_infinite and h2.center.is_infinite:
        return True
    if h2.center.is_infinite:
        h1, h2 = h2, h1
    if h1.center.is_infinite:
        return h2.size > h1.size
    c1, r1 = h1.euclidean_circle()
    c2, r2 = h2.euclidean_circle()
    return abs(c1 - c2) < r1 + r2


# ---------------------------------------------------------------------------
# inscribed polygons


@dataclass
class InscribedPolygon:
    """Geodesic polygon with vertices among the domain vertices.

    ``sides[k]`` is the kind of the side from vertices[k] to vertices[k+1]:
    'A' or 'B' for original infinite-data edges, 'C' for a geodesic C edge of
    the boundary and 'chord' for an interior geodesic.
    """

    vertices: Tuple[int, ...]
    sides: Tuple[str, ...]
    is_domain: bool = False

    def side_pairs(self):
        n = len(self.vertices)
        return [(self.vertices[k], self.vertices[(k + 1) % n], self.sides[k]) for k in range(n)]

    def to_dict(self):
        return {"vertices": list(self.vertices), "sides": list(self.sides),
                "is_domain": self.is_domain}


def _segments_cross(p1, p2, q1, q2, eps=1e-12) -> bool:
    """Proper crossing of two Klein segments (shared endpoints do not count)."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
           ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps))


def _side_graph(d: ScherkDomain, n_samples: int):
    nv = len(d.vertices)
    kinds = {}
    for e in d.edges:
        if e.is_geodesic:
            kinds[frozenset((e.i, e.j))] = e.kind.value
    klein = np.array([d.klein_vertex(v) for v in range(nv)])
    adj = {v: [] for v in range(nv)}
    side_kind = {}
    s = (np.arange(n_samples) + 0.5) / n_samples
    for a in range(nv):
        for b in range(a + 1, nv):
            key = frozenset((a, b))
            if key in kinds:
                kind = kinds[key]
            else:
                pts = klein[a][None, :] * (1 - s[:, None]) + klein[b][None, :] * s[:, None]
                if not np.all(d.contains_klein(pts)):
                    continue
                kind = "chord"
            adj[a].append(b)
            adj[b].append(a)
            side_kind[key] = kind
    return klein, adj, side_kind


def enumerate_inscribed_polygons(d: ScherkDomain, max_vertices: Optional[int] = None,
                                 n_samples: int = CHORD_SAMPLES,
                                 max_candidates: int = MAX_CANDIDATES) -> List[InscribedPolygon]:
    """All simple geodesic polygons inscribed in the domain.

    Sides are boundary geodesic edges or chords whose ``n_samples`` interior
    sample points lie inside the domain.  Polygons that would contain a
    boundary point of the domain (for instance a hole) are rejected.
    """
    nv = len(d.vertices)
    if nv > MAX_VERTICES:
        raise CombinatorialLimitError("%d vertices exceed the limit of %d" % (nv, MAX_VERTICES))
    max_vertices = nv if max_vertices is None else min(max_vertices, nv)
    klein, adj, side_kind = _side_graph(d, n_samples)
    rings = d.boundary_rings()
    boundary_pts = np.vstack(rings)
    domain_sides = {frozenset((e.i, e.j)) for e in d.edges} if d.is_polygonal() else None

    found = []
    steps = 0

    def crosses_path(path, a, b):
        for k in range(len(path) - 1):
            u, v = path[k], path[k + 1]
            if len({u, v, a, b}) < 4:
                continue
            if _segments_cross(klein[u], klein[v], klein[a], klein[b]):
                return True
        return False

    def accept(path):
        nonlocal steps
        steps += 1
        if steps > MAX_CLOSED_CYCLES:
            raise CombinatorialLimitError("more than %d closed cycles examined" % MAX_CLOSED_CYCLES)
        ring = klein[list(path)]
        if abs(_signed_area(ring)) < 1e-14:
            return
        poly = Polygon(ring)
        if not poly.is_valid:
            return
        inner = poly.buffer(-1e-9)
        mask = np.ones(len(boundary_pts), dtype=bool)
        if not inner.is_empty and np.any(shapely.contains_xy(inner, boundary_pts[:, 0],
                                                             boundary_pts[:, 1])):
            return
        # orient counter-clockwise in the Klein picture
        if _signed_area(ring) < 0:
            path = (path[0],) + tuple(reversed(path[1:]))
        n = len(path)
        sides = tuple(side_kind[frozenset((path[k], path[(k + 1) % n]))] for k in range(n))
        is_dom = domain_sides is not None and \
            {frozenset((path[k], path[(k + 1) % n])) for k in range(n)} == domain_sides
        found.append(InscribedPolygon(tuple(path), sides, is_dom))
        if len(found) > max_candidates:
            raise CombinatorialLimitError("more than %d inscribed polygons" % max_candidates)

    def dfs(start, path, used):
        last = path[-1]
        for nxt in sorted(adj[last]):
            if nxt == start and len(path) >= 3 and path[1] < path[-1]:
                if not crosses_path(path[1:], last, start):
                    accept(tuple(path))
            if nxt <= start or nxt in used or len(path) >= max_vertices:
                continue
            if crosses_path(path, last, nxt):
                continue
            used.add(nxt)
            path.append(nxt)
            dfs(start, path, used)
            path.pop()
            used.discard(nxt)

    for start in range(nv):
        dfs(start, [start], {start})
    found.sort(key=lambda p: (len(p.vertices), p.vertices))
    return found


def canonical_polygon_key(d: ScherkDomain, p: InscribedPolygon, digits: int = 9):
    """Index-free description of a polygon, for comparisons across relabelings."""
    pts = [tuple(np.round(d.klein_vertex(v), digits)) for v in p.vertices]
    sides = list(p.sides)
    n = len(pts)
    k = min(range(n), key=lambda i: pts[i])
    pts = pts[k:] + pts[:k]
    sides = sides[k:] + sides[:k]
    return tuple(zip(pts, sides))


# ---------------------------------------------------------------------------
# truncated lengths


@dataclass
class TruncationRow:
    generation: int
    alpha: float
    beta: float
    gamma: float
    epsilon: float
    flagged: bool = False
    note: str = ""

    def to_dict(self):
        return {"n": self.generation, "alpha": self.alpha, "beta": self.beta,
                "gamma": self.gamma, "epsilon": self.epsilon, "flagged": self.flagged,
                "note": self.note}


def compute_truncated_lengths(d: ScherkDomain, p: InscribedPolygon, n: int = 1) -> TruncationRow:
    """alpha_n, beta_n, gamma_n and epsilon_n of one polygon at horocycle generation n."""
    alpha = beta = gamma = 0.0
    crossings = {}
    try:
        for a, b, kind in p.side_pairs():
            va, vb = d.vertices[a], d.vertices[b]
            g = geodesic_between(va, vb)
            ha = d.horocycle(a, n) if is_ideal(va) else None
            hb = d.horocycle(b, n) if is_ideal(vb) else None
            length = truncated_side_length(g, ha, hb)
            if ha is not None:
                crossings.setdefault(a, []).append(horocycle_geodesic_intersection(ha, g))
            if hb is not None:
                crossings.setdefault(b, []).append(horocycle_geodesic_intersection(hb, g))
            gamma += length
            if kind == "A":
                alpha += length
            elif kind == "B":
                beta += length
    except EmptySegmentError as exc:
        return TruncationRow(n, math.nan, math.nan, math.nan, math.nan, True, str(exc))
    eps = 0.0
    for v, pts in crossings.items():
        if len(pts) == 2:
            eps += hyperbolic_distance(pts[0], pts[1])
    return TruncationRow(n, alpha, beta, gamma, eps)


# ---------------------------------------------------------------------------
# verdicts


SATISFIED = "SATISFIED"
VIOLATED = "VIOLATED"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class PolygonCheck:
    polygon: InscribedPolygon
    rows: List[TruncationRow]
    margin_alpha: float
    margin_beta: float
    slope_alpha: float
    slope_beta: float
    equality_gap: Optional[float]
    status: str
    generation_needed: int = 1

    def to_dict(self):
        return {"polygon": self.polygon.to_dict(),
                "rows": [r.to_dict() for r in self.rows],
                "margin_alpha": self.margin_alpha, "margin_beta": self.margin_beta,
                "slope_alpha": self.slope_alpha, "slope_beta": self.slope_beta,
                "equality_gap": self.equality_gap, "status": self.status,
                "generation_needed": self.generation_needed}


@dataclass
class Verdict:
    status: str
    theorem: int
    witness: Optional[InscribedPolygon] = None
    margin: Optional[float] = None
    checks: List[PolygonCheck] = field(default_factory=list)
    diagnostics: List[Diagnostic] = field(default_factory=list)
    generation: int = 1

    @property
    def min_margin(self) -> float:
        vals = [min(c.margin_alpha, c.margin_beta) for c in self.checks
                if not (c.equality_gap is not None and c.polygon.is_domain and self.theorem in (1, 3)
                        and math.isinf(c.margin_alpha))]
        return min(vals) if vals else math.nan

    def to_dict(self):
        return {"status": self.status, "theorem": self.theorem,
                "witness": None if self.witness is None else self.witness.to_dict(),
                "margin": self.margin, "generation": self.generation,
                "diagnostics": [x.to_dict() for x in self.diagnostics],
                "polygons": [c.to_dict() for c in self.checks]}


def applicable_theorem(d: ScherkDomain) -> int:
    kinds = d.kinds()
    if not d.ideal_vertices:
        if EdgeKind.D in kinds:
            raise MisconfigurationError("D edges need ideal vertices")
        return 1
    if EdgeKind.C in kinds or EdgeKind.D in kinds:
        return 2
    return 3


def _strict_status(m1: float, slope: float, tol: float):
    """(status, generation) for a margin that must become positive."""
    if m1 > tol:
        return SATISFIED, 1
    if slope > tol:
        gens = 1 + int(math.ceil((2 * tol - m1) / slope))
        return SATISFIED, gens
    if m1 < -tol:
        return VIOLATED, 1
    return INCONCLUSIVE, 1


def _check(d: ScherkDomain, theorem: int, tol: float, polygons=None) -> Verdict:
    diags = validate_domain(d)
    if polygons is None:
        polygons = enumerate_inscribed_polygons(d)
    needs_equality = (theorem == 3) or (theorem == 1 and EdgeKind.C not in d.kinds())
    checks = []
    for p in polygons:
        rows = [compute_truncated_lengths(d, p, n) for n in (1, 2, 3)]
        if any(r.flagged for r in rows):
            checks.append(PolygonCheck(p, rows, math.nan, math.nan, math.nan, math.nan, None,
                                       INCONCLUSIVE))
            continue
        r1, r2, r3 = rows
        ma = r1.gamma - 2 * r1.alpha
        mb = r1.gamma - 2 * r1.beta
        sa = (r3.gamma - 2 * r3.alpha) - (r2.gamma - 2 * r2.alpha)
        sb = (r3.gamma - 2 * r3.beta) - (r2.gamma - 2 * r2.beta)
        if needs_equality and p.is_domain:
            gap = r1.alpha - r1.beta
            status = SATISFIED if abs(gap) <= tol else VIOLATED
            checks.append(PolygonCheck(p, rows, ma, mb, sa, sb, gap, status))
            continue
        st_a, ga = _strict_status(ma, sa, tol)
        st_b, gb = _strict_status(mb, sb, tol)
        order = {VIOLATED: 0, INCONCLUSIVE: 1, SATISFIED: 2}
        status = min((st_a, st_b), key=lambda s: order[s])
        checks.append(PolygonCheck(p, rows, ma, mb, sa, sb, None, status, max(ga, gb)))
    verdict = Verdict(SATISFIED, theorem, checks=checks, diagnostics=diags)
    violated = [c for c in checks if c.status == VIOLATED]
    if violated:
        def badness(c):
            if c.equality_gap is not None:
                return -abs(c.equality_gap)
            return min(c.margin_alpha, c.margin_beta)
        worst = min(violated, key=badness)
        verdict.status = VIOLATED
        verdict.witness = worst.polygon
        verdict.margin = badness(worst)
    elif any(c.status == INCONCLUSIVE for c in checks):
        verdict.status = INCONCLUSIVE
        verdict.margin = min((min(c.margin_alpha, c.margin_beta) for c in checks
                              if c.status == INCONCLUSIVE), default=math.nan)
    else:
        verdict.generation = max((c.generation_needed for c in checks), default=1)
        strict = [min(c.margin_alpha, c.margin_beta) for c in checks if c.equality_gap is None]
        verdict.margin = min(strict) if strict else None
    return verdict


def check_theorem1(d: ScherkDomain, tol: float = TOL_STRICT, polygons=None) -> Verdict:
    if applicable_theorem(d) != 1:
        raise MisconfigurationError("the first check applies to domains without ideal vertices")
    return _check(d, 1, tol, polygons)


def check_theorem2(d: ScherkDomain, tol: float = TOL_STRICT, polygons=None) -> Verdict:
    if applicable_theorem(d) != 2:
        raise MisconfigurationError("the second check needs ideal vertices and some C or D edge")
    return _check(d, 2, tol, polygons)


def check_theorem3(d: ScherkDomain, tol: float = TOL_STRICT, polygons=None) -> Verdict:
    if applicable_theorem(d) != 3:
        raise MisconfigurationError("the third check needs ideal vertices and only A/B edges")
    return _check(d, 3, tol, polygons)


def check_domain(d: ScherkDomain, tol: float = TOL_STRICT) -> Verdict:
    """Dispatch to the applicable check."""
    theorem = applicable_theorem(d)
    return {1: check_theorem1, 2: check_theorem2, 3: check_theorem3}[theorem](d, tol)
