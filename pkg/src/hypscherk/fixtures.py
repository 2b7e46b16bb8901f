"""Ready-made domains used by the tests, the acceptance run and the CLI."""

import math

from .domain import Edge, EdgeKind, ScherkDomain, horocycle_from_disk
from .geometry import HPoint, ideal_from_angle


def ideal_polygon(angles_deg, kinds, diameter=0.2, diameters=None, data=None, name=""):
    """Ideal polygon with vertices exp(i angle) in the disk, listed counter-clockwise.

    Edge k joins vertex k to vertex k+1.  Each ideal vertex gets a horocycle
    whose disk picture has the given Euclidean diameter.
    """
    verts, hors = [], {}
    for k, a in enumerate(angles_deg):
        t = math.radians(a)
        verts.append(ideal_from_angle(t))
        d = diameters[k] if diameters is not None else diameter
        hors[k] = horocycle_from_disk(t, d)
    n = len(verts)
    data = data or {}
    edges = [Edge(EdgeKind(kinds[k]), k, (k + 1) % n, data=data.get(k)) for k in range(n)]
    return ScherkDomain(verts, [edges], hors, name)


def ideal_square(diameter=0.2):
    """Ideal square with alternating A and B sides and equal horocycles."""
    return ideal_polygon([0, 90, 180, 270], "ABAB", diameter, name="ideal-square")


def compact_polygon(points, kinds, data=None, name=""):
    """Compact geodesic polygon from half-plane points listed counter-clockwise."""
    verts = [HPoint(*p) for p in points]
    n = len(verts)
    data = data or {}
    edges = [Edge(EdgeKind(kinds[k]), k, (k + 1) % n, data=data.get(k)) for k in range(n)]
    return ScherkDomain(verts, [edges], {}, name)


def satisfying_triangle():
    """Triangle with one A side and two C sides; the A side is the shortest."""
    return compact_polygon([(0.0, 1.0), (1.0, 1.5), (-0.2, 2.0)], "ACC",
                           name="satisfying-triangle")


def violating_quadrilateral():
    """Geodesic quadrilateral A, C, A, C whose A sides are too long."""
    return compact_polygon([(0.5, 1.0), (0.5, 4.0), (-0.5, 4.0), (-0.5, 1.0)], "ACAC",
                           name="violating-quadrilateral")


def pentagon_with_bad_subpolygon():
    """Pentagon satisfying the inequality for itself but not for an inscribed quadrilateral."""
    return compact_polygon([(0.5, 1.0), (0.5, 4.0), (-0.5, 4.0), (-0.5, 1.0), (0.0, 0.2)],
                           "ACACC", name="pentagon")


def parallelogram_ab():
    """Compact A, B, A, B quadrilateral with equal A and B length (symmetric rhombus)."""
    # the square centred at i with vertices on a circle of hyperbolic radius r
    from .geometry import disk_to_halfplane
    r = 0.5
    pts = [complex(disk_to_halfplane(r * complex(math.cos(t), math.sin(t))))
           for t in (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)]
    return compact_polygon([(z.real, z.imag) for z in pts], "ABAB", name="rhombus")


def octagon_annulus(a_arc_deg=45.0, hole_radius=0.25, diameter=0.2, hole_sides=4):
    """Ideal octagon with alternating A and B edges around a small geodesic hole.

    The outer vertices sit at the eighth roots of unity when ``a_arc_deg``
    is 45; otherwise every A edge spans ``a_arc_deg`` degrees of the ideal
    boundary and every B edge the rest of 90.  The hole is a regular
    geodesic polygon with C edges carrying 0, traversed clockwise.
    """
    from .geometry import from_disk
    angles = []
    t = 0.0
    for k in range(4):
        angles += [t, t + a_arc_deg]
        t += 90.0
    outer = ideal_polygon(angles, "AB" * 4, diameter)
    verts = list(outer.vertices)
    hors = dict(outer.horocycles)
    ring = list(outer.components[0])
    base = len(verts)
    for k in range(hole_sides):
        ang = 2 * math.pi * k / hole_sides
        verts.append(from_disk(hole_radius * complex(math.cos(ang), math.sin(ang))))
    order = [base + (-k) % hole_sides for k in range(hole_sides + 1)]  # clockwise
    hole = [Edge(EdgeKind.C, order[k], order[k + 1]) for k in range(hole_sides)]
    name = "octagon-annulus-%g" % a_arc_deg
    return ScherkDomain(verts, [ring, hole], hors, name)
