"""Domain files (JSON, schema 1), reports and CSV output.

A domain file looks like::

    {
      "schema": 1,
      "name": "triangle",
      "model": "half-plane",
      "vertices": [{"x": 0, "y": 1}, {"ideal": 0.5}, {"ideal": "inf"}],
      "components": [[{"kind": "A", "from": 0, "to": 1}, ...]],
      "horocycles": [{"vertex": 1, "size": 0.2}],
      "solver": {"h": 0.03125, "levels": [2, 4, 8]},
      "flux": {"arcs": [{"label": "cut", "points": [[0, 1], [0, 2]]}]},
      "experiments": {"nonzero-flux": {...}}
    }

In the disk model finite vertices are {"x", "y"} with x^2 + y^2 < 1, ideal
vertices are {"angle": t} in radians and horocycles give the Euclidean
"diameter" of their disk picture.  In the half-plane model ideal vertices
are {"ideal": x} (or "inf") and horocycle "size" is the diameter of the
tangent circle, or the height of the line at infinity.  A single-component
domain may use "edges" instead of "components".  Arc samples ("arc") of C
edges are given in the file's model.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from json.decoder import JSONArray, JSONObject
from json.scanner import py_make_scanner
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .domain import Edge, EdgeKind, ScherkDomain, horocycle_from_disk
from .errors import DomainError, SchemaError
from .geometry import (HPoint, Horocycle, IdealPoint, angle_of_ideal, disk_to_halfplane,
                       halfplane_to_disk, ideal_from_angle, is_ideal)

SCHEMA_VERSION = 1
TOOL = "hypscherk"
MODELS = ("half-plane", "disk")
KNOWN_KEYS = {"schema", "name", "model", "vertices", "components", "edges", "horocycles",
              "solver", "flux", "experiments"}
SOLVER_KEYS = {"h", "levels", "generations", "generation", "level", "tol", "max_iter",
               "chart", "standoff", "probes"}


# ---------------------------------------------------------------------------
# JSON with line numbers


class _LDict(dict):
    line = 0


class _LList(list):
    line = 0


def _line_of(s: str, pos: int) -> int:
    return s.count("\n", 0, pos) + 1


def loads_with_lines(text: str):
    """json.loads, but objects and arrays remember the line they start on."""
    dec = json.JSONDecoder()

    def parse_object(s_and_end, *args):
        s, end = s_and_end
        obj, stop = JSONObject(s_and_end, *args)
        out = _LDict(obj)
        out.line = _line_of(s, end - 1)
        return out, stop

    def parse_array(s_and_end, scan_once):
        s, end = s_and_end
        arr, stop = JSONArray(s_and_end, scan_once)
        out = _LList(arr)
        out.line = _line_of(s, end - 1)
        return out, stop

    dec.parse_object = parse_object
    dec.parse_array = parse_array
    dec.scan_once = py_make_scanner(dec)
    try:
        return dec.decode(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("line %d column %d: %s" % (exc.lineno, exc.colno, exc.msg))


def _where(node, path: str) -> str:
    line = getattr(node, "line", 0)
    return ("line %d (%s)" % (line, path)) if line else path


# ---------------------------------------------------------------------------
# parsing


@dataclass
class DomainFile:
    """A parsed domain file: the domain plus the non-geometric blocks."""

    domain: ScherkDomain
    model: str
    solver: Dict[str, Any] = field(default_factory=dict)
    flux: Dict[str, Any] = field(default_factory=dict)
    experiments: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict)
    text_hash: str = ""


def _number(v, errors, where, allow_inf=False):
    if allow_inf and isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append("%s: expected a number, got %r" % (where, v))
        return None
    v = float(v)
    if not math.isfinite(v):
        errors.append("%s: number must be finite" % where)
        return None
    return v


def _parse_vertex(v, model, errors, where):
    if not isinstance(v, dict):
        errors.append("%s: vertex must be an object" % where)
        return None
    if model == "half-plane":
        if "ideal" in v:
            x = _number(v["ideal"], errors, where + ".ideal", allow_inf=True)
            if x is None:
                return None
            return IdealPoint.infinity() if math.isinf(x) else IdealPoint(x)
        x = _number(v.get("x"), errors, where + ".x")
        y = _number(v.get("y"), errors, where + ".y")
        if x is None or y is None:
            return None
        if y <= 0:
            errors.append("%s: finite vertices need y > 0" % where)
            return None
        return HPoint(x, y)
    if "angle" in v:
        t = _number(v["angle"], errors, where + ".angle")
        return None if t is None else ideal_from_angle(t)
    x = _number(v.get("x"), errors, where + ".x")
    y = _number(v.get("y"), errors, where + ".y")
    if x is None or y is None:
        return None
    if x * x + y * y >= 1.0:
        errors.append("%s: finite disk vertices need x^2 + y^2 < 1" % where)
        return None
    return HPoint.from_complex(complex(disk_to_halfplane(complex(x, y))))


def _parse_edge(e, model, nv, errors, where):
    if not isinstance(e, dict):
        errors.append("%s: edge must be an object" % where)
        return None
    kind = e.get("kind")
    if kind not in ("A", "B", "C", "D"):
        errors.append("%s: kind must be one of A, B, C, D" % where)
        return None
    ends = []
    for key in ("from", "to"):
        k = e.get(key)
        if isinstance(k, bool) or not isinstance(k, int):
            errors.append("%s.%s: expected a vertex index" % (where, key))
            return None
        if not 0 <= k < nv:
            errors.append("%s.%s: dangling vertex reference %d" % (where, key, k))
            return None
        ends.append(k)
    data = None
    if "data" in e:
        data = []
        raw = e["data"]
        if not isinstance(raw, list) or not raw:
            errors.append("%s.data: expected a list of [t, value] pairs" % where)
            return None
        for j, pair in enumerate(raw):
            if not isinstance(pair, list) or len(pair) != 2:
                errors.append("%s.data[%d]: expected [t, value]" % (where, j))
                return None
            t = _number(pair[0], errors, "%s.data[%d]" % (where, j))
            val = _number(pair[1], errors, "%s.data[%d]" % (where, j))
            if t is None or val is None:
                return None
            data.append((t, val))
        ts = [t for t, _ in data]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            errors.append("%s.data: samples must have strictly increasing t" % where)
            return None
        if ts[0] < 0 or ts[-1] > 1:
            errors.append("%s.data: t must lie in [0, 1]" % where)
            return None
    arc = None
    if "arc" in e:
        pts = e["arc"]
        if not isinstance(pts, list) or not pts:
            errors.append("%s.arc: expected a list of [x, y] points" % where)
            return None
        zs = []
        for j, p in enumerate(pts):
            if not isinstance(p, list) or len(p) != 2:
                errors.append("%s.arc[%d]: expected [x, y]" % (where, j))
                return None
            x = _number(p[0], errors, "%s.arc[%d]" % (where, j))
            y = _number(p[1], errors, "%s.arc[%d]" % (where, j))
            if x is None or y is None:
                return None
            zs.append(complex(x, y))
        zs = np.array(zs)
        arc = zs if model == "half-plane" else np.asarray(disk_to_halfplane(zs))
    try:
        return Edge(EdgeKind(kind), ends[0], ends[1], arc, data)
    except DomainError as exc:
        errors.append("%s: %s" % (where, exc))
        return None


def _parse_horocycle(hdef, model, verts, errors, where):
    if not isinstance(hdef, dict):
        errors.append("%s: horocycle must be an object" % where)
        return None
    k = hdef.get("vertex")
    if isinstance(k, bool) or not isinstance(k, int) or not 0 <= k < len(verts):
        errors.append("%s.vertex: dangling vertex reference %r" % (where, k))
        return None
    v = verts[k]
    if v is None:
        return None
    if not is_ideal(v):
        errors.append("%s: vertex %d is not ideal" % (where, k))
        return None
    key = "size" if model == "half-plane" else "diameter"
    s = _number(hdef.get(key), errors, "%s.%s" % (where, key))
    if s is None:
        return None
    if s <= 0 or (model == "disk" and s >= 1):
        errors.append("%s.%s: out of range" % (where, key))
        return None
    if model == "half-plane":
        return k, Horocycle(v, s)
    return k, horocycle_from_disk(angle_of_ideal(v), s)


def parse_domain_dict(doc, text_hash: str = "") -> DomainFile:
    """Validate a decoded domain file and build the domain; raises SchemaError."""
    errors: List[str] = []
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    if doc.get("schema") != SCHEMA_VERSION:
        errors.append("%s: unsupported schema %r (expected 1)"
                      % (_where(doc, "schema"), doc.get("schema")))
    for key in doc:
        if key not in KNOWN_KEYS:
            errors.append("%s: unknown key %r" % (_where(doc, key), key))
    model = doc.get("model", "half-plane")
    if model not in MODELS:
        errors.append("%s: model must be 'half-plane' or 'disk'" % _where(doc, "model"))
        raise SchemaError(errors)
    raw_verts = doc.get("vertices")
    if not isinstance(raw_verts, list) or not raw_verts:
        errors.append("%s: vertices must be a non-empty list" % _where(doc, "vertices"))
        raise SchemaError(errors)
    verts = [_parse_vertex(v, model, errors, _where(v, "vertices[%d]" % i))
             for i, v in enumerate(raw_verts)]
    if "components" in doc and "edges" in doc:
        errors.append("%s: give either 'components' or 'edges'" % _where(doc, "edges"))
    raw_comps = doc.get("components", [doc["edges"]] if "edges" in doc else None)
    if not isinstance(raw_comps, list) or not raw_comps:
        errors.append("%s: components must be a non-empty list" % _where(doc, "components"))
        raise SchemaError(errors)
    comps = []
    for c, comp in enumerate(raw_comps):
        if not isinstance(comp, list) or not comp:
            errors.append("%s: component must be a non-empty list of edges"
                          % _where(comp, "components[%d]" % c))
            continue
        edges = [_parse_edge(e, model, len(verts), errors,
                             _where(e, "components[%d][%d]" % (c, j)))
                 for j, e in enumerate(comp)]
        for j, (a, b) in enumerate(zip(edges, edges[1:] + edges[:1])):
            if a is not None and b is not None and a.j != b.i:
                errors.append("%s: consecutive edges do not share an endpoint"
                              % _where(comp[j], "components[%d][%d]" % (c, j)))
        comps.append(edges)
    hors = {}
    for i, hdef in enumerate(doc.get("horocycles", [])):
        r = _parse_horocycle(hdef, model, verts, errors, _where(hdef, "horocycles[%d]" % i))
        if r is not None:
            if r[0] in hors:
                errors.append("%s: second horocycle for vertex %d"
                              % (_where(hdef, "horocycles[%d]" % i), r[0]))
            hors[r[0]] = r[1]
    for k, v in enumerate(verts):
        if v is not None and is_ideal(v) and k not in hors:
            errors.append("%s: ideal vertex %d has no horocycle" % (_where(doc, "horocycles"), k))
    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        errors.append("%s: solver must be an object" % _where(doc, "solver"))
        solver = {}
    for key in solver:
        if key not in SOLVER_KEYS:
            errors.append("%s: unknown solver key %r" % (_where(solver, "solver"), key))
    if errors:
        raise SchemaError(errors)
    try:
        dom = ScherkDomain(verts, comps, hors, str(doc.get("name", "")))
    except DomainError as exc:
        raise SchemaError(str(exc))
    return DomainFile(dom, model, dict(solver), dict(doc.get("flux", {})),
                      dict(doc.get("experiments", {})), _plain(doc), text_hash)


def parse_domain_file(path) -> DomainFile:
    """Read, validate and convert a domain file (disk inputs become half-plane)."""
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError("file is not UTF-8: %s" % exc)
    return parse_domain_dict(loads_with_lines(text), hashlib.sha256(data).hexdigest())


def parse_domain_text(text: str) -> DomainFile:
    return parse_domain_dict(loads_with_lines(text),
                             hashlib.sha256(text.encode("utf-8")).hexdigest())


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# writing domains


def domain_to_dict(d: ScherkDomain, model: str = "half-plane", solver=None) -> dict:
    """Schema-1 record of a domain; parse_domain_dict inverts it."""
    if model not in MODELS:
        raise DomainError("unknown model %r" % model)
    verts = []
    for v in d.vertices:
        if model == "half-plane":
            if is_ideal(v):
                verts.append({"ideal": "inf" if v.is_infinite else v.x})
            else:
                verts.append({"x": v.x, "y": v.y})
        else:
            if is_ideal(v):
                verts.append({"angle": angle_of_ideal(v)})
            else:
                w = complex(halfplane_to_disk(v.z))
                verts.append({"x": w.real, "y": w.imag})
    comps = []
    for comp in d.components:
        edges = []
        for e in comp:
            rec = {"kind": e.kind.value, "from": e.i, "to": e.j}
            if e.data is not None:
                rec["data"] = [[t, val] for t, val in e.data]
            if e.arc is not None:
                zs = np.asarray(e.arc) if model == "half-plane" else halfplane_to_disk(np.asarray(e.arc))
                rec["arc"] = [[float(z.real), float(z.imag)] for z in np.atleast_1d(zs)]
            edges.append(rec)
        comps.append(edges)
    hors = []
    for k in sorted(d.horocycles):
        h = d.horocycles[k]
        if model == "half-plane":
            hors.append({"vertex": k, "size": h.size})
        else:
            hors.append({"vertex": k, "diameter": horocycle_disk_diameter(h)})
    out = {"schema": SCHEMA_VERSION, "name": d.name, "model": model, "vertices": verts,
           "components": comps}
    if hors:
        out["horocycles"] = hors
    if solver:
        out["solver"] = dict(solver)
    return out


def horocycle_disk_diameter(h: Horocycle) -> float:
    """Euclidean diameter of the disk picture of a half-plane horocycle."""
    if h.center.is_infinite:
        top = complex(0.0, h.size)
    else:
        top = complex(h.center.x, h.size)
    w = complex(halfplane_to_disk(top))
    t = angle_of_ideal(h.center)
    u = complex(math.cos(t), math.sin(t))
    # circle through w tangent to the unit circle at u has centre (1 - r) u;
    # |w - (1 - r) u| = r gives r = |w - u|^2 / (2 (1 - Re(w conj u)))
    r = abs(w - u) ** 2 / (2.0 * (1.0 - (w * u.conjugate()).real))
    return 2.0 * r


def write_domain_file(path, d: ScherkDomain, model: str = "half-plane", solver=None) -> None:
    Path(path).write_text(json.dumps(domain_to_dict(d, model, solver), indent=2) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------------------
# reports


def sanitize(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if hasattr(obj, "to_dict"):
        return sanitize(obj.to_dict())
    return obj


def canonical_json(obj) -> str:
    return json.dumps(sanitize(obj), sort_keys=True, indent=2, ensure_ascii=True,
                      allow_nan=False)


def build_report(subcommand: str, input_hash: str, payload, timings=None,
                 version: str = "0.1.0") -> dict:
    """Report record; the hash covers everything except the timing footer."""
    body = {"tool": TOOL, "version": version, "subcommand": subcommand,
            "input_hash": input_hash, "payload": sanitize(payload)}
    digest = hashlib.sha256(canonical_json(body).encode("ascii")).hexdigest()
    body["report_hash"] = digest
    body["footer"] = {"timings": sanitize(copy.deepcopy(timings or {}))}
    return body


def report_without_footer(report: dict) -> str:
    body = {k: v for k, v in report.items() if k != "footer"}
    return canonical_json(body)


def write_report(out_dir, report: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(canonical_json(report) + "\n", encoding="ascii", newline="\n")
    return path


def fmt17(v) -> str:
    """17 significant digits, round-trip exact for doubles."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def write_csv(path, header, rows) -> None:
    """CSV with '.' decimals, '\\n' line ends and 17 significant digits."""
    lines = [",".join(header)]
    for r in rows:
        cells = []
        for v in r:
            if isinstance(v, (bool, np.bool_)):
                cells.append("true" if v else "false")
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            elif isinstance(v, (float, np.floating)):
                cells.append(fmt17(v))
            elif v is None:
                cells.append("")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")
