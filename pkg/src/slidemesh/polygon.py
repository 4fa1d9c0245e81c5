"""Convex polygon clipping, fan triangulation and triangle quadrature.

This is the kernel for cutting two planar boundary faces against each other
(the situation of a 2D interface between 3D subdomains).  The 2D solver does
not use it; its interface cuts are intervals, see :mod:`slidemesh.cut`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

TOL = 1e-12


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_area(vertices):
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass
class ConvexPolygon:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        v = _dedupe(v)
        if len(v) >= 3 and polygon_area(v) < 0.0:
            v = v[::-1].copy()
        self.vertices = v
        scale = max(1.0, float(np.abs(v).max())) if len(v) else 1.0
        n = len(v)
        for k in range(n if n >= 3 else 0):
            if _cross(v[k], v[(k + 1) % n], v[(k + 2) % n]) < -TOL * scale * scale:
                raise GeometryError("polygon is not convex")

    @property
    def area(self):
        return polygon_area(self.vertices)

    def contains(self, points, tol=0.0):
        """Vectorized point-in-polygon test (boundary counts as inside)."""
        p = np.asarray(points, dtype=float)
        inside = np.ones(p.shape[:-1], dtype=bool)
        v = self.vertices
        for k in range(len(v)):
            a, b = v[k], v[(k + 1) % len(v)]
            c = (b[0] - a[0]) * (p[..., 1] - a[1]) - (b[1] - a[1]) * (p[..., 0] - a[0])
            inside &= c >= -tol
        return inside


def _dedupe(v, tol=TOL):
    if len(v) == 0:
        return v
    keep = [v[0]]
    for p in v[1:]:
        if np.linalg.norm(p - keep[-1]) > tol:
            keep.append(p)
    if len(keep) > 1 and np.linalg.norm(keep[0] - keep[-1]) <= tol:
        keep.pop()
    return np.array(keep)


def _drop_collinear(v, tol):
    out = list(v)
    changed = True
    while changed and len(out) >= 3:
        changed = False
        for k in range(len(out)):
            a, b, c = out[k - 1], out[k], out[(k + 1) % len(out)]
            if abs(_cross(a, b, c)) <= tol:
                out.pop(k)
                changed = True
                break
    return np.array(out).reshape(-1, 2)


def clip_halfplane(vertices, a, b):
    """Keep the part of a polygon left of the directed line a->b."""
    out = []
    n = len(vertices)
    for k in range(n):
        p, q = vertices[k], vertices[(k + 1) % n]
        cp, cq = _cross(a, b, p), _cross(a, b, q)
        if cp >= 0.0:
            out.append(p)
        if (cp > 0.0 and cq < 0.0) or (cp < 0.0 and cq > 0.0):
            s = cp / (cp - cq)
            out.append(p + s * (q - p))
    return np.array(out).reshape(-1, 2)


def intersect_convex_polygons(p: ConvexPolygon, q: ConvexPolygon, tol=TOL):
    """Intersection by successive half-plane clipping; ``None`` if (nearly) empty."""
    v = p.vertices.copy()
    w = q.vertices
    for k in range(len(w)):
        if len(v) == 0:
            break
        v = clip_halfplane(v, w[k], w[(k + 1) % len(w)])
    v = _dedupe(v)
    scale = max(abs(p.area), abs(q.area), 1e-300)
    if len(v) < 3 or polygon_area(v) <= tol * scale:
        return None
    return ConvexPolygon(_drop_collinear(v, tol * scale))


def triangulate_convex(poly: ConvexPolygon):
    """Fan triangulation from vertex 0, (n-2, 3, 2) array."""
    v = poly.vertices
    if len(v) < 3:
        raise GeometryError(f"cannot triangulate a polygon with {len(v)} vertices")
    return np.array([[v[0], v[k], v[k + 1]] for k in range(1, len(v) - 1)])


def triangle_rule(n):
    """Collapsed Gauss rule on the unit triangle, exact up to degree 2n-2.

    Returns barycentric-free reference points (P, 2) on the triangle
    (0,0), (1,0), (0,1) and weights summing to 1/2.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([(u * (1.0 - v)).ravel(), v.ravel()])
    return pts, ((1.0 - v) * wu * wv).ravel()


def polygon_quadrature(poly: ConvexPolygon, n=3):
    """Physical points and weights integrating over a convex polygon."""
    ref, rw = triangle_rule(n)
    pts, wts = [], []
    for a, b, c in triangulate_convex(poly):
        jac = np.column_stack([b - a, c - a])
        det = abs(np.linalg.det(jac))
        pts.append(a + ref @ jac.T)
        wts.append(rw * det)
    return np.concatenate(pts), np.concatenate(wts)


def nested_polygon_quadrature(element: ConvexPolygon, cutters, n=3):
    """Signed rule over ``element`` minus the union of disjoint cut pieces.

    Positive weights on the full element, negated weights on every
    ``element ∩ cutter`` piece.
    """
    pts, wts = polygon_quadrature(element, n)
    pts, wts = [pts], [wts]
    for c in cutters:
        cut = intersect_convex_polygons(element, c)
        if cut is None:
            continue
        cp, cw = polygon_quadrature(cut, n)
        pts.append(cp)
        wts.append(-cw)
    return np.concatenate(pts), np.concatenate(wts)
