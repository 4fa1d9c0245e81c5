"""Interface cuts between boundary facets of two subdomains.

Facets on a common interface are mapped to intervals of an interface
parameter (arclength along a line, angle on a circle).  Overlaps of those
intervals are the cuts; Gauss points on a cut are mapped back into the
reference coordinates of both parent elements.  Uncovered facet portions are
integrated with a signed rule: the full facet rule minus the rules of every
cut covering the facet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError
from .mesh import Mesh, edge_reference_points, gauss_rule

REL_TOL = 1e-10
GEOM_TOL = 1e-8


def intersect_intervals(a, b, tol=REL_TOL):
    """Overlap of closed intervals, or ``None`` for (near) zero-measure contact."""
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    scale = max(a[1] - a[0], b[1] - b[0])
    if hi - lo <= tol * scale:
        return None
    return lo, hi


def facet_boxes(endpoints, padding=0.0):
    lo = endpoints.min(axis=1) - padding
    hi = endpoints.max(axis=1) + padding
    return lo, hi


def detect_candidate_pairs(facets_a, facets_b, padding=0.0):
    """Pairs (i, j) whose padded bounding boxes overlap.

    ``facets_a`` and ``facets_b`` are (F, 2, 2) arrays of segment endpoints.
    Boxes that only touch along an axis with positive extent on both sides
    are not reported.
    """
    fa = np.asarray(facets_a, dtype=float)
    fb = np.asarray(facets_b, dtype=float)
    if len(fa) == 0 or len(fb) == 0:
        return []
    lo_a, hi_a = facet_boxes(fa, padding)
    lo_b, hi_b = facet_boxes(fb, padding)
    lo = np.maximum(lo_a[:, None], lo_b[None])
    hi = np.minimum(hi_a[:, None], hi_b[None])
    ext = np.minimum((hi_a - lo_a)[:, None], (hi_b - lo_b)[None])
    scale = max(float(np.abs(fa).max()), float(np.abs(fb).max()), 1.0)
    gap = hi - lo
    # degenerate (flat) boxes may touch; extended ones must overlap
    ok = np.where(ext > GEOM_TOL * scale, gap > REL_TOL * ext, gap >= -GEOM_TOL * scale)
    i, j = np.nonzero(ok.all(axis=2))
    return list(zip(i.tolist(), j.tolist()))


@dataclass(frozen=True)
class LineParameterization:
    origin: tuple
    direction: tuple

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", tuple(d / np.linalg.norm(d)))

    periodic = None

    def parameter(self, x):
        return (np.asarray(x) - self.origin) @ np.asarray(self.direction)

    def distance(self, x):
        d = np.asarray(self.direction)
        r = np.asarray(x) - self.origin
        return np.abs(r[..., 0] * d[1] - r[..., 1] * d[0])

    def facet_interval(self, p0, p1):
        return float(self.parameter(p0)), float(self.parameter(p1))


@dataclass(frozen=True)
class CircleParameterization:
    center: tuple
    radius: float

    periodic = 2.0 * np.pi

    def parameter(self, x):
        r = np.asarray(x) - self.center
        return np.arctan2(r[..., 1], r[..., 0])

    def distance(self, x):
        return np.abs(np.linalg.norm(np.asarray(x) - self.center, axis=-1) - self.radius)

    def facet_interval(self, p0, p1):
        s0 = float(self.parameter(p0))
        ds = float(self.parameter(p1)) - s0
        ds = (ds + np.pi) % (2.0 * np.pi) - np.pi
        return s0, s0 + ds


@dataclass
class CutRecord:
    """Overlap of facet ``facet_a`` (side a) and ``facet_b`` (side b).

    ``t_a``/``t_b`` are local edge parameters in [0, 1] of the quadrature
    points on each parent facet, ``xi_a``/``xi_b`` the corresponding element
    reference coordinates.  ``normal`` is the outward normal of side a.
    ``weights_a``/``weights_b`` are the same weights measured along each
    parent facet (identical for straight interfaces).
    """

    facet_a: int
    facet_b: int
    element_a: int
    element_b: int
    interval: tuple
    t_a: np.ndarray
    t_b: np.ndarray
    xi_a: np.ndarray
    xi_b: np.ndarray
    x: np.ndarray
    x_b: np.ndarray
    weights: np.ndarray
    weights_a: np.ndarray
    weights_b: np.ndarray
    normal: np.ndarray

    @property
    def measure(self):
        return float(self.weights.sum())


@dataclass
class SignedQuadrature:
    """Packed signed facet quadrature of one interface side."""

    facet: np.ndarray
    element: np.ndarray
    xi: np.ndarray
    x: np.ndarray
    weights: np.ndarray
    normal: np.ndarray

    def __len__(self):
        return len(self.weights)


@dataclass
class InterfaceSide:
    mesh: Mesh
    facets: np.ndarray
    tag: str | None = None


@dataclass
class SlidingInterface:
    side_a: InterfaceSide
    side_b: InterfaceSide
    parameterization: object
    order: int
    cuts: list = field(default_factory=list)

    def covered_measure(self, side="a"):
        """Covered length per facet of the given side (side-own measure)."""
        s = self.side_a if side == "a" else self.side_b
        out = np.zeros(len(s.facets))
        pos = {int(f): k for k, f in enumerate(s.facets)}
        for c in self.cuts:
            if side == "a":
                out[pos[c.facet_a]] += c.weights_a.sum()
            else:
                out[pos[c.facet_b]] += c.weights_b.sum()
        return out

    def facet_measure(self, side="a"):
        s = self.side_a if side == "a" else self.side_b
        return s.mesh.facet_normals(s.facets)[1]

    def packed(self):
        """All cut quadrature points as flat arrays (for vectorized assembly)."""
        if not self.cuts:
            z = np.zeros((0,), dtype=np.int64)
            return dict(element_a=z, element_b=z, xi_a=np.zeros((0, 2)),
                        xi_b=np.zeros((0, 2)), x=np.zeros((0, 2)), weights=np.zeros(0),
                        normal=np.zeros((0, 2)))
        cat = np.concatenate
        return dict(
            element_a=cat([np.full(len(c.weights), c.element_a) for c in self.cuts]),
            element_b=cat([np.full(len(c.weights), c.element_b) for c in self.cuts]),
            xi_a=cat([c.xi_a for c in self.cuts]),
            xi_b=cat([c.xi_b for c in self.cuts]),
            x=cat([c.x for c in self.cuts]),
            weights=cat([c.weights for c in self.cuts]),
            normal=cat([np.broadcast_to(c.normal, (len(c.weights), 2)) for c in self.cuts]),
        )

    def swapped(self):
        """Same interface with sides exchanged (normals flip)."""
        cuts = [CutRecord(c.facet_b, c.facet_a, c.element_b, c.element_a, c.interval,
                          c.t_b, c.t_a, c.xi_b, c.xi_a, c.x_b, c.x, c.weights,
                          c.weights_b, c.weights_a, _side_normal(self.side_b, c.facet_b))
                for c in self.cuts]
        return SlidingInterface(self.side_b, self.side_a, self.parameterization,
                                self.order, cuts)


def _side_normal(side, facet):
    return side.mesh.facet_normals([facet])[0][0]


def _side_intervals(side, param):
    ends = side.mesh.facet_endpoints(side.facets)
    dist = param.distance(ends)
    scale = max(1.0, float(np.abs(ends).max()))
    if np.any(dist > GEOM_TOL * scale):
        bad = side.facets[np.any(dist > GEOM_TOL * scale, axis=1)]
        raise GeometryError(f"facets {bad[:10].tolist()} of subdomain "
                            f"{side.mesh.subdomain_id} do not lie on the interface")
    iv = np.array([param.facet_interval(p0, p1) for p0, p1 in ends])
    return ends, iv


def build_interface_quadrature(side_a: InterfaceSide, side_b: InterfaceSide, param,
                               order=3, pairs=None, padding=None):
    """Build all cut records between two interface sides.

    ``pairs`` are index pairs into ``side_a.facets`` x ``side_b.facets``; by
    default they come from :func:`detect_candidate_pairs`.
    """
    ends_a, iv_a = _side_intervals(side_a, param)
    ends_b, iv_b = _side_intervals(side_b, param)
    if pairs is None:
        if padding is None:
            la = np.linalg.norm(ends_a[:, 1] - ends_a[:, 0], axis=1)
            lb = np.linalg.norm(ends_b[:, 1] - ends_b[:, 0], axis=1)
            # chords of a curved interface bulge inwards by O(h^2)
            padding = 0.0 if param.periodic is None else 0.5 * max(la.max(), lb.max())
        pairs = detect_candidate_pairs(ends_a, ends_b, padding)
    tq, wq = gauss_rule(order)
    len_a = np.linalg.norm(ends_a[:, 1] - ends_a[:, 0], axis=1)
    len_b = np.linalg.norm(ends_b[:, 1] - ends_b[:, 0], axis=1)
    normals_a = side_a.mesh.facet_normals(side_a.facets)[0]
    fa_all = side_a.mesh.facets[side_a.facets]
    fb_all = side_b.mesh.facets[side_b.facets]
    cuts = []
    for i, j in pairs:
        a0, a1 = iv_a[i]
        b0, b1 = iv_b[j]
        A = (min(a0, a1), max(a0, a1))
        shifts = [0.0] if param.periodic is None else [-param.periodic, 0.0, param.periodic]
        for sh in shifts:
            B = (min(b0, b1) + sh, max(b0, b1) + sh)
            ov = intersect_intervals(A, B)
            if ov is None:
                continue
            s = ov[0] + tq * (ov[1] - ov[0])
            t_a = (s - a0) / (a1 - a0)
            t_b = (s - sh - b0) / (b1 - b0)
            jac_a = len_a[i] / abs(a1 - a0)
            jac_b = len_b[j] / abs(b1 - b0)
            dlen = wq * (ov[1] - ov[0])
            ea, ka = fa_all[i]
            eb, kb = fb_all[j]
            xa = (1 - t_a)[:, None] * ends_a[i, 0] + t_a[:, None] * ends_a[i, 1]
            xb = (1 - t_b)[:, None] * ends_b[j, 0] + t_b[:, None] * ends_b[j, 1]
            cuts.append(CutRecord(
                facet_a=int(side_a.facets[i]), facet_b=int(side_b.facets[j]),
                element_a=int(ea), element_b=int(eb), interval=(float(ov[0]), float(ov[1])),
                t_a=t_a, t_b=t_b,
                xi_a=edge_reference_points(np.full(len(s), ka), t_a),
                xi_b=edge_reference_points(np.full(len(s), kb), t_b),
                x=xa, x_b=xb,
                weights=0.5 * (jac_a + jac_b) * dlen,
                weights_a=jac_a * dlen, weights_b=jac_b * dlen,
                normal=normals_a[i].copy()))
    cuts.sort(key=lambda c: (c.facet_a, c.facet_b, c.interval))
    return SlidingInterface(side_a, side_b, param, order, cuts)


def build_uncovered_quadrature(interface: SlidingInterface, side="a"):
    """Signed quadrature per facet of one side.

    Returns a list with one :class:`SignedQuadrature` per facet of the side:
    the full facet rule with positive weights followed by every covering cut's
    points with negated weights.
    """
    s = interface.side_a if side == "a" else interface.side_b
    mesh = s.mesh
    tq, wq = gauss_rule(interface.order)
    normals, lengths = mesh.facet_normals(s.facets)
    ends = mesh.facet_endpoints(s.facets)
    by_facet = {int(f): [] for f in s.facets}
    for c in interface.cuts:
        if side == "a":
            by_facet[c.facet_a].append((c.t_a, c.weights_a))
        else:
            by_facet[c.facet_b].append((c.t_b, c.weights_b))
    out = []
    for k, f in enumerate(s.facets):
        e, edge = mesh.facets[f]
        ts = [tq] + [t for t, _ in by_facet[int(f)]]
        ws = [wq * lengths[k]] + [-w for _, w in by_facet[int(f)]]
        t = np.concatenate(ts)
        w = np.concatenate(ws)
        x = (1 - t)[:, None] * ends[k, 0] + t[:, None] * ends[k, 1]
        out.append(SignedQuadrature(
            facet=np.full(len(t), f), element=np.full(len(t), e),
            xi=edge_reference_points(np.full(len(t), edge), t), x=x, weights=w,
            normal=np.broadcast_to(normals[k], (len(t), 2)).copy()))
    return out


def pack_uncovered(quads, lengths, rel_tol=REL_TOL):
    """Concatenate per-facet signed rules, dropping fully covered facets."""
    keep = [q for q, L in zip(quads, lengths) if q.weights.sum() > rel_tol * L]
    if not keep:
        z = np.zeros(0, dtype=np.int64)
        return SignedQuadrature(z, z, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0),
                                np.zeros((0, 2)))
    cat = np.concatenate
    return SignedQuadrature(cat([q.facet for q in keep]), cat([q.element for q in keep]),
                            cat([q.xi for q in keep]), cat([q.x for q in keep]),
                            cat([q.weights for q in keep]), cat([q.normal for q in keep]))


def uncovered_intervals(interface: SlidingInterface, side="a", rel_tol=REL_TOL):
    """Uncovered parts of each facet of one side as local edge-parameter intervals.

    Returns ``{facet id: [(t0, t1), ...]}`` with ``0 <= t0 < t1 <= 1``.
    """
    s = interface.side_a if side == "a" else interface.side_b
    covered = {int(f): [] for f in s.facets}
    for c in interface.cuts:
        f = c.facet_a if side == "a" else c.facet_b
        # cut points are interior Gauss points; recover the end parameters
        # from the interval mapped linearly onto the facet
        lo, hi = _cut_end_parameters(interface, c, side)
        covered[f].append((min(lo, hi), max(lo, hi)))
    out = {}
    for f, ivs in covered.items():
        ivs.sort()
        gaps, pos = [], 0.0
        for lo, hi in ivs:
            if lo > pos + rel_tol:
                gaps.append((pos, lo))
            pos = max(pos, hi)
        if pos < 1.0 - rel_tol:
            gaps.append((pos, 1.0))
        out[f] = gaps
    return out


def _cut_end_parameters(interface, cut, side):
    s = interface.side_a if side == "a" else interface.side_b
    f = cut.facet_a if side == "a" else cut.facet_b
    k = int(np.flatnonzero(s.facets == f)[0])
    ends = s.mesh.facet_endpoints(s.facets[k:k + 1])[0]
    p0, p1 = interface.parameterization.facet_interval(ends[0], ends[1])
    lo, hi = cut.interval
    per = interface.parameterization.periodic
    if per is not None:
        # bring the cut interval into the branch of this facet's interval
        mid = 0.5 * (lo + hi)
        centre = 0.5 * (p0 + p1)
        shift = per * np.round((centre - mid) / per)
        lo, hi = lo + shift, hi + shift
    return (lo - p0) / (p1 - p0), (hi - p0) / (p1 - p0)
