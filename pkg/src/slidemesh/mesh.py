"""Bilinear quadrilateral meshes, reference element and rigid subdomain motion.

Element nodes are numbered counterclockwise and map to the reference square
corners ``(-1,-1), (1,-1), (1,1), (-1,1)``.  Local edge ``k`` runs from local
node ``k`` to local node ``k+1 (mod 4)``, so for a counterclockwise element the
outward normal of an edge is its direction rotated by -90 degrees.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigurationError, GeometryError

REF_NODES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def shape_functions(xi):
    """Bilinear shape functions at reference points ``xi`` (..., 2) -> (..., 4)."""
    xi = np.asarray(xi, dtype=float)
    s = xi[..., 0, None]
    t = xi[..., 1, None]
    return 0.25 * (1.0 + REF_NODES[:, 0] * s) * (1.0 + REF_NODES[:, 1] * t)


def shape_gradients(xi):
    """Reference gradients (..., 4, 2) of the bilinear shape functions."""
    xi = np.asarray(xi, dtype=float)
    s = xi[..., 0, None]
    t = xi[..., 1, None]
    ds = 0.25 * REF_NODES[:, 0] * (1.0 + REF_NODES[:, 1] * t)
    dt = 0.25 * REF_NODES[:, 1] * (1.0 + REF_NODES[:, 0] * s)
    return np.stack([ds, dt], axis=-1)


def gauss_rule(n):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class ReferenceElement:
    """Tensor Gauss rule on [-1,1]^2 plus a Gauss rule for edges."""

    order: int = 2
    edge_order: int = 2

    @property
    def points(self):
        x, _ = np.polynomial.legendre.leggauss(self.order)
        return np.array([[a, b] for b in x for a in x])

    @property
    def weights(self):
        _, w = np.polynomial.legendre.leggauss(self.order)
        return np.array([wa * wb for wb in w for wa in w])

    @property
    def N(self):
        return shape_functions(self.points)

    @property
    def dN(self):
        return shape_gradients(self.points)

    def edge_rule(self):
        return gauss_rule(self.edge_order)


def edge_reference_points(edge, t):
    """Reference coordinates of the points at local parameter ``t`` on ``edge``."""
    edge = np.asarray(edge)
    t = np.asarray(t, dtype=float)
    a = REF_NODES[edge]
    b = REF_NODES[(edge + 1) % 4]
    return (1.0 - t)[..., None] * a + t[..., None] * b


@dataclass(frozen=True)
class FacetGeometry:
    endpoints: np.ndarray
    normal: np.ndarray
    measure: float


@dataclass
class Mesh:
    """A single subdomain mesh.

    ``facets`` holds ``(element, local_edge)`` rows of boundary edges and
    ``facet_tags`` the boundary tag of each row.  ``node_velocity`` is the ALE
    mesh velocity, interpolated with the same shape functions as the flow.
    """

    nodes: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    subdomain_id: int = 0
    node_velocity: np.ndarray | None = None

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        self.facets = np.asarray(self.facets, dtype=np.int64).reshape(-1, 2)
        self.facet_tags = np.asarray(self.facet_tags, dtype=object)
        if self.node_velocity is None:
            self.node_velocity = np.zeros_like(self.nodes)
        self.node_velocity = np.asarray(self.node_velocity, dtype=float)
        if self.node_velocity.shape != self.nodes.shape:
            raise ConfigurationError("node_velocity must match node_coords")
        if len(self.facet_tags) != len(self.facets):
            raise ConfigurationError("one tag per boundary facet required")

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def copy(self):
        return Mesh(self.nodes.copy(), self.elements.copy(), self.facets.copy(),
                    self.facet_tags.copy(), self.subdomain_id,
                    self.node_velocity.copy())

    @property
    def tags(self):
        return sorted(set(self.facet_tags.tolist()))

    def facets_with_tag(self, tag):
        return np.flatnonzero(self.facet_tags == tag)

    def facet_nodes(self, facet_ids=None):
        f = self.facets if facet_ids is None else self.facets[facet_ids]
        e, k = f[:, 0], f[:, 1]
        return np.stack([self.elements[e, k], self.elements[e, (k + 1) % 4]], axis=1)

    def facet_endpoints(self, facet_ids=None):
        """(F, 2, 2) array of facet start and end points."""
        return self.nodes[self.facet_nodes(facet_ids)]

    def facet_normals(self, facet_ids=None):
        p = self.facet_endpoints(facet_ids)
        d = p[:, 1] - p[:, 0]
        length = np.linalg.norm(d, axis=1)
        return np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None], length

    def facet_geometry(self, facet_id):
        p = self.facet_endpoints([facet_id])[0]
        n, length = self.facet_normals([facet_id])
        return FacetGeometry(p, n[0], float(length[0]))

    def tag_nodes(self, tags):
        """Sorted unique node ids on facets carrying any of ``tags``."""
        mask = np.isin(self.facet_tags, list(tags))
        return np.unique(self.facet_nodes(np.flatnonzero(mask)))

    def centroids(self):
        return self.nodes[self.elements].mean(axis=1)

    def edge_lengths(self):
        x = self.nodes[self.elements]
        return np.linalg.norm(np.roll(x, -1, axis=1) - x, axis=2)

    def min_edge_length(self):
        return float(self.edge_lengths().min())

    def geometry(self, elements, xi):
        """Map one reference point per entry of ``elements``.

        Returns physical points, shape values, physical shape gradients,
        Jacobian determinants and the metric tensor ``G = (dxi/dx)^T (dxi/dx)``.
        """
        elements = np.asarray(elements)
        xi = np.broadcast_to(np.asarray(xi, dtype=float), elements.shape + (2,))
        X = self.nodes[self.elements[elements]]
        N = shape_functions(xi)
        dN = shape_gradients(xi)
        x = np.einsum("...a,...ai->...i", N, X)
        J = np.einsum("...ai,...aj->...ij", X, dN)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(det <= 0.0):
            bad = np.unique(np.broadcast_to(elements, det.shape)[det <= 0.0])
            raise GeometryError(f"non-positive Jacobian in element(s) {bad[:10].tolist()}"
                                f" of subdomain {self.subdomain_id}")
        inv = np.empty_like(J)
        inv[..., 0, 0] = J[..., 1, 1] / det
        inv[..., 1, 1] = J[..., 0, 0] / det
        inv[..., 0, 1] = -J[..., 0, 1] / det
        inv[..., 1, 0] = -J[..., 1, 0] / det
        dNx = np.einsum("...aj,...ji->...ai", dN, inv)
        G = np.einsum("...ji,...jk->...ik", inv, inv)
        return x, N, dNx, det, G


@dataclass
class ElementGeometry:
    """Volume quadrature data of a whole mesh, shapes (M, Q, ...)."""

    x: np.ndarray
    N: np.ndarray
    dN: np.ndarray
    W: np.ndarray
    G: np.ndarray

    @classmethod
    def of(cls, mesh, ref=None):
        ref = ref or ReferenceElement()
        pts, wts = ref.points, ref.weights
        M, Q = mesh.n_elements, len(pts)
        elems = np.repeat(np.arange(M), Q).reshape(M, Q)
        xi = np.broadcast_to(pts, (M, Q, 2))
        x, N, dN, det, G = mesh.geometry(elems, xi)
        return cls(x, N, dN, det * wts, G)


def element_metric_tensor(mesh, element_id, ref_point):
    """Metric tensor G of one element at one reference point."""
    try:
        return mesh.geometry(np.array([element_id]), np.asarray(ref_point)[None])[4][0]
    except GeometryError as exc:
        raise GeometryError(f"element {element_id}: {exc}") from None


def element_length(G, n):
    """Element length in direction ``n``: ``2 (n^T G n)^(-1/2)``."""
    return 2.0 / np.sqrt(np.einsum("...i,...ij,...j->...", n, G, n))


_SIDES = ("bottom", "right", "top", "left")


def _resolve_tag(tag_rules, side, midpoint):
    if tag_rules is None:
        return side
    if callable(tag_rules):
        return tag_rules(side, midpoint)
    return tag_rules.get(side, side)


def build_structured_quad_mesh(rect, nx, ny, subdomain_id=0,
                               tag_rules: Mapping[str, str] | Callable | None = None):
    """Uniform nx-by-ny mesh of the rectangle ``(x0, y0, x1, y1)``.

    ``tag_rules`` maps side names (bottom/right/top/left) to tags, or is a
    callable ``(side, facet_midpoint) -> tag``.
    """
    x0, y0, x1, y1 = map(float, rect)
    if nx < 1 or ny < 1:
        raise ConfigurationError(f"element counts must be >= 1, got nx={nx}, ny={ny}")
    if not (x1 > x0 and y1 > y0):
        raise ConfigurationError(f"degenerate rectangle {rect}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    n0 = j * (nx + 1) + i
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    eid = lambda ii, jj: jj * nx + ii  # noqa: E731
    facets = []
    for ii in range(nx):
        facets.append((eid(ii, 0), 0))
        facets.append((eid(ii, ny - 1), 2))
    for jj in range(ny):
        facets.append((eid(nx - 1, jj), 1))
        facets.append((eid(0, jj), 3))
    facets = np.array(facets)
    mesh = Mesh(nodes, elements, facets, np.empty(len(facets), dtype=object), subdomain_id)
    mid = mesh.facet_endpoints().mean(axis=1)
    mesh.facet_tags = np.array([_resolve_tag(tag_rules, _SIDES[k], m)
                                for (_, k), m in zip(facets, mid)], dtype=object)
    return mesh


def build_annulus_mesh(r_in, r_out, n_theta, n_r, subdomain_id=0, center=(0.0, 0.0),
                       theta0=0.0, tag_rules=None):
    """Structured ring mesh; periodic in angle with shared seam nodes.

    Boundary sides are named ``inner`` and ``outer``.
    """
    if not (0.0 < r_in < r_out):
        raise ConfigurationError(f"need 0 < r_in < r_out, got {r_in}, {r_out}")
    if n_theta < 3 or n_r < 1:
        raise ConfigurationError("need n_theta >= 3 and n_r >= 1")
    r = np.linspace(r_in, r_out, n_r + 1)
    th = theta0 + 2.0 * np.pi * np.arange(n_theta) / n_theta
    R, TH = np.meshgrid(r, th)  # rows: angle, cols: radius
    nodes = np.column_stack([center[0] + (R * np.cos(TH)).ravel(),
                             center[1] + (R * np.sin(TH)).ravel()])
    j, i = np.meshgrid(np.arange(n_theta), np.arange(n_r), indexing="ij")
    j, i = j.ravel(), i.ravel()
    jn = (j + 1) % n_theta
    node = lambda jj, ii: jj * (n_r + 1) + ii  # noqa: E731
    elements = np.column_stack([node(j, i), node(j, i + 1), node(jn, i + 1), node(jn, i)])
    eid = lambda jj, ii: jj * n_r + ii  # noqa: E731
    facets = [(eid(jj, 0), 3) for jj in range(n_theta)]
    facets += [(eid(jj, n_r - 1), 1) for jj in range(n_theta)]
    sides = ["inner"] * n_theta + ["outer"] * n_theta
    mesh = Mesh(nodes, elements, np.array(facets), np.empty(2 * n_theta, dtype=object),
                subdomain_id)
    mid = mesh.facet_endpoints().mean(axis=1)
    mesh.facet_tags = np.array([_resolve_tag(tag_rules, s, m) for s, m in zip(sides, mid)],
                               dtype=object)
    return mesh


def rigid_rotate_subdomain(mesh, center, omega, dt):
    """Rotate a mesh by ``omega*dt`` about ``center``.

    The ALE node velocity is the rigid-body velocity at the new position.
    """
    c = np.asarray(center, dtype=float)
    a = omega * dt
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    out = mesh.copy()
    out.nodes = (mesh.nodes - c) @ rot.T + c
    rel = out.nodes - c
    out.node_velocity = omega * np.column_stack([-rel[:, 1], rel[:, 0]])
    return out


def read_mesh_text(path, subdomain_id=0):
    """Read the plain-text mesh format (nodes / elements / facets blocks)."""
    tokens = Path(path).read_text().split()
    pos = 0

    def block(name):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != name:
            raise ConfigurationError(f"{path}: expected '{name}' block")
        count = int(tokens[pos + 1])
        pos += 2
        return count

    n = block("nodes")
    nodes = np.array(tokens[pos:pos + 2 * n], dtype=float).reshape(n, 2)
    pos += 2 * n
    m = block("elements")
    elements = np.array(tokens[pos:pos + 4 * m], dtype=np.int64).reshape(m, 4)
    pos += 4 * m
    f = block("facets")
    rows = tokens[pos:pos + 3 * f]
    facets = np.array([[int(rows[3 * k]), int(rows[3 * k + 1])] for k in range(f)],
                      dtype=np.int64).reshape(f, 2)
    tags = np.array([rows[3 * k + 2] for k in range(f)], dtype=object)
    return Mesh(nodes, elements, facets, tags, subdomain_id)


def write_mesh_text(mesh, path):
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"elements {mesh.n_elements}")
    lines += [" ".join(map(str, e)) for e in mesh.elements.tolist()]
    lines.append(f"facets {len(mesh.facets)}")
    lines += [f"{e} {k} {t}" for (e, k), t in zip(mesh.facets.tolist(), mesh.facet_tags)]
    Path(path).write_text("\n".join(lines) + "\n")
