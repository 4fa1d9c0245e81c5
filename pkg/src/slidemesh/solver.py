"""Global assembly, nonlinear iteration and BDF1 time stepping.

Flow unknowns are interleaved ``(u_x, u_y, p)`` per node with subdomains
concatenated; temperature has its own block with one unknown per node.
Flow and temperature are iterated in a staggered loop: one Newton update of
the flow with viscosity lagged in (shear rate, temperature), then a
temperature solve with the updated velocity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import nitsche
from .cut import (CircleParameterization, InterfaceSide, LineParameterization,
                  build_interface_quadrature, build_uncovered_quadrature, pack_uncovered)
from .errors import (AssemblyError, ConfigurationError, GeometryError, LinearSolveError,
                     SolverDivergenceError)
from .forms import (StabilizationConfig, element_residual_flow, element_residual_temp,
                    gradient_at_points, recover_stress_divergence)
from .material import PhysicalParams, shear_rate, viscosity
from .mesh import (ElementGeometry, ReferenceElement, edge_reference_points, gauss_rule,
                   rigid_rotate_subdomain)

log = logging.getLogger("slidemesh")

BC_FLOW_KINDS = ("dirichlet", "neumann", "interface", "weak_dirichlet")
BC_THERMAL_KINDS = ("dirichlet", "neumann", "weak_dirichlet")


@dataclass
class BoundaryCondition:
    """Flow and thermal conditions of one boundary tag.

    Callables take ``(x, t)`` with ``x`` of shape (P, 2).  ``flow="interface"``
    marks a sliding boundary; its uncovered part gets weak Dirichlet
    conditions with ``velocity`` (default zero) and ``temperature`` if given.
    """

    flow: str = "neumann"
    thermal: str = "neumann"
    velocity: Callable | None = None
    traction: Callable | None = None
    temperature: Callable | None = None
    heat_flux: Callable | None = None

    def __post_init__(self):
        if self.flow not in BC_FLOW_KINDS:
            raise ConfigurationError(f"unknown flow condition {self.flow!r}")
        if self.thermal not in BC_THERMAL_KINDS:
            raise ConfigurationError(f"unknown thermal condition {self.thermal!r}")


@dataclass
class InterfaceSpec:
    mesh_a: int
    tag_a: str
    mesh_b: int
    tag_b: str
    parameterization: LineParameterization | CircleParameterization


@dataclass
class RigidRotation:
    center: tuple
    omega: float


@dataclass
class PressureAnchor:
    mesh: int
    point: tuple
    value: Callable | float = 0.0


@dataclass
class RunConfig:
    meshes: list
    bcs: dict
    material: object = None
    params: PhysicalParams = field(default_factory=PhysicalParams)
    stabilization: StabilizationConfig = field(default_factory=StabilizationConfig)
    interfaces: list = field(default_factory=list)
    motions: dict = field(default_factory=dict)
    # called as body_force(x, t) with x of shape (..., 2)
    body_force: Callable | None = None
    pressure_anchor: PressureAnchor | None = None
    steady: bool = True
    dt: float | None = None
    n_steps: int = 0
    flow: bool = True
    energy: bool = False
    tol_abs: float = 1e-9
    tol_rel: float = 1e-8
    max_iter: int = 25
    # per-subdomain overrides: {mesh index: PhysicalParams / material}
    subdomain_params: dict = field(default_factory=dict)
    subdomain_material: dict = field(default_factory=dict)
    initial_velocity: Callable | None = None
    initial_pressure: Callable | None = None
    initial_temperature: Callable | float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if self.material is None:
            raise ConfigurationError("material: required")
        if not self.steady and not (self.dt and self.dt > 0):
            raise ConfigurationError("dt must be positive for transient runs")
        for mesh in self.meshes:
            for tag in mesh.tags:
                if tag not in self.bcs:
                    raise ConfigurationError(f"boundary tag {tag!r} of subdomain "
                                             f"{mesh.subdomain_id} has no condition")

    def params_of(self, k):
        return self.subdomain_params.get(k, self.params)

    def material_of(self, k):
        return self.subdomain_material.get(k, self.material)


@dataclass
class SolutionState:
    u: list
    p: list
    T: list
    t: float = 0.0

    def copy(self):
        return SolutionState([a.copy() for a in self.u], [a.copy() for a in self.p],
                             [a.copy() for a in self.T], self.t)


@dataclass
class IterationReport:
    iterations: int
    history: list
    converged: bool


class DofMap:
    def __init__(self, meshes):
        sizes = [m.n_nodes for m in meshes]
        self.node_offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.n_flow = 3 * int(self.node_offsets[-1])
        self.n_temp = int(self.node_offsets[-1])

    def flow_dofs(self, k, nodes):
        base = 3 * (self.node_offsets[k] + np.asarray(nodes))
        return base[..., None] + np.arange(3)

    def temp_dofs(self, k, nodes):
        return self.node_offsets[k] + np.asarray(nodes)

    def pack_flow(self, state):
        return np.concatenate([np.column_stack([u, p]).ravel() for u, p in zip(state.u, state.p)])

    def unpack_flow(self, x, state):
        for k in range(len(state.u)):
            blk = x[3 * self.node_offsets[k]:3 * self.node_offsets[k + 1]].reshape(-1, 3)
            state.u[k] = blk[:, :2].copy()
            state.p[k] = blk[:, 2].copy()

    def pack_temp(self, state):
        return np.concatenate(state.T)

    def unpack_temp(self, x, state):
        for k in range(len(state.T)):
            state.T[k] = x[self.node_offsets[k]:self.node_offsets[k + 1]].copy()


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = []

    def add_blocks(self, dofs, K, f=None):
        dofs = np.asarray(dofs).reshape(len(K), -1)
        n = dofs.shape[1]
        self.rows.append(np.repeat(dofs, n, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, n)).ravel())
        self.vals.append(K.ravel())
        if f is not None:
            self.rhs.append((dofs.ravel(), f.ravel()))

    def matrix(self, n):
        if not self.rows:
            return sp.csr_matrix((n, n))
        A = sp.coo_matrix((np.concatenate(self.vals),
                           (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=(n, n))
        return A.tocsr()

    def vector(self, n):
        b = np.zeros(n)
        for d, v in self.rhs:
            np.add.at(b, d, v)
        return b


def linear_solve(A, b, rel_tol=1e-10, pivot_tol=1e-13, refine=3):
    """Sparse LU solve with an explicit singularity and residual check.

    Up to ``refine`` steps of iterative refinement are taken if the first
    residual misses ``rel_tol``.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise LinearSolveError(f"matrix is not square: {A.shape}")
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise LinearSolveError(f"factorization failed: {exc}") from None
    d = np.abs(lu.U.diagonal())
    if d.size and d.min() <= pivot_tol * d.max():
        k = int(np.argmin(d))
        raise LinearSolveError(
            f"matrix is numerically singular (pivot {d[k]:.3e} vs max {d.max():.3e})",
            pivot_info={"index": int(lu.perm_c[k]), "pivot": float(d[k]), "max": float(d.max())})
    x = lu.solve(b)
    bn = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b)
    for _ in range(refine):
        if res <= rel_tol * bn:
            break
        x = x + lu.solve(b - A @ x)
        res = np.linalg.norm(A @ x - b)
    # residuals at the rounding level of A x cannot be reduced further
    floor = 1e3 * np.finfo(float).eps * spla.norm(A, np.inf) * np.abs(x).max(initial=0.0)
    if not np.all(np.isfinite(x)) or (bn > 0 and res > rel_tol * bn and res > floor):
        raise LinearSolveError(f"linear solve residual too large: {res:.3e} (|b|={bn:.3e})")
    return x


def _apply_dirichlet(A, r, fixed):
    """Replace rows ``fixed`` of the Jacobian by identity rows."""
    if len(fixed) == 0:
        return A, r
    n = A.shape[0]
    keep = np.ones(n)
    keep[fixed] = 0.0
    A = sp.diags(keep) @ A + sp.diags(1.0 - keep)
    return A.tocsc(), r


def _zero_rows(A):
    nnz = np.diff(sp.csr_matrix(A).indptr)
    absrow = np.asarray(abs(sp.csr_matrix(A)).sum(axis=1)).ravel()
    return np.flatnonzero((nnz == 0) | (absrow == 0.0))


class Solver:
    """Holds meshes, interfaces and the solution of one run."""

    def __init__(self, config: RunConfig, stream=None):
        self.config = config
        self.meshes = [m.copy() for m in config.meshes]
        self.dofs = DofMap(self.meshes)
        self.ref = ReferenceElement(config.stabilization.quad_order)
        self.stream = stream
        self.step_log = []
        self._uncovered_cache = {}
        self._update_geometry()
        self.interfaces = self.build_interfaces()
        self.state = self.initial_state()
        self.prev = self.state.copy()

    # -- geometry --------------------------------------------------------
    def _update_geometry(self):
        self.geoms = [ElementGeometry.of(m, self.ref) for m in self.meshes]

    def build_interfaces(self):
        out = []
        for spec in self.config.interfaces:
            ma, mb = self.meshes[spec.mesh_a], self.meshes[spec.mesh_b]
            sa = InterfaceSide(ma, ma.facets_with_tag(spec.tag_a), spec.tag_a)
            sb = InterfaceSide(mb, mb.facets_with_tag(spec.tag_b), spec.tag_b)
            out.append(build_interface_quadrature(
                sa, sb, spec.parameterization, self.config.stabilization.interface_order))
        return out

    def advance_configuration(self, dt):
        """Move subdomains over one step and rebuild every interface."""
        moved = False
        for k, motion in self.config.motions.items():
            if motion is None:
                continue
            self.meshes[k] = rigid_rotate_subdomain(self.meshes[k], motion.center,
                                                    motion.omega, dt)
            moved = True
        if moved:
            self._update_geometry()
            self.interfaces = self.build_interfaces()
            for itf in self.interfaces:
                check_measure_conservation(itf)

    # -- state -----------------------------------------------------------
    def initial_state(self):
        c = self.config
        u, p, T = [], [], []
        for m in self.meshes:
            u.append(np.zeros((m.n_nodes, 2)) if c.initial_velocity is None
                     else np.asarray(c.initial_velocity(m.nodes, c.t0), float).reshape(-1, 2))
            p.append(np.zeros(m.n_nodes) if c.initial_pressure is None
                     else np.asarray(c.initial_pressure(m.nodes, c.t0), float).ravel())
            T0 = c.initial_temperature
            T.append(np.asarray(T0(m.nodes, c.t0), float).ravel() if callable(T0)
                     else np.full(m.n_nodes, float(T0)))
        return SolutionState(u, p, T, c.t0)

    def _eta_qp(self, k, state):
        m, g = self.meshes[k], self.geoms[k]
        el = m.elements
        gd = shear_rate(gradient_at_points(g.dN, state.u[k][el]))
        T = np.einsum("mqa,ma->mq", g.N, state.T[k][el])
        return viscosity(self.config.material_of(k), gd, T)

    def _eta_points(self, k, state, elements, xi):
        m = self.meshes[k]
        _, N, dN, _, G = m.geometry(elements, xi)
        el = m.elements[elements]
        grad_u = np.einsum("qaj,qai->qij", dN, state.u[k][el])
        T = np.einsum("qa,qa->q", N, state.T[k][el])
        eta = viscosity(self.config.material_of(k), shear_rate(grad_u), T)
        return N, dN, G, eta, el

    # -- boundary data ---------------------------------------------------
    def _strong_flow(self, t):
        fixed, vals = [], []
        for k, m in enumerate(self.meshes):
            tags = [tg for tg in m.tags if self.config.bcs[tg].flow == "dirichlet"]
            for tg in tags:
                nodes = m.tag_nodes([tg])
                g = self.config.bcs[tg].velocity
                gv = np.zeros((len(nodes), 2)) if g is None else \
                    np.asarray(g(m.nodes[nodes], t), float).reshape(-1, 2)
                d = self.dofs.flow_dofs(k, nodes)[:, :2]
                fixed.append(d.ravel())
                vals.append(gv.ravel())
        a = self.config.pressure_anchor
        if a is not None:
            m = self.meshes[a.mesh]
            node = int(np.argmin(np.linalg.norm(m.nodes - np.asarray(a.point), axis=1)))
            v = a.value(m.nodes[node:node + 1], t) if callable(a.value) else a.value
            fixed.append(self.dofs.flow_dofs(a.mesh, [node])[:, 2])
            vals.append(np.atleast_1d(np.asarray(v, float)).ravel())
        if not fixed:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        fixed = np.concatenate(fixed)
        vals = np.concatenate(vals)
        # later entries win for nodes shared by several tags
        _, idx = np.unique(fixed[::-1], return_index=True)
        idx = len(fixed) - 1 - idx
        return fixed[idx], vals[idx]

    def _strong_temp(self, t):
        fixed, vals = [], []
        for k, m in enumerate(self.meshes):
            for tg in m.tags:
                bc = self.config.bcs[tg]
                if bc.thermal != "dirichlet":
                    continue
                nodes = m.tag_nodes([tg])
                g = bc.temperature
                gv = np.zeros(len(nodes)) if g is None else \
                    np.asarray(g(m.nodes[nodes], t), float).ravel() * np.ones(len(nodes))
                fixed.append(self.dofs.temp_dofs(k, nodes))
                vals.append(gv)
        if not fixed:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        fixed = np.concatenate(fixed)
        vals = np.concatenate(vals)
        _, idx = np.unique(fixed[::-1], return_index=True)
        idx = len(fixed) - 1 - idx
        return fixed[idx], vals[idx]

    def _facet_rule(self, k, facet_ids):
        m = self.meshes[k]
        t, w = gauss_rule(self.config.stabilization.interface_order)
        normals, lengths = m.facet_normals(facet_ids)
        ends = m.facet_endpoints(facet_ids)
        F, P = len(facet_ids), len(t)
        el = np.repeat(m.facets[facet_ids, 0], P)
        xi = edge_reference_points(np.repeat(m.facets[facet_ids, 1], P), np.tile(t, F))
        x = ((1 - t)[None, :, None] * ends[:, None, 0] + t[None, :, None] * ends[:, None, 1]).reshape(-1, 2)
        return el, xi, x, (lengths[:, None] * w[None]).ravel(), np.repeat(normals, P, axis=0)

    # -- assembly --------------------------------------------------------
    def assemble_flow(self, state, prev, t, dt):
        """Frozen-coefficient flow system: returns (L, f, newton) sparse/dense parts."""
        c = self.config
        n = self.dofs.n_flow
        trip, newton = _Triplets(), _Triplets()
        eta_cache = []
        for k, (m, g) in enumerate(zip(self.meshes, self.geoms)):
            prm = c.params_of(k)
            eta = self._eta_qp(k, state)
            eta_cache.append(eta)
            el = m.elements
            rec = recover_stress_divergence(m, g, state.u[k], eta,
                                            c.stabilization.include_recovery)
            bf = None if c.body_force is None else c.body_force(g.x, t)
            sysk = element_residual_flow(
                g, state.u[k][el], state.p[k][el], prev.u[k][el], m.node_velocity[el],
                eta, prm, c.stabilization, dt, bf, rec.divergence(g, el))
            dofs = self.dofs.flow_dofs(k, el).reshape(len(el), 12)
            trip.add_blocks(dofs, sysk.matrix, sysk.rhs)
            newton.add_blocks(dofs, sysk.newton)
            self._neumann_flow(k, trip, t)
            self._weak_boundary_flow(k, state, trip, t)
        for itf_idx, itf in enumerate(self.interfaces):
            self._interface_flow(itf_idx, itf, state, trip)
            self._uncovered_flow(itf_idx, itf, state, trip, t)
        L = trip.matrix(n)
        f = trip.vector(n)
        Nw = newton.matrix(n)
        zr = _zero_rows(L)
        if len(zr):
            raise AssemblyError(f"assembled flow matrix has zero rows {zr[:10].tolist()}")
        return L, f, Nw

    def _neumann_flow(self, k, trip, t):
        m = self.meshes[k]
        for tg in m.tags:
            bc = self.config.bcs[tg]
            if bc.flow != "neumann" or bc.traction is None:
                continue
            fids = m.facets_with_tag(tg)
            el, xi, x, w, nrm = self._facet_rule(k, fids)
            _, N, _, _, _ = m.geometry(el, xi)
            h = np.asarray(bc.traction(x, t), float).reshape(-1, 2)
            f = np.zeros((len(w), 4, 3))
            f[:, :, :2] = (w[:, None, None] * N[:, :, None] * h[:, None, :])
            dofs = self.dofs.flow_dofs(k, m.elements[el]).reshape(len(el), 12)
            trip.add_blocks(dofs, np.zeros((len(w), 12, 12)), f.reshape(len(w), 12))

    def _weak_boundary_flow(self, k, state, trip, t):
        m = self.meshes[k]
        for tg in m.tags:
            bc = self.config.bcs[tg]
            if bc.flow != "weak_dirichlet":
                continue
            el, xi, x, w, nrm = self._facet_rule(k, m.facets_with_tag(tg))
            N, dN, G, eta, els = self._eta_points(k, state, el, xi)
            g = np.zeros((len(w), 2)) if bc.velocity is None else \
                np.asarray(bc.velocity(x, t), float).reshape(-1, 2)
            blk = nitsche.weak_dirichlet_flow((N, dN, G), nrm, w, eta,
                                              self.config.stabilization.alpha, g)
            trip.add_blocks(self.dofs.flow_dofs(k, els).reshape(-1, 12), blk.matrix, blk.rhs)

    def _interface_flow(self, idx, itf, state, trip):
        spec = self.config.interfaces[idx]
        pk = itf.packed()
        if len(pk["weights"]) == 0:
            return
        ka, kb = spec.mesh_a, spec.mesh_b
        Na, dNa, Ga, eta_a, el_a = self._eta_points(ka, state, pk["element_a"], pk["xi_a"])
        Nb, dNb, Gb, eta_b, el_b = self._eta_points(kb, state, pk["element_b"], pk["xi_b"])
        n = pk["normal"]
        ma, mb = self.meshes[ka], self.meshes[kb]
        rel_a = np.einsum("qa,qai->qi", Na, state.u[ka][el_a] - ma.node_velocity[el_a])
        rel_b = np.einsum("qa,qai->qi", Nb, state.u[kb][el_b] - mb.node_velocity[el_b])
        un = 0.5 * np.einsum("qi,qi->q", rel_a + rel_b, n)
        rho = 0.5 * (self.config.params_of(ka).rho + self.config.params_of(kb).rho)
        blk = nitsche.interface_residual_flow((Na, dNa, Ga), (Nb, dNb, Gb), n, pk["weights"],
                                              eta_a, eta_b, un, rho,
                                              self.config.stabilization.alpha)
        dofs = np.concatenate([self.dofs.flow_dofs(ka, el_a).reshape(-1, 12),
                               self.dofs.flow_dofs(kb, el_b).reshape(-1, 12)], axis=1)
        trip.add_blocks(dofs, blk.matrix, blk.rhs)

    def uncovered_rules(self, idx, itf):
        cached = self._uncovered_cache.get(idx)
        if cached is not None and cached[0] is itf:
            return cached[1]
        out = []
        for side, k in (("a", self.config.interfaces[idx].mesh_a),
                        ("b", self.config.interfaces[idx].mesh_b)):
            s = itf.side_a if side == "a" else itf.side_b
            quads = build_uncovered_quadrature(itf, side)
            lengths = s.mesh.facet_normals(s.facets)[1]
            out.append((k, s.tag, pack_uncovered(quads, lengths)))
        self._uncovered_cache[idx] = (itf, out)
        return out

    def _uncovered_flow(self, idx, itf, state, trip, t):
        for k, tag, q in self.uncovered_rules(idx, itf):
            if len(q) == 0:
                continue
            bc = self.config.bcs[tag]
            N, dN, G, eta, el = self._eta_points(k, state, q.element, q.xi)
            g = np.zeros((len(q), 2)) if bc.velocity is None else \
                np.asarray(bc.velocity(q.x, t), float).reshape(-1, 2)
            blk = nitsche.weak_dirichlet_flow((N, dN, G), q.normal, q.weights, eta,
                                              self.config.stabilization.alpha, g)
            trip.add_blocks(self.dofs.flow_dofs(k, el).reshape(-1, 12), blk.matrix, blk.rhs)

    def assemble_temperature(self, state, prev, t, dt):
        c = self.config
        n = self.dofs.n_temp
        trip = _Triplets()
        for k, (m, g) in enumerate(zip(self.meshes, self.geoms)):
            prm = c.params_of(k)
            el = m.elements
            eta = self._eta_qp(k, state)
            sysk = element_residual_temp(g, prev.T[k][el], state.u[k][el], m.node_velocity[el],
                                         eta, prm, c.stabilization, dt)
            trip.add_blocks(self.dofs.temp_dofs(k, el), sysk.matrix, sysk.rhs)
            for tg in m.tags:
                bc = c.bcs[tg]
                if bc.thermal == "neumann" and bc.heat_flux is not None:
                    fids = m.facets_with_tag(tg)
                    ell, xi, x, w, _ = self._facet_rule(k, fids)
                    _, N, _, _, _ = m.geometry(ell, xi)
                    h = np.asarray(bc.heat_flux(x, t), float).ravel() * np.ones(len(w))
                    trip.add_blocks(self.dofs.temp_dofs(k, m.elements[ell]),
                                    np.zeros((len(w), 4, 4)), w[:, None] * N * h[:, None])
                if bc.thermal == "weak_dirichlet" and bc.flow != "interface":
                    fids = m.facets_with_tag(tg)
                    ell, xi, x, w, nrm = self._facet_rule(k, fids)
                    _, N, dN, _, G = m.geometry(ell, xi)
                    Tg = np.asarray(bc.temperature(x, t), float).ravel() * np.ones(len(w))
                    blk = nitsche.weak_dirichlet_temp((N, dN, G), nrm, w, prm.kappa, c.stabilization.alpha, Tg)
                    trip.add_blocks(self.dofs.temp_dofs(k, m.elements[ell]), blk.matrix, blk.rhs)
        for idx, itf in enumerate(self.interfaces):
            spec = c.interfaces[idx]
            pk = itf.packed()
            ka, kb = spec.mesh_a, spec.mesh_b
            if len(pk["weights"]):
                Na, dNa, Ga, _, el_a = self._eta_points(ka, state, pk["element_a"], pk["xi_a"])
                Nb, dNb, Gb, _, el_b = self._eta_points(kb, state, pk["element_b"], pk["xi_b"])
                nrm = pk["normal"]
                ma, mb = self.meshes[ka], self.meshes[kb]
                rel = np.einsum("qa,qai->qi", Na, state.u[ka][el_a] - ma.node_velocity[el_a]) + \
                    np.einsum("qa,qai->qi", Nb, state.u[kb][el_b] - mb.node_velocity[el_b])
                un = 0.5 * np.einsum("qi,qi->q", rel, nrm)
                pa, pb = c.params_of(ka), c.params_of(kb)
                rc = 0.5 * (pa.rho * pa.cp + pb.rho * pb.cp)
                blk = nitsche.interface_residual_temp((Na, dNa, Ga), (Nb, dNb, Gb), nrm,
                                                      pk["weights"], pa.kappa, pb.kappa, un, rc,
                                                      c.stabilization.alpha)
                dofs = np.concatenate([self.dofs.temp_dofs(ka, el_a), self.dofs.temp_dofs(kb, el_b)], axis=1)
                trip.add_blocks(dofs, blk.matrix, blk.rhs)
            for k, tag, q in self.uncovered_rules(idx, itf):
                bc = c.bcs[tag]
                if len(q) == 0 or bc.temperature is None:
                    continue
                _, N, dN, _, G = self.meshes[k].geometry(q.element, q.xi)
                Tg = np.asarray(bc.temperature(q.x, t), float).ravel() * np.ones(len(q))
                blk = nitsche.weak_dirichlet_temp((N, dN, G), q.normal, q.weights,
                                                  c.params_of(k).kappa, c.stabilization.alpha, Tg)
                trip.add_blocks(self.dofs.temp_dofs(k, self.meshes[k].elements[q.element]),
                                blk.matrix, blk.rhs)
        return trip.matrix(n), trip.vector(n)

    # -- residuals -------------------------------------------------------
    def flow_residual(self, state, prev, t, dt):
        L, f, Nw = self.assemble_flow(state, prev, t, dt)
        x = self.dofs.pack_flow(state)
        r = L @ x - f
        fixed, vals = self._strong_flow(t)
        r[fixed] = x[fixed] - vals
        return r, (L, f, Nw, fixed, vals)

    def temperature_residual(self, state, prev, t, dt):
        K, f = self.assemble_temperature(state, prev, t, dt)
        x = self.dofs.pack_temp(state)
        r = K @ x - f
        fixed, vals = self._strong_temp(t)
        r[fixed] = x[fixed] - vals
        return r, (K, f, fixed, vals)

    def nonlinear_solve(self, t, dt):
        """Solve at time ``t`` (steady if ``dt`` is None); updates ``self.state``."""
        c = self.config
        state, prev = self.state, self.prev
        state.t = t
        history = []
        r0 = None
        for it in range(c.max_iter + 1):
            norms = []
            if c.flow:
                rf, (L, f, Nw, fixed, vals) = self.flow_residual(state, prev, t, dt)
                norms.append(np.linalg.norm(rf))
            if c.energy:
                rt, tsys = self.temperature_residual(state, prev, t, dt)
                norms.append(np.linalg.norm(rt))
            rn = float(np.sqrt(sum(v * v for v in norms)))
            history.append(rn)
            if r0 is None:
                r0 = rn
            if rn < c.tol_abs or rn < c.tol_rel * r0 and it > 0:
                return IterationReport(it, history, True)
            if it == c.max_iter:
                break
            if c.flow:
                J, _ = _apply_dirichlet(L + Nw, rf, fixed)
                x = self.dofs.pack_flow(state)
                self.dofs.unpack_flow(x - linear_solve(J, rf), state)
            if c.energy:
                K, fT = self.assemble_temperature(state, prev, t, dt)
                fixedT, valsT = self._strong_temp(t)
                rhs = fT.copy()
                A, _ = _apply_dirichlet(K, rhs, fixedT)
                rhs[fixedT] = valsT
                self.dofs.unpack_temp(linear_solve(A, rhs), state)
            if not np.isfinite(rn):
                break
        raise SolverDivergenceError(f"nonlinear solve did not converge in {c.max_iter} "
                                    f"iterations (t={t})", history)

    def solve_steady(self):
        rep = self.nonlinear_solve(self.config.t0, None)
        self._emit(0, rep)
        return rep

    def bdf1_step(self):
        dt = self.config.dt
        self.prev = self.state.copy()
        self.advance_configuration(dt)
        t = self.prev.t + dt
        rep = self.nonlinear_solve(t, dt)
        self._emit(len(self.step_log), rep)
        return rep

    def run(self):
        if self.config.steady:
            return [self.solve_steady()]
        return [self.bdf1_step() for _ in range(self.config.n_steps)]

    def _emit(self, step, rep):
        line = (f"step {step} t={self.state.t:.6g} iterations={rep.iterations} "
                f"residual={rep.history[-1]:.3e} initial={rep.history[0]:.3e}")
        self.step_log.append(line)
        log.info(line)
        if self.stream is not None:
            print(line, file=self.stream)


def check_measure_conservation(itf, tol=1e-10):
    for side in ("a", "b"):
        cov = itf.covered_measure(side)
        L = itf.facet_measure(side)
        if np.any(cov > L + tol):
            raise GeometryError(f"cut measure exceeds facet measure on side {side}")
