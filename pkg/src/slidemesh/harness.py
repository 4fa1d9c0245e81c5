"""Analytic solutions, error norms and the registered verification cases."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cut import CircleParameterization, LineParameterization, uncovered_intervals
from .forms import StabilizationConfig
from .material import Newtonian, PhysicalParams
from .mesh import (ReferenceElement, build_annulus_mesh, build_structured_quad_mesh,
                   edge_reference_points, gauss_rule)
from .solver import (BoundaryCondition, InterfaceSpec, PressureAnchor, RigidRotation,
                     RunConfig, Solver)

log = logging.getLogger("slidemesh")

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Taylor-Green vortex
# ---------------------------------------------------------------------------

def taylor_green(x, t, eta, rho=1.0):
    """Velocity (P, 2) and pressure (P,) of the decaying Taylor-Green vortex."""
    x = np.asarray(x, dtype=float)
    X, Y = x[..., 0], x[..., 1]
    nu = eta / rho
    e1 = np.exp(-8.0 * np.pi ** 2 * nu * t)
    e2 = np.exp(-16.0 * np.pi ** 2 * nu * t)
    u = np.stack([-np.sin(TWO_PI * Y) * np.cos(TWO_PI * X) * e1,
                  np.sin(TWO_PI * X) * np.cos(TWO_PI * Y) * e1], axis=-1)
    p = -0.25 * rho * (np.cos(2 * TWO_PI * X) + np.cos(2 * TWO_PI * Y)) * e2
    return u, p


def taylor_green_derivatives(x, t, eta, rho=1.0):
    """Analytic velocity gradient, velocity Laplacian and pressure gradient."""
    x = np.asarray(x, dtype=float)
    X, Y = x[..., 0], x[..., 1]
    k = TWO_PI
    e1 = np.exp(-8.0 * np.pi ** 2 * eta / rho * t)
    e2 = np.exp(-16.0 * np.pi ** 2 * eta / rho * t)
    grad = np.empty(x.shape[:-1] + (2, 2))
    grad[..., 0, 0] = k * np.sin(k * Y) * np.sin(k * X) * e1
    grad[..., 0, 1] = -k * np.cos(k * Y) * np.cos(k * X) * e1
    grad[..., 1, 0] = k * np.cos(k * X) * np.cos(k * Y) * e1
    grad[..., 1, 1] = -k * np.sin(k * X) * np.sin(k * Y) * e1
    u, _ = taylor_green(x, t, eta, rho)
    lap = -2.0 * k ** 2 * u
    gp = 0.5 * rho * k * e2 * np.stack([np.sin(2 * k * X), np.sin(2 * k * Y)], axis=-1)
    return grad, lap, gp


def tg_steady_body_force(x, eta, rho=1.0):
    """Body force making the t=0 Taylor-Green fields a steady solution.

    Equal to minus the time derivative of the vortex velocity at t=0.
    """
    u, _ = taylor_green(x, 0.0, eta, rho)
    return 8.0 * np.pi ** 2 * eta / rho * u


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def l2_domain_error(meshes, fields, exact, order=4):
    """L2 norm over all subdomains of ``field_h - exact``.

    ``fields`` holds nodal arrays per mesh, ``exact`` maps points (..., 2) to
    matching values.  Integration uses a tensor Gauss rule of ``order`` points.
    """
    ref = ReferenceElement(order)
    total = 0.0
    for m, f in zip(meshes, fields):
        M, Q = m.n_elements, len(ref.weights)
        el = np.repeat(np.arange(M), Q).reshape(M, Q)
        x, N, _, det, _ = m.geometry(el, np.broadcast_to(ref.points, (M, Q, 2)))
        fh = np.einsum("mqa,ma...->mq...", N, np.asarray(f)[m.elements])
        d = fh - np.asarray(exact(x))
        d2 = d ** 2 if d.ndim == 2 else (d ** 2).sum(axis=-1)
        total += float(np.sum(d2 * det * ref.weights))
    return float(np.sqrt(total))


def interface_values(itf, field_a, field_b):
    """Values of nodal fields from both parents at all cut quadrature points."""
    pk = itf.packed()
    ma, mb = itf.side_a.mesh, itf.side_b.mesh
    _, Na, _, _, _ = ma.geometry(pk["element_a"], pk["xi_a"])
    _, Nb, _, _, _ = mb.geometry(pk["element_b"], pk["xi_b"])
    va = np.einsum("qa,qa...->q...", Na, np.asarray(field_a)[ma.elements[pk["element_a"]]])
    vb = np.einsum("qa,qa...->q...", Nb, np.asarray(field_b)[mb.elements[pk["element_b"]]])
    return va, vb, pk["weights"]


def interface_jump_norm(interfaces, specs, state):
    """L2 norms of the velocity and pressure jumps over all coupled interfaces."""
    ju = jp = 0.0
    for itf, spec in zip(interfaces, specs):
        ua, ub, w = interface_values(itf, state.u[spec.mesh_a], state.u[spec.mesh_b])
        pa, pb, _ = interface_values(itf, state.p[spec.mesh_a], state.p[spec.mesh_b])
        ju += float(np.sum(w * ((ua - ub) ** 2).sum(axis=-1)))
        jp += float(np.sum(w * (pa - pb) ** 2))
    return float(np.sqrt(ju)), float(np.sqrt(jp))


def interface_temperature_jump(interfaces, specs, state):
    tot = 0.0
    for itf, spec in zip(interfaces, specs):
        ta, tb, w = interface_values(itf, state.T[spec.mesh_a], state.T[spec.mesh_b])
        tot += float(np.sum(w * (ta - tb) ** 2))
    return float(np.sqrt(tot))


def fit_rate(h, err, last=3):
    """Least-squares slope of log(err) over log(h) using the last levels.

    Returns ``(rate, residual)`` where residual is the RMS misfit in log space.
    """
    h = np.asarray(h, dtype=float)[-last:]
    e = np.asarray(err, dtype=float)[-last:]
    if len(h) < 2 or np.any(e <= 0.0):
        return float("nan"), float("nan")
    A = np.column_stack([np.log(h), np.ones_like(h)])
    coef, *_ = np.linalg.lstsq(A, np.log(e), rcond=None)
    res = np.log(e) - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(res ** 2)))


@dataclass
class ErrorReport:
    case: str
    rows: list = field(default_factory=list)
    columns: tuple = ("h", "err_u_L2", "err_p_L2", "jump_u_L2", "jump_p_L2")
    extra: dict = field(default_factory=dict)

    def column(self, name):
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def rate(self, name, last=3):
        return fit_rate(self.column("h"), self.column(name), last)

    def rates(self, last=3):
        return {name: self.rate(name, last) for name in self.columns[1:]}

    @property
    def h(self):
        return self.column("h")


# ---------------------------------------------------------------------------
# case builders
# ---------------------------------------------------------------------------

QUADRANTS = [(0.0, 0.0, 0.5, 0.5), (0.5, 0.0, 1.0, 0.5), (0.0, 0.5, 0.5, 1.0),
             (0.5, 0.5, 1.0, 1.0)]


def _quadrant_tags(k):
    """Tag rule: outer boundary 'outer', internal sides named after interfaces."""
    x0, y0, x1, y1 = QUADRANTS[k]

    def rule(side, mid):
        if side == "left" and x0 == 0.0 or side == "right" and x1 == 1.0 \
                or side == "bottom" and y0 == 0.0 or side == "top" and y1 == 1.0:
            return "outer"
        if side in ("left", "right"):
            return "if_v_lower" if y0 == 0.0 else "if_v_upper"
        return "if_h_left" if x0 == 0.0 else "if_h_right"
    return rule


def taylor_green_config(level=1, convective=False, alpha=30.0, reference=False, n0=4, m0=3,
                        include_recovery=None, steps=10, dt=0.00025, eta=None, **overrides):
    """Four-quadrant Taylor-Green setup (or a single reference mesh).

    Diagonal quadrants get ``n0 * 2**(level-1)`` elements per direction and the
    off-diagonal ones ``m0 * 2**(level-1)``.
    """
    if eta is None:
        eta = 1e-4 if convective else 0.1
    if include_recovery is None:
        include_recovery = not convective
    f = 2 ** (level - 1)
    if reference:
        meshes = [build_structured_quad_mesh((0, 0, 1, 1), 8 * f, 8 * f, 0,
                                             lambda s, m: "outer")]
        interfaces = []
        bcs_extra = {}
    else:
        counts = [n0 * f, m0 * f, m0 * f, n0 * f]
        meshes = [build_structured_quad_mesh(QUADRANTS[k], counts[k], counts[k], k,
                                             _quadrant_tags(k)) for k in range(4)]
        vert = LineParameterization((0.5, 0.0), (0.0, 1.0))
        horz = LineParameterization((0.0, 0.5), (1.0, 0.0))
        interfaces = [InterfaceSpec(0, "if_v_lower", 1, "if_v_lower", vert),
                      InterfaceSpec(2, "if_v_upper", 3, "if_v_upper", vert),
                      InterfaceSpec(0, "if_h_left", 2, "if_h_left", horz),
                      InterfaceSpec(1, "if_h_right", 3, "if_h_right", horz)]
        bcs_extra = {t: BoundaryCondition(flow="interface")
                     for t in ("if_v_lower", "if_v_upper", "if_h_left", "if_h_right")}
    exact_u = lambda x, t: taylor_green(x, t, eta)[0]  # noqa: E731
    exact_p = lambda x, t: taylor_green(x, t, eta)[1]  # noqa: E731
    bcs = {"outer": BoundaryCondition(flow="dirichlet", velocity=exact_u), **bcs_extra}
    stab = StabilizationConfig(alpha=alpha, include_recovery=include_recovery)
    cfg = dict(meshes=meshes, bcs=bcs, material=Newtonian(eta), params=PhysicalParams(rho=1.0),
               stabilization=stab, interfaces=interfaces,
               pressure_anchor=PressureAnchor(0, (0.0, 0.0), exact_p))
    if convective:
        cfg.update(steady=False, dt=dt, n_steps=steps, initial_velocity=exact_u,
                   initial_pressure=exact_p)
    else:
        cfg.update(steady=True,
                   body_force=lambda x, t: tg_steady_body_force(x, eta))
    cfg.update(overrides)
    return RunConfig(**cfg)


def min_edge_length(meshes):
    return min(m.min_edge_length() for m in meshes)


def run_taylor_green(level, convective=False, **kw):
    cfg = taylor_green_config(level, convective, **kw)
    solver = Solver(cfg)
    solver.run()
    eta = cfg.material.eta
    t = solver.state.t
    eu = l2_domain_error(solver.meshes, solver.state.u, lambda x: taylor_green(x, t, eta)[0])
    ep = l2_domain_error(solver.meshes, solver.state.p, lambda x: taylor_green(x, t, eta)[1])
    ju, jp = interface_jump_norm(solver.interfaces, cfg.interfaces, solver.state)
    return (min_edge_length(solver.meshes), eu, ep, ju, jp), solver


# --- two-material conduction ------------------------------------------------

def conduction_exact(kappa_a, kappa_b, amp=0.5, y_i=0.5):
    """Piecewise harmonic temperature with continuous value and flux at y = y_i.

    Lower material ``kappa_a`` on [0, y_i] with T=0 at y=0; insulated sides at
    x=0 and x=1.  With ``amp=0`` the field is piecewise linear and the
    interface temperature follows from series thermal resistance.
    """
    # linear part: T(0)=0, T(1)=1 for the series resistance
    A_a = 1.0 / (y_i + kappa_a / kappa_b * (1.0 - y_i))
    A_b = kappa_a / kappa_b * A_a
    T_i = A_a * y_i
    c = amp
    s, ch = np.sinh(np.pi * y_i), np.cosh(np.pi * y_i)

    def T(x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        lower = A_a * Y + c * np.cos(np.pi * X) * np.sinh(np.pi * Y)
        d = Y - y_i
        upper = T_i + A_b * d + c * np.cos(np.pi * X) * (
            s * np.cosh(np.pi * d) + kappa_a / kappa_b * ch * np.sinh(np.pi * d))
        return np.where(Y <= y_i, lower, upper)

    T.interface_temperature = T_i
    return T


def conduction_config(level=1, kappa_a=2.0, kappa_b=1.0, amp=0.5, alpha=30.0, n0=4, m0=3):
    f = 2 ** (level - 1)
    lower = build_structured_quad_mesh((0, 0, 1, 0.5), n0 * f, n0 * f // 2 or 1, 0,
                                       {"top": "iface", "bottom": "wall_lo", "left": "side",
                                        "right": "side"})
    upper = build_structured_quad_mesh((0, 0.5, 1, 1), m0 * f, max(1, (m0 * f + 1) // 2), 1,
                                       {"bottom": "iface", "top": "wall_hi", "left": "side",
                                        "right": "side"})
    exact = conduction_exact(kappa_a, kappa_b, amp)
    bcs = {"iface": BoundaryCondition(flow="interface"),
           "wall_lo": BoundaryCondition(flow="dirichlet", thermal="dirichlet",
                                        temperature=lambda x, t: exact(x)),
           "wall_hi": BoundaryCondition(flow="dirichlet", thermal="dirichlet",
                                        temperature=lambda x, t: exact(x)),
           "side": BoundaryCondition(flow="dirichlet")}
    cfg = RunConfig(meshes=[lower, upper], bcs=bcs, material=Newtonian(1.0),
                    params=PhysicalParams(kappa=kappa_a),
                    subdomain_params={1: PhysicalParams(kappa=kappa_b)},
                    stabilization=StabilizationConfig(alpha=alpha, include_recovery=False),
                    interfaces=[InterfaceSpec(0, "iface", 1, "iface",
                                              LineParameterization((0.0, 0.5), (1.0, 0.0)))],
                    flow=False, energy=True)
    return cfg, exact


def two_material_conduction_case(kappa_i=2.0, kappa_j=1.0, levels=5, amp=0.5, alpha=30.0):
    rep = ErrorReport("conduction", columns=("h", "err_T_L2", "jump_T_L2"))
    for lv in range(1, levels + 1):
        cfg, exact = conduction_config(lv, kappa_i, kappa_j, amp, alpha)
        s = Solver(cfg)
        s.run()
        eT = l2_domain_error(s.meshes, s.state.T, exact)
        jT = interface_temperature_jump(s.interfaces, cfg.interfaces, s.state)
        rep.rows.append((min_edge_length(s.meshes), eT, jT))
    return rep


# --- partially overlapping channel -----------------------------------------

def poiseuille(y, y0, H, umax=1.0):
    s = (np.asarray(y) - y0) / H
    return 4.0 * umax * s * (1.0 - s)


def outflow_traction(x, y0, H, eta, umax=1.0):
    """Traction of developed Poiseuille flow at zero pressure on an outlet facing +x."""
    s = (x[:, 1] - y0) / H
    return np.column_stack([np.zeros(len(x)), eta * 4.0 * umax * (1.0 - 2.0 * s) / H])


def channel_config(level=1, offset=0.3, H=1.0, L=1.0, eta=1.0, rho=1.0, alpha=30.0,
                   n0=4, m0=3):
    """Two channels meeting at x=L; the right one is shifted up by ``offset``."""
    f = 2 ** (level - 1)
    left = build_structured_quad_mesh((0, 0, L, H), n0 * f, n0 * f, 0,
                                      {"left": "inflow", "right": "iface_l", "top": "wall",
                                       "bottom": "wall"})
    right = build_structured_quad_mesh((L, offset, 2 * L, offset + H), m0 * f, m0 * f, 1,
                                       {"left": "iface_r", "right": "outflow", "top": "wall",
                                        "bottom": "wall"})
    inflow = lambda x, t: np.column_stack([poiseuille(x[:, 1], 0.0, H),  # noqa: E731
                                           np.zeros(len(x))])
    bcs = {"inflow": BoundaryCondition(flow="dirichlet", velocity=inflow),
           "wall": BoundaryCondition(flow="dirichlet"),
           "outflow": BoundaryCondition(flow="neumann", traction=lambda x, t: outflow_traction(
               x, offset, H, eta)),
           "iface_l": BoundaryCondition(flow="interface"),
           "iface_r": BoundaryCondition(flow="interface")}
    return RunConfig(meshes=[left, right], bcs=bcs, material=Newtonian(eta),
                     params=PhysicalParams(rho=rho),
                     stabilization=StabilizationConfig(alpha=alpha, include_recovery=True),
                     interfaces=[InterfaceSpec(0, "iface_l", 1, "iface_r",
                                               LineParameterization((L, 0.0), (0.0, 1.0)))])


def boundary_flux(solver, k, tag, order=4):
    """Integral of u.n over facets of a tag (outward normal)."""
    m = solver.meshes[k]
    fids = m.facets_with_tag(tag)
    t, w = gauss_rule(order)
    normals, lengths = m.facet_normals(fids)
    el = np.repeat(m.facets[fids, 0], len(t))
    xi = edge_reference_points(np.repeat(m.facets[fids, 1], len(t)), np.tile(t, len(fids)))
    _, N, _, _, _ = m.geometry(el, xi)
    u = np.einsum("qa,qai->qi", N, solver.state.u[k][m.elements[el]])
    un = np.einsum("qi,qi->q", u, np.repeat(normals, len(t), axis=0))
    return float(np.sum(un * (lengths[:, None] * w).ravel()))


def strip_leakage(solver, itf_index=0, pieces=8, order=8, exclude=(), radius=0.0):
    """Leakage through the uncovered (weakly walled) interface strips.

    Returns ``(l2, rate)``: the L2 norm of ``u.n`` and the volumetric leakage
    rate ``integral |u.n| ds`` over the strips.  Each uncovered interval is
    split into ``pieces`` sub-intervals to resolve sign changes of ``u.n``.
    Points closer than ``radius`` to any point in ``exclude`` are skipped.
    """
    itf = solver.interfaces[itf_index]
    spec = solver.config.interfaces[itf_index]
    tq, wq = gauss_rule(order)
    l2 = rate = 0.0
    for side, k in (("a", spec.mesh_a), ("b", spec.mesh_b)):
        m = solver.meshes[k]
        for f, gaps in uncovered_intervals(itf, side).items():
            normal, length = (v[0] for v in m.facet_normals([f]))
            e, edge = m.facets[f]
            for t0, t1 in gaps:
                edges = np.linspace(t0, t1, pieces + 1)
                t = (edges[:-1, None] + np.outer(np.diff(edges), tq)).ravel()
                w = np.outer(np.diff(edges), wq).ravel() * length
                x, N, _, _, _ = m.geometry(np.full(len(t), e),
                                           edge_reference_points(np.full(len(t), edge), t))
                if len(exclude):
                    d = np.linalg.norm(x[:, None, :] - np.asarray(exclude)[None], axis=2)
                    w = np.where(d.min(axis=1) > radius, w, 0.0)
                u = N @ solver.state.u[k][m.elements[e]]
                un = u @ normal
                l2 += float(np.sum(w * un ** 2))
                rate += float(np.sum(w * np.abs(un)))
    return float(np.sqrt(l2)), rate


def poiseuille_error(solver, offset=0.0, H=1.0):
    """Relative L2 error of the velocity against the Poiseuille profile in both channels."""
    y0 = [0.0, offset]
    num = den = 0.0
    for k, m in enumerate(solver.meshes):
        ex = lambda x, k=k: np.stack([poiseuille(x[..., 1], y0[k], H),  # noqa: E731
                                      np.zeros(x.shape[:-1])], axis=-1)
        num += l2_domain_error([m], [solver.state.u[k]], ex) ** 2
        den += l2_domain_error([m], [np.zeros_like(solver.state.u[k])], ex) ** 2
    return float(np.sqrt(num / den))


def partially_overlapping_channel_case(offset=0.3, levels=4, alpha=30.0, **kw):
    rep = ErrorReport("channel", columns=("h", "mass_imbalance", "strip_leak_L2",
                                          "strip_leak_rate", "jump_u_L2", "jump_p_L2"))
    for lv in range(1, levels + 1):
        cfg = channel_config(lv, offset, alpha=alpha, **kw)
        s = Solver(cfg)
        s.run()
        q_in = -boundary_flux(s, 0, "inflow")
        q_out = boundary_flux(s, 1, "outflow")
        ju, jp = interface_jump_norm(s.interfaces, cfg.interfaces, s.state)
        rep.rows.append((min_edge_length(s.meshes), abs(q_in - q_out) / abs(q_in),
                         *strip_leakage(s), ju, jp))
        rep.extra.setdefault("inflow", []).append(q_in)
        rep.extra.setdefault("outflow", []).append(q_out)
    return rep


# --- rotating annulus -------------------------------------------------------

def couette_profile(r, r1, r2, omega1, omega2=0.0):
    """Azimuthal velocity between cylinders rotating at omega1 (inner), omega2."""
    A = (omega2 * r2 ** 2 - omega1 * r1 ** 2) / (r2 ** 2 - r1 ** 2)
    B = (omega1 - omega2) * r1 ** 2 * r2 ** 2 / (r2 ** 2 - r1 ** 2)
    return A * r + B / r


def annulus_config(level=1, omega=1.0, r1=0.5, r_mid=0.75, r2=1.0, eta=1.0, rho=1.0,
                   alpha=30.0, steps_per_turn=64, n_theta0=24, n_r0=2, theta_offset=0.0,
                   from_rest=True):
    """Rotating inner ring coupled to a fixed outer ring on the circle r_mid.

    The inner wall rotates with the inner mesh; the outer wall is at rest.
    The fluid starts at rest unless ``from_rest`` is false, in which case it
    starts from the Couette profile.
    """
    f = 2 ** (level - 1)
    nt_in, nt_out = n_theta0 * f, (n_theta0 * 4 // 3) * f
    inner = build_annulus_mesh(r1, r_mid, nt_in, n_r0 * f, 0, theta0=theta_offset,
                               tag_rules={"inner": "rotor", "outer": "slide_in"})
    outer = build_annulus_mesh(r_mid, r2, nt_out, n_r0 * f, 1,
                               tag_rules={"inner": "slide_out", "outer": "stator"})
    rigid = lambda x, t: omega * np.column_stack([-x[:, 1], x[:, 0]])  # noqa: E731
    bcs = {"rotor": BoundaryCondition(flow="dirichlet", velocity=rigid),
           "stator": BoundaryCondition(flow="dirichlet"),
           "slide_in": BoundaryCondition(flow="interface"),
           "slide_out": BoundaryCondition(flow="interface")}
    dt = TWO_PI / (abs(omega) * steps_per_turn) if omega else 0.1
    inner.node_velocity = rigid(inner.nodes, 0.0)
    return RunConfig(meshes=[inner, outer], bcs=bcs, material=Newtonian(eta),
                     params=PhysicalParams(rho=rho),
                     stabilization=StabilizationConfig(alpha=alpha, include_recovery=False),
                     interfaces=[InterfaceSpec(0, "slide_in", 1, "slide_out",
                                               CircleParameterization((0.0, 0.0), r_mid))],
                     motions={0: RigidRotation((0.0, 0.0), omega)},
                     pressure_anchor=PressureAnchor(1, (r2, 0.0), 0.0),
                     steady=False, dt=dt, n_steps=steps_per_turn,
                     initial_velocity=None if from_rest else
                     (lambda x, t: couette_velocity(x, r1, r2, omega)))


def couette_velocity(x, r1, r2, omega):
    r = np.linalg.norm(x, axis=-1)
    ut = couette_profile(r, r1, r2, omega)
    return np.stack([-ut * x[..., 1] / r, ut * x[..., 0] / r], axis=-1)


def rotating_annulus_case(omega=1.0, steps=None, level=2, samples=8, **kw):
    """Rotate the inner ring one full turn; sample errors every 1/``samples`` turn."""
    cfg = annulus_config(level, omega, **kw)
    if steps is not None:
        cfg.n_steps = steps
    s = Solver(cfg)
    r1, r2 = kw.get("r1", 0.5), kw.get("r2", 1.0)
    per = max(1, cfg.n_steps // samples)
    rows = []
    exact = lambda x: couette_velocity(x, r1, r2, omega)  # noqa: E731
    norm_exact = l2_domain_error(s.meshes, [np.zeros_like(u) for u in s.state.u], exact)
    for k in range(cfg.n_steps):
        s.bdf1_step()
        if (k + 1) % per == 0:
            err = l2_domain_error(s.meshes, s.state.u, exact)
            ju, jp = interface_jump_norm(s.interfaces, cfg.interfaces, s.state)
            rows.append((s.state.t, err / max(norm_exact, 1e-300), ju, jp))
    return ErrorReport("annulus", rows=rows, columns=("t", "rel_err_u_L2", "jump_u_L2",
                                                      "jump_p_L2")), s


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

CASES = ("tg-steady", "tg-convective", "tg-reference", "conduction", "channel", "annulus")


def run_convergence_study(case, levels=5, **overrides):
    """Run a registered case over refinement levels 1..levels."""
    start = time.perf_counter()
    if case in ("tg-steady", "tg-convective", "tg-reference"):
        rep = ErrorReport(case)
        conv = case == "tg-convective" or overrides.pop("convective", False)
        ref = case == "tg-reference"
        for lv in range(1, levels + 1):
            row, _ = run_taylor_green(lv, conv, reference=ref, **overrides)
            rep.rows.append(row)
            log.info("%s level %d: %s", case, lv, row)
    elif case == "conduction":
        rep = two_material_conduction_case(levels=levels, **overrides)
    elif case == "channel":
        rep = partially_overlapping_channel_case(levels=levels, **overrides)
    elif case == "annulus":
        rep, _ = rotating_annulus_case(**overrides)
    else:
        raise KeyError(f"unknown case {case!r}; known: {', '.join(CASES)}")
    rep.extra["runtime_s"] = time.perf_counter() - start
    return rep


# --- matching interface vs merged mesh --------------------------------------

def affine_flow(A, c, grad_p, p0=0.0, rho=1.0):
    """Exact Navier-Stokes data for a divergence-free affine velocity ``A x + c``.

    Returns ``(velocity, pressure, body_force)`` callables of ``(x, t)``.
    ``A`` must be trace free.
    """
    A = np.asarray(A, float)
    c = np.asarray(c, float)
    g = np.asarray(grad_p, float)
    if abs(np.trace(A)) > 1e-12 * max(1.0, np.abs(A).max()):
        raise ValueError("velocity gradient must be trace free")

    def u(x, t=0.0):
        return np.asarray(x) @ A.T + c

    def p(x, t=0.0):
        return p0 + np.asarray(x) @ g

    def b(x, t=0.0):
        return u(x) @ A.T + g / rho
    return u, p, b


def matching_split_config(n=4, merged=False, alpha=30.0, eta=0.1, rho=1.0, exact=None,
                          steady=True, include_recovery=True):
    """Unit square as one mesh or as two node-matching halves split at x = 0.5.

    ``exact`` is ``(velocity, pressure, body_force)``; by default the steady
    Taylor-Green data.  Velocity is prescribed strongly on the outer boundary
    and pressure is anchored at the origin.
    """
    if exact is None:
        exact = (lambda x, t: taylor_green(x, 0.0, eta, rho)[0],
                 lambda x, t: taylor_green(x, 0.0, eta, rho)[1],
                 lambda x, t: tg_steady_body_force(x, eta, rho))
    u_ex, p_ex, b_ex = exact
    if merged:
        meshes = [build_structured_quad_mesh((0, 0, 1, 1), 2 * n, 2 * n, 0, lambda s, m: "outer")]
        interfaces, extra = [], {}
    else:
        meshes = [build_structured_quad_mesh((0, 0, 0.5, 1), n, 2 * n, 0,
                                             {"right": "iface"} | {s: "outer" for s in
                                                                   ("bottom", "top", "left")}),
                  build_structured_quad_mesh((0.5, 0, 1, 1), n, 2 * n, 1,
                                             {"left": "iface"} | {s: "outer" for s in
                                                                  ("bottom", "top", "right")})]
        interfaces = [InterfaceSpec(0, "iface", 1, "iface",
                                    LineParameterization((0.5, 0.0), (0.0, 1.0)))]
        extra = {"iface": BoundaryCondition(flow="interface")}
    bcs = {"outer": BoundaryCondition(flow="dirichlet", velocity=u_ex), **extra}
    return RunConfig(meshes=meshes, bcs=bcs, material=Newtonian(eta),
                     params=PhysicalParams(rho=rho),
                     stabilization=StabilizationConfig(alpha=alpha,
                                                       include_recovery=include_recovery),
                     interfaces=interfaces, body_force=b_ex,
                     pressure_anchor=PressureAnchor(0, (0.0, 0.0), p_ex), steady=steady)


def merged_difference(n=4, alpha=30.0, **kw):
    """Relative L2 velocity difference between split (Nitsche) and merged solutions.

    The difference is absolute when the merged velocity is identically zero.
    Both solutions are sampled on the merged mesh's elements, which are unions
    of the split meshes' elements.
    """
    split = Solver(matching_split_config(n, False, alpha, **kw))
    split.run()
    whole = Solver(matching_split_config(n, True, alpha, **kw))
    whole.run()
    m = whole.meshes[0]
    # merged node values, taken from the owning half (interface nodes from side a)
    u_split = np.empty_like(whole.state.u[0])
    for k in (1, 0):
        half = split.meshes[k]
        idx = _match_nodes(m.nodes, half.nodes)
        ok = idx >= 0
        u_split[ok] = split.state.u[k][idx[ok]]
    diff = l2_domain_error([m], [u_split - whole.state.u[0]], lambda x: np.zeros(x.shape))
    ref = l2_domain_error([m], [whole.state.u[0]], lambda x: np.zeros(x.shape))
    jumps = interface_jump_norm(split.interfaces, split.config.interfaces, split.state)
    return (diff / ref if ref > 0.0 else diff), jumps, split, whole


def _match_nodes(target, source, tol=1e-12):
    """Index into ``source`` of each ``target`` point, or -1."""
    d, idx = cKDTree(source).query(target)
    return np.where(d <= tol, idx, -1)
