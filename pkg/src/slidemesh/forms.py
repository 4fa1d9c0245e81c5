"""Element-level stabilized weak forms for flow and temperature.

Local flow unknowns are ordered node-major as ``(u_x, u_y, p)`` per element
node, giving 12x12 element blocks; temperature blocks are 4x4.  Every form
is linear in the unknowns once the advection velocity, viscosity,
stabilization parameters and the recovered stress divergence are frozen at
the previous iterate, so each element returns a matrix ``L`` and a right hand
side ``f`` with residual ``L x - f``.  ``newton`` holds the derivative of the
Galerkin convective term with respect to the advection velocity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, GeometryError
from .material import strain_rate, viscous_dissipation


@dataclass(frozen=True)
class StabilizationConfig:
    alpha: float = 30.0
    tau_variant: str = "metric"
    include_recovery: bool = True
    quad_order: int = 2
    interface_order: int = 3
    c_inv: float = 36.0

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")
        if self.tau_variant not in TAU_VARIANTS:
            raise ValueError(f"unknown tau_variant {self.tau_variant!r}")


def _metric_taus(G, a, rho, eta, cp, kappa, dt, c_inv):
    GG = np.einsum("...ij,...ij->...", G, G)
    aGa = np.einsum("...i,...ij,...j->...", a, G, a)
    transient = 0.0 if dt is None else (2.0 / dt) ** 2
    nu = eta / rho
    den = transient + aGa + c_inv * nu ** 2 * GG
    if np.any(den <= 0.0):
        raise GeometryError("degenerate element: all stabilization contributions vanish")
    tau_mom = 1.0 / (rho * np.sqrt(den))
    # grad-div uses the time-step-free part; with the dt term it grows like
    # 1/dt and locks the velocity for small steps
    steady = den - transient
    if np.any(steady <= 0.0):
        raise GeometryError("degenerate element: all stabilization contributions vanish")
    tau_cont = rho * np.sqrt(steady) / np.trace(G, axis1=-2, axis2=-1)
    chi = kappa / (rho * cp)
    den_t = transient + aGa + c_inv * chi ** 2 * GG
    with np.errstate(divide="ignore"):
        tau_temp = np.where(den_t > 0.0, 1.0 / (rho * cp * np.sqrt(np.maximum(den_t, 1e-300))), 0.0)
    return tau_mom, tau_cont, tau_temp


def _metric_taus_transient_graddiv(G, a, rho, eta, cp, kappa, dt, c_inv):
    """Like ``metric`` but grad-div is the reciprocal of the full ``tau_mom``."""
    tau_mom, _, tau_temp = _metric_taus(G, a, rho, eta, cp, kappa, dt, c_inv)
    return tau_mom, 1.0 / (tau_mom * np.trace(G, axis1=-2, axis2=-1)), tau_temp


TAU_VARIANTS = {"metric": _metric_taus, "metric_transient_graddiv": _metric_taus_transient_graddiv}


def compute_taus(G, u_rel, rho, eta, cp=1.0, kappa=0.0, dt=None, variant="metric", c_inv=36.0):
    """Stabilization parameters ``(tau_mom, tau_cont, tau_temp)``.

    ``G`` is the element metric tensor, ``u_rel`` the advection velocity
    relative to the mesh and ``dt=None`` selects the steady definition.
    Variants are looked up in ``TAU_VARIANTS``; the default ``metric`` leaves
    the time step out of the grad-div parameter.
    """
    return TAU_VARIANTS[variant](np.asarray(G, float), np.asarray(u_rel, float), rho,
                                 np.asarray(eta, float), cp, kappa, dt, c_inv)


def strong_residual_mom(rho, dudt, u_rel, grad_u, grad_p, div_stress, b):
    """Pointwise momentum residual; ``div_stress`` is the viscous part only."""
    conv = np.einsum("...j,...ij->...i", u_rel, grad_u)
    return rho * np.asarray(dudt) + rho * conv + np.asarray(grad_p) - div_stress - rho * np.asarray(b)


def strong_residual_temp(rho, cp, dTdt, u_rel, grad_T, lap_T, kappa, dissipation):
    conv = np.einsum("...i,...i->...", u_rel, grad_T)
    return rho * cp * (np.asarray(dTdt) + conv) - kappa * np.asarray(lap_T) - dissipation


@dataclass
class LocalSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    newton: np.ndarray | None = None

    def residual(self, x_local):
        return np.einsum("...ab,...b->...a", self.matrix, x_local) - self.rhs

    def jacobian(self):
        return self.matrix if self.newton is None else self.matrix + self.newton


def at_points(N, nodal):
    """Interpolate element nodal values (M, 4, ...) at quadrature points."""
    return np.einsum("mqa,ma...->mq...", N, nodal)


def gradient_at_points(dN, nodal):
    """Gradient of a nodal vector field (M,4,2) -> (M,Q,2,2), or scalar -> (M,Q,2)."""
    if nodal.ndim == 3:
        return np.einsum("mqaj,mai->mqij", dN, nodal)
    return np.einsum("mqaj,ma->mqj", dN, nodal)


def _check_finite(*arrays):
    for arr in arrays:
        bad = ~np.isfinite(arr.reshape(arr.shape[0], -1)).all(axis=1)
        if bad.any():
            raise AssemblyError(f"non-finite values in element(s) {np.flatnonzero(bad)[:10].tolist()}")


def element_residual_flow(geom, u, p, u_prev, u_mesh, eta, params, stab, dt=None,
                          body_force=None, div_stress=None):
    """Galerkin, SUPG, PSPG and grad-div terms of all elements of one mesh.

    ``u``, ``u_prev``, ``u_mesh`` are element-nodal arrays (M, 4, 2), ``p`` is
    (M, 4) and ``eta`` the lagged viscosity at quadrature points (M, Q).
    ``body_force`` and ``div_stress`` are given at quadrature points.
    """
    _check_finite(u, p, eta)
    N, dN, W = geom.N, geom.dN, geom.W
    M, Q = W.shape
    rho = params.rho
    m = 0.0 if dt is None else rho / dt
    a = at_points(N, u - u_mesh)
    grad_u = gradient_at_points(dN, u)
    adv = np.einsum("mqi,mqai->mqa", a, dN)
    tau_m, tau_c, _ = compute_taus(geom.G, a, rho, eta, params.cp, params.kappa, dt,
                                   stab.tau_variant, stab.c_inv)
    b = np.broadcast_to(params.b if body_force is None else body_force, (M, Q, 2))
    divs = np.zeros((M, Q, 2)) if div_stress is None else div_stress
    un = at_points(N, u_prev)

    trial = m * N + rho * adv                     # transient + convection acting on u_B
    supg = rho * adv * tau_m[..., None]           # SUPG weight of test function w_A
    I2 = np.eye(2)

    Kuu = np.einsum("mq,mqa,mqb,ij->maibj", W, N + supg, trial, I2)
    Kuu += np.einsum("mq,mq,mqak,mqbk,ij->maibj", W, eta, dN, dN, I2)
    Kuu += np.einsum("mq,mq,mqaj,mqbi->maibj", W, eta, dN, dN)
    Kuu += np.einsum("mq,mq,mqai,mqbj->maibj", W, tau_c, dN, dN)
    Kup = np.einsum("mq,mqai,mqb->maib", W, -dN, N)
    Kup += np.einsum("mq,mqa,mqbi->maib", W, supg, dN)
    Kpu = np.einsum("mq,mqa,mqbj->mabj", W, N, dN)
    Kpu += np.einsum("mq,mq,mqaj,mqb->mabj", W, tau_m, dN, trial)
    Kpp = np.einsum("mq,mq,mqak,mqbk->mab", W, tau_m, dN, dN)

    L = np.zeros((M, 4, 3, 4, 3))
    L[:, :, :2, :, :2] = Kuu
    L[:, :, :2, :, 2] = Kup
    L[:, :, 2, :, :2] = Kpu
    L[:, :, 2, :, 2] = Kpp

    Nw = np.zeros((M, 4, 3, 4, 3))
    Nw[:, :, :2, :, :2] = np.einsum("mq,mqa,mqij,mqb->maibj", W * rho, N, grad_u, N)

    F = rho * b + m * un + divs
    f = np.zeros((M, 4, 3))
    f[:, :, :2] = np.einsum("mq,mqa,mqi->mai", W, N, rho * b + m * un)
    f[:, :, :2] += np.einsum("mq,mqa,mqi->mai", W, supg, F)
    f[:, :, 2] = np.einsum("mq,mq,mqai,mqi->ma", W, tau_m, dN, F)
    return LocalSystem(L.reshape(M, 12, 12), f.reshape(M, 12), Nw.reshape(M, 12, 12))


def element_residual_temp(geom, T_prev, u, u_mesh, eta, params, stab, dt=None):
    """Galerkin + SUPG temperature terms with viscous dissipation as a source."""
    _check_finite(u, eta)
    N, dN, W = geom.N, geom.dN, geom.W
    rho, cp, kappa = params.rho, params.cp, params.kappa
    rc = rho * cp
    m = 0.0 if dt is None else rc / dt
    a = at_points(N, u - u_mesh)
    adv = np.einsum("mqi,mqai->mqa", a, dN)
    _, _, tau_t = compute_taus(geom.G, a, rho, eta, cp, kappa, dt, stab.tau_variant, stab.c_inv)
    phi = viscous_dissipation(gradient_at_points(dN, u), eta)
    Tn = at_points(N, T_prev) if dt is not None else np.zeros_like(W)
    test = N + rc * adv * tau_t[..., None]
    K = np.einsum("mq,mqa,mqb->mab", W, test, m * N + rc * adv)
    K += kappa * np.einsum("mq,mqak,mqbk->mab", W, dN, dN)
    f = np.einsum("mq,mqa,mq->ma", W, test, m * Tn + phi)
    return LocalSystem(K, f)


@dataclass
class RecoveredStress:
    """Nodal viscous stress ``2 eta eps(u)`` from a lumped L2 projection."""

    nodal: np.ndarray
    enabled: bool = True

    def divergence(self, geom, elements):
        if not self.enabled:
            return np.zeros(geom.W.shape + (2,))
        s = self.nodal[elements]
        return np.einsum("mqak,maik->mqi", geom.dN, s)


def recover_stress_divergence(mesh, geom, u_nodes, eta, enabled=True):
    """Project quadrature-point viscous stress to nodes (lumped mass)."""
    if not enabled:
        return RecoveredStress(np.zeros((mesh.n_nodes, 2, 2)), enabled=False)
    el = mesh.elements
    grad_u = gradient_at_points(geom.dN, u_nodes[el])
    sig = 2.0 * eta[..., None, None] * strain_rate(grad_u)
    num = np.zeros((mesh.n_nodes, 2, 2))
    den = np.zeros(mesh.n_nodes)
    np.add.at(num, el, np.einsum("mq,mqa,mqij->maij", geom.W, geom.N, sig))
    np.add.at(den, el, np.einsum("mq,mqa->ma", geom.W, geom.N))
    return RecoveredStress(num / den[:, None, None])
