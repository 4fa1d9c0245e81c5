"""Nitsche terms on coupled interfaces and on weakly walled boundary parts.

Interface blocks act on the 24 local flow unknowns ``[side a (12), side b
(12)]`` (or 8 temperature unknowns) of the two parent elements of a cut
quadrature point.  Jumps are ``(.)_a - (.)_b`` and ``n`` is the outward
normal of side a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, ConfigurationError
from .mesh import element_length


@dataclass(frozen=True)
class InterfaceWeights:
    k_i: float | np.ndarray
    k_j: float | np.ndarray

    def average(self, a_i, a_j):
        """``{a} = k_i a_i + k_j a_j``."""
        return self.k_i * a_i + self.k_j * a_j

    def complementary(self, a_i, a_j):
        """``<a> = k_j a_i + k_i a_j``."""
        return self.k_j * a_i + self.k_i * a_j


def weights_from_coefficients(c_i, c_j):
    """Weights that balance a jump in viscosity (or conductivity)."""
    c_i = np.asarray(c_i, dtype=float)
    c_j = np.asarray(c_j, dtype=float)
    if np.any(c_i <= 0.0) or np.any(c_j <= 0.0):
        raise ConfigurationError("interface weighting needs positive coefficients")
    s = c_i + c_j
    return InterfaceWeights(c_j / s, c_i / s)


def jump(a_i, a_j):
    return np.asarray(a_i) - np.asarray(a_j)


def tau_si_flow(eta_i, eta_j, h_i, h_j, alpha):
    return 0.5 * alpha * eta_i * eta_j / (eta_i + eta_j) * (1.0 / h_i + 1.0 / h_j)


tau_si_temp = tau_si_flow


def _traction_operator(dN, n, coef):
    """Rows ``i`` of ``coef * 2 eps(N_B e_j) n`` for all (B, j): (Q, 2, 4, 2)."""
    dn = np.einsum("qbk,qk->qb", dN, n)
    I2 = np.eye(2)
    return coef[:, None, None, None] * (np.einsum("qb,ij->qibj", dn, I2)
                                        + np.einsum("qbi,qj->qibj", dN, n))


def _flow_ops(N, dN, n, flux_coef, avg_coef, sign):
    """Jump, average pressure, average traction and mean ops for one side."""
    Q = len(N)
    J = np.zeros((Q, 2, 4, 3))
    J[:, 0, :, 0] = sign * N
    J[:, 1, :, 1] = sign * N
    P = np.zeros((Q, 4, 3))
    P[:, :, 2] = avg_coef[:, None] * N
    F = np.zeros((Q, 2, 4, 3))
    F[..., :2] = _traction_operator(dN, n, flux_coef)
    Mm = np.abs(J) * 0.5
    return J.reshape(Q, 2, 12), P.reshape(Q, 12), F.reshape(Q, 2, 12), Mm.reshape(Q, 2, 12)


@dataclass
class InterfaceBlock:
    """Stacked local blocks ``(Q, n, n)`` with residual ``K x - f``."""

    matrix: np.ndarray
    rhs: np.ndarray
    dofs: np.ndarray | None = None


def interface_residual_flow(ga, gb, n, w, eta_a, eta_b, un_mean, rho, alpha,
                            u_a=None, u_b=None):
    """Coupling terms at cut quadrature points.

    ``ga``/``gb`` are ``(N, dN, G)`` tuples of the parent elements at the
    points, ``un_mean`` the mean relative normal velocity ``(u - u_mesh).n``.
    Returns stacked 24x24 blocks.
    """
    Na, dNa, Ga = ga
    Nb, dNb, Gb = gb
    if not (len(Na) == len(Nb) == len(w)):
        raise AssemblyError("cut quadrature and parent data have mismatched lengths")
    kw = weights_from_coefficients(eta_a, eta_b)
    h_a = element_length(Ga, n)
    h_b = element_length(Gb, n)
    tau = tau_si_flow(eta_a, eta_b, h_a, h_b, alpha)
    Ja, Pa, Fa, Ma = _flow_ops(Na, dNa, n, kw.k_i * eta_a, kw.k_i, 1.0)
    Jb, Pb, Fb, Mb = _flow_ops(Nb, dNb, n, kw.k_j * eta_b, kw.k_j, -1.0)
    J = np.concatenate([Ja, Jb], axis=-1)
    P = np.concatenate([Pa, Pb], axis=-1)
    F = np.concatenate([Fa, Fb], axis=-1)
    Mm = np.concatenate([Ma, Mb], axis=-1)
    K1 = np.einsum("qiA,qi,qB->qAB", J, n, P)          # ([w], {p} n)
    K2 = -np.einsum("qiA,qiB->qAB", J, F)              # -([w], {2 eta eps(u) n})
    JJ = np.einsum("qiA,qiB->qAB", J, J)
    K = K1 - np.swapaxes(K1, 1, 2) + K2 + np.swapaxes(K2, 1, 2)
    K += tau[:, None, None] * JJ
    K += -rho * un_mean[:, None, None] * np.einsum("qiA,qiB->qAB", Mm, J)
    K += 0.5 * rho * np.abs(un_mean)[:, None, None] * JJ
    K *= w[:, None, None]
    return InterfaceBlock(K, np.zeros(K.shape[:2]))


def interface_residual_temp(ga, gb, n, w, kappa_a, kappa_b, un_mean, rho_cp, alpha):
    Na, dNa, Ga = ga
    Nb, dNb, Gb = gb
    if not (len(Na) == len(Nb) == len(w)):
        raise AssemblyError("cut quadrature and parent data have mismatched lengths")
    kappa_a = np.broadcast_to(np.asarray(kappa_a, float), w.shape)
    kappa_b = np.broadcast_to(np.asarray(kappa_b, float), w.shape)
    kw = weights_from_coefficients(kappa_a, kappa_b)
    tau = tau_si_temp(kappa_a, kappa_b, element_length(Ga, n), element_length(Gb, n), alpha)
    J = np.concatenate([Na, -Nb], axis=-1)
    Mm = 0.5 * np.concatenate([Na, Nb], axis=-1)
    flux = np.concatenate([(kw.k_i * kappa_a)[:, None] * np.einsum("qbk,qk->qb", dNa, n),
                           (kw.k_j * kappa_b)[:, None] * np.einsum("qbk,qk->qb", dNb, n)],
                          axis=-1)
    JJ = np.einsum("qA,qB->qAB", J, J)
    K2 = -np.einsum("qA,qB->qAB", J, flux)
    K = K2 + np.swapaxes(K2, 1, 2) + tau[:, None, None] * JJ
    K += -rho_cp * un_mean[:, None, None] * np.einsum("qA,qB->qAB", Mm, J)
    K += 0.5 * rho_cp * np.abs(un_mean)[:, None, None] * JJ
    K *= w[:, None, None]
    return InterfaceBlock(K, np.zeros(K.shape[:2]))


def weak_dirichlet_flow(g_side, n, w, eta, alpha, g):
    """Weak Dirichlet terms on one side with a signed quadrature.

    ``g_side`` is ``(N, dN, G)`` of the owning elements, ``g`` the prescribed
    velocity at the points.  Returns stacked 12x12 blocks.
    """
    N, dN, G = g_side
    Q = len(w)
    h = element_length(G, n)
    V = np.zeros((Q, 2, 4, 3))
    V[:, 0, :, 0] = N
    V[:, 1, :, 1] = N
    V = V.reshape(Q, 2, 12)
    P = np.zeros((Q, 4, 3))
    P[:, :, 2] = N
    P = P.reshape(Q, 12)
    F = np.zeros((Q, 2, 4, 3))
    F[..., :2] = _traction_operator(dN, n, eta)
    F = F.reshape(Q, 2, 12)
    pen = alpha * eta / h
    K1 = np.einsum("qiA,qi,qB->qAB", V, n, P)
    K2 = -np.einsum("qiA,qiB->qAB", V, F)
    K = K1 - np.swapaxes(K1, 1, 2) + K2 + np.swapaxes(K2, 1, 2)
    K += pen[:, None, None] * np.einsum("qiA,qiB->qAB", V, V)
    f = -P * np.einsum("qi,qi->q", n, g)[:, None]
    f -= np.einsum("qiA,qi->qA", F, g)
    f += pen[:, None] * np.einsum("qiA,qi->qA", V, g)
    return InterfaceBlock(K * w[:, None, None], f * w[:, None])


def weak_dirichlet_temp(g_side, n, w, kappa, alpha, T_g):
    N, dN, G = g_side
    h = element_length(G, n)
    flux = kappa * np.einsum("qbk,qk->qb", dN, n)
    pen = alpha * kappa / h
    K2 = -np.einsum("qA,qB->qAB", N, flux)
    K = K2 + np.swapaxes(K2, 1, 2) + pen[:, None, None] * np.einsum("qA,qB->qAB", N, N)
    f = -flux * T_g[:, None] + pen[:, None] * N * T_g[:, None]
    return InterfaceBlock(K * w[:, None, None], f * w[:, None])
