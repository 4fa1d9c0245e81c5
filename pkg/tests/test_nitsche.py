import numpy as np
import pytest
from hypothesis import given, strategies as st

from slidemesh.errors import AssemblyError, ConfigurationError
from slidemesh.harness import l2_domain_error, taylor_green, tg_steady_body_force
from slidemesh.material import Newtonian, PhysicalParams
from slidemesh.mesh import build_structured_quad_mesh, element_length, gauss_rule
from slidemesh.nitsche import (interface_residual_flow, interface_residual_temp, jump,
                               tau_si_flow, weak_dirichlet_flow, weak_dirichlet_temp,
                               weights_from_coefficients)
from slidemesh.solver import BoundaryCondition, PressureAnchor, RunConfig, Solver

finite = st.floats(-1e3, 1e3, allow_nan=False)
positive = st.floats(1e-3, 1e3)


def test_weight_examples():
    w = weights_from_coefficients(1.0, 1.0)
    assert (w.k_i, w.k_j) == (0.5, 0.5)
    w = weights_from_coefficients(3.0, 1.0)
    assert (w.k_i, w.k_j) == (0.25, 0.75)
    assert w.average(4.0, 8.0) == pytest.approx(7.0)
    with pytest.raises(ConfigurationError):
        weights_from_coefficients(0.0, 1.0)


@given(positive, positive, finite, finite, finite, finite)
def test_jump_product_identity(ci, cj, ai, aj, bi, bj):
    w = weights_from_coefficients(ci, cj)
    assert w.k_i + w.k_j == pytest.approx(1.0)
    lhs = jump(ai * bi, aj * bj)
    rhs = w.average(ai, aj) * jump(bi, bj) + jump(ai, aj) * w.complementary(bi, bj)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-6)


def test_tau_si_examples():
    assert tau_si_flow(1.0, 1.0, 0.1, 0.1, 30.0) == pytest.approx(150.0)
    assert tau_si_flow(2.0, 2.0, 0.1, 0.2, 10.0) == pytest.approx(0.5 * 10 * 1.0 * 15.0)


def _pair(order=3):
    """Two unit elements sharing the edge x = 1 with side a on the left."""
    m = build_structured_quad_mesh((0, 0, 2, 1), 2, 1)
    t, w = gauss_rule(order)
    s = 2 * t - 1
    ga = m.geometry(np.zeros(order, int), np.column_stack([np.ones(order), s]))
    gb = m.geometry(np.ones(order, int), np.column_stack([-np.ones(order), s]))
    assert np.allclose(ga[0], gb[0])
    n = np.tile([1.0, 0.0], (order, 1))
    return m, ga, gb, n, w


def _sides(g):
    return g[1], g[2], g[4]


def _local(m, u, p):
    x = np.column_stack([u, p])[m.elements]
    return np.concatenate([x[0].ravel(), x[1].ravel()])


def test_penalty_energy_of_constant_jump():
    m, ga, gb, n, w = _pair()
    eta = np.full(len(w), 0.5)
    blk = interface_residual_flow(_sides(ga), _sides(gb), n, w, eta, eta, np.zeros(len(w)),
                                  1.0, 30.0)
    c = np.array([0.3, -1.2])
    x = np.zeros(24)
    x[:12] = np.tile([c[0], c[1], 0.0], 4)
    energy = x @ blk.matrix.sum(0) @ x
    tau = tau_si_flow(0.5, 0.5, element_length(ga[4], n), element_length(gb[4], n), 30.0)
    assert energy == pytest.approx(np.sum(w * tau) * c @ c, rel=1e-12)


def test_interface_consistency_for_continuous_fields():
    m, ga, gb, n, w = _pair()
    A = np.array([[0.4, 1.5], [-0.7, -0.4]])
    gp = np.array([0.8, -0.3])
    u = m.nodes @ A.T
    p = m.nodes @ gp + 0.2
    eta_a, eta_b = 2.0, 0.5
    ea, eb = np.full(len(w), eta_a), np.full(len(w), eta_b)
    blk = interface_residual_flow(_sides(ga), _sides(gb), n, w, ea, eb, np.full(len(w), 0.7),
                                  1.3, 30.0)
    R = blk.matrix.sum(0) @ _local(m, u, p)
    kw = weights_from_coefficients(eta_a, eta_b)
    eps = 0.5 * (A + A.T)
    xq = ga[0]
    R_exp = np.zeros(24)
    for q in range(len(w)):
        sig = 2 * (kw.k_i * eta_a + kw.k_j * eta_b) * eps - (xq[q] @ gp + 0.2) * np.eye(2)
        t = sig @ n[q]
        for side, N, sgn in ((0, ga[1][q], 1.0), (1, gb[1][q], -1.0)):
            for b in range(4):
                R_exp[12 * side + 3 * b: 12 * side + 3 * b + 2] -= w[q] * sgn * N[b] * t
    assert np.abs(R - R_exp).max() < 1e-12


def test_pressure_coupling_is_skew():
    m, ga, gb, n, w = _pair()
    e = np.full(len(w), 1.7)
    K = interface_residual_flow(_sides(ga), _sides(gb), n, w, e, 0.3 * e, np.zeros(len(w)),
                                1.0, 30.0).matrix.sum(0)
    vel = np.array([i for i in range(24) if i % 3 != 2])
    pre = np.arange(2, 24, 3)
    assert np.allclose(K[np.ix_(vel, pre)], -K[np.ix_(pre, vel)].T, atol=1e-14)
    assert np.all(K[np.ix_(pre, pre)] == 0)


def test_upwind_vanishes_without_normal_flow():
    m, ga, gb, n, w = _pair()
    e = np.full(len(w), 1.0)
    z = np.zeros(len(w))
    K1 = interface_residual_flow(_sides(ga), _sides(gb), n, w, e, e, z, 5.0, 30.0).matrix
    K0 = interface_residual_flow(_sides(ga), _sides(gb), n, w, e, e, z, 0.0, 30.0).matrix
    assert np.array_equal(K1, K0)
    K2 = interface_residual_flow(_sides(ga), _sides(gb), n, w, e, e, z + 1.0, 5.0, 30.0).matrix
    assert not np.allclose(K2, K0)
    # zero state, zero residual
    assert np.all(K1.sum(0) @ np.zeros(24) == 0)


def test_interface_convection_ignores_continuous_fields():
    m, ga, gb, n, w = _pair()
    e = np.full(len(w), 1.0)
    un = np.full(len(w), 2.0)
    Kc = (interface_residual_flow(_sides(ga), _sides(gb), n, w, e, e, un, 1.0, 30.0).matrix
          - interface_residual_flow(_sides(ga), _sides(gb), n, w, e, e, 0 * un, 1.0, 30.0).matrix)
    rng = np.random.default_rng(3)
    x = _local(m, rng.normal(size=(m.n_nodes, 2)), rng.normal(size=m.n_nodes))
    assert np.abs(Kc.sum(0) @ x).max() < 1e-13


def test_mismatched_lengths_raise():
    m, ga, gb, n, w = _pair()
    e = np.ones(len(w))
    with pytest.raises(AssemblyError):
        interface_residual_flow(_sides(ga), _sides(gb), n, w[:2], e, e, e, 1.0, 30.0)
    with pytest.raises(AssemblyError):
        interface_residual_temp(_sides(ga), _sides(gb), n, w[:2], 1.0, 1.0, e, 1.0, 30.0)


def test_weak_dirichlet_leaves_only_the_consistency_flux_when_u_equals_g():
    m, ga, gb, n, w = _pair()
    A = np.array([[0.4, 1.5], [-0.7, -0.4]])
    u = m.nodes @ A.T
    eta = np.full(len(w), 0.9)
    blk = weak_dirichlet_flow(_sides(ga), n, w, eta, 30.0, ga[0] @ A.T)
    x = np.column_stack([u, np.zeros(m.n_nodes)])[m.elements[0]].ravel()
    R = blk.matrix.sum(0) @ x - blk.rhs.sum(0)
    t = 0.9 * (A + A.T) @ n[0]
    R_exp = np.zeros(12)
    for q in range(len(w)):
        for b in range(4):
            R_exp[3 * b: 3 * b + 2] -= w[q] * ga[1][q, b] * t
    assert np.abs(R - R_exp).max() < 1e-12

    T = m.nodes @ np.array([1.5, -2.0])
    tb = weak_dirichlet_temp(_sides(ga), n, w, 0.9, 30.0, ga[0] @ np.array([1.5, -2.0]))
    RT = tb.matrix.sum(0) @ T[m.elements[0]] - tb.rhs.sum(0)
    assert np.allclose(RT, -0.9 * 1.5 * (w[:, None] * ga[1]).sum(0), atol=1e-12)


def _conduction(weak, n=4):
    m = build_structured_quad_mesh((0, 0, 1, 1), n, n, 0, {"bottom": "cold", "top": "hot"})
    kind = "weak_dirichlet" if weak else "dirichlet"
    bcs = {"cold": BoundaryCondition(flow="dirichlet", thermal=kind,
                                     temperature=lambda x, t: np.full(len(x), 1.0)),
           "hot": BoundaryCondition(flow="dirichlet", thermal=kind,
                                    temperature=lambda x, t: np.full(len(x), 3.0)),
           "left": BoundaryCondition(flow="dirichlet"), "right": BoundaryCondition(flow="dirichlet")}
    s = Solver(RunConfig(meshes=[m], bcs=bcs, material=Newtonian(1.0), flow=False, energy=True,
                         params=PhysicalParams(kappa=0.7)))
    s.run()
    return s.state.T[0]


def test_weak_and_strong_conduction_agree():
    assert np.abs(_conduction(True) - _conduction(False)).max() < 1e-8


def _weak_tg(n, weak=True):
    eta = 0.1
    m = build_structured_quad_mesh((-0.5, -0.5, 0.5, 0.5), n, n, 0, lambda s, mid: "wall")
    g = lambda x, t: taylor_green(x, 0.0, eta)[0]
    bcs = {"wall": BoundaryCondition(flow="weak_dirichlet" if weak else "dirichlet", velocity=g)}
    s = Solver(RunConfig(meshes=[m], bcs=bcs, material=Newtonian(eta),
                         body_force=lambda x, t: tg_steady_body_force(x, eta),
                         pressure_anchor=PressureAnchor(0, (0.0, 0.0),
                                                        lambda x, t: taylor_green(x, 0, eta)[1])))
    s.run()
    return l2_domain_error([m], s.state.u, lambda x: taylor_green(x, 0.0, eta)[0])


def test_weak_dirichlet_converges():
    errs = np.array([_weak_tg(n) for n in (4, 8, 16)])
    rates = np.log2(errs[:-1] / errs[1:])
    assert np.all(rates >= 1.5), rates
    assert errs[-1] < 2 * _weak_tg(16, weak=False)
