import numpy as np
import pytest

from stefan2d.cases import case_melting_circle
from stefan2d.control import build_problem, make_targets, run_with_control
from stefan2d.grid import Grid
from stefan2d.optimize import (ControlVector, basis_matrix, cost,
                               control_sq_integral, evaluate_actuator,
                               lbfgs_run)


# ----------------------------------------------------------------- actuators

def test_actuator_parameter_counts():
    with pytest.raises(ValueError):
        ControlVector("fourier4", np.zeros(3))
    with pytest.raises(ValueError):
        ControlVector("nope", np.zeros(4))


def test_fourier4_evaluations():
    u = ControlVector("fourier4", [1.0, 0.0, 0.0, 0.0])
    assert evaluate_actuator(u, 0.0) == pytest.approx(1.0)   # cos(0)
    u = ControlVector("fourier4", [0.0, 0.0, 1.0, 0.0])
    assert evaluate_actuator(u, 0.0) == pytest.approx(0.0)   # sin(0)
    u = ControlVector("fourier4", [0.0, 1.0, 0.0, 0.0])
    # cos(2 pi x) at x = 1/2
    assert evaluate_actuator(u, 0.5) == pytest.approx(np.cos(np.pi))


def test_corner2_evaluations():
    u = ControlVector("corner2", [1.0, 0.0])
    assert evaluate_actuator(u, 0.0) == pytest.approx(1.0)   # ((1+1)/2)^4
    u = ControlVector("corner2", [0.0, 1.0])
    assert evaluate_actuator(u, 0.0) == pytest.approx((0.5) ** 4)


def test_fourier8_matches_basis_matrix():
    amps = np.arange(1.0, 9.0)
    u = ControlVector("fourier8", amps)
    s = np.linspace(-1, 1, 7)
    direct = evaluate_actuator(u, s)
    assert np.allclose(direct, amps @ basis_matrix("fourier8", s))


# ----------------------------------------------------------------- cost

def test_cost_zero_for_matched_targets():
    cfg = case_melting_circle(n=16, t_final=0.02)
    cfg.optimizer.betas = (1.0, 10.0, 0.0, 1e-3)
    prob = build_problem(cfg, u_ref=np.zeros(4))
    j0 = prob.cost(np.zeros(4))
    assert j0 == pytest.approx(0.0, abs=1e-14)


def test_cost_interface_term_is_half_front_length():
    cfg = case_melting_circle(n=32, t_final=0.02)
    cfg.optimizer.betas = (0.0, 0.0, 1.0, 0.0)
    prob = build_problem(cfg, u_ref=np.zeros(4))
    c = prob.control(np.zeros(4))
    traj = run_with_control(cfg, c, record="light")
    bd = cost(traj, prob.targets, c, cfg.optimizer.betas)
    radius = 0.75
    assert bd.total == pytest.approx(0.5 * 2 * np.pi * radius, rel=0.01)


def test_cost_decomposition_additive():
    cfg = case_melting_circle(n=16, t_final=0.02)
    prob = build_problem(cfg)
    c = prob.control(0.3 * np.ones(4))
    traj = run_with_control(cfg, c, record="light")
    bd = cost(traj, prob.targets, c, cfg.optimizer.betas)
    assert bd.total == pytest.approx(sum(bd.terms().values()), rel=1e-12)
    assert all(v >= 0.0 for v in bd.terms().values())


def test_control_quadrature_matches_closed_form():
    g = Grid.from_domain(32, 32, 2.0, origin=(-1.0, -1.0))
    u = ControlVector("fourier4", [0.7, 0.0, 0.0, 0.0],
                      sides=("top",), bc_kind="neumann")
    # integral of (0.7 cos(pi x))^2 over x in [-1, 1] is 0.7^2
    val = control_sq_integral(u, g, t_final=2.0)
    assert val == pytest.approx(2.0 * 0.7 ** 2, rel=1e-3)


# ----------------------------------------------------------------- L-BFGS

def test_lbfgs_exact_on_quadratic():
    # J = 0.5 ||u - u*||^2: the unit step along -grad lands on u* at once
    target = np.array([1.0, -2.0, 0.5, 3.0])
    fun = lambda u: 0.5 * float((u - target) @ (u - target))
    grad = lambda u: u - target
    u, hist = lbfgs_run(fun, grad, np.zeros(4), grad_tol=1e-12,
                        plateau_tol=1e-14)
    assert np.abs(u - target).max() < 1e-10
    assert len(hist.j) - 1 <= 5


def test_lbfgs_on_anisotropic_quadratic():
    target = np.array([1.0, -2.0, 0.5, 3.0])
    A = np.diag([1.0, 4.0, 9.0, 0.5])
    fun = lambda u: 0.5 * (u - target) @ A @ (u - target)
    grad = lambda u: A @ (u - target)
    u, hist = lbfgs_run(fun, grad, np.zeros(4), grad_tol=1e-13,
                        plateau_tol=1e-15, max_iterations=40)
    assert np.abs(u - target).max() < 1e-8


def test_lbfgs_descent_and_memory_discipline():
    rng = np.random.default_rng(3)
    n = 12
    Q = rng.normal(size=(n, n))
    A = Q.T @ Q + 0.5 * np.eye(n)
    b = rng.normal(size=n)
    fun = lambda u: 0.25 * (u @ A @ u) ** 2 / (1 + u @ u) + 0.5 * u @ A @ u - b @ u
    def grad(u):
        e = 1e-7
        g = np.zeros(n)
        for k in range(n):
            d = np.zeros(n)
            d[k] = e
            g[k] = (fun(u + d) - fun(u - d)) / (2 * e)
        return g
    u, hist = lbfgs_run(fun, grad, np.zeros(n), memory=10,
                        max_iterations=40, grad_tol=1e-8, plateau_tol=1e-12)
    j = np.array(hist.j)
    assert np.all(np.diff(j) <= 1e-12)  # Armijo enforces monotone descent
    assert hist.grad_calls <= 41
    assert j[-1] < j[0]


def test_lbfgs_stops_on_stationary_start():
    fun = lambda u: float(u @ u)
    grad = lambda u: 2 * u
    u, hist = lbfgs_run(fun, grad, np.zeros(3))
    assert hist.status == "stationary"
    assert hist.cost_calls == 1


def test_lbfgs_rejects_nonfinite_cost():
    with pytest.raises(ValueError):
        lbfgs_run(lambda u: np.nan, lambda u: u, np.zeros(2))


# ----------------------------------------------------------------- targets

def test_targets_from_zero_reference_terminate_immediately():
    cfg = case_melting_circle(n=16, t_final=0.02)
    prob = build_problem(cfg, u_ref=np.zeros(4))
    from stefan2d.optimize import lbfgs_run as run
    u, hist = run(prob.cost, prob.gradient, np.zeros(4))
    assert hist.j[0] == pytest.approx(0.0, abs=1e-12)
    assert len(hist.j) <= 2


def test_targets_differ_for_nonzero_reference():
    cfg = case_melting_circle(n=16, t_final=0.02)
    targets_ref, ref = make_targets(cfg)
    targets_zero, _ = make_targets(cfg, u_ref=np.zeros(4))
    assert np.linalg.norm(targets_ref[2] - targets_zero[2]) > 1e-6
