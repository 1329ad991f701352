"""Case-level control drivers: target manufacture, cost/gradient wiring,
finite-difference verification, and the optimization loop."""

from dataclasses import dataclass

import numpy as np

from .adjoint import backward_sweep
from .coupling import forward_solve
from .optimize import (ControlVector, cost, control_boundary_condition,
                       lbfgs_run)


def control_from_settings(opt, amplitudes=None):
    amps = np.zeros(len(opt.u_ref)) if amplitudes is None else amplitudes
    return ControlVector(opt.parameterization, amps,
                         sides=opt.control_sides, bc_kind=opt.control_kind)


def run_with_control(config, control, record="light"):
    bc = control_boundary_condition(control, config.grid)
    return forward_solve(config, bc=bc, record=record)


def make_targets(config, u_ref=None):
    """Manufacture tracking targets by running the reference actuator."""
    opt = config.optimizer
    ref = control_from_settings(opt, np.asarray(u_ref if u_ref is not None
                                                else opt.u_ref, dtype=float))
    traj = run_with_control(config, ref, record="light")
    fin = traj.final
    return (fin.t1.copy(), fin.t2.copy(), fin.phi.copy()), ref


@dataclass
class CaseProblem:
    """Cost and gradient callables for one control case."""

    config: object
    targets: tuple
    template: ControlVector
    history_trajs: bool = False
    last_traj: object = None

    def control(self, amps):
        return self.template.with_amplitudes(amps)

    def cost(self, amps):
        c = self.control(amps)
        traj = run_with_control(self.config, c, record="light")
        self.last_traj = traj
        return cost(traj, self.targets, c, self.config.optimizer.betas).total

    def cost_breakdown(self, amps):
        c = self.control(amps)
        traj = run_with_control(self.config, c, record="light")
        return cost(traj, self.targets, c, self.config.optimizer.betas)

    def gradient(self, amps):
        c = self.control(amps)
        traj = run_with_control(self.config, c, record="full")
        res = backward_sweep(traj, self.targets, self.config.optimizer.betas, c)
        return res.gradient


def build_problem(config, u_ref=None):
    targets, ref = make_targets(config, u_ref)
    template = ref.with_amplitudes(np.zeros(ref.n_params))
    return CaseProblem(config=config, targets=targets, template=template)


def optimize_case(config, u0=None):
    """make_targets + L-BFGS from u = 0 (or u0); returns (u*, history, problem)."""
    prob = build_problem(config)
    opt = config.optimizer
    u0 = np.zeros(prob.template.n_params) if u0 is None else np.asarray(u0)
    u_star, hist = lbfgs_run(
        prob.cost, prob.gradient, u0,
        memory=opt.memory, max_iterations=opt.max_iterations,
        grad_tol=opt.grad_tol, plateau_tol=opt.plateau_tol,
        plateau_span=opt.plateau_span,
    )
    return u_star, hist, prob


def fd_gradient(problem, amps, eps_list=(3e-3, 1e-3, 3e-4)):
    """Central finite differences of the case cost, per parameter.

    For each parameter the step sweep picks the pair of consecutive
    estimates that agree best (the plateau); returns (gradient, spread)
    with spread the relative disagreement at the chosen step.
    """
    amps = np.asarray(amps, dtype=float)
    n = amps.size
    est = np.zeros((len(eps_list), n))
    for ke, eps in enumerate(eps_list):
        for p in range(n):
            e = np.zeros(n)
            e[p] = eps
            jp = problem.cost(amps + e)
            jm = problem.cost(amps - e)
            est[ke, p] = (jp - jm) / (2.0 * eps)
    grad = np.zeros(n)
    spread = np.zeros(n)
    for p in range(n):
        diffs = np.abs(np.diff(est[:, p]))
        scale = max(np.abs(est[:, p]).max(), 1e-300)
        k = int(np.argmin(diffs))
        grad[p] = 0.5 * (est[k, p] + est[k + 1, p])
        spread[p] = diffs[k] / scale
    return grad, spread


def gradient_check(config, amps=None, eps_list=(3e-3, 1e-3, 3e-4)):
    """Adjoint vs finite-difference gradient report for one case."""
    prob = build_problem(config)
    amps = (np.zeros(prob.template.n_params) if amps is None
            else np.asarray(amps, dtype=float))
    g_adj = prob.gradient(amps)
    g_fd, spread = fd_gradient(prob, amps, eps_list)
    denom = np.maximum(np.abs(g_fd), 0.01 * np.abs(g_fd).max())
    rel = np.abs(g_adj - g_fd) / denom
    cosine = float(g_adj @ g_fd / max(np.linalg.norm(g_adj) * np.linalg.norm(g_fd),
                                      1e-300))
    return {
        "adjoint": g_adj,
        "fd": g_fd,
        "rel_err": rel,
        "cosine": cosine,
        "fd_spread": spread,
    }
