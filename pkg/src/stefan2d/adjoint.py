"""Backward-in-time adjoint sweep over a stored forward trajectory.

The adjoint temperature solves the reverse-time heat equation on the frozen
geometry of each stored frame, with the interface Dirichlet value set by
the adjoint level-set variable, theta = psi * |grad phi| on the front, and
a homogeneous outer condition (Neumann for flux control, value zero for
Dirichlet control).  The adjoint level-set variable is transported
conservatively backward along the extended front velocity, driven by a
front source built from the temperature-gradient jumps of both the forward
and adjoint fields.  The control gradient is the boundary trace
beta4 * u + theta (flux control) or beta4 * u - k dtheta/dn (value
control), integrated against the actuator basis over the boundary and time.
"""

from dataclasses import dataclass, field

import numpy as np

from . import levelset
from .geometry import biquadratic_many, classify_and_capacities
from .jc import build_jc_stencils
from .coupling import smooth_front_values
from .optimize import basis_matrix, evaluate_actuator
from .thermal import BoundaryCondition, step_crank_nicolson

# Sign of the adjoint front source (jump(T) * jump(theta) / |grad phi|).
SOURCE_SIGN = 1.0


@dataclass
class AdjointState:
    theta1: np.ndarray
    theta2: np.ndarray
    psi: np.ndarray
    t: float


@dataclass
class AdjointResult:
    gradient: np.ndarray
    state0: AdjointState
    psi_terminal_norm: float
    theta_trace: dict


def terminal_conditions(traj, targets, betas, band_mask):
    """Adjoint fields at the final time.

    theta starts from the weighted temperature mismatch in both phases.
    psi is the cost derivative with respect to the level set, as a field
    density on the band: the tracking part is the plain mismatch, and the
    interface-length part a front-concentrated density (segment length per
    cell area) weighted by the curvature.
    """
    fin = traj.final
    grid = traj.config.grid
    t1_t, t2_t, phi_t = targets
    b1, b2, b3, _ = betas
    geom = classify_and_capacities(fin.phi, grid, staggered=False)
    th1 = np.where(geom.valid_mask(1), b1 * (fin.t1 - t1_t), 0.0)
    th2 = np.where(geom.valid_mask(2), b1 * (fin.t2 - t2_t), 0.0)

    psi = b2 * (fin.phi - phi_t)
    if b3 != 0.0 and len(geom.cut):
        kap_field = levelset.curvature(fin.phi, grid)
        cut = geom.cut
        kap_c = biquadratic_many(kap_field, grid, cut.cx, cut.cy)
        psi[cut.i, cut.j] += -0.5 * b3 * kap_c * cut.length / grid.h ** 2
    return th1, th2, psi


def _interface_theta(psi, grad_mag, geom, grid, band_mask, latent):
    """Adjoint interface temperature from the level-set multiplier.

    The forward front speed acts on the level set through the extension
    tube of each cut cell, so the adjoint injection collects psi |grad phi|
    over the band cells nearest to that cut cell (the transpose of the
    extension), normalized by the segment length carried by the interface
    flux.
    """
    from scipy.spatial import cKDTree

    cut = geom.cut
    bi, bj = np.nonzero(band_mask)
    if bi.size == 0 or len(cut) == 0:
        return np.zeros(len(cut))
    h = grid.h
    bx = grid.origin[0] + (bi + 0.5) * h
    by = grid.origin[1] + (bj + 0.5) * h
    tree = cKDTree(np.c_[cut.cx, cut.cy])
    _, owner = tree.query(np.c_[bx, by])
    w = psi[bi, bj] * np.clip(grad_mag[bi, bj], 0.5, 2.0) * h * h
    tube = np.bincount(owner, weights=w, minlength=len(cut))
    seg = np.maximum(cut.length, 0.1 * h)
    return tube / (latent * seg)


def _wall_trace(theta, side, grid):
    """Second-order extrapolation of a cell field to one wall."""
    if side == "left":
        return 1.5 * theta[0, :] - 0.5 * theta[1, :]
    if side == "right":
        return 1.5 * theta[-1, :] - 0.5 * theta[-2, :]
    if side == "bottom":
        return 1.5 * theta[:, 0] - 0.5 * theta[:, 1]
    return 1.5 * theta[:, -1] - 0.5 * theta[:, -2]


def _combined_wall_field(th1, th2, geom, side, grid):
    """Boundary-cell adjoint temperature weighted by the wetted apertures.

    The flux load of each phase lands in the boundary cell, so the exact
    discrete pairing reads the cell value, not a wall extrapolation, with
    the same aperture weights the load uses.
    """
    cap1 = geom.cap1
    h = grid.h
    if side == "left":
        a1, t1v, t2v = cap1.ax[0, :], th1[0, :], th2[0, :]
    elif side == "right":
        a1, t1v, t2v = cap1.ax[-1, :], th1[-1, :], th2[-1, :]
    elif side == "bottom":
        a1, t1v, t2v = cap1.ay[:, 0], th1[:, 0], th2[:, 0]
    else:
        a1, t1v, t2v = cap1.ay[:, -1], th1[:, -1], th2[:, -1]
    w1 = a1 / h
    return w1 * t1v + (1.0 - w1) * t2v


def _collapse_tube(psi, grad_mag, geom, grid, band_mask):
    """Aggregate psi |grad phi| h^2 over the band cells owned by each cut
    cell (the transpose of the velocity extension)."""
    from scipy.spatial import cKDTree

    cut = geom.cut
    bi, bj = np.nonzero(band_mask)
    if bi.size == 0 or len(cut) == 0:
        return np.zeros(len(cut))
    h = grid.h
    bx = grid.origin[0] + (bi + 0.5) * h
    by = grid.origin[1] + (bj + 0.5) * h
    tree = cKDTree(np.c_[cut.cx, cut.cy])
    _, owner = tree.query(np.c_[bx, by])
    w = psi[bi, bj] * np.clip(grad_mag[bi, bj], 0.5, 2.0) * h * h
    return np.bincount(owner, weights=w, minlength=len(cut))


def adjoint_step(state, frame, dt, config, control_kind):
    """One backward step over the interval [frame.t, frame.t + dt].

    The level-set multiplier acts on the adjoint temperature through the
    transpose of the forward velocity chain: the band values of psi are
    collapsed onto their cut cells (extension transpose) and injected at
    the cells of the one-sided gradient stencils (Stefan-condition
    transpose).  Both adjoint phases then take a reverse-time
    Crank-Nicolson step with a homogeneous interface condition, and psi is
    transported backward with the stored extension velocity plus the front
    source built from the forward and adjoint gradient jumps.
    """
    grid = config.grid
    params = config.params
    geom = classify_and_capacities(frame.phi, grid, staggered=False)
    if control_kind == "dirichlet":
        bc = BoundaryCondition.uniform("dirichlet", 0.0)
    else:
        bc = BoundaryCondition.insulated()

    grad_mag = frame.grad_mag
    if grad_mag is None:
        grad_mag = levelset.godunov_gradient_norm(frame.phi, grid)

    band = levelset.narrow_band(geom.cls1 == 1, config.band_width)
    tube = _collapse_tube(state.psi, grad_mag, geom, grid, band.mask)
    # transpose of the along-front velocity filter applied in the forward
    tube = smooth_front_values(geom.cut, tube, passes=config.front_smoothing)
    seg = np.maximum(geom.cut.length, 0.1 * grid.h)
    th_d = tube / (params.latent * seg)
    st1 = build_jc_stencils(geom, 1)
    st2 = build_jc_stencils(geom, 2)
    th1 = step_crank_nicolson(state.theta1, geom, 1, params, th_d, bc, dt,
                              stencils=st1)
    th2 = step_crank_nicolson(state.theta2, geom, 2, params, th_d, bc, dt,
                              stencils=st2)

    # adjoint Stefan source on the front, extended over the band
    g_th1 = st1.apply(th1.ravel(), th_d)
    g_th2 = st2.apply(th2.ravel(), th_d)
    jump_th = params.k[0] * g_th1 - params.k[1] * g_th2
    if frame.front is not None:
        jump_t = params.k[0] * frame.front.grad1 - params.k[1] * frame.front.grad2
    else:
        jump_t = np.zeros_like(jump_th)
    gm_c = biquadratic_many(grad_mag, grid, geom.cut.cx, geom.cut.cy)
    src_c = SOURCE_SIGN * jump_t * jump_th / np.clip(gm_c, 0.5, 2.0)

    src = levelset.extend_velocity(geom.cut, src_c, frame.phi, grid, band)

    if frame.f_ext is not None:
        psi = levelset.adjoint_advect_step(state.psi, frame.phi, frame.f_ext,
                                           grid, dt, active=band.mask)
    else:
        psi = state.psi.copy()
    psi = psi - dt * src
    return AdjointState(theta1=th1, theta2=th2, psi=psi, t=frame.t), geom


def backward_sweep(traj, targets, betas, control):
    """Solve the adjoint system backward over a full-record trajectory and
    assemble the per-parameter control gradient."""
    cfg = traj.config
    grid = cfg.grid
    frames = traj.frames
    if len(frames) < 2:
        raise ValueError("backward sweep needs a full-record trajectory")
    geom_f = classify_and_capacities(frames[-1].phi, grid, staggered=False)
    band_f = levelset.narrow_band(geom_f.cls1 == 1, cfg.band_width)
    th1, th2, psi = terminal_conditions(traj, targets, betas, band_f.mask)
    state = AdjointState(theta1=th1, theta2=th2, psi=psi, t=frames[-1].t)
    psi_norm = float(np.sqrt((psi ** 2).sum()) * grid.h)

    hw = 0.5 * max(grid.extent)
    center = (grid.origin[0] + 0.5 * grid.extent[0],
              grid.origin[1] + 0.5 * grid.extent[1])
    trace_sum = {}
    coords = {}
    for side in control.sides:
        n_side = grid.ny if side in ("left", "right") else grid.nx
        trace_sum[side] = np.zeros(n_side)
        c = grid.yc() if side in ("left", "right") else grid.xc()
        axis_center = center[1] if side in ("left", "right") else center[0]
        coords[side] = c - axis_center

    def wall_integrand(state_, geom_):
        out = {}
        for side in control.sides:
            if control.bc_kind == "dirichlet":
                # flux of the adjoint through the wall with theta_wall = 0
                th_b = _combined_wall_field(state_.theta1, state_.theta2,
                                            geom_, side, grid)
                # trace extrapolation would cross zero at the wall; use the
                # first-cell value for the one-sided flux 2 k theta_b / h
                if side == "left":
                    tb = (state_.theta1[0, :] * geom_.cap1.ax[0, :]
                          + state_.theta2[0, :] * geom_.cap2.ax[0, :]) / grid.h
                elif side == "right":
                    tb = (state_.theta1[-1, :] * geom_.cap1.ax[-1, :]
                          + state_.theta2[-1, :] * geom_.cap2.ax[-1, :]) / grid.h
                elif side == "bottom":
                    tb = (state_.theta1[:, 0] * geom_.cap1.ay[:, 0]
                          + state_.theta2[:, 0] * geom_.cap2.ay[:, 0]) / grid.h
                else:
                    tb = (state_.theta1[:, -1] * geom_.cap1.ay[:, -1]
                          + state_.theta2[:, -1] * geom_.cap2.ay[:, -1]) / grid.h
                out[side] = 2.0 * tb / grid.h
            else:
                out[side] = _combined_wall_field(state_.theta1, state_.theta2,
                                                 geom_, side, grid)
        return out

    prev = wall_integrand(state, geom_f)
    for k in range(len(frames) - 2, -1, -1):
        frame = frames[k]
        dt = frames[k + 1].t - frame.t
        state, geom_k = adjoint_step(state, frame, dt, cfg, control.bc_kind)
        cur = wall_integrand(state, geom_k)
        for side in control.sides:
            trace_sum[side] += 0.5 * dt * (prev[side] + cur[side])
        prev = cur

    t_span = frames[-1].t - frames[0].t
    grad = np.zeros(control.n_params)
    for side in control.sides:
        B = basis_matrix(control.kind, coords[side], hw)
        u_side = evaluate_actuator(control, coords[side], hw)
        g_raw = betas[3] * u_side * t_span + trace_sum[side]
        grad += grid.h * (B @ g_raw)
    return AdjointResult(gradient=grad, state0=state,
                         psi_terminal_norm=psi_norm, theta_trace=trace_sum)
