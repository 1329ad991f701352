"""Front coupling: Stefan condition, fresh/dead cells, and the forward loop.

Per time step: Crank-Nicolson temperature update on the frozen geometry,
one-sided normal gradients at the front, Stefan velocity, extension into
the narrow band, level-set advection, reinitialization, and fresh/dead
temperature repair on the new geometry.

Sign conventions: phase 1 occupies phi < 0, the geometric normal points
toward phi > 0, and the front speed along that normal is
V = -(k1 G1 - k2 G2)/latent, with G_i the outward-normal derivative of
phase i at the front.  Positive V grows the phase-1 region.
"""

from dataclasses import dataclass, field

import numpy as np

from . import levelset
from .geometry import biquadratic_many, classify_and_capacities
from .jc import build_jc_stencils, _line_samples
from .thermal import BoundaryCondition, gibbs_thomson, step_crank_nicolson


FRESH_FILL_TARGET = "barycentre"


@dataclass
class FrontState:
    """Per-cut-cell interface data for one time level."""

    i: np.ndarray
    j: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    nx: np.ndarray
    ny: np.ndarray
    length: np.ndarray
    kappa: np.ndarray
    t_d: np.ndarray
    grad1: np.ndarray      # outward-normal derivative of T1 at the front
    grad2: np.ndarray
    v: np.ndarray          # front speed along the geometric normal

    @property
    def total_length(self):
        return float(self.length.sum())


@dataclass
class Frame:
    """State at one time level plus the interval data computed from it."""

    t: float
    phi: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    front: FrontState | None = None
    f_ext: np.ndarray | None = None
    grad_mag: np.ndarray | None = None


@dataclass
class ForwardTrajectory:
    config: object
    frames: list
    status: str = "completed"
    n_steps: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.frames[-1]

    def times(self):
        return np.array([f.t for f in self.frames])


def stefan_velocity(grad1, grad2, params):
    """Front speed from the jump in conductive flux (positive grows phase 1)."""
    return -(params.k[0] * grad1 - params.k[1] * grad2) / params.latent


def smooth_front_values(cut, values, passes=2):
    """Average per-cut-cell values over neighboring cut cells.

    The one-sided gradient extraction scatters with the sub-cell ray
    distances when the thermal layer is marginally resolved; a couple of
    neighbor-averaging passes along the front removes that placement noise
    without touching resolved variations (the stencil radius is one cell).
    """
    if passes <= 0 or len(cut) < 3:
        return np.asarray(values, dtype=float)
    nx, ny = cut.index_of.shape
    grid_vals = np.zeros((nx + 2, ny + 2))
    mask = np.zeros((nx + 2, ny + 2))
    ii = cut.i + 1
    jj = cut.j + 1
    mask[ii, jj] = 1.0
    out = np.asarray(values, dtype=float)
    for _ in range(passes):
        grid_vals[ii, jj] = out
        num = np.zeros((nx + 2, ny + 2))
        den = np.zeros((nx + 2, ny + 2))
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                num += np.roll(np.roll(grid_vals * mask, di, 0), dj, 1)
                den += np.roll(np.roll(mask, di, 0), dj, 1)
        out = num[ii, jj] / den[ii, jj]
    return out


def front_state(geom, phi, t1, t2, params, v_prev_field, grid,
                solve_phases=(True, True), stencils=None, smoothing=2):
    """Gibbs-Thomson data and Stefan velocities on the current geometry."""
    cut = geom.cut
    kap_field = levelset.curvature(phi, grid)
    kappa = biquadratic_many(kap_field, grid, cut.cx, cut.cy)
    kappa = smooth_front_values(cut, kappa, passes=smoothing)
    kappa = np.clip(kappa, -1.0 / grid.h, 1.0 / grid.h)
    alpha = np.arctan2(cut.ny, cut.nx)
    if v_prev_field is None or params.eps_v == 0.0:
        v_prev = np.zeros(len(cut))
    else:
        v_prev = v_prev_field[cut.i, cut.j]
    t_d = gibbs_thomson(kappa, v_prev, params, alpha)
    if stencils is None:
        stencils = (build_jc_stencils(geom, 1), build_jc_stencils(geom, 2))
    g1 = stencils[0].apply(t1.ravel(), t_d) if solve_phases[0] else np.zeros(len(cut))
    g2 = stencils[1].apply(t2.ravel(), t_d) if solve_phases[1] else np.zeros(len(cut))
    v = stefan_velocity(g1, g2, params)
    v = smooth_front_values(cut, v, passes=smoothing)
    return FrontState(i=cut.i, j=cut.j, cx=cut.cx, cy=cut.cy,
                      nx=cut.nx, ny=cut.ny, length=cut.length,
                      kappa=kappa, t_d=t_d, grad1=g1, grad2=g2, v=v), stencils


def handle_fresh_dead(t_old, geom_old, geom_new, grid):
    """Repair phase temperatures after the front has moved.

    Dead cells (left by the phase) are zeroed; fresh cells are filled by
    casting a ray from the new interface centroid into the phase, sampling
    two cell-center lines by quadratic interpolation, and extrapolating
    linearly to the wetted barycentre of the fresh cell.
    """
    out = []
    flagged = 0
    for phase, T in zip((1, 2), t_old):
        valid_old = geom_old.valid_mask(phase)
        valid_new = geom_new.valid_mask(phase)
        Tn = np.where(valid_new, T, 0.0)
        fresh_i, fresh_j = np.nonzero(valid_new & ~valid_old)
        if fresh_i.size == 0:
            out.append(Tn)
            continue
        source = valid_old & valid_new
        cut = geom_new.cut
        sgn = -1.0 if phase == 1 else 1.0
        for i, j in zip(fresh_i, fresh_j):
            k = cut.index_of[i, j]
            if k >= 0:
                cx, cy = cut.cx[k], cut.cy[k]
                dx, dy = sgn * cut.nx[k], sgn * cut.ny[k]
                if FRESH_FILL_TARGET == "center":
                    ox = grid.origin[0] + (i + 0.5) * grid.h
                    oy = grid.origin[1] + (j + 0.5) * grid.h
                elif phase == 1:
                    ox, oy = cut.wx[k], cut.wy[k]
                else:
                    ox, oy = _dry_barycentre(geom_new, k, grid)
            else:
                # freshly FULL cell (front jumped past): fill from neighbors
                Tn[i, j] = _nearest_valid(Tn, source, i, j, grid)
                flagged += 1
                continue
            val, ok = _ray_linear_fill(T, source, grid, cx, cy, dx, dy, ox, oy)
            if ok:
                Tn[i, j] = val
            else:
                Tn[i, j] = _nearest_valid(Tn, source, i, j, grid)
                flagged += 1
        out.append(Tn)
    return out[0], out[1], flagged


def _dry_barycentre(geom, k, grid):
    """Barycentre of the phase-2 part of a cut cell (complement of wet)."""
    i, j = geom.cut.i[k], geom.cut.j[k]
    h = grid.h
    xc = grid.origin[0] + (i + 0.5) * h
    yc = grid.origin[1] + (j + 0.5) * h
    v1 = geom.cap1.vol[i, j]
    v2 = h * h - v1
    if v2 <= 0:
        return xc, yc
    wx = (xc * h * h - geom.cut.wx[k] * v1) / v2
    wy = (yc * h * h - geom.cut.wy[k] * v1) / v2
    return wx, wy


def _ray_linear_fill(T, source, grid, cx, cy, dx, dy, ox, oy):
    """Two-point linear extrapolation along a ray to the point (ox, oy)."""
    h = grid.h
    if abs(dx) >= abs(dy):
        along_y, d_dom, c_dom, c_tr, o_dom = True, dx, cx, cy, grid.origin[0]
        d_tr = dy
    else:
        along_y, d_dom, c_dom, c_tr, o_dom = False, dy, cy, cx, grid.origin[1]
        d_tr = dx
    if abs(d_dom) < 1e-12:
        return 0.0, False
    s = 1 if d_dom > 0 else -1
    m = int(np.floor((c_dom - o_dom) / h - 0.5)) + (1 if s > 0 else 0)
    while (o_dom + (m + 0.5) * h - c_dom) / d_dom <= 0.1 * h:
        m += s
    m2 = m + s
    n_dom = grid.nx if along_y else grid.ny
    if not (0 <= m < n_dom and 0 <= m2 < n_dom):
        return 0.0, False
    t1 = (o_dom + (m + 0.5) * h - c_dom) / d_dom
    t2 = (o_dom + (m2 + 0.5) * h - c_dom) / d_dom
    ia, wa = _line_samples(source, grid, m, along_y, c_tr + t1 * d_tr, h)
    ib, wb = _line_samples(source, grid, m2, along_y, c_tr + t2 * d_tr, h)
    if ia is None or ib is None or len(ia) < 2 or len(ib) < 2:
        return 0.0, False

    def sample(col, idxs, ws):
        tot = 0.0
        for jl, w in zip(idxs, ws):
            tot += w * (T[col, jl] if along_y else T[jl, col])
        return tot

    ta = sample(m, ia, wa)
    tb = sample(m2, ib, wb)
    # ray parameter of the target point
    t0 = (ox - cx) * dx + (oy - cy) * dy
    a0 = (tb - ta) / (t2 - t1)
    a1 = ta - a0 * (t1 - t0)
    return a1, True


def _nearest_valid(T, source, i, j, grid):
    for rad in range(1, 4):
        i0, i1 = max(0, i - rad), min(grid.nx, i + rad + 1)
        j0, j1 = max(0, j - rad), min(grid.ny, j + rad + 1)
        block = source[i0:i1, j0:j1]
        if block.any():
            ii, jj = np.nonzero(block)
            d2 = (ii + i0 - i) ** 2 + (jj + j0 - j) ** 2
            k = int(np.argmin(d2))
            return T[ii[k] + i0, jj[k] + j0]
    return 0.0


def initial_state(config):
    """Level set, phase temperatures, and geometry at t_start."""
    grid = config.grid
    phi = levelset.init_shape(config.shape_kind, grid, **config.shape_params)
    if config.initial_reinit > 0:
        phi = levelset.reinitialize(phi, grid, config.initial_reinit)
    geom = classify_and_capacities(phi, grid, staggered=False)
    xx, yy = grid.cell_centers()
    if config.temp_init is None:
        t1 = np.zeros(grid.shape)
        t2 = np.zeros(grid.shape)
    else:
        t1, t2 = config.temp_init(xx, yy, phi)
    t1 = np.where(geom.valid_mask(1), t1, 0.0)
    t2 = np.where(geom.valid_mask(2), t2, 0.0)
    return phi, t1, t2, geom


def forward_solve(config, bc=None, record=None, step_hook=None):
    """Run the coupled Stefan problem from t_start to t_final.

    bc overrides the outer boundary condition (the optimizer passes the
    actuated one); record 'full' keeps every frame (needed by the backward
    sweep), 'light' keeps the first and last plus diagnostics.
    """
    grid = config.grid
    params = config.params
    record = record or config.record
    if bc is None:
        bc = BoundaryCondition.uniform(config.bc_kind, config.bc_value)
    phi, t1, t2, geom = initial_state(config)
    dt = config.dt
    t = config.t_start
    f_prev = None
    frames = []
    times, lengths, vol1, int_t = [], [], [], []
    status = "completed"
    n_steps = 0
    total_flagged = 0

    def push_diag(front):
        times.append(t)
        lengths.append(front.total_length if front is not None else 0.0)
        vol1.append(float(geom.cap1.vol.sum()))
        rc1 = params.rho[0] * params.c[0]
        rc2 = params.rho[1] * params.c[1]
        int_t.append(float((rc1 * geom.cap1.vol * t1
                            + rc2 * geom.cap2.vol * t2).sum()))

    def remember(frame):
        if record == "full" or len(frames) < 2:
            frames.append(frame)
        else:
            frames[-1] = frame

    while True:
        if len(geom.cut) == 0:
            status = "interface_vanished"
            remember(Frame(t=t, phi=phi, t1=t1, t2=t2))
            break
        stencils = (build_jc_stencils(geom, 1), build_jc_stencils(geom, 2))
        front, _ = front_state(geom, phi, t1, t2, params, f_prev, grid,
                               config.solve_phases, stencils,
                               smoothing=config.front_smoothing)
        push_diag(front)
        gm = (levelset.godunov_gradient_norm(phi, grid)
              if record == "full" else None)
        frame = Frame(t=t, phi=phi, t1=t1, t2=t2, front=front, grad_mag=gm)
        remember(frame)
        if t >= config.t_final - 1e-12:
            break

        vmax = float(np.abs(front.v).max()) if len(front.v) else 0.0
        step = min(dt, config.t_final - t)
        if vmax > 0.0 and config.front_cfl > 0.0:
            step = min(step, config.front_cfl * grid.h / vmax)
        theta = 1.0 if n_steps < 2 else 0.5

        # 1. temperature update on the frozen geometry
        t1n = (step_crank_nicolson(t1, geom, 1, params, front.t_d, bc, step,
                                   stencils=stencils[0], theta=theta)
               if config.solve_phases[0] else t1)
        t2n = (step_crank_nicolson(t2, geom, 2, params, front.t_d, bc, step,
                                   stencils=stencils[1], theta=theta)
               if config.solve_phases[1] else t2)

        # 2. Stefan condition on the updated temperatures
        g1 = stencils[0].apply(t1n.ravel(), front.t_d) \
            if config.solve_phases[0] else np.zeros(len(geom.cut))
        g2 = stencils[1].apply(t2n.ravel(), front.t_d) \
            if config.solve_phases[1] else np.zeros(len(geom.cut))
        v = stefan_velocity(g1, g2, params)
        v = smooth_front_values(geom.cut, v, passes=config.front_smoothing)
        front.grad1, front.grad2, front.v = g1, g2, v

        if np.abs(v).max() * step < 1e-13 * grid.h:
            # quiescent front: the level set is already its own update
            t1, t2 = t1n, t2n
            t += step
            n_steps += 1
            if step_hook is not None:
                step_hook(n_steps, t, phi, t1, t2)
            continue

        # 3. velocity extension over the narrow band (short sweep count:
        # only near-front values drive the advection)
        band = levelset.narrow_band(geom.cls1 == 1, config.band_width)
        n_ext = int(np.ceil(1.2 * band.width / levelset.EXTENSION_CFL)) + 4
        f_ext = levelset.extend_velocity(geom.cut, v, phi, grid, band,
                                         n_iters=n_ext)
        frame.f_ext = f_ext

        # 4. level-set advection (band only; frozen outside)
        phi_adv = levelset.advect_iioe(phi, f_ext, grid, step, active=band.mask)

        # 5. reinitialization
        phi_new = levelset.reinitialize(phi_adv, grid, config.reinit_per_step)

        # 6. fresh/dead repair on the new geometry
        geom_new = classify_and_capacities(phi_new, grid, staggered=False)
        t1, t2, flagged = handle_fresh_dead((t1n, t2n), geom, geom_new, grid)
        total_flagged += flagged

        phi, geom = phi_new, geom_new
        f_prev = f_ext
        t += step
        n_steps += 1
        if step_hook is not None:
            step_hook(n_steps, t, phi, t1, t2)

    traj = ForwardTrajectory(config=config, frames=frames, status=status,
                             n_steps=n_steps)
    traj.diagnostics = {
        "times": np.array(times),
        "interface_length": np.array(lengths),
        "phase1_volume": np.array(vol1),
        "thermal_content": np.array(int_t),
        "fresh_fallbacks": total_flagged,
    }
    return traj
