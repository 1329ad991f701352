"""Cost functional, actuator parameterizations, and the L-BFGS driver.

The control is a time-constant flux or temperature profile on the outer
boundary, expanded in a small basis; the optimizer works on the amplitude
vector with a limited-memory two-loop recursion, curvature screening, and
backtracking Armijo line search.
"""

from dataclasses import dataclass, field

import numpy as np

from .thermal import BoundaryCondition, BoundarySide

_PARAM_SIZES = {"fourier4": 4, "fourier8": 8, "corner2": 2}


@dataclass
class ControlVector:
    kind: str
    amplitudes: np.ndarray
    sides: tuple = ("left", "right", "bottom", "top")
    bc_kind: str = "neumann"

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        want = _PARAM_SIZES.get(self.kind)
        if want is None:
            raise ValueError(f"unknown parameterization {self.kind!r}")
        if self.amplitudes.size != want:
            raise ValueError(
                f"{self.kind} takes {want} amplitudes, got {self.amplitudes.size}")

    @property
    def n_params(self):
        return self.amplitudes.size

    def with_amplitudes(self, amps):
        return ControlVector(self.kind, np.asarray(amps, dtype=float),
                             self.sides, self.bc_kind)


def basis_matrix(kind, s, half_width=1.0):
    """Rows of actuator basis functions evaluated at boundary coordinate s.

    Fourier bases live on the normalized coordinate s/half_width in [-1, 1];
    the corner basis takes the raw coordinate.
    """
    s = np.asarray(s, dtype=float)
    if kind == "fourier4":
        x = s / half_width
        return np.stack([np.cos(np.pi * x), np.cos(2 * np.pi * x),
                         np.sin(np.pi * x), np.sin(2 * np.pi * x)])
    if kind == "fourier8":
        x = s / half_width
        rows = [np.cos((p + 1) * np.pi * x) for p in range(4)]
        rows += [np.sin((p + 1) * np.pi * x) for p in range(4)]
        return np.stack(rows)
    if kind == "corner2":
        return np.stack([((1.0 + np.cos(np.pi / 8.0 * s)) / 2.0) ** 4,
                         ((1.0 + np.sin(np.pi / 8.0 * s)) / 2.0) ** 4])
    raise ValueError(f"unknown parameterization {kind!r}")


def evaluate_actuator(control, s, half_width=1.0):
    """Actuator value at boundary coordinate(s) s."""
    B = basis_matrix(control.kind, s, half_width)
    return control.amplitudes @ B


def control_boundary_condition(control, grid):
    """Outer BoundaryCondition realizing the actuator on its sides."""
    hw = 0.5 * max(grid.extent)
    center = (grid.origin[0] + 0.5 * grid.extent[0],
              grid.origin[1] + 0.5 * grid.extent[1])

    def sampler(axis_center):
        def f(s):
            return evaluate_actuator(control, s - axis_center, hw)
        return f

    sides = {}
    for name in ("left", "right", "bottom", "top"):
        axis_center = center[1] if name in ("left", "right") else center[0]
        if name in control.sides:
            sides[name] = BoundarySide(control.bc_kind, sampler(axis_center))
        else:
            sides[name] = BoundarySide(control.bc_kind, 0.0)
    return BoundaryCondition(**sides)


# ---------------------------------------------------------------------------
# cost functional


@dataclass
class CostBreakdown:
    temperature: float
    levelset: float
    interface: float
    control: float
    betas: tuple

    @property
    def total(self):
        b = self.betas
        return (0.5 * b[0] * self.temperature + 0.5 * b[1] * self.levelset
                + 0.5 * b[2] * self.interface + 0.5 * b[3] * self.control)

    def terms(self):
        b = self.betas
        return {
            "temperature": 0.5 * b[0] * self.temperature,
            "levelset": 0.5 * b[1] * self.levelset,
            "interface": 0.5 * b[2] * self.interface,
            "control": 0.5 * b[3] * self.control,
        }


def control_sq_integral(control, grid, t_final):
    """Time-and-boundary quadrature of |u|^2 over the controlled sides."""
    hw = 0.5 * max(grid.extent)
    h = grid.h
    total = 0.0
    for name in control.sides:
        s = grid.yc() if name in ("left", "right") else grid.xc()
        center = (grid.origin[1] + 0.5 * grid.extent[1]
                  if name in ("left", "right")
                  else grid.origin[0] + 0.5 * grid.extent[0])
        u = evaluate_actuator(control, s - center, hw)
        total += float((u * u).sum()) * h
    return total * t_final


def cost(traj, targets, control, betas):
    """Tracking cost of a finished trajectory against (T1, T2, phi) targets.

    Temperature mismatch integrates with the wetted volumes of both phases,
    the level-set mismatch over the whole domain, the interface term is the
    final reconstructed front length, and the control term the boundary
    quadrature of u^2 over time.
    """
    from .geometry import classify_and_capacities

    cfg = traj.config
    grid = cfg.grid
    fin = traj.final
    t1_t, t2_t, phi_t = targets
    geom = classify_and_capacities(fin.phi, grid, staggered=False)
    dT1 = fin.t1 - t1_t
    dT2 = fin.t2 - t2_t
    term_T = float((geom.cap1.vol * dT1 ** 2).sum()
                   + (geom.cap2.vol * dT2 ** 2).sum())
    term_phi = float(((fin.phi - phi_t) ** 2).sum() * grid.h ** 2)
    term_len = fin.front.total_length if fin.front is not None else 0.0
    term_u = (control_sq_integral(control, grid, cfg.t_final - cfg.t_start)
              if control is not None else 0.0)
    return CostBreakdown(temperature=term_T, levelset=term_phi,
                         interface=term_len, control=term_u, betas=betas)


# ---------------------------------------------------------------------------
# L-BFGS with curvature screening and backtracking


@dataclass
class OptimizeHistory:
    j: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    cost_calls: int = 0
    grad_calls: int = 0
    status: str = "running"
    iterates: list = field(default_factory=list)

    def record(self, j, gnorm, u):
        self.j.append(float(j))
        self.grad_norm.append(float(gnorm))
        self.iterates.append(np.array(u, dtype=float))


def _two_loop(grad, pairs):
    """L-BFGS two-loop recursion with scaled-identity seed."""
    q = grad.copy()
    alphas = []
    for s, y in reversed(pairs):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    if pairs:
        s, y = pairs[-1]
        gamma = (s @ y) / (y @ y)
    else:
        gamma = 1.0
    r = gamma * q
    for a, rho, s, y in reversed(alphas):
        b = rho * (y @ r)
        r += (a - b) * s
    return r


def lbfgs_run(fun, grad, u0, memory=10, max_iterations=60,
              grad_tol=1e-2, plateau_tol=1e-4, plateau_span=3,
              armijo=1e-4, contraction=0.5, max_backtracks=20,
              callback=None):
    """Minimize fun(u) with gradient grad(u).

    Curvature pairs are screened: when s.g <= 0 the whole memory is
    dropped, as in the screening variant of the limited-memory update.
    Returns (u_best, history).
    """
    u = np.array(u0, dtype=float)
    hist = OptimizeHistory()
    j = fun(u)
    hist.cost_calls += 1
    if not np.isfinite(j):
        raise ValueError(f"cost is not finite at the initial point {u}")
    g = np.asarray(grad(u), dtype=float)
    hist.grad_calls += 1
    g0_norm = np.linalg.norm(g)
    hist.record(j, g0_norm, u)
    if g0_norm == 0.0:
        hist.status = "stationary"
        return u, hist

    pairs = []
    prev_dir = None
    prev_sigma = None
    prev_grad = g
    best_u, best_j = u.copy(), j
    plateau = 0

    for it in range(max_iterations):
        if it >= 1:
            s = prev_sigma * prev_dir
            y = g - prev_grad
            if s @ y <= 0.0:
                pairs.clear()
            else:
                pairs.append((s, y))
                if len(pairs) > memory:
                    pairs.pop(0)
            prev_grad = g

        d = -_two_loop(g, pairs)
        if d @ g >= 0.0:
            d = -g
            pairs.clear()

        sigma = 1.0
        accepted = False
        for _ in range(max_backtracks):
            j_try = fun(u + sigma * d)
            hist.cost_calls += 1
            if np.isfinite(j_try) and j_try <= j + armijo * sigma * (g @ d):
                accepted = True
                break
            sigma *= contraction
        if not accepted:
            hist.status = "line_search_exhausted"
            break

        u = u + sigma * d
        j_prev = j
        j = j_try
        g = np.asarray(grad(u), dtype=float)
        hist.grad_calls += 1
        hist.record(j, np.linalg.norm(g), u)
        if callback is not None:
            callback(it, u, j, g)
        prev_dir, prev_sigma = d, sigma
        if j < best_j:
            best_j, best_u = j, u.copy()

        if np.linalg.norm(g) <= grad_tol * g0_norm:
            hist.status = "gradient_converged"
            break
        if j_prev > 0 and abs(j_prev - j) / max(abs(j), 1e-300) < plateau_tol:
            plateau += 1
            if plateau >= plateau_span:
                hist.status = "plateau"
                break
        else:
            plateau = 0
    else:
        hist.status = "max_iterations"

    if hist.status == "running":
        hist.status = "max_iterations"
    return best_u, hist
