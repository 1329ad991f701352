"""Cut-cell heat equation: operator assembly and Crank-Nicolson stepping.

The Laplacian follows the capacity form: face-integrated gradients are
normalized by staggered volumes and the discrete divergence is the negative
transpose of the fluid gradient operator, which keeps the operator symmetric
on the unknowns of each phase.  Interface Dirichlet data (Gibbs-Thomson) and
outer-boundary conditions enter through the affine load.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import CellGeometry, EMPTY
from .jc import build_jc_stencils
from .levelset import NumericsError


@dataclass(frozen=True)
class Anisotropy:
    """Directional surface tension: weight, mode count, preferred angle."""

    weight: float
    mode: int = 4
    angle0: float = 0.0

    def __post_init__(self):
        if self.mode < 1:
            raise ValueError("anisotropy mode must be a positive integer")


@dataclass(frozen=True)
class MaterialParams:
    rho: tuple[float, float] = (1.0, 1.0)
    c: tuple[float, float] = (1.0, 1.0)
    k: tuple[float, float] = (1.0, 1.0)
    latent: float = 1.0
    t_melt: float = 0.0
    eps_kappa: float = 0.0
    eps_v: float = 0.0
    aniso: Anisotropy | None = None

    def __post_init__(self):
        for name in ("rho", "c", "k"):
            if any(v <= 0.0 for v in getattr(self, name)):
                raise ValueError(f"{name} must be positive in both phases")
        if self.latent <= 0.0:
            raise ValueError("latent heat must be positive")
        if self.eps_kappa < 0.0 or self.eps_v < 0.0:
            raise ValueError("Gibbs-Thomson coefficients must be nonnegative")

    def diffusivity(self, phase):
        i = phase - 1
        return self.k[i] / (self.rho[i] * self.c[i])


def gibbs_thomson(kappa, v_prev, params, alpha=None):
    """Interface temperature T_D = T_M - eps_V * V - eps_kappa(alpha) * kappa.

    V is the lagged front speed from the previous step (keeps the solve
    linear); alpha the local interface angle for the anisotropic surface
    tension variant.
    """
    eps_k = params.eps_kappa
    if params.aniso is not None and alpha is not None:
        a = params.aniso
        mod = 1.0 + a.weight * (
            (8.0 / 3.0) * np.sin(0.5 * a.mode * (alpha - a.angle0)) ** 4 - 1.0
        )
        eps_k = params.eps_kappa * mod
    return params.t_melt - params.eps_v * v_prev - eps_k * kappa


@dataclass
class BoundarySide:
    """One outer-boundary side: 'neumann' flux or 'dirichlet' value.

    The sampler is value(s) with s the coordinate running along the side
    (x for bottom/top, y for left/right); constants are accepted.
    """

    kind: str = "neumann"
    value: object = 0.0

    def sample(self, s):
        if callable(self.value):
            return np.asarray(self.value(s), dtype=float)
        return np.full_like(np.asarray(s, dtype=float), float(self.value))


@dataclass
class BoundaryCondition:
    left: BoundarySide = field(default_factory=BoundarySide)
    right: BoundarySide = field(default_factory=BoundarySide)
    bottom: BoundarySide = field(default_factory=BoundarySide)
    top: BoundarySide = field(default_factory=BoundarySide)

    @classmethod
    def insulated(cls):
        return cls()

    @classmethod
    def uniform(cls, kind, value):
        return cls(*(BoundarySide(kind, value) for _ in range(4)))

    def sides(self):
        return (("left", self.left), ("right", self.right),
                ("bottom", self.bottom), ("top", self.top))


def assemble_heat_operator(geom: CellGeometry, phase, k_phase, t_d, bc,
                           stencils=None):
    """Integrated heat operator L and affine load b for one phase.

    Rows hold the face-integrated fluxes of the cell: the fluid part is a
    two-point flux weighted by the wetted face areas (the divergence is the
    negative transpose of that gradient, so the bulk block is symmetric),
    and each cut cell additionally receives the interface flux
    k * seg * G with G the one-sided Johansen-Colella normal derivative
    built from the interface temperature t_d.  Returns (L, b) in flat cell
    ordering; rows and columns of EMPTY cells are zero.
    """
    grid = geom.grid
    nx, ny, h = grid.nx, grid.ny, grid.h
    n = nx * ny
    cap = geom.capacities(phase)

    idx = np.arange(n).reshape(grid.shape)
    rows, cols, vals = [], [], []
    b = np.zeros(n)

    def add_faces(axis):
        a_f = cap.ax[1:-1, :] if axis == 0 else cap.ay[:, 1:-1]
        if axis == 0:
            ilo, ihi = idx[:-1, :], idx[1:, :]
        else:
            ilo, ihi = idx[:, :-1], idx[:, 1:]
        w = k_phase * a_f / h
        act = a_f > 0.0
        r_lo, r_hi, ww = ilo[act], ihi[act], w[act]
        rows.extend((r_lo, r_hi, r_lo, r_hi))
        cols.extend((r_lo, r_hi, r_hi, r_lo))
        vals.extend((-ww, -ww, ww, ww))

    add_faces(0)
    add_faces(1)

    # Interface flux through the reconstructed segment of every cut cell.
    if len(geom.cut) and t_d is not None:
        if stencils is None:
            stencils = build_jc_stencils(geom, phase)
        seg = geom.cut.length
        p_rows = idx[geom.cut.i, geom.cut.j]
        scale = k_phase * seg
        b[p_rows] += scale * stencils.c_td * np.asarray(t_d, dtype=float)
        entry = stencils.cols >= 0
        rr = np.repeat(p_rows, entry.sum(axis=1))
        rows.append(rr)
        cols.append(stencils.cols[entry])
        vals.append((scale[:, None] * stencils.coef)[entry])

    # Outer boundary: Neumann flux u enters the load directly; Dirichlet
    # values are eliminated through a mirrored ghost at distance h.
    for name, side in bc.sides():
        cells, faces, s = _boundary_cells(grid, name)
        a_b = (cap.ax if name in ("left", "right") else cap.ay)[faces]
        u = side.sample(s)
        if side.kind == "neumann":
            b[cells] += k_phase * a_b * u
        elif side.kind == "dirichlet":
            coef = 2.0 * k_phase * a_b / h
            rows.append(cells)
            cols.append(cells)
            vals.append(-coef)
            b[cells] += coef * u
        else:
            raise ValueError(f"unknown boundary kind {side.kind!r}")

    L = sp.csr_matrix(
        (np.concatenate([np.ravel(v) for v in vals]),
         (np.concatenate([np.ravel(r) for r in rows]),
          np.concatenate([np.ravel(c) for c in cols]))),
        shape=(n, n),
    )
    return L, b


def _boundary_cells(grid, name):
    """Flat cell indices, capacity-array indices, and side coordinate."""
    nx, ny = grid.nx, grid.ny
    idx = np.arange(nx * ny).reshape(grid.shape)
    if name == "left":
        return idx[0, :], (0, slice(None)), grid.yc()
    if name == "right":
        return idx[-1, :], (nx, slice(None)), grid.yc()
    if name == "bottom":
        return idx[:, 0], (slice(None), 0), grid.xc()
    if name == "top":
        return idx[:, -1], (slice(None), ny), grid.xc()
    raise ValueError(name)


def step_crank_nicolson(T, geom, phase, params, t_d, bc, dt, rtol=1e-10,
                        stencils=None, theta=0.5):
    """Advance one phase temperature by dt with a theta scheme.

    Solves (M/dt - theta L) T_new = (M/dt + (1-theta) L) T_old + b with M
    the heat-capacity-weighted volume diagonal; theta = 0.5 is the
    Crank-Nicolson default, theta = 1 the damped startup step.  EMPTY
    cells are pinned at zero.  The adjoint sweep reuses this step
    unchanged: the reverse-time heat equation on a frozen frame has the
    same algebra.
    """
    grid = geom.grid
    i = phase - 1
    k_phase = params.k[i]
    rho_c = params.rho[i] * params.c[i]
    valid = geom.valid_mask(phase).ravel()
    if not valid.any():
        warnings.warn(f"phase {phase} has no cells; temperature unchanged")
        return T.copy()

    L, b = assemble_heat_operator(geom, phase, k_phase, t_d, bc,
                                  stencils=stencils)
    cap = geom.capacities(phase)
    # Safety net: a valid cell with no face aperture at all cannot couple;
    # pin it to the interface temperature (the vanishing-cell limit).
    aper = (cap.ax[:-1, :] + cap.ax[1:, :] + cap.ay[:, :-1] + cap.ay[:, 1:])
    orphan = valid & (aper.ravel() <= 0.0)
    td_grid = np.zeros(grid.n_cells)
    if len(geom.cut) and t_d is not None:
        td_grid[geom.cut.i * grid.ny + geom.cut.j] = t_d
    solve_mask = valid & ~orphan
    Lm = _mask_rows(L, solve_mask)
    m = rho_c * cap.vol.ravel() / dt
    dia = sp.diags(np.where(solve_mask, m, 1.0))
    lhs = (dia - theta * Lm).tocsr()
    rhs = np.where(solve_mask, m * T.ravel(), 0.0)
    if theta < 1.0:
        rhs += (1.0 - theta) * (Lm @ T.ravel())
    rhs += np.where(solve_mask, b, 0.0)
    rhs[orphan] = td_grid[orphan]

    x, res = _solve(lhs, rhs, x0=T.ravel(), rtol=rtol)
    if res > 10 * rtol:
        raise NumericsError(f"temperature solve residual {res:.3e} exceeds {rtol:.1e}")
    out = x.reshape(grid.shape)
    out[~valid.reshape(grid.shape)] = 0.0
    return out


def _mask_rows(L, valid):
    d = sp.diags(valid.astype(float))
    return d @ L @ d


def _solve(A, b, x0=None, rtol=1e-10):
    """Krylov solve with Jacobi preconditioning, direct fallback."""
    dg = A.diagonal()
    ml = sp.diags(np.where(np.abs(dg) > 0, 1.0 / np.where(dg == 0, 1.0, dg), 1.0))
    x, info = spla.bicgstab(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=2000, M=ml)
    if info != 0:
        x = spla.spsolve(A.tocsc(), b)
    nb = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b) / (nb if nb > 0 else 1.0)
    return x, res
