"""Preset configurations for the validation and control cases.

Each function returns a CaseConfig at its reference resolution; pass n to
scale the grid.  Reference actuator amplitudes used to manufacture
optimization targets are package choices (the benchmark shape, not the
algorithm) and live here so every run is reproducible.
"""

import numpy as np
from scipy.special import exp1

from .config import CaseConfig, OptimizerSettings
from .grid import Grid
from .thermal import Anisotropy, MaterialParams


def _undercooled_outside(t_inf):
    """Phase 1 at melt temperature, phase 2 uniformly under-cooled."""

    def init(xx, yy, phi):
        t1 = np.zeros_like(xx)
        t2 = np.full_like(xx, t_inf)
        return t1, t2

    return init


def frank_undercooling(s):
    """Far-field temperature matching a self-similar growth rate s."""
    z = s * s / 4.0
    return -z * np.exp(z) * exp1(z)


def case_frank(n=64, t_final=2.0):
    """Growing circular seed in an under-cooled melt, radius R0 sqrt(t)."""
    r0 = 1.56
    t_inf = -0.5
    grid = Grid.from_domain(n, n, 8.0, origin=(-4.0, -4.0))
    fr = exp1(r0 * r0 / 4.0)

    def init(xx, yy, phi):
        r = np.maximum(np.hypot(xx, yy), 1e-12)
        t2 = t_inf * (1.0 - exp1(r * r / 4.0) / fr)
        return np.zeros_like(xx), t2

    return CaseConfig(
        name="frank", grid=grid, params=MaterialParams(),
        shape_kind="circle", shape_params={"radius": r0},
        t_start=1.0, t_final=t_final, cfl=0.5,
        temp_init=init, record="light",
    )


def case_dendrite(n=200, eps_kappa=0.0004, t_final=0.5, cfl=2.0):
    """Four-fold seed crystal growing in an under-cooled melt."""
    grid = Grid.from_domain(n, n, 2.0, origin=(-1.0, -1.0))
    params = MaterialParams(eps_kappa=eps_kappa)
    return CaseConfig(
        name="dendrite", grid=grid, params=params,
        shape_kind="crystal_k_fold", shape_params={"k": 4},
        t_final=t_final, cfl=cfl,
        initial_reinit=60,
        temp_init=_undercooled_outside(-0.5), record="light",
    )


def case_anisotropy(n=160, angle0=np.pi / 4, mode=4, t_final=0.06, cfl=2.0):
    """Anisotropic surface tension steering dendrite orientation."""
    grid = Grid.from_domain(n, n, 2.0, origin=(-1.0, -1.0))
    params = MaterialParams(
        eps_kappa=0.001,
        aniso=Anisotropy(weight=0.4, mode=mode, angle0=angle0),
    )
    return CaseConfig(
        name="anisotropy", grid=grid, params=params,
        shape_kind="crystal_k_fold",
        shape_params={"k": mode, "phase": np.pi / mode},
        t_final=t_final, cfl=cfl,
        initial_reinit=60,
        temp_init=_undercooled_outside(-0.8), record="light",
    )


def case_melting_circle(n=64, t_final=0.1):
    """Solid disk with Dirichlet boundary actuation on all four sides."""
    grid = Grid.from_domain(n, n, 2.0, origin=(-1.0, -1.0))
    params = MaterialParams(eps_kappa=0.002)
    opt = OptimizerSettings(
        betas=(1.0, 10.0, 0.0, 1e-3),
        parameterization="fourier4",
        u_ref=(0.5, 0.2, 0.3, -0.1),
        control_kind="dirichlet",
        control_sides=("left", "right", "bottom", "top"),
    )
    return CaseConfig(
        name="melting_circle", grid=grid, params=params,
        shape_kind="circle", shape_params={"radius": 0.75},
        t_final=t_final, cfl=0.5,
        temp_init=None, optimizer=opt, record="full",
    )


def case_mullins(n=64, t_final=0.5):
    """Perturbed planar front; Neumann actuation on the top wall fights
    the finger instability."""
    grid = Grid.from_domain(n, n, 2.0, origin=(-1.0, -1.0))
    params = MaterialParams()
    t_inf = 1.2

    def init(xx, yy, phi):
        t1 = np.zeros_like(xx)
        t2 = np.where(phi > 0.0, -1.0 + np.exp(-t_inf * phi), 0.0)
        return t1, t2

    opt = OptimizerSettings(
        betas=(1.0, 10.0, 0.1, 1e-4),
        parameterization="fourier8",
        u_ref=(0.4, 0.1, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0),
        control_kind="neumann",
        control_sides=("top",),
    )
    return CaseConfig(
        name="mullins", grid=grid, params=params,
        shape_kind="perturbed_plane",
        shape_params={"offset": 0.6, "amplitude": 0.05},
        t_final=t_final, cfl=0.5,
        temp_init=init, optimizer=opt, record="full",
    )


def case_crystals(n=100, t_final=0.45):
    """Three anisotropic seeds growing and merging under corner actuation."""
    grid = Grid.from_domain(n, n, 4.0, origin=(-2.0, -2.0))
    params = MaterialParams(
        eps_kappa=0.0005, eps_v=0.002,
        aniso=Anisotropy(weight=0.4, mode=4, angle0=np.pi / 2),
    )
    opt = OptimizerSettings(
        betas=(1.0, 1.0, 0.0, 1e-2),
        parameterization="corner2",
        u_ref=(1.5, 1.0),
        control_kind="neumann",
        control_sides=("left", "right", "bottom", "top"),
        grad_tol=1e-3,
    )
    return CaseConfig(
        name="crystals", grid=grid, params=params,
        shape_kind="three_crystals",
        shape_params={
            "centers": ((-0.9, -0.55), (0.75, -0.1), (-0.1, 0.8)),
            "k": 4, "base": 0.09, "amp": 0.02, "r0": 0.04,
        },
        t_final=t_final, cfl=1.0,
        initial_reinit=60,
        temp_init=_undercooled_outside(-0.6), optimizer=opt, record="full",
    )


CASES = {
    "frank": case_frank,
    "dendrite": case_dendrite,
    "anisotropy": case_anisotropy,
    "melting_circle": case_melting_circle,
    "mullins": case_mullins,
    "crystals": case_crystals,
}
