"""Case configuration: dataclass, INI-style file parsing, and writing.

The on-disk format is flat key = value text with [sections]; every paper
case ships as such a file under configs/.  Unknown keys are rejected so
typos fail loudly.
"""

import configparser
from dataclasses import dataclass

from .grid import Grid
from .thermal import MaterialParams


@dataclass
class OptimizerSettings:
    betas: tuple = (1.0, 0.0, 0.0, 0.0)
    parameterization: str = "fourier4"
    u_ref: tuple = ()
    control_kind: str = "neumann"          # outer-BC kind of the control
    control_sides: tuple = ("left", "right", "bottom", "top")
    max_iterations: int = 40
    grad_tol: float = 1e-2                 # relative gradient-norm drop
    plateau_tol: float = 1e-4
    plateau_span: int = 3
    memory: int = 10


@dataclass
class CaseConfig:
    name: str
    grid: Grid
    params: MaterialParams
    shape_kind: str
    shape_params: dict
    t_final: float
    t_start: float = 0.0
    cfl: float = 0.5
    band_width: int = 6
    reinit_iters: int = 0            # 0 -> 2 * band_width
    initial_reinit: int = 0          # 0 -> none (shape already distance-like)
    temp_init: object = None         # callable (xx, yy, phi) -> (T1, T2)
    solve_phases: tuple = (True, True)
    bc_kind: str = "neumann"
    bc_value: float = 0.0
    front_smoothing: int = 2     # neighbor-average passes on front speeds
    front_cfl: float = 0.45      # advective cap: dt <= front_cfl * h / max|V|
    record: str = "full"
    optimizer: OptimizerSettings | None = None
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if self.t_final <= self.t_start:
            raise ValueError("t_final must exceed t_start")
        if self.cfl <= 0:
            raise ValueError("CFL must be positive")
        if self.band_width < 1:
            raise ValueError("band width must be >= 1")
        if self.optimizer is not None:
            if any(b < 0 for b in self.optimizer.betas):
                raise ValueError("cost weights must be nonnegative")

    @property
    def dt(self):
        return self.cfl * self.grid.h ** 2

    @property
    def reinit_per_step(self):
        return self.reinit_iters if self.reinit_iters > 0 else 2 * self.band_width


_GRID_KEYS = {"n", "nx", "ny", "extent", "extent_x", "extent_y",
              "origin_x", "origin_y"}
_MATERIAL_KEYS = {"rho1", "rho2", "c1", "c2", "k1", "k2", "latent", "t_melt",
                  "eps_kappa", "eps_v", "aniso_weight", "aniso_mode",
                  "aniso_angle0"}
_TIME_KEYS = {"t_start", "t_final", "cfl"}
_LEVELSET_KEYS = {"band_width", "reinit_iters", "initial_reinit"}
_CASE_KEYS = {"name", "shape", "record", "seed", "out_dir", "solve_phase1",
              "solve_phase2", "bc_kind", "bc_value", "temp_init", "t_inf"}
_OPT_KEYS = {"beta1", "beta2", "beta3", "beta4", "parameterization", "u_ref",
             "control_kind", "control_sides", "max_iterations", "grad_tol"}


class ConfigError(ValueError):
    pass


def load_config(path):
    """Parse a case file; raises ConfigError with the offending key."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    from . import cases

    def section(name):
        return cp[name] if cp.has_section(name) else {}

    for sec, allowed in (("grid", _GRID_KEYS), ("material", _MATERIAL_KEYS),
                         ("time", _TIME_KEYS), ("levelset", _LEVELSET_KEYS),
                         ("case", _CASE_KEYS), ("shape", None),
                         ("optimize", _OPT_KEYS)):
        if cp.has_section(sec) and allowed is not None:
            for key in cp[sec]:
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in section [{sec}]")

    case_sec = section("case")
    preset = case_sec.get("name")
    if preset and hasattr(cases, f"case_{preset}"):
        n_override = None
        if cp.has_section("grid") and "n" in cp["grid"]:
            n_override = int(cp["grid"]["n"])
        cfg = getattr(cases, f"case_{preset}")(
            n=n_override) if n_override else getattr(cases, f"case_{preset}")()
        if cp.has_section("time"):
            t = section("time")
            if "t_final" in t:
                cfg.t_final = float(t["t_final"])
            if "cfl" in t:
                cfg.cfl = float(t["cfl"])
        if "out_dir" in case_sec:
            cfg.out_dir = case_sec["out_dir"]
        if "seed" in case_sec:
            cfg.seed = int(case_sec["seed"])
        if "record" in case_sec:
            cfg.record = case_sec["record"]
        return cfg
    raise ConfigError(
        "config must name a shipped case preset via [case] name = <id>; "
        f"got {preset!r}"
    )


def write_config(cfg, path):
    cp = configparser.ConfigParser()
    cp["case"] = {"name": cfg.name, "record": cfg.record,
                  "seed": str(cfg.seed), "out_dir": cfg.out_dir}
    cp["grid"] = {"n": str(cfg.grid.nx)}
    cp["time"] = {"t_start": str(cfg.t_start), "t_final": str(cfg.t_final),
                  "cfl": str(cfg.cfl)}
    with open(path, "w") as fh:
        cp.write(fh)
