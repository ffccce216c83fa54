"""JSON run configuration: parsing, validation with field paths, defaults.

``merged`` fills every default and ``parse_problem`` makes derived values
(the volume target) explicit. Writing the resulting dict back to disk and
re-running from it reproduces the run exactly.
"""

from __future__ import annotations

import copy
import json
import math

import numpy as np

from .elasticity import LoadCase
from .errors import ConfigError
from .geometry import ALL_TAGS, LOADED_TAGS, BasicDesign, DesignConstraints, DesignField, Tag
from .material import MaterialParams
from .shapeopt import KINDS, BumpBasis, CostSpec, OptimizerOptions, Problem

DEFAULTS = {
    "seed": 0,
    "material": {"m": 2.0, "amplitude_factor": 0.5},
    "life": {"n_points": 50, "N_range": [1.0, 1e7], "probe_sigma_v": None},
    "constraints": {"L1": None, "k": 4, "derivative_tol": 0.05},
    "design": {"grid": [31, 31], "basis_size": 4, "basis_power": None,
               "initial_coefficients": 0.0, "file": None},
    "load": {"body_force": None, "traction": None, "traction_on": "loaded", "t_star": 0.0},
    "discretization": {"h": None, "rel_tol": 1e-10, "admissibility_tol": 1e-6},
    "reliability": {"hazard_domain": "all", "histories": 0, "t_max": None, "t_max_factor": 3.0},
    "optimizer": {"kind": "pof", "step": 0.1, "shrink": 0.5, "min_step": 1e-3, "max_iterations": 20},
}

SECTIONS_FOR = {
    "life": ("material", "life"),
    "assess": ("material", "basic_design", "constraints", "design", "load", "discretization", "reliability"),
    "sample": ("material", "basic_design", "constraints", "design", "load", "discretization", "reliability"),
    "optimize": ("material", "basic_design", "constraints", "design", "load", "discretization",
                 "reliability", "optimizer"),
}

TRACTION_DOMAINS = {"loaded": LOADED_TAGS, "designed": (Tag.DESIGNED,), "neumann": (Tag.NEUMANN,)}
HAZARD_DOMAINS = {"all": ALL_TAGS, "loaded": LOADED_TAGS}


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror or exc}") from exc


def _section(cfg, name, required=True):
    if name not in cfg:
        if required:
            raise ConfigError(name, "missing section")
        return {}
    sec = cfg[name]
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be an object")
    return sec


def _number(sec, path, key, required=True, positive=False, negative=False, integer=False):
    full = f"{path}.{key}"
    if key not in sec or sec[key] is None:
        if required:
            raise ConfigError(full, "required")
        return None
    value = sec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(full, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(full, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(full, "must be finite")
    if positive and not value > 0:
        raise ConfigError(full, f"must be positive, got {value!r}")
    if negative and not value < 0:
        raise ConfigError(full, f"must be negative, got {value!r}")
    return int(value) if integer else float(value)


def _vector(value, path, n=3):
    arr = np.asarray(value, dtype=float) if isinstance(value, (list, tuple)) else None
    if arr is None or arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ConfigError(path, f"expected a list of {n} finite numbers, got {value!r}")
    return arr


def merged(cfg):
    """Config with defaults filled in for every present (or default-able) section."""
    out = copy.deepcopy(cfg)
    for name, defaults in DEFAULTS.items():
        if name == "seed":
            out.setdefault("seed", defaults)
            continue
        if name in out or name in ("life", "reliability", "optimizer", "design", "discretization", "constraints"):
            sec = out.setdefault(name, {})
            if not isinstance(sec, dict):
                raise ConfigError(name, "must be an object")
            for key, value in defaults.items():
                sec.setdefault(key, copy.deepcopy(value))
    return out


def require_sections(cfg, command):
    for name in SECTIONS_FOR[command]:
        _section(cfg, name)


def parse_material(cfg) -> MaterialParams:
    sec = _section(cfg, "material")
    path = "material"
    kw = {}
    for key in ("K", "n_prime", "sigma_f", "eps_f"):
        kw[key] = _number(sec, path, key, positive=True)
    for key in ("b", "c"):
        kw[key] = _number(sec, path, key, negative=True)
    kw["m"] = _number(sec, path, "m")
    if kw["m"] < 1:
        raise ConfigError("material.m", "Weibull shape must be >= 1")
    kw["amplitude_factor"] = _number(sec, path, "amplitude_factor", positive=True)
    if "lam" in sec or "mu" in sec:
        return MaterialParams(lam=_number(sec, path, "lam", positive=True),
                              mu=_number(sec, path, "mu", positive=True), **kw)
    E = _number(sec, path, "E", positive=True)
    nu = _number(sec, path, "nu")
    if not -1 < nu < 0.5:
        raise ConfigError("material.nu", "Poisson ratio must lie in (-1, 0.5)")
    return MaterialParams.from_engineering(E, nu, **kw)


def parse_basic(cfg) -> BasicDesign:
    sec = _section(cfg, "basic_design")
    path = "basic_design"
    try:
        return BasicDesign(
            xlim=tuple(_vector(sec.get("xlim"), f"{path}.xlim", 2)),
            ylim=tuple(_vector(sec.get("ylim"), f"{path}.ylim", 2)),
            z_bottom=_number(sec, path, "z_bottom"),
            alpha_min=_number(sec, path, "alpha_min"),
            alpha_max=_number(sec, path, "alpha_max"),
            center=tuple(_vector(sec.get("center"), f"{path}.center")),
            radius=_number(sec, path, "radius", positive=True),
            r_ext=_number(sec, path, "r_ext", required=False, positive=True),
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def design_grid(cfg, basic) -> DesignField:
    sec = _section(cfg, "design")
    grid = sec.get("grid")
    if not (isinstance(grid, list) and len(grid) == 2 and all(isinstance(n, int) and n >= 3 for n in grid)):
        raise ConfigError("design.grid", f"expected [n1, n2] with n >= 3, got {grid!r}")
    return basic.grid(*grid)


def make_basis(cfg, basic, grid) -> BumpBasis:
    sec = _section(cfg, "design")
    n = _number(sec, "design", "basis_size", positive=True, integer=True)
    power = _number(sec, "design", "basis_power", required=False, positive=True, integer=True)
    k = _number(_section(cfg, "constraints"), "constraints", "k", positive=True, integer=True)
    try:
        return BumpBasis(n, k, grid, basic.alpha_min, power=power)
    except ValueError as exc:
        raise ConfigError("design.basis_power", str(exc)) from exc


def initial_coefficients(cfg, basis) -> np.ndarray:
    value = _section(cfg, "design").get("initial_coefficients")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(basis.shape, float(value))
    arr = np.asarray(value, dtype=float) if isinstance(value, list) else None
    if arr is None or arr.size != basis.n ** 2:
        raise ConfigError("design.initial_coefficients",
                          f"expected a number or {basis.n}x{basis.n} nested list")
    return arr.reshape(basis.shape)


def initial_design(cfg, basic) -> tuple:
    """(basis, design field) for the configured initial design.

    A design CSV in ``design.file`` takes precedence over basis coefficients.
    """
    grid = design_grid(cfg, basic)
    basis = make_basis(cfg, basic, grid)
    path = _section(cfg, "design").get("file")
    if path:
        try:
            field = DesignField.from_csv(path, origin=(basic.xlim[0], basic.ylim[0]))
        except (OSError, ValueError) as exc:
            raise ConfigError("design.file", str(exc)) from exc
        if not field.same_grid(grid):
            raise ConfigError("design.file", "design CSV grid does not match design.grid over the cross-section")
        return basis, field
    return basis, basis.field(initial_coefficients(cfg, basis))


def parse_constraints(cfg, basic, volume_hint) -> DesignConstraints:
    sec = _section(cfg, "constraints")
    path = "constraints"
    L1 = _number(sec, path, "L1", required=False, positive=True)
    if L1 is None:
        L1 = volume_hint
    bd = {}
    for key, value in (sec.get("boundary_derivatives") or {}).items():
        try:
            i, j = (int(s) for s in key.split(","))
        except ValueError as exc:
            raise ConfigError(f"{path}.boundary_derivatives", f"keys must look like \"i,j\", got {key!r}") from exc
        bd[(i, j)] = float(value)
    try:
        c = DesignConstraints(
            L1=L1,
            L2=_number(sec, path, "L2", positive=True),
            L3=_number(sec, path, "L3", positive=True),
            k=_number(sec, path, "k", positive=True, integer=True),
            boundary_derivatives=bd,
            derivative_tol=_number(sec, path, "derivative_tol"),
        )
        c.check_volume_range(basic)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    return c


def _profile(value, path, with_normals):
    """Constant vector, {"pressure": p} or {"value": v, "gradient": G} (affine in x)."""
    if value is None:
        return None
    if isinstance(value, list):
        return _vector(value, path)
    if not isinstance(value, dict):
        raise ConfigError(path, f"unsupported load profile {value!r}")
    if "pressure" in value:
        if not with_normals:
            raise ConfigError(path, "pressure profiles apply to tractions only")
        p = _number(value, path, "pressure")
        return lambda x, n: p * np.asarray(n)
    v0 = _vector(value.get("value", [0, 0, 0]), f"{path}.value")
    G = np.asarray(value.get("gradient", np.zeros((3, 3))), dtype=float)
    if G.shape != (3, 3):
        raise ConfigError(f"{path}.gradient", "expected a 3x3 nested list")
    if with_normals:
        return lambda x, n: v0 + np.asarray(x) @ G.T
    return lambda x: v0 + np.asarray(x) @ G.T


def parse_load(cfg) -> LoadCase:
    sec = _section(cfg, "load")
    on = sec.get("traction_on", "loaded")
    if on not in TRACTION_DOMAINS:
        raise ConfigError("load.traction_on", f"expected one of {sorted(TRACTION_DOMAINS)}, got {on!r}")
    t_star = _number(sec, "load", "t_star")
    if t_star < 0:
        raise ConfigError("load.t_star", "must be nonnegative")
    return LoadCase(
        body_force=_profile(sec.get("body_force"), "load.body_force", False),
        traction=_profile(sec.get("traction"), "load.traction", True),
        t_star=t_star,
        traction_tags=TRACTION_DOMAINS[on],
    )


def parse_problem(cfg) -> tuple:
    """(problem, basis, initial design) from a merged config; fills constraints.L1 if absent."""
    basic = parse_basic(cfg)
    basis, alpha = initial_design(cfg, basic)
    constraints = parse_constraints(cfg, basic, alpha.volume())
    cfg["constraints"]["L1"] = constraints.L1
    disc = _section(cfg, "discretization")
    h = _number(disc, "discretization", "h", positive=True)
    rel = _section(cfg, "reliability")
    domain = rel.get("hazard_domain", "all")
    if domain not in HAZARD_DOMAINS:
        raise ConfigError("reliability.hazard_domain", f"expected one of {sorted(HAZARD_DOMAINS)}, got {domain!r}")
    problem = Problem(
        basic=basic, constraints=constraints, material=parse_material(cfg), load=parse_load(cfg), h=h,
        hazard_tags=HAZARD_DOMAINS[domain],
        rel_tol=_number(disc, "discretization", "rel_tol", positive=True),
        admissibility_tol=_number(disc, "discretization", "admissibility_tol", positive=True),
    )
    return problem, basis, alpha


def parse_optimizer(cfg, threads=1) -> tuple:
    sec = _section(cfg, "optimizer")
    kind = sec.get("kind", "pof")
    if kind not in KINDS or kind == "custom_local":
        raise ConfigError("optimizer.kind", f"expected 'pof' or 'det_life', got {kind!r}")
    opts = OptimizerOptions(
        step=_number(sec, "optimizer", "step", positive=True),
        shrink=_number(sec, "optimizer", "shrink", positive=True),
        min_step=_number(sec, "optimizer", "min_step", positive=True),
        max_iterations=_number(sec, "optimizer", "max_iterations", integer=True),
        threads=threads,
    )
    if not opts.shrink < 1:
        raise ConfigError("optimizer.shrink", "must lie in (0, 1)")
    if opts.max_iterations < 0:
        raise ConfigError("optimizer.max_iterations", "must be nonnegative")
    return CostSpec(kind=kind), opts


def benchmark_config():
    """Documented benchmark: box block with a clamped spherical cavity, pulled on its designed top.

    Dimensions in mm, stresses in MPa. ~8.7k degrees of freedom at h = 0.2.
    """
    return {
        "seed": 20261018,
        "material": {
            "E": 210000.0, "nu": 0.3, "K": 1100.0, "n_prime": 0.12,
            "sigma_f": 1800.0, "eps_f": 0.45, "b": -0.09, "c": -0.56, "m": 3.0,
            "amplitude_factor": 0.5,
        },
        "life": {"n_points": 50, "N_range": [1.0, 1e7], "probe_sigma_v": 1200.0},
        "basic_design": {
            "xlim": [0.0, 3.0], "ylim": [0.0, 3.0], "z_bottom": 0.0,
            "alpha_min": 2.0, "alpha_max": 3.0, "center": [1.5, 1.5, 1.0], "radius": 0.5,
        },
        "constraints": {"L1": None, "L2": 200.0, "L3": 1000.0, "k": 4, "derivative_tol": 0.05},
        "design": {"grid": [31, 31], "basis_size": 4, "initial_coefficients": 0.06},
        "load": {"traction": [0.0, 0.0, 400.0], "traction_on": "designed", "t_star": 2000.0},
        "discretization": {"h": 0.2, "rel_tol": 1e-10},
        "reliability": {"hazard_domain": "all", "histories": 10000, "t_max_factor": 3.0},
        "optimizer": {"kind": "pof", "step": 0.15, "shrink": 0.5, "min_step": 0.01, "max_iterations": 6},
    }
