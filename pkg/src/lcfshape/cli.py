"""Batch front end: ``lcfshape {life,assess,sample,optimize} --config run.json --out DIR``.

Every run writes the effective configuration to ``DIR/config.json``; feeding
that file back in reproduces the outputs. Exit status is 0 on success, 2 for
configuration or admissibility errors and 1 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import config as cfgmod
from . import elasticity as ela
from . import vtk
from .errors import ConfigError, ConstraintError, LcfError
from .geometry import ALL_TAGS, check_admissible, surface_quadrature
from .material import cmb_inverse, en_curve, neuber_shakedown, ramberg_osgood, write_en_curve
from .reliability import (
    first_failure, hazard, sample_histories, weibull_cdf, write_histories,
)
from .shapeopt import CostSpec, convergence_diagnostic, evaluate_cost, optimize

log = logging.getLogger("lcfshape")


def _json_value(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (np.floating, np.integer)):
        return _json_value(v.item())
    return v


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump({k: _json_value(v) for k, v in data.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(cfg, out):
    with open(out / "config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_life(cfg, out, args):
    p = cfgmod.parse_material(cfg)
    sec = cfg["life"]
    n_points = cfgmod._number(sec, "life", "n_points", positive=True, integer=True)
    if n_points < 2:
        raise ConfigError("life.n_points", "must be >= 2")
    N_range = sec.get("N_range")
    if not (isinstance(N_range, list) and len(N_range) == 2 and 0 < N_range[0] < N_range[1]):
        raise ConfigError("life.N_range", f"expected [N_lo, N_hi] with 0 < N_lo < N_hi, got {N_range!r}")
    write_en_curve(out / "en_curve.csv", en_curve(p, n_points, tuple(N_range)))
    probe = cfgmod._number(sec, "life", "probe_sigma_v", required=False)
    if probe is not None:
        if probe < 0:
            raise ConfigError("life.probe_sigma_v", "must be nonnegative")
        amp = p.amplitude_factor * probe
        sd = neuber_shakedown(amp, p)
        strain = ramberg_osgood(sd, p)
        life = cmb_inverse(strain, p) if strain > 0 else math.inf
        write_json(out / "life.json", {
            "sigma_v": probe, "sigma_a": amp, "sigma_elpl": sd, "eps_elpl": strain, "life": life,
            "E": p.E,
        })
    return 0


def _full_surface(u, mesh, p):
    return ela.surface_field(u, surface_quadrature(mesh, ALL_TAGS), p)


def _write_fields(out, ev, p):
    mesh = ev.mesh
    sf_all = _full_surface(ev.displacement, mesh, p)
    vtk.write_mesh(out / "mesh.vtk", mesh, point_vectors={"displacement": ev.displacement.u})
    with np.errstate(divide="ignore"):
        inv = 1.0 / sf_all.n_det
    vtk.write_surface(out / "surface.vtk", mesh,
                      cell_scalars={"sigma_v": sf_all.sigma_v, "n_det": sf_all.n_det, "inv_n_det": inv})


def _report_dict(ev, problem):
    d = ev.report.to_dict()
    d.update({
        "J": ev.J,
        "n_faces": len(ev.surface),
        "area": ev.surface.area,
        "n_elements": ev.mesh.n_elements,
        "n_dof": 3 * ev.mesh.n_nodes,
        "cg_iterations": ev.displacement.iterations,
        "cg_residual": ev.displacement.residual,
        "volume": ev.mesh.volume(),
        "volume_violation": ev.admissibility.volume_violation,
        "hazard_domain": "all" if tuple(problem.hazard_tags) == ALL_TAGS else "loaded",
    })
    return d


def _assess(cfg):
    problem, basis, alpha = cfgmod.parse_problem(cfg)
    adm = check_admissible(alpha, problem.constraints, problem.basic, problem.admissibility_tol)
    if not adm.passed:
        raise ConstraintError("initial design not admissible: " + ", ".join(adm.failures()), report=adm)
    ev = evaluate_cost(alpha, CostSpec(), problem)
    return problem, alpha, ev


def cmd_assess(cfg, out, args):
    problem, alpha, ev = _assess(cfg)
    alpha.to_csv(out / "design.csv")
    write_json(out / "report.json", _report_dict(ev, problem))
    _write_fields(out, ev, problem.material)
    return 0


def cmd_sample(cfg, out, args):
    problem, alpha, ev = _assess(cfg)
    rel = cfg["reliability"]
    count = cfgmod._number(rel, "reliability", "histories", integer=True)
    if count < 0:
        raise ConfigError("reliability.histories", "must be nonnegative")
    m = problem.m
    eta = ev.report.eta
    t_max = cfgmod._number(rel, "reliability", "t_max", required=False, positive=True)
    if t_max is None:
        factor = cfgmod._number(rel, "reliability", "t_max_factor", positive=True)
        # zero hazard: any horizon gives empty histories
        t_max = factor * eta if math.isfinite(eta) else max(problem.load.t_star, 1.0)
    histories = sample_histories(ev.surface, m, t_max, cfg["seed"], count)
    write_histories(out / "histories.csv", histories)
    firsts = np.array([first_failure(h) for h in histories])
    with open(out / "first_failures.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["history", "t_first"])
        for i, t in enumerate(firsts):
            w.writerow([i, "inf" if math.isinf(t) else repr(float(t))])
    H = hazard(ev.surface, m, t_max)
    counts = np.array([len(h) for h in histories], dtype=float)
    finite = firsts[np.isfinite(firsts)]
    summary = {
        "histories": count, "t_max": t_max, "H_t_max": H, "eta": eta, "m": m,
        "mean_events": float(counts.mean()) if count else 0.0,
        "mean_events_stderr": math.sqrt(H / count) if count else 0.0,
        "finite_first_failures": int(len(finite)),
    }
    if len(finite) >= 2 and math.isfinite(eta):
        # first failure conditioned on occurring before t_max
        norm = float(weibull_cdf(t_max, m, eta))
        res = stats.kstest(finite, lambda t: weibull_cdf(t, m, eta) / norm)
        summary.update({"ks_statistic": float(res.statistic), "ks_pvalue": float(res.pvalue)})
    write_json(out / "sample_summary.json", summary)
    write_json(out / "report.json", _report_dict(ev, problem))
    return 0


def cmd_optimize(cfg, out, args):
    if cfg["design"].get("file"):
        raise ConfigError("design.file", "optimize starts from basis coefficients, not a design CSV")
    problem, basis, alpha0 = cfgmod.parse_problem(cfg)
    spec, options = cfgmod.parse_optimizer(cfg, threads=args.threads)
    coeffs = cfgmod.initial_coefficients(cfg, basis)
    state = optimize(coeffs, spec, problem, options, basis=basis)
    state.write_trajectory(out / "trajectory.csv")
    state.write_evaluations(out / "evaluations.csv")
    state.design(0).to_csv(out / "design_initial.csv")
    state.design(-1).to_csv(out / "design_final.csv")
    designs = out / "designs"
    designs.mkdir(exist_ok=True)
    for it in state.trajectory:
        state.basis.field(it.coeffs).to_csv(designs / f"iter_{it.index:03d}.csv")
    if len(state.trajectory) >= 2:
        with open(out / "convergence.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "ck_distance", "dJ", "step"])
            for row in convergence_diagnostic(state):
                w.writerow([row["iter"], repr(float(row["ck_distance"])), repr(float(row["dJ"])),
                            repr(float(row["step"]))])
    report = _report_dict(state.final, problem)
    report.update({"stop_reason": state.stop_reason, "evaluations": state.evaluations,
                   "accepted": len(state.trajectory) - 1,
                   "initial_pof": state.trajectory[0].pof, "initial_J": state.trajectory[0].J})
    write_json(out / "report.json", report)
    _write_fields(out, state.final, problem.material)
    return 0


COMMANDS = {"life": cmd_life, "assess": cmd_assess, "sample": cmd_sample, "optimize": cmd_optimize}


def build_parser():
    parser = argparse.ArgumentParser(prog="lcfshape", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="parallel cost evaluations")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = cfgmod.load_config(args.config)
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        cfg = cfgmod.merged(raw)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        cfgmod.require_sections(cfg, args.command)
        args.out.mkdir(parents=True, exist_ok=True)
        status = COMMANDS[args.command](cfg, args.out, args)
        _echo_config(cfg, args.out)
        return status
    except ConstraintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.report is not None:
            print(exc.report.summary(), file=sys.stderr)
            if args.out.is_dir():
                (args.out / "admissibility.txt").write_text(exc.report.summary() + "\n")
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (LcfError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
