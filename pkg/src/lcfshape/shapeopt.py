"""Cost functionals and derivative-free shape optimization.

The design is parametrized by a tensor-product basis over the cross-section
whose functions vanish to order k on the boundary, so every coefficient
vector yields a field that meets the boundary conditions of the admissible
set. The volume equality is restored by an exact projection in coefficient
space; remaining constraints are enforced by rejection.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import elasticity as ela
from .errors import ConstraintError
from .geometry import (
    ALL_TAGS, BasicDesign, DesignConstraints, DesignField, build_mesh, check_admissible,
    ck_distance, surface_quadrature, trapezoid_weights,
)
from .material import MaterialParams
from .reliability import ReliabilityReport, deterministic_life, hazard, reliability_report

POF = "pof"
DET_LIFE = "det_life"
CUSTOM_LOCAL = "custom_local"
KINDS = (POF, DET_LIFE, CUSTOM_LOCAL)


@dataclass(frozen=True)
class CostSpec:
    """Which functional to minimize.

    ``pof`` minimizes the cumulative hazard at ``t_star`` (same minimizers as
    the failure probability), ``det_life`` minimizes minus the deterministic
    life. ``custom_local`` sums ``volume_integrand(x, u, grad_u)`` over cell
    centers and ``surface_integrand(x, u, grad_u)`` over boundary faces, each
    returning one value per point. Only first derivatives of u are available.
    """

    kind: str = POF
    t_star: float | None = None
    volume_integrand: object = None
    surface_integrand: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == CUSTOM_LOCAL and self.volume_integrand is None and self.surface_integrand is None:
            raise ValueError("custom_local cost needs at least one integrand")


@dataclass(frozen=True)
class Problem:
    """Everything except the design needed to evaluate a cost."""

    basic: BasicDesign
    constraints: DesignConstraints
    material: MaterialParams
    load: ela.LoadCase
    h: float
    hazard_tags: tuple = ALL_TAGS
    rel_tol: float = 1e-10
    admissibility_tol: float = 1e-6

    @property
    def m(self):
        return self.material.m


@dataclass
class Evaluation:
    J: float
    report: ReliabilityReport
    surface: ela.SurfaceField
    mesh: object
    displacement: ela.DisplacementField
    admissibility: object


def evaluate_cost(alpha: DesignField, spec: CostSpec, ctx: Problem, check=True) -> Evaluation:
    """Mesh, solve and reduce one design to its cost value."""
    adm = check_admissible(alpha, ctx.constraints, ctx.basic, ctx.admissibility_tol)
    if check and not adm.passed:
        raise ConstraintError(f"design not admissible: {', '.join(adm.failures())}", report=adm)
    mesh = build_mesh(ctx.basic, alpha, ctx.h)
    system = ela.assemble(mesh, ctx.material, ctx.load)
    u = ela.solve(system, rel_tol=ctx.rel_tol)
    sf = ela.surface_field(u, surface_quadrature(mesh, ctx.hazard_tags), ctx.material)
    t_star = ctx.load.t_star if spec.t_star is None else spec.t_star
    report = reliability_report(sf, ctx.m, t_star)
    if spec.kind == POF:
        J = hazard(sf, ctx.m, t_star)
    elif spec.kind == DET_LIFE:
        J = -deterministic_life(sf)
    else:
        J = _custom_cost(spec, mesh, u, sf)
    return Evaluation(float(J), report, sf, mesh, u, adm)


def _custom_cost(spec, mesh, u, sf):
    J = 0.0
    if spec.volume_integrand is not None:
        xi = np.full((mesh.n_elements, 3), 0.5)
        el = np.arange(mesh.n_elements)
        vals = spec.volume_integrand(
            mesh.element_centers, ela.displacement_at(u, el, xi), ela.grad_at(u, el, xi)
        )
        J += mesh.h ** 3 * float(np.sum(vals))
    if spec.surface_integrand is not None and len(sf):
        local = 0.5 + 0.5 * np.array(
            [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]]
        )[sf.face_dir]
        vals = spec.surface_integrand(sf.points, ela.displacement_at(u, sf.element, local), sf.grad)
        J += float(np.sum(sf.weights * np.asarray(vals)))
    return J


class BumpBasis:
    """Tensor-product basis ``b_i(s) b_j(t)`` on the normalized cross-section.

    ``b_i(s) = (s(1-s))**q * Bernstein_i(s)`` scaled to unit maximum. Any
    ``q > k`` makes each function and its derivatives up to order k vanish on
    the boundary; the default ``q = 2k`` also keeps the one-sided difference
    stencils there small. Nonnegative coefficients give ``alpha >= alpha_min``.
    """

    def __init__(self, n, k, grid: DesignField, alpha_min, power=None):
        self.n = int(n)
        self.k = int(k)
        self.grid = grid
        self.alpha_min = float(alpha_min)
        self.power = 2 * self.k if power is None else int(power)
        if self.power <= self.k:
            raise ValueError("basis power must exceed k")
        n1, n2 = grid.shape
        self.Bx = self._matrix(np.linspace(0.0, 1.0, n1))
        self.By = self._matrix(np.linspace(0.0, 1.0, n2))
        W = trapezoid_weights(grid.shape, grid.dx, grid.dy)
        # volume = alpha_min * area + <gradient, coeffs>
        self.volume_gradient = self.Bx.T @ W @ self.By
        self.area = float(W.sum())

    def _matrix(self, s):
        q = self.power
        deg = self.n - 1
        cols = []
        for i in range(self.n):
            f = comb(deg, i) * s ** (i + q) * (1 - s) ** (deg - i + q)
            smax = (i + q) / (deg + 2 * q)
            fmax = comb(deg, i) * smax ** (i + q) * (1 - smax) ** (deg - i + q)
            cols.append(f / fmax)
        return np.column_stack(cols)

    @property
    def shape(self):
        return (self.n, self.n)

    def field(self, coeffs) -> DesignField:
        c = np.asarray(coeffs, dtype=float).reshape(self.shape)
        v = self.alpha_min + self.Bx @ c @ self.By.T
        return self.grid.with_values(v)

    def profile(self):
        """Grid values of the sum of all basis functions."""
        return self.Bx.sum(axis=1)[:, None] * self.By.sum(axis=1)[None, :]

    def volume(self, coeffs):
        c = np.asarray(coeffs, dtype=float).reshape(self.shape)
        return self.alpha_min * self.area + float(np.sum(self.volume_gradient * c))

    def project_volume(self, coeffs, L1):
        """Orthogonal projection of the coefficients onto the volume hyperplane."""
        c = np.asarray(coeffs, dtype=float).reshape(self.shape)
        g = self.volume_gradient
        return c + (L1 - self.volume(c)) / float(np.sum(g * g)) * g


@dataclass(frozen=True)
class OptimizerOptions:
    step: float = 0.1
    shrink: float = 0.5
    min_step: float = 1e-3
    max_iterations: int = 20
    threads: int = 1


@dataclass(frozen=True)
class Iterate:
    index: int
    coeffs: np.ndarray
    J: float
    pof: float
    t_det: float
    volume_violation: float
    step: float
    margins: dict
    evaluations: int


@dataclass
class OptimizerState:
    basis: BumpBasis
    options: OptimizerOptions
    trajectory: list = field(default_factory=list)
    evaluations: int = 0
    # (J, pof) of every distinct design evaluated, in evaluation order
    evaluated: list = field(default_factory=list)
    stop_reason: str = ""
    final: Evaluation | None = None

    @property
    def coeffs(self):
        return self.trajectory[-1].coeffs

    def design(self, i=-1) -> DesignField:
        return self.basis.field(self.trajectory[i].coeffs)

    def write_evaluations(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eval", "J", "pof"])
            for i, (J, p) in enumerate(self.evaluated):
                w.writerow([i, _num(J), _num(p)])

    def write_trajectory(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "J", "pof", "t_det", "volume_violation", "step"])
            for it in self.trajectory:
                w.writerow([it.index, _num(it.J), _num(it.pof), _num(it.t_det),
                            _num(it.volume_violation), _num(it.step)])


def _num(x):
    return "inf" if math.isinf(x) else repr(float(x))


def _margins(adm):
    return {name: c.margin for name, c in adm.checks.items()}


def optimize(initial_coeffs, spec: CostSpec, ctx: Problem, options=OptimizerOptions(),
             basis: BumpBasis | None = None, grid: DesignField | None = None) -> OptimizerState:
    """Coordinate pattern search on the basis coefficients.

    Each sweep proposes +step and -step on every coefficient (in that fixed
    order), projects onto the volume constraint, drops proposals failing the
    admissibility check and evaluates the rest. The best strict improvement
    (first in proposal order on ties) is accepted; otherwise the step shrinks.
    """
    c0 = np.asarray(initial_coeffs, dtype=float)
    if basis is None:
        if grid is None:
            raise ValueError("need a basis or a design grid")
        basis = BumpBasis(c0.shape[0], ctx.constraints.k, grid, ctx.basic.alpha_min)
    c = basis.project_volume(c0, ctx.constraints.L1)
    adm = check_admissible(basis.field(c), ctx.constraints, ctx.basic, ctx.admissibility_tol)
    if not adm.passed:
        raise ConstraintError("initial design infeasible: " + ", ".join(adm.failures()), report=adm)

    state = OptimizerState(basis, options)
    cache = {}
    pool = ThreadPoolExecutor(options.threads) if options.threads > 1 else None

    def evaluate(coeffs):
        return evaluate_cost(basis.field(coeffs), spec, ctx)

    def run_batch(batch):
        # bookkeeping stays on this thread so the record order is fixed
        fresh = {}
        for coeffs in batch:
            key = coeffs.tobytes()
            if key not in cache and key not in fresh:
                fresh[key] = coeffs
        todo = list(fresh.values())
        results = list(pool.map(evaluate, todo)) if pool and len(todo) > 1 else [evaluate(t) for t in todo]
        for key, ev in zip(fresh, results):
            cache[key] = ev
            state.evaluations += 1
            state.evaluated.append((ev.J, ev.report.pof))
        return [cache[c.tobytes()] for c in batch]

    def record(coeffs, ev, step):
        state.trajectory.append(Iterate(
            index=len(state.trajectory), coeffs=coeffs.copy(), J=ev.J, pof=ev.report.pof,
            t_det=ev.report.t_det, volume_violation=ev.admissibility.volume_violation,
            step=step, margins=_margins(ev.admissibility), evaluations=state.evaluations,
        ))

    try:
        current = run_batch([c])[0]
        step = options.step
        record(c, current, step)
        sweeps = 0
        while True:
            if sweeps >= options.max_iterations:
                state.stop_reason = "max_iterations"
                break
            if step < options.min_step:
                state.stop_reason = "step_below_threshold"
                break
            sweeps += 1
            proposals = []
            for idx in range(c.size):
                for sign in (1.0, -1.0):
                    trial = c.copy().reshape(-1)
                    trial[idx] += sign * step
                    trial = basis.project_volume(trial, ctx.constraints.L1)
                    check = check_admissible(basis.field(trial), ctx.constraints, ctx.basic,
                                             ctx.admissibility_tol)
                    if check.passed:
                        proposals.append(trial)
            results = run_batch(proposals)
            best = None
            for trial, ev in zip(proposals, results):
                if ev.J < current.J and (best is None or ev.J < best[1].J):
                    best = (trial, ev)
            if best is None:
                step *= options.shrink
                continue
            c, current = best
            record(c, current, step)
    finally:
        if pool:
            pool.shutdown()
    state.final = current
    return state


def convergence_diagnostic(state: OptimizerState, k=None):
    """C^k distance between consecutive iterates, with the J change and step size."""
    if len(state.trajectory) < 2:
        raise ValueError("need at least two iterates")
    k = state.basis.k if k is None else k
    rows = []
    for a, b in zip(state.trajectory[:-1], state.trajectory[1:]):
        d = ck_distance(state.basis.field(a.coeffs), state.basis.field(b.coeffs), k)
        rows.append({"iter": b.index, "ck_distance": d, "dJ": b.J - a.J, "step": b.step})
    return rows
