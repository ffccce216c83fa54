"""Local Weibull crack-initiation model on a boundary life field.

The intensity of crack initiations at time t and surface point x is
``m / N(x) * (t / N(x))**(m - 1)``. Integrating over the surface gives the
cumulative hazard ``H(t) = t**m * sum_q w_q / N_q**m`` and a Weibull
failure-time law with scale ``eta = (sum_q w_q / N_q**m)**(-1/m)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .elasticity import SurfaceField

INF = math.inf


def _check_shape(m):
    if not m >= 1:
        raise ValueError(f"Weibull shape m must be >= 1, got {m!r}")


def lm_norm(sf: SurfaceField, m) -> float:
    """L^m norm of 1/N_det over the quadrature, with 1/inf = 0.

    Factored through the smallest life so that large m does not underflow.
    """
    _check_shape(m)
    life = np.asarray(sf.n_det, dtype=float)
    if len(life) == 0:
        return 0.0
    n_min = float(np.min(life))
    if math.isinf(n_min):
        return 0.0
    ratio = n_min / life  # in [0, 1]; 0 where life is infinite
    return float(np.sum(sf.weights * ratio ** m)) ** (1.0 / m) / n_min


def hazard(sf: SurfaceField, m, t) -> float:
    """Cumulative hazard H(t) = (t * ||1/N_det||_m)^m."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    norm = lm_norm(sf, m)
    if t == 0 or norm == 0:
        return 0.0
    return (t * norm) ** m


def pof(sf: SurfaceField, m, t_star) -> float:
    """Probability of crack initiation before t_star."""
    return float(-math.expm1(-hazard(sf, m, t_star)))


def weibull_scale(sf: SurfaceField, m) -> float:
    norm = lm_norm(sf, m)
    return INF if norm == 0 else 1.0 / norm


def deterministic_life(sf: SurfaceField) -> float:
    if len(sf.n_det) == 0:
        raise ValueError("deterministic life of an empty surface field")
    return float(np.min(sf.n_det))


def weibull_cdf(t, m, eta):
    t = np.asarray(t, dtype=float)
    if math.isinf(eta):
        return np.zeros_like(t)
    return -np.expm1(-(t / eta) ** m)


@dataclass(frozen=True)
class ReliabilityReport:
    H: float
    eta: float
    pof: float
    survival: float
    t_det: float
    m: float
    t_star: float

    def to_dict(self):
        """Flat mapping with infinities spelled "inf" (JSON has no infinity)."""
        return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in asdict(self).items()}


def reliability_report(sf: SurfaceField, m, t_star) -> ReliabilityReport:
    H = hazard(sf, m, t_star)
    F = float(-math.expm1(-H))
    return ReliabilityReport(
        H=H, eta=weibull_scale(sf, m), pof=F, survival=float(math.exp(-H)),
        t_det=deterministic_life(sf), m=float(m), t_star=float(t_star),
    )


def make_rng(seed):
    """Philox (counter-based) generator; ``seed`` is an int or a SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def _tangent_axes(face_dir):
    axis = np.asarray(face_dir) // 2
    t1 = (axis + 1) % 3
    t2 = (axis + 2) % 3
    return t1, t2


@dataclass(frozen=True)
class CrackHistory:
    """One realization of the crack-initiation point process, sorted by time."""

    times: np.ndarray
    points: np.ndarray
    faces: np.ndarray
    t_max: float
    seed: object = None

    def __len__(self):
        return len(self.times)

    def rows(self):
        for t, x, f in zip(self.times, self.points, self.faces):
            yield float(t), tuple(float(v) for v in x), int(f)


def sample_history(sf: SurfaceField, m, t_max, seed) -> CrackHistory:
    """Sample all crack initiations on [0, t_max].

    The count is Poisson(H(t_max)); given the count, times are i.i.d. with
    CDF (t / t_max)^m and locations i.i.d. over faces with probability
    proportional to w / N_det^m, uniform within the face.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    H = hazard(sf, m, t_max)
    if not math.isfinite(H):
        raise ValueError("hazard at t_max is not finite")
    rng = make_rng(seed)
    n = int(rng.poisson(H)) if H > 0 else 0
    if n == 0:
        return CrackHistory(np.zeros(0), np.zeros((0, 3)), np.zeros(0, dtype=int), float(t_max), seed)
    # 1 - U lies in (0, 1], so times fall in (0, t_max]
    times = t_max * (1.0 - rng.random(n)) ** (1.0 / m)
    life = np.asarray(sf.n_det, dtype=float)
    prob = sf.weights * (np.min(life) / life) ** m
    prob = prob / prob.sum()
    faces = rng.choice(len(prob), size=n, p=prob)
    offsets = rng.random((n, 2)) - 0.5
    points = np.array(sf.points[faces], dtype=float)
    t1, t2 = _tangent_axes(sf.face_dir[faces])
    rows = np.arange(n)
    points[rows, t1] += sf.size * offsets[:, 0]
    points[rows, t2] += sf.size * offsets[:, 1]
    order = np.argsort(times, kind="stable")
    return CrackHistory(times[order], points[order], faces[order], float(t_max), seed)


def first_failure(history: CrackHistory) -> float:
    return float(history.times[0]) if len(history) else INF


def sample_histories(sf: SurfaceField, m, t_max, seed, count):
    """``count`` independent histories from child streams of one seed."""
    children = np.random.SeedSequence(seed).spawn(int(count))
    return [sample_history(sf, m, t_max, child) for child in children]


def write_histories(path, histories):
    """CSV with header t,x1,x2,x3,face and a leading history index column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["history", "t", "x1", "x2", "x3", "face"])
        for i, h in enumerate(histories):
            for t, x, f in h.rows():
                w.writerow([i, repr(t), repr(x[0]), repr(x[1]), repr(x[2]), f])
