"""Elastic-plastic fatigue chain: von Mises stress to crack-initiation life.

The chain is ``phi = cmb_inverse o ramberg_osgood o neuber_shakedown``.
Every function accepts scalars or numpy arrays (elementwise) and returns a
Python float for scalar input. Infinite life is represented by ``math.inf``;
``1 / inf == 0`` in IEEE arithmetic, which is exactly the convention needed
by the hazard integrand.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverError

INFINITE_LIFE = math.inf


@dataclass(frozen=True)
class MaterialParams:
    """Lamé, Ramberg-Osgood, Coffin-Manson-Basquin and Weibull constants.

    Units are whatever the caller uses consistently (e.g. MPa and mm).
    ``amplitude_factor`` converts the elastic von Mises stress of the peak
    load into the comparison stress amplitude fed to the life chain; 0.5
    corresponds to a load cycle with a stress-free lower edge.
    """

    lam: float
    mu: float
    K: float
    n_prime: float
    sigma_f: float
    eps_f: float
    b: float
    c: float
    m: float = 2.0
    amplitude_factor: float = 0.5

    def __post_init__(self):
        for name in ("lam", "mu", "K", "n_prime", "sigma_f", "eps_f", "amplitude_factor"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        for name in ("b", "c"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value < 0):
                raise ValueError(f"{name} must be negative and finite, got {value!r}")
        if not (np.isfinite(self.m) and self.m >= 1):
            raise ValueError(f"Weibull shape m must be >= 1, got {self.m!r}")

    @classmethod
    def from_engineering(cls, E, nu, **kwargs):
        """Build from Young's modulus and Poisson's ratio instead of Lamé constants."""
        if not (E > 0 and -1 < nu < 0.5):
            raise ValueError(f"need E > 0 and -1 < nu < 0.5, got E={E!r}, nu={nu!r}")
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        return cls(lam=lam, mu=mu, **kwargs)

    @property
    def E(self):
        return youngs_modulus(self)


def _as_output(value, scalar):
    if scalar:
        return float(np.asarray(value).reshape(()))
    return value


def youngs_modulus(p: MaterialParams) -> float:
    return p.mu * (3 * p.lam + 2 * p.mu) / (p.lam + p.mu)


def von_mises(sigma):
    """Von Mises stress of a (..., 3, 3) stress tensor.

    The input is symmetrized first, so FEM round-off asymmetry is harmless.
    """
    s = np.asarray(sigma, dtype=float)
    scalar = s.ndim == 2
    s = 0.5 * (s + np.swapaxes(s, -1, -2))
    tr = np.trace(s, axis1=-2, axis2=-1)
    dev = s - (tr / 3.0)[..., None, None] * np.eye(3)
    out = np.sqrt(1.5 * np.sum(dev * dev, axis=(-2, -1)))
    return _as_output(out, scalar)


def ramberg_osgood(sigma_elpl, p: MaterialParams):
    """Elastic-plastic comparison strain for an elastic-plastic comparison stress."""
    s = np.asarray(sigma_elpl, dtype=float)
    out = s / p.E + (s / p.K) ** (1.0 / p.n_prime)
    return _as_output(out, s.ndim == 0)


def _bracketed_newton(fun, y, lo, hi, increasing, max_iter=200, xtol=4e-16):
    """Elementwise safeguarded Newton for a monotone ``fun`` on [lo, hi].

    ``fun(y)`` returns ``(g, dg)``. A Newton step leaving the current bracket
    is replaced by bisection, so convergence is guaranteed whenever the
    bracket contains the root.
    """
    y = np.array(y, dtype=float)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    active = np.ones(y.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            return y
        g, dg = fun(y)
        if not increasing:
            g, dg = -g, -dg
        # g < 0 -> root lies above y
        lo = np.where(active & (g < 0), y, lo)
        hi = np.where(active & (g > 0), y, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            y_new = y - g / dg
        bad = ~np.isfinite(y_new) | (y_new <= lo) | (y_new >= hi)
        y_new = np.where(bad, 0.5 * (lo + hi), y_new)
        y_new = np.where(g == 0, y, y_new)
        scale = np.maximum(1.0, np.abs(y))
        done = (g == 0) | (np.abs(y_new - y) <= xtol * scale) | (hi - lo <= xtol * scale)
        y = np.where(active, y_new, y)
        active &= ~done
    if active.any():
        idx = np.flatnonzero(active)[0]
        raise SolverError(
            "root finder did not converge",
            bracket=(float(lo.flat[idx]), float(hi.flat[idx])),
        )
    return y


def neuber_shakedown(sigma_v, p: MaterialParams):
    """Elastic-plastic comparison stress from Neuber's energy rule.

    Solves ``sigma_v**2 / E = s**2 / E + s * (s / K)**(1/n')`` for s >= 0.
    The solve runs in log-space where both sides are log-sum-exps of
    linear functions, so Newton converges in a handful of steps.
    """
    sv = np.asarray(sigma_v, dtype=float)
    scalar = sv.ndim == 0
    if np.any(sv < 0) or not np.all(np.isfinite(sv)):
        raise ValueError("sigma_v must be finite and nonnegative")
    out = np.zeros(sv.shape)
    pos = sv > 0
    if pos.any():
        x = sv[pos]
        E, lnK, q = p.E, math.log(p.K), 1.0 / p.n_prime
        lnE = math.log(E)
        target = 2 * np.log(x) - lnE

        def fun(y):
            a = 2 * y - lnE
            bterm = (1 + q) * y - q * lnK
            g = np.logaddexp(a, bterm) - target
            w = 1.0 / (1.0 + np.exp(bterm - a))
            return g, 2 * w + (1 + q) * (1 - w)

        # at the root one of the two energy terms carries at least half
        hi = np.log(x)
        lo = np.minimum(hi - 0.5 * math.log(2.0), (target - math.log(2.0) + q * lnK) / (1 + q))
        lo = lo - 1e-12 * np.maximum(1.0, np.abs(lo))
        y = _bracketed_newton(fun, hi.copy(), lo, hi, increasing=True)
        out[pos] = np.minimum(np.exp(y), x)
    return _as_output(out, scalar)


def cmb(N, p: MaterialParams):
    """Strain amplitude after N cycles (Coffin-Manson-Basquin)."""
    n = np.asarray(N, dtype=float)
    two_n = 2.0 * n
    out = p.sigma_f / p.E * two_n ** p.b + p.eps_f * two_n ** p.c
    return _as_output(out, n.ndim == 0)


def cmb_inverse(eps_a, p: MaterialParams):
    """Cycles to crack initiation for a strain amplitude; inverse of :func:`cmb`."""
    e = np.asarray(eps_a, dtype=float)
    scalar = e.ndim == 0
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("eps_a must be finite and positive")
    lnA = math.log(p.sigma_f / p.E)
    lnB = math.log(p.eps_f)
    target = np.log(e)

    def fun(y):
        a = lnA + p.b * y
        bt = lnB + p.c * y
        g = np.logaddexp(a, bt) - target
        w = 1.0 / (1.0 + np.exp(bt - a))
        return g, p.b * w + p.c * (1 - w)

    # y = ln(2N); each term alone below eps gives the lower end, one term
    # above eps/2 gives the upper end
    lo = np.maximum((target - lnA) / p.b, (target - lnB) / p.c)
    hi = np.maximum((target - math.log(2.0) - lnA) / p.b, (target - math.log(2.0) - lnB) / p.c)
    pad = 1e-12 * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    lo, hi = lo - pad, hi + pad
    y = _bracketed_newton(fun, 0.5 * (lo + hi), lo, hi, increasing=False)
    return _as_output(0.5 * np.exp(y), scalar)


def phi(sigma_v, p: MaterialParams):
    """Deterministic life for an elastic comparison stress; ``phi(0) = inf``."""
    sv = np.asarray(sigma_v, dtype=float)
    scalar = sv.ndim == 0
    out = np.full(sv.shape, INFINITE_LIFE)
    pos = sv > 0
    if pos.any():
        out[pos] = cmb_inverse(ramberg_osgood(neuber_shakedown(sv[pos], p), p), p)
    return _as_output(out, scalar)


def stress(M, p: MaterialParams):
    """Isotropic Hooke stress for a (..., 3, 3) displacement gradient."""
    M = np.asarray(M, dtype=float)
    tr = np.trace(M, axis1=-2, axis2=-1)
    return p.lam * tr[..., None, None] * np.eye(3) + p.mu * (M + np.swapaxes(M, -1, -2))


def n_det(M, p: MaterialParams):
    """Deterministic life at a surface point with displacement gradient M."""
    M = np.asarray(M, dtype=float)
    sv = np.asarray(von_mises(stress(M, p)))
    out = phi(p.amplitude_factor * sv, p)
    return _as_output(out, M.ndim == 2)


def en_curve(p: MaterialParams, n_points=50, N_range=(1.0, 1e7)):
    """Log-spaced strain-life table, shape (n_points, 2) with columns (N, eps_a)."""
    N_lo, N_hi = N_range
    if not (0 < N_lo < N_hi):
        raise ValueError("need 0 < N_lo < N_hi")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    N = np.logspace(math.log10(N_lo), math.log10(N_hi), int(n_points))
    N[0], N[-1] = N_lo, N_hi
    return np.column_stack([N, cmb(N, p)])


def write_en_curve(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "eps_a"])
        for N, eps in table:
            w.writerow([repr(float(N)), repr(float(eps))])
