"""Pressure of the tripling map and the entropy rate function it dualizes to.

The observable is psi(x) = log|cos x| on R/2piZ, clipped from below at -M.
Its pressure P(beta) is the log of the leading eigenvalue of

    (L u)(x) = sum_{k=0,1,2} exp(beta psi_M(y_k)) u(y_k),   y_k = (x + 2 pi k)/3,

discretized by collocation at N cell midpoints with piecewise-linear
interpolation.  The rate function is the Legendre-type infimum

    R(c) = inf_{beta >= 0} P(beta) + beta c.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.sparse as sparse

from .errors import ConvergenceError, ResolutionError, ValidationError
from .fourier import psi

LOG2 = math.log(2.0)
LOG3 = math.log(3.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

__all__ = [
    "Potential", "TransferOperator", "PressureCurve", "RateProfile", "ObservationReport",
    "psi", "clipped_psi", "potential", "transfer_pressure", "pressure_curve",
    "rate_function", "check_observations", "pressure_slope",
]


def clipped_psi(x, clip: float):
    return np.maximum(psi(x), -clip)


@dataclass(frozen=True)
class Potential:
    clip_level: float
    x: np.ndarray
    values: np.ndarray


def potential(clip: float, grid: int) -> Potential:
    x = 2.0 * math.pi * (np.arange(grid) + 0.5) / grid
    return Potential(clip, x, clipped_psi(x, clip))


class TransferOperator:
    """Collocation matrix of the weighted tripling transfer operator.

    Rows are the nodes x_i; each of the three preimages contributes two
    interpolation entries, so every row has at most six nonzeros.
    """

    def __init__(self, clip: float = 20.0, grid: int = 4096):
        if grid < 64:
            raise ValidationError("grid must have at least 64 points")
        if not clip > 0:
            raise ValidationError("clip level must be positive")
        self.clip = float(clip)
        self.grid = int(grid)
        h = 2.0 * math.pi / grid
        x = h * (np.arange(grid) + 0.5)
        rows, cols, weights, pots = [], [], [], []
        for k in range(3):
            y = (x + 2.0 * math.pi * k) / 3.0
            s = y / h - 0.5
            left = np.floor(s)
            frac = s - left
            left = left.astype(np.int64)
            pot = clipped_psi(y, clip)
            for col, w in ((left % grid, 1.0 - frac), ((left + 1) % grid, frac)):
                keep = w > 0
                rows.append(np.arange(grid)[keep])
                cols.append(col[keep])
                weights.append(w[keep])
                pots.append(pot[keep])
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.weights = np.concatenate(weights)
        self.potentials = np.concatenate(pots)

    def matrix(self, beta: float) -> sparse.csr_matrix:
        data = self.weights * np.exp(beta * self.potentials)
        return sparse.csr_matrix((data, (self.rows, self.cols)), shape=(self.grid, self.grid))

    def leading_eigenvalue(self, beta: float, tol: float = 1e-10, max_iter: int = 20000) -> float:
        """Power iteration from the constant vector, stopped by the Collatz-Wielandt bracket."""
        A = self.matrix(beta)
        u = np.ones(self.grid)
        for _ in range(max_iter):
            v = A @ u
            ratios = v / u
            lo, hi = ratios.min(), ratios.max()
            if hi - lo <= tol * hi:
                return float(v.sum() / u.sum())
            u = v / hi
        raise ConvergenceError(f"power iteration did not converge at beta={beta}")

    def pressure(self, beta: float, tol: float = 1e-10) -> float:
        return math.log(self.leading_eigenvalue(beta, tol))


@functools.lru_cache(maxsize=16)
def _operator(clip: float, grid: int) -> TransferOperator:
    return TransferOperator(clip, grid)


def transfer_pressure(beta: float, M: float = 20.0, N: int = 4096, tol: float = 1e-10) -> float:
    """P(beta psi_M) on an N-point collocation grid."""
    if beta < 0:
        raise ValidationError("beta must be >= 0")
    return _operator(float(M), int(N)).pressure(beta, tol)


@dataclass(frozen=True)
class PressureCurve:
    betas: list[float]
    pressures: list[float]
    derivative_estimates: list[float]
    clip: float
    grid: int

    def rows(self):
        for b, p, d in zip(self.betas, self.pressures, self.derivative_estimates):
            yield {"beta": b, "P": p, "dP": d}


def pressure_slope(beta: float, M: float = 20.0, N: int = 4096, step: float = 1e-4) -> float:
    """dP/dbeta by second-order finite differences (one-sided near beta = 0)."""
    op = _operator(float(M), int(N))
    if beta >= step:
        return (op.pressure(beta + step) - op.pressure(beta - step)) / (2 * step)
    p0, p1, p2 = op.pressure(beta), op.pressure(beta + step), op.pressure(beta + 2 * step)
    return (-3 * p0 + 4 * p1 - p2) / (2 * step)


def pressure_curve(betas: Sequence[float], M: float = 20.0, N: int = 4096,
                   step: float = 1e-4) -> PressureCurve:
    betas = [float(b) for b in betas]
    return PressureCurve(betas,
                         [transfer_pressure(b, M, N) for b in betas],
                         [pressure_slope(b, M, N, step) for b in betas],
                         float(M), int(N))


@dataclass(frozen=True)
class RateProfile:
    c_values: list[float]
    rhat: list[float]
    attained_beta: list[float]
    clip: float = 20.0
    grid: int = 4096

    def rows(self):
        for c, r, b in zip(self.c_values, self.rhat, self.attained_beta):
            yield {"c": c, "rhat": r, "beta_star": b}


def _golden_min(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def rate_function(c_list: Sequence[float], M: float = 20.0, N: int = 4096,
                  beta_max: float = 50.0, tol: float = 1e-8) -> RateProfile:
    """R_M(c) = min over 0 <= beta <= beta_max of P(beta psi_M) + beta c.

    Raises ResolutionError when the minimizer sits at beta_max.
    """
    op = _operator(float(M), int(N))
    rhat, betas = [], []
    for c in c_list:
        if not c > 0:
            raise ValidationError("c must be positive")
        f = lambda beta: op.pressure(beta) + beta * c  # noqa: E731
        beta = _golden_min(f, 0.0, beta_max, tol)
        value = f(beta)
        at_zero = f(0.0)
        if at_zero <= value:
            beta, value = 0.0, at_zero
        if beta >= beta_max - 10 * tol:
            raise ResolutionError(f"infimum at beta_max={beta_max} for c={c}; raise beta_max")
        rhat.append(value)
        betas.append(beta)
    return RateProfile([float(c) for c in c_list], rhat, betas, float(M), int(N))


@dataclass(frozen=True)
class ObservationReport:
    A: bool
    B: bool
    C: bool
    details: dict = field(default_factory=dict)

    @property
    def all(self) -> bool:
        return self.A and self.B and self.C


def check_observations(profile: RateProfile, tol: float = 0.02,
                       strict_margin: float = 1e-9) -> ObservationReport:
    """Shape checks on a sampled rate function.

    A: rhat <= log 3 + tol everywhere, and rhat < log 3 strictly (by more
       than ``strict_margin``) for c < log 2 - tol.
    B: rhat strictly increases with c below log 2 - tol, so it falls toward
       the smallest sampled c.
    C: concavity on [0, log 2]: no sampled point lies more than ``tol`` below
       the chord through any two samples that bracket it.
    """
    c = np.asarray(profile.c_values, dtype=float)
    r = np.asarray(profile.rhat, dtype=float)
    if c.size < 8:
        raise ValidationError("need at least 8 sampled c values")
    order = np.argsort(c)
    c, r = c[order], r[order]

    below = c < LOG2 - tol
    a_ok = bool(np.all(r <= LOG3 + tol) and np.all(r[below] < LOG3 - strict_margin))

    rb = r[below]
    b_ok = bool(rb.size >= 2 and np.all(np.diff(rb) > 0))

    inside = np.flatnonzero(c <= LOG2 + 1e-12)
    worst = 0.0
    for i, j in combinations(inside, 2):
        for k in range(i + 1, j):
            chord = r[i] + (r[j] - r[i]) * (c[k] - c[i]) / (c[j] - c[i])
            worst = max(worst, chord - r[k])
    c_ok = worst <= tol
    return ObservationReport(a_ok, b_ok, c_ok, {"max_chord_excess": worst})
