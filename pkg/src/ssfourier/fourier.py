"""Fourier transforms of self-similar measures and of their finite approximations.

mu_n is the push-forward of a point mass through n random maps; its transform
obeys F mu_{k+1}(xi) = sum_j p_j exp(-i b_j xi) F mu_k(a_j xi).  Evaluation
runs that recursion bottom-up with one branch per distinct accumulated scale,
so homogeneous systems cost O(n*m) per frequency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, ValidationError
from .ifs import (
    DEFAULT_BRANCH_BUDGET,
    IfsSystem,
    count_scale,
    count_vectors,
    scale_groups,
)

TWO_PI = 2.0 * math.pi
CHUNK = 1 << 18
BURN_IN = 100
PSI_SINGULAR = 1e-15


def _phase(theta):
    return np.exp(-1j * np.remainder(theta, TWO_PI))


def _as_array(xi):
    arr = np.asarray(xi, dtype=float)
    return arr, arr.ndim == 0


def _level_keys(n_groups: int, n: int, budget: int):
    keys = [count_vectors(level, n_groups) for level in range(n + 1)]
    if sum(len(k) for k in keys) > budget:
        raise BudgetError("scale classes exceed the branch budget; memoization is ineffective here")
    return keys


def fourier_mu_n(system: IfsSystem, n: int, xi, origin: float = 0.0,
                 budget: int = DEFAULT_BRANCH_BUDGET):
    """F mu_n(xi) = sum over words w of length n of p_w exp(-i xi S_w(origin)).

    ``origin`` is the starting point of the approximating measures (0 by
    default).  Accepts scalar or array ``xi``.
    """
    if n < 0:
        raise ValidationError("n must be >= 0")
    arr, scalar = _as_array(xi)
    flat = arr.ravel()
    out = np.empty(flat.shape, dtype=complex)
    values, group = scale_groups(system)
    keys = _level_keys(len(values), n, budget)
    for start in range(0, flat.size, CHUNK):
        out[start:start + CHUNK] = _mu_n_chunk(system, n, flat[start:start + CHUNK],
                                                origin, values, group, keys)
    out = out.reshape(arr.shape)
    return complex(out) if scalar else out


def _mu_n_chunk(system, n, xi, origin, values, group, keys):
    b, p = system.b, system.p
    below = {}
    for key in keys[n]:
        s = count_scale(values, key)
        below[key] = _phase(origin * s * xi) if origin else np.ones(xi.shape, dtype=complex)
    for level in range(n - 1, -1, -1):
        current = {}
        for key in keys[level]:
            u = count_scale(values, key) * xi
            acc = np.zeros(xi.shape, dtype=complex)
            for j in range(system.m):
                child = list(key)
                child[group[j]] += 1
                acc += p[j] * _phase(b[j] * u) * below[tuple(child)]
            current[key] = acc
        below = current
    return below[keys[0][0]]


def fourier_product(system: IfsSystem, xi, L: int):
    """Truncated infinite product prod_{l<L} g(a^l xi), g(u) = sum_j p_j exp(-i b_j u)."""
    if not system.is_homogeneous:
        raise ValidationError("the product formula needs a common scale factor")
    if L < 1:
        raise ValidationError("L must be >= 1")
    arr, scalar = _as_array(xi)
    a = system.maps[0].a
    b, p = system.b, system.p
    out = np.ones(arr.shape, dtype=complex)
    for level in range(L):
        u = (a ** level) * arr
        factor = np.zeros(arr.shape, dtype=complex)
        for bj, pj in zip(b, p):
            factor += pj * _phase(bj * u)
        out *= factor
    return complex(out) if scalar else out


@dataclass(frozen=True)
class ChaosEstimate:
    value: complex | np.ndarray
    stderr: float | np.ndarray
    samples: int
    seed: int


def fourier_chaos_game(system: IfsSystem, xi, samples: int, seed: int = 0,
                       chains: int = 256) -> ChaosEstimate:
    """Monte Carlo estimate of F mu(xi) along random-map orbits.

    The orbit is split into independent chains (started at 0, burned in for
    100 steps) so the standard error comes from batch means.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    arr, scalar = _as_array(xi)
    flat = arr.ravel()
    rng = np.random.default_rng(seed)
    n_chains = min(chains, samples)
    lengths = np.full(n_chains, samples // n_chains)
    lengths[: samples % n_chains] += 1
    steps = int(lengths.max())
    cum = np.cumsum(system.p)
    cum[-1] = 1.0
    a, b = system.a, system.b

    x = np.zeros(n_chains)
    for _ in range(BURN_IN):
        k = np.searchsorted(cum, rng.random(n_chains), side="right")
        x = a[k] * x + b[k]
    sums = np.zeros((n_chains, flat.size), dtype=complex)
    block = max(1, (1 << 16) // n_chains)
    done = 0
    while done < steps:
        todo = min(block, steps - done)
        draws = rng.random((todo, n_chains))
        for row in draws:
            k = np.searchsorted(cum, row, side="right")
            x = a[k] * x + b[k]
            active = lengths > done
            sums[active] += _phase(np.outer(x[active], flat))
            done += 1
    total = sums.sum(axis=0)
    value = total / samples
    if n_chains >= 2:
        means = sums / lengths[:, None]
        stderr = np.sqrt(np.var(means.real, axis=0, ddof=1) + np.var(means.imag, axis=0, ddof=1))
        stderr = stderr / math.sqrt(n_chains)
    else:
        stderr = np.sqrt(np.maximum(1.0 - np.abs(value) ** 2, 0.0) / samples)
    if scalar:
        return ChaosEstimate(complex(value[0]), float(stderr[0]), samples, seed)
    return ChaosEstimate(value.reshape(arr.shape), stderr.reshape(arr.shape), samples, seed)


def psi(x):
    """log(|1 + exp(-2ix)| / 2) = log|cos x|; -inf where |cos x| < 1e-15."""
    arr, scalar = _as_array(x)
    c = np.abs(np.cos(arr))
    out = np.full(arr.shape, -np.inf)
    ok = c >= PSI_SINGULAR
    out[ok] = np.log(c[ok])
    return float(out) if scalar else out


def log_modulus_psi_sum(xi, N: int):
    """sum_{l=1}^N psi(3^-l xi); -inf flags a singular term."""
    arr, scalar = _as_array(xi)
    out = np.zeros(arr.shape)
    for level in range(1, N + 1):
        out += psi((3.0 ** -level) * arr)
    return float(out) if scalar else out


def birkhoff_average(theta, N: int):
    """(1/N) sum_{l<N} psi(3^l theta mod 2pi); -inf if the orbit hits a singularity."""
    arr, scalar = _as_array(theta)
    if np.any(np.abs(arr) > math.pi):
        raise ValidationError("theta must lie in [-pi, pi]")
    x = arr.copy()
    total = np.zeros(arr.shape)
    for _ in range(N):
        total += psi(x)
        x = np.remainder(3.0 * x, TWO_PI)
        x = np.where(x > math.pi, x - TWO_PI, x)
    out = total / N
    return float(out) if scalar else out


@dataclass(frozen=True)
class SpectrumGrid:
    xi_min: float
    xi_max: float
    step: float
    n: int
    values: np.ndarray

    @property
    def xi(self) -> np.ndarray:
        return grid_points(self.xi_min, self.xi_max, self.step)


def grid_points(xi_min: float, xi_max: float, step: float) -> np.ndarray:
    """Uniform grid; when xi_min is a multiple of step the points are exact multiples (0 stays 0)."""
    if not step > 0:
        raise ValidationError("step must be positive")
    if xi_max < xi_min:
        raise ValidationError("xi_max < xi_min")
    count = int(round((xi_max - xi_min) / step)) + 1
    first = xi_min / step
    if abs(first - round(first)) <= 1e-9 * max(1.0, abs(first)):
        return step * (round(first) + np.arange(count, dtype=float))
    return xi_min + step * np.arange(count, dtype=float)


def spectrum(system: IfsSystem, n: int, xi_min: float, xi_max: float, step: float) -> SpectrumGrid:
    xi = grid_points(xi_min, xi_max, step)
    return SpectrumGrid(xi_min, xi_max, step, n, fourier_mu_n(system, n, xi))


def mu_n_convergence(system: IfsSystem, n: int, delta_n: int, grid) -> float:
    """sup over the grid of |F mu_{n+delta} - F mu_n|."""
    xi = grid.xi if isinstance(grid, SpectrumGrid) else np.asarray(grid, dtype=float)
    if delta_n == 0:
        return 0.0
    diff = fourier_mu_n(system, n + delta_n, xi) - fourier_mu_n(system, n, xi)
    return float(np.max(np.abs(diff)))


def fit_log_slope(x, y) -> float:
    """Least-squares slope of log(y) against x."""
    return float(np.polyfit(np.asarray(x, float), np.log(np.asarray(y, float)), 1)[0])
