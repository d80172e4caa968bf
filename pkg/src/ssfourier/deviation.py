"""Large-deviation statistics: superlevel sets of |F mu_n|, average decay, word products.

Superlevel measures use a cell-midpoint grid over [-e^t, e^t] and are
re-evaluated at half the step as a resolution check.  Word statistics are
exact: letters are grouped by scale factor and the m^n words collapse to
multinomial classes of letter counts.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import BudgetError, ResolutionError, ValidationError
from .fourier import CHUNK, fourier_mu_n
from .ifs import (
    DEFAULT_BRANCH_BUDGET,
    ContractionStats,
    IfsSystem,
    contraction_band,
    count_vectors,
    kappa,
)

log = logging.getLogger(__name__)

RICHARDSON_RTOL = 0.01


def _window_depth(system: IfsSystem, radius: float, n: int | None) -> int:
    """Smallest admissible depth, or validate the given one: radius <= r_lo^n."""
    r_lo = contraction_band(system).r_lo
    if n is None:
        if r_lo < 2:
            raise ValidationError(f"r_lo = {r_lo}: iterate the system before choosing a depth")
        n = max(1, math.ceil(math.log(radius) / math.log(r_lo) - 1e-12))
    if radius > float(r_lo) ** n * (1 + 1e-12):
        raise ValidationError(f"window radius {radius:g} exceeds r_lo^n = {r_lo}^{n}")
    return n


def _superlevel_counts(system, n, radius, cells, thresholds):
    """Count midpoints of `cells` equal cells on [-radius, radius] with |F mu_n| >= each threshold."""
    h = 2.0 * radius / cells
    thresholds = np.asarray(thresholds, dtype=float)
    counts = np.zeros(thresholds.size, dtype=np.int64)
    for start in range(0, cells, CHUNK):
        idx = np.arange(start, min(cells, start + CHUNK), dtype=float)
        vals = np.abs(fourier_mu_n(system, n, -radius + (idx + 0.5) * h))
        vals.sort()
        counts += vals.size - np.searchsorted(vals, thresholds, side="left")
    return counts, h


def _resolved(coarse: float, fine: float, h: float, rtol: float) -> bool:
    return abs(coarse - fine) <= rtol * max(coarse, fine) + 2.0 * h


def superlevel_measure(system: IfsSystem, t: float, c: float, step: float = 0.05,
                       n: int | None = None, rtol: float = RICHARDSON_RTOL,
                       strict: bool = True) -> float:
    """Leb{xi in [-e^t, e^t] : |F mu_n(xi)| >= e^{-ct}} on a grid of the given step.

    Raises ResolutionError when the half-step estimate disagrees by more than
    ``rtol`` (plus two cells); with ``strict=False`` it only logs a warning.
    """
    if not step > 0:
        raise ValidationError("step must be positive")
    radius = math.exp(t)
    n = _window_depth(system, radius, n)
    cells = max(2, int(round(2 * radius / step)))
    thr = [math.exp(-c * t)]
    (coarse,), h = _superlevel_counts(system, n, radius, cells, thr)
    (fine,), h2 = _superlevel_counts(system, n, radius, 2 * cells, thr)
    m_coarse, m_fine = coarse * h, fine * h2
    if not _resolved(m_coarse, m_fine, h, rtol):
        msg = f"superlevel measure under-resolved at t={t}, c={c}: {m_coarse} vs {m_fine}"
        if strict:
            raise ResolutionError(msg)
        log.warning(msg)
    return m_coarse


@dataclass(frozen=True)
class DeviationProfile:
    t: float
    n: int
    c_values: list[float]
    leb_estimates: list[float]
    exponents: list[float]
    resolved: list[bool] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.c_values)
        leb = np.asarray(self.leb_estimates)[order]
        return bool(np.all(np.diff(leb) >= 0))

    def rows(self):
        for c, leb, e in zip(self.c_values, self.leb_estimates, self.exponents):
            yield {"t": self.t, "c": c, "leb": leb, "exponent": e}


def deviation_profile(system: IfsSystem, t_list: Sequence[float], c_list: Sequence[float],
                      step: float = 0.05, n: int | None = None,
                      rtol: float = RICHARDSON_RTOL) -> list[DeviationProfile]:
    """(1/t) log Leb of superlevel sets for every (t, c); one profile per t.

    All thresholds at a given t share one pass over the grid.  Cells that fail
    the half-step check are kept and marked in ``resolved``.
    """
    out = []
    for t in t_list:
        radius = math.exp(t)
        depth = _window_depth(system, radius, n)
        cells = max(2, int(round(2 * radius / step)))
        thr = [math.exp(-c * t) for c in c_list]
        coarse, h = _superlevel_counts(system, depth, radius, cells, thr)
        fine, h2 = _superlevel_counts(system, depth, radius, 2 * cells, thr)
        leb = [float(k * h) for k in coarse]
        ok = [_resolved(a, b * h2, h, rtol) for a, b in zip(leb, fine)]
        exps = [math.log(v) / t if v > 0 else -math.inf for v in leb]
        prof = DeviationProfile(float(t), depth, [float(c) for c in c_list], leb, exps, ok)
        if not prof.monotone:
            log.warning("superlevel measures not monotone in c at t=%g", t)
        out.append(prof)
    return out


def _abs_squared_cumulative(system, n, r_max, step):
    """Trapezoid cumulative integral of |F mu_n|^2 over [0, r_max] on nodes k*h."""
    cells = max(1, int(round(r_max / step)))
    h = r_max / cells
    vals = np.empty(cells + 1)
    for start in range(0, cells + 1, CHUNK):
        idx = np.arange(start, min(cells + 1, start + CHUNK), dtype=float)
        vals[start:start + idx.size] = np.abs(fourier_mu_n(system, n, idx * h)) ** 2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (vals[1:] + vals[:-1]))])
    return cum, h


def strichartz_averages(system: IfsSystem, R_list: Sequence[float], n: int,
                        step: float = 0.05, rtol: float = RICHARDSON_RTOL,
                        strict: bool = True) -> np.ndarray:
    """(1/2R) int_{-R}^{R} |F mu_n|^2 for each R (|F mu_n| is even)."""
    R = np.asarray(R_list, dtype=float)
    r_max = float(R.max())
    _window_depth(system, r_max, n)

    def averages(h0):
        cum, h = _abs_squared_cumulative(system, n, r_max, h0)
        nodes = np.arange(cum.size) * h
        return np.interp(R, nodes, cum) / R

    coarse, fine = averages(step), averages(step / 2)
    bad = np.abs(coarse - fine) > rtol * fine
    if np.any(bad):
        msg = f"average |F|^2 under-resolved at R = {R[bad].tolist()}"
        if strict:
            raise ResolutionError(msg)
        log.warning(msg)
    return coarse


def strichartz_average(system: IfsSystem, R_list: Sequence[float], n: int,
                       step: float = 0.05) -> float:
    """Least-squares slope of log(average |F mu_n|^2 over [-R, R]) against log R."""
    R = np.asarray(R_list, dtype=float)
    if R.size < 2 or R.max() / R.min() < 1e3 * (1 - 1e-9):
        raise ValidationError("R_list must span at least three decades")
    avg = strichartz_averages(system, R, n, step)
    return float(np.polyfit(np.log(R), np.log(avg), 1)[0])


# -- word statistics ---------------------------------------------------------

def _letter_classes(system: IfsSystem):
    """Group letters by |a| (1e-12 relative); returns (log|a| per class, probability per class)."""
    values: list[float] = []
    probs: list[Fraction] = []
    for s, p in zip(system.maps, system.probs):
        a = abs(s.a)
        for g, v in enumerate(values):
            if abs(a - v) <= 1e-12 * v:
                probs[g] += Fraction(p)
                break
        else:
            values.append(a)
            probs.append(Fraction(p))
    return [math.log(v) for v in values], probs


def _class_table(system: IfsSystem, n: int, budget: int):
    logs, probs = _letter_classes(system)
    if math.comb(n + len(logs) - 1, len(logs) - 1) > budget:
        raise BudgetError("letter-count classes exceed the branch budget")
    for counts in count_vectors(n, len(logs)):
        weight = Fraction(math.factorial(n))
        for c, p in zip(counts, probs):
            weight = weight / math.factorial(c) * p ** c
        yield math.fsum(c * lg for c, lg in zip(counts, logs)), weight


def _tie_tol(n: int) -> float:
    return 1e-12 * max(1, n)


def word_tail_probability(system: IfsSystem, n: int, delta: float, side: str,
                          exact: bool = False, budget: int = DEFAULT_BRANCH_BUDGET,
                          samples: int = 10 ** 6, seed: int = 0):
    """p^n{|a_w| <= e^{(chi-delta)n}} (side='lower') or p^n{|a_w| >= e^{(chi+delta)n}} ('upper').

    Boundary cases count as inside the event.  ``exact=True`` returns a
    Fraction.  Beyond the budget a Monte Carlo estimate is returned instead.
    """
    if side not in ("lower", "upper"):
        raise ValidationError("side must be 'lower' or 'upper'")
    chi = contraction_band(system).chi
    tol = _tie_tol(n)
    if side == "lower":
        cut = (chi - delta) * n
        hit = lambda lg: lg <= cut + tol  # noqa: E731
    else:
        cut = (chi + delta) * n
        hit = lambda lg: lg >= cut - tol  # noqa: E731
    try:
        total = sum((w for lg, w in _class_table(system, n, budget) if hit(lg)), Fraction(0))
    except BudgetError:
        est, se = _tail_monte_carlo(system, n, hit, samples, seed)
        log.warning("word classes over budget; Monte Carlo estimate %g +- %g", est, se)
        return est
    return total if exact else float(total)


def _tail_monte_carlo(system, n, hit, samples, seed):
    rng = np.random.default_rng(seed)
    logs = np.log(np.abs(system.a))
    counts = rng.multinomial(n, system.p, size=samples)
    lg = counts @ logs
    frac = float(np.mean(hit(lg)))
    return frac, math.sqrt(frac * (1 - frac) / samples)


@dataclass(frozen=True)
class WordDeviation:
    n: int
    delta: float
    lower_tail: float
    upper_tail: float
    band_miss: float


def word_deviation(system: IfsSystem, n: int, delta: float) -> WordDeviation:
    return WordDeviation(n, delta,
                         word_tail_probability(system, n, delta, "lower"),
                         word_tail_probability(system, n, delta, "upper"),
                         corollary_band_probability(system, n))


def corollary_band_probability(system: IfsSystem, n: int, stats: ContractionStats | None = None,
                               exact: bool = False, budget: int = DEFAULT_BRANCH_BUDGET):
    """p^n{|a_w| >= r_lo^-n or |a_w| <= r_hi^-n}."""
    stats = stats or contraction_band(system)
    upper = -n * math.log(stats.r_lo)
    lower = -n * math.log(stats.r_hi)
    tol = _tie_tol(n)
    total = sum((w for lg, w in _class_table(system, n, budget)
                 if lg >= upper - tol or lg <= lower + tol), Fraction(0))
    return total if exact else float(total)


def band_decay_rate(system: IfsSystem, ns: Sequence[int]) -> ContractionStats:
    """Contraction stats with epsilon_est fitted from log band-miss probability over ``ns``.

    epsilon_est is +inf when every probability vanishes (the band is never missed).
    """
    stats = contraction_band(system)
    ns = list(ns)
    probs = [corollary_band_probability(system, k, stats) for k in ns]
    pts = [(k, p) for k, p in zip(ns, probs) if p > 0]
    if not pts:
        eps = math.inf
    elif len(pts) < 2:
        eps = math.nan
    else:
        x, y = zip(*pts)
        eps = -float(np.polyfit(x, np.log(y), 1)[0])
    return replace(stats, epsilon_est=eps)


# -- the closing estimate ----------------------------------------------------

@dataclass(frozen=True)
class TheoremBound:
    s: float
    eta: float
    kappa: int
    r_lo: int
    c_out: float
    bound: float
    limit: float


def theorem_bound(s: float, eta: float, kappa: int, r_lo: int) -> TheoremBound:
    """c = s*eta/log r_lo and the bound (s*(eta + log kappa) + 2)/log r_lo on R(c; mu)."""
    if r_lo <= 1:
        raise ValidationError("r_lo must exceed 1")
    if s < 0 or eta < 0 or kappa < 1:
        raise ValidationError("s, eta must be nonnegative and kappa >= 1")
    lr = math.log(r_lo)
    return TheoremBound(s=s, eta=eta, kappa=kappa, r_lo=r_lo,
                        c_out=s * eta / lr,
                        bound=(s * (eta + math.log(kappa)) + 2) / lr,
                        limit=2 / lr)


def system_bound(system: IfsSystem, s: float, eta: float) -> TheoremBound:
    """theorem_bound with kappa and r_lo read off the system."""
    return theorem_bound(s, eta, kappa(system), contraction_band(system).r_lo)
