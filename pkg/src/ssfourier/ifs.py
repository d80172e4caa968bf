"""Iterated function systems on the line: maps, words, normalization, iteration.

Words are written the way they are composed, outermost letter first::

    Word((2, 1))  ->  S_2 o S_1      (S_1 is applied first)

so ``Word(u) + Word(v)`` composes as ``S_u o S_v``.  Letters are 1-based.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetError, ValidationError

DEFAULT_BRANCH_BUDGET = 2 ** 24
PROB_TOL = 1e-9


@dataclass(frozen=True)
class AffineMap:
    """x -> a*x + b."""

    a: float
    b: float

    def __call__(self, x):
        return self.a * x + self.b

    def after(self, inner: "AffineMap") -> "AffineMap":
        """Return ``self o inner`` (``inner`` applied first)."""
        return AffineMap(self.a * inner.a, self.a * inner.b + self.b)

    @property
    def fixed_point(self) -> float:
        return self.b / (1.0 - self.a)


IDENTITY = AffineMap(1.0, 0.0)


@dataclass(frozen=True)
class IfsSystem:
    maps: tuple[AffineMap, ...]
    probs: tuple[float, ...]
    normalized: bool = False
    iterate_depth: int = 1

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        m = len(self.maps)
        if m < 2:
            raise ValidationError(f"need at least two maps, got {m}")
        if len(self.probs) != m:
            raise ValidationError("maps and probs differ in length")
        for s in self.maps:
            if not abs(s.a) < 1.0:
                raise ValidationError(f"map {s} is not a contraction")
            if s.a == 0.0:
                raise ValidationError(f"map {s} is degenerate (a = 0)")
        if any(not (0.0 < p < 1.0) for p in self.probs):
            raise ValidationError("probabilities must lie in (0, 1)")
        if abs(math.fsum(self.probs) - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {math.fsum(self.probs)!r}, not 1")
        fixed = [s.fixed_point for s in self.maps]
        scale = max(1.0, max(abs(x) for x in fixed))
        if max(fixed) - min(fixed) <= 1e-12 * scale:
            raise ValidationError("all maps share one fixed point: the attractor is a single point")
        if self.normalized:
            bs = [s.b for s in self.maps]
            if bs[0] != 0.0 or bs[-1] != 1.0 or any(x > y for x, y in zip(bs, bs[1:])):
                raise ValidationError("normalized system must have sorted b with b_1 = 0, b_m = 1")

    @property
    def m(self) -> int:
        return len(self.maps)

    @property
    def a(self) -> np.ndarray:
        return np.array([s.a for s in self.maps])

    @property
    def b(self) -> np.ndarray:
        return np.array([s.b for s in self.maps])

    @property
    def p(self) -> np.ndarray:
        return np.array(self.probs)

    @property
    def max_scale(self) -> float:
        return max(abs(s.a) for s in self.maps)

    @property
    def is_homogeneous(self) -> bool:
        a0 = self.maps[0].a
        return all(abs(s.a - a0) <= 1e-15 * abs(a0) for s in self.maps)

    def to_json(self) -> dict:
        return {"maps": [[s.a, s.b] for s in self.maps], "probs": list(self.probs)}


@dataclass(frozen=True)
class Word:
    letters: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(int(x) for x in self.letters))
        if any(x < 1 for x in self.letters):
            raise ValidationError("letters are 1-based")

    def __len__(self) -> int:
        return len(self.letters)

    def __add__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters)

    def append(self, j: int) -> "Word":
        """The word ``self . j`` (``j`` applied first)."""
        return Word(self.letters + (j,))

    def tail(self, k: int) -> "Word":
        """Letters at positions k..n counted from the right (position 1 = applied first).

        Positions k..n sit at the left of the written tuple, so this drops
        the k-1 innermost letters.
        """
        n = len(self.letters)
        if not 1 <= k <= n + 1:
            raise ValidationError(f"position {k} out of range for a word of length {n}")
        return Word(self.letters[: n - k + 1])

    def scale(self, system: IfsSystem) -> float:
        return math.prod(system.maps[x - 1].a for x in self.letters)

    def weight(self, system: IfsSystem) -> float:
        return math.prod(system.probs[x - 1] for x in self.letters)


def build_system(maps: Sequence[Sequence[float]], probs: Sequence[float]) -> IfsSystem:
    """Validate ``[(a, b), ...]`` and probabilities into an :class:`IfsSystem`."""
    if len(maps) < 2:
        raise ValidationError(f"need at least two maps, got {len(maps)}")
    try:
        affine = tuple(AffineMap(float(a), float(b)) for a, b in maps)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"maps must be (a, b) pairs: {exc}") from None
    return IfsSystem(affine, tuple(float(p) for p in probs))


def compose_word(system: IfsSystem, w: Word) -> AffineMap:
    """S_w = S_{w[0]} o ... o S_{w[-1]}; the empty word gives the identity."""
    out = IDENTITY
    for x in w.letters:
        if x > system.m:
            raise ValidationError(f"letter {x} outside alphabet of size {system.m}")
    for x in reversed(w.letters):
        out = system.maps[x - 1].after(out)
    return out


def normalizing_conjugacy(system: IfsSystem) -> tuple[float, float]:
    """Return (scale, shift) of y = scale*x + shift putting the system in normal form.

    The new translations are b'_i = scale*b_i + shift*(1 - a_i); the shift is
    the unique one making min b' = 0 (the minimum is increasing in the shift),
    and the scale then makes max b' = 1.  The new measure is the push-forward,
    so |F mu_new(xi)| = |F mu_old(scale * xi)|.
    """
    a, b = system.a, system.b
    u = float(np.max(-b / (1.0 - a)))
    v = b + u * (1.0 - a)
    spread = float(np.max(v))
    if not spread > 0.0:
        raise ValidationError("translations collapse: the attractor is a single point")
    scale = 1.0 / spread
    return scale, scale * u


def normalize_coordinates(system: IfsSystem) -> IfsSystem:
    scale, shift = normalizing_conjugacy(system)
    a, b = system.a, system.b
    v = b + (shift / scale) * (1.0 - a)
    new_b = v * scale
    new_b[np.argmin(v)] = 0.0
    new_b[np.argmax(v)] = 1.0
    order = sorted(range(system.m), key=lambda i: (new_b[i], a[i]))
    maps = tuple(AffineMap(float(a[i]), float(new_b[i])) for i in order)
    probs = tuple(system.probs[i] for i in order)
    return IfsSystem(maps, probs, normalized=True, iterate_depth=system.iterate_depth)


def iter_words(m: int, n: int) -> Iterable[Word]:
    for letters in itertools.product(range(1, m + 1), repeat=n):
        yield Word(letters)


def iterate_system(system: IfsSystem, n0: int, budget: int = DEFAULT_BRANCH_BUDGET) -> IfsSystem:
    """The system {(S_w, p_w)} over all words of length n0 (same invariant measure)."""
    if n0 < 1:
        raise ValidationError("n0 must be >= 1")
    if n0 == 1:
        return system
    if system.m ** n0 > budget:
        raise BudgetError(f"{system.m}^{n0} words exceed the branch budget {budget}")
    maps, probs = [], []
    for w in iter_words(system.m, n0):
        maps.append(compose_word(system, w))
        probs.append(w.weight(system))
    total = math.fsum(probs)
    probs = [p / total for p in probs]
    return IfsSystem(tuple(maps), tuple(probs), iterate_depth=system.iterate_depth * n0)


def lyapunov_exponent(system: IfsSystem) -> float:
    return math.fsum(p * math.log(abs(s.a)) for p, s in zip(system.probs, system.maps))


@dataclass(frozen=True)
class ContractionStats:
    chi: float
    r_lo: int
    r_hi: int
    epsilon_est: float | None = field(default=None)


def contraction_band(system: IfsSystem) -> ContractionStats:
    """Integers r_lo < exp|chi| < r_hi with r_hi - r_lo <= 2 (tightest such pair)."""
    chi = lyapunov_exponent(system)
    rate = math.exp(-chi)
    nearest = round(rate)
    if abs(rate - nearest) <= 1e-9 * rate:
        lo, hi = nearest - 1, nearest + 1
    else:
        lo, hi = math.floor(rate), math.ceil(rate)
    if lo < 1:
        raise ValidationError(f"no admissible integer band around exp|chi| = {rate}; iterate the system")
    return ContractionStats(chi=chi, r_lo=lo, r_hi=hi)


def kappa(system: IfsSystem) -> int:
    """Largest number of parent cells a partition cell can absorb: floor(2 / min|a_i|)."""
    x = 2.0 / min(abs(s.a) for s in system.maps)
    return int(math.floor(x + 1e-9))


def prepare_system(system: IfsSystem, max_scale: float = 0.5,
                   budget: int = DEFAULT_BRANCH_BUDGET) -> tuple[IfsSystem, int]:
    """Iterate until every |a_i| < max_scale, then normalize.  Returns (system, n0)."""
    n0 = 1
    while system.max_scale ** n0 >= max_scale:
        n0 += 1
    return normalize_coordinates(iterate_system(system, n0, budget)), n0


def scale_groups(system: IfsSystem) -> tuple[tuple[float, ...], tuple[int, ...]]:
    """Distinct scale factors and, per map, the index of its group.

    Two maps land in the same group when their a-values agree to 1e-12
    relative; products of scales then depend only on per-group letter counts.
    """
    values: list[float] = []
    group: list[int] = []
    for s in system.maps:
        for g, v in enumerate(values):
            if abs(s.a - v) <= 1e-12 * abs(v):
                group.append(g)
                break
        else:
            values.append(s.a)
            group.append(len(values) - 1)
    return tuple(values), tuple(group)


def count_vectors(total: int, parts: int) -> list[tuple[int, ...]]:
    """All nonnegative integer vectors of length ``parts`` summing to ``total`` (lex order)."""
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for rest in count_vectors(total - first, parts - 1):
            out.append((first,) + rest)
    return out


def count_scale(values: Sequence[float], counts: Sequence[int]) -> float:
    out = 1.0
    for v, c in zip(values, counts):
        out *= v ** c
    return out
