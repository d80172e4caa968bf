"""Envelope recursion X/Y, the partitions Xi, and empirical checks of the main estimate.

For a word i of length k the function X_i is F mu_{n-k} restricted to
I(i) = [-|a_i| R, |a_i| R] with R = r_lo**n.  The envelope Y_i descends from
Y = 1 at level n through

    Y_i(xi) = max( (1/2) sum_j p_j Y_{i.j}(a_j xi), |X_i(xi)| ),

where ``i.j`` appends j as the innermost letter.  Both depend on i only
through (k, |a_i|), so entries are memoized on the level and the vector of
letter counts per |a|-class.  Everything runs on the prepared system: iterated
until max|a| < 1/2 and put in normal form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .errors import BudgetError, ResolutionError, ValidationError
from .fourier import fourier_mu_n
from .ifs import (
    DEFAULT_BRANCH_BUDGET,
    IfsSystem,
    Word,
    contraction_band,
    count_vectors,
    prepare_system,
)

LIPSCHITZ_SLACK = 1.1
INTERP_LIMIT = 0.1
HARD_EXCEPTION = 1.0 - 1e-12
ETA_GRID_PER_DECADE = 20
MAX_GRID_POINTS = 1 << 24
THETA_SAMPLES = 20000


class PartitionError(ValidationError):
    """No coarsening with lengths in the required band exists."""


def _abs_classes(system: IfsSystem):
    """Distinct |a| values (relative tolerance 1e-12) and the class of each map."""
    values: list[float] = []
    group: list[int] = []
    for s in system.maps:
        x = abs(s.a)
        for g, v in enumerate(values):
            if abs(x - v) <= 1e-12 * v:
                group.append(g)
                break
        else:
            values.append(x)
            group.append(len(values) - 1)
    return tuple(values), tuple(group)


def _key_scale(values, counts) -> float:
    return math.prod(v ** c for v, c in zip(values, counts))


def _bump(counts, g):
    out = list(counts)
    out[g] += 1
    return tuple(out)


def lipschitz_constant(max_scale: float) -> float:
    return 2.0 / (1.0 - 2.0 * max_scale)


def alpha_bound(max_scale: float) -> float:
    return math.exp(4.0 * max_scale / (1.0 - 2.0 * max_scale))


@dataclass
class EnvelopeEntry:
    level: int
    counts: tuple[int, ...]
    scale: float
    xi: np.ndarray
    X: np.ndarray
    Y: np.ndarray

    @property
    def half_width(self) -> float:
        return float(self.xi[-1])


@dataclass
class EnvelopeTable:
    system: IfsSystem
    n: int
    h: float
    r_lo: int
    n0: int
    values: tuple[float, ...]
    group: tuple[int, ...]
    entries: dict = field(default_factory=dict)

    @property
    def radius(self) -> int:
        return self.r_lo ** self.n

    @property
    def lipschitz(self) -> float:
        return lipschitz_constant(self.system.max_scale)

    def key_of(self, word: Word) -> tuple[int, tuple[int, ...]]:
        counts = [0] * len(self.values)
        for x in word.letters:
            if not 1 <= x <= self.system.m:
                raise ValidationError(f"letter {x} outside alphabet of size {self.system.m}")
            counts[self.group[x - 1]] += 1
        return len(word), tuple(counts)

    def entry(self, word: Word) -> EnvelopeEntry:
        return self.entries[self.key_of(word)]

    def find(self, level: int, a_value: float) -> EnvelopeEntry:
        """Look an entry up by |a_i| (relative tolerance 1e-12)."""
        for (k, _), e in self.entries.items():
            if k == level and abs(e.scale - abs(a_value)) <= 1e-12 * e.scale:
                return e
        raise KeyError((level, a_value))

    def children(self, key):
        """(map index j, p_j, a_j, child entry) for every letter j."""
        level, counts = key
        s = self.system
        return [(j, s.probs[j], s.maps[j].a, self.entries[(level + 1, _bump(counts, self.group[j]))])
                for j in range(s.m)]

    def ratio(self, key, x) -> np.ndarray:
        """Y_i(x)^2 / sum_j p_j Y_{i.j}(a_j x)^2 with linear interpolation off the grid."""
        e = self.entries[key]
        x = np.asarray(x, dtype=float)
        num = np.interp(x, e.xi, e.Y) ** 2
        den = np.zeros(x.shape)
        for _, p, a, child in self.children(key):
            den += p * np.interp(a * x, child.xi, child.Y) ** 2
        return num / den


def envelope_recursion(system: IfsSystem, n: int, h: float = 0.02,
                       budget: int = DEFAULT_BRANCH_BUDGET) -> EnvelopeTable:
    """Sample X and Y on the grid h*Z for every (level, |a|-class) entry."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not 0 < h <= 0.1:
        raise ValidationError("grid step h must lie in (0, 0.1]")
    prepared, n0 = prepare_system(system, budget=budget)
    L = lipschitz_constant(prepared.max_scale)
    if L * h * math.exp(L * h) / 2 > INTERP_LIMIT:
        raise ResolutionError(f"h={h} too coarse for log-Lipschitz constant {L:.3g}")
    r_lo = contraction_band(prepared).r_lo
    R = r_lo ** n
    if 2 * R / h > MAX_GRID_POINTS:
        raise BudgetError(f"grid over [-{R}, {R}] at step {h} exceeds the point budget")
    values, group = _abs_classes(prepared)
    table = EnvelopeTable(prepared, n, h, r_lo, n0, values, group)

    for level in range(n, -1, -1):
        keys = count_vectors(level, len(values))
        half = {c: math.ceil(_key_scale(values, c) * R / h) + 1 for c in keys}
        widest = max(half.values())
        if level == n:
            X_full = np.ones(2 * widest + 1, dtype=complex)
        else:
            X_full = fourier_mu_n(prepared, n - level, h * np.arange(-widest, widest + 1, dtype=float),
                                  budget=budget)
        for c in keys:
            idx = slice(widest - half[c], widest + half[c] + 1)
            xi = h * np.arange(-half[c], half[c] + 1, dtype=float)
            X = X_full[idx].copy()
            if level == n:
                Y = np.ones(xi.shape)
            else:
                avg = np.zeros(xi.shape)
                for j, s in enumerate(prepared.maps):
                    child = table.entries[(level + 1, _bump(c, group[j]))]
                    avg += prepared.probs[j] * np.interp(s.a * xi, child.xi, child.Y)
                Y = np.maximum(0.5 * avg, np.abs(X))
            table.entries[(level, c)] = EnvelopeEntry(level, c, _key_scale(values, c), xi, X, Y)
    return table


@dataclass(frozen=True)
class LipschitzViolation:
    level: int
    counts: tuple[int, ...]
    kind: str
    xi: float
    value: float
    bound: float

    def to_json(self) -> dict:
        return {"level": self.level, "counts": list(self.counts), "kind": self.kind,
                "xi": self.xi, "value": self.value, "bound": self.bound}


@dataclass
class LipschitzReport:
    L: float
    alpha_bound: float
    alpha_est: float
    violations: list[LipschitzViolation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"L": self.L, "alpha_bound": self.alpha_bound, "alpha_est": self.alpha_est,
                "violations": [v.to_json() for v in self.violations]}


def verify_lipschitz(table: EnvelopeTable, slack: float = LIPSCHITZ_SLACK) -> LipschitzReport:
    """Difference quotients of X and Y against L*Y, and max/min of Y over short windows.

    The window check runs over length 2*max|a| in each entry's own
    coordinates: that is the image a_j I' of an interval |I'| <= 2 on which
    the ratio is bounded by alpha.
    """
    L = table.lipschitz
    max_a = table.system.max_scale
    alpha = alpha_bound(max_a)
    width = max(1, int(math.floor(2 * max_a / table.h)) + 1)
    violations = []
    alpha_est = 1.0
    for (level, counts), e in sorted(table.entries.items()):
        if e.xi.size < 2:
            continue
        cap = L * np.maximum(e.Y[1:], e.Y[:-1]) * slack
        for kind, arr in (("X", e.X), ("Y", e.Y)):
            q = np.abs(np.diff(arr)) / table.h
            for i in np.flatnonzero(q > cap):
                violations.append(LipschitzViolation(level, counts, kind, float(e.xi[i]),
                                                     float(q[i]), float(cap[i])))
        if level > 0:
            hi = maximum_filter1d(e.Y, width, mode="nearest")
            lo = minimum_filter1d(e.Y, width, mode="nearest")
            worst = float(np.max(hi / lo))
            alpha_est = max(alpha_est, worst)
            if worst > alpha * slack:
                i = int(np.argmax(hi / lo))
                violations.append(LipschitzViolation(level, counts, "alpha", float(e.xi[i]),
                                                     worst, alpha * slack))
    return LipschitzReport(L, alpha, alpha_est, violations)


@dataclass
class PartitionFamily:
    radius: int
    breakpoints: dict  # (level, counts) -> sorted int64 array from -radius to radius

    def cells(self, key) -> np.ndarray:
        b = self.breakpoints[key]
        return np.column_stack([b[:-1], b[1:]])

    def lengths(self, key) -> np.ndarray:
        return np.diff(self.breakpoints[key])


def _coarsen(candidates: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Earliest-cut chain from candidates[0] to candidates[-1] with gaps in [lo, hi]."""
    x = candidates
    K = x.size
    first = np.searchsorted(x, x + lo - 1e-9, side="left")
    last = np.searchsorted(x, x + hi + 1e-9, side="right")
    feasible = np.zeros(K, dtype=bool)
    feasible[-1] = True
    tail = np.zeros(K + 1, dtype=np.int64)
    tail[K - 1] = 1
    for i in range(K - 2, -1, -1):
        l, r = first[i], last[i]
        feasible[i] = l < r and tail[l] - tail[r] > 0
        tail[i] = tail[i + 1] + feasible[i]
    if not feasible[0]:
        raise PartitionError(f"no coarsening with lengths in [{lo:g}, {hi:g}]")
    nxt = np.full(K + 1, K, dtype=np.int64)
    for i in range(K - 1, -1, -1):
        nxt[i] = i if feasible[i] else nxt[i + 1]
    chain = [0]
    i = 0
    while i != K - 1:
        i = int(nxt[first[i]])
        chain.append(i)
    return x[chain]


def build_partitions(system: IfsSystem, n: int, budget: int = DEFAULT_BRANCH_BUDGET,
                     table: EnvelopeTable | None = None) -> PartitionFamily:
    """Xi_i for every (level, |a|-class) entry, by greedy left-to-right merging.

    Each child's breakpoints are drawn from the intersection of the
    breakpoints of all its parents, so it coarsens every one of them.
    """
    if table is not None:
        prepared, values, group, R = table.system, table.values, table.group, table.radius
    else:
        prepared, _ = prepare_system(system, budget=budget)
        values, group = _abs_classes(prepared)
        R = contraction_band(prepared).r_lo ** n
    if 2 * R + 1 > MAX_GRID_POINTS:
        raise BudgetError(f"{2 * R} unit intervals exceed the budget")
    parts = {(0, (0,) * len(values)): np.arange(-R, R + 1, dtype=np.int64)}
    for level in range(1, n + 1):
        for c in count_vectors(level, len(values)):
            parents = [(level - 1, tuple(x - (g == i) for i, x in enumerate(c)))
                       for g in range(len(values)) if c[g] > 0]
            cand = parts[parents[0]]
            for key in parents[1:]:
                cand = np.intersect1d(cand, parts[key], assume_unique=True)
            a = _key_scale(values, c)
            lo = min(1.0 / a, 2.0 * R)
            try:
                parts[(level, c)] = _coarsen(cand, lo, 2.0 / a)
            except PartitionError as exc:
                raise PartitionError(f"level {level}, counts {c}: {exc}") from None
    return PartitionFamily(R, parts)


@dataclass(frozen=True)
class ParentRecord:
    level: int
    counts: tuple[int, ...]
    j: int
    interval: tuple[int, int]
    pieces: int
    exceptions: int
    eta_third: float | None  # third-smallest eta over the pieces; None when vacuous

    @property
    def vacuous(self) -> bool:
        return self.pieces <= 2

    def to_json(self) -> dict:
        return {"level": self.level, "counts": list(self.counts), "j": self.j,
                "interval": list(self.interval), "pieces": self.pieces,
                "exceptions": self.exceptions,
                "eta_third": "no claim" if self.vacuous else self.eta_third}


@dataclass
class ExceptionReport:
    records: list[ParentRecord]
    eta: float
    max_exceptions: int
    alpha_est: float
    p_min: float
    c: float
    c_prime: float
    theta_rate: dict

    @property
    def claims(self) -> list[ParentRecord]:
        return [r for r in self.records if not r.vacuous]

    def to_json(self) -> dict:
        return {"eta": self.eta, "max_exceptions": self.max_exceptions,
                "alpha_est": self.alpha_est, "p_min": self.p_min, "c": self.c,
                "c_prime": self.c_prime,
                "theta_rate": {str(k): v for k, v in sorted(self.theta_rate.items())},
                "parents": [r.to_json() for r in self.records]}


def _snap_down(eta: float) -> float:
    if not eta > 0 or not math.isfinite(eta):
        return 0.0 if not eta > 0 else eta
    k = math.floor(math.log10(eta) * ETA_GRID_PER_DECADE + 1e-9)
    return 10.0 ** (k / ETA_GRID_PER_DECADE)


def _piece_max_ratio(table: EnvelopeTable, key, edges: np.ndarray) -> np.ndarray:
    """Max of the ratio over each [edges[i], edges[i+1]]: grid samples, ends and midpoint."""
    e = table.entries[key]
    grid_ratio = table.ratio(key, e.xi)
    h = table.h
    origin = e.xi[0]
    out = np.maximum(table.ratio(key, edges[:-1]), table.ratio(key, edges[1:]))
    out = np.maximum(out, table.ratio(key, 0.5 * (edges[:-1] + edges[1:])))
    start = np.ceil((edges[:-1] - origin) / h - 1e-9).astype(np.int64)
    stop = np.floor((edges[1:] - origin) / h + 1e-9).astype(np.int64) + 1
    start = np.clip(start, 0, grid_ratio.size)
    stop = np.clip(stop, 0, grid_ratio.size)
    for i in np.flatnonzero(stop > start):
        out[i] = max(out[i], float(grid_ratio[start[i]:stop[i]].max()))
    return out


def _theta_rate(table: EnvelopeTable, key) -> float:
    """Median |d Theta/d xi| between the first and last branch, from exact transforms."""
    level, _ = key
    e = table.entries[key]
    s = table.system
    stride = max(1, e.xi.size // THETA_SAMPLES)
    xi = e.xi[::stride]
    first, last = s.maps[0], s.maps[-1]
    k = table.n - level - 1
    t1 = np.exp(-1j * first.b * xi) * fourier_mu_n(s, k, first.a * xi)
    tm = np.exp(-1j * last.b * xi) * fourier_mu_n(s, k, last.a * xi)
    theta = np.unwrap(np.angle(t1) - np.angle(tm))
    return float(np.median(np.abs(np.diff(theta)) / (stride * table.h)))


def verify_main_estimate(table: EnvelopeTable, partitions: PartitionFamily) -> ExceptionReport:
    """Count, for each parent i, letter j and I in Xi_{i.j}, the pieces a_{i.j} I_nu
    on which Y_i^2 <= e^{-eta} sum_j p_j Y_{i.j}(a_j .)^2 cannot hold for any eta > 0.

    eta is the largest value on a log grid for which every claim has at most
    two failing pieces.
    """
    if partitions.radius != table.radius:
        raise ValidationError("partitions and table were built for different (system, n)")
    s = table.system
    records = []
    theta_rate = {}
    seen_groups = []
    for j in range(s.m):
        if table.group[j] not in [table.group[i] for i in seen_groups]:
            seen_groups.append(j)
    for level in range(table.n):
        for counts in count_vectors(level, len(table.values)):
            key = (level, counts)
            parent_bp = partitions.breakpoints[key].astype(float)
            scale = table.entries[key].scale
            for j in seen_groups:
                child_key = (level + 1, _bump(counts, table.group[j]))
                child_bp = partitions.breakpoints[child_key]
                a_child = scale * abs(s.maps[j].a)
                piece_max = _piece_max_ratio(table, key, a_child * parent_bp)
                piece_eta = -np.log(piece_max)
                # locate each child interval's run of parent pieces
                bounds = np.searchsorted(partitions.breakpoints[key], child_bp)
                for lo_i, hi_i, left, right in zip(bounds[:-1], bounds[1:], child_bp[:-1], child_bp[1:]):
                    etas = np.sort(piece_eta[lo_i:hi_i])
                    pieces = int(hi_i - lo_i)
                    hard = int(np.sum(piece_max[lo_i:hi_i] >= HARD_EXCEPTION))
                    third = float(etas[2]) if pieces > 2 else None
                    records.append(ParentRecord(level, counts, j + 1, (int(left), int(right)),
                                                pieces, hard, third))
            if level not in theta_rate and level < table.n - 1:
                theta_rate[level] = _theta_rate(table, key)

    claims = [r for r in records if not r.vacuous]
    max_exc = max((r.exceptions for r in claims), default=0)
    eta = min((r.eta_third for r in claims), default=math.inf)
    eta = _snap_down(eta) if math.isfinite(eta) else 0.0
    p_min = min(s.probs)
    alpha_est = verify_lipschitz(table).alpha_est
    alpha = alpha_bound(s.max_scale)
    c = p_min / (2 * alpha ** 2) ** 2
    c_prime = (1 / 8) ** 2 * (p_min / (2 * alpha ** 2)) ** 2
    return ExceptionReport(records, eta, max_exc, alpha_est, p_min, c, c_prime, theta_rate)


def r_indicator(table: EnvelopeTable, report: ExceptionReport, xi: float, word: Word) -> float:
    """eta if the contraction inequality holds at xi for this word with the reported eta, else 0."""
    level, counts = table.key_of(word)
    if level >= table.n:
        raise ValidationError("word must be shorter than the table depth")
    e = table.entries[(level, counts)]
    limit = e.scale * table.radius
    if abs(xi) > limit * (1 + 1e-12):
        raise ValidationError(f"xi={xi} outside I(i) = [-{limit}, {limit}]")
    if report.eta <= 0:
        return 0.0
    ratio = float(table.ratio((level, counts), np.array([xi]))[0])
    return report.eta if ratio <= math.exp(-report.eta) else 0.0


def accumulated_contraction(table: EnvelopeTable, report: ExceptionReport, xi: float,
                            word: Word) -> float:
    """Sum of r over the nested words letters[:k], k < n, each at a_{letters[:k]} xi."""
    if len(word) != table.n:
        raise ValidationError("word length must equal the table depth")
    total = 0.0
    for k in range(table.n):
        prefix = Word(word.letters[:k])
        total += r_indicator(table, report, prefix.scale(table.system) * xi, prefix)
    return total
