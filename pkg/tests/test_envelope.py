import math

import numpy as np
import pytest

from ssfourier.envelope import (
    EnvelopeEntry,
    EnvelopeTable,
    PartitionError,
    _coarsen,
    accumulated_contraction,
    build_partitions,
    envelope_recursion,
    r_indicator,
    verify_lipschitz,
    verify_main_estimate,
)
from ssfourier.errors import ResolutionError, ValidationError
from ssfourier.fourier import fourier_mu_n
from ssfourier.ifs import Word, build_system


@pytest.fixture(scope="module")
def cantor8():
    s = build_system([(1 / 3, 0.0), (1 / 3, 2 / 3)], [0.5, 0.5])
    table = envelope_recursion(s, 8, 0.02)
    parts = build_partitions(s, 8, table=table)
    return table, parts, verify_main_estimate(table, parts)


@pytest.fixture(scope="module")
def hetero8():
    s = build_system([(1 / 3, 0.0), (1 / 4, 1.0)], [0.5, 0.5])
    table = envelope_recursion(s, 8, 0.02)
    parts = build_partitions(s, 8, table=table)
    return table, parts, verify_main_estimate(table, parts)


def _tables(cantor8, hetero8):
    return [cantor8[0], hetero8[0]]


def test_table_shape(cantor8):
    table = cantor8[0]
    assert table.radius == 256 and table.r_lo == 2 and table.n0 == 1
    assert table.lipschitz == pytest.approx(6.0)
    top = table.entry(Word(()))
    assert top.xi[0] <= -256 and top.xi[-1] >= 256
    e = table.find(3, 1 / 27)
    assert e.level == 3 and e.half_width >= 256 / 27


def test_terminal_level_and_origin(cantor8, hetero8):
    for table in _tables(cantor8, hetero8):
        for (k, _), e in table.entries.items():
            zero = np.flatnonzero(e.xi == 0.0)
            assert zero.size == 1
            assert e.X[zero[0]] == pytest.approx(1.0, abs=1e-12)
            assert e.Y[zero[0]] == pytest.approx(1.0, abs=1e-12)
            if k == table.n:
                assert np.all(e.Y == 1.0) and np.all(e.X == 1.0)


def test_envelope_bounds_and_sandwich(cantor8, hetero8):
    for table in _tables(cantor8, hetero8):
        for key, e in table.entries.items():
            assert np.all(e.Y >= np.abs(e.X)) and np.all(e.Y <= 1 + 1e-12)
            if key[0] == table.n:
                continue
            avg = sum(p * np.interp(a * e.xi, c.xi, c.Y) for _, p, a, c in table.children(key))
            assert np.all(0.5 * avg <= e.Y + 1e-15)
            assert np.all(e.Y <= avg + 1e-9 + 0.01 * e.Y)


def test_two_step_sandwich(hetero8):
    table = hetero8[0]
    s = table.system
    for word in [Word(()), Word((1,)), Word((2, 1)), Word((1, 2, 2))]:
        k, counts = table.key_of(word)
        e = table.entries[(k, counts)]
        total = np.zeros(e.xi.shape)
        for _, p, a, child in table.children((k, counts)):
            for _, q, b, grand in table.children((child.level, child.counts)):
                total += p * q * np.interp(a * b * e.xi, grand.xi, grand.Y)
        assert np.all(total / 4 <= e.Y + 1e-12)
        assert np.all(e.Y <= total + 1e-9 + 0.02 * e.Y)
    assert s.max_scale < 0.5


def test_top_level_matches_transform(cantor8):
    table = cantor8[0]
    top = table.entry(Word(()))
    exact = fourier_mu_n(table.system, 8, top.xi)
    assert np.max(np.abs(top.X - exact)) < 1e-12
    assert np.all(top.Y >= np.abs(exact) - 1e-12)
    assert top.Y[top.xi == 0][0] == pytest.approx(abs(exact[top.xi == 0][0]), abs=1e-12)


def test_grid_step_checks():
    s = build_system([(1 / 3, 0.0), (1 / 3, 1.0)], [0.5, 0.5])
    with pytest.raises(ValidationError):
        envelope_recursion(s, 4, 0.2)
    with pytest.raises(ResolutionError):
        envelope_recursion(s, 4, 0.1)


def test_auto_iteration():
    s = build_system([(1 / 2, 0.0), (1 / 4, 3 / 4)], [0.5, 0.5])
    table = envelope_recursion(s, 3, 0.02)
    assert table.n0 == 2 and table.system.max_scale < 0.5 and table.system.normalized


def test_lipschitz_clean(cantor8, hetero8):
    for table in _tables(cantor8, hetero8):
        rep = verify_lipschitz(table)
        assert rep.ok and rep.violations == []
        assert 1.0 <= rep.alpha_est <= rep.alpha_bound


def test_lipschitz_constant_level_and_spike():
    s = build_system([(1 / 3, 0.0), (1 / 3, 1.0)], [0.5, 0.5])
    xi = 0.02 * np.arange(-50, 51, dtype=float)
    flat = EnvelopeTable(s, 1, 0.02, 2, 1, (1 / 3,), (0, 0))
    flat.entries[(1, (1,))] = EnvelopeEntry(1, (1,), 1 / 3, xi, np.ones(xi.size, complex), np.ones(xi.size))
    assert verify_lipschitz(flat).violations == []

    Y = np.full(xi.size, 0.5)
    Y[60] = 1.0
    spiky = EnvelopeTable(s, 1, 0.02, 2, 1, (1 / 3,), (0, 0))
    spiky.entries[(0, (0,))] = EnvelopeEntry(0, (0,), 1.0, xi, 0.5 * np.ones(xi.size, complex), Y)
    viol = verify_lipschitz(spiky).violations
    assert viol and all(v.kind == "Y" for v in viol)
    assert {round(v.xi, 9) for v in viol} == {round(xi[59], 9), round(xi[60], 9)}


def test_partition_examples():
    s = build_system([(1 / 3, 0.0), (1 / 3, 1.0)], [0.5, 0.5])
    p3 = build_partitions(s, 3)
    assert p3.radius == 8 and p3.lengths((0, (0,))).tolist() == [1] * 16
    p4 = build_partitions(s, 4)
    lengths = p4.lengths((1, (1,)))
    assert lengths.min() >= 3 and lengths.max() <= 6
    # 3^k >= 2 * 16 from k = 4 on: a single interval
    assert p4.breakpoints[(4, (4,))].tolist() == [-16, 16]


def _check_family(table, parts):
    R = parts.radius
    for (k, counts), bp in parts.breakpoints.items():
        assert bp[0] == -R and bp[-1] == R and np.all(np.diff(bp) > 0)
        a = table.entries[(k, counts)].scale
        lens = np.diff(bp)
        assert lens.min() >= min(1 / a, 2 * R) - 1e-9 and lens.max() <= 2 / a + 1e-9
        for g, c in enumerate(counts):
            if c:
                parent = list(counts)
                parent[g] -= 1
                assert np.all(np.isin(bp, parts.breakpoints[(k - 1, tuple(parent))]))


def test_partition_family_invariants(cantor8, hetero8):
    for table, parts, _ in (cantor8, hetero8):
        _check_family(table, parts)


def test_coarsen_infeasible():
    with pytest.raises(PartitionError):
        _coarsen(np.array([0, 5, 10]), 6, 7)
    assert _coarsen(np.arange(0, 13), 3, 6).tolist() == [0, 3, 6, 9, 12]


@pytest.mark.parametrize("fixture", ["cantor8", "hetero8"])
def test_main_estimate(fixture, request):
    _, _, rep = request.getfixturevalue(fixture)
    assert rep.max_exceptions <= 2
    assert rep.eta > 0
    assert all(r.exceptions <= 2 for r in rep.records)
    vacuous = [r for r in rep.records if r.vacuous]
    assert all(r.to_json()["eta_third"] == "no claim" for r in vacuous)
    assert all(r.eta_third >= rep.eta for r in rep.claims)
    assert 0 < rep.c_prime < rep.c < rep.p_min


def test_theta_rate_near_unit_slope(cantor8):
    # the phase difference turns at rate |b_m - b_1| = 1 in normal form
    rates = cantor8[2].theta_rate
    assert all(abs(v - 1) < 0.1 for v in rates.values())


def test_r_indicator(cantor8):
    table, _, rep = cantor8
    root = Word(())
    assert r_indicator(table, rep, 0.0, root) == 0.0  # ratio is exactly 1 at the origin
    e = table.entry(root)
    xi = e.xi[np.abs(e.xi) <= table.radius]
    ratio = table.ratio((0, (0,)), xi)
    good = float(xi[np.argmin(ratio)])
    assert r_indicator(table, rep, good, root) == rep.eta
    with pytest.raises(ValidationError):
        r_indicator(table, rep, 1e4, root)
    with pytest.raises(ValidationError):
        r_indicator(table, rep, 0.0, Word((1,) * 8))


def test_accumulated_contraction(cantor8):
    table, _, rep = cantor8
    word = Word((1, 2, 1, 1, 2, 2, 1, 2))
    assert accumulated_contraction(table, rep, 0.0, word) == 0.0
    vals = [accumulated_contraction(table, rep, x, word) for x in np.linspace(-256, 256, 41)]
    assert all(v >= 0 and v <= 8 * rep.eta + 1e-15 for v in vals)
    assert max(vals) > 0
