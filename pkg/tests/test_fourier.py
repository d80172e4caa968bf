import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from ssfourier.errors import ValidationError
from ssfourier.fourier import (
    birkhoff_average,
    fit_log_slope,
    fourier_chaos_game,
    fourier_mu_n,
    fourier_product,
    grid_points,
    log_modulus_psi_sum,
    mu_n_convergence,
    psi,
    spectrum,
)
from ssfourier.ifs import build_system


def brute_mu_n(system, n, xi):
    """Direct sum over all m^n words of p_w exp(-i xi S_w(0))."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape, dtype=complex)
    for letters in itertools.product(range(system.m), repeat=n):
        a, b, p = 1.0, 0.0, 1.0
        for j in reversed(letters):
            s = system.maps[j]
            a, b = s.a * a, s.a * b + s.b
            p *= system.probs[j]
        out += p * np.exp(-1j * xi * b)
    return out


@pytest.mark.parametrize("maps, probs", [
    ([(1 / 3, 0.0), (1 / 3, 2 / 3)], [0.5, 0.5]),
    ([(1 / 2, 0.0), (1 / 4, 3 / 4)], [0.3, 0.7]),
    ([(0.5, 0.1), (-0.3, 1.0), (0.2, 0.4)], [0.2, 0.3, 0.5]),
])
def test_matches_word_enumeration(maps, probs):
    s = build_system(maps, probs)
    xi = np.random.default_rng(1).uniform(-300, 300, 200)
    for n in range(0, 7):
        assert np.max(np.abs(fourier_mu_n(s, n, xi) - brute_mu_n(s, n, xi))) < 1e-12


def test_basic_values(cantor, cantor_normal, hetero):
    assert fourier_mu_n(hetero, 0, 123.4) == 1
    assert fourier_mu_n(cantor, 9, 0.0) == 1
    assert abs(fourier_mu_n(cantor_normal, 1, math.pi)) < 1e-15
    assert isinstance(fourier_mu_n(cantor, 3, 1.0), complex)
    with pytest.raises(ValidationError):
        fourier_mu_n(cantor, -1, 1.0)


def test_recursion_consistency(hetero):
    """F mu_{n+1}(xi) = sum_j p_j e^{-i b_j xi} F mu_n(a_j xi)."""
    xi = np.random.default_rng(2).uniform(-1e3, 1e3, 200)
    for n in range(13):
        rhs = sum(p * np.exp(-1j * m.b * xi) * fourier_mu_n(hetero, n, m.a * xi)
                  for m, p in zip(hetero.maps, hetero.probs))
        assert np.max(np.abs(fourier_mu_n(hetero, n + 1, xi) - rhs)) < 1e-12


def test_modulus_and_symmetry(hetero):
    xi = np.linspace(-500, 500, 4001)
    f = fourier_mu_n(hetero, 10, xi)
    assert np.all(np.abs(f) <= 1 + 1e-12)
    assert np.max(np.abs(f - np.conj(f[::-1]))) < 1e-12


def test_spectrum_grid(cantor):
    g = spectrum(cantor, 8, -10.0, 10.0, 0.05)
    xi = g.xi
    assert xi.size == 401 and xi[200] == 0.0
    assert g.values[200] == 1
    assert np.max(np.abs(g.values - np.conj(g.values[::-1]))) < 1e-13
    assert grid_points(0, 0, 1).tolist() == [0.0]


def test_product_formula(cantor):
    assert abs(fourier_product(cantor, 1.5 * math.pi, 5)) < 1e-15
    assert fourier_product(cantor, 0.0, 12) == 1
    xi = np.random.default_rng(4).uniform(-3 ** 9, 3 ** 9, 500)
    explicit = np.prod([(1 + np.exp(-2j * 3.0 ** -l * xi)) / 2 for l in range(1, 11)], axis=0)
    assert np.max(np.abs(fourier_product(cantor, xi, 10) - explicit)) < 1e-12
    assert np.max(np.abs(fourier_product(cantor, xi, 10) - fourier_mu_n(cantor, 10, xi))) < 1e-12


def test_product_rejects_heterogeneous(hetero):
    with pytest.raises(ValidationError):
        fourier_product(hetero, 1.0, 3)


def test_chaos_game_oracles(cantor):
    assert fourier_chaos_game(cantor, 0.0, 1000, seed=5).value == 1
    est = fourier_chaos_game(cantor, [1.5 * math.pi, math.pi], 10 ** 6, seed=0)
    assert abs(est.value[0]) <= 3 * est.stderr[0]
    exact = fourier_product(cantor, math.pi, 40)
    assert abs(est.value[1] - exact) <= 3 * est.stderr[1]
    again = fourier_chaos_game(cantor, [1.5 * math.pi, math.pi], 10 ** 6, seed=0)
    assert np.array_equal(again.value, est.value)


def test_chaos_game_rate(cantor):
    """RMS error over seeds falls like samples^(-1/2)."""
    exact = fourier_product(cantor, math.pi, 40)
    sizes = [1000, 3162, 10000, 31623, 100000]
    rms = []
    for n in sizes:
        errs = [abs(fourier_chaos_game(cantor, math.pi, n, seed=k).value - exact) for k in range(30)]
        rms.append(math.sqrt(np.mean(np.square(errs))))
    slope = fit_log_slope(np.log(sizes), rms)
    assert -0.6 <= slope <= -0.4


def test_psi_values():
    assert psi(0.0) == 0.0
    assert psi(math.pi / 2) == -math.inf
    assert psi(math.pi / 4) == pytest.approx(-0.5 * math.log(2), abs=1e-15)
    x = np.linspace(-10, 10, 1001)
    # psi(x) = log(|1 + e^{-2ix}| / 2)
    direct = np.log(np.abs(1 + np.exp(-2j * x)) / 2)
    assert np.allclose(psi(x), direct, atol=1e-12)


def test_psi_sum():
    assert log_modulus_psi_sum(0.0, 8) == 0.0
    assert log_modulus_psi_sum(4.5 * math.pi, 3) == -math.inf  # l=1 term sits at 3pi/2


def test_space_average_quadrature():
    # log|cos x| has integrable singularities at pi/2 and 3pi/2
    val, _ = integrate.quad(psi, 0, 2 * math.pi, points=[math.pi / 2, 3 * math.pi / 2], limit=200)
    assert val / (2 * math.pi) == pytest.approx(-math.log(2), abs=1e-8)


def test_birkhoff_average():
    assert birkhoff_average(0.0, 1000) == 0.0
    theta = np.random.default_rng(7).uniform(-math.pi, math.pi, 100)
    avg = birkhoff_average(theta, 10 ** 5)
    assert np.sum(np.abs(avg + math.log(2)) < 0.01) >= 95
    with pytest.raises(ValidationError):
        birkhoff_average(4.0, 10)


def test_mu_n_convergence_basics(cantor):
    grid = spectrum(cantor, 6, -64, 64, 0.25)
    assert mu_n_convergence(cantor, 6, 0, grid) == 0.0
    assert mu_n_convergence(cantor, 6, 5, [0.0]) == 0.0
    vals = [mu_n_convergence(cantor, n, 5, grid_points(-2.0 ** n, 2.0 ** n, 0.05)) for n in (6, 8, 10)]
    assert vals[0] > vals[1] > vals[2]
