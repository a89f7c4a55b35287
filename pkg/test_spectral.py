import itertools
import math

import numpy as np
import pytest

from core.errors import DomainError, UnsupportedRegimeError
from core.spectral import (
    SymbolParams,
    asymptotic_roots,
    cubic_coeffs,
    cubic_coeffs_general,
    cubic_residual,
    cubic_roots,
    damped_euler_decay,
    eigen_landscape,
    eigen_triple,
    incompressible_decay,
    medium_regime_constant,
    numeric_overdamping_argmax,
    overdamping_peak,
    overdamping_table,
    regime_classify,
    symbol_from_params,
    symbol_matrix,
)


@pytest.mark.parametrize(
    "args,expected",
    [
        ((1.0, 1.0, 1.0, 1.0), (2.0, 3.0, 1.0)),
        ((0.5, 1.0, 0.0, 2.0), (3.0, 6.0, 8.0)),
        ((0.01, 0.1, 0.6, 0.0), (110.0, 1000.0, 0.0)),
    ],
)
def test_cubic_coeffs(args, expected):
    assert cubic_coeffs(SymbolParams(*args)) == pytest.approx(expected)


def test_symbol_params_validation():
    with pytest.raises(DomainError):
        SymbolParams(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        SymbolParams(0.1, 1.0, 1.0, -1.0)


def test_general_coefficients_reduce_to_normalized_symbol():
    for eps, tau, g, xi in [(0.01, 0.1, 0.6, 3.0), (1.0, 1.0, 1.0, 1.0), (1e-3, 0.5, 2.0, 0.2)]:
        general = cubic_coeffs_general(eps, tau, (1.0, g, 1.0, 1.0), g, xi)
        assert general == pytest.approx(cubic_coeffs(SymbolParams(eps, tau, g, xi)), rel=1e-14)


def test_symbol_matrix_characteristic_polynomial():
    Fbar = (0.8, 0.09, 1.7, 1.6)
    for xi in (0.0, 0.5, 7.0):
        poly = np.poly(symbol_matrix(0.02, 0.3, Fbar, 0.6, xi))
        a2, a1, a0 = cubic_coeffs_general(0.02, 0.3, Fbar, 0.6, xi)
        np.testing.assert_allclose(poly, [1.0, a2, a1, a0], rtol=1e-10, atol=1e-10)


def test_roots_at_zero_frequency():
    eps, tau = 1e-3, 0.1
    e = eigen_triple(SymbolParams(eps, tau, 1.0, 0.0))
    assert e.lambda1.real == pytest.approx(-1.0 / eps, rel=1e-12)
    assert e.lambda2.real == pytest.approx(0.0, abs=1e-9)
    assert e.lambda3.real == pytest.approx(-1.0 / tau, rel=1e-12)
    assert all(abs(l.imag) == 0.0 for l in e.as_tuple())
    assert e.regime == "low"


def test_cube_roots_of_unity():
    e = cubic_roots(0.0, 0.0, -1.0)
    assert e.lambda1 == pytest.approx(1.0)
    assert e.lambda2 == pytest.approx(complex(-0.5, math.sqrt(3) / 2))
    assert e.lambda3 == pytest.approx(complex(-0.5, -math.sqrt(3) / 2))


def test_triple_root():
    e = cubic_roots(3.0, 3.0, 1.0)
    for lam in e.as_tuple():
        assert lam == pytest.approx(-1.0, abs=1e-6)


def _matched_error(roots, reference):
    scale = max(1.0, max(abs(z) for z in reference))
    return min(max(abs(r - z) for r, z in zip(perm, reference)) for perm in itertools.permutations(roots)) / scale


def test_cardano_matches_companion_oracle():
    rng = np.random.default_rng(12345)
    worst_match, worst_residual = 0.0, 0.0
    for _ in range(10_000):
        a2, a1, a0 = rng.uniform(-10.0, 10.0, size=3)
        roots = cubic_roots(a2, a1, a0).as_tuple()
        companion = np.array([[-a2, -a1, -a0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        reference = np.linalg.eigvals(companion)
        worst_match = max(worst_match, _matched_error(roots, reference))
        worst_residual = max(worst_residual, max(cubic_residual(r, a2, a1, a0) for r in roots))
    assert worst_match < 1e-8
    assert worst_residual < 1e-9


def test_conjugate_pair_layout():
    e = cubic_roots(*cubic_coeffs(SymbolParams(1e-3, 0.1, 1.0, 1e5)))
    assert e.lambda1.imag == 0.0
    assert e.lambda2.imag > 0.0
    assert e.lambda3 == e.lambda2.conjugate()


@pytest.mark.parametrize(
    "eps,tau,xi,regime",
    [
        (1e-4, 1e-1, 1.0, "low"),
        (1e-4, 1e-1, 1e5, "high"),
        (1e-4, 1e-1, 300.0, "medium"),
        (1e-4, 1e-1, 30.0, "boundary"),
        (1e-2, 1e-1, 200.0, "boundary"),
        (1e-3, 1e-1, 0.0, "low"),
    ],
)
def test_regime_classify(eps, tau, xi, regime):
    assert regime_classify(SymbolParams(eps, tau, 1.0, xi), 0.1) == regime


def test_regime_classify_requires_ordering():
    with pytest.raises(DomainError):
        regime_classify(SymbolParams(0.5, 0.1, 1.0, 1.0))


def test_low_frequency_asymptote_converges():
    eps, tau = 1e-3, 1e-1
    errors = []
    for tx in (0.1, 0.05, 0.02, 0.01):
        p = SymbolParams(eps, tau, 1.0, tx / tau)
        exact = eigen_triple(p).lambda2
        predicted = asymptotic_roots(p, "low").lambda2
        errors.append(abs(exact - predicted) / abs(exact))
    assert errors[-1] < 0.05
    assert all(b < a for a, b in zip(errors, errors[1:]))
    p = SymbolParams(eps, tau, 1.0, 0.1)
    assert asymptotic_roots(p, "low").lambda2.real == pytest.approx(-1e-3)


def test_high_frequency_asymptote():
    eps, tau, g = 1e-3, 1e-1, 1.0
    p = SymbolParams(eps, tau, g, 1e6)
    exact = eigen_triple(p)
    predicted = asymptotic_roots(p, "high")
    assert exact.regime == "high"
    assert exact.lambda1.real == pytest.approx(predicted.lambda1.real, rel=1e-2)
    assert exact.lambda2.real == pytest.approx(predicted.lambda2.real, rel=1e-2)
    assert exact.lambda2.imag == pytest.approx(predicted.lambda2.imag, rel=1e-6)


def test_high_frequency_without_gap():
    p = SymbolParams(1e-3, 0.25, 0.0, 1e6)
    predicted = asymptotic_roots(p, "high")
    assert predicted.lambda2 == pytest.approx(complex(-2.0, 1e6))


def test_medium_regime_only_bounds():
    p = SymbolParams(1e-4, 1e-1, 1.0, 300.0)
    with pytest.raises(UnsupportedRegimeError):
        asymptotic_roots(p, "medium")
    bound = asymptotic_roots(p, "medium", point_prediction=False)
    assert bound.re_bound == pytest.approx(-10.0)
    assert math.isnan(bound.lambda1.real)
    with pytest.raises(UnsupportedRegimeError):
        asymptotic_roots(p, "boundary")


def test_incompressible_decay():
    assert incompressible_decay(1.0) == 1.0
    assert incompressible_decay(0.25) == 4.0
    assert incompressible_decay(0.1) == pytest.approx(10.0)
    with pytest.raises(DomainError):
        incompressible_decay(0.0)


def test_damped_euler_branches():
    assert damped_euler_decay(1.0, 1.0) == pytest.approx(0.5)
    tau, xi = 0.01, 1.0
    assert damped_euler_decay(tau, xi) == pytest.approx(tau * xi * xi, rel=1e-3)
    crit = damped_euler_decay(0.5, 1.0)
    assert crit == 1.0
    assert damped_euler_decay(0.5 + 1e-9, 1.0) == pytest.approx(crit, rel=1e-6)
    assert damped_euler_decay(0.5 - 1e-9, 1.0) == pytest.approx(crit, rel=1e-4)
    with pytest.raises(DomainError):
        damped_euler_decay(1.0, 0.0)


def test_overdamping_peak_on_grid():
    argmax, rate, frictions = numeric_overdamping_argmax(1.0, n=1000)
    cell = math.log(frictions[1] / frictions[0])
    assert abs(math.log(argmax / 2.0)) <= cell
    assert overdamping_peak(1.0) == (2.0, 1.0)
    assert damped_euler_decay(0.5, 1.0) == pytest.approx(1.0, abs=1e-10)
    assert rate <= 1.0 + 1e-12


def test_overdamping_table_flags_peak():
    table = overdamping_table(1.0, np.logspace(-2, 2, 101))
    peak = table[table["peak"]]
    assert len(peak) == 1
    assert float(peak["friction"].iloc[0]) == pytest.approx(2.0)
    assert float(peak["decay_rate"].iloc[0]) == pytest.approx(1.0, abs=1e-12)
    assert table["friction"].is_monotonic_increasing
    assert list(table.columns) == ["friction", "decay_rate", "peak"]


def test_stability_scan():
    eps = np.logspace(-4, 0, 30)
    taus = np.logspace(-4, 0, 30)
    xis = np.logspace(-2, 3, 25)
    landscape = eigen_landscape(eps, taus, xis, gamma_gap=1.0)
    assert len(landscape) >= 10_000
    assert (landscape["epsilon"] <= landscape["tau"]).all()
    assert landscape["max_re"].max() <= 1e-12
    assert set(landscape["regime"]) <= {"low", "medium", "high", "boundary"}
    c = medium_regime_constant(landscape)
    assert c > 0


def test_medium_constant_without_rows():
    landscape = eigen_landscape([0.1], [0.1], [0.01])
    assert math.isnan(medium_regime_constant(landscape))


def test_symbol_from_params(params):
    e = symbol_from_params(params, 2.0)
    a2, a1, a0 = cubic_coeffs_general(params.epsilon, params.tau, params.Fbar, params.gamma_gap, 2.0)
    for lam in e.as_tuple():
        assert cubic_residual(lam, a2, a1, a0) < 1e-9
        assert lam.real < 0
