import numpy as np
import pytest

from core.errors import DomainError, ParameterError, PreconditionError, ResolutionError, SamplingError
from core.lp import (
    BesovSpec,
    Grid,
    J_tau,
    SpectralField,
    bernstein_check,
    besov_norm,
    block,
    block_norms,
    build_partition,
    chemin_lerner_norm,
    chi,
    lf_hf_split,
    phi,
    property_suite,
    random_band_field,
)


@pytest.mark.parametrize(
    "tau,k,expected",
    [(0.125, -2, 1), (1.0, 0, 0), (0.5, 0, 1), (0.1, -2, 2), (0.01, 0, 7), (0.25, 3, 5)],
)
def test_threshold_table(tau, k, expected):
    assert J_tau(tau, k) == expected


@pytest.mark.parametrize("tau", [0.0, -0.5, 1.5])
def test_threshold_domain(tau):
    with pytest.raises(DomainError):
        J_tau(tau, -2)


def test_partition_needs_resolution():
    with pytest.raises(ResolutionError):
        build_partition(Grid(1, 4))


def test_grid_validation():
    with pytest.raises(ParameterError):
        Grid(3, 16)
    with pytest.raises(ParameterError):
        Grid(1, 16).curl(np.zeros((1, 16)))


def test_spectral_derivatives():
    grid = Grid(1, 32)
    x = grid.x[0]
    np.testing.assert_allclose(grid.grad(np.sin(3 * x))[0], 3 * np.cos(3 * x), atol=1e-12)
    np.testing.assert_allclose(grid.laplacian(np.cos(2 * x)), -4 * np.cos(2 * x), atol=1e-12)
    grid2 = Grid(2, 16)
    X, Y = grid2.x
    v = np.array([np.sin(Y), np.zeros(grid2.shape)])
    np.testing.assert_allclose(grid2.curl(v), -np.cos(Y), atol=1e-12)
    np.testing.assert_allclose(grid2.div(np.array([np.sin(X), np.cos(Y)])), np.cos(X) - np.sin(Y), atol=1e-12)


def test_norms_parseval(grid):
    rng = np.random.default_rng(4)
    f = random_band_field(grid, rng, (1, 10), 1.0)
    assert grid.l2(f) == pytest.approx(grid.l2_hat(grid.fft(f)), rel=1e-12)
    assert grid.l2(np.ones(grid.shape)) == pytest.approx(np.sqrt(2 * np.pi))


def test_spectral_field_arithmetic(grid):
    x = grid.x[0]
    a = SpectralField.from_phys(grid, np.sin(x) + 2.0)
    b = SpectralField.from_phys(grid, np.cos(x))
    np.testing.assert_allclose((a + b).phys, np.sin(x) + np.cos(x) + 2.0, atol=1e-14)
    np.testing.assert_allclose((2.0 * a - b).phys, 2 * np.sin(x) + 4.0 - np.cos(x), atol=1e-14)
    assert a.mean() == pytest.approx(2.0)
    np.testing.assert_allclose(a.mean_free().phys, np.sin(x), atol=1e-14)
    with pytest.raises(ParameterError):
        SpectralField(grid)


def test_cutoff_profile():
    r = np.linspace(0, 3, 301)
    c = chi(r)
    assert np.all(c[r <= 0.75] == 1.0)
    assert np.all(c[r >= 4.0 / 3.0] == 0.0)
    assert np.all(np.diff(c) <= 0.0)
    p = phi(r)
    assert np.all(p[r <= 0.75] == 0.0)
    assert np.all(p[r >= 8.0 / 3.0] == 0.0)
    assert np.all(p >= 0.0)


def test_partition_is_read_only(grid):
    part = build_partition(grid)
    with pytest.raises(ValueError):
        part.phi_profile[0, 0] = 1.0
    np.testing.assert_array_equal(part.weight(part.j_max + 5), 0.0)


def test_block_outside_range_is_zero(grid):
    part = build_partition(grid)
    u = np.sin(grid.x[0])
    assert np.max(np.abs(block(u, part.j_max + 3, part).phys)) == 0.0
    assert np.max(np.abs(block(u, part.j_min - 2, part).phys)) == 0.0


def test_besov_ignores_mean(grid):
    part = build_partition(grid)
    assert besov_norm(3.0 * np.ones(grid.shape), BesovSpec(s=1.0), part) == pytest.approx(0.0, abs=1e-12)
    u = np.sin(2 * grid.x[0])
    assert besov_norm(u + 5.0, BesovSpec(s=0.5), part) == pytest.approx(besov_norm(u, BesovSpec(s=0.5), part), rel=1e-12)


def test_besov_split_bounds():
    low = BesovSpec(split="low", tau=0.125, k=-2)
    high = BesovSpec(split="high", tau=0.125, k=-2)
    assert low.j_bounds() == (None, 1)
    assert high.j_bounds() == (0, None)
    strict = BesovSpec(split="high", tau=0.125, k=-2, overlap=False)
    assert strict.j_bounds() == (1, None)
    with pytest.raises(ParameterError):
        BesovSpec(split="middle")


def test_split_additivity(grid):
    part = build_partition(grid)
    rng = np.random.default_rng(1)
    u = random_band_field(grid, rng, (1, 20), 1.0) + 0.7
    low, high = lf_hf_split(u, 0.125, -2, part)
    np.testing.assert_allclose(low.phys + high.phys, u - u.mean(), atol=1e-13)


def test_bernstein_on_single_mode(grid):
    part = build_partition(grid)
    report = bernstein_check(np.cos(grid.x[0]), 0, part)
    assert report.ratio == pytest.approx(1.0)
    assert report.within
    with pytest.raises(PreconditionError):
        bernstein_check(np.cos(10 * grid.x[0]), 0, part)
    with pytest.raises(PreconditionError):
        bernstein_check(np.zeros(grid.shape), 0, part)


def test_block_norms_sum_components(grid):
    part = build_partition(grid)
    x = grid.x[0]
    vec = np.array([np.sin(x), np.cos(2 * x)])
    combined = block_norms(vec, part)
    separate = np.sqrt(block_norms(np.sin(x), part) ** 2 + block_norms(np.cos(2 * x), part) ** 2)
    np.testing.assert_allclose(combined, separate, rtol=1e-12)


def test_chemin_lerner_static_field(grid):
    part = build_partition(grid)
    u = np.sin(3 * grid.x[0])
    times = [0.0, 0.5, 1.0, 2.0]
    samples = [u] * len(times)
    base = besov_norm(u, BesovSpec(s=0.5), part)
    assert chemin_lerner_norm(times, samples, 0.5, "inf", part) == pytest.approx(base)
    assert chemin_lerner_norm(times, samples, 0.5, 1, part) == pytest.approx(2.0 * base)
    assert chemin_lerner_norm(times, samples, 0.5, 2, part) == pytest.approx(np.sqrt(2.0) * base)


def test_chemin_lerner_sampling_errors(grid):
    part = build_partition(grid)
    u = np.sin(grid.x[0])
    with pytest.raises(SamplingError):
        chemin_lerner_norm([0.0], [u], 0.0, 1, part)
    with pytest.raises(SamplingError):
        chemin_lerner_norm([0.0, 1.0], [u], 0.0, 2, part)
    with pytest.raises(ParameterError):
        chemin_lerner_norm([0.0, 1.0], [u, u], 0.0, 3, part)
    assert chemin_lerner_norm([0.0], [u], 0.0, np.inf, part) > 0


@pytest.mark.parametrize("d,N", [(1, 64), (1, 8), (2, 32)])
def test_property_suite_passes(d, N):
    results = property_suite(Grid(d, N), tau=0.125, k=-2, n_fields=100, seed=2)
    failed = [(name, detail) for name, passed, detail in results if not passed]
    assert failed == []
    names = [r[0] for r in results]
    assert "Bernstein sandwich" in names
    assert "partition of unity" in names
