import math
import pickle

import numpy as np
import pandas as pd
import pytest

from core.errors import (
    BlowUpError,
    DomainError,
    InvalidConfigError,
    ParameterError,
    ReconstructionError,
    ShapeError,
    SweepError,
)
from core.experiments import (
    Job,
    SweepSpec,
    aux_diagnostics,
    combined_relaxation_sweep,
    compare_trajectories,
    fit_decay_rate,
    fit_rate,
    fit_sweep,
    frozen_gap_series,
    pressure_gap_decay,
    pressure_relaxation_sweep,
    run_jobs,
    time_relaxation_sweep,
    uniform_bounds_ledger,
    vorticity_decay_rate,
)
from core.lp import BesovSpec, Grid, random_band_field
from core.models import MixtureState, diffusive_rescale, equilibrium_state, mixture_closure
from core.solver import InitialCondition, RunConfig, Trajectory, integrate


@pytest.fixture
def base(make_params):
    return RunConfig("BN", make_params(epsilon=0.01, tau=0.1), Grid(1, 32), t_end=0.2)


@pytest.fixture
def short_run(make_params):
    params = make_params(epsilon=0.05, tau=0.5)
    return integrate(RunConfig("BN", params, Grid(1, 32), t_end=0.2, sample_every=2, ic=InitialCondition(seed=4)))


def test_fit_rate_exact_power_law():
    hs = [0.1, 0.05, 0.025, 0.0125]
    fit = fit_rate([(h, 5.0 * h ** 2) for h in hs])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(5.0), abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    scaled = fit_rate([(h, 50.0 * h ** 2) for h in hs])
    assert scaled.slope == pytest.approx(fit.slope, abs=1e-12)
    assert scaled.intercept == pytest.approx(fit.intercept + math.log(10.0), abs=1e-10)


def test_fit_rate_constant_errors():
    fit = fit_rate([(h, 0.3) for h in (1.0, 0.5, 0.25)])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == 1.0


def test_fit_rate_with_noise():
    rng = np.random.default_rng(0)
    hs = np.logspace(-3, -1, 8)
    fit = fit_rate([(h, h ** 1.5 * (1 + 0.01 * rng.standard_normal())) for h in hs])
    assert fit.slope == pytest.approx(1.5, abs=0.05)
    assert fit.r_squared > 0.99


def test_fit_rate_rejects_bad_input():
    with pytest.raises(DomainError):
        fit_rate([(1.0, 1.0), (0.5, 0.5)])
    with pytest.raises(DomainError):
        fit_rate([(1.0, 1.0), (0.5, 0.0), (0.25, 0.1)])


def test_fit_sweep_excludes_largest_parameter_once():
    hs = [1.0, 0.5, 0.25, 0.125, 0.0625]
    pairs = [(h, 50.0 if h == 1.0 else h) for h in hs]
    fit = fit_sweep(pairs)
    assert fit.excluded == [1.0]
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    clean = fit_sweep([(h, h) for h in hs])
    assert clean.excluded == []


def test_synthetic_sweeps(base):
    eps_spec = SweepSpec(base, "epsilon", (1e-2, 5e-3, 2.5e-3, 1.25e-3), synthetic=(3.0, 0.5))
    report = pressure_relaxation_sweep(eps_spec)
    assert report.fit.slope == pytest.approx(0.5, abs=1e-12)
    assert report.fit.r_squared == pytest.approx(1.0)
    assert report.checks["synthetic"] is True

    tau_spec = SweepSpec(base, "tau", (0.2, 0.1, 0.05, 0.025), couple="fraction", synthetic=(2.0, 1.0))
    assert time_relaxation_sweep(tau_spec).fit.slope == pytest.approx(1.0, abs=1e-12)
    assert combined_relaxation_sweep(tau_spec).kind == "combined"
    payload = report.to_dict()
    assert payload["kind"] == "pressure"
    assert len(payload["table"]) == 4


def test_sweep_spec_pairs(base):
    spec = SweepSpec(base, "tau", (0.2, 0.1, 0.05), couple="fraction")
    assert spec.pairs() == [pytest.approx((0.02, 0.2)), pytest.approx((0.01, 0.1)), pytest.approx((0.005, 0.05))]
    equal = SweepSpec(base, "tau", (0.2, 0.1, 0.05), couple="equal")
    assert equal.pairs()[1] == (0.1, 0.1)
    free = SweepSpec(base, "tau", (0.2, 0.005, 0.001))
    assert free.pairs() == [(0.01, 0.2), (0.005, 0.005), (0.001, 0.001)]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"vary": "gamma", "values": (0.1, 0.05, 0.01)},
        {"vary": "epsilon", "values": (0.01, 0.05, 0.001)},
        {"vary": "epsilon", "values": (0.5, 0.05, 0.01)},
        {"vary": "epsilon", "values": (0.05, 0.0)},
        {"vary": "tau", "values": (0.2, 0.1), "couple": "sum"},
        {"vary": "tau", "values": (0.2, 0.1), "gap_scaling": "linear"},
    ],
)
def test_sweep_spec_validation(base, kwargs):
    with pytest.raises(ParameterError):
        SweepSpec(base, **kwargs)


def test_self_comparison_is_zero(short_run):
    series = compare_trajectories(short_run, short_run, "l2", split_spec=True)
    assert series.sup("total") == 0.0
    assert series.sup("besov_low") == 0.0
    assert series.l1("u") == 0.0
    besov = compare_trajectories(short_run, short_run, BesovSpec(s=-0.5))
    assert besov.sup() == 0.0
    assert list(series.times) == list(short_run.times)


def test_comparison_errors(short_run, make_params):
    other = integrate(RunConfig("BN", make_params(epsilon=0.05, tau=0.5), Grid(1, 64), t_end=0.1))
    with pytest.raises(ShapeError):
        compare_trajectories(short_run, other)
    with pytest.raises(ParameterError):
        compare_trajectories(short_run, short_run, rescale="diffusive")
    with pytest.raises(ParameterError):
        compare_trajectories(short_run, short_run, rescale="acoustic")


def test_comparison_detects_a_difference(short_run, make_params):
    params = make_params(epsilon=0.05, tau=0.5)
    shifted = integrate(RunConfig("BN", params, Grid(1, 32), t_end=0.2, sample_every=2, ic=InitialCondition(seed=5)))
    series = compare_trajectories(short_run, shifted)
    assert series.sup() > 0
    assert (series.table["total"] >= series.table["u"]).all()


def _random_trajectory(params, grid, seed, times=(0.0, 0.5, 1.0), system="BN"):
    rng = np.random.default_rng(seed)
    eq = equilibrium_state(params, grid)
    states = [
        MixtureState(
            eq.alpha_plus + random_band_field(grid, rng, (1, 4), 1e-2),
            eq.rho_plus + random_band_field(grid, rng, (1, 4), 1e-2),
            eq.rho_minus + random_band_field(grid, rng, (1, 4), 1e-2),
            np.array([random_band_field(grid, rng, (1, 4), 1e-2)]),
        )
        for _ in times
    ]
    return Trajectory(system, np.asarray(times, dtype=float), states, None, params, grid)


def test_comparison_is_symmetric_and_obeys_triangle_inequality(params):
    grid = Grid(1, 32)
    a, b, c = (_random_trajectory(params, grid, seed) for seed in (11, 12, 13))
    ab = compare_trajectories(a, b).table
    ba = compare_trajectories(b, a).table
    ac = compare_trajectories(a, c).table
    bc = compare_trajectories(b, c).table
    columns = ["alpha", "rho_plus", "rho_minus", "u", "total"]
    np.testing.assert_allclose(ab[columns].to_numpy(), ba[columns].to_numpy(), rtol=0, atol=1e-12)
    assert (ab["total"] > 0).all()
    assert (ac[columns].to_numpy() <= ab[columns].to_numpy() + bc[columns].to_numpy() + 1e-12).all()


def test_diffusive_rescale_is_consistent_with_diffusive_runs(make_params):
    params = make_params(epsilon=0.05, tau=0.5)
    grid = Grid(1, 32)
    diffusive = integrate(RunConfig("KTAU", params, grid, t_end=0.2, n_samples=4))
    raw = integrate(RunConfig("K", params, grid, t_end=0.4, n_samples=4))
    assert raw.time_scale == "t"
    series = compare_trajectories(raw, diffusive, rescale="diffusive", tau=params.tau)
    assert len(series.times) == 5
    assert series.sup() == pytest.approx(0.0, abs=1e-12)
    manual = diffusive_rescale(raw, params.tau, "forward")
    np.testing.assert_allclose(manual.times, diffusive.times, rtol=0, atol=1e-15)


def test_frozen_gap_and_decay_fit():
    times = np.linspace(0.0, 0.1, 11)
    series = frozen_gap_series(1.7, 0.01, 2e-3, times)
    assert series[0] == 2e-3
    assert fit_decay_rate(times, series) == pytest.approx(170.0, rel=1e-10)
    assert math.isnan(fit_decay_rate([0.0, 1.0], [1.0, 0.0]))


def test_pressure_gap_decays_at_predicted_rate(params):
    grid = Grid(1, 32)
    ones = np.ones(grid.shape)
    state = MixtureState(
        params.alpha_bar_plus * ones,
        1.001 * params.rho_bar_plus * ones,
        params.rho_bar_minus * ones,
        np.zeros((1,) + grid.shape),
    )
    traj = integrate(RunConfig("BN", params, grid, t_end=0.02, dt=0.001, sample_every=1), state=state)
    report = pressure_gap_decay(traj)
    assert report.predicted_rate == pytest.approx(params.c_star / params.epsilon)
    assert report.rate_error < 0.02
    assert report.ratio == pytest.approx(report.sup_gap / math.sqrt(params.epsilon * params.tau))


def _gap_run(make_params, eps, gap_scale, tau=0.1):
    params = make_params(epsilon=eps, tau=tau)
    ic = InitialCondition(seed=2, amplitude=1e-3, well_prepared=True, gap_amplitude=gap_scale * math.sqrt(eps * tau))
    traj = integrate(RunConfig("BN", params, Grid(1, 32), t_end=0.02, dt=0.001, sample_every=1, ic=ic))
    return pressure_gap_decay(traj)


def test_pressure_gap_scales_with_sqrt_epsilon(make_params):
    coarse = _gap_run(make_params, 0.01, 0.01)
    fine = _gap_run(make_params, 0.005, 0.01)
    assert coarse.sup_gap / fine.sup_gap == pytest.approx(math.sqrt(2.0), rel=0.2)
    assert coarse.ratio == pytest.approx(fine.ratio, rel=0.2)


def test_pressure_gap_without_injection_stays_small(make_params):
    report = _gap_run(make_params, 0.01, 0.0)
    assert report.ratio < 0.05


def test_run_jobs_collects_failures(make_params):
    params = make_params(epsilon=0.05, tau=0.5)
    grid = Grid(1, 32)
    good = RunConfig("K", params, grid, t_end=0.05)
    bad = RunConfig("BN", params, grid, t_end=100.0, dt=10.0, ic=InitialCondition(amplitude=0.05))
    done, failed = run_jobs({"good": Job(good), "bad": Job(bad)})
    assert list(done) == ["good"]
    assert list(failed) == ["bad"]
    rescaled, _ = run_jobs({"good": Job(good, rescale_tau=0.5)})
    assert rescaled["good"].time_scale == "s"


@pytest.mark.parametrize(
    "error",
    [
        BlowUpError("non-finite BN tendency", 1.5),
        ReconstructionError("newton stalled", index=(3,)),
        InvalidConfigError("bad value", key="physics.tau"),
        SweepError("1 run(s) failed", report={"partial": True}, failed=["BN:eps=0.01"]),
    ],
)
def test_errors_survive_pickling(error):
    back = pickle.loads(pickle.dumps(error))
    assert type(back) is type(error)
    assert str(back) == str(error)
    assert back.__dict__ == error.__dict__


def test_parallel_run_jobs_isolates_blow_up(make_params):
    params = make_params(epsilon=0.05, tau=0.5)
    grid = Grid(1, 32)
    good = RunConfig("K", params, grid, t_end=0.05)
    bad = RunConfig("BN", params, grid, t_end=100.0, dt=10.0, ic=InitialCondition(amplitude=0.05))
    done, failed = run_jobs({"good": Job(good), "bad": Job(bad)}, workers=2)
    assert set(done) == {"good"}
    assert set(failed) == {"bad"}
    assert "t=" in failed["bad"]
    inline, _ = run_jobs({"good": Job(good)})
    np.testing.assert_array_equal(done["good"].final.alpha_plus, inline["good"].final.alpha_plus)


def test_parallel_sweep_is_reproducible(base):
    spec = SweepSpec(base, "epsilon", (0.01, 0.005, 0.0025))
    first = pressure_relaxation_sweep(spec, workers=2)
    second = pressure_relaxation_sweep(spec, workers=2)
    pd.testing.assert_frame_equal(first.table, second.table, check_exact=True)
    inline = pressure_relaxation_sweep(spec, workers=1)
    pd.testing.assert_frame_equal(first.table, inline.table, check_exact=True)


def test_failed_sweep_carries_partial_report(make_params):
    base = RunConfig("BN", make_params(epsilon=0.01, tau=0.1), Grid(1, 32), t_end=100.0, dt=10.0, ic=InitialCondition(amplitude=0.05))
    spec = SweepSpec(base, "epsilon", (0.01, 0.005, 0.0025))
    with pytest.raises(SweepError) as info:
        pressure_relaxation_sweep(spec)
    report = info.value.report
    assert report.partial
    assert len(report.table) == 3
    assert report.table["sup_l2"].isna().all()


def test_uniform_bounds_ledger(short_run):
    ledger = uniform_bounds_ledger(short_run)
    assert set(ledger) == {
        "sup_perturbation",
        "gap_l1_over_eps",
        "gap_l2_over_sqrt_eps",
        "pressure_l1_tau",
        "pressure_l2_sqrt_tau",
        "velocity_l1",
        "velocity_l2_over_sqrt_tau",
        "effective_flux_l1",
    }
    assert all(np.isfinite(v) and v >= 0 for v in ledger.values())
    assert ledger["sup_perturbation"] > 0


def test_uniform_bounds_ledger_vanishes_at_equilibrium(make_params):
    params = make_params(epsilon=0.01, tau=0.1)
    cfg = RunConfig("BN", params, Grid(1, 32), t_end=0.05, sample_every=2, ic=InitialCondition(amplitude=0.0))
    ledger = uniform_bounds_ledger(integrate(cfg))
    assert max(ledger.values()) <= 1e-10


def test_effective_flux_entry_does_not_grow_like_inverse_tau(make_params):
    entries = []
    for tau in (0.1, 0.05):
        cfg = RunConfig(
            "BN", make_params(epsilon=0.01, tau=tau), Grid(1, 32), t_end=0.5, n_samples=100, ic=InitialCondition(seed=3)
        )
        entries.append(uniform_bounds_ledger(integrate(cfg))["effective_flux_l1"])
    assert all(np.isfinite(e) and e > 0 for e in entries)
    assert entries[1] / entries[0] < 1.5


def _paired(params, grid, seed, equal_pressures=False):
    traj = _random_trajectory(params, grid, seed, times=(0.0, 1.0), system="K")
    if equal_pressures:
        for state in traj.states:
            _, P = mixture_closure(state, params)
            state.rho_plus = params.law_plus.density(P)
            state.rho_minus = params.law_minus.density(P)
    return traj


def test_aux_diagnostics_pressure_difference_without_gap(params):
    grid = Grid(1, 32)
    a, b = _paired(params, grid, 21, equal_pressures=True), _paired(params, grid, 22, equal_pressures=True)
    report = aux_diagnostics(a, b)
    for i, (sa, sb) in enumerate(zip(a.states, b.states)):
        _, Pa = mixture_closure(sa, params)
        _, Pb = mixture_closure(sb, params)
        assert report.table["dQ"].iloc[i] == pytest.approx(grid.l2(Pa - Pb), rel=1e-12)


def test_aux_diagnostics_mass_fraction_matches_scalar_loop(params):
    grid = Grid(1, 32)
    for seed in range(5):
        a, b = _paired(params, grid, 2 * seed), _paired(params, grid, 2 * seed + 1)
        report = aux_diagnostics(a, b)
        for i, (sa, sb) in enumerate(zip(a.states, b.states)):
            total = 0.0
            for n in range(grid.N):
                ya = sa.alpha_plus[n] * sa.rho_plus[n] / (sa.alpha_plus[n] * sa.rho_plus[n] + (1 - sa.alpha_plus[n]) * sa.rho_minus[n])
                yb = sb.alpha_plus[n] * sb.rho_plus[n] / (sb.alpha_plus[n] * sb.rho_plus[n] + (1 - sb.alpha_plus[n]) * sb.rho_minus[n])
                total += (ya - yb) ** 2
            expected = math.sqrt(2.0 * math.pi * total / grid.N)
            assert report.table["dY"].iloc[i] == pytest.approx(expected, rel=1e-12)


def test_aux_diagnostics_against_itself(short_run):
    report = aux_diagnostics(short_run, short_run)
    assert report.y_below_alpha
    assert report.table[["dY", "dQ", "d_alpha"]].abs().to_numpy().max() == 0.0


def test_vorticity_decays_at_friction_rate(make_params):
    params = make_params(epsilon=0.05, tau=0.5)
    cfg = RunConfig("K", params, Grid(2, 32), t_end=1.0, sample_every=2, ic=InitialCondition(seed=1, amplitude=1e-4))
    rate = vorticity_decay_rate(integrate(cfg))
    assert rate == pytest.approx(1.0 / params.tau, rel=1e-2)


@pytest.mark.slow
def test_uniform_bounds_do_not_grow_with_stiffness(make_params):
    ledgers = []
    for eps in (0.01, 0.001):
        cfg = RunConfig("BN", make_params(epsilon=eps, tau=0.1), Grid(1, 64), t_end=0.5, ic=InitialCondition(seed=3))
        ledgers.append(uniform_bounds_ledger(integrate(cfg)))
    for key in ("sup_perturbation", "pressure_l1_tau", "velocity_l1"):
        a, b = ledgers[0][key], ledgers[1][key]
        assert b <= 3.0 * a and a <= 3.0 * b


@pytest.mark.slow
def test_pressure_relaxation_rate(make_params):
    base = RunConfig(
        "BN", make_params(epsilon=0.01, tau=0.1), Grid(1, 256), t_end=1.0, n_samples=20, ic=InitialCondition(amplitude=1e-2)
    )
    report = pressure_relaxation_sweep(SweepSpec(base, "epsilon", (1e-2, 5e-3, 2.5e-3, 1.25e-3)), workers=4)
    assert 0.35 <= report.fit.slope <= 0.65
    assert report.fit.r_squared >= 0.97


@pytest.mark.slow
def test_time_relaxation_rate(make_params):
    base = RunConfig("K", make_params(epsilon=0.02, tau=0.2), Grid(1, 256), t_end=1.0, ic=InitialCondition(amplitude=1e-2))
    spec = SweepSpec(base, "tau", (0.2, 0.1, 0.05, 0.025), couple="fraction", s_end=0.5)
    report = time_relaxation_sweep(spec, workers=4)
    assert 0.75 <= report.fit.slope <= 1.25
    assert report.fit.r_squared >= 0.97
    assert report.checks["velocity_monotone"]
