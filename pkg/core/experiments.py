"""
Sweeps and quantitative checks of the relaxation limits.

Runs fan out to a process pool through asyncio; results are reduced over a
map keyed by run name so the order in which workers finish never matters.
"""

import asyncio
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

import config
from core.errors import DomainError, LabError, ParameterError, RangeError, ShapeError, SweepError
from core.lp import BesovSpec, Grid, besov_norm, build_partition
from core.models import (
    Params,
    PMState,
    aux_unknowns,
    darcy_velocity,
    diffusive_rescale,
    mixture_closure,
    phase_pressures,
    resample,
)
from core.solver import RunConfig, Trajectory, integrate

logger = logging.getLogger(__name__)

COMPONENTS = ("alpha", "rho_plus", "rho_minus", "u")


# --- comparisons ------------------------------------------------------------


@dataclass
class ErrorSeries:
    times: np.ndarray
    table: pd.DataFrame

    def sup(self, column: str = "total") -> float:
        return float(self.table[column].max())

    def l1(self, column: str = "total") -> float:
        if len(self.times) < 2:
            return 0.0
        return float(trapezoid(self.table[column].to_numpy(), self.times))


def _velocity(state, params: Params, grid: Grid) -> np.ndarray:
    if isinstance(state, PMState):
        return darcy_velocity(state, params, grid)
    return state.u


def _norm(f: np.ndarray, grid: Grid, norm, part) -> float:
    if isinstance(norm, BesovSpec):
        return besov_norm(f, norm, part)
    return grid.l2(f)


def compare_trajectories(
    a: Trajectory,
    b: Trajectory,
    norm: Union[str, BesovSpec] = "l2",
    rescale: str = "identity",
    tau: Optional[float] = None,
    split_spec: bool = False,
    k: int = config.THRESHOLD_OFFSET,
    overlap: bool = config.OVERLAP_SPLIT,
) -> ErrorSeries:
    """Differences of like unknowns at b's sample times, after mapping a onto b's time scale."""
    if a.grid != b.grid:
        raise ShapeError(f"incompatible grids {a.grid} and {b.grid}")
    if rescale == "diffusive":
        if tau is None:
            raise ParameterError("diffusive comparison needs tau")
        if a.time_scale != "s":
            a = diffusive_rescale(a, tau, "forward")
    elif rescale != "identity":
        raise ParameterError(f"unknown rescale rule '{rescale}'")

    grid = b.grid
    lo, hi = a.times[0], a.times[-1]
    span = max(hi - lo, 1.0)
    keep = (b.times >= lo - 1e-10 * span) & (b.times <= hi + 1e-10 * span)
    if not keep.any():
        raise RangeError("trajectories share no time span")
    times = b.times[keep]
    b_states = [s for s, kept in zip(b.states, keep) if kept]
    a = resample(a, times)

    part = build_partition(grid) if (isinstance(norm, BesovSpec) or split_spec) else None
    d = grid.d
    low = BesovSpec(s=d / 2.0 - 1.0, split="low", tau=b.params.tau, k=k, overlap=overlap)
    high = BesovSpec(s=d / 2.0 - 1.0, split="high", tau=b.params.tau, k=k, overlap=overlap)

    rows = []
    for t, sa, sb in zip(times, a.states, b_states):
        fa, fb = sa.fields(), sb.fields()
        diffs = {
            "alpha": fa["alpha_plus"] - fb["alpha_plus"],
            "rho_plus": fa["rho_plus"] - fb["rho_plus"],
            "rho_minus": fa["rho_minus"] - fb["rho_minus"],
            "u": _velocity(sa, a.params, grid) - _velocity(sb, b.params, grid),
        }
        row = {"t": t}
        for name, diff in diffs.items():
            row[name] = _norm(diff, grid, norm, part)
        row["total"] = sum(row[c] for c in COMPONENTS)
        if split_spec:
            row["besov_low"] = sum(besov_norm(diffs[c], low, part) for c in COMPONENTS)
            row["besov_high"] = sum(besov_norm(diffs[c], high, part) for c in COMPONENTS)
        rows.append(row)
    return ErrorSeries(times=np.asarray(times), table=pd.DataFrame(rows))


# --- rate fits --------------------------------------------------------------


@dataclass
class RateFit:
    pairs: List[Tuple[float, float]]
    slope: float
    intercept: float
    r_squared: float
    excluded: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "excluded": list(self.excluded),
        }


def fit_rate(pairs: Sequence[Tuple[float, float]]) -> RateFit:
    """Least squares line through (log parameter, log error)."""
    pairs = [(float(h), float(e)) for h, e in pairs]
    if len(pairs) < 3:
        raise DomainError(f"rate fit needs at least 3 pairs, got {len(pairs)}")
    h = np.array([p[0] for p in pairs])
    e = np.array([p[1] for p in pairs])
    if np.any(h <= 0) or np.any(e <= 0):
        raise DomainError("rate fit needs strictly positive parameters and errors")
    x, y = np.log(h), np.log(e)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-300:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RateFit(pairs=pairs, slope=float(slope), intercept=float(intercept), r_squared=r2)


def fit_sweep(pairs: Sequence[Tuple[float, float]], floor: float = config.FIT_R2_FLOOR) -> RateFit:
    """fit_rate, dropping the largest parameter once when the fit is poor."""
    fit = fit_rate(pairs)
    if fit.r_squared < floor and len(pairs) >= 4:
        largest = max(p[0] for p in pairs)
        trimmed = [p for p in pairs if p[0] != largest]
        refit = fit_rate(trimmed)
        refit.excluded = [largest]
        logger.info("Fit r2=%.4f below %.2f, excluded parameter %.4g (new slope %.4f)", fit.r_squared, floor, largest, refit.slope)
        return refit
    return fit


# --- sweeps -----------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    base: RunConfig
    vary: str
    values: Tuple[float, ...]
    couple: Optional[str] = None
    fraction: float = 0.1
    s_end: float = 0.5
    gap_scaling: str = "sqrt"
    synthetic: Optional[Tuple[float, float]] = None
    k: int = config.THRESHOLD_OFFSET
    overlap: bool = config.OVERLAP_SPLIT

    def __post_init__(self):
        if self.vary not in ("epsilon", "tau"):
            raise ParameterError(f"sweeps vary epsilon or tau, not '{self.vary}'")
        if self.couple not in (None, "equal", "fraction"):
            raise ParameterError(f"unknown coupling rule '{self.couple}'")
        if self.gap_scaling not in ("sqrt", "zero"):
            raise ParameterError(f"unknown gap scaling '{self.gap_scaling}'")
        values = tuple(float(v) for v in self.values)
        if any(v <= 0 for v in values):
            raise ParameterError("sweep values must be positive")
        if list(values) != sorted(values, reverse=True):
            raise ParameterError("sweep values must be sorted decreasing")
        for eps, tau in self.pairs():
            if eps > tau:
                raise ParameterError(f"sweep pair epsilon={eps} > tau={tau}")

    def pairs(self) -> List[Tuple[float, float]]:
        """(epsilon, tau) for every sweep value."""
        p = self.base.params
        out = []
        for v in self.values:
            if self.vary == "epsilon":
                out.append((v, p.tau))
                continue
            if self.couple == "equal":
                out.append((v, v))
            elif self.couple == "fraction":
                out.append((self.fraction * v, v))
            else:
                out.append((min(p.epsilon, v), v))
        return out


@dataclass
class SweepReport:
    kind: str
    table: pd.DataFrame
    fit: Optional[RateFit]
    extra_fits: Dict[str, RateFit] = field(default_factory=dict)
    checks: Dict[str, Any] = field(default_factory=dict)
    partial: bool = False
    failed: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "partial": self.partial,
            "failed": list(self.failed),
            "table": self.table.to_dict(orient="records"),
            "fit": None if self.fit is None else self.fit.to_dict(),
            "extra_fits": {k: v.to_dict() for k, v in self.extra_fits.items()},
            "checks": dict(self.checks),
        }


@dataclass(frozen=True)
class Job:
    cfg: RunConfig
    rescale_tau: Optional[float] = None


def run_job(job: Job) -> Trajectory:
    traj = integrate(job.cfg)
    if job.rescale_tau is not None and traj.time_scale == "t":
        traj = diffusive_rescale(traj, job.rescale_tau, "forward")
    return traj


async def _fan_out(jobs: Dict[str, Job], workers: int) -> Dict[str, Any]:
    loop = asyncio.get_running_loop()
    keys = sorted(jobs)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, run_job, jobs[k]) for k in keys]
        results = await asyncio.gather(*futures, return_exceptions=True)
    return dict(zip(keys, results))


def run_jobs(jobs: Dict[str, Job], workers: int = 1) -> Tuple[Dict[str, Trajectory], Dict[str, str]]:
    """Execute independent runs; returns (finished trajectories, failure messages) keyed by name."""
    if workers <= 1:
        raw = {}
        for key in sorted(jobs):
            try:
                raw[key] = run_job(jobs[key])
            except LabError as e:
                raw[key] = e
    else:
        raw = asyncio.run(_fan_out(jobs, workers))

    done, failed = {}, {}
    for key, result in raw.items():
        if isinstance(result, BaseException):
            logger.error("Run %s failed: %s", key, result)
            failed[key] = str(result)
        else:
            done[key] = result
    return done, failed


def _with_physics(cfg: RunConfig, eps: float, tau: float, **changes) -> RunConfig:
    return replace(cfg, params=replace(cfg.params, epsilon=eps, tau=tau), **changes)


def _synthetic_report(kind: str, spec: SweepSpec) -> SweepReport:
    constant, exponent = spec.synthetic
    pairs = [(v, constant * v ** exponent) for v in spec.values]
    table = pd.DataFrame({"parameter": [p[0] for p in pairs], "error": [p[1] for p in pairs]})
    return SweepReport(kind=kind, table=table, fit=fit_rate(pairs), checks={"synthetic": True})


def _finish(kind: str, table: pd.DataFrame, column: str, failed: Dict[str, str], extra: Dict[str, str], checks: dict) -> SweepReport:
    ok = table.dropna(subset=[column])
    fit = fit_sweep(list(zip(ok["parameter"], ok[column]))) if len(ok) >= 3 else None
    extra_fits = {}
    for name, col in extra.items():
        sub = table.dropna(subset=[col])
        if len(sub) >= 3 and (sub[col] > 0).all():
            extra_fits[name] = fit_rate(list(zip(sub["parameter"], sub[col])))
    report = SweepReport(kind=kind, table=table, fit=fit, extra_fits=extra_fits, checks=checks, partial=bool(failed), failed=sorted(failed))
    if failed:
        raise SweepError(f"{len(failed)} run(s) failed in {kind} sweep", report=report, failed=sorted(failed))
    return report


def pressure_relaxation_sweep(spec: SweepSpec, workers: int = 1) -> SweepReport:
    """BN against K from the same data for every (epsilon, tau) pair."""
    if spec.synthetic:
        return _synthetic_report("pressure", spec)

    base = spec.base
    n_samples = base.n_samples or max(1, base.sample_every)
    jobs: Dict[str, Job] = {}
    for eps, tau in spec.pairs():
        gap = base.ic.amplitude * math.sqrt(eps * tau) if spec.gap_scaling == "sqrt" else 0.0
        ic = replace(base.ic, well_prepared=True, gap_amplitude=gap)
        jobs[f"BN:eps={eps:.6g}:tau={tau:.6g}"] = Job(_with_physics(base, eps, tau, system="BN", ic=ic, n_samples=n_samples))
        jobs[f"K:tau={tau:.6g}"] = Job(_with_physics(base, eps, tau, system="K", n_samples=n_samples))

    done, failed = run_jobs(jobs, workers)
    rows = []
    for v, (eps, tau) in zip(spec.values, spec.pairs()):
        bn, kap = done.get(f"BN:eps={eps:.6g}:tau={tau:.6g}"), done.get(f"K:tau={tau:.6g}")
        row = {"parameter": v, "epsilon": eps, "tau": tau}
        if bn is None or kap is None:
            row.update(sup_l2=np.nan, sup_besov_low=np.nan, sup_besov_high=np.nan, gap_ratio=np.nan)
        else:
            series = compare_trajectories(bn, kap, "l2", split_spec=True, k=spec.k, overlap=spec.overlap)
            row.update(
                sup_l2=series.sup("total"),
                sup_besov_low=series.sup("besov_low"),
                sup_besov_high=series.sup("besov_high"),
                gap_ratio=pressure_gap_decay(bn, bn.params).ratio,
            )
        rows.append(row)
    table = pd.DataFrame(rows)
    return _finish("pressure", table, "sup_l2", failed, {"besov_low": "sup_besov_low"}, {"gap_scaling": spec.gap_scaling})


def _limit_sweep(kind: str, spec: SweepSpec, system: str, workers: int) -> SweepReport:
    base = spec.base
    n_samples = base.n_samples or 50
    jobs: Dict[str, Job] = {}
    pairs = spec.pairs()
    for eps, tau in pairs:
        cfg = _with_physics(base, eps, tau, system=system, t_end=spec.s_end / tau, n_samples=n_samples)
        jobs[f"{system}:eps={eps:.6g}:tau={tau:.6g}"] = Job(cfg, rescale_tau=tau)
    eps0, tau0 = pairs[0]
    jobs["PM"] = Job(_with_physics(base, eps0, tau0, system="PM", t_end=spec.s_end, n_samples=n_samples))

    done, failed = run_jobs(jobs, workers)
    pm = done.get("PM")
    rows = []
    for v, (eps, tau) in zip(spec.values, pairs):
        run = done.get(f"{system}:eps={eps:.6g}:tau={tau:.6g}")
        row = {"parameter": v, "epsilon": eps, "tau": tau}
        if run is None or pm is None:
            row.update(sup_varrho=np.nan, velocity_l1=np.nan, sup_alpha=np.nan)
        else:
            series = compare_trajectories(run, pm, "l2")
            varrho = series.table["rho_plus"] + series.table["rho_minus"]
            row.update(sup_varrho=float(varrho.max()), velocity_l1=series.l1("u"), sup_alpha=series.sup("alpha"))
        rows.append(row)
    table = pd.DataFrame(rows)
    velocity = table["velocity_l1"].dropna().to_numpy()
    checks = {"velocity_monotone": bool(len(velocity) > 1 and np.all(np.diff(velocity) < 0))}
    return _finish(kind, table, "sup_varrho", failed, {"velocity": "velocity_l1"}, checks)


def time_relaxation_sweep(spec: SweepSpec, workers: int = 1) -> SweepReport:
    """Kapila runs in diffusive variables against the porous-media run."""
    if spec.synthetic:
        return _synthetic_report("time", spec)
    return _limit_sweep("time", spec, "K", workers)


def combined_relaxation_sweep(spec: SweepSpec, workers: int = 1) -> SweepReport:
    """BN in diffusive variables against the porous-media run (both limits at once)."""
    if spec.synthetic:
        return _synthetic_report("combined", spec)
    return _limit_sweep("combined", spec, "BN", workers)


# --- ledgers and diagnostics ------------------------------------------------


def _time_l1(times, values) -> float:
    return float(trapezoid(values, times)) if len(times) > 1 else 0.0


def _time_l2(times, values) -> float:
    return float(np.sqrt(trapezoid(np.asarray(values) ** 2, times))) if len(times) > 1 else 0.0


def uniform_bounds_ledger(traj: Trajectory, params: Optional[Params] = None) -> Dict[str, float]:
    """Discrete left-hand sides of the uniform estimate, one number per group."""
    params = traj.params if params is None else params
    grid = traj.grid
    part = build_partition(grid)
    d = grid.d
    s_low, s_mid, s_high = d / 2.0 - 1.0, d / 2.0, d / 2.0 + 1.0

    def both(f):
        return besov_norm(f, BesovSpec(s=s_low), part) + besov_norm(f, BesovSpec(s=s_high), part)

    sup_pert, gap, pressure_hi, pressure_mid, vel_hi, vel_mid, flux = [], [], [], [], [], [], []
    for state in traj.states:
        rho, P = mixture_closure(state, params)
        P_plus, P_minus = phase_pressures(state, params)
        sup_pert.append(
            both(state.alpha_plus - params.alpha_bar_plus)
            + both(state.rho_plus - params.rho_bar_plus)
            + both(state.rho_minus - params.rho_bar_minus)
            + both(state.u)
        )
        gap.append(besov_norm(P_plus - P_minus, BesovSpec(s=s_low), part))
        pressure_hi.append(besov_norm(P - params.P_bar, BesovSpec(s=s_high), part))
        pressure_mid.append(besov_norm(P - params.P_bar, BesovSpec(s=s_mid), part))
        vel_hi.append(besov_norm(state.u, BesovSpec(s=s_high), part))
        vel_mid.append(besov_norm(state.u, BesovSpec(s=s_mid), part))
        flux.append(besov_norm(rho * state.u / params.tau + grid.grad(P), BesovSpec(s=s_low), part))

    t = traj.times
    return {
        "sup_perturbation": float(max(sup_pert)),
        "gap_l1_over_eps": _time_l1(t, gap) / params.epsilon,
        "gap_l2_over_sqrt_eps": _time_l2(t, gap) / math.sqrt(params.epsilon),
        "pressure_l1_tau": params.tau * _time_l1(t, pressure_hi),
        "pressure_l2_sqrt_tau": math.sqrt(params.tau) * _time_l2(t, pressure_mid),
        "velocity_l1": _time_l1(t, vel_hi),
        "velocity_l2_over_sqrt_tau": _time_l2(t, vel_mid) / math.sqrt(params.tau),
        "effective_flux_l1": _time_l1(t, flux),
    }


@dataclass
class GapDecayReport:
    sup_gap: float
    ratio: float
    fitted_rate: float
    predicted_rate: float

    @property
    def rate_error(self) -> float:
        if not np.isfinite(self.fitted_rate):
            return math.nan
        return abs(self.fitted_rate - self.predicted_rate) / self.predicted_rate


def fit_decay_rate(times: Sequence[float], values: Sequence[float]) -> float:
    """Exponential rate from a least-squares line through log(values)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = values > 0
    if ok.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(times[ok], np.log(values[ok]), 1)
    return float(-slope)


def frozen_gap_series(c_star: float, epsilon: float, g0: float, times: Sequence[float]) -> np.ndarray:
    """Solution of dg/dt = -(c_star/epsilon) g."""
    return g0 * np.exp(-c_star / epsilon * np.asarray(times, dtype=float))


def pressure_gap_decay(traj: Trajectory, params: Optional[Params] = None, layer: Optional[float] = None) -> GapDecayReport:
    """Sup of the pressure gap over sqrt(eps*tau), and its decay rate over the initial layer."""
    params = traj.params if params is None else params
    grid = traj.grid
    gaps = []
    for state in traj.states:
        P_plus, P_minus = phase_pressures(state, params)
        gaps.append(grid.l2(P_plus - P_minus))
    gaps = np.array(gaps)
    predicted = params.c_star / params.epsilon
    layer = 3.0 / predicted if layer is None else layer
    window = traj.times <= layer
    if window.sum() < 3:
        window = np.arange(len(gaps)) < 3
    return GapDecayReport(
        sup_gap=float(gaps.max()),
        ratio=float(gaps.max() / math.sqrt(params.epsilon * params.tau)),
        fitted_rate=fit_decay_rate(traj.times[window], gaps[window]),
        predicted_rate=predicted,
    )


def _q_and_y(state, params: Params):
    if isinstance(state, PMState):
        Pi = state.pressure(params)
        return Pi, state.beta_plus * state.varrho_plus / state.density()
    Q, Y, _ = aux_unknowns(state, params)
    return Q, Y


@dataclass
class AuxReport:
    table: pd.DataFrame
    y_below_alpha: bool


def aux_diagnostics(a: Trajectory, b: Trajectory, params: Optional[Params] = None, rescale: str = "identity") -> AuxReport:
    """Norms of the mass-fraction, auxiliary-pressure and fraction differences over time."""
    params = a.params if params is None else params
    if rescale == "diffusive" and a.time_scale != "s":
        a = diffusive_rescale(a, params.tau, "forward")
    grid = b.grid
    span = max(a.times[-1] - a.times[0], 1.0)
    keep = (b.times >= a.times[0] - 1e-10 * span) & (b.times <= a.times[-1] + 1e-10 * span)
    if not keep.any():
        raise RangeError("trajectories share no time span")
    a = resample(a, b.times[keep])
    b_states = [s for s, kept in zip(b.states, keep) if kept]
    name = "dZ" if isinstance(b.states[0], PMState) else "dY"

    rows = []
    for t, sa, sb in zip(a.times, a.states, b_states):
        Qa, Ya = _q_and_y(sa, params)
        Qb, Yb = _q_and_y(sb, params)
        alpha_a = sa.fields()["alpha_plus"]
        alpha_b = sb.fields()["alpha_plus"]
        rows.append({"t": t, name: grid.l2(Ya - Yb), "dQ": grid.l2(Qa - Qb), "d_alpha": grid.l2(alpha_a - alpha_b)})
    table = pd.DataFrame(rows)
    y_below = bool(table[name].max() <= table["d_alpha"].max() + 1e-12)
    return AuxReport(table=table, y_below_alpha=y_below)


def vorticity_decay_rate(traj: Trajectory) -> float:
    """Fitted decay rate of the L2 norm of the vorticity (d=2 runs)."""
    grid = traj.grid
    values = [grid.l2(grid.curl(s.u)) for s in traj.states]
    return fit_decay_rate(traj.times, values)
