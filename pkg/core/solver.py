"""
Pseudo-spectral integrators for the BN, K and PM systems on the periodic torus.

BN is advanced in conservative variables (alpha_plus, alpha_plus*rho_plus,
alpha_minus*rho_minus, rho*u) with a Strang splitting: exact stiff sub-flows
(friction and linearized pressure relaxation) on half steps around an
explicit SSP-RK2 transport step. K is advanced in (alpha_plus, Pi, u) with the
same splitting for friction. PM uses a Lawson integrating factor on the
linear diffusion of Pi.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import config
from core.errors import BlowUpError, DomainError, ParameterError, ResolutionError
from core.lp import Grid, random_band_field
from core.models import (
    MixtureState,
    Params,
    PMState,
    ReformState,
    darcy_velocity,
    diffusive_rescale,
    effective_flux,
    mixture_closure,
    phase_pressures,
    reformulate,
    unreformulate,
)

logger = logging.getLogger(__name__)

SYSTEMS = ("BN", "K", "KTAU", "PM")


@dataclass(frozen=True)
class InitialCondition:
    seed: int = 0
    amplitude: float = 1e-2
    band: Tuple[float, float] = (1.0, 4.0)
    well_prepared: bool = True
    gap_amplitude: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    system: str
    params: Params
    grid: Grid
    t_end: float
    dt: Optional[float] = None
    sample_every: int = 10
    n_samples: Optional[int] = None
    ic: InitialCondition = field(default_factory=InitialCondition)
    cfl: float = config.CFL

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ParameterError(f"unknown system '{self.system}', expected one of {SYSTEMS}")
        if not self.t_end > 0:
            raise ParameterError(f"t_end must be positive, got {self.t_end}")
        if self.dt is not None and not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.sample_every < 1:
            raise ParameterError("sample_every must be at least 1")
        if self.n_samples is not None and self.n_samples < 1:
            raise ParameterError("n_samples must be at least 1")
        N = self.grid.N
        if N < config.MIN_SOLVER_POINTS or N & (N - 1):
            raise ResolutionError(f"solver grids need a power of two N >= {config.MIN_SOLVER_POINTS}, got {N}")


@dataclass
class Trajectory:
    system: str
    times: np.ndarray
    states: list
    ledger: Optional[pd.DataFrame]
    params: Params
    grid: Grid
    time_scale: str = "t"

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.states[-1]


@dataclass
class Tendency:
    nonstiff: Dict[str, np.ndarray]
    stiff: Dict[str, np.ndarray]

    def total(self, key: str) -> np.ndarray:
        out = self.nonstiff.get(key)
        extra = self.stiff.get(key)
        if out is None:
            return extra
        return out if extra is None else out + extra

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for part in (self.nonstiff, self.stiff) for v in part.values())


# --- initial data -----------------------------------------------------------


def make_initial_data(cfg: RunConfig):
    """Equilibrium plus a seeded band-limited perturbation in (y, w, r, u)."""
    grid, params, ic = cfg.grid, cfg.params, cfg.ic
    rng = np.random.default_rng(ic.seed)
    y = random_band_field(grid, rng, ic.band, ic.amplitude)
    gap_profile = random_band_field(grid, rng, ic.band, 1.0)
    r = random_band_field(grid, rng, ic.band, ic.amplitude)
    u = np.array([random_band_field(grid, rng, ic.band, ic.amplitude) for _ in range(grid.d)])

    w = np.zeros(grid.shape)
    if cfg.system == "BN":
        if not ic.well_prepared:
            w = w + ic.amplitude * gap_profile
        w = w + ic.gap_amplitude * gap_profile

    state = unreformulate(ReformState(y=y, w=w, r=r, u=u), params)
    if cfg.system == "BN":
        return state
    kapila = constrain(state, params)
    if cfg.system == "PM":
        _, P = mixture_closure(kapila, params)
        return PMState.from_pressure(kapila.alpha_plus, P, params)
    return kapila


def constrain(state: MixtureState, params: Params) -> MixtureState:
    """Put both phases on the mixture pressure."""
    _, P = mixture_closure(state, params)
    return MixtureState(state.alpha_plus.copy(), params.law_plus.density(P), params.law_minus.density(P), state.u.copy())


# --- BN ---------------------------------------------------------------------


def _bn_unpack(state: MixtureState) -> Tuple[np.ndarray, ...]:
    a = state.alpha_plus
    mp = a * state.rho_plus
    mm = (1.0 - a) * state.rho_minus
    return a.copy(), mp, mm, (mp + mm) * state.u


def _bn_pack(a, mp, mm, q) -> MixtureState:
    return MixtureState(a, mp / a, mm / (1.0 - a), q / (mp + mm))


def _advect(u: np.ndarray, f: np.ndarray, grid: Grid) -> np.ndarray:
    """Dealiased u . grad f."""
    g = grid.grad(f)
    return grid.dealias(np.sum(u * g, axis=0))


def _bn_transport(a, mp, mm, q, params: Params, grid: Grid):
    rho = mp + mm
    u = q / rho
    P = a * params.law_plus.A * (mp / a) ** params.gamma_plus + (1.0 - a) * params.law_minus.A * (mm / (1.0 - a)) ** params.gamma_minus
    da = -_advect(u, a, grid)
    dmp = -grid.div(mp * u)
    dmm = -grid.div(mm * u)
    gradP = grid.grad(P)
    dq = np.array([-grid.div(q[i] * u) - gradP[i] for i in range(grid.d)])
    return da, dmp, dmm, dq


def equilibrium_fraction(mp: np.ndarray, mm: np.ndarray, params: Params, guess: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Fraction at which both phases of the given masses share a pressure, and that pressure."""
    gp, gm = params.gamma_plus, params.gamma_minus
    c = math.log(params.law_plus.A) - math.log(params.law_minus.A) + gp * np.log(mp) - gm * np.log(mm)
    a = np.full(mp.shape, params.alpha_bar_plus) if guess is None else np.clip(guess, 1e-12, 1.0 - 1e-12)
    lo = np.zeros(mp.shape)
    hi = np.ones(mp.shape)
    for _ in range(80):
        f = c - gp * np.log(a) + gm * np.log1p(-a)
        lo = np.where(f > 0, a, lo)
        hi = np.where(f < 0, a, hi)
        a_new = a + f / (gp / a + gm / (1.0 - a))
        outside = (a_new <= lo) | (a_new >= hi)
        a_new = np.where(outside, 0.5 * (lo + hi), a_new)
        done = np.max(np.abs(a_new - a)) <= 1e-15
        a = a_new
        if done:
            break
    return a, params.law_plus.A * (mp / a) ** gp


def _bn_relax(a, mp, mm, q, h: float, params: Params):
    """Exact friction and linearized pressure relaxation over a time h at fixed phase masses."""
    q = q * math.exp(-h / params.tau)
    a_star, P_star = equilibrium_fraction(mp, mm, params, guess=a)
    kappa = (params.gamma_plus * (1.0 - a_star) + params.gamma_minus * a_star) * P_star / params.epsilon
    a = a_star + (a - a_star) * np.exp(-kappa * h)
    return a, mp, mm, q


def rhs_bn(state: MixtureState, params: Params, grid: Grid, t: float = 0.0) -> Tendency:
    """Conservative-variable tendencies; relaxation and friction sit in the stiff slot."""
    a, mp, mm, q = _bn_unpack(state)
    da, dmp, dmm, dq = _bn_transport(a, mp, mm, q, params, grid)
    P_plus, P_minus = phase_pressures(state, params)
    tendency = Tendency(
        nonstiff={"alpha_plus": da, "m_plus": dmp, "m_minus": dmm, "momentum": dq},
        stiff={"alpha_plus": a * (1.0 - a) / params.epsilon * (P_plus - P_minus), "momentum": -q / params.tau},
    )
    if not tendency.is_finite():
        raise BlowUpError("non-finite BN tendency", t)
    return tendency


def _ssp_rk2(fields, dt: float, rate: Callable):
    k1 = rate(*fields)
    stage = [f + dt * df for f, df in zip(fields, k1)]
    k2 = rate(*stage)
    return [0.5 * f + 0.5 * (s + dt * ds) for f, s, ds in zip(fields, stage, k2)]


def _project(grid: Grid, fields):
    out = []
    for f in fields:
        out.append(np.array([grid.dealias(c) for c in f]) if f.ndim > grid.d else grid.dealias(f))
    return out


def _step_bn(fields, dt: float, params: Params, grid: Grid):
    fields = _bn_relax(*fields, 0.5 * dt, params)
    fields = _ssp_rk2(fields, dt, lambda a, mp, mm, q: _bn_transport(a, mp, mm, q, params, grid))
    fields = _bn_relax(*fields, 0.5 * dt, params)
    return _project(grid, fields)


def _bn_admissible(fields) -> bool:
    a, mp, mm, q = fields
    return bool(
        np.all(np.isfinite(a)) and np.all(np.isfinite(q)) and np.all(np.isfinite(mp)) and np.all(np.isfinite(mm))
        and np.all(a > 0) and np.all(a < 1) and np.all(mp > 0) and np.all(mm > 0)
    )


# --- K ----------------------------------------------------------------------


def _k_unpack(state: MixtureState, params: Params):
    _, P = mixture_closure(state, params)
    return state.alpha_plus.copy(), P, state.u.copy()


def _k_pack(a, Pi, u, params: Params) -> MixtureState:
    return MixtureState(a, params.law_plus.density(Pi), params.law_minus.density(Pi), u)


def _k_transport(a, Pi, u, params: Params, grid: Grid):
    gp, gm = params.gamma_plus, params.gamma_minus
    b = 1.0 - a
    rho = a * params.law_plus.density(Pi) + b * params.law_minus.density(Pi)
    divu = grid.div(u)
    den = gp * b + gm * a
    da = -_advect(u, a, grid) - grid.dealias(params.gamma_gap * a * b / den * divu)
    dPi = -_advect(u, Pi, grid) - grid.dealias(gp * gm * Pi / den * divu)
    gradPi = grid.grad(Pi)
    du = np.array([-_advect(u, u[i], grid) - grid.dealias(gradPi[i] / rho) for i in range(grid.d)])
    return da, dPi, du


def rhs_k(state: MixtureState, params: Params, grid: Grid, t: float = 0.0) -> Tendency:
    a, Pi, u = _k_unpack(state, params)
    da, dPi, du = _k_transport(a, Pi, u, params, grid)
    tendency = Tendency(
        nonstiff={"alpha_plus": da, "pressure": dPi, "u": du},
        stiff={"u": -u / params.tau},
    )
    if not tendency.is_finite():
        raise BlowUpError("non-finite K tendency", t)
    return tendency


def _step_k(fields, dt: float, params: Params, grid: Grid):
    damp = math.exp(-0.5 * dt / params.tau)
    a, Pi, u = fields
    u = u * damp
    a, Pi, u = _ssp_rk2([a, Pi, u], dt, lambda a, Pi, u: _k_transport(a, Pi, u, params, grid))
    u = u * damp
    return _project(grid, [a, Pi, u])


def _k_admissible(fields) -> bool:
    a, Pi, u = fields
    return bool(
        np.all(np.isfinite(a)) and np.all(np.isfinite(Pi)) and np.all(np.isfinite(u))
        and np.all(a > 0) and np.all(a < 1) and np.all(Pi > 0)
    )


# --- PM ---------------------------------------------------------------------


def _pm_fields(beta, Pi, params: Params, grid: Grid):
    rho = beta * params.law_plus.density(Pi) + (1.0 - beta) * params.law_minus.density(Pi)
    gradPi = grid.grad(Pi)
    v = np.array([-grid.dealias(gradPi[i] / rho) for i in range(grid.d)])
    return rho, v


def _pm_full(beta, Pi, params: Params, grid: Grid):
    gp, gm = params.gamma_plus, params.gamma_minus
    _, v = _pm_fields(beta, Pi, params, grid)
    divv = grid.div(v)
    den = gp * (1.0 - beta) + gm * beta
    dbeta = -_advect(v, beta, grid) - grid.dealias(params.gamma_gap * beta * (1.0 - beta) / den * divv)
    dPi = -_advect(v, Pi, grid) - grid.dealias(gp * gm * Pi / den * divv)
    return dbeta, dPi


def _pm_remainder(beta, Pi, params: Params, grid: Grid):
    dbeta, dPi = _pm_full(beta, Pi, params, grid)
    return dbeta, dPi - params.c_bar * grid.laplacian(Pi)


def rhs_pm(state: PMState, params: Params, grid: Grid, t: float = 0.0) -> Tendency:
    """Linear diffusion c_bar * Laplacian(Pi) in the stiff slot, the rest nonstiff."""
    Pi = state.pressure(params)
    dbeta, dPi = _pm_remainder(state.beta_plus, Pi, params, grid)
    tendency = Tendency(
        nonstiff={"beta_plus": dbeta, "pressure": dPi},
        stiff={"pressure": params.c_bar * grid.laplacian(Pi)},
    )
    if not tendency.is_finite():
        raise BlowUpError("non-finite PM tendency", t)
    return tendency


def _step_pm(fields, dt: float, params: Params, grid: Grid):
    beta, Pi = fields
    E = np.exp(-params.c_bar * grid.k2 * dt)

    def propagate(f):
        return grid.ifft(E * grid.fft(f))

    nb0, nP0 = _pm_remainder(beta, Pi, params, grid)
    b1 = beta + dt * nb0
    P1 = propagate(Pi + dt * nP0)
    nb1, nP1 = _pm_remainder(b1, P1, params, grid)
    beta = 0.5 * beta + 0.5 * (b1 + dt * nb1)
    Pi = 0.5 * propagate(Pi) + 0.5 * (P1 + dt * nP1)
    return _project(grid, [beta, Pi])


def _pm_admissible(fields) -> bool:
    beta, Pi = fields
    return bool(np.all(np.isfinite(beta)) and np.all(np.isfinite(Pi)) and np.all(beta > 0) and np.all(beta < 1) and np.all(Pi > 0))


# --- stepping ---------------------------------------------------------------


@dataclass
class _Scheme:
    unpack: Callable
    pack: Callable
    advance: Callable
    admissible: Callable


def _scheme(system: str, params: Params, grid: Grid) -> _Scheme:
    if system == "BN":
        return _Scheme(_bn_unpack, lambda f: _bn_pack(*f), lambda f, dt: _step_bn(f, dt, params, grid), _bn_admissible)
    if system in ("K", "KTAU"):
        return _Scheme(
            lambda s: _k_unpack(s, params),
            lambda f: _k_pack(*f, params),
            lambda f, dt: _step_k(f, dt, params, grid),
            _k_admissible,
        )
    if system == "PM":
        return _Scheme(
            lambda s: [s.beta_plus.copy(), s.pressure(params)],
            lambda f: PMState.from_pressure(f[0], f[1], params),
            lambda f, dt: _step_pm(f, dt, params, grid),
            _pm_admissible,
        )
    raise ParameterError(f"unknown system '{system}'")


def step(state, dt: float, scheme: str, params: Params, grid: Grid, t: float = 0.0):
    """One time step of the named system ('BN', 'K' or 'PM')."""
    s = _scheme(scheme, params, grid)
    try:
        fields = s.advance(list(s.unpack(state)), dt)
    except DomainError as e:
        raise BlowUpError(str(e), t + dt)
    if not s.admissible(fields):
        raise BlowUpError(f"{scheme} state left the admissible set", t + dt)
    return s.pack(fields)


def auto_dt(system: str, state, params: Params, grid: Grid, cfl: float = config.CFL) -> float:
    if system == "PM":
        Pi = state.pressure(params)
        rho, v = _pm_fields(state.beta_plus, Pi, params, grid)
        den = params.gamma_plus * state.beta_minus + params.gamma_minus * state.beta_plus
        spread = float(np.max(np.abs(params.gamma_plus * params.gamma_minus * Pi / den / rho - params.c_bar)))
        kmax2 = float(np.max(grid.k2 * grid.dealias_mask))
        limits = [config.PM_STEP_CAP]
        speed = float(np.max(np.abs(v)))
        if speed > 0:
            limits.append(cfl * grid.dx / speed)
        if spread > 0:
            limits.append(0.5 / (spread * kmax2))
        return min(limits)
    speed = params.wave_speed + float(np.max(np.abs(state.u)))
    return cfl * grid.dx / speed


def conservation(state, grid: Grid) -> Tuple[float, float, float]:
    """Domain integrals of the plus, minus and total mass."""
    if isinstance(state, PMState):
        a, rp, rm = state.beta_plus, state.varrho_plus, state.varrho_minus
    else:
        a, rp, rm = state.alpha_plus, state.rho_plus, state.rho_minus
    m_plus = float(grid.integrate(a * rp))
    m_total = float(grid.integrate(a * rp + (1.0 - a) * rm))
    return m_plus, m_total - m_plus, m_total


def ledger_row(t: float, state, params: Params, grid: Grid) -> dict:
    m_plus, m_minus, m_total = conservation(state, grid)
    row = {"t": t, "m_plus": m_plus, "m_minus": m_minus, "m_total": m_total}
    if isinstance(state, PMState):
        Pi = state.pressure(params)
        v = darcy_velocity(state, params, grid)
        row.update(gap_l2=0.0, gap_linf=0.0, pressure_l2=grid.l2(Pi - params.P_bar), u_l2=grid.l2(v), flux_l2=grid.l2(v))
        return row
    P_plus, P_minus = phase_pressures(state, params)
    _, P = mixture_closure(state, params)
    ref = reformulate(state, params)
    H4 = 1.0 / (state.alpha_plus * state.rho_plus + state.alpha_minus * state.rho_minus) - params.Fbar[0]
    z = effective_flux(state.u, ref.r, H4, params, grid)
    row.update(
        gap_l2=grid.l2(P_plus - P_minus),
        gap_linf=float(np.max(np.abs(P_plus - P_minus))),
        pressure_l2=grid.l2(P - params.P_bar),
        u_l2=grid.l2(state.u),
        flux_l2=grid.l2(z),
    )
    return row


def _schedule(cfg: RunConfig, t_end: float, dt0: float) -> Tuple[int, float, int]:
    """(number of steps, uniform dt, steps per sample) landing exactly on t_end."""
    if cfg.n_samples:
        interval = t_end / cfg.n_samples
        per = max(1, math.ceil(interval / dt0 - 1e-9))
        return per * cfg.n_samples, interval / per, per
    n_steps = max(1, math.ceil(t_end / dt0 - 1e-9))
    return n_steps, t_end / n_steps, cfg.sample_every


def integrate(cfg: RunConfig, state=None, display=None) -> Trajectory:
    """Run cfg.system to t_end, sampling states and the diagnostic ledger."""
    params, grid = cfg.params, cfg.grid
    if state is None:
        state = make_initial_data(cfg)
    system = "K" if cfg.system == "KTAU" else cfg.system
    t_end = cfg.t_end / params.tau if cfg.system == "KTAU" else cfg.t_end

    dt0 = cfg.dt if cfg.dt is not None else auto_dt(system, state, params, grid, cfg.cfl)
    if cfg.dt is not None and cfg.system == "KTAU":
        dt0 = cfg.dt / params.tau
    n_steps, dt, every = _schedule(cfg, t_end, dt0)
    logger.info("Integrating %s on %s: %d steps of dt=%.4g to t=%.4g", cfg.system, grid, n_steps, dt, t_end)

    scheme = _scheme(system, params, grid)
    fields = list(scheme.unpack(state))
    times: List[float] = [0.0]
    states = [scheme.pack(fields)]
    rows = [ledger_row(0.0, states[0], params, grid)]

    def partial() -> Trajectory:
        return Trajectory(cfg.system, np.array(times), list(states), pd.DataFrame(rows), params, grid)

    for n in range(1, n_steps + 1):
        t = n * dt
        try:
            fields = scheme.advance(fields, dt)
        except DomainError as e:
            raise BlowUpError(str(e), t, partial())
        if not scheme.admissible(fields):
            raise BlowUpError(f"{system} state left the admissible set", t, partial())
        if n % every == 0 or n == n_steps:
            current = scheme.pack(fields)
            times.append(t)
            states.append(current)
            rows.append(ledger_row(t, current, params, grid))
            if display is not None:
                display.update({"status": "sample", "t": t, "step": n, "n_steps": n_steps, "row": rows[-1]})
        elif display is not None:
            display.update({"status": "step", "t": t, "step": n, "n_steps": n_steps})

    traj = Trajectory(cfg.system, np.array(times), states, pd.DataFrame(rows), params, grid)
    if display is not None:
        display.update({"status": "done", "t": t_end, "step": n_steps, "n_steps": n_steps})
    if cfg.system == "KTAU":
        traj = diffusive_rescale(traj, params.tau, "forward")
    return traj
