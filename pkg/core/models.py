"""
Physical parameterization, closures and pointwise transformations.

Systems covered: two-pressure mixture with pressure relaxation (BN), its
single-pressure limit (K) and the porous-media limit (PM). All functions are
pure and vectorized over grid points.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

import config
from core.errors import (
    AdmissibilityError,
    DegenerateFractionError,
    DomainError,
    ParameterError,
    RangeError,
    ReconstructionError,
    SamplingError,
)
from core.lp import Grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PressureLaw:
    A: float
    gamma: float

    def __post_init__(self):
        if not self.A > 0:
            raise ParameterError(f"pressure coefficient A must be positive, got {self.A}")
        if not self.gamma >= 1:
            raise ParameterError(f"adiabatic exponent must be >= 1, got {self.gamma}")

    def density(self, p):
        """Inverse law: the density at pressure p."""
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0):
            raise DomainError("non-positive pressure has no density")
        return (p / self.A) ** (1.0 / self.gamma)


def pressure_eval(law: PressureLaw, s):
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError("pressure law evaluated at a non-positive density")
    out = law.A * s ** law.gamma
    return float(out) if out.ndim == 0 else out


def equilibrium_close(law_plus: PressureLaw, law_minus: PressureLaw, rho_bar_plus: float) -> float:
    """Density of the minus phase sharing the plus phase's pressure."""
    if not rho_bar_plus > 0:
        raise DomainError(f"equilibrium density must be positive, got {rho_bar_plus}")
    return float((law_plus.A * rho_bar_plus ** law_plus.gamma / law_minus.A) ** (1.0 / law_minus.gamma))


@dataclass(frozen=True)
class Params:
    epsilon: float
    tau: float
    law_plus: PressureLaw
    law_minus: PressureLaw
    alpha_bar_plus: float
    rho_bar_plus: float
    rho_bar_minus: float = field(default=0.0)
    rho_bar: float = field(default=0.0)
    P_bar: float = field(default=0.0)
    Fbar: Tuple[float, float, float, float] = field(default=(0.0, 0.0, 0.0, 0.0))

    @classmethod
    def build(
        cls,
        epsilon: float,
        tau: float,
        law_plus: PressureLaw,
        law_minus: PressureLaw,
        alpha_bar_plus: float,
        rho_bar_plus: float,
    ) -> "Params":
        if not (0.0 < alpha_bar_plus < 1.0):
            raise ParameterError(f"alpha_bar_plus must lie in (0, 1), got {alpha_bar_plus}")
        rho_bar_minus = equilibrium_close(law_plus, law_minus, rho_bar_plus)
        a, b = alpha_bar_plus, 1.0 - alpha_bar_plus
        gp, gm = law_plus.gamma, law_minus.gamma
        rho_bar = a * rho_bar_plus + b * rho_bar_minus
        P_bar = pressure_eval(law_plus, rho_bar_plus)
        den = gp * b + gm * a
        Fbar = (1.0 / rho_bar, (gp - gm) * a * b * P_bar / den, den * P_bar, gp * gm * P_bar / den)
        return cls(epsilon, tau, law_plus, law_minus, alpha_bar_plus, rho_bar_plus, rho_bar_minus, rho_bar, P_bar, Fbar)

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ParameterError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not (0.0 < self.tau <= 1.0):
            raise ParameterError(f"tau must lie in (0, 1], got {self.tau}")
        if self.epsilon > self.tau:
            raise ParameterError(f"epsilon={self.epsilon} exceeds tau={self.tau}")
        if not self.law_minus.gamma < self.law_plus.gamma:
            raise ParameterError("gamma_minus must be smaller than gamma_plus")
        if self.rho_bar_minus > 0:
            p_minus = pressure_eval(self.law_minus, self.rho_bar_minus)
            if abs(p_minus - self.P_bar) > 1e-12 * self.P_bar:
                raise ParameterError("equilibrium phase pressures differ")
            if min(self.Fbar) <= 0:
                raise ParameterError(f"equilibrium constants must be positive, got {self.Fbar}")

    def with_relaxation(self, epsilon: Optional[float] = None, tau: Optional[float] = None) -> "Params":
        return replace(
            self,
            epsilon=self.epsilon if epsilon is None else epsilon,
            tau=self.tau if tau is None else tau,
        )

    @property
    def alpha_bar_minus(self) -> float:
        return 1.0 - self.alpha_bar_plus

    @property
    def gamma_plus(self) -> float:
        return self.law_plus.gamma

    @property
    def gamma_minus(self) -> float:
        return self.law_minus.gamma

    @property
    def gamma_gap(self) -> float:
        return self.law_plus.gamma - self.law_minus.gamma

    @property
    def Y_bar(self) -> float:
        return self.alpha_bar_plus * self.rho_bar_plus / self.rho_bar

    @property
    def c_star(self) -> float:
        """Linear damping coefficient of the pressure gap (times 1/epsilon)."""
        return self.Fbar[2]

    @property
    def c_bar(self) -> float:
        """Diffusion constant of the linearized porous-media pressure equation."""
        return self.Fbar[3] * self.Fbar[0]

    @property
    def wave_speed(self) -> float:
        """High-frequency sound speed of the linearized two-pressure system."""
        F0, F1, _, F3 = self.Fbar
        return float(np.sqrt(F0 * (F3 + self.gamma_gap * F1)))


@dataclass
class MixtureState:
    alpha_plus: np.ndarray
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    u: np.ndarray

    @property
    def alpha_minus(self) -> np.ndarray:
        return 1.0 - self.alpha_plus

    def copy(self) -> "MixtureState":
        return MixtureState(self.alpha_plus.copy(), self.rho_plus.copy(), self.rho_minus.copy(), self.u.copy())

    def fields(self) -> dict:
        return {"alpha_plus": self.alpha_plus, "rho_plus": self.rho_plus, "rho_minus": self.rho_minus, "u": self.u}

    def is_admissible(self) -> bool:
        a = self.alpha_plus
        finite = all(np.all(np.isfinite(f)) for f in self.fields().values())
        return bool(finite and np.all(a > 0) and np.all(a < 1) and np.all(self.rho_plus > 0) and np.all(self.rho_minus > 0))


@dataclass
class ReformState:
    y: np.ndarray
    w: np.ndarray
    r: np.ndarray
    u: np.ndarray


@dataclass
class PMState:
    beta_plus: np.ndarray
    varrho_plus: np.ndarray
    varrho_minus: np.ndarray

    @classmethod
    def from_pressure(cls, beta_plus: np.ndarray, Pi: np.ndarray, params: Params) -> "PMState":
        return cls(beta_plus, params.law_plus.density(Pi), params.law_minus.density(Pi))

    @property
    def beta_minus(self) -> np.ndarray:
        return 1.0 - self.beta_plus

    def pressure(self, params: Params) -> np.ndarray:
        return pressure_eval(params.law_plus, self.varrho_plus)

    def density(self) -> np.ndarray:
        return self.beta_plus * self.varrho_plus + self.beta_minus * self.varrho_minus

    def copy(self) -> "PMState":
        return PMState(self.beta_plus.copy(), self.varrho_plus.copy(), self.varrho_minus.copy())

    def fields(self) -> dict:
        return {"alpha_plus": self.beta_plus, "rho_plus": self.varrho_plus, "rho_minus": self.varrho_minus}


@dataclass
class Coeffs:
    F0: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    F4: np.ndarray
    G0: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    Gamma1: np.ndarray
    Gamma2: np.ndarray
    Gamma3: np.ndarray


def equilibrium_state(params: Params, grid: Grid) -> MixtureState:
    ones = np.ones(grid.shape)
    return MixtureState(
        params.alpha_bar_plus * ones,
        params.rho_bar_plus * ones,
        params.rho_bar_minus * ones,
        np.zeros((grid.d,) + grid.shape),
    )


def phase_pressures(state: MixtureState, params: Params) -> Tuple[np.ndarray, np.ndarray]:
    return pressure_eval(params.law_plus, state.rho_plus), pressure_eval(params.law_minus, state.rho_minus)


def mixture_closure(state: MixtureState, params: Params) -> Tuple[np.ndarray, np.ndarray]:
    a, b = state.alpha_plus, state.alpha_minus
    P_plus, P_minus = phase_pressures(state, params)
    return a * state.rho_plus + b * state.rho_minus, a * P_plus + b * P_minus


def reformulate(state: MixtureState, params: Params) -> ReformState:
    a, b = state.alpha_plus, state.alpha_minus
    gp, gm = params.gamma_plus, params.gamma_minus
    rho, P = mixture_closure(state, params)
    P_plus, P_minus = phase_pressures(state, params)
    y = a * state.rho_plus / rho - params.Y_bar
    w = a * b * (P_plus - P_minus) / (gp * b + gm * a)
    r = P - params.P_bar - (gp - gm) * w
    return ReformState(y=y, w=w, r=r, u=np.array(state.u, copy=True))


def _reform_residual(a, p, q, y, w, r, params: Params) -> np.ndarray:
    """Scaled residual of the reformulated unknowns at (alpha_plus, rho_plus, rho_minus)."""
    gp, gm = params.gamma_plus, params.gamma_minus
    b = 1.0 - a
    P_plus = params.law_plus.A * p ** gp
    P_minus = params.law_minus.A * q ** gm
    m = a * p + b * q
    g = a * b / (gp * b + gm * a)
    gap = P_plus - P_minus
    f1 = a * p / m - params.Y_bar - y
    f2 = g * gap - w
    f3 = a * P_plus + b * P_minus - params.P_bar - (gp - gm) * g * gap - r
    return np.array([f1, f2 / params.P_bar, f3 / params.P_bar])


def _reform_jacobian(a, p, q, params: Params) -> np.ndarray:
    gp, gm = params.gamma_plus, params.gamma_minus
    dg_ = gp - gm
    b = 1.0 - a
    P_plus = params.law_plus.A * p ** gp
    P_minus = params.law_minus.A * q ** gm
    dPp = gp * P_plus / p
    dPm = gm * P_minus / q
    m = a * p + b * q
    den = gp * b + gm * a
    g = a * b / den
    dg = ((b - a) * den - a * b * (gm - gp)) / den ** 2
    gap = P_plus - P_minus
    s = 1.0 / params.P_bar

    J = np.empty(a.shape + (3, 3))
    J[..., 0, 0] = p * q / m ** 2
    J[..., 0, 1] = a * b * q / m ** 2
    J[..., 0, 2] = -a * b * p / m ** 2
    J[..., 1, 0] = s * dg * gap
    J[..., 1, 1] = s * g * dPp
    J[..., 1, 2] = -s * g * dPm
    J[..., 2, 0] = s * (gap - dg_ * dg * gap)
    J[..., 2, 1] = s * (a - dg_ * g) * dPp
    J[..., 2, 2] = s * (b + dg_ * g) * dPm
    return J


def _max_step(x, dx, lower, upper=None):
    """Largest step fraction keeping x + lam*dx strictly inside (lower, upper)."""
    lam = np.ones_like(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        down = dx < 0
        lam = np.where(down, np.minimum(lam, 0.99 * (x - lower) / -dx), lam)
        if upper is not None:
            up = dx > 0
            lam = np.where(up, np.minimum(lam, 0.99 * (upper - x) / dx), lam)
    return lam


def unreformulate(
    ref: ReformState,
    params: Params,
    tol: float = config.NEWTON_TOL,
    max_iter: int = config.NEWTON_MAX_ITER,
) -> MixtureState:
    """Pointwise damped Newton inverse of reformulate, started from equilibrium."""
    y = np.asarray(ref.y, dtype=float)
    shape = y.shape
    y, w, r = (np.asarray(f, dtype=float).ravel() for f in (ref.y, ref.w, ref.r))
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(w)) and np.all(np.isfinite(r))):
        raise ReconstructionError("non-finite reformulated unknowns")

    n = y.size
    a = np.full(n, params.alpha_bar_plus)
    p = np.full(n, params.rho_bar_plus)
    q = np.full(n, params.rho_bar_minus)

    with np.errstate(all="ignore"):
        res = _reform_residual(a, p, q, y, w, r, params)
        for it in range(max_iter + 1):
            err = np.abs(res).max(axis=0)
            err = np.where(np.isfinite(err), err, np.inf)
            active = err >= tol
            if not active.any():
                break
            if it == max_iter:
                worst = int(np.argmax(err))
                index = tuple(int(i) for i in np.unravel_index(worst, shape))
                raise ReconstructionError(
                    f"Newton inversion did not converge in {max_iter} iterations at grid index {index} "
                    f"(residual {err[worst]:.3g})",
                    index=index,
                )

            J = _reform_jacobian(a, p, q, params)
            J[~active] = np.eye(3)
            rhs = np.where(active, -res, 0.0).T
            try:
                delta = np.linalg.solve(J, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                raise ReconstructionError("singular Jacobian in Newton inversion")
            da, dp, dq = delta.T

            lam = np.minimum(_max_step(a, da, 0.0, 1.0), np.minimum(_max_step(p, dp, 0.0), _max_step(q, dq, 0.0)))
            lam = np.where(np.isfinite(lam), lam, 0.0)
            for _ in range(30):
                a1, p1, q1 = a + lam * da, p + lam * dp, q + lam * dq
                res1 = _reform_residual(a1, p1, q1, y, w, r, params)
                err1 = np.abs(res1).max(axis=0)
                err1 = np.where(np.isfinite(err1), err1, np.inf)
                bad = active & (err1 > (1.0 - 1e-4 * lam) * err)
                if not bad.any():
                    break
                lam = np.where(bad, 0.5 * lam, lam)
            a, p, q, res = a1, p1, q1, res1

    state = MixtureState(a.reshape(shape), p.reshape(shape), q.reshape(shape), np.array(ref.u, dtype=float, copy=True))
    if not state.is_admissible():
        raise AdmissibilityError("reconstructed state leaves the admissible set")
    logger.debug("Newton inversion converged after %d iterations", it)
    return state


def _check_fractions(a: np.ndarray) -> None:
    if np.min(np.minimum(a, 1.0 - a)) < config.DEGENERATE_FRACTION:
        raise DegenerateFractionError("volume fraction too close to 0 or 1")


def coeffs(state: MixtureState, params: Params) -> Coeffs:
    a, b = state.alpha_plus, state.alpha_minus
    _check_fractions(a)
    gp, gm = params.gamma_plus, params.gamma_minus
    rho, P = mixture_closure(state, params)
    P_plus, P_minus = phase_pressures(state, params)
    ref = reformulate(state, params)
    w, r = ref.w, ref.r
    den = gp * b + gm * a

    F0 = 1.0 / rho
    F1 = (gp - gm) * a * b / den * (params.P_bar + r) + (gp ** 2 * b + gm ** 2 * a) / den * w
    F2 = den * (params.P_bar + r) - ((gp - gp ** 2) * b ** 2 - (gm - gm ** 2) * a ** 2) / (a * b) * w
    F3 = gp * gm * P / den
    F4 = gp * gm * (1.0 - gp * b - gm * a) / (a * b)

    D = gp * b * P_plus + gm * a * P_minus
    Gamma1 = a * b * ((gp - 1.0) * P_plus - (gm - 1.0) * P_minus) / D
    Gamma2 = gp * gm * P_plus * P_minus / D
    Gamma3 = a * b * (gp * P_plus - gm * P_minus) / D

    F0b, F1b, F2b, F3b = params.Fbar
    return Coeffs(
        F0=F0, F1=F1, F2=F2, F3=F3, F4=F4,
        G0=F0 - F0b, G1=F1 - F1b, G2=F2 - F2b, G3=F3 - F3b,
        Gamma1=Gamma1, Gamma2=Gamma2, Gamma3=Gamma3,
    )


def effective_flux(u: np.ndarray, r: np.ndarray, H4: np.ndarray, params: Params, grid: Grid, h4: Optional[float] = None) -> np.ndarray:
    """Damped mode z = u + tau*(h4 + H4)*grad r, with h4 = Fbar0 unless given."""
    h4 = params.Fbar[0] if h4 is None else h4
    return np.asarray(u) + params.tau * (h4 + np.asarray(H4)) * grid.grad(r)


def darcy_flux(Pi: np.ndarray, varrho: np.ndarray, grid: Grid) -> np.ndarray:
    return -grid.grad(Pi) / varrho


def darcy_velocity(pm: PMState, params: Params, grid: Grid) -> np.ndarray:
    return darcy_flux(pm.pressure(params), pm.density(), grid)


def aux_unknowns(state: MixtureState, params: Params) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Q, Y, pressure gap) with Q = P - Gamma1 * gap and Y the plus mass fraction."""
    c = coeffs(state, params)
    rho, P = mixture_closure(state, params)
    P_plus, P_minus = phase_pressures(state, params)
    gap = P_plus - P_minus
    return P - c.Gamma1 * gap, state.alpha_plus * state.rho_plus / rho, gap


def _scale_state(state, factor: float):
    if isinstance(state, MixtureState):
        return MixtureState(state.alpha_plus, state.rho_plus, state.rho_minus, state.u * factor)
    return state


def diffusive_rescale(traj, tau: float, direction: str = "forward"):
    """(alpha, rho, u)(t) <-> (beta, varrho, u/tau)(s) with s = tau*t."""
    if direction not in ("forward", "inverse"):
        raise ParameterError(f"unknown rescale direction '{direction}'")
    if direction == "forward":
        time_factor, velocity_factor, scale = tau, 1.0 / tau, "s"
    else:
        time_factor, velocity_factor, scale = 1.0 / tau, tau, "t"

    ledger = traj.ledger
    if ledger is not None and "t" in ledger:
        ledger = ledger.copy()
        ledger["t"] = ledger["t"] * time_factor
    return replace(
        traj,
        times=np.asarray(traj.times) * time_factor,
        states=[_scale_state(s, velocity_factor) for s in traj.states],
        ledger=ledger,
        time_scale=scale,
    )


def resample(traj, new_times: Sequence[float], rtol: float = 1e-10):
    """States of traj at new_times, cubic in time between stored samples."""
    times = np.asarray(traj.times, dtype=float)
    new_times = np.asarray(new_times, dtype=float)
    span = max(abs(times[-1] - times[0]), 1.0)
    if new_times.min() < times[0] - rtol * span or new_times.max() > times[-1] + rtol * span:
        raise RangeError(
            f"requested times [{new_times.min():.6g}, {new_times.max():.6g}] outside recorded span "
            f"[{times[0]:.6g}, {times[-1]:.6g}]"
        )

    exact = [np.flatnonzero(np.abs(times - t) <= rtol * span) for t in new_times]
    if all(len(e) for e in exact):
        states = [traj.states[int(e[0])] for e in exact]
        return replace(traj, times=new_times, states=states, ledger=None)
    if len(times) < 2:
        raise SamplingError("cannot interpolate a single-sample trajectory")

    names = list(traj.states[0].fields().keys())
    stacks = {n: np.array([s.fields()[n] for s in traj.states]) for n in names}
    clipped = np.clip(new_times, times[0], times[-1])
    interp = {n: CubicSpline(times, stacks[n], axis=0)(clipped) for n in names}
    cls = type(traj.states[0])
    if cls is PMState:
        states = [PMState(interp["alpha_plus"][i], interp["rho_plus"][i], interp["rho_minus"][i]) for i in range(len(new_times))]
    else:
        states = [
            MixtureState(interp["alpha_plus"][i], interp["rho_plus"][i], interp["rho_minus"][i], interp["u"][i])
            for i in range(len(new_times))
        ]
    return replace(traj, times=new_times, states=states, ledger=None)
