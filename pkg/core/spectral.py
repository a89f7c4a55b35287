"""
Eigenvalues of the linearized symbol: cubic characteristic polynomial,
frequency regimes with their leading-order expansions, and the damped-Euler
overdamping curve.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import config
from core.errors import DomainError, UnsupportedRegimeError

logger = logging.getLogger(__name__)

REGIMES = ("low", "medium", "high", "boundary")


@dataclass(frozen=True)
class SymbolParams:
    epsilon: float
    tau: float
    gamma_gap: float
    xi: float

    def __post_init__(self):
        if not (self.epsilon > 0 and self.tau > 0):
            raise DomainError(f"relaxation times must be positive, got epsilon={self.epsilon}, tau={self.tau}")
        if self.xi < 0:
            raise DomainError(f"frequency magnitude must be non-negative, got {self.xi}")


@dataclass(frozen=True)
class EigenTriple:
    lambda1: complex
    lambda2: complex
    lambda3: complex
    regime: Optional[str] = None
    re_bound: Optional[float] = None

    def as_tuple(self) -> Tuple[complex, complex, complex]:
        return (self.lambda1, self.lambda2, self.lambda3)

    @property
    def max_real(self) -> float:
        return max(l.real for l in self.as_tuple())


def cubic_coeffs(p: SymbolParams) -> Tuple[float, float, float]:
    """Coefficients of lambda^3 + a2 lambda^2 + a1 lambda + a0 with Fbar = (1, gamma_gap, 1, 1)."""
    xi2 = p.xi ** 2
    return (
        1.0 / p.tau + 1.0 / p.epsilon,
        1.0 / (p.epsilon * p.tau) + (p.gamma_gap ** 2 + 1.0) * xi2,
        xi2 / p.epsilon,
    )


def cubic_coeffs_general(epsilon: float, tau: float, Fbar: Sequence[float], gamma_gap: float, xi: float) -> Tuple[float, float, float]:
    """Same polynomial for arbitrary equilibrium constants (Fbar0..Fbar3)."""
    F0, F1, F2, F3 = Fbar
    xi2 = xi ** 2
    return (
        1.0 / tau + F2 / epsilon,
        F2 / (epsilon * tau) + F0 * (F3 + gamma_gap * F1) * xi2,
        F0 * F2 * F3 * xi2 / epsilon,
    )


def symbol_matrix(epsilon: float, tau: float, Fbar: Sequence[float], gamma_gap: float, xi: float) -> np.ndarray:
    """Linearized symbol acting on (w, r, velocity amplitude)."""
    F0, F1, F2, F3 = Fbar
    return np.array(
        [
            [-F2 / epsilon, 0.0, -F1 * xi],
            [0.0, 0.0, -F3 * xi],
            [gamma_gap * F0 * xi, F0 * xi, -1.0 / tau],
        ]
    )


def _polish(lam: complex, a2: float, a1: float, a0: float) -> complex:
    f = ((lam + a2) * lam + a1) * lam + a0
    df = (3.0 * lam + 2.0 * a2) * lam + a1
    if df == 0:
        return lam
    better = lam - f / df
    f_new = ((better + a2) * better + a1) * better + a0
    return better if abs(f_new) <= abs(f) else lam


def cubic_residual(lam: complex, a2: float, a1: float, a0: float) -> float:
    """Residual relative to max(1, |lambda|^3)."""
    return abs(((lam + a2) * lam + a1) * lam + a0) / max(1.0, abs(lam) ** 3)


def _order(roots: Sequence[complex], pair: bool) -> Tuple[complex, complex, complex]:
    if pair:
        real = min(roots, key=lambda z: abs(z.imag))
        rest = [z for z in roots if z is not real]
        upper = max(rest, key=lambda z: z.imag)
        return real, upper, upper.conjugate()
    most_negative, middle, largest = sorted(roots, key=lambda z: z.real)
    return most_negative, largest, middle


def cubic_roots(a2: float, a1: float, a0: float) -> EigenTriple:
    """Cardano roots with one Newton polish each.

    With a complex pair: lambda1 is the real root and lambda2/lambda3 the pair
    (positive imaginary part first). With three real roots: lambda1 is the
    most negative, lambda2 the largest, lambda3 the middle one.
    """
    shift = a2 / 3.0
    p = a1 - a2 * a2 / 3.0
    q = 2.0 * a2 ** 3 / 27.0 - a2 * a1 / 3.0 + a0
    half_q = q / 2.0
    third_p = p / 3.0
    disc = half_q * half_q + third_p ** 3
    scale = half_q * half_q + abs(third_p) ** 3

    pair = disc > config.CUBIC_DEAD_ZONE * scale
    if pair:
        sq = math.sqrt(disc)
        # larger-magnitude cube root first, the other from u*v = -p/3
        s = -half_q + math.copysign(sq, -half_q) if half_q != 0 else sq
        u = math.copysign(abs(s) ** (1.0 / 3.0), s)
        v = -third_p / u if u != 0 else 0.0
        t1 = u + v
        re = -(u + v) / 2.0
        im = math.sqrt(3.0) / 2.0 * (u - v)
        ts = [complex(t1, 0.0), complex(re, abs(im)), complex(re, -abs(im))]
    elif p == 0.0 or scale == 0.0:
        t = -math.copysign(abs(q) ** (1.0 / 3.0), q)
        ts = [complex(t, 0.0)] * 3
    else:
        m = 2.0 * math.sqrt(-third_p)
        arg = max(-1.0, min(1.0, 3.0 * q / (2.0 * p) * math.sqrt(-3.0 / p))) if p < 0 else 0.0
        theta = math.acos(arg) / 3.0
        ts = [complex(m * math.cos(theta - 2.0 * math.pi * k / 3.0), 0.0) for k in range(3)]

    roots = [_polish(t - shift, a2, a1, a0) for t in ts]
    if pair:
        roots[0] = complex(roots[0].real, 0.0)
        roots[2] = roots[1].conjugate()
    else:
        roots = [complex(z.real, 0.0) for z in roots]
    l1, l2, l3 = _order(roots, pair)
    return EigenTriple(l1, l2, l3)


def _le(x: float, y: float) -> bool:
    return x <= y * (1.0 + 1e-12)


def _ge(x: float, y: float) -> bool:
    return x >= y * (1.0 - 1e-12)


def regime_classify(p: SymbolParams, ratio_threshold: float = config.RATIO_THRESHOLD) -> str:
    """Quantified version of xi*tau << 1, xi*eps >> 1 and the window between them.

    low: xi*tau <= t. high: xi*eps >= 1/t. medium is two-sided,
    xi*tau >= 1/t and xi*eps <= t, i.e. 1/tau << xi << 1/eps. Anything
    else (the transition bands) is "boundary". t is ratio_threshold.
    """
    if p.epsilon > p.tau:
        raise DomainError("regime classification assumes epsilon <= tau")
    xt = p.xi * p.tau
    xe = p.xi * p.epsilon
    if _le(xt, ratio_threshold):
        return "low"
    if _ge(xe, 1.0 / ratio_threshold):
        return "high"
    if _ge(xt, 1.0 / ratio_threshold) and _le(xe, ratio_threshold):
        return "medium"
    return "boundary"


def asymptotic_roots(p: SymbolParams, regime: str, point_prediction: bool = True) -> EigenTriple:
    eps, tau, g2, xi = p.epsilon, p.tau, p.gamma_gap ** 2, p.xi
    if regime == "low":
        return EigenTriple(complex(-1.0 / eps), complex(-tau * xi * xi), complex(-1.0 / tau), regime="low")
    if regime == "high":
        re = -1.0 / (2.0 * tau) - g2 / ((g2 + 1.0) * 2.0 * eps)
        im = math.sqrt(g2 + 1.0) * xi
        return EigenTriple(complex(-1.0 / ((g2 + 1.0) * eps)), complex(re, im), complex(re, -im), regime="high")
    if regime == "medium":
        if point_prediction:
            raise UnsupportedRegimeError("the medium regime only carries the bound Re(lambda) <~ -1/tau")
        nan = complex(math.nan, math.nan)
        return EigenTriple(nan, nan, nan, regime="medium", re_bound=-1.0 / tau)
    raise UnsupportedRegimeError(f"no expansion for regime '{regime}'")


def eigen_triple(p: SymbolParams, ratio_threshold: float = config.RATIO_THRESHOLD) -> EigenTriple:
    """Exact roots tagged with their regime."""
    roots = cubic_roots(*cubic_coeffs(p))
    return EigenTriple(*roots.as_tuple(), regime=regime_classify(p, ratio_threshold))


def incompressible_decay(tau: float) -> float:
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    return 1.0 / tau


def damped_euler_decay(tau: float, xi: float) -> float:
    """Slowest decay rate of lambda^2 + lambda/tau + xi^2 = 0."""
    if not (tau > 0 and xi > 0):
        raise DomainError(f"tau and xi must be positive, got tau={tau}, xi={xi}")
    crit = 4.0 * tau * tau * xi * xi
    if crit > 1.0:
        return 1.0 / (2.0 * tau)
    return 2.0 * tau * xi * xi / (1.0 + math.sqrt(1.0 - crit))


def overdamping_peak(xi: float) -> Tuple[float, float]:
    """(critical friction 1/tau*, peak decay rate)."""
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    return 2.0 * xi, xi


def overdamping_table(xi: float, frictions: Iterable[float]) -> pd.DataFrame:
    frictions = np.asarray(list(frictions), dtype=float)
    rates = np.array([damped_euler_decay(1.0 / f, xi) for f in frictions])
    peak_friction, peak_rate = overdamping_peak(xi)
    table = pd.DataFrame({"friction": frictions, "decay_rate": rates, "peak": False})
    hit = np.isclose(frictions, peak_friction, rtol=1e-12)
    if hit.any():
        table.loc[hit, "peak"] = True
    else:
        row = pd.DataFrame({"friction": [peak_friction], "decay_rate": [peak_rate], "peak": [True]})
        table = pd.concat([table, row], ignore_index=True).sort_values("friction", ignore_index=True)
    return table


def numeric_overdamping_argmax(xi: float, n: int = 1000, span: Tuple[float, float] = (1e-2, 1e2)) -> Tuple[float, float, np.ndarray]:
    """Grid search over a log grid of frictions xi*span; returns (argmax, max rate, grid)."""
    frictions = np.logspace(math.log10(span[0] * xi), math.log10(span[1] * xi), n)
    rates = np.array([damped_euler_decay(1.0 / f, xi) for f in frictions])
    i = int(np.argmax(rates))
    return float(frictions[i]), float(rates[i]), frictions


def eigen_landscape(
    epsilons: Iterable[float],
    taus: Iterable[float],
    xis: Iterable[float],
    gamma_gap: float = 1.0,
    ratio_threshold: float = config.RATIO_THRESHOLD,
) -> pd.DataFrame:
    """Exact roots over a parameter grid, keeping only pairs with epsilon <= tau."""
    rows = []
    for eps in epsilons:
        for tau in taus:
            if eps > tau:
                continue
            for xi in xis:
                p = SymbolParams(eps, tau, gamma_gap, xi)
                e = eigen_triple(p, ratio_threshold)
                row = {"epsilon": eps, "tau": tau, "xi": xi}
                for i, lam in enumerate(e.as_tuple(), start=1):
                    row[f"re{i}"] = lam.real
                    row[f"im{i}"] = lam.imag
                row["max_re"] = e.max_real
                row["regime"] = e.regime
                rows.append(row)
    return pd.DataFrame(rows)


def medium_regime_constant(landscape: pd.DataFrame) -> float:
    """Largest c with max Re(lambda) <= -c/tau over the medium rows (reported, not asserted)."""
    medium = landscape[landscape["regime"] == "medium"]
    if medium.empty:
        return math.nan
    return float((-medium["max_re"] * medium["tau"]).min())


def symbol_from_params(params, xi: float) -> EigenTriple:
    """Exact roots with the equilibrium constants of a physical parameter set."""
    a2, a1, a0 = cubic_coeffs_general(params.epsilon, params.tau, params.Fbar, params.gamma_gap, xi)
    return cubic_roots(a2, a1, a0)
