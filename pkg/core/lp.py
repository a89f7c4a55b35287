"""
Periodic grids, spectral fields and the discrete Littlewood-Paley toolbox.

Everything lives on the torus [0, 2*pi)^d with d in {1, 2}. Norms are grid
versions of the continuous ones: ||f||_{L2}^2 = (2*pi)^d * mean(|f|^2).
Homogeneous Besov norms drop the zero mode, so they act on mean-free parts.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

import config
from core.errors import DomainError, ParameterError, PreconditionError, ResolutionError, SamplingError

logger = logging.getLogger(__name__)

# Radii of the smooth cutoff chi: 1 below INNER, 0 above OUTER
INNER = 3.0 / 4.0
OUTER = 4.0 / 3.0


class Grid:
    """Uniform periodic grid with FFT helpers and the 2/3 dealiasing mask."""

    def __init__(self, d: int = 1, N: int = 64, dealias: bool = True):
        if d not in (1, 2):
            raise ParameterError(f"grid dimension must be 1 or 2, got {d}")
        if N < 2:
            raise ResolutionError(f"grid needs at least 2 points per axis, got {N}")
        self.d = int(d)
        self.N = int(N)
        self.dealias_enabled = bool(dealias)
        self.shape: Tuple[int, ...] = (self.N,) * self.d
        self.axes: Tuple[int, ...] = tuple(range(-self.d, 0))
        self.dx = 2.0 * np.pi / self.N
        self.volume = (2.0 * np.pi) ** self.d

        ks = np.fft.fftfreq(self.N, 1.0 / self.N)
        xs = np.arange(self.N) * self.dx
        self.k = np.array(np.meshgrid(*([ks] * self.d), indexing="ij"))
        self.x = np.array(np.meshgrid(*([xs] * self.d), indexing="ij"))
        self.k2 = np.sum(self.k ** 2, axis=0)
        self.kmag = np.sqrt(self.k2)

        self.dealias_mask = np.all(np.abs(self.k) <= self.N / 3.0, axis=0)
        nyquist = np.any(np.abs(self.k) >= self.N / 2.0, axis=0) if self.N % 2 == 0 else np.zeros(self.shape, bool)
        keep = self.dealias_mask if self.dealias_enabled else ~nyquist
        self._keep = keep.astype(float)
        self._ik = 1j * self.k * self._keep

    def __repr__(self):
        return f"Grid(d={self.d}, N={self.N}, dealias={self.dealias_enabled})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.d, self.N, self.dealias_enabled) == (
            other.d,
            other.N,
            other.dealias_enabled,
        )

    def __hash__(self):
        return hash((self.d, self.N, self.dealias_enabled))

    def __getstate__(self):
        return {"d": self.d, "N": self.N, "dealias": self.dealias_enabled}

    def __setstate__(self, state):
        self.__init__(state["d"], state["N"], state["dealias"])

    @property
    def kmax(self) -> float:
        return float(self.kmag.max())

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.fftn(f, axes=self.axes)

    def ifft(self, fh: np.ndarray, real: bool = True) -> np.ndarray:
        out = np.fft.ifftn(fh, axes=self.axes)
        return out.real if real else out

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """Project a (product) field onto the retained band."""
        return self.ifft(self.fft(f) * self._keep)

    def grad(self, f: np.ndarray) -> np.ndarray:
        fh = self.fft(f)
        return np.array([self.ifft(self._ik[i] * fh) for i in range(self.d)])

    def div(self, v: np.ndarray) -> np.ndarray:
        acc = np.zeros(self.shape, dtype=complex)
        for i in range(self.d):
            acc += self._ik[i] * self.fft(v[i])
        return self.ifft(acc)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k2 * self._keep * self.fft(f))

    def curl(self, v: np.ndarray) -> np.ndarray:
        """Scalar vorticity of a planar vector field."""
        if self.d != 2:
            raise ParameterError("curl is only defined for d=2 here")
        return self.ifft(self._ik[0] * self.fft(v[1]) - self._ik[1] * self.fft(v[0]))

    def mean(self, f: np.ndarray) -> np.ndarray:
        return np.mean(f, axis=self.axes)

    def integrate(self, f: np.ndarray) -> np.ndarray:
        return self.mean(f) * self.volume

    def l2(self, f: np.ndarray) -> float:
        """Torus L2 norm, summed over any leading component axes."""
        return float(np.sqrt(self.volume * np.sum(np.mean(np.abs(f) ** 2, axis=self.axes))))

    def l2_hat(self, fh: np.ndarray) -> float:
        """Same norm from Fourier coefficients (Parseval)."""
        n_total = self.N ** self.d
        return float(np.sqrt(self.volume * np.sum(np.abs(fh) ** 2) / n_total ** 2))


class SpectralField:
    """Grid field kept as physical samples and Fourier coefficients, converted on demand."""

    def __init__(self, grid: Grid, phys: Optional[np.ndarray] = None, hat: Optional[np.ndarray] = None, real: Optional[bool] = None):
        if phys is None and hat is None:
            raise ParameterError("SpectralField needs phys or hat")
        self.grid = grid
        self._phys = None if phys is None else np.asarray(phys)
        self._hat = None if hat is None else np.asarray(hat, dtype=complex)
        if real is None:
            real = True if phys is None else bool(np.isrealobj(self._phys))
        self.real = real

    @classmethod
    def from_phys(cls, grid: Grid, phys: np.ndarray) -> "SpectralField":
        return cls(grid, phys=phys)

    @classmethod
    def from_hat(cls, grid: Grid, hat: np.ndarray, real: bool = True) -> "SpectralField":
        return cls(grid, hat=hat, real=real)

    @property
    def phys(self) -> np.ndarray:
        if self._phys is None:
            self._phys = self.grid.ifft(self._hat, real=self.real)
        return self._phys

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            self._hat = self.grid.fft(self._phys)
        return self._hat

    def mean(self):
        return self.grid.mean(self.phys)

    def mean_free(self) -> "SpectralField":
        hat = self.hat.copy()
        hat[(Ellipsis,) + (0,) * self.grid.d] = 0.0
        return SpectralField.from_hat(self.grid, hat, real=self.real)

    def norm(self) -> float:
        return self.grid.l2_hat(self.hat)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField.from_hat(self.grid, self.hat + other.hat, real=self.real and other.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField.from_hat(self.grid, self.hat - other.hat, real=self.real and other.real)

    def __mul__(self, c) -> "SpectralField":
        real = self.real and np.isrealobj(c)
        return SpectralField.from_hat(self.grid, self.hat * c, real=real)

    __rmul__ = __mul__


def as_field(grid: Grid, u) -> SpectralField:
    return u if isinstance(u, SpectralField) else SpectralField.from_phys(grid, np.asarray(u))


def chi(r: np.ndarray) -> np.ndarray:
    """Radial cutoff: 1 on r <= 3/4, 0 on r >= 4/3, C2 smoothstep in between."""
    t = np.clip((np.asarray(r, dtype=float) - INNER) / (OUTER - INNER), 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


def phi(r: np.ndarray) -> np.ndarray:
    """Annular bump chi(r/2) - chi(r), supported in [3/4, 8/3]."""
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


@dataclass(frozen=True)
class DyadicPartition:
    grid: Grid
    j_min: int
    j_max: int
    chi_profile: np.ndarray = field(repr=False)
    phi_profile: np.ndarray = field(repr=False)

    @property
    def indices(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def weight(self, j: int) -> np.ndarray:
        if j < self.j_min or j > self.j_max:
            return np.zeros(self.grid.shape)
        return self.phi_profile[j - self.j_min]

    def band_weight(self, j_lo: Optional[int] = None, j_hi: Optional[int] = None) -> np.ndarray:
        """Sum of block multipliers over j_lo..j_hi, clipped to the resolved range."""
        lo = self.j_min if j_lo is None else max(j_lo, self.j_min)
        hi = self.j_max if j_hi is None else min(j_hi, self.j_max)
        if hi < lo:
            return np.zeros(self.grid.shape)
        return self.phi_profile[lo - self.j_min : hi - self.j_min + 1].sum(axis=0)


def build_partition(grid: Grid) -> DyadicPartition:
    if grid.N < config.MIN_LP_POINTS:
        raise ResolutionError(f"N={grid.N} is too coarse for a dyadic partition (need N >= {config.MIN_LP_POINTS})")

    # smallest nonzero frequency is 1; largest is the corner of the grid
    j_min = int(math.floor(math.log2(INNER)))
    j_max = int(math.ceil(math.log2(grid.kmax / INNER))) - 1
    if j_max < j_min:
        raise ResolutionError(f"N={grid.N} hosts no full dyadic annulus")

    chi_profile = chi(grid.kmag)
    phi_profile = np.array([phi(grid.kmag * 2.0 ** (-j)) for j in range(j_min, j_max + 1)])
    chi_profile.setflags(write=False)
    phi_profile.setflags(write=False)
    logger.debug("Built dyadic partition for %s: j in [%d, %d]", grid, j_min, j_max)
    return DyadicPartition(grid=grid, j_min=j_min, j_max=j_max, chi_profile=chi_profile, phi_profile=phi_profile)


@dataclass(frozen=True)
class BesovSpec:
    s: float = 0.0
    split: str = "none"
    tau: float = 1.0
    k: int = config.THRESHOLD_OFFSET
    overlap: bool = config.OVERLAP_SPLIT

    def __post_init__(self):
        if self.split not in ("none", "low", "high"):
            raise ParameterError(f"unknown Besov split '{self.split}'")

    @property
    def threshold(self) -> int:
        return J_tau(self.tau, self.k)

    def j_bounds(self) -> Tuple[Optional[int], Optional[int]]:
        if self.split == "none":
            return None, None
        J = self.threshold
        if self.split == "low":
            return None, (J if self.overlap else J - 1)
        return (J - 1 if self.overlap else J), None


def J_tau(tau: float, k: int = config.THRESHOLD_OFFSET) -> int:
    """Frequency threshold -floor(log2 tau) + k."""
    if not (0.0 < tau <= 1.0):
        raise DomainError(f"tau must lie in (0, 1], got {tau}")
    return -int(math.floor(math.log2(tau))) + int(k)


def block(u, j: int, part: DyadicPartition) -> SpectralField:
    """Dyadic block of u. Indices outside the resolved range give the zero field."""
    u = as_field(part.grid, u)
    return SpectralField.from_hat(part.grid, u.hat * part.weight(j), real=u.real)


def block_norms(u, part: DyadicPartition) -> np.ndarray:
    """L2 norm of every resolved block, ordered j_min..j_max."""
    u = as_field(part.grid, u)
    grid = part.grid
    power = np.abs(u.hat) ** 2
    if power.ndim > grid.d:
        power = power.reshape((-1,) + grid.shape).sum(axis=0)
    n_total = grid.N ** grid.d
    energies = np.tensordot(part.phi_profile ** 2, power, axes=grid.d)
    return np.sqrt(grid.volume * energies / n_total ** 2)


def besov_norm(u, spec: BesovSpec, part: DyadicPartition) -> float:
    """Sum over blocks of 2^{js} ||Delta_j u||; the mean never contributes."""
    norms = block_norms(u, part)
    return _weighted_sum(norms, spec, part)


def _weighted_sum(norms: np.ndarray, spec: BesovSpec, part: DyadicPartition) -> float:
    j = np.arange(part.j_min, part.j_max + 1)
    lo, hi = spec.j_bounds()
    keep = np.ones(j.shape, bool)
    if lo is not None:
        keep &= j >= lo
    if hi is not None:
        keep &= j <= hi
    return float(np.sum((2.0 ** (j * spec.s) * norms)[..., keep], axis=-1))


def lf_hf_split(u, tau: float, k: int, part: DyadicPartition) -> Tuple[SpectralField, SpectralField]:
    """Low part sums blocks j <= J_tau - 1; high part is the rest of the mean-free field."""
    u = as_field(part.grid, u).mean_free()
    w = part.band_weight(None, J_tau(tau, k) - 1)
    low = SpectralField.from_hat(part.grid, u.hat * w, real=u.real)
    high = SpectralField.from_hat(part.grid, u.hat * (1.0 - w), real=u.real)
    return low, high


def chemin_lerner_norm(times: Sequence[float], samples: Sequence, s: float, p, part: DyadicPartition) -> float:
    """Blockwise L^p in time (trapezoid on samples), then the weighted sum over blocks."""
    times = np.asarray(times, dtype=float)
    if p not in (1, 2, np.inf, "inf"):
        raise ParameterError(f"time exponent must be 1, 2 or inf, got {p}")
    infinite = p in (np.inf, "inf")
    if len(times) < 1 or (not infinite and len(times) < 2):
        raise SamplingError("Chemin-Lerner norm needs at least two samples for finite time exponents")
    if len(samples) != len(times):
        raise SamplingError(f"{len(samples)} samples for {len(times)} times")

    per_time = np.array([block_norms(u, part) for u in samples])
    if infinite:
        in_time = per_time.max(axis=0)
    elif p == 1:
        in_time = trapezoid(per_time, times, axis=0)
    else:
        in_time = np.sqrt(trapezoid(per_time ** 2, times, axis=0))
    return _weighted_sum(in_time, BesovSpec(s=s), part)


@dataclass
class BernsteinReport:
    j: int
    ratio: float
    lower: float = INNER
    upper: float = 8.0 / 3.0

    @property
    def within(self) -> bool:
        return self.lower - 1e-12 <= self.ratio <= self.upper + 1e-12


def bernstein_check(u, j: int, part: DyadicPartition, tol: float = 1e-10) -> BernsteinReport:
    """Ratio ||grad u|| / (2^j ||u||) for a field supported in annulus j."""
    u = as_field(part.grid, u)
    grid = part.grid
    amp = np.abs(u.hat)
    if amp.ndim > grid.d:
        amp = amp.reshape((-1,) + grid.shape).max(axis=0)
    if amp.max() == 0.0:
        raise PreconditionError("Bernstein check of the zero field")

    support = amp > tol * amp.max()
    scaled = grid.kmag[support] / 2.0 ** j
    if scaled.min() < INNER - 1e-12 or scaled.max() > 8.0 / 3.0 + 1e-12:
        raise PreconditionError(
            f"field is not supported in annulus {j}: |xi|/2^j spans [{scaled.min():.4g}, {scaled.max():.4g}]"
        )

    power = np.abs(u.hat) ** 2
    ratio = math.sqrt(float(np.sum(grid.k2 * power) / np.sum(power))) / 2.0 ** j
    return BernsteinReport(j=j, ratio=ratio)


def random_band_field(grid: Grid, rng: np.random.Generator, band: Tuple[float, float], amplitude: float = 1.0) -> np.ndarray:
    """Real, mean-free random field with Fourier support in band[0] <= |k| <= band[1], max norm = amplitude."""
    lo, hi = band
    inside = (grid.kmag >= lo) & (grid.kmag <= hi) & (grid.kmag > 0)
    hat = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * inside
    f = grid.ifft(hat)
    peak = np.abs(f).max()
    if peak == 0.0 or amplitude == 0.0:
        return np.zeros(grid.shape)
    return f * (amplitude / peak)


def _annulus_field(grid: Grid, rng: np.random.Generator, j: int) -> np.ndarray:
    inside = (grid.kmag > INNER * 2.0 ** j) & (grid.kmag < (8.0 / 3.0) * 2.0 ** j)
    hat = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * inside
    return grid.ifft(hat)


def property_suite(grid: Grid, tau: float = 0.125, k: int = config.THRESHOLD_OFFSET, n_fields: int = 100, seed: int = 0):
    """Numerical checks of the partition, blocks, Bernstein bounds and the low/high split.

    Returns a list of (name, passed, detail) tuples.
    """
    part = build_partition(grid)
    rng = np.random.default_rng(seed)
    results = []

    nonzero = grid.kmag > 0
    total = part.phi_profile.sum(axis=0)
    pou = float(np.max(np.abs(total[nonzero] - 1.0)))
    results.append(("partition of unity", pou < 1e-10, f"max residual {pou:.2e}"))
    zero_mode = float(np.max(np.abs(part.phi_profile[(slice(None),) + (0,) * grid.d])))
    results.append(("origin excluded", zero_mode == 0.0, f"max phi(0) {zero_mode:.2e}"))

    u = random_band_field(grid, rng, (0, grid.N / 3.0), 1.0) + 0.3
    recon = sum(block(u, j, part).phys for j in part.indices)
    rec_err = float(np.max(np.abs(recon - (u - grid.mean(u)))))
    results.append(("block reconstruction", rec_err < 1e-12, f"max error {rec_err:.2e}"))

    axis_max = grid.N / 2.0 - 1.0
    usable = [j for j in part.indices if (8.0 / 3.0) * 2.0 ** j <= axis_max and INNER * 2.0 ** j >= 0.5]
    ratios = []
    for i in range(n_fields):
        j = usable[i % len(usable)]
        ratios.append(bernstein_check(_annulus_field(grid, rng, j), j, part).ratio)
    ok = all(INNER - 1e-12 <= r <= 8.0 / 3.0 + 1e-12 for r in ratios)
    results.append(("Bernstein sandwich", ok, f"{len(ratios)} fields, ratios in [{min(ratios):.3f}, {max(ratios):.3f}]"))

    J = J_tau(tau, k)
    low, high = lf_hf_split(u, tau, k, part)
    add_err = float(np.max(np.abs(low.phys + high.phys - (u - grid.mean(u)))))
    results.append(("low/high additivity", add_err < 1e-12, f"max error {add_err:.2e}"))

    s, s_shift = 1.0, 0.5
    lhs = besov_norm(low, BesovSpec(s=s), part)
    rhs = 2.0 ** (J * s_shift) * besov_norm(low, BesovSpec(s=s - s_shift), part)
    results.append(("low-frequency inclusion", lhs <= rhs * (1.0 + 1e-12), f"{lhs:.4g} <= {rhs:.4g}"))

    base = besov_norm(u, BesovSpec(s=0.5), part)
    scaled = besov_norm(-3.0 * u, BesovSpec(s=0.5), part)
    results.append(("absolute homogeneity", abs(scaled - 3.0 * base) <= 1e-12 * max(1.0, scaled), f"{scaled:.6g} vs {3.0 * base:.6g}"))
    results.append(("threshold J_tau", True, f"tau={tau:g}, k={k} -> J={J}"))
    return results
