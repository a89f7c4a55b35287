"""
JSON run/sweep configuration: schema, loading, overrides and hashing.
"""

import hashlib
import json
import logging
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

import config
from core.errors import InvalidConfigError
from core.experiments import SweepSpec
from core.lp import Grid
from core.models import Params, PressureLaw
from core.solver import InitialCondition, RunConfig

logger = logging.getLogger(__name__)

# sections that do not change results and stay out of the hash
_UNHASHED = ("output",)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PhysicsSection(_Section):
    epsilon: float
    tau: float
    A_plus: float
    gamma_plus: float
    A_minus: float
    gamma_minus: float
    alpha_bar_plus: float
    rho_bar_plus: float


class GridSection(_Section):
    d: Literal[1, 2] = 1
    N: int = 64
    dealias: bool = True


class TimeSection(_Section):
    t_end: float = 1.0
    dt: Optional[float] = None
    sample_every: int = 10
    n_samples: Optional[int] = None
    cfl: float = config.CFL


class InitialSection(_Section):
    seed: int = 0
    amplitude: float = 1e-2
    band: Tuple[float, float] = (1.0, 4.0)
    well_prepared: bool = True
    gap_amplitude: float = 0.0


class NumericsSection(_Section):
    k: int = config.THRESHOLD_OFFSET
    overlap: bool = config.OVERLAP_SPLIT


class SyntheticSection(_Section):
    constant: float
    exponent: float


class SweepSection(_Section):
    vary: Literal["epsilon", "tau"]
    values: List[float] = Field(min_length=1)
    couple: Optional[Literal["equal", "fraction"]] = None
    fraction: float = 0.1
    s_end: float = 0.5
    gap_scaling: Literal["sqrt", "zero"] = "sqrt"
    synthetic: Optional[SyntheticSection] = None


class OutputSection(_Section):
    directory: str = config.OUTPUT_DIR
    workers: int = Field(default=config.WORKERS, ge=1)
    snapshots: bool = False
    excel: bool = False


class LabConfig(_Section):
    system: Literal["BN", "K", "KTAU", "PM"]
    physics: PhysicsSection
    grid: GridSection = GridSection()
    time: TimeSection = TimeSection()
    initial: InitialSection = InitialSection()
    numerics: NumericsSection = NumericsSection()
    sweep: Optional[SweepSection] = None
    output: OutputSection = OutputSection()


def _describe(error: ValidationError) -> InvalidConfigError:
    first = error.errors()[0]
    key = ".".join(str(part) for part in first["loc"]) or "<root>"
    value = first.get("input")
    return InvalidConfigError(f"invalid config at '{key}': {first['msg']} (got {value!r})", key=key)


def parse_config(data: dict) -> LabConfig:
    try:
        return LabConfig.model_validate(data)
    except ValidationError as e:
        raise _describe(e) from None


def load_config(path: str) -> LabConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise InvalidConfigError(f"config file not found: {path}", key=path) from None
    except json.JSONDecodeError as e:
        raise InvalidConfigError(f"config {path} is not valid JSON: {e}", key=path) from None
    cfg = parse_config(data)
    logger.debug("Loaded %s config from %s", cfg.system, path)
    return cfg


def apply_overrides(
    cfg: LabConfig,
    out: Optional[str] = None,
    workers: Optional[int] = None,
    seed: Optional[int] = None,
    snapshots: Optional[bool] = None,
) -> LabConfig:
    """Command-line flags win over the file."""
    output = {}
    if out is not None:
        output["directory"] = out
    if workers is not None:
        if workers < 1:
            raise InvalidConfigError(f"workers must be at least 1, got {workers}", key="workers")
        output["workers"] = workers
    if snapshots is not None:
        output["snapshots"] = snapshots
    update = {}
    if output:
        update["output"] = cfg.output.model_copy(update=output)
    if seed is not None:
        update["initial"] = cfg.initial.model_copy(update={"seed": seed})
    return cfg.model_copy(update=update) if update else cfg


def config_hash(cfg: LabConfig) -> str:
    """First 10 hex digits of SHA-1 over the canonical JSON of the result-defining sections."""
    payload = cfg.model_dump(mode="json", exclude=set(_UNHASHED))
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(canonical.encode("utf-8")).hexdigest()[:10]


def _params(cfg: LabConfig) -> Params:
    ph = cfg.physics
    return Params.build(
        epsilon=ph.epsilon,
        tau=ph.tau,
        law_plus=PressureLaw(ph.A_plus, ph.gamma_plus),
        law_minus=PressureLaw(ph.A_minus, ph.gamma_minus),
        alpha_bar_plus=ph.alpha_bar_plus,
        rho_bar_plus=ph.rho_bar_plus,
    )


def to_run_config(cfg: LabConfig) -> RunConfig:
    return RunConfig(
        system=cfg.system,
        params=_params(cfg),
        grid=Grid(cfg.grid.d, cfg.grid.N, cfg.grid.dealias),
        t_end=cfg.time.t_end,
        dt=cfg.time.dt,
        sample_every=cfg.time.sample_every,
        n_samples=cfg.time.n_samples,
        ic=InitialCondition(**cfg.initial.model_dump()),
        cfl=cfg.time.cfl,
    )


def to_sweep_spec(cfg: LabConfig) -> SweepSpec:
    if cfg.sweep is None:
        raise InvalidConfigError("sweep commands need a 'sweep' section", key="sweep")
    sw = cfg.sweep
    synthetic = None if sw.synthetic is None else (sw.synthetic.constant, sw.synthetic.exponent)
    return SweepSpec(
        base=to_run_config(cfg),
        vary=sw.vary,
        values=tuple(sw.values),
        couple=sw.couple,
        fraction=sw.fraction,
        s_end=sw.s_end,
        gap_scaling=sw.gap_scaling,
        synthetic=synthetic,
        k=cfg.numerics.k,
        overlap=cfg.numerics.overlap,
    )
