"""Eigenvalue landscape and overdamping tables of the linearized symbol."""

import hashlib
import json
import logging
import math
import os

import numpy as np

import config as defaults
from core import storage
from core.errors import ParameterError
from core.spectral import eigen_landscape, medium_regime_constant, numeric_overdamping_argmax, overdamping_table
from core.tables import TableGenerator

logger = logging.getLogger(__name__)

MAX_RE_TOL = 1e-12


def cmd_spectrum(
    epsilon: float,
    tau: float,
    xi_min: float = 1e-2,
    xi_max: float = 1e3,
    xi_count: int = 61,
    gamma_gap: float = 1.0,
    overdamping_xi: float = 1.0,
    frictions: int = 1000,
    ratio_threshold: float = defaults.RATIO_THRESHOLD,
    out: str = defaults.OUTPUT_DIR,
) -> int:
    if not (epsilon > 0 and tau > 0 and epsilon <= tau):
        raise ParameterError(f"need 0 < epsilon <= tau, got epsilon={epsilon}, tau={tau}")
    if not (0 < xi_min < xi_max) or xi_count < 2:
        raise ParameterError("xi grid needs 0 < xi_min < xi_max and at least 2 points")
    if not overdamping_xi > 0 or frictions < 2:
        raise ParameterError("overdamping table needs xi > 0 and at least 2 frictions")

    args = {
        "epsilon": epsilon,
        "tau": tau,
        "xi_min": xi_min,
        "xi_max": xi_max,
        "xi_count": xi_count,
        "gamma_gap": gamma_gap,
        "overdamping_xi": overdamping_xi,
        "frictions": frictions,
        "ratio_threshold": ratio_threshold,
    }
    canonical = json.dumps(args, sort_keys=True, separators=(",", ":"))
    config_hash = hashlib.sha1(canonical.encode("utf-8")).hexdigest()[:10]
    directory = storage.run_directory(out, "spectrum", config_hash)

    xis = np.concatenate([[0.0], np.logspace(math.log10(xi_min), math.log10(xi_max), xi_count)])
    landscape = eigen_landscape([epsilon], [tau], xis, gamma_gap=gamma_gap, ratio_threshold=ratio_threshold)
    _, _, grid = numeric_overdamping_argmax(overdamping_xi, n=frictions)
    curve = overdamping_table(overdamping_xi, grid)

    storage.write_manifest(directory, args, config_hash, None, extra={"command": "spectrum"})
    storage.write_table(landscape, os.path.join(directory, f"landscape-{config_hash}.csv"), config_hash)
    storage.write_table(curve, os.path.join(directory, f"overdamping-{config_hash}.csv"), config_hash)

    peak = curve[curve["peak"]].iloc[0]
    worst = float(landscape["max_re"].max())
    summary = TableGenerator(f"spectrum eps={epsilon:g} tau={tau:g}")
    summary.set_headers(["quantity", "value"])
    summary.add_rows(
        [
            ["frequencies", len(xis)],
            ["max Re(lambda)", worst],
            ["medium-regime constant", medium_regime_constant(landscape)],
            ["peak friction", float(peak["friction"])],
            ["peak decay rate", float(peak["decay_rate"])],
        ]
    )
    print(summary.generate_terminal_table())
    logger.info("Outputs in %s", directory)

    if worst > MAX_RE_TOL:
        logger.error("Eigenvalue with positive real part %.3e found", worst)
        return 1
    return 0


def register_commands(registry):
    registry.register(
        "spectrum",
        cmd_spectrum,
        "Eigenvalue landscape over a frequency grid and the damped-Euler overdamping table",
    )
