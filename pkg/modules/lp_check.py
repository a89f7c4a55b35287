"""Littlewood-Paley property suite on a chosen grid."""

import logging

from core.lp import Grid, J_tau, build_partition, property_suite
from core.tables import TableGenerator

logger = logging.getLogger(__name__)


def cmd_lp_check(d: int = 1, N: int = 64, tau: float = 0.125, k: int = -2, fields: int = 100, seed: int = 0) -> int:
    grid = Grid(d, N)
    part = build_partition(grid)
    print(f"threshold J_tau = {J_tau(tau, k)} (tau={tau:g}, k={k}); blocks j = {part.j_min}..{part.j_max}")

    results = property_suite(grid, tau=tau, k=k, n_fields=fields, seed=seed)
    table = TableGenerator(f"Littlewood-Paley checks on {grid}")
    table.set_headers(["check", "status", "detail"])
    table.add_rows([[name, passed, detail] for name, passed, detail in results])
    print(table.generate_terminal_table())

    failed = [name for name, passed, _ in results if not passed]
    if failed:
        logger.error("Failed checks: %s", ", ".join(failed))
        return 1
    return 0


def register_commands(registry):
    registry.register(
        "lp-check",
        cmd_lp_check,
        "Partition of unity, block reconstruction, Bernstein bounds and the low/high split on a grid",
    )
