"""Convergence sweeps over the relaxation times."""

import logging
import os
from typing import Optional

from core import settings, storage
from core.errors import SweepError
from core.experiments import combined_relaxation_sweep, pressure_relaxation_sweep, time_relaxation_sweep
from core.tables import TableGenerator

logger = logging.getLogger(__name__)

SWEEPS = {
    "pressure": pressure_relaxation_sweep,
    "time": time_relaxation_sweep,
    "combined": combined_relaxation_sweep,
}


def _summary(report: dict) -> TableGenerator:
    table = TableGenerator(f"{report['kind']} sweep")
    table.set_headers(["fit", "slope", "r_squared", "excluded"])
    fits = [("main", report["fit"])] + sorted(report["extra_fits"].items())
    for name, fit in fits:
        if fit is None:
            table.add_row([name, "n/a", "n/a", ""])
        else:
            table.add_row([name, fit["slope"], fit["r_squared"], ", ".join(f"{v:g}" for v in fit["excluded"])])
    return table


def run_sweep(
    kind: str,
    config: str,
    out: Optional[str] = None,
    workers: Optional[int] = None,
    seed: Optional[int] = None,
) -> int:
    lab_cfg = settings.apply_overrides(settings.load_config(config), out, workers, seed)
    spec = settings.to_sweep_spec(lab_cfg)
    config_hash = settings.config_hash(lab_cfg)
    directory = storage.run_directory(lab_cfg.output.directory, f"sweep-{kind}", config_hash)

    with storage.attach_log(directory):
        status = 0
        try:
            report = SWEEPS[kind](spec, workers=lab_cfg.output.workers)
        except SweepError as e:
            logger.error("%s", e)
            if e.report is None:
                raise
            report, status = e.report, 1

        payload = report.to_dict()
        echo = lab_cfg.model_dump(mode="json")
        storage.write_manifest(directory, echo, config_hash, lab_cfg.initial.seed, extra={"command": f"sweep-{kind}"})
        storage.write_sweep_report(directory, payload, echo, config_hash)
        storage.write_table(report.table, os.path.join(directory, f"errors-{config_hash}.csv"), config_hash)
        summary = _summary(payload)
        summary.save_to_file(os.path.join(directory, f"summary-{config_hash}.md"))
        if lab_cfg.output.excel:
            storage.write_workbook(os.path.join(directory, f"sweep-{config_hash}.xlsx"), payload)

    print(TableGenerator.from_frame(report.table, "errors").generate_terminal_table())
    print(summary.generate_terminal_table())
    if report.failed:
        print("failed runs: " + ", ".join(report.failed))
    logger.info("Outputs in %s", directory)
    return status


def cmd_sweep_pressure(config: str, out: Optional[str] = None, workers: Optional[int] = None, seed: Optional[int] = None) -> int:
    return run_sweep("pressure", config, out, workers, seed)


def cmd_sweep_time(config: str, out: Optional[str] = None, workers: Optional[int] = None, seed: Optional[int] = None) -> int:
    return run_sweep("time", config, out, workers, seed)


def cmd_sweep_combined(config: str, out: Optional[str] = None, workers: Optional[int] = None, seed: Optional[int] = None) -> int:
    return run_sweep("combined", config, out, workers, seed)


def register_commands(registry):
    registry.register(
        "sweep-pressure",
        cmd_sweep_pressure,
        "BN against Kapila over epsilon; fits the error rate in epsilon",
    )
    registry.register(
        "sweep-time",
        cmd_sweep_time,
        "Kapila in diffusive variables against porous media over tau",
    )
    registry.register(
        "sweep-combined",
        cmd_sweep_combined,
        "BN in diffusive variables against porous media with epsilon tied to tau",
    )
