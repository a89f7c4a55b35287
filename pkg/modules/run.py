"""Single integration of one system from a JSON config."""

import logging
import os
from typing import Optional

from core import settings, storage
from core.display import RunDisplay
from core.errors import BlowUpError
from core.solver import integrate

logger = logging.getLogger(__name__)


def cmd_run(
    config: str,
    out: Optional[str] = None,
    workers: Optional[int] = None,
    seed: Optional[int] = None,
    snapshots: Optional[bool] = None,
) -> int:
    lab_cfg = settings.apply_overrides(settings.load_config(config), out, workers, seed, snapshots)
    run_cfg = settings.to_run_config(lab_cfg)
    config_hash = settings.config_hash(lab_cfg)
    directory = storage.run_directory(lab_cfg.output.directory, "run", config_hash)

    with storage.attach_log(directory):
        status, reason = 0, "completed"
        display = RunDisplay(f"{run_cfg.system}[{config_hash}]")
        try:
            traj = integrate(run_cfg, display=display)
        except BlowUpError as e:
            logger.error("Run blew up: %s", e)
            traj, status, reason = e.trajectory, 1, str(e)

        storage.write_manifest(
            directory,
            lab_cfg.model_dump(mode="json"),
            config_hash,
            lab_cfg.initial.seed,
            extra={"command": "run", "status": reason},
        )
        if traj is not None and len(traj) > 0:
            storage.write_table(traj.ledger, os.path.join(directory, f"ledger-{config_hash}.csv"), config_hash)
            if lab_cfg.output.snapshots:
                storage.write_snapshots(directory, traj, config_hash)
            first, last = traj.ledger.iloc[0], traj.ledger.iloc[-1]
            logger.info(
                "%s reached t=%.6g with %d samples; total mass drift %.3e",
                run_cfg.system,
                traj.times[-1],
                len(traj),
                abs(last["m_total"] - first["m_total"]),
            )
    logger.info("Outputs in %s", directory)
    return status


def register_commands(registry):
    registry.register(
        "run",
        cmd_run,
        "Integrate one system (BN, K, KTAU or PM) from a JSON config and write the ledger",
    )
