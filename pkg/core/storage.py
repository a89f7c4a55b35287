"""
Output directories, manifests, CSV tables, field snapshots and sweep reports.
"""

import json
import logging
import math
import os
import struct
from contextlib import contextmanager
from datetime import datetime
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import pytz

import config
from core.models import MixtureState, PMState

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"RLXF"
SNAPSHOT_VERSION = 1
SNAPSHOT_HEADER_SIZE = 64
_HEADER = struct.Struct("<4sIIIIQ")


def _jsonable(value):
    """Plain JSON types, with non-finite floats as null."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def run_directory(base: str, kind: str, config_hash: str) -> str:
    path = os.path.join(base, f"{kind}-{config_hash}")
    os.makedirs(path, exist_ok=True)
    return path


@contextmanager
def attach_log(directory: str):
    """Mirror log records into <directory>/run.log while the block runs."""
    handler = logging.FileHandler(os.path.join(directory, "run.log"), encoding="utf-8")
    handler.setFormatter(logging.Formatter(config.LOG_FORMAT))
    root = logging.getLogger()
    root.addHandler(handler)
    try:
        yield handler
    finally:
        root.removeHandler(handler)
        handler.close()


def write_manifest(directory: str, echo: dict, config_hash: str, seed: Optional[int], extra: Optional[dict] = None) -> str:
    manifest = {
        "config": echo,
        "config_hash": config_hash,
        "version": config.VERSION,
        "seed": seed,
        "created_utc": datetime.now(pytz.UTC).isoformat(),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(manifest), f, indent=2, sort_keys=True, allow_nan=False)
    return path


def write_table(frame: pd.DataFrame, path: str, config_hash: str) -> str:
    """CSV with a leading '# config_hash=...' line and full float precision."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config_hash={config_hash}\n")
        frame.to_csv(f, index=False, float_format=config.CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def read_table(path: str) -> Tuple[str, pd.DataFrame]:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
        if not first.startswith("# config_hash="):
            raise ValueError(f"{path} has no config hash line")
        frame = pd.read_csv(f)
    return first.split("=", 1)[1], frame


def snapshot_arrays(state) -> List[np.ndarray]:
    """Fields of a state in a fixed order; vector velocities contribute one array per component."""
    if isinstance(state, PMState):
        return [state.beta_plus, state.varrho_plus, state.varrho_minus]
    if isinstance(state, MixtureState):
        return [state.alpha_plus, state.rho_plus, state.rho_minus] + list(state.u)
    raise TypeError(f"no snapshot layout for {type(state).__name__}")


def write_snapshot(path: str, arrays: List[np.ndarray], d: int, N: int, sample_index: int) -> str:
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, d, N, len(arrays), sample_index)
    body = np.stack([np.asarray(a, dtype="<f8") for a in arrays])
    with open(path, "wb") as f:
        f.write(header.ljust(SNAPSHOT_HEADER_SIZE, b"\0"))
        f.write(np.ascontiguousarray(body).tobytes(order="C"))
    return path


def read_snapshot(path: str) -> Tuple[Dict[str, int], np.ndarray]:
    with open(path, "rb") as f:
        raw = f.read()
    magic, version, d, N, count, index = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a snapshot file")
    data = np.frombuffer(raw[SNAPSHOT_HEADER_SIZE:], dtype="<f8").reshape((count,) + (N,) * d)
    return {"version": version, "d": d, "N": N, "fields": count, "sample_index": index}, data


def write_snapshots(directory: str, traj, config_hash: str) -> List[str]:
    paths = []
    for i, state in enumerate(traj.states):
        name = f"snapshot-{config_hash}-{i:05d}.bin"
        paths.append(write_snapshot(os.path.join(directory, name), snapshot_arrays(state), traj.grid.d, traj.grid.N, i))
    logger.info("Wrote %d snapshots to %s", len(paths), directory)
    return paths


def write_sweep_report(directory: str, report: dict, echo: dict, config_hash: str) -> str:
    payload = dict(report)
    payload["config"] = echo
    payload["config_hash"] = config_hash
    path = os.path.join(directory, "report.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True, allow_nan=False)
    return path


def write_workbook(path: str, report: dict) -> str:
    """Summary / Errors / Fit sheets of a sweep report."""
    summary = pd.DataFrame(
        [
            {"kind": report["kind"], "partial": report["partial"], "failed": ", ".join(report["failed"])},
        ]
    )
    errors = pd.DataFrame(report["table"])
    fits = []
    for name, fit in [("main", report.get("fit"))] + sorted(report.get("extra_fits", {}).items()):
        if fit is None:
            continue
        fits.append(
            {
                "fit": name,
                "slope": fit["slope"],
                "intercept": fit["intercept"],
                "r_squared": fit["r_squared"],
                "excluded": ", ".join(f"{v:g}" for v in fit["excluded"]),
            }
        )
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        summary.to_excel(writer, sheet_name="Summary", index=False)
        errors.to_excel(writer, sheet_name="Errors", index=False)
        pd.DataFrame(fits, columns=["fit", "slope", "intercept", "r_squared", "excluded"]).to_excel(
            writer, sheet_name="Fit", index=False
        )
    return path
