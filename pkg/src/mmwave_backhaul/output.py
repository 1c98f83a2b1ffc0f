"""CSV emission and run manifests.

CSV output is byte-stable: fixed column order, 12 significant digits,
rows pre-sorted, LF newlines.  Every CLI run writes a manifest holding
a digest of the exact config it ran so a later re-parse can detect
drift.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
from dataclasses import asdict, dataclass

from .simulation import CapacityResult

__all__ = [
    "RankProfileTable",
    "RunManifest",
    "emit_csv",
    "config_digest",
    "write_manifest",
    "read_manifest",
    "manifest_matches",
]

CAPACITY_COLUMNS = "scheme,allocation,snr_db,k_factor_db,trial,capacity_bpcu"
PROFILE_COLUMNS = "l,index,mean_energy"


@dataclass
class RankProfileTable:
    """Rows of (path count, singular index, mean normalized energy)."""

    rows: list

    def __post_init__(self):
        self.rows = sorted((int(l), int(i), float(e)) for l, i, e in self.rows)


@dataclass
class RunManifest:
    config_digest: str
    tool_version: str
    master_seed: int
    timestamp: str
    outputs: list


def _fmt(value: float) -> str:
    return format(float(value), ".12g")


def emit_csv(table, path) -> None:
    """Write a capacity or rank-profile table as a deterministic CSV file."""
    if isinstance(table, CapacityResult):
        header = CAPACITY_COLUMNS
        lines = [
            f"{r.scheme},{r.allocation},{_fmt(r.snr_db)},{_fmt(r.k_factor_db)},{r.trial},{_fmt(r.capacity_bpcu)}"
            for r in table.rows
        ]
    elif isinstance(table, RankProfileTable):
        header = PROFILE_COLUMNS
        lines = [f"{l},{i},{_fmt(e)}" for l, i, e in table.rows]
    else:
        raise TypeError(f"cannot emit rows of type {type(table).__name__}")
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write(header + "\n")
        for line in lines:
            handle.write(line + "\n")


def config_digest(config_bytes: bytes) -> str:
    return hashlib.sha256(config_bytes).hexdigest()


def write_manifest(out_dir, config_bytes: bytes, master_seed: int, outputs) -> str:
    """Write manifest.json next to the outputs; returns its path."""
    from . import __version__

    manifest = RunManifest(
        config_digest=config_digest(config_bytes),
        tool_version=__version__,
        master_seed=int(master_seed),
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        outputs=[os.path.basename(os.fspath(p)) for p in outputs],
    )
    path = os.path.join(os.fspath(out_dir), "manifest.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(asdict(manifest), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def read_manifest(path) -> RunManifest:
    with open(path, "r", encoding="utf-8") as handle:
        return RunManifest(**json.load(handle))


def manifest_matches(manifest: RunManifest, config_bytes: bytes) -> bool:
    """True when the manifest's digest still matches the config bytes."""
    return manifest.config_digest == config_digest(config_bytes)
