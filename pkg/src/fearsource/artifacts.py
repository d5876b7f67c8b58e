"""Deterministic output files: header metadata, checksums, and the run manifest.

Every emitted file starts with a comment (CSV) or embedded meta object
(JSON) carrying the tool version, seed, and config hash.  Nothing here
writes wall-clock state, so reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pandas as pd

from . import __version__


def config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def output_header(seed: int, cfg_hash: str) -> str:
    return f"fearsource {__version__} seed={seed} config={cfg_hash}"


def write_csv(path: Path, frame: pd.DataFrame, header: str, float_format: str = "%.10g") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n")
        frame.to_csv(fh, index=False, float_format=float_format, lineterminator="\n")


def write_matrix_csv(path: Path, names: list[str], matrix, header: str) -> None:
    frame = pd.DataFrame(matrix, index=names, columns=names)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n")
        frame.to_csv(fh, index_label="series", float_format="%.10g", lineterminator="\n")


def write_json(path: Path, payload: dict, seed: int, cfg_hash: str) -> None:
    body = {"_meta": {"tool": f"fearsource {__version__}", "seed": seed, "config": cfg_hash}}
    body.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_text(path: Path, text: str, header: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n")
        fh.write(text)


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Manifest:
    """Per-stage record of emitted files and their checksums."""

    def __init__(self, seed: int, cfg_hash: str):
        self.seed = seed
        self.cfg_hash = cfg_hash
        self.stages: dict[str, dict] = {}

    def record(self, stage: str, status: str, files: list[Path] | None = None, note: str = "") -> None:
        entry: dict = {"status": status}
        if note:
            entry["note"] = note
        if files:
            entry["files"] = {f.name: sha256_file(f) for f in sorted(files)}
        self.stages[stage] = entry

    def ok(self) -> bool:
        return all(s["status"] in ("ok", "skipped") for s in self.stages.values())

    def write(self, path: Path) -> None:
        payload = {
            "tool": f"fearsource {__version__}",
            "seed": self.seed,
            "config": self.cfg_hash,
            "stages": self.stages,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
