"""Run outputs: CSV fields, JSON documents and the run manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .problem import Case, case_to_dict

__all__ = [
    "config_hash",
    "write_field_csv",
    "read_field_csv",
    "write_json",
    "RunManifest",
    "prepare_out_dir",
    "OutputDirNotEmpty",
]


class OutputDirNotEmpty(Exception):
    pass


def config_hash(case: Case) -> str:
    """sha256 of the case as canonical JSON (sorted keys, no whitespace)."""
    text = json.dumps(case_to_dict(case), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def write_field_csv(path, values: np.ndarray, times: np.ndarray, nodes: np.ndarray) -> None:
    """Long format ``t,x,value`` with 17 significant digits and LF line endings."""
    values = np.asarray(values, dtype=float)
    lines = ["t,x,value"]
    for k, t in enumerate(times):
        for i, x in enumerate(nodes):
            lines.append(f"{t:.17g},{x:.17g},{values[k, i]:.17g}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode())


def read_field_csv(path, n_times: int, n_nodes: int) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != n_times * n_nodes:
        raise ValueError(f"{path}: expected {n_times * n_nodes} rows, found {data.shape[0]}")
    return data[:, 2].reshape(n_times, n_nodes)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, doc) -> None:
    Path(path).write_bytes((json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n").encode())


def prepare_out_dir(out, force: bool) -> Path:
    path = Path(out)
    if path.exists():
        if not path.is_dir():
            raise OutputDirNotEmpty(f"{path} exists and is not a directory")
        if any(path.iterdir()) and not force:
            raise OutputDirNotEmpty(f"{path} is not empty (use --force to overwrite)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    config_hash: str
    command: str
    outputs: list[str] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str | None = None

    def write(self, out_dir: Path) -> None:
        self.finished = _now()
        write_json(out_dir / "manifest.json", {
            "config_hash": self.config_hash, "command": self.command,
            "outputs": sorted(self.outputs + ["manifest.json"]),
            "timestamps": {"started": self.started, "finished": self.finished},
        })
