"""Run manifests and invariant-suite reports."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable

PACKAGE_NAME = "isoradial-heat"


def tool_version() -> str:
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return "0+unknown"


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce a run; only ``timestamp`` varies between reruns."""

    command: str
    config_digest: str
    seed: int
    version: str = field(default_factory=tool_version)
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    error_bounds: dict[str, float] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    exit_code: int = 0

    def record_bound(self, name: str, value: float) -> None:
        previous = self.error_bounds.get(name, 0.0)
        self.error_bounds[name] = max(previous, float(value)) if math.isfinite(value) else math.inf

    def add_output(self, path: Path) -> None:
        self.outputs.append(Path(path).name)

    def as_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "version": self.version,
            "timestamp": self.timestamp,
            "error_bounds": {k: (v if math.isfinite(v) else None) for k, v in sorted(self.error_bounds.items())},
            "outputs": sorted(self.outputs),
            "exit_code": self.exit_code,
        }

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


@dataclass(frozen=True)
class CheckResult:
    """One invariant: the measured margin is nonnegative when it holds."""

    name: str
    passed: bool
    margin: float
    detail: str = ""


def write_check_report(results: Iterable[CheckResult], path: Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["invariant", "status", "margin", "detail"])
        for result in results:
            writer.writerow([result.name, "pass" if result.passed else "fail", repr(float(result.margin)), result.detail])
    return path


def write_json(data: dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path
