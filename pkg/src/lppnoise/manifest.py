"""Atomic, byte-stable experiment outputs.

CSV files are the reproducibility contract: same config and seed must
give identical bytes regardless of scheduling.  Floats are rendered
with 12 significant digits and no locale formatting; files are written
to a temporary name and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone

__all__ = [
    "format_cell",
    "write_csv_atomic",
    "write_json_atomic",
    "ExperimentRecord",
    "RunManifest",
]


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "%.12g" % value
    if value is None:
        return ""
    return str(value)


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv_atomic(path: str, header: list[str], rows) -> int:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    count = 0
    for row in rows:
        writer.writerow([format_cell(c) for c in row])
        count += 1
    _atomic_write_text(path, buf.getvalue())
    return count


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        try:
            return obj.item()
        except Exception:
            return str(obj)
    return obj


def write_json_atomic(path: str, obj) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True,
                      allow_nan=True) + "\n"
    _atomic_write_text(path, text)


@dataclass
class ExperimentRecord:
    name: str
    params: dict
    outputs: list[str] = field(default_factory=list)
    assertions: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.assertions.append({"name": name, "passed": bool(passed),
                                "detail": detail})


@dataclass
class RunManifest:
    """Everything needed to reproduce a run's CSVs byte for byte
    (timestamps are informational only)."""

    tool_version: str
    master_seed: int
    config_echo: dict
    started_at: str = ""
    finished_at: str = ""
    experiments: list[ExperimentRecord] = field(default_factory=list)

    def start(self) -> None:
        self.started_at = datetime.now(timezone.utc).isoformat()

    def finish(self) -> None:
        self.finished_at = datetime.now(timezone.utc).isoformat()

    @property
    def all_passed(self) -> bool:
        return all(rec.passed for rec in self.experiments)

    def as_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "master_seed": self.master_seed,
            "config_echo": self.config_echo,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "experiments": [
                {"name": r.name, "params": r.params, "outputs": r.outputs,
                 "passed": r.passed, "assertions": r.assertions}
                for r in self.experiments
            ],
        }

    def write(self, path: str) -> None:
        write_json_atomic(path, self.as_dict())
