"""Task records and answer scoring."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

SCORERS = ("exact_match", "numeric_match", "contains", "external")
# normalization rules version; bump when any rule below changes
NORMALIZATION_VERSION = 1

_WS = re.compile(r"\s+")
_TERMINAL = ".,;:!?"
_NUMBER = re.compile(r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?|[-+]?\.\d+")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    prompt: str
    reference: str | None = None
    scorer: str = "exact_match"
    metadata: dict[str, Any] = field(default_factory=dict)
    required_capabilities: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.scorer not in SCORERS:
            raise DatasetError(f"{self.task_id}: unknown scorer {self.scorer!r}")
        if self.scorer != "external" and (self.reference is None or self.reference == ""):
            raise DatasetError(f"{self.task_id}: scorer {self.scorer} needs a reference")
        if not self.prompt:
            raise DatasetError(f"{self.task_id}: empty prompt")


def load_dataset(source: str | Path | Iterable[str]) -> list[TaskRecord]:
    """Read a JSON-lines dataset (one task per line)."""
    lines = Path(source).read_text().splitlines() if isinstance(source, (str, Path)) else source
    records = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {n}: {exc}") from exc
        try:
            records.append(TaskRecord(
                task_id=str(doc.get("task_id", n)),
                prompt=doc["prompt"],
                reference=None if doc.get("reference") is None else str(doc["reference"]),
                scorer=doc.get("scorer", "exact_match"),
                metadata=doc.get("metadata", {}),
                required_capabilities=tuple(doc.get("required_capabilities", ())),
            ))
        except KeyError as exc:
            raise DatasetError(f"line {n}: missing field {exc}") from exc
    if not records:
        raise DatasetError("dataset is empty")
    ids = [r.task_id for r in records]
    if len(set(ids)) != len(ids):
        raise DatasetError("task_id values must be unique")
    return records


def normalize(text: str) -> str:
    text = _WS.sub(" ", text.strip())
    return text.rstrip(_TERMINAL).rstrip()


def last_number(text: str) -> float | None:
    found = _NUMBER.findall(text)
    if not found:
        return None
    return float(found[-1].replace(",", ""))


def score_with_reason(final_text: str, record: TaskRecord) -> tuple[bool | None, str]:
    if record.scorer == "external":
        return None, "external scorer"
    ref = record.reference or ""
    if record.scorer == "exact_match":
        ok = normalize(final_text) == normalize(ref)
        return ok, "" if ok else "exact mismatch"
    if record.scorer == "contains":
        ok = normalize(ref) in normalize(final_text)
        return ok, "" if ok else "reference not contained"
    got, want = last_number(final_text), last_number(ref)
    if want is None:
        return False, "reference has no number"
    if got is None:
        return False, "no number in answer"
    ok = math.isclose(got, want, rel_tol=1e-6, abs_tol=1e-12)
    return ok, "" if ok else f"numeric mismatch ({got} != {want})"


def score_answer(final_text: str, record: TaskRecord) -> bool:
    return bool(score_with_reason(final_text, record)[0])
