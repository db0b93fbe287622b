"""Incident-log records: streaming observations and revealed latents.

Logs are newline-delimited JSON, one record per time step, with fields
``t``, ``channels`` (outcome or null for missing), and an optional
``latent`` object carrying post-hoc revealed phase and task values.
Filtering ignores the latent fields; learning consumes them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .core import PlotModel
from .errors import InvalidRecordError, UnknownVertexError

MISSING = None


@dataclass(frozen=True, eq=False)
class ObservationRecord:
    """Channel outcomes at one time step; absent or null means missing."""

    t: int
    channels: Mapping[str, str | None] = field(default_factory=dict)
    latent_phase: str | None = None
    latent_tasks: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "channels", MappingProxyType(dict(self.channels)))
        object.__setattr__(self, "latent_tasks", MappingProxyType(dict(self.latent_tasks)))

    def outcome(self, channel: str) -> str | None:
        return self.channels.get(channel, MISSING)

    @property
    def has_latents(self) -> bool:
        return self.latent_phase is not None or bool(self.latent_tasks)


def check_record(record: ObservationRecord, model: PlotModel) -> None:
    """Reject outcomes outside the model's alphabets or unknown names."""
    for name, value in record.channels.items():
        try:
            alphabet = model.intensity_spec.channel(name).alphabet
        except KeyError:
            raise UnknownVertexError(f"t={record.t}: unknown channel {name!r}") from None
        if value is not MISSING and value not in alphabet:
            raise InvalidRecordError(
                f"t={record.t}: outcome {value!r} is not in channel {name!r} alphabet {list(alphabet)}")
    if record.latent_phase is not None and record.latent_phase not in model.phase_space.labels:
        raise InvalidRecordError(f"t={record.t}: unknown phase label {record.latent_phase!r}")
    for name, value in record.latent_tasks.items():
        try:
            alphabet = model.task_graph.alphabet(name)
        except KeyError:
            raise UnknownVertexError(f"t={record.t}: unknown task {name!r}") from None
        if value not in alphabet:
            raise InvalidRecordError(
                f"t={record.t}: state {value!r} is not in task {name!r} alphabet {list(alphabet)}")


def record_from_obj(obj) -> ObservationRecord:
    if not isinstance(obj, Mapping):
        raise InvalidRecordError(f"record must be an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - {"t", "channels", "latent"})
    if unknown:
        raise InvalidRecordError(f"record has unknown field(s) {unknown}")
    if "t" not in obj or isinstance(obj["t"], bool) or not isinstance(obj["t"], int):
        raise InvalidRecordError("record needs an integer field t")
    channels = obj.get("channels", {})
    if not isinstance(channels, Mapping):
        raise InvalidRecordError(f"t={obj['t']}: channels must be an object")
    latent_phase = None
    latent_tasks: dict[str, str] = {}
    if "latent" in obj:
        latent = obj["latent"]
        if not isinstance(latent, Mapping) or (set(latent) - {"phase", "tasks"}):
            raise InvalidRecordError(f"t={obj['t']}: latent takes only phase and tasks")
        latent_phase = latent.get("phase")
        latent_tasks = dict(latent.get("tasks", {}))
    return ObservationRecord(t=obj["t"], channels=dict(channels),
                             latent_phase=latent_phase, latent_tasks=latent_tasks)


def record_to_obj(record: ObservationRecord) -> dict:
    obj: dict = {"t": record.t, "channels": dict(record.channels)}
    if record.has_latents:
        latent: dict = {}
        if record.latent_phase is not None:
            latent["phase"] = record.latent_phase
        if record.latent_tasks:
            latent["tasks"] = dict(record.latent_tasks)
        obj["latent"] = latent
    return obj


def read_log(path: str | Path) -> list[ObservationRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidRecordError(f"{path}:{lineno}: not valid JSON: {exc}") from None
        records.append(record_from_obj(obj))
    records.sort(key=lambda r: r.t)
    return records


def write_log(records: Iterable[ObservationRecord], path: str | Path) -> None:
    lines = [json.dumps(record_to_obj(r), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
