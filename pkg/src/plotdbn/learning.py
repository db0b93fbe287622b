"""Conjugate Dirichlet learning of CPT rows from completed incidents.

Every CPT row carries an independent Dirichlet; ancestral incident data and
designed row samples turn into per-row count vectors, so the posterior is
prior plus counts row by row and independence across tables survives the
update.  Non-ancestral incidents are rejected outright, never imputed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (CptCollection, IntensityCpt, PlotModel, TaskCpt,
                   TransitionParams, row_index)
from .errors import (ConfigurationError, InvalidRecordError,
                     NonAncestralDataError, SecureTableError,
                     UnknownVertexError)
from .records import MISSING, ObservationRecord, check_record, record_from_obj, record_to_obj


@dataclass(frozen=True, eq=False)
class CompletedIncident:
    """Post-hoc incident data: per-step latent and channel assignments.

    Values may be partial, but learning requires ancestrality: whenever a
    variable is assigned, all its parents must be assigned too.  Slice-0
    channel values default to the quiet baseline and never block the check.
    """

    records: tuple[ObservationRecord, ...]
    category: str | None = None
    incident_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "records",
                           tuple(sorted(self.records, key=lambda r: r.t)))

    def record_at(self, t: int) -> ObservationRecord | None:
        for r in self.records:
            if r.t == t:
                return r
        return None

    @property
    def horizon(self) -> int:
        return max((r.t for r in self.records), default=0)


def incident_from_lines(lines: Iterable[str], *, incident_id: str | None = None,
                        category: str | None = None) -> CompletedIncident:
    records = []
    for line in lines:
        if line.strip():
            records.append(record_from_obj(json.loads(line)))
    return CompletedIncident(records=tuple(records), category=category, incident_id=incident_id)


def read_incident(path: str | Path) -> CompletedIncident:
    path = Path(path)
    return incident_from_lines(path.read_text().splitlines(), incident_id=path.stem)


def write_incident(incident: CompletedIncident, path: str | Path) -> None:
    lines = [json.dumps(record_to_obj(r), sort_keys=True) for r in incident.records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# Ancestrality
# ---------------------------------------------------------------------------


def _observation_maps(incident: CompletedIncident, model: PlotModel):
    """Per-step lookup of assigned values, with channel baselines at t=0."""
    phases: dict[int, str] = {}
    tasks: dict[tuple[str, int], str] = {}
    channels: dict[tuple[str, int], str] = {}
    for record in incident.records:
        check_record(record, model)
        if record.latent_phase is not None:
            phases[record.t] = record.latent_phase
        for name, value in record.latent_tasks.items():
            tasks[(name, record.t)] = value
        for name, value in record.channels.items():
            if value is not MISSING:
                channels[(name, record.t)] = value
    for ch in model.intensity_spec.channels:
        channels.setdefault((ch.name, 0), ch.alphabet[0])
    return phases, tasks, channels


def check_ancestral(incident: CompletedIncident, model: PlotModel):
    """True iff every assigned variable has all its parents assigned.

    Returns (ok, violator) where ``violator`` names the first offending
    vertex and step, scanning forward in time.
    """
    phases, tasks, channels = _observation_maps(incident, model)
    g = model.task_graph
    for t in range(1, incident.horizon + 1):
        if t in phases and (t - 1) not in phases:
            return False, f"W@t={t}"
        for name in g.order:
            if (name, t) not in tasks:
                continue
            if t not in phases:
                return False, f"{name}@t={t}"
            parents = ([(p, t) for p in g.intra_parents(name)]
                       + [(p, t - 1) for p in g.inter_parents(name)])
            if any(p not in tasks for p in parents):
                return False, f"{name}@t={t}"
        for ch in model.intensity_spec.channels:
            if (ch.name, t) not in channels:
                continue
            if (ch.owner, t) not in tasks:
                return False, f"{ch.name}@t={t}"
            if any((lag, t - 1) not in channels for lag in ch.lag_parents):
                return False, f"{ch.name}@t={t}"
    return True, None


# ---------------------------------------------------------------------------
# Dirichlet state
# ---------------------------------------------------------------------------


def _transition_support(model: PlotModel, i: int) -> tuple[int, ...]:
    return tuple(sorted({0, i, *model.phase_space.reach.get(i, ())}))


@dataclass(frozen=True, eq=False)
class DirichletCpt:
    """Independent Dirichlet rows mirroring a model's CPT layout.

    ``alpha`` holds the current hyperparameters and ``counts`` the exposure
    accumulated since the prior was set; the posterior mean of a row is its
    alpha vector normalized.
    """

    transition_alpha: Mapping[int, np.ndarray]
    task_alpha: Mapping[str, Mapping[int, np.ndarray]]
    channel_alpha: Mapping[str, np.ndarray]
    transition_counts: Mapping[int, np.ndarray]
    task_counts: Mapping[str, Mapping[int, np.ndarray]]
    channel_counts: Mapping[str, np.ndarray]

    def __post_init__(self):
        freeze = _freeze_tables
        object.__setattr__(self, "transition_alpha", freeze(self.transition_alpha))
        object.__setattr__(self, "task_alpha",
                           MappingProxyType({k: freeze(v) for k, v in dict(self.task_alpha).items()}))
        object.__setattr__(self, "channel_alpha", freeze(self.channel_alpha))
        object.__setattr__(self, "transition_counts", freeze(self.transition_counts))
        object.__setattr__(self, "task_counts",
                           MappingProxyType({k: freeze(v) for k, v in dict(self.task_counts).items()}))
        object.__setattr__(self, "channel_counts", freeze(self.channel_counts))
        for name, arr in self.transition_alpha.items():
            if np.any(arr <= 0):
                raise ConfigurationError(f"transition row {name}: hyperparameters must be positive")
        for name, blocks in self.task_alpha.items():
            for j, arr in blocks.items():
                if np.any(arr <= 0):
                    raise ConfigurationError(f"task {name!r} block {j}: hyperparameters must be positive")
        for name, arr in self.channel_alpha.items():
            if np.any(arr <= 0):
                raise ConfigurationError(f"channel {name!r}: hyperparameters must be positive")

    @classmethod
    def flat(cls, model: PlotModel, concentration: float = 1.0) -> "DirichletCpt":
        """Symmetric prior with the given per-cell concentration."""
        if concentration <= 0:
            raise ConfigurationError("the prior concentration must be positive")
        m = model.phase_space.active_count
        tr_alpha, tr_counts = {}, {}
        for i in range(1, m + 1):
            support = _transition_support(model, i)
            tr_alpha[i] = np.full(len(support), concentration)
            tr_counts[i] = np.zeros(len(support))
        task_alpha, task_counts = {}, {}
        for name in model.task_graph.order:
            shape = model.expected_task_block_shape(name)
            blocks = set(model.cpts.tasks[name].blocks)
            task_alpha[name] = {j: np.full(shape, concentration) for j in blocks}
            task_counts[name] = {j: np.zeros(shape) for j in blocks}
        ch_alpha, ch_counts = {}, {}
        for name in model.intensity_spec.names:
            shape = model.expected_channel_shape(name)
            ch_alpha[name] = np.full(shape, concentration)
            ch_counts[name] = np.zeros(shape)
        return cls(transition_alpha=tr_alpha, task_alpha=task_alpha, channel_alpha=ch_alpha,
                   transition_counts=tr_counts, task_counts=task_counts, channel_counts=ch_counts)

    # -- views ---------------------------------------------------------------

    def transition_mean(self, model: PlotModel) -> TransitionParams:
        abort, stay, jump = {}, {}, {}
        for i, alpha in self.transition_alpha.items():
            support = _transition_support(model, i)
            mean = np.asarray(alpha) / np.asarray(alpha).sum()
            row = dict(zip(support, mean))
            abort[i] = row[0]
            remain = 1.0 - abort[i]
            stay[i] = row[i] / remain
            reach = model.phase_space.reach.get(i, ())
            if len(reach) > 1:
                leave = sum(row[j] for j in reach)
                jump[i] = {j: row[j] / leave for j in reach}
        return TransitionParams(abort=abort, stay=stay, jump=jump, tag=model.transition.tag)

    def mean_model(self, model: PlotModel) -> PlotModel:
        """The model re-embellished with every row's posterior mean."""
        tasks = {}
        for name, blocks in self.task_alpha.items():
            mean_blocks = {j: np.asarray(a) / np.asarray(a).sum(axis=1, keepdims=True)
                           for j, a in blocks.items()}
            tasks[name] = TaskCpt(blocks=mean_blocks, tag=model.cpts.tasks[name].tag)
        channels = {}
        for name, alpha in self.channel_alpha.items():
            rows = np.asarray(alpha) / np.asarray(alpha).sum(axis=1, keepdims=True)
            channels[name] = IntensityCpt(rows=rows, tag=model.cpts.intensities[name].tag)
        return replace(model, transition=self.transition_mean(model),
                       cpts=CptCollection(tasks=tasks, intensities=channels))

    def with_added(self, counts: "CountTables") -> "DirichletCpt":
        return DirichletCpt(
            transition_alpha={i: np.asarray(a) + counts.transition.get(i, 0)
                              for i, a in self.transition_alpha.items()},
            task_alpha={name: {j: np.asarray(a) + counts.tasks.get(name, {}).get(j, 0)
                               for j, a in blocks.items()}
                        for name, blocks in self.task_alpha.items()},
            channel_alpha={name: np.asarray(a) + counts.channels.get(name, 0)
                           for name, a in self.channel_alpha.items()},
            transition_counts={i: np.asarray(c) + counts.transition.get(i, 0)
                               for i, c in self.transition_counts.items()},
            task_counts={name: {j: np.asarray(c) + counts.tasks.get(name, {}).get(j, 0)
                                for j, c in blocks.items()}
                         for name, blocks in self.task_counts.items()},
            channel_counts={name: np.asarray(c) + counts.channels.get(name, 0)
                            for name, c in self.channel_counts.items()})

    def to_payload(self) -> dict:
        return {
            "transition": {str(i): np.asarray(a).tolist() for i, a in sorted(self.transition_alpha.items())},
            "tasks": {name: {str(j): np.asarray(a).tolist() for j, a in sorted(blocks.items())}
                      for name, blocks in sorted(self.task_alpha.items())},
            "channels": {name: np.asarray(a).tolist() for name, a in sorted(self.channel_alpha.items())},
            "counts": {
                "transition": {str(i): np.asarray(c).tolist() for i, c in sorted(self.transition_counts.items())},
                "tasks": {name: {str(j): np.asarray(c).tolist() for j, c in sorted(blocks.items())}
                          for name, blocks in sorted(self.task_counts.items())},
                "channels": {name: np.asarray(c).tolist() for name, c in sorted(self.channel_counts.items())},
            },
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "DirichletCpt":
        counts = payload["counts"]
        return cls(
            transition_alpha={int(i): np.asarray(a, dtype=float) for i, a in payload["transition"].items()},
            task_alpha={name: {int(j): np.asarray(a, dtype=float) for j, a in blocks.items()}
                        for name, blocks in payload["tasks"].items()},
            channel_alpha={name: np.asarray(a, dtype=float) for name, a in payload["channels"].items()},
            transition_counts={int(i): np.asarray(c, dtype=float) for i, c in counts["transition"].items()},
            task_counts={name: {int(j): np.asarray(c, dtype=float) for j, c in blocks.items()}
                         for name, blocks in counts["tasks"].items()},
            channel_counts={name: np.asarray(c, dtype=float) for name, c in counts["channels"].items()})


def _freeze_tables(tables):
    out = {}
    for key, value in dict(tables).items():
        arr = np.ascontiguousarray(np.asarray(value, dtype=float))
        arr.setflags(write=False)
        out[key] = arr
    return MappingProxyType(out)


@dataclass
class CountTables:
    """Integer-valued count arrays with the same layout as DirichletCpt."""

    transition: dict[int, np.ndarray] = field(default_factory=dict)
    tasks: dict[str, dict[int, np.ndarray]] = field(default_factory=dict)
    channels: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, model: PlotModel) -> "CountTables":
        m = model.phase_space.active_count
        return cls(
            transition={i: np.zeros(len(_transition_support(model, i)))
                        for i in range(1, m + 1)},
            tasks={name: {j: np.zeros(model.expected_task_block_shape(name))
                          for j in model.cpts.tasks[name].blocks}
                   for name in model.task_graph.order},
            channels={name: np.zeros(model.expected_channel_shape(name))
                      for name in model.intensity_spec.names})

    def add(self, other: "CountTables") -> None:
        for i, arr in other.transition.items():
            self.transition[i] = self.transition[i] + arr
        for name, blocks in other.tasks.items():
            for j, arr in blocks.items():
                self.tasks[name][j] = self.tasks[name][j] + arr
        for name, arr in other.channels.items():
            self.channels[name] = self.channels[name] + arr


def harvest_counts(incident: CompletedIncident, model: PlotModel) -> CountTables:
    """Transition, task, and emission counts from one ancestral incident."""
    phases, tasks, channels = _observation_maps(incident, model)
    g = model.task_graph
    ps = model.phase_space
    counts = CountTables.zeros(model)
    for t in range(1, incident.horizon + 1):
        if t in phases and (t - 1) in phases:
            i = ps.index(phases[t - 1])
            if i >= 1:
                support = _transition_support(model, i)
                j = ps.index(phases[t])
                if j not in support:
                    raise InvalidRecordError(
                        f"t={t}: transition {phases[t-1]!r} -> {phases[t]!r} is structurally impossible")
                counts.transition[i][support.index(j)] += 1
        for name in g.order:
            if (name, t) not in tasks or t not in phases:
                continue
            w_idx = ps.index(phases[t])
            block = w_idx if name in g.task_sets.get(w_idx, ()) else 0
            config = [g.alphabet(p).index(tasks[(p, t)]) for p in g.intra_parents(name)]
            config += [g.alphabet(p).index(tasks[(p, t - 1)]) for p in g.inter_parents(name)]
            sizes = ([len(g.alphabet(p)) for p in g.intra_parents(name)]
                     + [len(g.alphabet(p)) for p in g.inter_parents(name)])
            row = row_index(sizes, config)
            col = g.alphabet(name).index(tasks[(name, t)])
            counts.tasks[name][block][row, col] += 1
        for ch in model.intensity_spec.channels:
            if (ch.name, t) not in channels or (ch.owner, t) not in tasks:
                continue
            config = [g.alphabet(ch.owner).index(tasks[(ch.owner, t)])]
            sizes = [len(g.alphabet(ch.owner))]
            usable = True
            for lag in ch.lag_parents:
                if (lag, t - 1) not in channels:
                    usable = False
                    break
                lag_alpha = model.intensity_spec.channel(lag).alphabet
                config.append(lag_alpha.index(channels[(lag, t - 1)]))
                sizes.append(len(lag_alpha))
            if not usable:
                continue
            row = row_index(sizes, config)
            col = ch.alphabet.index(channels[(ch.name, t)])
            counts.channels[ch.name][row, col] += 1
    return counts


# ---------------------------------------------------------------------------
# Updates
# ---------------------------------------------------------------------------


def update_from_incidents(priors: DirichletCpt, incidents: Sequence[CompletedIncident],
                          model: PlotModel) -> DirichletCpt:
    """Posterior = prior + counts, all rows independently.

    Every incident must be ancestral; offenders are listed and the whole
    batch is rejected so that no incident is ever partially used.
    """
    offenders = []
    for k, incident in enumerate(incidents):
        ok, violator = check_ancestral(incident, model)
        if not ok:
            label = incident.incident_id or f"incident[{k}]"
            offenders.append(f"{label} ({violator})")
    if offenders:
        raise NonAncestralDataError(offenders)
    total = CountTables.zeros(model)
    for incident in incidents:
        total.add(harvest_counts(incident, model))
    return priors.with_added(total)


@dataclass(frozen=True, eq=False)
class DesignedSample:
    """Stratified draws from one CPT row, addressed by explicit parent values."""

    vertex: str
    parent_config: Mapping[str, str]
    outcomes: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "parent_config", MappingProxyType(dict(self.parent_config)))
        object.__setattr__(self, "outcomes", MappingProxyType(dict(self.outcomes)))
        for outcome, n in self.outcomes.items():
            if not isinstance(n, int) or n < 0:
                raise ConfigurationError(f"sample count for {outcome!r} must be a non-negative integer")


def update_from_designed_samples(priors: DirichletCpt, samples: Sequence[DesignedSample],
                                 model: PlotModel, *, library_side: str = "B") -> DirichletCpt:
    """Add designed-sampling counts to exactly the addressed rows.

    On the academic ("A") side, rows of secure-tagged tables hold dummy
    values, so samples addressing them are refused outright.
    """
    g = model.task_graph
    counts = CountTables.zeros(model)
    for sample in samples:
        name = sample.vertex
        if name in g.order:
            tag = model.cpts.tasks[name].tag
        elif name in model.intensity_spec.names:
            tag = model.cpts.intensities[name].tag
        elif name == "W":
            raise ConfigurationError(
                "designed sampling applies to task and intensity rows, not phase transitions")
        else:
            raise UnknownVertexError(f"designed sample addresses unknown vertex {name!r}")
        if tag == "secure" and library_side == "A":
            raise SecureTableError(
                f"table {name!r} is secure: its A-side values are dummies and must not be updated")
        if name in g.order:
            phase_label = sample.parent_config.get("W")
            if phase_label is None:
                raise ConfigurationError(f"sample for task {name!r} must fix the phase parent")
            w_idx = model.phase_space.index(phase_label)
            block = w_idx if name in g.task_sets.get(w_idx, ()) else 0
            parents = list(g.intra_parents(name)) + list(g.inter_parents(name))
            config, sizes = [], []
            for p in parents:
                if p not in sample.parent_config:
                    raise ConfigurationError(f"sample for task {name!r} must fix parent {p!r}")
                config.append(g.alphabet(p).index(sample.parent_config[p]))
                sizes.append(len(g.alphabet(p)))
            row = row_index(sizes, config)
            table = counts.tasks[name][block]
            for outcome, n in sample.outcomes.items():
                table[row, g.alphabet(name).index(outcome)] += n
        else:
            ch = model.intensity_spec.channel(name)
            config = [g.alphabet(ch.owner).index(sample.parent_config[ch.owner])]
            sizes = [len(g.alphabet(ch.owner))]
            for lag in ch.lag_parents:
                lag_alpha = model.intensity_spec.channel(lag).alphabet
                config.append(lag_alpha.index(sample.parent_config[lag]))
                sizes.append(len(lag_alpha))
            row = row_index(sizes, config)
            table = counts.channels[name]
            for outcome, n in sample.outcomes.items():
                table[row, ch.alphabet.index(outcome)] += n
    return priors.with_added(counts)
