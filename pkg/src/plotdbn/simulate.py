"""Seeded incident simulation from the exact generative semantics.

Each vertex owns an independent random stream keyed by the seed, and draws
one uniform per step whether or not an intervention pins its value.  A
counterfactual replay under substituted CPTs therefore reuses the same
underlying draws wherever tables are unchanged, keeping paired comparisons
low-variance.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PlotModel
from .errors import ConfigurationError
from .interventions import Decision, apply_intervention
from .learning import CompletedIncident
from .records import ObservationRecord, write_log


@dataclass(frozen=True)
class SimulationConfig:
    """Reproducible generation settings: same config, same output."""

    seed: int
    steps: int | None = None
    category: str | None = None
    intervention: tuple[str, int] | None = None
    court_report: bool = False
    prior: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class IncidentResult:
    records: tuple[ObservationRecord, ...]
    phases: tuple[int, ...]          # ground-truth phase index per t=0..T
    tasks: np.ndarray                # ground truth, shape (T+1, n_tasks)
    channels: np.ndarray             # shape (T+1, n_channels), row 0 is the baseline
    seed: int

    def incident(self, category: str | None = None,
                 incident_id: str | None = None) -> CompletedIncident:
        return CompletedIncident(records=self.records, category=category,
                                 incident_id=incident_id)


@dataclass(frozen=True, eq=False)
class BatchResult:
    incidents: tuple[IncidentResult, ...]
    master_seed: int
    seeds: tuple[int, ...]


def _inverse_cdf(row: np.ndarray, u: float) -> int:
    cum = np.cumsum(row)
    idx = int(np.searchsorted(cum, u * cum[-1], side="right"))
    return min(idx, len(row) - 1)


def _streams(model: PlotModel, seed: int) -> dict[str, np.random.Generator]:
    names = ["__init__", "W", *model.task_graph.order, *model.intensity_spec.names]
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(names))
    return {name: np.random.Generator(np.random.Philox(child))
            for name, child in zip(names, children)}


def simulate_incident(model: PlotModel, config: SimulationConfig) -> IncidentResult:
    """Sample one incident; deterministic under the config seed."""
    steps = config.steps if config.steps is not None else model.horizon
    if steps < 1:
        raise ConfigurationError("an incident needs at least one step")
    active_model = model
    if config.intervention is not None:
        decision_id, start = config.intervention
        if decision_id not in model.decisions:
            raise ConfigurationError(f"unknown decision {decision_id!r}")
        base = model.decisions[decision_id]
        forced = Decision(id=base.id, substitutions=base.substitutions,
                          window=(start, base.window[1]), cost=base.cost)
        active_model = apply_intervention(model, forced)

    g = model.task_graph
    spec = model.intensity_spec
    n_tasks = len(g.order)
    n_channels = len(spec.channels)
    streams = _streams(model, config.seed)

    if config.prior is None:
        prior = np.zeros(model.state_shape)
        prior[(0,) * len(model.state_shape)] = 1.0
    else:
        prior = np.asarray(config.prior, dtype=float)
        if prior.shape != model.state_shape:
            raise ConfigurationError(
                f"prior shape {prior.shape} does not match the state shape {model.state_shape}")
    flat_idx = _inverse_cdf(prior.ravel(), streams["__init__"].random())
    initial = np.unravel_index(flat_idx, model.state_shape)

    phases = [int(initial[0])]
    tasks = np.zeros((steps + 1, n_tasks), dtype=int)
    tasks[0] = initial[1:]
    channels = np.zeros((steps + 1, n_channels), dtype=int)  # row 0: baseline

    for t in range(1, steps + 1):
        row = active_model.transition_matrix(t)[phases[t - 1]]
        phases.append(_inverse_cdf(row, streams["W"].random()))
        for i, name in enumerate(g.order):
            tensor = active_model.task_tensor(name, t)
            idx = [phases[t]]
            idx += [int(tasks[t, g.index(p)]) for p in g.intra_parents(name)]
            idx += [int(tasks[t - 1, g.index(p)]) for p in g.inter_parents(name)]
            tasks[t, i] = _inverse_cdf(tensor[tuple(idx)], streams[name].random())
        for k, ch in enumerate(spec.channels):
            tensor = active_model.intensity_tensor(ch.name, t)
            idx = [int(tasks[t, g.index(ch.owner)])]
            idx += [int(channels[t - 1, spec.index(lag)]) for lag in ch.lag_parents]
            channels[t, k] = _inverse_cdf(tensor[tuple(idx)], streams[ch.name].random())

    records = []
    if config.court_report:
        records.append(ObservationRecord(
            t=0, channels={ch.name: ch.alphabet[int(channels[0, k])]
                           for k, ch in enumerate(spec.channels)},
            latent_phase=model.phase_space.labels[phases[0]],
            latent_tasks={name: g.alphabet(name)[int(tasks[0, i])]
                          for i, name in enumerate(g.order)}))
    for t in range(1, steps + 1):
        outcome = {ch.name: ch.alphabet[int(channels[t, k])]
                   for k, ch in enumerate(spec.channels)}
        if config.court_report:
            records.append(ObservationRecord(
                t=t, channels=outcome,
                latent_phase=model.phase_space.labels[phases[t]],
                latent_tasks={name: g.alphabet(name)[int(tasks[t, i])]
                              for i, name in enumerate(g.order)}))
        else:
            records.append(ObservationRecord(t=t, channels=outcome))
    return IncidentResult(records=tuple(records), phases=tuple(phases), tasks=tasks,
                          channels=channels, seed=config.seed)


def derive_seeds(master_seed: int, n: int) -> tuple[int, ...]:
    children = np.random.SeedSequence(master_seed).spawn(n)
    return tuple(int(child.generate_state(1, dtype=np.uint64)[0]) for child in children)


def simulate_batch(model: PlotModel, n: int, config: SimulationConfig) -> BatchResult:
    """n independent incidents under seeds derived from the config's master seed."""
    if n < 1:
        raise ConfigurationError("a batch needs at least one incident")
    seeds = derive_seeds(config.seed, n)
    incidents = tuple(simulate_incident(model, dataclasses.replace(config, seed=seed))
                      for seed in seeds)
    return BatchResult(incidents=incidents, master_seed=config.seed, seeds=seeds)


def write_archive(batch: BatchResult, model: PlotModel, config: SimulationConfig,
                  directory: str | Path) -> Path:
    """Incident archive: one log file per incident plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(batch.incidents) - 1)))
    names = []
    for k, incident in enumerate(batch.incidents):
        name = f"incident_{k:0{width}d}.jsonl"
        write_log(incident.records, directory / name)
        names.append(name)
    manifest = {
        "format": "plot-incident-archive/1",
        "model": model.id,
        "master_seed": batch.master_seed,
        "seeds": list(batch.seeds),
        "court_report": config.court_report,
        "incidents": names,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def read_archive(directory: str | Path) -> list[CompletedIncident]:
    from .learning import read_incident

    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return [read_incident(directory / name) for name in manifest["incidents"]]
