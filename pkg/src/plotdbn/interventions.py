"""Causal interventions by CPT substitution and expected-utility scoring.

A decision substitutes replacement tables at named vertices inside a time
window while leaving the graph untouched.  Scores are exact expectations of
a bounded utility over the latent phase path, pushed forward from the
current belief through the substituted dynamics.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .core import (PHASE_VERTEX, AppliedSubstitution, PlotModel,
                   TransitionParams, validate_model)
from .errors import ConfigurationError, DimensionMismatchError

NULL_DECISION = "d_phi"

ATTRIBUTE_KINDS = ("phase_ever", "time_to_phase", "final_phase_is", "decision_cost")


@dataclass(frozen=True, eq=False)
class Decision:
    """A candidate action: CPT substitutions plus a resource cost.

    ``d_phi`` is the reserved do-nothing decision and must carry no
    substitutions.  A substitution payload is one of:

    * for the phase vertex, a full abort/stay/jump parameter replacement;
    * for a task, replacement row blocks (or a forced state);
    * for a channel, replacement rows (or a forced outcome).
    """

    id: str
    substitutions: Mapping[str, Mapping] = field(default_factory=dict)
    window: tuple[int | None, int | None] = (None, None)
    cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "substitutions", MappingProxyType(dict(self.substitutions)))
        start, end = self.window
        object.__setattr__(self, "window", (start, end))
        if self.id == NULL_DECISION and self.substitutions:
            raise ConfigurationError("the do-nothing decision carries no substitutions")
        if start is not None and end is not None and end <= start:
            raise ConfigurationError(f"decision {self.id!r}: empty window {self.window}")


@dataclass(frozen=True, eq=False)
class AttributeSpec:
    """A deterministic functional of the latent phase path (or the decision cost)."""

    name: str
    kind: str
    phase: str | None = None

    def __post_init__(self):
        if self.kind not in ATTRIBUTE_KINDS:
            raise ConfigurationError(f"unknown attribute kind {self.kind!r}")
        if self.kind != "decision_cost" and self.phase is None:
            raise ConfigurationError(f"attribute {self.name!r} needs a phase label")


@dataclass(frozen=True, eq=False)
class UtilityTerm:
    attr: str
    weight: float | None = None
    table: Mapping[object, float] | None = None

    def __post_init__(self):
        if (self.weight is None) == (self.table is None):
            raise ConfigurationError("a utility term takes either a weight or a value table")
        if self.table is not None:
            object.__setattr__(self, "table", MappingProxyType(dict(self.table)))


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """Bounded utility over attribute values: offset plus per-attribute terms."""

    id: str
    attributes: tuple[AttributeSpec, ...]
    offset: float = 0.0
    terms: tuple[UtilityTerm, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "terms", tuple(self.terms))
        names = {a.name for a in self.attributes}
        if len(names) != len(self.attributes):
            raise ConfigurationError("attribute names must be unique")
        values = [self.offset]
        for term in self.terms:
            if term.attr not in names:
                raise ConfigurationError(f"utility term references unknown attribute {term.attr!r}")
            values.extend([term.weight] if term.weight is not None else term.table.values())
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError(f"utility {self.id!r} is unbounded")

    def rescaled(self, scale: float, shift: float) -> "UtilitySpec":
        """Positive affine transform of the utility values."""
        terms = tuple(
            UtilityTerm(t.attr, weight=None if t.weight is None else t.weight * scale,
                        table=None if t.table is None else {k: v * scale for k, v in t.table.items()})
            for t in self.terms)
        return UtilitySpec(self.id, self.attributes, self.offset * scale + shift, terms)


# ---------------------------------------------------------------------------
# Substitution application
# ---------------------------------------------------------------------------


def _degenerate_rows(n_rows: int, alphabet: Sequence[str], state: str) -> np.ndarray:
    try:
        col = list(alphabet).index(state)
    except ValueError:
        raise ConfigurationError(f"forced value {state!r} is not in the alphabet {list(alphabet)}") from None
    rows = np.zeros((n_rows, len(alphabet)))
    rows[:, col] = 1.0
    return rows


def _task_substitution(model: PlotModel, vertex: str, payload: Mapping) -> Mapping[int, np.ndarray]:
    blocks = model.cpts.tasks[vertex].blocks
    n_rows, _ = model.expected_task_block_shape(vertex)
    alphabet = model.task_graph.alphabet(vertex)
    if "force" in payload:
        forced = _degenerate_rows(n_rows, alphabet, payload["force"])
        return {j: forced for j in blocks}
    new_blocks = {}
    for label, rows in payload["rows"].items():
        j = model.phase_space.index(label)
        arr = np.asarray(rows, dtype=float)
        if arr.shape != (n_rows, len(alphabet)):
            raise DimensionMismatchError(
                f"substitution for {vertex!r} phase {label!r}: expected "
                f"{n_rows}x{len(alphabet)} rows, got {arr.shape}")
        new_blocks[j] = arr
    if set(new_blocks) != set(blocks):
        raise DimensionMismatchError(
            f"substitution for {vertex!r} must cover exactly the stored phase blocks")
    return new_blocks


def _intensity_substitution(model: PlotModel, vertex: str, payload: Mapping) -> np.ndarray:
    shape = model.expected_channel_shape(vertex)
    alphabet = model.intensity_spec.channel(vertex).alphabet
    if "force" in payload:
        return _degenerate_rows(shape[0], alphabet, payload["force"])
    arr = np.asarray(payload["rows"], dtype=float)
    if arr.shape != shape:
        raise DimensionMismatchError(
            f"substitution for {vertex!r}: expected {shape[0]}x{shape[1]} rows, got {arr.shape}")
    return arr


def apply_intervention(model: PlotModel, decision: Decision) -> PlotModel:
    """Return the intervened model; the input is never touched.

    The do-nothing decision returns the model unchanged.  Substituted tables
    take effect only inside the decision window; all other tables, the graph
    and the task sets are exactly those of the input model.
    """
    if not decision.substitutions:
        return model
    subs = list(model.applied)
    for vertex, payload in decision.substitutions.items():
        if vertex == PHASE_VERTEX:
            params = TransitionParams(
                abort={model.phase_space.index(k): v for k, v in payload["abort"].items()},
                stay={model.phase_space.index(k): v for k, v in payload["stay"].items()},
                jump={model.phase_space.index(i): {model.phase_space.index(j): p
                                                   for j, p in row.items()}
                      for i, row in payload.get("jump", {}).items()},
                tag=model.transition.tag)
            subs.append(AppliedSubstitution(decision.id, vertex, decision.window,
                                            transition=params))
        elif vertex in model.task_graph.order:
            subs.append(AppliedSubstitution(decision.id, vertex, decision.window,
                                            task_blocks=_task_substitution(model, vertex, payload)))
        elif vertex in model.intensity_spec.names:
            subs.append(AppliedSubstitution(decision.id, vertex, decision.window,
                                            intensity_rows=_intensity_substitution(model, vertex, payload)))
        else:
            raise ConfigurationError(f"decision {decision.id!r} substitutes unknown vertex {vertex!r}")
    out = dataclasses.replace(model, applied=tuple(subs))
    validate_model(out).raise_if_invalid()
    return out


# ---------------------------------------------------------------------------
# Expected utility
# ---------------------------------------------------------------------------


def _phase_path_statistics(model: PlotModel, start_marginal: np.ndarray,
                           start_t: int, horizon: int, phase_idx: int):
    """Hitting statistics of one phase over the next ``horizon`` steps.

    Returns ``(p_ever, first_hit)`` where ``first_hit[k]`` is the probability
    the phase is first occupied k steps from now (k=0 meaning "already
    there") and ``first_hit[horizon+1]`` the never-within-horizon mass.
    """
    n = model.phase_count
    first_hit = np.zeros(horizon + 2)
    first_hit[0] = start_marginal[phase_idx]
    # mass that has not yet touched the phase, spread over the other phases
    alive = np.array(start_marginal, dtype=float)
    alive[phase_idx] = 0.0
    for k in range(1, horizon + 1):
        matrix = model.transition_matrix(start_t + k)
        alive = alive @ matrix
        first_hit[k] = alive[phase_idx]
        alive[phase_idx] = 0.0
    first_hit[horizon + 1] = alive.sum()
    return float(first_hit[:horizon + 1].sum()), first_hit


def _final_phase_marginal(model: PlotModel, start_marginal: np.ndarray,
                          start_t: int, horizon: int) -> np.ndarray:
    marginal = np.array(start_marginal, dtype=float)
    for k in range(1, horizon + 1):
        marginal = marginal @ model.transition_matrix(start_t + k)
    return marginal


def _attribute_expectations(model: PlotModel, start_marginal: np.ndarray, start_t: int,
                            horizon: int, decision: Decision,
                            utility: UtilitySpec) -> dict[str, object]:
    """Per-attribute expectation (affine terms) or value distribution (table terms)."""
    out: dict[str, object] = {}
    for attr in utility.attributes:
        if attr.kind == "decision_cost":
            out[attr.name] = ("point", float(decision.cost))
            continue
        phase_idx = model.phase_space.index(attr.phase)
        if attr.kind == "phase_ever":
            p_ever, _ = _phase_path_statistics(model, start_marginal, start_t, horizon, phase_idx)
            out[attr.name] = ("bernoulli", p_ever)
        elif attr.kind == "time_to_phase":
            _, first_hit = _phase_path_statistics(model, start_marginal, start_t, horizon, phase_idx)
            out[attr.name] = ("distribution", {k: float(p) for k, p in enumerate(first_hit) if p > 0.0})
        elif attr.kind == "final_phase_is":
            marginal = _final_phase_marginal(model, start_marginal, start_t, horizon)
            out[attr.name] = ("bernoulli", float(marginal[phase_idx]))
    return out


def _term_expectation(term: UtilityTerm, stat) -> float:
    kind, value = stat
    if term.weight is not None:
        if kind == "point":
            return term.weight * value
        if kind == "bernoulli":
            return term.weight * value
        return term.weight * sum(k * p for k, p in value.items())
    # value-table term
    if kind == "point":
        return _table_value(term.table, value)
    if kind == "bernoulli":
        return value * _table_value(term.table, 1) + (1.0 - value) * _table_value(term.table, 0)
    return sum(p * _table_value(term.table, k) for k, p in value.items())


def _table_value(table: Mapping, key) -> float:
    for candidate in (key, str(key)):
        if candidate in table:
            return float(table[candidate])
    raise ConfigurationError(f"utility table has no value for attribute outcome {key!r}; "
                             "extractors must be total")


def seu(model: PlotModel, belief, decision: Decision, utility: UtilitySpec,
        horizon: int) -> float:
    """Expected utility of ``decision`` from the current belief.

    The current belief's phase marginal is pushed through the intervened
    dynamics for ``horizon`` steps; attribute laws are exact because the
    phase chain is autonomous and every supported attribute is a functional
    of the phase path (plus the decision cost).
    """
    if horizon < 1:
        raise ConfigurationError("scoring horizon must be >= 1")
    intervened = apply_intervention(model, decision)
    start = np.asarray(belief.phase_marginal(), dtype=float)
    stats = _attribute_expectations(intervened, start, belief.t, horizon, decision, utility)
    total = utility.offset
    for term in utility.terms:
        total += _term_expectation(term, stats[term.attr])
    return float(total)


def rank_decisions(model: PlotModel, belief, decisions: Sequence[Decision],
                   utility: UtilitySpec, horizon: int) -> list[tuple[Decision, float]]:
    """Decisions ordered by score, best first; ties broken by decision id."""
    ids = {d.id for d in decisions}
    if NULL_DECISION not in ids:
        raise ConfigurationError(f"the decision set must include {NULL_DECISION!r}")
    if len(ids) != len(decisions):
        raise ConfigurationError("decision ids must be unique")
    scored = [(d, seu(model, belief, d, utility, horizon)) for d in decisions]
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return scored
