"""Domain types for plot models and their structural validation.

A plot model is a two-slice dynamic Bayesian network over three layers:
a latent phase chain W, a latent task vector theta whose components carry
the phase's fingerprint, and observed intensity channels Z that each inform
exactly one task.  This module holds the immutable model types, the
phase-transition matrix construction, the two-slice graph builders, and
``validate_model``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from .errors import ConfigurationError, ModelValidationError

logger = logging.getLogger(__name__)

PARTITION_TAGS = ("open", "partial", "secure")

#: Rows whose sum is within this distance of 1 are renormalized on load
#: (with a warning); anything worse is left alone for validation to flag.
RENORM_TOLERANCE = 1e-9

#: Strict row-sum tolerance used by validation after load-time renormalization.
ROW_SUM_TOLERANCE = 1e-12

#: Decimal places used when comparing tables for identity across library entries.
IDENTITY_DECIMALS = 12

PHASE_VERTEX = "W"


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=float))
    out.setflags(write=False)
    return out


def _rounded(values) -> tuple:
    """Nested tuples of values rounded for identity comparison."""
    arr = np.round(np.asarray(values, dtype=float), IDENTITY_DECIMALS)
    # -0.0 and 0.0 must compare equal
    arr = arr + 0.0
    return tuple(map(tuple, np.atleast_2d(arr)))


def normalize_rows(rows: np.ndarray, where: str) -> np.ndarray:
    """Renormalize rows whose sums drift within RENORM_TOLERANCE of 1.

    Drift at or below ROW_SUM_TOLERANCE already passes validation and is left
    untouched (keeping load/save round trips byte-stable); rows further off
    than RENORM_TOLERANCE are also untouched so that validation can report
    them with coordinates instead of silently repairing bad input.
    """
    rows = np.array(rows, dtype=float)
    sums = rows.sum(axis=-1)
    drift = np.abs(sums - 1.0)
    fixable = (drift > ROW_SUM_TOLERANCE) & (drift <= RENORM_TOLERANCE) & (sums > 0)
    if np.any(fixable):
        logger.warning("renormalizing %d row(s) of %s (max drift %.3g)",
                       int(np.count_nonzero(fixable)), where, float(drift.max()))
        rows[fixable] = rows[fixable] / sums[fixable][..., None]
    return rows


# ---------------------------------------------------------------------------
# Structural types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PhaseSpace:
    """Ordered phase labels with one-step reachability for active phases.

    ``labels[0]`` is the inactive phase: absorbing, with no reach entry.
    ``reach[i]`` holds the active phases reachable from active phase i in a
    single step when the suspect neither stays nor aborts.
    """

    labels: tuple[str, ...]
    reach: Mapping[int, tuple[int, ...]]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(
            self, "reach",
            MappingProxyType({int(k): tuple(sorted(int(j) for j in v))
                              for k, v in dict(self.reach).items()}))

    @property
    def count(self) -> int:
        return len(self.labels)

    @property
    def active_count(self) -> int:
        return len(self.labels) - 1

    @property
    def inactive(self) -> str:
        return self.labels[0]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown phase label {label!r}") from None


@dataclass(frozen=True, eq=False)
class TransitionParams:
    """Abort/stay/jump parameterisation of the phase-transition matrix.

    ``abort[i]`` is the probability of falling back to the inactive phase,
    ``stay[i]`` the probability of remaining in phase i given no abort, and
    ``jump[i]`` the distribution over the reach set given the suspect moves.
    Phases whose reach set is a singleton carry no jump entry: the single
    target has probability one implicitly and is never elicited.

    Parameters are time-homogeneous; ``overrides`` maps a time index to a
    sparse replacement of any of the three parts for that step only.
    """

    abort: Mapping[int, float]
    stay: Mapping[int, float]
    jump: Mapping[int, Mapping[int, float]]
    overrides: Mapping[int, Mapping[str, Mapping]] = field(default_factory=dict)
    tag: str = "open"
    dummy: bool = False

    def __post_init__(self):
        object.__setattr__(self, "abort", MappingProxyType({int(k): float(v) for k, v in dict(self.abort).items()}))
        object.__setattr__(self, "stay", MappingProxyType({int(k): float(v) for k, v in dict(self.stay).items()}))
        object.__setattr__(
            self, "jump",
            MappingProxyType({int(i): MappingProxyType({int(j): float(p) for j, p in dict(row).items()})
                              for i, row in dict(self.jump).items()}))
        object.__setattr__(
            self, "overrides",
            MappingProxyType({int(t): MappingProxyType({
                part: MappingProxyType({int(i): (MappingProxyType({int(j): float(p) for j, p in v.items()})
                                                 if isinstance(v, Mapping) else float(v))
                                        for i, v in dict(vals).items()})
                for part, vals in dict(parts).items()})
                for t, parts in dict(self.overrides).items()}))

    def _part(self, part: str, t: int | None):
        base = getattr(self, part)
        if t is not None and t in self.overrides:
            over = self.overrides[t].get(part)
            if over is not None:
                merged = dict(base)
                merged.update(over)
                return merged
        return base

    def abort_at(self, i: int, t: int | None = None) -> float:
        return self._part("abort", t)[i]

    def stay_at(self, i: int, t: int | None = None) -> float:
        return self._part("stay", t)[i]

    def jump_at(self, i: int, t: int | None = None) -> Mapping[int, float]:
        return self._part("jump", t).get(i, {})


@dataclass(frozen=True, eq=False)
class TaskGraph:
    """Task vertices, their slice edges, and the per-phase task sets.

    Intra-slice edges must respect the global task order (source index below
    target index); tasks sharing a task set are forced to be connected in
    that order.  Every task implicitly has the current-slice phase vertex as
    a parent, so it never appears in the edge lists.
    """

    order: tuple[str, ...]
    alphabets: Mapping[str, tuple[str, ...]]
    intra_edges: tuple[tuple[str, str], ...] = ()
    inter_edges: tuple[tuple[str, str], ...] = ()
    task_sets: Mapping[int, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        object.__setattr__(self, "alphabets",
                           MappingProxyType({k: tuple(v) for k, v in dict(self.alphabets).items()}))
        object.__setattr__(self, "intra_edges", tuple((a, b) for a, b in self.intra_edges))
        object.__setattr__(self, "inter_edges", tuple((a, b) for a, b in self.inter_edges))
        object.__setattr__(self, "task_sets",
                           MappingProxyType({int(k): frozenset(v) for k, v in dict(self.task_sets).items()}))

    def index(self, name: str) -> int:
        try:
            return self.order.index(name)
        except ValueError:
            raise KeyError(f"unknown task {name!r}") from None

    def alphabet(self, name: str) -> tuple[str, ...]:
        return self.alphabets[name]

    def intra_parents(self, name: str) -> tuple[str, ...]:
        """Intra-slice task parents of ``name``, in task order."""
        parents = [a for a, b in self.intra_edges if b == name]
        return tuple(sorted(parents, key=self.index))

    def inter_parents(self, name: str) -> tuple[str, ...]:
        """Previous-slice task parents of ``name``, in task order."""
        parents = [a for a, b in self.inter_edges if b == name]
        return tuple(sorted(parents, key=self.index))

    def phases_with(self, name: str) -> tuple[int, ...]:
        """Active phases whose task set contains ``name``."""
        return tuple(sorted(j for j, members in self.task_sets.items() if name in members))


@dataclass(frozen=True)
class ParentRef:
    """A parent of an intensity channel: the owning task or a lagged channel."""

    kind: str  # "task" | "channel_lag" | "phase" | "phase_lag"
    name: str


@dataclass(frozen=True, eq=False)
class Channel:
    name: str
    alphabet: tuple[str, ...]
    parents: tuple[ParentRef, ...]

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "parents", tuple(self.parents))

    @property
    def task_parents(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parents if p.kind == "task")

    @property
    def owner(self) -> str | None:
        tasks = self.task_parents
        return tasks[0] if len(tasks) == 1 else None

    @property
    def lag_parents(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parents if p.kind == "channel_lag")


@dataclass(frozen=True, eq=False)
class IntensitySpec:
    """Observation channels: each owned by one task, optionally lag-linked.

    A channel may take lag parents only among channels listed before it, so
    the previous slice's values are always available when filtering.  Any
    channel value may be missing at any time step.
    """

    channels: tuple[Channel, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    def channel(self, name: str) -> Channel:
        for c in self.channels:
            if c.name == name:
                return c
        raise KeyError(f"unknown channel {name!r}")

    def index(self, name: str) -> int:
        for k, c in enumerate(self.channels):
            if c.name == name:
                return k
        raise KeyError(f"unknown channel {name!r}")


@dataclass(frozen=True, eq=False)
class CategoryProfile:
    """Suspect background and environment attributes indexing CPT variants."""

    key: str
    background: Mapping[str, object] = field(default_factory=dict)
    environment: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "background", MappingProxyType(dict(self.background)))
        object.__setattr__(self, "environment", MappingProxyType(dict(self.environment)))


@dataclass(frozen=True, eq=False)
class TaskCpt:
    """Per-phase row blocks for one task.

    ``blocks[0]`` holds the inactive-phase rows over the task's non-phase
    parents; an active phase has its own block only when the task belongs to
    that phase's task set.  All other phases reuse the inactive block, which
    makes the duplication rule hold by construction.
    """

    blocks: Mapping[int, np.ndarray]
    tag: str = "open"
    dummy: bool = False

    def __post_init__(self):
        object.__setattr__(self, "blocks",
                           MappingProxyType({int(k): _frozen(v) for k, v in dict(self.blocks).items()}))

    def block_for(self, phase_idx: int) -> np.ndarray:
        return self.blocks.get(phase_idx, self.blocks[0])


@dataclass(frozen=True, eq=False)
class IntensityCpt:
    rows: np.ndarray
    tag: str = "open"
    dummy: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen(self.rows))


@dataclass(frozen=True, eq=False)
class CptCollection:
    tasks: Mapping[str, TaskCpt]
    intensities: Mapping[str, IntensityCpt]

    def __post_init__(self):
        object.__setattr__(self, "tasks", MappingProxyType(dict(self.tasks)))
        object.__setattr__(self, "intensities", MappingProxyType(dict(self.intensities)))


@dataclass(frozen=True, eq=False)
class AppliedSubstitution:
    """One vertex's replacement tables, active inside a time window."""

    decision_id: str
    vertex: str
    window: tuple[int | None, int | None]
    transition: TransitionParams | None = None
    task_blocks: Mapping[int, np.ndarray] | None = None
    intensity_rows: np.ndarray | None = None

    def __post_init__(self):
        if self.task_blocks is not None:
            object.__setattr__(self, "task_blocks",
                               MappingProxyType({int(k): _frozen(v) for k, v in dict(self.task_blocks).items()}))
        if self.intensity_rows is not None:
            object.__setattr__(self, "intensity_rows", _frozen(self.intensity_rows))

    def active_at(self, t: int) -> bool:
        start, end = self.window
        if start is not None and t < start:
            return False
        if end is not None and t >= end:
            return False
        return True


@dataclass(frozen=True, eq=False)
class PlotModel:
    """One fully embellished library entry.

    Immutable after construction; every accessor that depends on the time
    index resolves per-step parameter overrides and any applied
    interventions for that step.
    """

    id: str
    category: CategoryProfile
    phase_space: PhaseSpace
    transition: TransitionParams
    task_graph: TaskGraph
    cpts: CptCollection
    intensity_spec: IntensitySpec
    horizon: int = 12
    meta: Mapping[str, object] = field(default_factory=dict)
    decisions: Mapping[str, "object"] = field(default_factory=dict)   # id -> interventions.Decision
    utilities: Mapping[str, "object"] = field(default_factory=dict)   # id -> interventions.UtilitySpec
    applied: tuple[AppliedSubstitution, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))
        object.__setattr__(self, "decisions", MappingProxyType(dict(self.decisions)))
        object.__setattr__(self, "utilities", MappingProxyType(dict(self.utilities)))
        object.__setattr__(self, "applied", tuple(self.applied))

    # -- shape helpers ------------------------------------------------------

    @property
    def phase_count(self) -> int:
        return self.phase_space.count

    @property
    def task_sizes(self) -> tuple[int, ...]:
        return tuple(len(self.task_graph.alphabet(n)) for n in self.task_graph.order)

    @property
    def state_shape(self) -> tuple[int, ...]:
        return (self.phase_count, *self.task_sizes)

    @property
    def state_cells(self) -> int:
        return int(np.prod(self.state_shape, dtype=np.int64))

    @property
    def vertex_names(self) -> tuple[str, ...]:
        return (PHASE_VERTEX, *self.task_graph.order, *self.intensity_spec.names)

    def vertex_kind(self, name: str) -> str:
        if name == PHASE_VERTEX:
            return "phase"
        if name in self.task_graph.order:
            return "task"
        if name in self.intensity_spec.names:
            return "intensity"
        raise KeyError(f"unknown vertex {name!r}")

    # -- parent signatures (used by graphs, CPT shapes, library identity) ---

    def task_parent_names(self, name: str) -> tuple[tuple[str, bool], ...]:
        """(parent, lagged) pairs for a task: phase first, then intra, then inter."""
        g = self.task_graph
        return ((PHASE_VERTEX, False),
                *((p, False) for p in g.intra_parents(name)),
                *((p, True) for p in g.inter_parents(name)))

    def channel_parent_names(self, name: str) -> tuple[tuple[str, bool], ...]:
        ch = self.intensity_spec.channel(name)
        out = []
        for p in ch.parents:
            if p.kind == "task":
                out.append((p.name, False))
            elif p.kind == "channel_lag":
                out.append((p.name, True))
            elif p.kind == "phase":
                out.append((PHASE_VERTEX, False))
            elif p.kind == "phase_lag":
                out.append((PHASE_VERTEX, True))
        return tuple(out)

    def parent_signature(self, vertex: str) -> tuple[tuple[str, bool], ...]:
        kind = self.vertex_kind(vertex)
        if kind == "phase":
            return ((PHASE_VERTEX, True),)
        if kind == "task":
            return self.task_parent_names(vertex)
        return self.channel_parent_names(vertex)

    def _parent_size(self, parent: tuple[str, bool]) -> int:
        name, _ = parent
        if name == PHASE_VERTEX:
            return self.phase_count
        if name in self.task_graph.order:
            return len(self.task_graph.alphabet(name))
        return len(self.intensity_spec.channel(name).alphabet)

    def vertex_alphabet(self, vertex: str) -> tuple[str, ...]:
        kind = self.vertex_kind(vertex)
        if kind == "phase":
            return self.phase_space.labels
        if kind == "task":
            return self.task_graph.alphabet(vertex)
        return self.intensity_spec.channel(vertex).alphabet

    def expected_task_block_shape(self, name: str) -> tuple[int, int]:
        parents = self.task_parent_names(name)[1:]  # drop the phase parent
        rows = int(np.prod([self._parent_size(p) for p in parents], dtype=np.int64)) if parents else 1
        return rows, len(self.task_graph.alphabet(name))

    def expected_channel_shape(self, name: str) -> tuple[int, int]:
        parents = self.channel_parent_names(name)
        rows = int(np.prod([self._parent_size(p) for p in parents], dtype=np.int64)) if parents else 1
        return rows, len(self.intensity_spec.channel(name).alphabet)

    # -- time-resolved table accessors --------------------------------------

    def _substitution_at(self, vertex: str, t: int | None) -> AppliedSubstitution | None:
        hit = None
        for sub in self.applied:
            if sub.vertex == vertex and (t is None or sub.active_at(t)):
                hit = sub  # later applications win
        return hit

    def transition_matrix(self, t: int | None = None) -> np.ndarray:
        sub = self._substitution_at(PHASE_VERTEX, t)
        params = sub.transition if sub is not None else self.transition
        return build_transition_matrix(self.phase_space, params, t)

    def task_blocks(self, name: str, t: int | None = None) -> Mapping[int, np.ndarray]:
        sub = self._substitution_at(name, t)
        if sub is not None and sub.task_blocks is not None:
            return sub.task_blocks
        return self.cpts.tasks[name].blocks

    def task_table(self, name: str, t: int | None = None) -> np.ndarray:
        """Full expanded table: rows over (phase, intra parents, inter parents)."""
        blocks = self.task_blocks(name, t)
        full = np.concatenate([np.asarray(blocks.get(j, blocks[0]))
                               for j in range(self.phase_count)], axis=0)
        return _frozen(full)

    def task_tensor(self, name: str, t: int | None = None) -> np.ndarray:
        """Table reshaped to (phase, *parent sizes, own size) for filtering."""
        parents = self.task_parent_names(name)
        sizes = [self._parent_size(p) for p in parents]
        own = len(self.task_graph.alphabet(name))
        return self.task_table(name, t).reshape(*sizes, own)

    def intensity_rows(self, name: str, t: int | None = None) -> np.ndarray:
        sub = self._substitution_at(name, t)
        if sub is not None and sub.intensity_rows is not None:
            return sub.intensity_rows
        return self.cpts.intensities[name].rows

    def intensity_tensor(self, name: str, t: int | None = None) -> np.ndarray:
        parents = self.channel_parent_names(name)
        sizes = [self._parent_size(p) for p in parents]
        own = len(self.intensity_spec.channel(name).alphabet)
        return np.asarray(self.intensity_rows(name, t)).reshape(*sizes, own)

    def vertex_tag(self, vertex: str) -> str:
        kind = self.vertex_kind(vertex)
        if kind == "phase":
            return self.transition.tag
        if kind == "task":
            return self.cpts.tasks[vertex].tag
        return self.cpts.intensities[vertex].tag

    # -- identity across library entries ------------------------------------

    def table_identity(self, vertex: str) -> tuple:
        """Hashable fingerprint: name, parent signature, alphabets, rounded values."""
        kind = self.vertex_kind(vertex)
        signature = self.parent_signature(vertex)
        alphabet = self.vertex_alphabet(vertex)
        if kind == "phase":
            payload = (
                tuple(sorted((i, round(v, IDENTITY_DECIMALS)) for i, v in self.transition.abort.items())),
                tuple(sorted((i, round(v, IDENTITY_DECIMALS)) for i, v in self.transition.stay.items())),
                tuple(sorted((i, tuple(sorted((j, round(p, IDENTITY_DECIMALS)) for j, p in row.items())))
                             for i, row in self.transition.jump.items())),
                tuple(sorted(self.phase_space.reach.items())),
                tuple(sorted((t, tuple(sorted((part, tuple(sorted(
                    (i, v if not isinstance(v, Mapping) else tuple(sorted(v.items())))
                    for i, v in vals.items())))
                    for part, vals in parts.items())))
                    for t, parts in self.transition.overrides.items())),
            )
        elif kind == "task":
            blocks = self.cpts.tasks[vertex].blocks
            payload = tuple(sorted((j, _rounded(rows)) for j, rows in blocks.items()))
        else:
            payload = _rounded(self.cpts.intensities[vertex].rows)
        return (vertex, kind, signature, alphabet, payload)

    def edge_set(self) -> frozenset[tuple[str, str, bool]]:
        """Slice-template edges as (src, dst, lagged) triples."""
        edges = {(PHASE_VERTEX, PHASE_VERTEX, True)}
        for name in self.task_graph.order:
            for parent, lag in self.task_parent_names(name):
                edges.add((parent, name, lag))
        for ch in self.intensity_spec.channels:
            for parent, lag in self.channel_parent_names(ch.name):
                edges.add((parent, ch.name, lag))
        return frozenset(edges)


# ---------------------------------------------------------------------------
# Transition matrix
# ---------------------------------------------------------------------------


def build_transition_matrix(phase_space: PhaseSpace,
                            params: TransitionParams,
                            t: int | None = None) -> np.ndarray:
    """Assemble the (m+1)x(m+1) phase transition matrix for step ``t``.

    Row 0 is the unit vector on the inactive phase.  An active row i places
    the abort probability on column 0, the stay mass on column i, and
    spreads the leave mass over the reach set; every other column is zero.
    """
    m = phase_space.active_count
    out = np.zeros((m + 1, m + 1))
    out[0, 0] = 1.0
    for i in range(1, m + 1):
        try:
            qa = params.abort_at(i, t)
            qs = params.stay_at(i, t)
        except KeyError as exc:
            raise ConfigurationError(f"missing abort/stay parameter for phase index {i}") from exc
        reach = phase_space.reach.get(i, ())
        out[i, 0] = qa
        out[i, i] = (1.0 - qa) * qs
        if len(reach) == 1:
            jump = {reach[0]: 1.0}  # implicit, never elicited
        else:
            jump = dict(params.jump_at(i, t))
            missing = [j for j in reach if j not in jump]
            if missing:
                raise ConfigurationError(
                    f"phase {phase_space.labels[i]!r}: no jump probability for reachable "
                    f"phase(s) {[phase_space.labels[j] for j in missing]}")
        for j in reach:
            out[i, j] += (1.0 - qs) * (1.0 - qa) * jump[j]
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Slice graphs
# ---------------------------------------------------------------------------


def slice_graph(model: PlotModel) -> nx.DiGraph:
    """Explicit two-slice DAG over the components of both time slices.

    Nodes are named ``<vertex>@t-1`` and ``<vertex>@t``; every previous-slice
    node is a founder.
    """
    g = nx.DiGraph()
    for name in model.vertex_names:
        g.add_node(f"{name}@t-1", vertex=name, slice="t-1", kind=model.vertex_kind(name))
        g.add_node(f"{name}@t", vertex=name, slice="t", kind=model.vertex_kind(name))
    for src, dst, lagged in model.edge_set():
        src_node = f"{src}@t-1" if lagged else f"{src}@t"
        g.add_edge(src_node, f"{dst}@t")
    return g


def unroll(model: PlotModel, k: int) -> nx.DiGraph:
    """Concatenate ``k`` slice templates into the unrolled network over t=0..k."""
    if k < 1:
        raise ConfigurationError("unroll horizon must be >= 1")
    g = nx.DiGraph()
    for t in range(k + 1):
        for name in model.vertex_names:
            g.add_node(f"{name}@{t}", vertex=name, t=t, kind=model.vertex_kind(name))
    for t in range(1, k + 1):
        for src, dst, lagged in model.edge_set():
            src_t = t - 1 if lagged else t
            g.add_edge(f"{src}@{src_t}", f"{dst}@{t}")
    return g


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    where: str
    message: str

    def __str__(self):
        return f"[{self.code}] {self.where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)

    def raise_if_invalid(self):
        if not self.ok:
            raise ModelValidationError(self)


def _row_problems(rows: np.ndarray, expected_shape: tuple[int, int], where: str,
                  out: list[Violation], code_prefix: str):
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape != expected_shape:
        out.append(Violation(f"{code_prefix}.shape", where,
                             f"expected {expected_shape[0]}x{expected_shape[1]} rows, got {rows.shape}"))
        return
    if np.any(rows < 0):
        bad = np.argwhere(rows < 0)[0]
        out.append(Violation(f"{code_prefix}.negative", where,
                             f"negative entry at row {bad[0]}, column {bad[1]}"))
    sums = rows.sum(axis=1)
    bad_rows = np.where(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)[0]
    for r in bad_rows[:4]:
        out.append(Violation(f"{code_prefix}.row-sum", where,
                             f"row {int(r)} sums to {sums[r]:.12g}, expected 1"))


def validate_model(model: PlotModel) -> ValidationReport:
    """Check every structural invariant; an empty report means valid.

    Pure and idempotent: the model is never modified, and repeated calls
    return equal reports.
    """
    v: list[Violation] = []
    ps = model.phase_space
    m = ps.active_count

    # --- phase space ---
    if len(set(ps.labels)) != len(ps.labels):
        v.append(Violation("phase.duplicate-label", "phases", "phase labels must be unique"))
    if m < 1:
        v.append(Violation("phase.no-active", "phases", "at least one active phase is required"))
    if 0 in ps.reach:
        v.append(Violation("phase.absorbing", ps.labels[0],
                           "the inactive phase is absorbing and takes no reach entries"))
    for i in range(1, m + 1):
        reach = ps.reach.get(i, ())
        where = f"phases.reach[{ps.labels[i]}]"
        if not reach:
            v.append(Violation("phase.reach-empty", where, "reach set must be non-empty"))
            continue
        bad = [j for j in reach if j < 1 or j > m or j == i]
        if bad:
            v.append(Violation("phase.reach-invalid", where,
                               f"reach entries must name other active phases, got indices {bad}"))
    extra = [i for i in ps.reach if i < 1 or i > m]
    if extra:
        v.append(Violation("phase.reach-unknown", "phases.reach",
                           f"reach keyed by unknown phase indices {extra}"))

    # --- transition parameters ---
    tr = model.transition
    times: list[int | None] = [None] + sorted(tr.overrides)
    for i in range(1, m + 1):
        where = f"transition[{ps.labels[i]}]"
        for t in times:
            suffix = "" if t is None else f" at t={t}"
            try:
                qa = tr.abort_at(i, t)
                qs = tr.stay_at(i, t)
            except KeyError:
                v.append(Violation("transition.missing-param", where,
                                   f"abort/stay parameter missing{suffix}"))
                continue
            if not (0.0 <= qa <= 1.0) or not (0.0 <= qs <= 1.0):
                v.append(Violation("transition.range", where,
                                   f"abort={qa} stay={qs} outside [0,1]{suffix}"))
            reach = ps.reach.get(i, ())
            jump = dict(tr.jump_at(i, t))
            if len(reach) <= 1:
                if jump:
                    v.append(Violation("transition.jump.singleton-explicit", where,
                                       "jump distribution supplied for a singleton reach set; "
                                       "the single target is implicit" + suffix))
            else:
                missing = [ps.labels[j] for j in reach if j not in jump]
                stray = [ps.labels[j] for j in jump if j not in reach]
                if missing:
                    v.append(Violation("transition.jump.missing", where,
                                       f"jump distribution lacks reachable phase(s) {missing}{suffix}"))
                if stray:
                    v.append(Violation("transition.jump.stray", where,
                                       f"jump distribution names unreachable phase(s) {stray}{suffix}"))
                if not missing and not stray:
                    total = math.fsum(jump.values())
                    if any(p < 0 for p in jump.values()):
                        v.append(Violation("transition.jump.negative", where,
                                           f"negative jump probability{suffix}"))
                    elif abs(total - 1.0) > ROW_SUM_TOLERANCE:
                        v.append(Violation("transition.jump.row-sum", where,
                                           f"jump probabilities sum to {total:.12g}{suffix}, expected 1"))
    if tr.tag not in PARTITION_TAGS:
        v.append(Violation("partition.unknown-tag", "transition", f"unknown partition tag {tr.tag!r}"))

    # row sums of the realized matrix, per override step
    for t in times:
        try:
            matrix = model.transition_matrix(t)
        except ConfigurationError:
            continue  # already reported above
        sums = matrix.sum(axis=1)
        bad = np.where(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)[0]
        for i in bad[:4]:
            suffix = "homogeneous" if t is None else f"t={t}"
            v.append(Violation("transition.row-sum", f"transition[{ps.labels[int(i)]}]",
                               f"row sums to {sums[i]:.12g} ({suffix}), expected 1"))

    # --- vertex name discipline ---
    g = model.task_graph
    names = [PHASE_VERTEX, *g.order, *model.intensity_spec.names]
    dupes = {n for n in names if names.count(n) > 1}
    for n in sorted(dupes):
        v.append(Violation("vertex.duplicate-name", n,
                           "task and channel names must be unique and distinct from the phase vertex"))

    # --- task graph ---
    task_index = {n: k for k, n in enumerate(g.order)}
    for src, dst in g.intra_edges:
        if src not in task_index or dst not in task_index:
            v.append(Violation("task.edge-unknown", f"{src}->{dst}", "edge references an unknown task"))
        elif task_index[src] >= task_index[dst]:
            v.append(Violation("task.edge-order", f"{src}->{dst}",
                               "same-slice task edges must run from a lower-indexed task to a higher one"))
    for src, dst in g.inter_edges:
        if src not in task_index or dst not in task_index:
            v.append(Violation("task.edge-unknown", f"{src}->{dst} (lagged)",
                               "edge references an unknown task"))
    intra = set(g.intra_edges)
    for j, members in g.task_sets.items():
        if j < 1 or j > m:
            v.append(Violation("task.set-unknown-phase", f"task_sets[{j}]",
                               "task set keyed by an invalid active phase index"))
            continue
        unknown = sorted(n for n in members if n not in task_index)
        if unknown:
            v.append(Violation("task.set-unknown-task", f"task_sets[{ps.labels[j]}]",
                               f"unknown task(s) {unknown}"))
            continue
        ordered = sorted(members, key=task_index.get)
        for a, b in itertools.combinations(ordered, 2):
            if (a, b) not in intra:
                v.append(Violation("task.missing-mandatory-edge", f"task_sets[{ps.labels[j]}]",
                                   f"tasks {a!r} and {b!r} share this task set, so the edge "
                                   f"{a}->{b} is mandatory"))
    for name in g.order:
        if len(g.alphabet(name)) < 2:
            v.append(Violation("task.alphabet", name, "task alphabet needs at least two states"))

    # --- intensity channels ---
    spec = model.intensity_spec
    for k, ch in enumerate(spec.channels):
        where = f"intensities[{ch.name}]"
        tasks = ch.task_parents
        if len(tasks) != 1:
            v.append(Violation("intensity.owner", where,
                               f"a channel must have exactly one task parent, got {len(tasks)}"))
        else:
            if tasks[0] not in task_index:
                v.append(Violation("intensity.owner-unknown", where,
                                   f"owner task {tasks[0]!r} is not a model task"))
        for p in ch.parents:
            if p.kind in ("phase", "phase_lag"):
                slice_name = "W@t-1" if p.kind == "phase_lag" else "W@t"
                v.append(Violation("intensity.phase-edge", where,
                                   f"forbidden edge {slice_name} -> {ch.name}: phases may not "
                                   "feed intensity channels directly"))
            elif p.kind == "channel_lag":
                try:
                    src_idx = spec.index(p.name)
                except KeyError:
                    v.append(Violation("intensity.lag-unknown", where,
                                       f"lag parent {p.name!r} is not a channel"))
                    continue
                if src_idx >= k:
                    v.append(Violation("intensity.lag-order", where,
                                       f"lag parent {p.name!r} must be listed before {ch.name!r}"))
            elif p.kind != "task":
                v.append(Violation("intensity.parent-kind", where, f"unknown parent kind {p.kind!r}"))
        if len(ch.alphabet) < 2:
            v.append(Violation("intensity.alphabet", where, "channel alphabet needs at least two states"))

    # --- CPT coverage and dimensions ---
    for name in g.order:
        where = f"cpts.tasks[{name}]"
        cpt = model.cpts.tasks.get(name)
        if cpt is None:
            v.append(Violation("cpt.missing", where, "no CPT supplied for this task"))
            continue
        expected_blocks = {0} | {j for j in range(1, m + 1) if name in g.task_sets.get(j, ())}
        got_blocks = set(cpt.blocks)
        for j in sorted(expected_blocks - got_blocks):
            v.append(Violation("cpt.block-missing", where,
                               f"missing row block for phase {ps.labels[j]!r}"))
        for j in sorted(got_blocks - expected_blocks):
            label = ps.labels[j] if 0 <= j < len(ps.labels) else j
            v.append(Violation("cpt.block-stray", where,
                               f"row block for phase {label!r} supplied, but the task is not in "
                               "that phase's task set"))
        shape = model.expected_task_block_shape(name)
        for j in sorted(got_blocks & expected_blocks):
            _row_problems(cpt.blocks[j], shape, f"{where}[{ps.labels[j]}]", v, "cpt")
        if cpt.tag not in PARTITION_TAGS:
            v.append(Violation("partition.unknown-tag", where, f"unknown partition tag {cpt.tag!r}"))
    for stray in sorted(set(model.cpts.tasks) - set(g.order)):
        v.append(Violation("cpt.stray", f"cpts.tasks[{stray}]", "CPT for an unknown task"))

    for ch in spec.channels:
        where = f"cpts.intensities[{ch.name}]"
        cpt = model.cpts.intensities.get(ch.name)
        if cpt is None:
            v.append(Violation("cpt.missing", where, "no CPT supplied for this channel"))
            continue
        _row_problems(cpt.rows, model.expected_channel_shape(ch.name), where, v, "cpt")
        if cpt.tag not in PARTITION_TAGS:
            v.append(Violation("partition.unknown-tag", where, f"unknown partition tag {cpt.tag!r}"))
    for stray in sorted(set(model.cpts.intensities) - set(spec.names)):
        v.append(Violation("cpt.stray", f"cpts.intensities[{stray}]", "CPT for an unknown channel"))

    # --- applied substitutions must stay dimension-consistent ---
    for sub in model.applied:
        where = f"applied[{sub.decision_id}].{sub.vertex}"
        if sub.vertex == PHASE_VERTEX and sub.transition is not None:
            try:
                matrix = build_transition_matrix(ps, sub.transition)
            except ConfigurationError as exc:
                v.append(Violation("intervention.transition", where, str(exc)))
            else:
                sums = matrix.sum(axis=1)
                if np.any(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE):
                    v.append(Violation("intervention.row-sum", where, "substituted rows must sum to 1"))
        elif sub.task_blocks is not None:
            expected_blocks = {0} | {j for j in range(1, m + 1)
                                     if sub.vertex in g.task_sets.get(j, ())}
            if set(sub.task_blocks) != expected_blocks:
                v.append(Violation("intervention.blocks", where,
                                   "substituted blocks must cover exactly the phases the task CPT stores"))
            shape = model.expected_task_block_shape(sub.vertex)
            for j, rows in sub.task_blocks.items():
                _row_problems(rows, shape, f"{where}[{j}]", v, "intervention")
        elif sub.intensity_rows is not None:
            _row_problems(sub.intensity_rows, model.expected_channel_shape(sub.vertex),
                          where, v, "intervention")

    # --- horizon, unrolling ---
    if model.horizon < 1:
        v.append(Violation("meta.horizon", "meta", "horizon must be a positive integer"))
    if not dupes:
        try:
            if not nx.is_directed_acyclic_graph(slice_graph(model)):
                v.append(Violation("graph.cycle", "slice graph", "the two-slice graph contains a cycle"))
        except KeyError:
            pass  # unknown vertex references already reported

    return ValidationReport(tuple(v))


def iter_parent_configs(sizes: Sequence[int]) -> Iterable[tuple[int, ...]]:
    """Row-major enumeration of parent configurations (first parent slowest)."""
    if not sizes:
        yield ()
        return
    yield from itertools.product(*(range(s) for s in sizes))


def row_index(sizes: Sequence[int], config: Sequence[int]) -> int:
    """Flat row index of a parent configuration under row-major ordering."""
    idx = 0
    for size, value in zip(sizes, config):
        idx = idx * size + value
    return idx
