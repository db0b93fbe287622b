"""Exact filtering, prediction, and smoothing for plot models.

The filtered object is the full joint over (phase, task vector).  The
prediction step exploits the factorisation of the slice template: the phase
moves first, then each task conditional is multiplied in and previous-slice
task axes are summed out as soon as nothing downstream consumes them.
Evidence enters as per-channel likelihood vectors over the owning task;
missing channels contribute likelihood one.

Lag edges between channels are handled by retaining the previous step's
channel values.  When a lag parent was itself missing, its model-implied
predictive distribution (given everything observed so far) stands in for
the missing value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .core import PlotModel
from .errors import (ConfigurationError, DimensionMismatchError,
                     InconsistentEvidenceError, StateSpaceCapError)
from .records import MISSING, ObservationRecord, check_record

#: Exact joint filtering refuses models whose state space exceeds this many
#: cells; there is no silent fallback to an approximation.
DEFAULT_CELL_CAP = 2 ** 20

_JOINT_TOLERANCE = 1e-9
_WEIGHT_TOLERANCE = 1e-12

# einsum axis labels: phase axis, previous-slice tasks, current-slice tasks
_W = 0
_PREV = 100
_CUR = 200


def _einsum(a, a_labels, b, b_labels, out_labels):
    """np.einsum over symbolic axis labels, remapped into its valid range."""
    mapping: dict[int, int] = {}
    for label in [*a_labels, *b_labels, *out_labels]:
        if label not in mapping:
            mapping[label] = len(mapping)
    return np.einsum(a, [mapping[l] for l in a_labels],
                     b, [mapping[l] for l in b_labels],
                     [mapping[l] for l in out_labels])


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Filtered joint over (phase, tasks) plus the retained lag information."""

    t: int
    joint: np.ndarray
    category_weights: Mapping[str, float]
    lag_state: tuple[np.ndarray, ...]
    log_likelihood: float = 0.0

    def __post_init__(self):
        joint = np.ascontiguousarray(np.asarray(self.joint, dtype=float))
        joint.setflags(write=False)
        object.__setattr__(self, "joint", joint)
        object.__setattr__(self, "category_weights",
                           MappingProxyType(dict(self.category_weights)))
        frozen = []
        for arr in self.lag_state:
            a = np.ascontiguousarray(np.asarray(arr, dtype=float))
            a.setflags(write=False)
            frozen.append(a)
        object.__setattr__(self, "lag_state", tuple(frozen))

    def phase_marginal(self) -> np.ndarray:
        axes = tuple(range(1, self.joint.ndim))
        return self.joint.sum(axis=axes) if axes else self.joint.copy()

    def task_marginal_at(self, axis: int) -> np.ndarray:
        """Marginal over the task occupying joint axis ``axis + 1``."""
        other = tuple(a for a in range(self.joint.ndim) if a != axis + 1)
        return self.joint.sum(axis=other)

    def to_payload(self) -> dict:
        return {"t": self.t,
                "joint": self.joint.tolist(),
                "category_weights": dict(self.category_weights),
                "lag_state": [a.tolist() for a in self.lag_state],
                "log_likelihood": self.log_likelihood}

    @classmethod
    def from_payload(cls, payload: Mapping) -> "BeliefState":
        return cls(t=payload["t"], joint=np.asarray(payload["joint"], dtype=float),
                   category_weights=payload["category_weights"],
                   lag_state=tuple(np.asarray(a, dtype=float) for a in payload["lag_state"]),
                   log_likelihood=payload["log_likelihood"])


@dataclass(frozen=True, eq=False)
class FilterStep:
    belief: BeliefState
    evidence: float


@dataclass(frozen=True, eq=False)
class SmoothResult:
    """Per-step smoothed phase posteriors, row t for p(W_t | all evidence)."""

    phase_posteriors: np.ndarray
    log_likelihood: float
    filtered: tuple[BeliefState, ...] = ()


@dataclass(frozen=True, eq=False)
class MixtureStep:
    beliefs: Mapping[str, BeliefState]
    weights: Mapping[str, float]
    evidences: Mapping[str, float]
    mixture_evidence: float

    def __post_init__(self):
        object.__setattr__(self, "beliefs", MappingProxyType(dict(self.beliefs)))
        object.__setattr__(self, "weights", MappingProxyType(dict(self.weights)))
        object.__setattr__(self, "evidences", MappingProxyType(dict(self.evidences)))


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------


def _baseline_lag_state(model: PlotModel) -> tuple[np.ndarray, ...]:
    """Point mass on each channel's first alphabet entry (the quiet baseline)."""
    out = []
    for ch in model.intensity_spec.channels:
        vec = np.zeros(len(ch.alphabet))
        vec[0] = 1.0
        out.append(vec)
    return tuple(out)


def prior_from_spec(model: PlotModel, spec: Mapping | None) -> np.ndarray | None:
    """Build a prior array from a small declarative spec.

    ``{"kind": "point", "phase": ..., "tasks": {...}}`` puts all mass on one
    cell (tasks default to their first state); ``{"kind": "uniform"}`` spreads
    mass over every cell; ``{"kind": "phases", "probs": {...}}`` distributes
    over phases with all tasks at their first state.
    """
    if spec is None:
        return None
    kind = spec.get("kind")
    if kind == "point":
        joint = np.zeros(model.state_shape)
        phase = spec.get("phase", model.phase_space.inactive)
        tasks = spec.get("tasks", {})
        idx = [model.phase_space.index(phase)]
        for name in model.task_graph.order:
            alphabet = model.task_graph.alphabet(name)
            idx.append(alphabet.index(tasks[name]) if name in tasks else 0)
        joint[tuple(idx)] = 1.0
        return joint
    if kind == "uniform":
        return np.full(model.state_shape, 1.0 / model.state_cells)
    if kind == "phases":
        probs = spec.get("probs", {})
        joint = np.zeros(model.state_shape)
        for label, p in probs.items():
            idx = (model.phase_space.index(label),) + (0,) * len(model.task_sizes)
            joint[idx] = float(p)
        total = joint.sum()
        if abs(total - 1.0) > _JOINT_TOLERANCE:
            raise ConfigurationError(f"phase probabilities sum to {total:.12g}, expected 1")
        return joint / total
    raise ConfigurationError(f"unknown prior kind {kind!r}")


def init_belief(model: PlotModel, prior: np.ndarray | None = None, *,
                cap: int = DEFAULT_CELL_CAP) -> BeliefState:
    """Belief at t=0; the default prior is a point mass on (inactive, all idle)."""
    if model.state_cells > cap:
        raise StateSpaceCapError(
            f"model {model.id!r} has {model.state_cells} joint cells, over the cap of {cap}; "
            "exact filtering refuses rather than approximating")
    if prior is None:
        joint = np.zeros(model.state_shape)
        joint[(0,) * len(model.state_shape)] = 1.0
    else:
        joint = np.asarray(prior, dtype=float)
        if joint.shape != model.state_shape:
            raise DimensionMismatchError(
                f"prior shape {joint.shape} does not match the state shape {model.state_shape}")
        if np.any(joint < 0):
            raise ConfigurationError("prior has a negative entry")
        total = joint.sum()
        if abs(total - 1.0) > _JOINT_TOLERANCE:
            raise ConfigurationError(f"prior sums to {total:.12g}, expected 1")
        joint = joint / total
    return BeliefState(t=0, joint=joint,
                       category_weights={model.category.key: 1.0},
                       lag_state=_baseline_lag_state(model))


# ---------------------------------------------------------------------------
# Prediction step
# ---------------------------------------------------------------------------


def _last_prev_consumer(model: PlotModel) -> dict[int, int]:
    """For each task index, the largest task index consuming its lagged value."""
    g = model.task_graph
    out = {i: -1 for i in range(len(g.order))}
    for i, name in enumerate(g.order):
        for parent in g.inter_parents(name):
            j = g.index(parent)
            out[j] = max(out[j], i)
    return out


def _predict_joint(joint: np.ndarray, model: PlotModel, t: int) -> np.ndarray:
    """One exact prediction step: p(W_t, tasks_t | evidence up to t-1)."""
    g = model.task_graph
    n = len(g.order)
    matrix = model.transition_matrix(t)
    factor = np.tensordot(matrix, joint, axes=([0], [0]))  # (W_t, prev tasks...)
    labels = [_W] + [_PREV + i for i in range(n)]

    consumers = _last_prev_consumer(model)
    for j in range(n - 1, -1, -1):
        if consumers[j] == -1:
            axis = labels.index(_PREV + j)
            factor = factor.sum(axis=axis)
            labels.pop(axis)

    for i, name in enumerate(g.order):
        cpt = model.task_tensor(name, t)
        cpt_labels = ([_W]
                      + [_CUR + g.index(p) for p in g.intra_parents(name)]
                      + [_PREV + g.index(p) for p in g.inter_parents(name)]
                      + [_CUR + i])
        out_labels = labels + [_CUR + i]
        factor = _einsum(factor, labels, cpt, cpt_labels, out_labels)
        labels = out_labels
        for j in range(n):
            if consumers[j] == i:
                axis = labels.index(_PREV + j)
                factor = factor.sum(axis=axis)
                labels.pop(axis)

    target = [_W] + [_CUR + i for i in range(n)]
    if labels != target:
        order = [labels.index(l) for l in target]
        factor = np.transpose(factor, axes=order)
    return factor


def _adjoint_step(values: np.ndarray, model: PlotModel, t: int) -> np.ndarray:
    """Adjoint of the prediction step: given X(s_t), return sum_s K_t(s', s) X(s)."""
    g = model.task_graph
    n = len(g.order)
    factor = values
    labels = [_W] + [_CUR + i for i in range(n)]

    last_cur = {i: i for i in range(n)}
    for i, name in enumerate(g.order):
        for parent in g.intra_parents(name):
            j = g.index(parent)
            last_cur[j] = max(last_cur[j], i)

    for i, name in enumerate(g.order):
        cpt = model.task_tensor(name, t)
        cpt_labels = ([_W]
                      + [_CUR + g.index(p) for p in g.intra_parents(name)]
                      + [_PREV + g.index(p) for p in g.inter_parents(name)]
                      + [_CUR + i])
        new_prev = [l for l in cpt_labels if l >= _PREV and l < _CUR and l not in labels]
        out_labels = labels + new_prev
        factor = _einsum(factor, labels, cpt, cpt_labels, out_labels)
        labels = out_labels
        for j in range(n):
            if last_cur[j] == i:
                axis = labels.index(_CUR + j)
                factor = factor.sum(axis=axis)
                labels.pop(axis)

    # tasks nobody consumes across the slice boundary: X is constant in them
    matrix = model.transition_matrix(t)
    partial = _einsum(matrix, [_PREV - 1, _W], factor, labels,
                       [_PREV - 1] + labels[1:])
    out_labels = [_PREV - 1] + labels[1:]
    sizes = dict(zip(out_labels, partial.shape))
    full_labels = [_PREV - 1] + [_PREV + i for i in range(n)]
    expand = [slice(None) if l in out_labels else None for l in full_labels]
    order = [out_labels.index(l) for l in full_labels if l in out_labels]
    arranged = np.transpose(partial, axes=order)
    arranged = arranged[tuple(expand)]
    target_shape = [model.phase_count] + [len(g.alphabet(name)) for name in g.order]
    return np.broadcast_to(arranged, target_shape)


# ---------------------------------------------------------------------------
# Evidence
# ---------------------------------------------------------------------------


def _channel_likelihood(model: PlotModel, channel_name: str, t: int,
                        outcome_idx: int, lag_state: Sequence[np.ndarray]) -> np.ndarray:
    """Likelihood vector over the owning task's states for one observed outcome."""
    spec = model.intensity_spec
    ch = spec.channel(channel_name)
    tensor = model.intensity_tensor(channel_name, t)
    reduced = tensor[..., outcome_idx]  # axes: (owner, *lag parents)
    lag_names = list(ch.lag_parents)
    for axis in range(len(lag_names), 0, -1):
        dist = lag_state[spec.index(lag_names[axis - 1])]
        reduced = np.tensordot(reduced, dist, axes=([axis], [0]))
    return reduced


def _channel_predictive(model: PlotModel, channel_name: str, t: int,
                        owner_marginal: np.ndarray,
                        lag_state: Sequence[np.ndarray]) -> np.ndarray:
    """Model-implied distribution of a channel given the current belief."""
    spec = model.intensity_spec
    ch = spec.channel(channel_name)
    tensor = model.intensity_tensor(channel_name, t)  # (owner, *lags, outcome)
    reduced = tensor
    lag_names = list(ch.lag_parents)
    for axis in range(len(lag_names), 0, -1):
        dist = lag_state[spec.index(lag_names[axis - 1])]
        reduced = np.tensordot(reduced, dist, axes=([axis], [0]))
    return owner_marginal @ reduced  # (outcome,)


def _apply_evidence(joint: np.ndarray, model: PlotModel, obs: ObservationRecord,
                    lag_state: Sequence[np.ndarray]) -> tuple[np.ndarray, float]:
    g = model.task_graph
    weighted = joint
    for ch in model.intensity_spec.channels:
        outcome = obs.outcome(ch.name)
        if outcome is MISSING:
            continue
        idx = list(ch.alphabet).index(outcome)
        vector = _channel_likelihood(model, ch.name, obs.t, idx, lag_state)
        owner_axis = 1 + g.index(ch.owner)
        shape = [1] * weighted.ndim
        shape[owner_axis] = len(vector)
        weighted = weighted * vector.reshape(shape)
    evidence = float(weighted.sum())
    return weighted, evidence


def _next_lag_state(model: PlotModel, joint: np.ndarray, obs: ObservationRecord,
                    prev_lag: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
    g = model.task_graph
    out = []
    for ch in model.intensity_spec.channels:
        outcome = obs.outcome(ch.name)
        if outcome is not MISSING:
            vec = np.zeros(len(ch.alphabet))
            vec[list(ch.alphabet).index(outcome)] = 1.0
            out.append(vec)
            continue
        owner_axis = 1 + g.index(ch.owner)
        other = tuple(a for a in range(joint.ndim) if a != owner_axis)
        marginal = joint.sum(axis=other)
        out.append(_channel_predictive(model, ch.name, obs.t, marginal, prev_lag))
    return tuple(out)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def filter_step(belief: BeliefState, model: PlotModel, obs: ObservationRecord) -> FilterStep:
    """Advance the belief one step and absorb the observation record.

    Returns the new belief together with the step's evidence likelihood
    p(z_t | earlier evidence).  Impossible evidence raises
    InconsistentEvidenceError rather than produce NaNs.
    """
    if obs.t != belief.t + 1:
        raise ConfigurationError(
            f"observation at t={obs.t} cannot follow a belief at t={belief.t}")
    check_record(obs, model)
    predicted = _predict_joint(belief.joint, model, obs.t)
    weighted, total = _apply_evidence(predicted, model, obs, belief.lag_state)
    if total <= 0.0:
        raise InconsistentEvidenceError(
            f"t={obs.t}: the observed record has probability zero under model {model.id!r}")
    # condition on the normalized prediction so float drift in the predicted
    # mass never pushes the evidence likelihood above one
    evidence = total / predicted.sum()
    joint = weighted / total
    lag_state = _next_lag_state(model, joint, obs, belief.lag_state)
    new_belief = BeliefState(t=obs.t, joint=joint,
                             category_weights=belief.category_weights,
                             lag_state=lag_state,
                             log_likelihood=belief.log_likelihood + math.log(evidence))
    return FilterStep(belief=new_belief, evidence=evidence)


def filter_log(model: PlotModel, records: Sequence[ObservationRecord],
               prior: np.ndarray | None = None, *,
               cap: int = DEFAULT_CELL_CAP) -> list[FilterStep]:
    """Filter a whole log from t=1..T, one step per record."""
    belief = init_belief(model, prior, cap=cap)
    steps = []
    for record in records:
        step = filter_step(belief, model, record)
        steps.append(step)
        belief = step.belief
    return steps


def predict(belief: BeliefState, model: PlotModel, k: int) -> np.ndarray:
    """Phase marginals 1..k steps ahead with no evidence absorbed."""
    if k < 1:
        raise ConfigurationError("prediction horizon must be >= 1")
    marginal = belief.phase_marginal()
    out = np.zeros((k, model.phase_count))
    for step in range(1, k + 1):
        marginal = marginal @ model.transition_matrix(belief.t + step)
        out[step - 1] = marginal
    return out


def smooth(model: PlotModel, records: Sequence[ObservationRecord],
           prior: np.ndarray | None = None, *,
           cap: int = DEFAULT_CELL_CAP) -> SmoothResult:
    """Forward-backward phase posteriors given the complete log t=1..T.

    Row t of the result is p(W_t | all evidence); row T matches the filtered
    posterior at T.
    """
    records = sorted(records, key=lambda r: r.t)
    expected = list(range(1, len(records) + 1))
    if [r.t for r in records] != expected:
        raise ConfigurationError(
            f"smoothing needs a complete log t=1..T, got t={[r.t for r in records]}")
    belief0 = init_belief(model, prior, cap=cap)
    beliefs = [belief0]
    evidences = []
    for record in records:
        step = filter_step(beliefs[-1], model, record)
        beliefs.append(step.belief)
        evidences.append(step.evidence)

    horizon = len(records)
    posteriors = np.zeros((horizon + 1, model.phase_count))
    beta = np.ones(model.state_shape)
    posteriors[horizon] = beliefs[horizon].phase_marginal()
    for t in range(horizon, 0, -1):
        weighted, _ = _apply_evidence(beta, model, records[t - 1], beliefs[t - 1].lag_state)
        beta = _adjoint_step(weighted, model, t) / evidences[t - 1]
        gamma = beliefs[t - 1].joint * beta
        total = gamma.sum()
        if total <= 0.0:
            raise InconsistentEvidenceError(f"smoothing collapsed at t={t - 1}")
        gamma = gamma / total
        axes = tuple(range(1, gamma.ndim))
        posteriors[t - 1] = gamma.sum(axis=axes) if axes else gamma
    return SmoothResult(phase_posteriors=posteriors,
                        log_likelihood=beliefs[-1].log_likelihood,
                        filtered=tuple(beliefs))


def filter_mixture(beliefs: Mapping[str, BeliefState], models: Mapping[str, PlotModel],
                   obs: ObservationRecord,
                   weights: Mapping[str, float] | None = None) -> MixtureStep:
    """Filter each category's belief and reweight the mixture by Bayes rule.

    A category whose model rules out the evidence drops to weight zero and
    its belief freezes; only when every live category is inconsistent does
    the step fail.
    """
    if set(beliefs) != set(models):
        raise ConfigurationError("beliefs and models must cover the same categories")
    if not beliefs:
        raise ConfigurationError("mixture filtering needs at least one category")
    if weights is None:
        any_belief = next(iter(beliefs.values()))
        weights = {c: any_belief.category_weights.get(c, 0.0) for c in beliefs}
    total_w = sum(weights.values())
    if abs(total_w - 1.0) > _WEIGHT_TOLERANCE:
        raise ConfigurationError(f"category weights sum to {total_w:.12g}, expected 1")

    channel_sets = {c: set(m.intensity_spec.names) for c, m in models.items()}
    reference = next(iter(channel_sets.values()))
    if any(s != reference for s in channel_sets.values()):
        raise ConfigurationError("mixture candidates must share their observation channels")

    new_beliefs: dict[str, BeliefState] = {}
    evidences: dict[str, float] = {}
    for category in sorted(beliefs):
        if weights[category] <= 0.0:
            new_beliefs[category] = beliefs[category]
            evidences[category] = 0.0
            continue
        try:
            step = filter_step(beliefs[category], models[category], obs)
        except InconsistentEvidenceError:
            new_beliefs[category] = beliefs[category]
            evidences[category] = 0.0
            continue
        new_beliefs[category] = step.belief
        evidences[category] = step.evidence

    mixture_evidence = sum(weights[c] * evidences[c] for c in beliefs)
    if mixture_evidence <= 0.0:
        raise InconsistentEvidenceError(
            f"t={obs.t}: the record is impossible under every candidate category")
    new_weights = {c: weights[c] * evidences[c] / mixture_evidence for c in sorted(beliefs)}
    stamped = {c: BeliefState(t=b.t, joint=b.joint, category_weights=new_weights,
                              lag_state=b.lag_state, log_likelihood=b.log_likelihood)
               for c, b in new_beliefs.items()}
    return MixtureStep(beliefs=stamped, weights=new_weights, evidences=evidences,
                       mixture_evidence=mixture_evidence)
