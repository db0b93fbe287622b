"""Brute-force reference computations, independent of the engine's recursions.

The trajectory oracle materializes the full joint probability table over
entire state sequences and reads filtered/smoothed posteriors off it by
marginalization.  Nothing here reuses the package's filtering, smoothing,
scoring, or conjugate-update code paths.
"""

import itertools
import math

import numpy as np
from scipy.special import gammaln

from plotdbn.records import MISSING


def _states(model):
    sizes = model.state_shape
    return list(itertools.product(*(range(s) for s in sizes)))


def compound_kernel(model, t):
    """K[s', s] over compound states, built cell by cell from the tables."""
    states = _states(model)
    g = model.task_graph
    n = len(g.order)
    P = model.transition_matrix(t)
    tensors = [model.task_tensor(name, t) for name in g.order]
    intra = [[g.index(p) for p in g.intra_parents(name)] for name in g.order]
    inter = [[g.index(p) for p in g.inter_parents(name)] for name in g.order]
    K = np.zeros((len(states), len(states)))
    for a, prev in enumerate(states):
        for b, cur in enumerate(states):
            p = P[prev[0], cur[0]]
            for i in range(n):
                idx = (cur[0], *[cur[1 + j] for j in intra[i]],
                       *[prev[1 + j] for j in inter[i]], cur[1 + i])
                p *= tensors[i][idx]
                if p == 0.0:
                    break
            K[a, b] = p
    return K


def emission_vector(model, record, prev_record):
    """e[s] for one record; lag parents read from the previous record.

    Valid when every lag source was observed at t-1 (t=1 uses the baseline);
    the random-model generator guarantees this.
    """
    states = _states(model)
    g = model.task_graph
    spec = model.intensity_spec
    e = np.ones(len(states))
    for ch in spec.channels:
        outcome = record.channels.get(ch.name, MISSING)
        if outcome is MISSING:
            continue
        z = list(ch.alphabet).index(outcome)
        tensor = model.intensity_tensor(ch.name, record.t)
        lag_idx = []
        for lag in ch.lag_parents:
            lag_alpha = spec.channel(lag).alphabet
            if record.t == 1 or prev_record is None:
                lag_idx.append(0)
            else:
                value = prev_record.channels.get(lag, MISSING)
                if value is MISSING:
                    raise AssertionError("oracle needs observed lag sources")
                lag_idx.append(list(lag_alpha).index(value))
        owner_axis = g.index(ch.owner)
        for s_idx, s in enumerate(states):
            e[s_idx] *= tensor[(s[1 + owner_axis], *lag_idx, z)]
    return e


def trajectory_tables(model, prior, records):
    """Full joint tables over state prefixes, one per time step."""
    states = _states(model)
    index = {s: k for k, s in enumerate(states)}
    p0 = np.array([prior[s] for s in states])
    tables = [p0]
    prev_record = None
    for k, record in enumerate(records):
        K = compound_kernel(model, record.t)
        e = emission_vector(model, record, prev_record)
        step = K * e[None, :]
        tables.append(tables[-1][..., None] * step.reshape((1,) * k + (len(states), len(states))))
        prev_record = record
    return tables, states, index


def filtered_by_enumeration(model, prior, records):
    """Per-step filtered joints and evidence likelihoods via the joint table."""
    tables, states, _ = trajectory_tables(model, prior, records)
    joints, evidences = [], []
    prev_total = 1.0
    for t in range(1, len(records) + 1):
        table = tables[t]
        axes = tuple(range(t))
        marg = table.sum(axis=axes)
        total = marg.sum()
        evidences.append(total / prev_total)
        prev_total = total
        joint = np.zeros(model.state_shape)
        for k, s in enumerate(states):
            joint[s] = marg[k] / total
        joints.append(joint)
    return joints, evidences


def smoothed_by_enumeration(model, prior, records):
    """Per-step smoothed phase posteriors from the full-horizon joint table."""
    tables, states, _ = trajectory_tables(model, prior, records)
    full = tables[-1]
    horizon = len(records)
    out = np.zeros((horizon + 1, model.phase_count))
    for t in range(horizon + 1):
        axes = tuple(a for a in range(horizon + 1) if a != t)
        marg = full.sum(axis=axes) if axes else full
        marg = marg / marg.sum()
        for k, s in enumerate(states):
            out[t, s[0]] += marg[k]
    return out


def evidence_by_enumeration(model, prior, records):
    tables, _, _ = trajectory_tables(model, prior, records)
    return float(tables[-1].sum())


# ---------------------------------------------------------------------------
# Phase-path expectation for decision scoring
# ---------------------------------------------------------------------------


def expected_utility_by_paths(model, start_marginal, start_t, horizon, utility, decision):
    """E[U] by explicit enumeration over phase paths."""
    n = model.phase_count
    matrices = [model.transition_matrix(start_t + k) for k in range(1, horizon + 1)]
    total = 0.0
    for path in itertools.product(range(n), repeat=horizon + 1):
        p = start_marginal[path[0]]
        if p == 0.0:
            continue
        for k in range(1, horizon + 1):
            p *= matrices[k - 1][path[k - 1], path[k]]
            if p == 0.0:
                break
        if p == 0.0:
            continue
        total += p * _utility_of_path(model, path, horizon, utility, decision)
    return total


def _utility_of_path(model, path, horizon, utility, decision):
    values = {}
    for attr in utility.attributes:
        if attr.kind == "decision_cost":
            values[attr.name] = decision.cost
        else:
            idx = model.phase_space.index(attr.phase)
            if attr.kind == "phase_ever":
                values[attr.name] = 1 if idx in path else 0
            elif attr.kind == "time_to_phase":
                values[attr.name] = path.index(idx) if idx in path else horizon + 1
            elif attr.kind == "final_phase_is":
                values[attr.name] = 1 if path[-1] == idx else 0
    total = utility.offset
    for term in utility.terms:
        v = values[term.attr]
        if term.weight is not None:
            total += term.weight * v
        else:
            table = term.table
            total += float(table[v] if v in table else table[str(v)])
    return total


# ---------------------------------------------------------------------------
# Dirichlet posterior moments by direct integration
# ---------------------------------------------------------------------------


def dirichlet_posterior_mean(alpha_row, count_row):
    """Posterior mean of each cell via log-Beta normalizer ratios.

    E[p_c | data] = B(alpha + n + e_c) / B(alpha + n) evaluated with gamma
    functions, never with the conjugate shortcut.
    """
    a = np.asarray(alpha_row, dtype=float) + np.asarray(count_row, dtype=float)

    def log_beta(vec):
        return float(np.sum(gammaln(vec)) - gammaln(np.sum(vec)))

    base = log_beta(a)
    means = []
    for c in range(len(a)):
        bumped = a.copy()
        bumped[c] += 1.0
        means.append(math.exp(log_beta(bumped) - base))
    return np.array(means)


def dirichlet_cross_moment(alpha_1, count_1, alpha_2, count_2, c1, c2):
    """E[p_c1 q_c2] for cells of two distinct tables under the joint posterior.

    Because the likelihood separates into per-table count factors, the joint
    posterior integral factorizes; this evaluates the two one-table
    integrals and multiplies them.
    """
    return float(dirichlet_posterior_mean(alpha_1, count_1)[c1]
                 * dirichlet_posterior_mean(alpha_2, count_2)[c2])
