"""Seeded random plot models sized for brute-force enumeration."""

import numpy as np

from plotdbn import model_io
from plotdbn.records import ObservationRecord
from plotdbn.simulate import SimulationConfig, simulate_incident

#: Enumeration over state sequences must stay under this many table cells.
ENUMERATION_BUDGET = 3_000_000


def random_model_doc(rng, *, max_active=4, max_tasks=5, horizon,
                     with_lag_edges=None):
    """A valid random model: binary tasks and channels, interior parameters."""
    m = int(rng.integers(1, max_active + 1))
    n = int(rng.integers(1, max_tasks + 1))
    labels = ["p0"] + [f"p{i}" for i in range(1, m + 1)]
    reach = {}
    for i in range(1, m + 1):
        others = [j for j in range(1, m + 1) if j != i]
        if not others:
            reach[i] = []  # repaired below: a lone active phase keeps a partner
        else:
            size = int(rng.integers(1, len(others) + 1))
            reach[i] = sorted(rng.choice(others, size=size, replace=False).tolist())
    if m == 1:
        # a single active phase has no legal jump target; add a second phase
        m = 2
        labels.append("p2")
        reach = {1: [2], 2: [1]}

    abort = {labels[i]: float(rng.uniform(0.05, 0.4)) for i in range(1, m + 1)}
    stay = {labels[i]: float(rng.uniform(0.2, 0.8)) for i in range(1, m + 1)}
    jump = {}
    for i in range(1, m + 1):
        if len(reach[i]) > 1:
            raw = rng.dirichlet(np.full(len(reach[i]), 4.0))
            jump[labels[i]] = {labels[j]: float(p) for j, p in zip(reach[i], raw)}

    tasks = [f"task{i}" for i in range(n)]
    task_sets = {}
    for j in range(1, m + 1):
        size = int(rng.integers(1, n + 1))
        members = rng.choice(tasks, size=size, replace=False).tolist()
        task_sets[labels[j]] = sorted(members, key=tasks.index)
    intra = set()
    for members in task_sets.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                intra.add((members[a], members[b]))
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < 0.15:
                intra.add((tasks[a], tasks[b]))
    inter = set()
    for i in range(n):
        if rng.random() < 0.7:
            inter.add((tasks[i], tasks[i]))
        if i > 0 and rng.random() < 0.2:
            inter.add((tasks[i - 1], tasks[i]))

    channels = [f"z{i}" for i in range(n)]
    lag_edges = {}
    use_lags = with_lag_edges if with_lag_edges is not None else bool(rng.random() < 0.4)
    if use_lags:
        for k in range(1, n):
            if rng.random() < 0.5:
                lag_edges[channels[k]] = channels[int(rng.integers(0, k))]

    def random_rows(n_rows):
        return [[float(x) for x in rng.dirichlet((3.0, 3.0))] for _ in range(n_rows)]

    task_cpts = {}
    for i, name in enumerate(tasks):
        intra_parents = [a for a, b in sorted(intra, key=lambda e: tasks.index(e[0])) if b == name]
        inter_parents = [a for a, b in sorted(inter, key=lambda e: tasks.index(e[0])) if b == name]
        n_rows = 2 ** (len(intra_parents) + len(inter_parents))
        rows = {"p0": random_rows(n_rows)}
        for j in range(1, m + 1):
            if name in task_sets.get(labels[j], []):
                rows[labels[j]] = random_rows(n_rows)
        task_cpts[name] = {"tag": "open", "rows": rows}

    channel_entries = []
    channel_cpts = {}
    for k, (cname, tname) in enumerate(zip(channels, tasks)):
        parents = [{"kind": "task", "name": tname}]
        n_rows = 2
        if cname in lag_edges:
            parents.append({"kind": "channel_lag", "name": lag_edges[cname]})
            n_rows = 4
        channel_entries.append({"name": cname, "parents": parents})
        channel_cpts[cname] = {"tag": "open", "rows": random_rows(n_rows)}

    return {
        "meta": {"id": f"random-{rng.integers(1, 10**9)}", "format": "plot-model/1",
                 "horizon": horizon},
        "category": {"key": "random-cat"},
        "phases": {"labels": labels,
                   "reach": {labels[i]: [labels[j] for j in js]
                             for i, js in reach.items()}},
        "transition": {"abort": abort, "stay": stay,
                       **({"jump": jump} if jump else {}), "tag": "open"},
        "tasks": {"order": tasks, "task_sets": task_sets,
                  **({"intra_edges": [list(e) for e in sorted(intra, key=lambda e: (tasks.index(e[0]), tasks.index(e[1])))]} if intra else {}),
                  **({"inter_edges": [list(e) for e in sorted(inter, key=lambda e: (tasks.index(e[0]), tasks.index(e[1])))]} if inter else {})},
        "intensities": {"channels": channel_entries},
        "cpts": {"tasks": task_cpts, "intensities": channel_cpts},
    }


def random_enumerable_model(rng, *, budget=ENUMERATION_BUDGET, max_horizon=5):
    """Random model plus horizon small enough for trajectory enumeration."""
    while True:
        horizon = int(rng.integers(1, max_horizon + 1))
        doc = random_model_doc(rng, horizon=horizon)
        model = model_io.model_from_doc(doc)
        if model.state_cells ** (horizon + 1) <= budget:
            return model, horizon


def random_prior(rng, model):
    raw = rng.random(model.state_shape) + 0.1
    return raw / raw.sum()


def observation_log(rng, model, horizon, *, allow_missing=True):
    """A log sampled from the model itself, missing only where the oracle copes."""
    sim = simulate_incident(model, SimulationConfig(seed=int(rng.integers(0, 2**31)),
                                                    steps=horizon,
                                                    prior=random_prior(rng, model)))
    has_lags = any(ch.lag_parents for ch in model.intensity_spec.channels)
    records = []
    for record in sim.records:
        channels = dict(record.channels)
        if allow_missing and not has_lags:
            channels = {name: (None if rng.random() < 0.3 else value)
                        for name, value in channels.items()}
        records.append(ObservationRecord(t=record.t, channels=channels))
    return records
