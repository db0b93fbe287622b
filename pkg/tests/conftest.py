import numpy as np
import pytest

from plotdbn import model_io
from plotdbn.fixtures import knife_attack_path, vehicle_attack_path


@pytest.fixture(scope="session")
def vehicle():
    return model_io.load_model(vehicle_attack_path())


@pytest.fixture(scope="session")
def knife():
    return model_io.load_model(knife_attack_path())


def toy_doc(**overrides):
    """A small fully-valid model: 2 active phases, 2 tasks, 2 channels.

    The first channel lag-feeds the second, so every inference feature is
    exercised at a size the brute-force oracles can enumerate.
    """
    doc = {
        "meta": {"id": "toy", "format": "plot-model/1", "horizon": 6},
        "category": {"key": "toy-cat", "background": {}, "environment": {}},
        "phases": {
            "labels": ["idle", "plan", "act"],
            "reach": {"plan": ["act"], "act": ["plan"]},
        },
        "transition": {
            "abort": {"plan": 0.1, "act": 0.05},
            "stay": {"plan": 0.6, "act": 0.7},
            "tag": "open",
        },
        "tasks": {
            "order": ["prep", "move"],
            "task_sets": {"plan": ["prep"], "act": ["move"]},
            "inter_edges": [["prep", "prep"], ["move", "move"]],
        },
        "intensities": {
            "channels": [
                {"name": "sig_a", "parents": [{"kind": "task", "name": "prep"}]},
                {"name": "sig_b", "parents": [{"kind": "task", "name": "move"},
                                              {"kind": "channel_lag", "name": "sig_a"}]},
            ]
        },
        "cpts": {
            "tasks": {
                "prep": {"tag": "open",
                         "rows": {"idle": [[0.9, 0.1], [0.5, 0.5]],
                                  "plan": [[0.3, 0.7], [0.1, 0.9]]}},
                "move": {"tag": "open",
                         "rows": {"idle": [[0.95, 0.05], [0.6, 0.4]],
                                  "act": [[0.2, 0.8], [0.05, 0.95]]}},
            },
            "intensities": {
                "sig_a": {"tag": "open", "rows": [[0.8, 0.2], [0.3, 0.7]]},
                "sig_b": {"tag": "secure",
                          "rows": [[0.85, 0.15], [0.7, 0.3], [0.4, 0.6], [0.25, 0.75]]},
            },
        },
        "decisions": [
            {"id": "d_phi"},
            {"id": "halt", "cost": 1.0,
             "substitutions": {
                 "W": {"abort": {"plan": 1.0, "act": 1.0},
                        "stay": {"plan": 1.0, "act": 1.0}}}},
            {"id": "pin_move", "cost": 0.5,
             "substitutions": {"move": {"force": "1"}}},
        ],
        "utilities": [
            {"id": "u_main",
             "attributes": [{"name": "acted", "kind": "phase_ever", "phase": "act"},
                            {"name": "cost", "kind": "decision_cost"}],
             "terms": [{"attr": "acted", "weight": -1.0}, {"attr": "cost", "weight": -0.1}]},
            {"id": "u_const", "offset": 3.5, "attributes": [], "terms": []},
        ],
    }
    doc.update(overrides)
    return doc


@pytest.fixture()
def toy():
    return model_io.model_from_doc(toy_doc())


def spread_prior(model, rng=None):
    """A strictly positive random prior over the joint state."""
    rng = rng or np.random.default_rng(0)
    raw = rng.random(model.state_shape) + 0.05
    return raw / raw.sum()
