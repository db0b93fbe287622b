import numpy as np
import networkx as nx
import pytest

from plotdbn import model_io
from plotdbn.core import (PhaseSpace, TransitionParams, build_transition_matrix,
                          slice_graph, unroll, validate_model)
from plotdbn.errors import ConfigurationError

from conftest import toy_doc
from generators import random_model_doc


def test_row_zero_is_absorbing():
    ps = PhaseSpace(labels=("w0", "w1", "w2"), reach={1: (2,), 2: (1,)})
    params = TransitionParams(abort={1: 0.2, 2: 0.3}, stay={1: 0.5, 2: 0.4}, jump={})
    matrix = build_transition_matrix(ps, params)
    assert matrix[0].tolist() == [1.0, 0.0, 0.0]


def test_matrix_matches_direct_substitution():
    ps = PhaseSpace(labels=("w0", "w1", "w2"), reach={1: (2,), 2: (1,)})
    params = TransitionParams(abort={1: 0.1, 2: 0.0}, stay={1: 0.6, 2: 1.0}, jump={})
    matrix = build_transition_matrix(ps, params)
    # abort, stay, leave for the first active row with a singleton reach set
    assert matrix[1, 0] == 0.1
    assert matrix[1, 1] == (1 - 0.1) * 0.6
    assert matrix[1, 2] == (1 - 0.6) * (1 - 0.1) * 1.0
    assert matrix[1].tolist() == pytest.approx([0.1, 0.54, 0.36], abs=1e-12)


def test_never_moving_params_give_identity_on_active_rows():
    ps = PhaseSpace(labels=("w0", "w1", "w2", "w3"),
                    reach={1: (2,), 2: (3,), 3: (1,)})
    params = TransitionParams(abort={i: 0.0 for i in (1, 2, 3)},
                              stay={i: 1.0 for i in (1, 2, 3)}, jump={})
    matrix = build_transition_matrix(ps, params)
    assert np.array_equal(matrix, np.eye(4))


def test_missing_jump_entry_is_a_configuration_error():
    ps = PhaseSpace(labels=("w0", "w1", "w2", "w3"),
                    reach={1: (2, 3), 2: (1,), 3: (1,)})
    params = TransitionParams(abort={1: 0.1, 2: 0.1, 3: 0.1},
                              stay={1: 0.5, 2: 0.5, 3: 0.5},
                              jump={1: {2: 1.0}})  # phase 3 missing from the jump row
    with pytest.raises(ConfigurationError):
        build_transition_matrix(ps, params)


def test_random_matrices_are_stochastic_with_exact_zero_pattern():
    rng = np.random.default_rng(7)
    for _ in range(100):
        model = model_io.model_from_doc(random_model_doc(rng, horizon=3))
        matrix = model.transition_matrix()
        ps = model.phase_space
        assert np.all(np.abs(matrix.sum(axis=1) - 1.0) <= 1e-12)
        assert matrix[0, 0] == 1.0 and np.all(matrix[0, 1:] == 0.0)
        for i in range(1, ps.active_count + 1):
            allowed = {0, i, *ps.reach.get(i, ())}
            for j in range(ps.count):
                if j in allowed:
                    assert matrix[i, j] > 0.0
                else:
                    assert matrix[i, j] == 0.0


def test_per_step_overrides_apply_only_at_that_step(toy):
    doc = toy_doc()
    doc["transition"]["overrides"] = [{"t": 3, "abort": {"plan": 0.9}}]
    model = model_io.model_from_doc(doc)
    assert model.transition_matrix(2)[1, 0] == 0.1
    assert model.transition_matrix(3)[1, 0] == 0.9
    assert model.transition_matrix(4)[1, 0] == 0.1


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def test_shipped_fixtures_validate_clean(vehicle, knife):
    assert validate_model(vehicle).ok
    assert validate_model(knife).ok


def test_validation_is_pure_and_idempotent(vehicle):
    first = validate_model(vehicle)
    second = validate_model(vehicle)
    assert first.violations == second.violations == ()


def test_injected_phase_edge_into_channel_is_flagged(vehicle):
    doc = model_io.model_to_doc(vehicle)
    channel = doc["intensities"]["channels"][0]
    channel["parents"].append({"kind": "phase_lag"})
    # keep the CPT dimensioned to the (illegal) parent set so only the edge trips
    doc["cpts"]["intensities"]["z_online_activity"]["rows"] = \
        [[0.8, 0.2]] * 6 + [[0.25, 0.75]] * 6
    model = model_io.model_from_doc(doc, validate=False)
    report = validate_model(model)
    assert len(report.violations) == 1
    violation = report.violations[0]
    assert violation.code == "intensity.phase-edge"
    assert "W@t-1" in violation.message and "z_online_activity" in violation.message


def test_transition_row_summing_short_is_flagged_with_coordinates():
    doc = toy_doc()
    doc["transition"]["stay"]["plan"] = 0.5
    doc["transition"]["abort"]["plan"] = 0.1
    # force a bad realized row by shorting the jump distribution
    doc["phases"]["reach"]["plan"] = ["act", "plan2"]
    doc["phases"]["labels"].append("plan2")
    doc["transition"]["abort"]["plan2"] = 0.1
    doc["transition"]["stay"]["plan2"] = 0.5
    doc["transition"]["jump"] = {"plan": {"act": 0.6, "plan2": 0.3}}
    doc["phases"]["reach"]["plan2"] = ["act"]
    doc["tasks"]["task_sets"]["plan2"] = ["prep"]
    doc["cpts"]["tasks"]["prep"]["rows"]["plan2"] = [[0.5, 0.5], [0.5, 0.5]]
    model = model_io.model_from_doc(doc, validate=False)
    report = validate_model(model)
    codes = {v.code for v in report.violations}
    assert "transition.jump.row-sum" in codes
    assert any("plan" in v.where for v in report.violations)


def test_explicit_singleton_jump_is_flagged():
    doc = toy_doc()
    doc["transition"]["jump"] = {"plan": {"act": 1.0}}
    model = model_io.model_from_doc(doc, validate=False)
    report = validate_model(model)
    assert [v.code for v in report.violations] == ["transition.jump.singleton-explicit"]


def test_missing_mandatory_task_set_edge_is_flagged():
    doc = toy_doc()
    doc["tasks"]["task_sets"]["plan"] = ["prep", "move"]
    doc["cpts"]["tasks"]["move"]["rows"]["plan"] = [[0.5, 0.5], [0.5, 0.5]]
    model = model_io.model_from_doc(doc, validate=False)
    report = validate_model(model)
    assert any(v.code == "task.missing-mandatory-edge" for v in report.violations)


def test_duplicated_rows_are_expanded_from_the_inactive_block(vehicle):
    # recon_target differs from the idle rows only in the targeting phase
    table = vehicle.task_tensor("recon_target")
    targeting = vehicle.phase_space.index("targeting")
    idle_block = np.asarray(vehicle.cpts.tasks["recon_target"].blocks[0])
    for j in range(vehicle.phase_count):
        block = table[j].reshape(idle_block.shape)
        if j == targeting:
            assert not np.array_equal(block, idle_block)
        else:
            assert block.tobytes() == idle_block.tobytes()


# ---------------------------------------------------------------------------
# slice graphs
# ---------------------------------------------------------------------------


def test_slice_graph_founders_and_ownership(vehicle):
    g = slice_graph(vehicle)
    for node, data in g.nodes(data=True):
        if data["slice"] == "t-1":
            assert g.in_degree(node) == 0
    assert g.has_edge("W@t-1", "W@t")
    for name in vehicle.task_graph.order:
        assert g.has_edge("W@t", f"{name}@t")
    for ch in vehicle.intensity_spec.channels:
        assert g.has_edge(f"{ch.owner}@t", f"{ch.name}@t")
        assert not g.has_edge("W@t", f"{ch.name}@t")
        assert not g.has_edge("W@t-1", f"{ch.name}@t")


def test_four_task_template_edges():
    doc = toy_doc()
    doc["tasks"]["order"] = ["a", "b", "c", "d"]
    doc["tasks"]["task_sets"] = {"plan": ["a", "b"], "act": ["c", "d"]}
    doc["tasks"]["intra_edges"] = [["a", "b"], ["c", "d"]]
    doc["tasks"]["inter_edges"] = [[n, n] for n in ("a", "b", "c", "d")]
    doc["intensities"]["channels"] = [
        {"name": f"z_{n}", "parents": [{"kind": "task", "name": n}]}
        for n in ("a", "b", "c", "d")]
    rows2 = [[0.7, 0.3], [0.4, 0.6]]
    rows4 = [[0.8, 0.2], [0.6, 0.4], [0.5, 0.5], [0.2, 0.8]]
    doc["cpts"]["tasks"] = {
        "a": {"rows": {"idle": rows2, "plan": rows4[:2]}},
        "b": {"rows": {"idle": rows4, "plan": [[0.3, 0.7], [0.2, 0.8], [0.15, 0.85], [0.1, 0.9]]}},
        "c": {"rows": {"idle": rows2, "act": [[0.25, 0.75], [0.2, 0.8]]}},
        "d": {"rows": {"idle": rows4, "act": [[0.35, 0.65], [0.3, 0.7], [0.25, 0.75], [0.2, 0.8]]}},
    }
    doc["cpts"]["intensities"] = {f"z_{n}": {"rows": rows2} for n in ("a", "b", "c", "d")}
    doc.pop("decisions")
    doc.pop("utilities")
    model = model_io.model_from_doc(doc)
    g = slice_graph(model)

    expected = {("W@t-1", "W@t")}
    for n in ("a", "b", "c", "d"):
        expected |= {("W@t", f"{n}@t"), (f"{n}@t-1", f"{n}@t"), (f"{n}@t", f"z_{n}@t")}
    expected |= {("a@t", "b@t"), ("c@t", "d@t")}
    assert set(g.edges()) == expected


def test_zero_task_model_is_a_phase_chain():
    doc = toy_doc()
    doc["tasks"] = {"order": [], "task_sets": {}}
    doc["intensities"] = {"channels": []}
    doc["cpts"] = {"tasks": {}, "intensities": {}}
    doc.pop("decisions")
    doc.pop("utilities")
    model = model_io.model_from_doc(doc)
    g = slice_graph(model)
    assert set(g.edges()) == {("W@t-1", "W@t")}
    unrolled = unroll(model, 3)
    assert nx.is_directed_acyclic_graph(unrolled)
    assert set(unrolled.edges()) == {(f"W@{t}", f"W@{t+1}") for t in range(3)}


def test_unrolled_graph_is_acyclic(vehicle):
    assert nx.is_directed_acyclic_graph(unroll(vehicle, 4))
