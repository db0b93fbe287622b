import json

import httpx
import pytest
from fastapi.testclient import TestClient

from plotdbn import model_io
from plotdbn.library import Library, add_entry, save_library
from plotdbn.service import create_app

from conftest import toy_doc


@pytest.fixture()
def data_dir(tmp_path):
    lib = Library(side="B", iteration=1)
    lib, _ = add_entry(lib, model_io.model_from_doc(toy_doc()))
    save_library(lib, tmp_path / "library")
    return tmp_path


@pytest.fixture()
def client(data_dir):
    with TestClient(create_app(data_dir)) as c:
        yield c


PRIOR = {"kind": "point", "phase": "plan"}


def _create(client, **kwargs):
    body = {"entry": "toy", "category": "toy-cat", "prior": PRIOR}
    body.update(kwargs)
    response = client.post("/v1/sessions", json=body)
    assert response.status_code == 200, response.text
    return response.json()


def test_create_session_starts_at_zero(client):
    info = _create(client)
    assert info["t"] == 0
    assert info["category_weights"] == {"toy-cat": 1.0}
    assert info["phase_marginals"]["plan"] == 1.0
    assert len(info["state_hash"]) == 64


def test_unknown_entry_is_not_found(client):
    response = client.post("/v1/sessions", json={"entry": "ghost", "category": "toy-cat"})
    assert response.status_code == 404
    assert response.json()["error"]["code"] == "unknown-entry-or-category"


def test_unknown_fields_are_rejected(client):
    response = client.post("/v1/sessions", json={"entry": "toy", "category": "toy-cat",
                                                 "surprise": 1})
    assert response.status_code == 422


def test_mixture_weights_initialize(client, data_dir):
    # a second category comes from a stored CPT variant overlay
    import dataclasses

    from plotdbn.library import load_library
    lib = load_library(data_dir / "library")
    variants = {"toy": {"other-cat": {"sig_a": {"rows": [[0.5, 0.5], [0.1, 0.9]]}}}}
    save_library(dataclasses.replace(lib, variants=variants), data_dir / "library")
    with TestClient(create_app(data_dir)) as fresh:
        info = _create(fresh, category=None,
                       mixture={"toy-cat": 0.5, "other-cat": 0.5})
        assert info["category_weights"] == {"other-cat": 0.5, "toy-cat": 0.5}
        assert set(info["per_category"]) == {"toy-cat", "other-cat"}


def test_observation_advances_and_matches_engine(client):
    session = _create(client)["session"]
    response = client.post(f"/v1/sessions/{session}/observations",
                           json={"t": 1, "channels": {"sig_a": "1"}})
    assert response.status_code == 200, response.text
    payload = response.json()
    assert payload["t"] == 1

    from plotdbn.inference import filter_step, init_belief, prior_from_spec
    model = model_io.model_from_doc(toy_doc())
    from plotdbn.records import ObservationRecord
    belief = init_belief(model, prior_from_spec(model, PRIOR))
    step = filter_step(belief, model, ObservationRecord(t=1, channels={"sig_a": "1"}))
    marginal = step.belief.phase_marginal()
    for k, label in enumerate(model.phase_space.labels):
        assert payload["phase_marginals"][label] == marginal[k]
    assert payload["evidence"]["toy-cat"] == step.evidence


def test_duplicate_observation_returns_current_state(client):
    session = _create(client)["session"]
    first = client.post(f"/v1/sessions/{session}/observations",
                        json={"t": 1, "channels": {"sig_a": "1"}}).json()
    dup = client.post(f"/v1/sessions/{session}/observations",
                      json={"t": 1, "channels": {"sig_a": "0"}})
    assert dup.status_code == 200
    payload = dup.json()
    assert payload["duplicate"] is True
    assert payload["state_hash"] == first["state_hash"]


def test_out_of_order_observation_conflicts(client):
    session = _create(client)["session"]
    response = client.post(f"/v1/sessions/{session}/observations",
                           json={"t": 3, "channels": {}})
    assert response.status_code == 409
    assert response.json()["error"]["code"] == "out-of-order"


def test_impossible_evidence_is_structured(data_dir, tmp_path):
    doc = toy_doc()
    doc["meta"]["id"] = "spiky"
    doc["cpts"]["intensities"]["sig_a"]["rows"] = [[1.0, 0.0], [1.0, 0.0]]
    lib = Library(side="B")
    lib, _ = add_entry(lib, model_io.model_from_doc(doc))
    save_library(lib, tmp_path / "d2" / "library")
    with TestClient(create_app(tmp_path / "d2")) as client:
        session = client.post("/v1/sessions", json={"entry": "spiky", "category": "toy-cat",
                                                    "prior": PRIOR}).json()["session"]
        response = client.post(f"/v1/sessions/{session}/observations",
                               json={"t": 1, "channels": {"sig_a": "1"}})
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "inconsistent-evidence"
        # the failed step left the session untouched
        belief = client.get(f"/v1/sessions/{session}/belief").json()
        assert belief["t"] == 0


def test_what_if_is_pure_and_matches_rank_decisions(client):
    session = _create(client)["session"]
    client.post(f"/v1/sessions/{session}/observations",
                json={"t": 1, "channels": {"sig_a": "1"}})
    before = client.get(f"/v1/sessions/{session}/belief").json()["state_hash"]
    body = {"decisions": ["d_phi", "halt", "pin_move"], "utility": "u_main", "horizon": 4}
    first = client.post(f"/v1/sessions/{session}/what-if", json=body).json()
    second = client.post(f"/v1/sessions/{session}/what-if", json=body).json()
    assert first["ranking"] == second["ranking"]
    assert first["state_unchanged"] is True
    assert client.get(f"/v1/sessions/{session}/belief").json()["state_hash"] == before

    from plotdbn.inference import filter_step, init_belief, prior_from_spec
    from plotdbn.interventions import rank_decisions
    from plotdbn.records import ObservationRecord
    model = model_io.model_from_doc(toy_doc())
    belief = init_belief(model, prior_from_spec(model, PRIOR))
    belief = filter_step(belief, model, ObservationRecord(t=1, channels={"sig_a": "1"})).belief
    expected = rank_decisions(model, belief, list(model.decisions.values()),
                              model.utilities["u_main"], 4)
    assert [row["decision"] for row in first["ranking"]] == [d.id for d, _ in expected]
    for row, (_, score) in zip(first["ranking"], expected):
        assert row["score"] == score


def test_close_incident_updates_posteriors_and_archives(client, data_dir):
    session = _create(client)["session"]
    records = [
        {"t": 0, "channels": {}, "latent": {"phase": "plan", "tasks": {"prep": "0", "move": "0"}}},
        {"t": 1, "channels": {"sig_a": "1", "sig_b": "0"},
         "latent": {"phase": "plan", "tasks": {"prep": "1", "move": "0"}}},
        {"t": 2, "channels": {"sig_a": "1", "sig_b": "1"},
         "latent": {"phase": "act", "tasks": {"prep": "1", "move": "1"}}},
    ]
    response = client.post(f"/v1/sessions/{session}/close", json={"records": records})
    assert response.status_code == 200, response.text
    receipt = response.json()
    assert receipt["closed"] is True
    assert any(row["vertex"] == "W" for row in receipt["updated_rows"])
    posterior_path = data_dir / "library" / "posteriors" / "toy.json"
    assert posterior_path.is_file()
    payload = json.loads(posterior_path.read_text())
    assert sum(sum(row) for row in payload["counts"]["transition"].values()) > 0
    # the session refuses further observations
    follow_up = client.post(f"/v1/sessions/{session}/observations",
                            json={"t": 1, "channels": {}})
    assert follow_up.status_code == 409


def test_non_ancestral_close_is_rejected_and_session_stays_open(client):
    session = _create(client)["session"]
    records = [{"t": 1, "channels": {}, "latent": {"tasks": {"prep": "1"}}}]
    response = client.post(f"/v1/sessions/{session}/close", json={"records": records})
    assert response.status_code == 409
    assert response.json()["error"]["code"] == "non-ancestral"
    ok = client.post(f"/v1/sessions/{session}/observations", json={"t": 1, "channels": {}})
    assert ok.status_code == 200


def test_restart_reproduces_beliefs_bit_exactly(data_dir):
    with TestClient(create_app(data_dir)) as client:
        session = _create(client)["session"]
        rng_values = ["1", "0", "1", "1", "0"]
        for t, value in enumerate(rng_values, start=1):
            response = client.post(f"/v1/sessions/{session}/observations",
                                   json={"t": t, "channels": {"sig_a": value,
                                                              "sig_b": "0"}})
            assert response.status_code == 200
        before = client.get(f"/v1/sessions/{session}/belief",
                            params={"include_joint": True}).json()

    with TestClient(create_app(data_dir)) as reborn:
        after = reborn.get(f"/v1/sessions/{session}/belief",
                           params={"include_joint": True}).json()
    assert after["state_hash"] == before["state_hash"]
    assert after["per_category"]["toy-cat"]["joint"] == before["per_category"]["toy-cat"]["joint"]
    assert after == before


def test_stream_pushes_each_observation(data_dir):
    import threading
    import time

    import uvicorn

    server = uvicorn.Server(uvicorn.Config(create_app(data_dir), host="127.0.0.1",
                                           port=0, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        deadline = time.time() + 10
        while not server.started:
            assert time.time() < deadline, "server failed to start"
            time.sleep(0.01)
        port = server.servers[0].sockets[0].getsockname()[1]
        base = f"http://127.0.0.1:{port}"
        with httpx.Client(base_url=base, timeout=10) as client:
            session = client.post("/v1/sessions",
                                  json={"entry": "toy", "category": "toy-cat",
                                        "prior": PRIOR}).json()["session"]
            events = []
            ready = threading.Event()

            def consume():
                with client.stream("GET", f"/v1/sessions/{session}/stream") as stream:
                    ready.set()
                    for line in stream.iter_lines():
                        if line.startswith("data: "):
                            events.append(json.loads(line[6:]))
                            if len(events) >= 2:
                                return

            consumer = threading.Thread(target=consume, daemon=True)
            consumer.start()
            assert ready.wait(timeout=5)
            time.sleep(0.1)
            posted = client.post(f"/v1/sessions/{session}/observations",
                                 json={"t": 1, "channels": {"sig_a": "1"}})
            consumer.join(timeout=5)
            assert not consumer.is_alive(), "stream never delivered the update"
            assert events[0]["t"] == 0
            assert events[1]["t"] == 1
            assert events[1]["state_hash"] == posted.json()["state_hash"]
    finally:
        server.should_exit = True
        thread.join(timeout=5)


def test_library_endpoints(client):
    index = client.get("/v1/library").json()
    assert index["order"] == ["toy"]
    entry = client.get("/v1/library/entries/toy")
    assert entry.status_code == 200
    assert entry.json()["meta"]["id"] == "toy"
    missing = client.get("/v1/library/entries/ghost")
    assert missing.status_code == 404


def test_sanitized_export_without_dummies_conflicts(client):
    response = client.get("/v1/library/export/sanitized")
    assert response.status_code == 409
    assert response.json()["error"]["code"] == "secure-table"


def test_static_token_guard(data_dir):
    with TestClient(create_app(data_dir, token="hunter2")) as client:
        denied = client.get("/v1/library")
        assert denied.status_code == 401
        allowed = client.get("/v1/library", headers={"Authorization": "Bearer hunter2"})
        assert allowed.status_code == 200


def test_timeline_replays_the_audit_trail(client):
    session = _create(client)["session"]
    for t, value in enumerate(["1", "0", "1"], start=1):
        client.post(f"/v1/sessions/{session}/observations",
                    json={"t": t, "channels": {"sig_a": value}})
    timeline = client.get(f"/v1/sessions/{session}/timeline").json()
    assert [column["t"] for column in timeline["columns"]] == [0, 1, 2, 3]
    live = client.get(f"/v1/sessions/{session}/belief").json()
    assert timeline["columns"][-1]["phase_marginals"] == live["phase_marginals"]
    assert timeline["state_hash"] == live["state_hash"]
