import numpy as np
import pytest

from plotdbn import model_io
from plotdbn.errors import (ConfigurationError, NonAncestralDataError,
                            SecureTableError, UnknownVertexError)
from plotdbn.learning import (CompletedIncident, DesignedSample, DirichletCpt,
                              check_ancestral, harvest_counts,
                              update_from_designed_samples,
                              update_from_incidents)
from plotdbn.records import ObservationRecord

from oracles import dirichlet_posterior_mean


def two_phase_doc():
    """Two active phases, one task, one channel: enumerable by hand."""
    return {
        "meta": {"id": "two-phase", "format": "plot-model/1", "horizon": 5},
        "category": {"key": "toy"},
        "phases": {"labels": ["w0", "w1", "w2"],
                   "reach": {"w1": ["w2"], "w2": ["w1"]}},
        "transition": {"abort": {"w1": 0.2, "w2": 0.1},
                       "stay": {"w1": 0.5, "w2": 0.6}, "tag": "open"},
        "tasks": {"order": ["job"], "task_sets": {"w1": ["job"]},
                  "inter_edges": [["job", "job"]]},
        "intensities": {"channels": [
            {"name": "sig", "parents": [{"kind": "task", "name": "job"}]}]},
        "cpts": {
            "tasks": {"job": {"tag": "open",
                              "rows": {"w0": [[0.8, 0.2], [0.4, 0.6]],
                                       "w1": [[0.3, 0.7], [0.1, 0.9]]}}},
            "intensities": {"sig": {"tag": "open", "rows": [[0.9, 0.1], [0.2, 0.8]]}},
        },
    }


@pytest.fixture()
def two_phase():
    return model_io.model_from_doc(two_phase_doc())


def _incident(phases, jobs, sigs):
    records = []
    for t, (w, j) in enumerate(zip(phases, jobs)):
        channels = {} if t == 0 else {"sig": sigs[t]}
        records.append(ObservationRecord(t=t, channels=channels,
                                         latent_phase=w, latent_tasks={"job": j}))
    return CompletedIncident(records=tuple(records))


HAND_INCIDENTS = [
    _incident(["w1", "w1", "w2", "w2"], ["0", "1", "1", "0"], [None, "1", "1", "0"]),
    _incident(["w1", "w2", "w1", "w0"], ["1", "1", "0", "0"], [None, "1", "0", "0"]),
    _incident(["w0", "w0", "w0", "w0"], ["0", "0", "0", "0"], [None, "0", "0", "1"]),
]

# frozen hand counts for the three incidents above
HAND_TRANSITION = {1: np.array([1.0, 1.0, 2.0]),   # w1 -> (w0, w1, w2)
                   2: np.array([0.0, 1.0, 1.0])}   # w2 -> (w0, w1, w2)
HAND_JOB_IDLE = np.array([[4.0, 0.0], [1.0, 2.0]])
HAND_JOB_W1 = np.array([[0.0, 1.0], [1.0, 0.0]])
HAND_SIG = np.array([[5.0, 1.0], [0.0, 3.0]])


def test_fully_observed_incident_is_ancestral(two_phase):
    ok, violator = check_ancestral(HAND_INCIDENTS[0], two_phase)
    assert ok and violator is None


def test_task_without_phase_is_flagged(two_phase):
    incident = CompletedIncident(records=(
        ObservationRecord(t=0, latent_phase="w1", latent_tasks={"job": "0"}),
        ObservationRecord(t=1, latent_tasks={"job": "1"}),
    ))
    ok, violator = check_ancestral(incident, two_phase)
    assert not ok
    assert violator == "job@t=1"


def test_empty_incident_is_vacuously_ancestral(two_phase):
    ok, violator = check_ancestral(CompletedIncident(records=()), two_phase)
    assert ok and violator is None


def test_unknown_vertex_in_incident_raises(two_phase):
    incident = CompletedIncident(records=(
        ObservationRecord(t=1, latent_tasks={"ghost": "1"}),))
    with pytest.raises(UnknownVertexError):
        check_ancestral(incident, two_phase)


def test_counts_match_the_hand_tally(two_phase):
    total = {"tr1": np.zeros(3), "tr2": np.zeros(3)}
    job_idle = np.zeros((2, 2))
    job_w1 = np.zeros((2, 2))
    sig = np.zeros((2, 2))
    for incident in HAND_INCIDENTS:
        counts = harvest_counts(incident, two_phase)
        total["tr1"] += counts.transition[1]
        total["tr2"] += counts.transition[2]
        job_idle += counts.tasks["job"][0]
        job_w1 += counts.tasks["job"][1]
        sig += counts.channels["sig"]
    assert np.array_equal(total["tr1"], HAND_TRANSITION[1])
    assert np.array_equal(total["tr2"], HAND_TRANSITION[2])
    assert np.array_equal(job_idle, HAND_JOB_IDLE)
    assert np.array_equal(job_w1, HAND_JOB_W1)
    assert np.array_equal(sig, HAND_SIG)


def test_posterior_is_prior_plus_counts_exactly(two_phase):
    prior = DirichletCpt.flat(two_phase)
    posterior = update_from_incidents(prior, HAND_INCIDENTS, two_phase)
    assert np.array_equal(posterior.transition_alpha[1], 1.0 + HAND_TRANSITION[1])
    assert np.array_equal(posterior.transition_alpha[2], 1.0 + HAND_TRANSITION[2])
    assert np.array_equal(posterior.task_alpha["job"][0], 1.0 + HAND_JOB_IDLE)
    assert np.array_equal(posterior.task_alpha["job"][1], 1.0 + HAND_JOB_W1)
    assert np.array_equal(posterior.channel_alpha["sig"], 1.0 + HAND_SIG)


def test_posterior_means_match_integration_oracle(two_phase):
    prior = DirichletCpt.flat(two_phase)
    posterior = update_from_incidents(prior, HAND_INCIDENTS, two_phase)
    for i, counts in HAND_TRANSITION.items():
        mean = posterior.transition_alpha[i] / posterior.transition_alpha[i].sum()
        oracle = dirichlet_posterior_mean(np.ones(3), counts)
        assert np.max(np.abs(mean - oracle)) < 1e-12
    for block, counts in ((0, HAND_JOB_IDLE), (1, HAND_JOB_W1)):
        alpha = posterior.task_alpha["job"][block]
        for r in range(2):
            mean = alpha[r] / alpha[r].sum()
            oracle = dirichlet_posterior_mean(np.ones(2), counts[r])
            assert np.max(np.abs(mean - oracle)) < 1e-12
    for r in range(2):
        mean = posterior.channel_alpha["sig"][r] / posterior.channel_alpha["sig"][r].sum()
        oracle = dirichlet_posterior_mean(np.ones(2), HAND_SIG[r])
        assert np.max(np.abs(mean - oracle)) < 1e-12


def test_zero_incidents_leave_the_prior_untouched(two_phase):
    prior = DirichletCpt.flat(two_phase)
    posterior = update_from_incidents(prior, [], two_phase)
    assert np.array_equal(posterior.transition_alpha[1], prior.transition_alpha[1])
    assert np.array_equal(posterior.task_alpha["job"][0], prior.task_alpha["job"][0])


def test_batch_equals_any_sequential_order(two_phase):
    prior = DirichletCpt.flat(two_phase)
    batch = update_from_incidents(prior, HAND_INCIDENTS, two_phase)
    for order in ([0, 1, 2], [2, 0, 1], [1, 2, 0]):
        state = prior
        for k in order:
            state = update_from_incidents(state, [HAND_INCIDENTS[k]], two_phase)
        assert np.array_equal(state.transition_alpha[1], batch.transition_alpha[1])
        assert np.array_equal(state.task_alpha["job"][0], batch.task_alpha["job"][0])
        assert np.array_equal(state.task_alpha["job"][1], batch.task_alpha["job"][1])
        assert np.array_equal(state.channel_alpha["sig"], batch.channel_alpha["sig"])


def test_non_ancestral_batch_is_rejected_whole(two_phase):
    prior = DirichletCpt.flat(two_phase)
    bad = CompletedIncident(records=(
        ObservationRecord(t=0, latent_phase="w1", latent_tasks={"job": "0"}),
        ObservationRecord(t=1, latent_tasks={"job": "1"}),), incident_id="bad-one")
    with pytest.raises(NonAncestralDataError) as err:
        update_from_incidents(prior, [HAND_INCIDENTS[0], bad], two_phase)
    assert "bad-one" in str(err.value)
    # nothing was applied
    assert np.array_equal(prior.transition_counts[1], np.zeros(3))


def test_designed_sample_touches_exactly_one_row(two_phase):
    prior = DirichletCpt.flat(two_phase)
    sample = DesignedSample(vertex="job", parent_config={"W": "w0", "job": "0"},
                            outcomes={"0": 3, "1": 1})
    posterior = update_from_designed_samples(prior, [sample], two_phase)
    assert np.array_equal(posterior.task_alpha["job"][0], np.array([[4.0, 2.0], [1.0, 1.0]]))
    assert np.array_equal(posterior.task_alpha["job"][1], prior.task_alpha["job"][1])
    assert np.array_equal(posterior.channel_alpha["sig"], prior.channel_alpha["sig"])
    mean = posterior.task_alpha["job"][0][0] / posterior.task_alpha["job"][0][0].sum()
    assert np.allclose(mean, [2 / 3, 1 / 3])


def test_stratified_samples_cover_all_idle_rows_and_nothing_else(two_phase):
    prior = DirichletCpt.flat(two_phase)
    samples = [DesignedSample(vertex="job", parent_config={"W": "w0", "job": v},
                              outcomes={"0": 2, "1": 2}) for v in ("0", "1")]
    posterior = update_from_designed_samples(prior, samples, two_phase)
    assert np.all(posterior.task_counts["job"][0] == 2.0)
    assert np.all(posterior.task_counts["job"][1] == 0.0)
    assert np.all(posterior.channel_counts["sig"] == 0.0)


def test_secure_table_refused_on_the_academic_side(two_phase):
    doc = two_phase_doc()
    doc["cpts"]["intensities"]["sig"]["tag"] = "secure"
    model = model_io.model_from_doc(doc)
    prior = DirichletCpt.flat(model)
    sample = DesignedSample(vertex="sig", parent_config={"job": "0"},
                            outcomes={"0": 5})
    with pytest.raises(SecureTableError, match="sig"):
        update_from_designed_samples(prior, [sample], model, library_side="A")
    # the in-house side may embed the same data
    updated = update_from_designed_samples(prior, [sample], model, library_side="B")
    assert updated.channel_alpha["sig"][0, 0] == 6.0


def test_designed_sampling_recovers_a_known_row(two_phase):
    rng = np.random.default_rng(123)
    truth = 0.7
    hits = int(rng.binomial(500, truth))
    sample = DesignedSample(vertex="sig", parent_config={"job": "0"},
                            outcomes={"0": hits, "1": 500 - hits})
    posterior = update_from_designed_samples(DirichletCpt.flat(two_phase),
                                             [sample], two_phase)
    mean = posterior.channel_alpha["sig"][0] / posterior.channel_alpha["sig"][0].sum()
    assert abs(mean[0] - truth) < 0.06


def test_sampling_the_phase_vertex_is_refused(two_phase):
    prior = DirichletCpt.flat(two_phase)
    with pytest.raises(ConfigurationError):
        update_from_designed_samples(
            prior, [DesignedSample(vertex="W", parent_config={}, outcomes={"w0": 1})],
            two_phase)


def test_mean_model_round_trips_through_validation(two_phase):
    prior = DirichletCpt.flat(two_phase)
    posterior = update_from_incidents(prior, HAND_INCIDENTS, two_phase)
    mean_model = posterior.mean_model(two_phase)
    from plotdbn.core import validate_model
    assert validate_model(mean_model).ok
