"""Author the shipped vehicle- and knife-attack fixtures through the API.

Run from the repo root:  python tools/make_fixtures.py
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from plotdbn import model_io  # noqa: E402

PHASES = ["not_engaged", "recruited", "trained", "targeting", "equipped", "attacking"]

SHARED_TASK_CPTS = {
    "bond_sympathisers": {
        "tag": "open",
        "rows": {
            "not_engaged": [[0.92, 0.08], [0.6, 0.4]],
            "recruited": [[0.35, 0.65], [0.05, 0.95]],
        },
    },
    "withdraw_contacts": {
        "tag": "open",
        "rows": {
            "not_engaged": [[0.95, 0.05], [0.65, 0.35], [0.85, 0.15], [0.45, 0.55]],
            "recruited": [[0.6, 0.4], [0.2, 0.8], [0.3, 0.7], [0.04, 0.96]],
        },
    },
}

SHARED_ONLINE_CHANNEL = {"tag": "open", "rows": [[0.8, 0.2], [0.25, 0.75]]}


def vehicle_doc():
    return {
        "meta": {
            "id": "vehicle-attack",
            "format": "plot-model/1",
            "horizon": 12,
            "description": "Lone-actor vehicle attack: six phases, six tasks, six channels.",
        },
        "category": {
            "key": "affiliated-lone-actor",
            "background": {"affiliation": "known-network", "history": "radicalised"},
            "environment": {"residence": "urban", "setting": "dense-public"},
        },
        "phases": {
            "labels": PHASES,
            "reach": {
                "recruited": ["trained"],
                "trained": ["targeting", "equipped"],
                "targeting": ["equipped"],
                "equipped": ["targeting", "attacking"],
                "attacking": ["equipped"],
            },
        },
        "transition": {
            "abort": {"recruited": 0.08, "trained": 0.05, "targeting": 0.06,
                      "equipped": 0.05, "attacking": 0.02},
            "stay": {"recruited": 0.55, "trained": 0.5, "targeting": 0.45,
                     "equipped": 0.4, "attacking": 0.7},
            "jump": {"trained": {"targeting": 0.7, "equipped": 0.3},
                     "equipped": {"targeting": 0.2, "attacking": 0.8}},
            "tag": "open",
        },
        "tasks": {
            "order": ["bond_sympathisers", "withdraw_contacts", "train_vehicle",
                      "recon_target", "acquire_vehicle", "final_approach"],
            "task_sets": {
                "recruited": ["bond_sympathisers", "withdraw_contacts"],
                "trained": ["train_vehicle"],
                "targeting": ["recon_target"],
                "equipped": ["acquire_vehicle"],
                "attacking": ["final_approach"],
            },
            "intra_edges": [["bond_sympathisers", "withdraw_contacts"]],
            "inter_edges": [["bond_sympathisers", "bond_sympathisers"],
                            ["withdraw_contacts", "withdraw_contacts"],
                            ["train_vehicle", "train_vehicle"],
                            ["recon_target", "recon_target"],
                            ["acquire_vehicle", "acquire_vehicle"],
                            ["final_approach", "final_approach"]],
        },
        "intensities": {
            "channels": [
                {"name": "z_online_activity", "alphabet": ["low", "high"],
                 "parents": [{"kind": "task", "name": "bond_sympathisers"}]},
                {"name": "z_contact_pattern", "alphabet": ["stable", "shifting"],
                 "parents": [{"kind": "task", "name": "withdraw_contacts"},
                             {"kind": "channel_lag", "name": "z_online_activity"}]},
                {"name": "z_training_signal", "alphabet": ["absent", "present"],
                 "parents": [{"kind": "task", "name": "train_vehicle"}]},
                {"name": "z_site_visits", "alphabet": ["rare", "frequent"],
                 "parents": [{"kind": "task", "name": "recon_target"}]},
                {"name": "z_procurement", "alphabet": ["none", "activity"],
                 "parents": [{"kind": "task", "name": "acquire_vehicle"}]},
                {"name": "z_movement", "alphabet": ["normal", "directed"],
                 "parents": [{"kind": "task", "name": "final_approach"}]},
            ]
        },
        "cpts": {
            "tasks": {
                **SHARED_TASK_CPTS,
                "train_vehicle": {
                    "tag": "partial",
                    "rows": {"not_engaged": [[0.97, 0.03], [0.7, 0.3]],
                             "trained": [[0.3, 0.7], [0.1, 0.9]]},
                },
                "recon_target": {
                    "tag": "open",
                    "rows": {"not_engaged": [[0.9, 0.1], [0.65, 0.35]],
                             "targeting": [[0.25, 0.75], [0.08, 0.92]]},
                },
                "acquire_vehicle": {
                    "tag": "partial",
                    "rows": {"not_engaged": [[0.98, 0.02], [0.8, 0.2]],
                             "equipped": [[0.35, 0.65], [0.12, 0.88]]},
                },
                "final_approach": {
                    "tag": "partial",
                    "rows": {"not_engaged": [[0.99, 0.01], [0.85, 0.15]],
                             "attacking": [[0.2, 0.8], [0.05, 0.95]]},
                },
            },
            "intensities": {
                "z_online_activity": SHARED_ONLINE_CHANNEL,
                "z_contact_pattern": {
                    "tag": "partial",
                    "rows": [[0.85, 0.15], [0.7, 0.3], [0.4, 0.6], [0.2, 0.8]]},
                "z_training_signal": {"tag": "secure", "rows": [[0.9, 0.1], [0.3, 0.7]]},
                "z_site_visits": {"tag": "secure", "rows": [[0.88, 0.12], [0.35, 0.65]]},
                "z_procurement": {"tag": "partial", "rows": [[0.95, 0.05], [0.2, 0.8]]},
                "z_movement": {"tag": "secure", "rows": [[0.9, 0.1], [0.15, 0.85]]},
            },
        },
        "decisions": [
            {"id": "d_phi"},
            {"id": "disrupt_supply", "cost": 2.0,
             "substitutions": {
                 "acquire_vehicle": {
                     "rows": {"not_engaged": [[0.995, 0.005], [0.9, 0.1]],
                              "equipped": [[0.7, 0.3], [0.5, 0.5]]}}}},
            {"id": "raid", "cost": 5.0,
             "substitutions": {
                 "W": {"abort": {"recruited": 0.7, "trained": 0.7, "targeting": 0.7,
                                  "equipped": 0.7, "attacking": 0.8},
                        "stay": {"recruited": 0.55, "trained": 0.5, "targeting": 0.45,
                                 "equipped": 0.4, "attacking": 0.7},
                        "jump": {"trained": {"targeting": 0.7, "equipped": 0.3},
                                 "equipped": {"targeting": 0.2, "attacking": 0.8}}}}},
            {"id": "stand_down", "cost": 1.0,
             "substitutions": {
                 "W": {"abort": {"recruited": 1.0, "trained": 1.0, "targeting": 1.0,
                                  "equipped": 1.0, "attacking": 1.0},
                        "stay": {"recruited": 1.0, "trained": 1.0, "targeting": 1.0,
                                 "equipped": 1.0, "attacking": 1.0},
                        "jump": {"trained": {"targeting": 0.7, "equipped": 0.3},
                                 "equipped": {"targeting": 0.2, "attacking": 0.8}}}}},
        ],
        "utilities": [
            {"id": "harm_weighted",
             "attributes": [{"name": "attack", "kind": "phase_ever", "phase": "attacking"},
                            {"name": "cost", "kind": "decision_cost"}],
             "terms": [{"attr": "attack", "weight": -1.0},
                       {"attr": "cost", "weight": -0.1}]},
            {"id": "prevent_by_horizon", "offset": 1.0,
             "attributes": [{"name": "attack", "kind": "phase_ever", "phase": "attacking"}],
             "terms": [{"attr": "attack", "weight": -1.0}]},
        ],
    }


def knife_doc():
    return {
        "meta": {
            "id": "knife-attack",
            "format": "plot-model/1",
            "horizon": 10,
            "description": "Lone-actor bladed-weapon attack sharing the radicalisation tasks.",
        },
        "category": {
            "key": "self-radicalised-lone-actor",
            "background": {"affiliation": "none-known", "history": "online-radicalised"},
            "environment": {"residence": "suburban", "setting": "open-public"},
        },
        "phases": {
            "labels": PHASES,
            "reach": {
                "recruited": ["trained"],
                "trained": ["targeting"],
                "targeting": ["equipped"],
                "equipped": ["targeting", "attacking"],
                "attacking": ["equipped"],
            },
        },
        "transition": {
            "abort": {"recruited": 0.1, "trained": 0.07, "targeting": 0.07,
                      "equipped": 0.04, "attacking": 0.03},
            "stay": {"recruited": 0.6, "trained": 0.45, "targeting": 0.5,
                     "equipped": 0.35, "attacking": 0.65},
            "jump": {"equipped": {"targeting": 0.15, "attacking": 0.85}},
            "tag": "open",
        },
        "tasks": {
            "order": ["bond_sympathisers", "withdraw_contacts", "train_weapon",
                      "recon_target", "acquire_knife", "final_approach"],
            "task_sets": {
                "recruited": ["bond_sympathisers", "withdraw_contacts"],
                "trained": ["train_weapon"],
                "targeting": ["recon_target"],
                "equipped": ["acquire_knife"],
                "attacking": ["final_approach"],
            },
            "intra_edges": [["bond_sympathisers", "withdraw_contacts"]],
            "inter_edges": [["bond_sympathisers", "bond_sympathisers"],
                            ["withdraw_contacts", "withdraw_contacts"],
                            ["train_weapon", "train_weapon"],
                            ["recon_target", "recon_target"],
                            ["acquire_knife", "acquire_knife"],
                            ["final_approach", "final_approach"]],
        },
        "intensities": {
            "channels": [
                {"name": "z_online_activity", "alphabet": ["low", "high"],
                 "parents": [{"kind": "task", "name": "bond_sympathisers"}]},
                {"name": "z_contact_pattern", "alphabet": ["stable", "shifting"],
                 "parents": [{"kind": "task", "name": "withdraw_contacts"},
                             {"kind": "channel_lag", "name": "z_online_activity"}]},
                {"name": "z_training_signal", "alphabet": ["absent", "present"],
                 "parents": [{"kind": "task", "name": "train_weapon"}]},
                {"name": "z_site_visits", "alphabet": ["rare", "frequent"],
                 "parents": [{"kind": "task", "name": "recon_target"}]},
                {"name": "z_blade_purchase", "alphabet": ["none", "flagged"],
                 "parents": [{"kind": "task", "name": "acquire_knife"}]},
                {"name": "z_movement", "alphabet": ["normal", "directed"],
                 "parents": [{"kind": "task", "name": "final_approach"}]},
            ]
        },
        "cpts": {
            "tasks": {
                **SHARED_TASK_CPTS,
                "train_weapon": {
                    "tag": "partial",
                    "rows": {"not_engaged": [[0.96, 0.04], [0.75, 0.25]],
                             "trained": [[0.4, 0.6], [0.15, 0.85]]},
                },
                "recon_target": {
                    "tag": "open",
                    "rows": {"not_engaged": [[0.93, 0.07], [0.7, 0.3]],
                             "targeting": [[0.3, 0.7], [0.1, 0.9]]},
                },
                "acquire_knife": {
                    "tag": "partial",
                    "rows": {"not_engaged": [[0.97, 0.03], [0.75, 0.25]],
                             "equipped": [[0.25, 0.75], [0.1, 0.9]]},
                },
                "final_approach": {
                    "tag": "partial",
                    "rows": {"not_engaged": [[0.99, 0.01], [0.88, 0.12]],
                             "attacking": [[0.25, 0.75], [0.06, 0.94]]},
                },
            },
            "intensities": {
                "z_online_activity": SHARED_ONLINE_CHANNEL,
                "z_contact_pattern": {
                    "tag": "partial",
                    "rows": [[0.88, 0.12], [0.75, 0.25], [0.45, 0.55], [0.25, 0.75]]},
                "z_training_signal": {"tag": "secure", "rows": [[0.92, 0.08], [0.4, 0.6]]},
                "z_site_visits": {"tag": "secure", "rows": [[0.9, 0.1], [0.4, 0.6]]},
                "z_blade_purchase": {"tag": "secure", "rows": [[0.97, 0.03], [0.45, 0.55]]},
                "z_movement": {"tag": "secure", "rows": [[0.92, 0.08], [0.2, 0.8]]},
            },
        },
        "decisions": [
            {"id": "d_phi"},
            {"id": "raid", "cost": 4.0,
             "substitutions": {
                 "W": {"abort": {"recruited": 0.75, "trained": 0.75, "targeting": 0.75,
                                  "equipped": 0.75, "attacking": 0.85},
                        "stay": {"recruited": 0.6, "trained": 0.45, "targeting": 0.5,
                                 "equipped": 0.35, "attacking": 0.65},
                        "jump": {"equipped": {"targeting": 0.15, "attacking": 0.85}}}}},
        ],
        "utilities": [
            {"id": "harm_weighted",
             "attributes": [{"name": "attack", "kind": "phase_ever", "phase": "attacking"},
                            {"name": "cost", "kind": "decision_cost"}],
             "terms": [{"attr": "attack", "weight": -1.0},
                       {"attr": "cost", "weight": -0.1}]},
        ],
    }


def main():
    out_dir = pathlib.Path(__file__).resolve().parents[1] / "src" / "plotdbn" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    for doc in (vehicle_doc(), knife_doc()):
        model = model_io.model_from_doc(doc)  # validates
        model_io.save_model(model, out_dir / f"{model.id.replace('-', '_')}.json")
        print(f"wrote {model.id}: {len(model.task_graph.order)} tasks, "
              f"{len(model.intensity_spec.channels)} channels")


if __name__ == "__main__":
    main()
