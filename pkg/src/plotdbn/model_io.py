"""Reading and writing plot-model documents.

Model files are JSON with fixed top-level sections (phases, transition,
tasks, intensities, cpts, category, meta, plus optional decisions and
utilities).  Parsing is strict: unknown fields anywhere are rejected as
load errors, which are distinct from validation failures on a readable
model.  Serialization is canonical, so save(load(x)) is byte-stable.

The full format is documented in docs/model-format.md.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from . import core
from .core import (CategoryProfile, Channel, CptCollection, IntensityCpt,
                   IntensitySpec, ParentRef, PhaseSpace, PlotModel, TaskCpt,
                   TaskGraph, TransitionParams, normalize_rows, validate_model)
from .errors import ModelLoadError
from .interventions import (AttributeSpec, Decision, UtilitySpec, UtilityTerm)

FORMAT = "plot-model/1"
DEFAULT_ALPHABET = ("0", "1")


def _section(doc: Mapping, path: str, required: tuple[str, ...],
             optional: tuple[str, ...] = ()) -> Mapping:
    if not isinstance(doc, Mapping):
        raise ModelLoadError(f"{path}: expected an object, got {type(doc).__name__}")
    unknown = sorted(set(doc) - set(required) - set(optional))
    if unknown:
        raise ModelLoadError(f"{path}: unknown field(s) {unknown}")
    missing = sorted(set(required) - set(doc))
    if missing:
        raise ModelLoadError(f"{path}: missing required field(s) {missing}")
    return doc


def _string(value, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise ModelLoadError(f"{path}: expected a non-empty string")
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelLoadError(f"{path}: expected a number")
    return float(value)


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelLoadError(f"{path}: expected an integer")
    return value


def _string_list(value, path: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise ModelLoadError(f"{path}: expected a list of strings")
    return value


def _rows(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ModelLoadError(f"{path}: expected a list of probability rows")
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelLoadError(f"{path}: rows must be numeric ({exc})") from None
    if arr.ndim != 2:
        raise ModelLoadError(f"{path}: rows must form a rectangular table")
    return arr


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def model_from_doc(doc: Mapping, *, validate: bool = True) -> PlotModel:
    _section(doc, "document",
             required=("meta", "category", "phases", "transition", "tasks",
                       "intensities", "cpts"),
             optional=("decisions", "utilities"))

    meta = _section(doc["meta"], "meta", required=("id", "format", "horizon"),
                    optional=("description",))
    if meta["format"] != FORMAT:
        raise ModelLoadError(f"meta.format: expected {FORMAT!r}, got {meta['format']!r}")
    model_id = _string(meta["id"], "meta.id")
    horizon = _int(meta["horizon"], "meta.horizon")
    extra_meta = {"description": meta["description"]} if "description" in meta else {}

    cat = _section(doc["category"], "category", required=("key",),
                   optional=("background", "environment"))
    category = CategoryProfile(key=_string(cat["key"], "category.key"),
                               background=dict(cat.get("background", {})),
                               environment=dict(cat.get("environment", {})))

    # phases ---------------------------------------------------------------
    ph = _section(doc["phases"], "phases", required=("labels", "reach"))
    labels = _string_list(ph["labels"], "phases.labels")
    if len(labels) < 2:
        raise ModelLoadError("phases.labels: need the inactive phase plus at least one active phase")
    label_index = {lab: i for i, lab in enumerate(labels)}

    def phase_idx(label, path):
        if label not in label_index:
            raise ModelLoadError(f"{path}: unknown phase label {label!r}")
        return label_index[label]

    if not isinstance(ph["reach"], Mapping):
        raise ModelLoadError("phases.reach: expected an object keyed by phase label")
    reach = {phase_idx(lab, "phases.reach"): tuple(phase_idx(j, f"phases.reach[{lab}]")
                                                   for j in _string_list(v, f"phases.reach[{lab}]"))
             for lab, v in ph["reach"].items()}
    phase_space = PhaseSpace(labels=tuple(labels), reach=reach)

    # transition -----------------------------------------------------------
    tr = _section(doc["transition"], "transition", required=("abort", "stay"),
                  optional=("jump", "tag", "overrides", "dummy"))

    def label_map(value, path):
        if not isinstance(value, Mapping):
            raise ModelLoadError(f"{path}: expected an object keyed by phase label")
        return {phase_idx(k, path): _number(v, f"{path}[{k}]") for k, v in value.items()}

    def jump_map(value, path):
        if not isinstance(value, Mapping):
            raise ModelLoadError(f"{path}: expected an object keyed by phase label")
        out = {}
        for i_lab, row in value.items():
            if not isinstance(row, Mapping):
                raise ModelLoadError(f"{path}[{i_lab}]: expected an object of jump probabilities")
            probs = {phase_idx(j_lab, f"{path}[{i_lab}]"): _number(p, f"{path}[{i_lab}][{j_lab}]")
                     for j_lab, p in row.items()}
            total = sum(probs.values())
            if (core.ROW_SUM_TOLERANCE < abs(total - 1.0) <= core.RENORM_TOLERANCE) and total > 0:
                probs = {j: p / total for j, p in probs.items()}
            out[phase_idx(i_lab, path)] = probs
        return out

    overrides = {}
    if "overrides" in tr:
        if not isinstance(tr["overrides"], list):
            raise ModelLoadError("transition.overrides: expected a list")
        for k, entry in enumerate(tr["overrides"]):
            o = _section(entry, f"transition.overrides[{k}]", required=("t",),
                         optional=("abort", "stay", "jump"))
            parts = {}
            if "abort" in o:
                parts["abort"] = label_map(o["abort"], f"transition.overrides[{k}].abort")
            if "stay" in o:
                parts["stay"] = label_map(o["stay"], f"transition.overrides[{k}].stay")
            if "jump" in o:
                parts["jump"] = jump_map(o["jump"], f"transition.overrides[{k}].jump")
            overrides[_int(o["t"], f"transition.overrides[{k}].t")] = parts
    transition = TransitionParams(abort=label_map(tr["abort"], "transition.abort"),
                                  stay=label_map(tr["stay"], "transition.stay"),
                                  jump=jump_map(tr.get("jump", {}), "transition.jump"),
                                  overrides=overrides,
                                  tag=tr.get("tag", "open"),
                                  dummy=bool(tr.get("dummy", False)))

    # tasks ----------------------------------------------------------------
    ts = _section(doc["tasks"], "tasks", required=("order", "task_sets"),
                  optional=("alphabets", "intra_edges", "inter_edges"))
    order = _string_list(ts["order"], "tasks.order")
    alphabets = {name: DEFAULT_ALPHABET for name in order}
    for name, states in ts.get("alphabets", {}).items():
        if name not in alphabets:
            raise ModelLoadError(f"tasks.alphabets[{name}]: unknown task")
        alphabets[name] = tuple(_string_list(states, f"tasks.alphabets[{name}]"))

    def edge_list(value, path):
        if not isinstance(value, list):
            raise ModelLoadError(f"{path}: expected a list of [src, dst] pairs")
        out = []
        for e in value:
            if not isinstance(e, list) or len(e) != 2:
                raise ModelLoadError(f"{path}: expected [src, dst] pairs")
            out.append((_string(e[0], path), _string(e[1], path)))
        return tuple(out)

    if not isinstance(ts["task_sets"], Mapping):
        raise ModelLoadError("tasks.task_sets: expected an object keyed by phase label")
    task_sets = {phase_idx(lab, "tasks.task_sets"): frozenset(_string_list(v, f"tasks.task_sets[{lab}]"))
                 for lab, v in ts["task_sets"].items()}
    task_graph = TaskGraph(order=tuple(order), alphabets=alphabets,
                           intra_edges=edge_list(ts.get("intra_edges", []), "tasks.intra_edges"),
                           inter_edges=edge_list(ts.get("inter_edges", []), "tasks.inter_edges"),
                           task_sets=task_sets)

    # intensities ------------------------------------------------------------
    inten = _section(doc["intensities"], "intensities", required=("channels",))
    if not isinstance(inten["channels"], list):
        raise ModelLoadError("intensities.channels: expected a list")
    channels = []
    for k, entry in enumerate(inten["channels"]):
        ch = _section(entry, f"intensities.channels[{k}]", required=("name", "parents"),
                      optional=("alphabet",))
        parents = []
        if not isinstance(ch["parents"], list):
            raise ModelLoadError(f"intensities.channels[{k}].parents: expected a list")
        for p in ch["parents"]:
            pr = _section(p, f"intensities.channels[{k}].parents", required=("kind",),
                          optional=("name",))
            parents.append(ParentRef(kind=_string(pr["kind"], "parent.kind"),
                                     name=pr.get("name", core.PHASE_VERTEX)))
        channels.append(Channel(name=_string(ch["name"], f"intensities.channels[{k}].name"),
                                alphabet=tuple(ch.get("alphabet", DEFAULT_ALPHABET)),
                                parents=tuple(parents)))
    intensity_spec = IntensitySpec(channels=tuple(channels))

    # cpts -------------------------------------------------------------------
    cp = _section(doc["cpts"], "cpts", required=("tasks", "intensities"))
    task_cpts = {}
    if not isinstance(cp["tasks"], Mapping):
        raise ModelLoadError("cpts.tasks: expected an object keyed by task name")
    for name, entry in cp["tasks"].items():
        e = _section(entry, f"cpts.tasks[{name}]", required=("rows",),
                     optional=("tag", "dummy"))
        if not isinstance(e["rows"], Mapping):
            raise ModelLoadError(f"cpts.tasks[{name}].rows: expected an object keyed by phase label")
        blocks = {}
        for lab, rows in e["rows"].items():
            where = f"cpts.tasks[{name}].rows[{lab}]"
            blocks[phase_idx(lab, where)] = normalize_rows(_rows(rows, where), where)
        if 0 not in blocks:
            raise ModelLoadError(f"cpts.tasks[{name}].rows: the inactive-phase block is required")
        task_cpts[name] = TaskCpt(blocks=blocks, tag=e.get("tag", "open"),
                                  dummy=bool(e.get("dummy", False)))
    intensity_cpts = {}
    if not isinstance(cp["intensities"], Mapping):
        raise ModelLoadError("cpts.intensities: expected an object keyed by channel name")
    for name, entry in cp["intensities"].items():
        e = _section(entry, f"cpts.intensities[{name}]", required=("rows",),
                     optional=("tag", "dummy"))
        where = f"cpts.intensities[{name}].rows"
        intensity_cpts[name] = IntensityCpt(rows=normalize_rows(_rows(e["rows"], where), where),
                                            tag=e.get("tag", "open"),
                                            dummy=bool(e.get("dummy", False)))
    cpts = CptCollection(tasks=task_cpts, intensities=intensity_cpts)

    # decisions and utilities -------------------------------------------------
    decisions = {}
    for k, entry in enumerate(doc.get("decisions", [])):
        d = _section(entry, f"decisions[{k}]", required=("id",),
                     optional=("cost", "window", "substitutions"))
        window = (None, None)
        if "window" in d:
            w = _section(d["window"], f"decisions[{k}].window", required=(), optional=("start", "end"))
            window = (w.get("start"), w.get("end"))
        subs = {}
        for vertex, payload in d.get("substitutions", {}).items():
            if vertex == core.PHASE_VERTEX:
                _section(payload, f"decisions[{k}].substitutions.W",
                         required=("abort", "stay"), optional=("jump",))
            else:
                p = _section(payload, f"decisions[{k}].substitutions[{vertex}]",
                             required=(), optional=("rows", "force"))
                if ("rows" in p) == ("force" in p):
                    raise ModelLoadError(f"decisions[{k}].substitutions[{vertex}]: "
                                         "supply either rows or force")
            subs[vertex] = payload
        dec = Decision(id=_string(d["id"], f"decisions[{k}].id"),
                       substitutions=subs, window=window,
                       cost=_number(d.get("cost", 0.0), f"decisions[{k}].cost"))
        if dec.id in decisions:
            raise ModelLoadError(f"decisions[{k}]: duplicate decision id {dec.id!r}")
        decisions[dec.id] = dec

    utilities = {}
    for k, entry in enumerate(doc.get("utilities", [])):
        u = _section(entry, f"utilities[{k}]", required=("id", "attributes"),
                     optional=("offset", "terms"))
        attrs = []
        for a in u["attributes"]:
            aa = _section(a, f"utilities[{k}].attributes", required=("name", "kind"),
                          optional=("phase",))
            attrs.append(AttributeSpec(name=aa["name"], kind=aa["kind"], phase=aa.get("phase")))
        terms = []
        for tm in u.get("terms", []):
            tt = _section(tm, f"utilities[{k}].terms", required=("attr",),
                          optional=("weight", "table"))
            terms.append(UtilityTerm(attr=tt["attr"], weight=tt.get("weight"),
                                     table=tt.get("table")))
        spec = UtilitySpec(id=_string(u["id"], f"utilities[{k}].id"), attributes=tuple(attrs),
                           offset=_number(u.get("offset", 0.0), f"utilities[{k}].offset"),
                           terms=tuple(terms))
        if spec.id in utilities:
            raise ModelLoadError(f"utilities[{k}]: duplicate utility id {spec.id!r}")
        utilities[spec.id] = spec

    model = PlotModel(id=model_id, category=category, phase_space=phase_space,
                      transition=transition, task_graph=task_graph, cpts=cpts,
                      intensity_spec=intensity_spec, horizon=horizon, meta=extra_meta,
                      decisions=decisions, utilities=utilities)
    if validate:
        validate_model(model).raise_if_invalid()
    return model


def load_model(path: str | Path, *, validate: bool = True) -> PlotModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelLoadError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelLoadError(f"{path} is not valid JSON: {exc}") from exc
    return model_from_doc(doc, validate=validate)


# ---------------------------------------------------------------------------
# Saving
# ---------------------------------------------------------------------------


def _rows_out(arr: np.ndarray) -> list[list[float]]:
    return [[float(x) for x in row] for row in np.atleast_2d(np.asarray(arr))]


def model_to_doc(model: PlotModel) -> dict:
    """Canonical document for a model (applied interventions are not persisted)."""
    ps = model.phase_space
    lab = ps.labels

    def by_label(mapping):
        return {lab[i]: v for i, v in sorted(mapping.items())}

    doc: dict = {
        "meta": {"id": model.id, "format": FORMAT, "horizon": model.horizon,
                 **({"description": model.meta["description"]} if "description" in model.meta else {})},
        "category": {"key": model.category.key,
                     "background": dict(model.category.background),
                     "environment": dict(model.category.environment)},
        "phases": {"labels": list(lab),
                   "reach": {lab[i]: [lab[j] for j in js] for i, js in sorted(ps.reach.items())}},
        "transition": {"abort": by_label(model.transition.abort),
                       "stay": by_label(model.transition.stay),
                       "tag": model.transition.tag,
                       **({"dummy": True} if model.transition.dummy else {})},
        "tasks": {"order": list(model.task_graph.order),
                  "task_sets": {lab[j]: sorted(v, key=model.task_graph.index)
                                for j, v in sorted(model.task_graph.task_sets.items())}},
        "intensities": {"channels": []},
        "cpts": {"tasks": {}, "intensities": {}},
    }
    jump = {lab[i]: by_label(row) for i, row in sorted(model.transition.jump.items())}
    if jump:
        doc["transition"]["jump"] = jump
    if model.transition.overrides:
        out = []
        for t, parts in sorted(model.transition.overrides.items()):
            entry: dict = {"t": t}
            for part in ("abort", "stay"):
                if part in parts:
                    entry[part] = by_label(parts[part])
            if "jump" in parts:
                entry["jump"] = {lab[i]: by_label(row) for i, row in sorted(parts["jump"].items())}
            out.append(entry)
        doc["transition"]["overrides"] = out

    alphabets = {n: list(a) for n, a in model.task_graph.alphabets.items()
                 if tuple(a) != DEFAULT_ALPHABET}
    if alphabets:
        doc["tasks"]["alphabets"] = alphabets
    if model.task_graph.intra_edges:
        doc["tasks"]["intra_edges"] = [list(e) for e in model.task_graph.intra_edges]
    if model.task_graph.inter_edges:
        doc["tasks"]["inter_edges"] = [list(e) for e in model.task_graph.inter_edges]

    for ch in model.intensity_spec.channels:
        entry = {"name": ch.name,
                 "parents": [{"kind": p.kind, **({"name": p.name} if p.kind not in ("phase", "phase_lag") else {})}
                             for p in ch.parents]}
        if ch.alphabet != DEFAULT_ALPHABET:
            entry["alphabet"] = list(ch.alphabet)
        doc["intensities"]["channels"].append(entry)

    for name in model.task_graph.order:
        cpt = model.cpts.tasks[name]
        doc["cpts"]["tasks"][name] = {
            "tag": cpt.tag,
            **({"dummy": True} if cpt.dummy else {}),
            "rows": {lab[j]: _rows_out(rows) for j, rows in sorted(cpt.blocks.items())}}
    for name in model.intensity_spec.names:
        cpt = model.cpts.intensities[name]
        doc["cpts"]["intensities"][name] = {"tag": cpt.tag,
                                            **({"dummy": True} if cpt.dummy else {}),
                                            "rows": _rows_out(cpt.rows)}

    if model.decisions:
        out = []
        for did in sorted(model.decisions):
            d = model.decisions[did]
            entry = {"id": d.id}
            if d.cost:
                entry["cost"] = d.cost
            if d.window != (None, None):
                entry["window"] = {k: v for k, v in zip(("start", "end"), d.window) if v is not None}
            if d.substitutions:
                entry["substitutions"] = {v: _plain(payload) for v, payload in d.substitutions.items()}
            out.append(entry)
        doc["decisions"] = out
    if model.utilities:
        out = []
        for uid in sorted(model.utilities):
            u = model.utilities[uid]
            entry = {"id": u.id,
                     "attributes": [{"name": a.name, "kind": a.kind,
                                     **({"phase": a.phase} if a.phase is not None else {})}
                                    for a in u.attributes]}
            if u.offset:
                entry["offset"] = u.offset
            if u.terms:
                entry["terms"] = [
                    ({"attr": t.attr, "weight": t.weight} if t.weight is not None
                     else {"attr": t.attr, "table": dict(t.table)})
                    for t in u.terms]
            out.append(entry)
        doc["utilities"] = out
    return doc


def _plain(value):
    """Recursively convert mapping proxies and arrays to plain JSON values."""
    if isinstance(value, Mapping):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return _rows_out(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def dumps_canonical(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def save_model(model: PlotModel, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(model_to_doc(model)))
