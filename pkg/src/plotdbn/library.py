"""Model libraries: ordered entries, shared structure, and firewall hygiene.

A library is an ordered collection of plot models kept by one side of the
co-creation pair (A for the open team, B for the in-house team).  This
module computes novelty sets for new entries, the vertex/edge/table
structure shared across all entries, name harmonisation, sanitized exports
that replace secure tables with registered dummies, and structured diffs
between two libraries.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import model_io
from .core import (PARTITION_TAGS, PHASE_VERTEX, Channel, CptCollection,
                   ParentRef, PlotModel, validate_model)
from .errors import LibraryError, SecureTableError
from .learning import DirichletCpt

LIBRARY_FORMAT = "plot-library/1"


@dataclass(frozen=True, eq=False)
class Library:
    """Ordered entries plus side metadata; mutated functionally."""

    side: str = "B"
    iteration: int = 0
    entries: tuple[PlotModel, ...] = ()
    novelty: Mapping[str, Mapping[str, tuple[str, ...]]] = field(default_factory=dict)
    dummies: Mapping[str, Mapping[str, dict]] = field(default_factory=dict)
    variants: Mapping[str, Mapping[str, dict]] = field(default_factory=dict)

    def __post_init__(self):
        if self.side not in ("A", "B"):
            raise LibraryError(f"library side must be 'A' or 'B', got {self.side!r}")
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "novelty", MappingProxyType(
            {eid: MappingProxyType({tag: tuple(names) for tag, names in tags.items()})
             for eid, tags in dict(self.novelty).items()}))
        object.__setattr__(self, "dummies", MappingProxyType(
            {eid: MappingProxyType(dict(v)) for eid, v in dict(self.dummies).items()}))
        object.__setattr__(self, "variants", MappingProxyType(
            {eid: MappingProxyType(dict(v)) for eid, v in dict(self.variants).items()}))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.entries)

    def entry(self, entry_id: str) -> PlotModel:
        for m in self.entries:
            if m.id == entry_id:
                return m
        raise LibraryError(f"no library entry {entry_id!r}")


@dataclass(frozen=True, eq=False)
class NoveltyReport:
    """Novelty sets for a new entry, split by partition tag."""

    entry_id: str
    novel: Mapping[str, tuple[str, ...]]          # tag -> vertex names
    reused: tuple[str, ...]                        # vertices whose tables already appear
    declared_mismatch: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "novel", MappingProxyType(
            {tag: tuple(names) for tag, names in dict(self.novel).items()}))


@dataclass(frozen=True, eq=False)
class SharedStructure:
    """Vertices, edges, and tables shared across every entry.

    ``common_vertices`` is the intersection of the entries' vertex sets;
    ``edges`` holds every edge appearing in at least one entry, restricted
    to common vertices; ``v_star`` keeps only vertices with identical parent
    sets everywhere, and ``c_star`` the subset whose tables are also
    value-identical.
    """

    common_vertices: tuple[str, ...]
    edges: tuple[tuple[str, str, bool], ...]
    v_star: tuple[str, ...]
    c_star: tuple[str, ...]


def _vertex_semantics(model: PlotModel, name: str):
    return (model.vertex_kind(name), tuple(model.vertex_alphabet(name)))


def _check_name_compatibility(entries: Sequence[PlotModel]) -> None:
    """Same name, same meaning: kind and alphabet must agree across entries.

    The phase vertex is exempt; entries may use different phase templates and
    simply fall out of the shared structure.
    """
    seen: dict[str, tuple] = {}
    owner: dict[str, str] = {}
    for model in entries:
        for name in model.vertex_names:
            if name == PHASE_VERTEX:
                continue
            semantics = _vertex_semantics(model, name)
            if name in seen and seen[name] != semantics:
                raise LibraryError(
                    f"vertex {name!r} means different things in entries {owner[name]!r} "
                    f"and {model.id!r}: {seen[name]} vs {semantics}; harmonise names first")
            seen.setdefault(name, semantics)
            owner.setdefault(name, model.id)


def add_entry(library: Library, model: PlotModel,
              novelty_declaration: Iterable[str] | None = None
              ) -> tuple[Library, NoveltyReport]:
    """Append a validated model and compute which of its tables are new.

    A table is new when no earlier entry holds a value-identical table under
    the same vertex name and parent set.  The optional declaration lists
    vertices the modeller expected to be novel; disagreements are reported,
    not fatal.
    """
    validate_model(model).raise_if_invalid()
    if model.id in library.ids:
        raise LibraryError(f"duplicate entry id {model.id!r}")
    _check_name_compatibility([*library.entries, model])

    earlier = {m.table_identity(v) for m in library.entries for v in m.vertex_names}
    novel: dict[str, list[str]] = {tag: [] for tag in PARTITION_TAGS}
    reused = []
    for name in model.vertex_names:
        if model.table_identity(name) in earlier:
            reused.append(name)
        else:
            novel[model.vertex_tag(name)].append(name)

    declared_mismatch: tuple[str, ...] = ()
    if novelty_declaration is not None:
        declared = set(novelty_declaration)
        computed = {n for names in novel.values() for n in names}
        declared_mismatch = tuple(sorted(declared ^ computed))

    report = NoveltyReport(entry_id=model.id,
                           novel={tag: tuple(names) for tag, names in novel.items()},
                           reused=tuple(reused), declared_mismatch=declared_mismatch)
    new_novelty = {**{k: dict(v) for k, v in library.novelty.items()},
                   model.id: {tag: tuple(names) for tag, names in novel.items()}}
    updated = dataclasses.replace(library, entries=(*library.entries, model),
                                  novelty=new_novelty)
    return updated, report


def shared_structure(library: Library) -> SharedStructure:
    if not library.entries:
        raise LibraryError("shared structure needs at least one entry")
    vertex_sets = [set(m.vertex_names) for m in library.entries]
    common = set.intersection(*vertex_sets)

    edges = set()
    for m in library.entries:
        for src, dst, lagged in m.edge_set():
            if src in common and dst in common:
                edges.add((src, dst, lagged))

    v_star = []
    for name in sorted(common):
        # identical parent sets and alphabets everywhere, so that the vertex's
        # table has the same dimensions in every entry
        shapes = set()
        for m in library.entries:
            signature = m.parent_signature(name)
            sizes = tuple(m._parent_size(p) for p in signature)
            shapes.add((signature, sizes, tuple(m.vertex_alphabet(name))))
        if len(shapes) == 1:
            v_star.append(name)

    c_star = []
    for name in v_star:
        identities = {m.table_identity(name) for m in library.entries}
        if len(identities) == 1:
            c_star.append(name)

    return SharedStructure(common_vertices=tuple(sorted(common)),
                           edges=tuple(sorted(edges)),
                           v_star=tuple(v_star), c_star=tuple(c_star))


# ---------------------------------------------------------------------------
# Harmonisation
# ---------------------------------------------------------------------------


def rename_vertices(model: PlotModel, mapping: Mapping[str, str]) -> PlotModel:
    """Rewrite vertex names everywhere; probabilities are untouched."""

    def f(name: str) -> str:
        return mapping.get(name, name)

    g = model.task_graph
    new_names = [f(n) for n in model.vertex_names]
    if len(set(new_names)) != len(new_names):
        dupes = sorted({n for n in new_names if new_names.count(n) > 1})
        raise LibraryError(f"rename collides semantically distinct vertices: {dupes}")
    if f(PHASE_VERTEX) != PHASE_VERTEX:
        raise LibraryError("the phase vertex name is fixed")

    task_graph = dataclasses.replace(
        g,
        order=tuple(f(n) for n in g.order),
        alphabets={f(n): a for n, a in g.alphabets.items()},
        intra_edges=tuple((f(a), f(b)) for a, b in g.intra_edges),
        inter_edges=tuple((f(a), f(b)) for a, b in g.inter_edges),
        task_sets={j: frozenset(f(n) for n in members) for j, members in g.task_sets.items()})
    channels = tuple(
        Channel(name=f(ch.name), alphabet=ch.alphabet,
                parents=tuple(ParentRef(p.kind, f(p.name)) for p in ch.parents))
        for ch in model.intensity_spec.channels)
    cpts = CptCollection(
        tasks={f(n): cpt for n, cpt in model.cpts.tasks.items()},
        intensities={f(n): cpt for n, cpt in model.cpts.intensities.items()})
    decisions = {}
    for did, d in model.decisions.items():
        decisions[did] = dataclasses.replace(
            d, substitutions={f(v): payload for v, payload in d.substitutions.items()})
    return dataclasses.replace(model, task_graph=task_graph,
                               intensity_spec=dataclasses.replace(
                                   model.intensity_spec, channels=channels),
                               cpts=cpts, decisions=decisions)


def harmonise(library: Library, rename_map: Mapping[str, str]) -> Library:
    """Apply a bijective rename across all entries and their side tables."""
    values = list(rename_map.values())
    if len(set(values)) != len(values):
        raise LibraryError("rename map must be a bijection on the affected names")

    def f(name: str) -> str:
        return rename_map.get(name, name)

    entries = tuple(rename_vertices(m, rename_map) for m in library.entries)
    _check_name_compatibility(entries)
    novelty = {eid: {tag: tuple(f(n) for n in names) for tag, names in tags.items()}
               for eid, tags in library.novelty.items()}
    dummies = {eid: {f(v): payload for v, payload in by_vertex.items()}
               for eid, by_vertex in library.dummies.items()}
    variants = {eid: {cat: {f(v): payload for v, payload in overlay.items()}
                      for cat, overlay in by_cat.items()}
                for eid, by_cat in library.variants.items()}
    return dataclasses.replace(library, entries=entries, novelty=novelty,
                               dummies=dummies, variants=variants)


# ---------------------------------------------------------------------------
# Drafting a new entry from the shared tables
# ---------------------------------------------------------------------------

PENDING = "PENDING"


@dataclass(frozen=True, eq=False)
class DraftEntry:
    document: dict
    prefilled: tuple[str, ...]
    pending: Mapping[str, tuple[str, ...]]  # tag -> vertex names
    pending_categories: tuple[str, ...] = ()  # CPT variants still to elicit

    def __post_init__(self):
        object.__setattr__(self, "pending", MappingProxyType(
            {tag: tuple(names) for tag, names in dict(self.pending).items()}))
        object.__setattr__(self, "pending_categories", tuple(self.pending_categories))


def seed_entry(library: Library, skeleton: Mapping,
               categories: Sequence[str] = ()) -> DraftEntry:
    """Pre-fill a structural skeleton with every matching shared table.

    The skeleton is a model document whose cpt ``rows`` may be the string
    ``"PENDING"``.  A vertex is pre-filled when its name and parent set
    match a table shared by every current entry; everything else stays
    pending, partitioned by its declared tag.  ``categories`` lists the
    suspect categories the finished entry must cover beyond its base one;
    they come back on the draft as variant elicitation work.
    """
    shared = shared_structure(library)
    source = library.entries[0]
    doc = json.loads(json.dumps(skeleton))  # deep copy, plain types

    structural = json.loads(json.dumps(doc))
    structural["cpts"] = {"tasks": {}, "intensities": {}}
    structural.pop("decisions", None)
    structural.pop("utilities", None)
    draft_model = model_io.model_from_doc(structural, validate=False)

    prefilled: list[str] = []
    pending: dict[str, list[str]] = {tag: [] for tag in PARTITION_TAGS}

    def matches(name: str) -> bool:
        return (name in shared.c_star
                and draft_model.parent_signature(name) == source.parent_signature(name)
                and tuple(draft_model.vertex_alphabet(name)) == tuple(source.vertex_alphabet(name)))

    labels = draft_model.phase_space.labels
    for name in draft_model.task_graph.order:
        entry = doc["cpts"]["tasks"].setdefault(name, {"tag": "open", "rows": PENDING})
        if entry.get("rows") != PENDING:
            continue
        if matches(name):
            blocks = source.cpts.tasks[name].blocks
            entry["rows"] = {labels[j]: [[float(x) for x in row] for row in rows]
                             for j, rows in sorted(blocks.items())}
            prefilled.append(name)
        else:
            pending[entry.get("tag", "open")].append(name)
    for name in draft_model.intensity_spec.names:
        entry = doc["cpts"]["intensities"].setdefault(name, {"tag": "open", "rows": PENDING})
        if entry.get("rows") != PENDING:
            continue
        if matches(name):
            rows = source.cpts.intensities[name].rows
            entry["rows"] = [[float(x) for x in row] for row in np.asarray(rows)]
            prefilled.append(name)
        else:
            pending[entry.get("tag", "open")].append(name)

    base_category = doc.get("category", {}).get("key")
    return DraftEntry(document=doc, prefilled=tuple(prefilled),
                      pending={tag: tuple(names) for tag, names in pending.items()},
                      pending_categories=tuple(c for c in categories
                                               if c != base_category))


# ---------------------------------------------------------------------------
# Sanitized export
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SanitizedExport:
    document: dict
    manifest: tuple[dict, ...]  # one item per replaced table


def _apply_dummy(entry_doc: dict, vertex: str, payload: Mapping, entry_id: str) -> None:
    if vertex == PHASE_VERTEX:
        for part in ("abort", "stay", "jump"):
            if part in payload:
                entry_doc["transition"][part] = json.loads(json.dumps(payload[part]))
            else:
                entry_doc["transition"].pop(part, None)
        entry_doc["transition"]["tag"] = "open"
        entry_doc["transition"]["dummy"] = True
    elif vertex in entry_doc["cpts"]["tasks"]:
        entry_doc["cpts"]["tasks"][vertex] = {
            "tag": "open", "dummy": True,
            "rows": json.loads(json.dumps(payload["rows"]))}
    elif vertex in entry_doc["cpts"]["intensities"]:
        entry_doc["cpts"]["intensities"][vertex] = {
            "tag": "open", "dummy": True,
            "rows": json.loads(json.dumps(payload["rows"]))}
    else:
        raise LibraryError(f"dummy registered for unknown vertex {vertex!r} in entry {entry_id!r}")


def sanitize_export(library: Library) -> SanitizedExport:
    """Serialize the library with every secure table replaced by its dummy.

    Refuses (naming the table) when a secure table has no registered dummy;
    secure values never leave silently.  Replaced tables are marked
    ``dummy: true``, re-tagged open, and listed in the manifest.
    """
    manifest = []
    entries = {}
    for model in library.entries:
        entry_doc = model_io.model_to_doc(model)
        registered = library.dummies.get(model.id, {})
        for vertex in model.vertex_names:
            if model.vertex_tag(vertex) != "secure":
                continue
            if vertex not in registered:
                raise SecureTableError(
                    f"secure table {vertex!r} in entry {model.id!r} has no registered dummy; "
                    "refusing to export")
            replacement = registered[vertex]
            _check_dummy(model, vertex, replacement)
            _apply_dummy(entry_doc, vertex, replacement, model.id)
            manifest.append({"entry": model.id, "vertex": vertex, "original_tag": "secure"})
        entries[model.id] = entry_doc

    document = {
        "format": LIBRARY_FORMAT,
        "side": library.side,
        "iteration": library.iteration,
        "order": list(library.ids),
        "novelty": {eid: {tag: list(names) for tag, names in tags.items()}
                    for eid, tags in library.novelty.items()},
        "entries": entries,
        "sanitized": [dict(item) for item in manifest],
    }
    return SanitizedExport(document=document, manifest=tuple(manifest))


def _check_dummy(model: PlotModel, vertex: str, payload: Mapping) -> None:
    """Dummies must be legal tables for the vertex: right shape, rows sum to one."""

    def check_rows(rows, shape, where):
        arr = np.asarray(rows, dtype=float)
        if arr.shape != shape:
            raise SecureTableError(f"dummy for {where}: expected shape {shape}, got {arr.shape}")
        if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-9):
            raise SecureTableError(f"dummy for {where}: rows must be probability vectors")

    if vertex == PHASE_VERTEX:
        from .core import TransitionParams, build_transition_matrix
        idx = model.phase_space.index
        params = TransitionParams(
            abort={idx(k): v for k, v in payload["abort"].items()},
            stay={idx(k): v for k, v in payload["stay"].items()},
            jump={idx(i): {idx(j): p for j, p in row.items()}
                  for i, row in payload.get("jump", {}).items()})
        matrix = build_transition_matrix(model.phase_space, params)
        if np.any(np.abs(matrix.sum(axis=1) - 1.0) > 1e-9):
            raise SecureTableError(f"dummy transition for {model.id!r} is not row-stochastic")
    elif vertex in model.task_graph.order:
        shape = model.expected_task_block_shape(vertex)
        blocks = payload["rows"]
        expected = {model.phase_space.labels[j] for j in model.cpts.tasks[vertex].blocks}
        if set(blocks) != expected:
            raise SecureTableError(
                f"dummy for {vertex!r} must cover exactly the blocks {sorted(expected)}")
        for label, rows in blocks.items():
            check_rows(rows, shape, f"{vertex}[{label}]")
    else:
        check_rows(payload["rows"], model.expected_channel_shape(vertex), vertex)


def import_sanitized(document: Mapping) -> Library:
    """Rebuild a library from a sanitized export document (the receiving side)."""
    if document.get("format") != LIBRARY_FORMAT:
        raise LibraryError(f"unexpected export format {document.get('format')!r}")
    entries = tuple(model_io.model_from_doc(document["entries"][eid])
                    for eid in document["order"])
    return Library(side="A", iteration=document["iteration"], entries=entries,
                   novelty={eid: {tag: tuple(names) for tag, names in tags.items()}
                            for eid, tags in document.get("novelty", {}).items()})


def scan_for_secure(document: Mapping) -> list[str]:
    """Mechanical scan of an export document for any secure-tagged table."""
    hits = []
    for eid, entry in document.get("entries", {}).items():
        if entry["transition"].get("tag") == "secure":
            hits.append(f"{eid}:{PHASE_VERTEX}")
        for section in ("tasks", "intensities"):
            for name, cpt in entry["cpts"][section].items():
                if cpt.get("tag") == "secure":
                    hits.append(f"{eid}:{name}")
    return hits


# ---------------------------------------------------------------------------
# Diff
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EntryDiff:
    entry_id: str
    vertices_only_a: tuple[str, ...] = ()
    vertices_only_b: tuple[str, ...] = ()
    edges_only_a: tuple[tuple[str, str, bool], ...] = ()
    edges_only_b: tuple[tuple[str, str, bool], ...] = ()
    table_deltas: tuple[dict, ...] = ()      # {vertex, reason, tag_a, tag_b}
    novelty_deltas: tuple[dict, ...] = ()    # {tag, only_a, only_b}

    @property
    def empty(self) -> bool:
        return not (self.vertices_only_a or self.vertices_only_b or self.edges_only_a
                    or self.edges_only_b or self.table_deltas or self.novelty_deltas)


@dataclass(frozen=True, eq=False)
class DiffReport:
    entries_only_a: tuple[str, ...]
    entries_only_b: tuple[str, ...]
    entry_diffs: tuple[EntryDiff, ...]

    @property
    def empty(self) -> bool:
        return (not self.entries_only_a and not self.entries_only_b
                and all(d.empty for d in self.entry_diffs))

    def to_dict(self) -> dict:
        return {
            "empty": self.empty,
            "entries_only_a": list(self.entries_only_a),
            "entries_only_b": list(self.entries_only_b),
            "entries": [
                {"id": d.entry_id,
                 "vertices_only_a": list(d.vertices_only_a),
                 "vertices_only_b": list(d.vertices_only_b),
                 "edges_only_a": [list(e) for e in d.edges_only_a],
                 "edges_only_b": [list(e) for e in d.edges_only_b],
                 "table_deltas": [dict(x) for x in d.table_deltas],
                 "novelty_deltas": [dict(x) for x in d.novelty_deltas]}
                for d in self.entry_diffs if not d.empty],
        }

    def summary(self) -> str:
        if self.empty:
            return "libraries identical"
        lines = []
        if self.entries_only_a:
            lines.append(f"entries only in A: {', '.join(self.entries_only_a)}")
        if self.entries_only_b:
            lines.append(f"entries only in B: {', '.join(self.entries_only_b)}")
        for d in self.entry_diffs:
            if d.empty:
                continue
            lines.append(f"entry {d.entry_id}:")
            for name in d.vertices_only_a:
                lines.append(f"  vertex only in A: {name}")
            for name in d.vertices_only_b:
                lines.append(f"  vertex only in B: {name}")
            for src, dst, lag in d.edges_only_a:
                lines.append(f"  edge only in A: {src} -> {dst}{' (lagged)' if lag else ''}")
            for src, dst, lag in d.edges_only_b:
                lines.append(f"  edge only in B: {src} -> {dst}{' (lagged)' if lag else ''}")
            for delta in d.table_deltas:
                lines.append(f"  table {delta['vertex']}: {delta['reason']} "
                             f"(tags {delta['tag_a']}/{delta['tag_b']})")
            for delta in d.novelty_deltas:
                lines.append(f"  novelty[{delta['tag']}]: only A {delta['only_a']}, "
                             f"only B {delta['only_b']}")
        return "\n".join(lines)


def diff(library_a: Library, library_b: Library) -> DiffReport:
    """Symmetric structural difference; empty iff the libraries are identical."""
    ids_a, ids_b = set(library_a.ids), set(library_b.ids)
    entry_diffs = []
    for eid in sorted(ids_a & ids_b):
        a, b = library_a.entry(eid), library_b.entry(eid)
        va, vb = set(a.vertex_names), set(b.vertex_names)
        ea = {e for e in a.edge_set() if e[0] in va & vb and e[1] in va & vb}
        eb = {e for e in b.edge_set() if e[0] in va & vb and e[1] in va & vb}
        deltas = []
        for name in sorted(va & vb):
            if a.parent_signature(name) != b.parent_signature(name):
                reason = "parents"
            elif tuple(a.vertex_alphabet(name)) != tuple(b.vertex_alphabet(name)):
                reason = "alphabet"
            elif a.table_identity(name) != b.table_identity(name):
                reason = "values"
            elif a.vertex_tag(name) != b.vertex_tag(name):
                reason = "tag"
            else:
                continue
            deltas.append({"vertex": name, "reason": reason,
                           "tag_a": a.vertex_tag(name), "tag_b": b.vertex_tag(name)})
        deltas.sort(key=lambda d: (d["tag_a"], d["vertex"]))
        novelty_deltas = []
        nov_a = library_a.novelty.get(eid, {})
        nov_b = library_b.novelty.get(eid, {})
        for tag in PARTITION_TAGS:
            set_a, set_b = set(nov_a.get(tag, ())), set(nov_b.get(tag, ()))
            if set_a != set_b:
                novelty_deltas.append({"tag": tag,
                                       "only_a": sorted(set_a - set_b),
                                       "only_b": sorted(set_b - set_a)})
        entry_diffs.append(EntryDiff(
            entry_id=eid,
            vertices_only_a=tuple(sorted(va - vb)),
            vertices_only_b=tuple(sorted(vb - va)),
            edges_only_a=tuple(sorted(ea - eb)),
            edges_only_b=tuple(sorted(eb - ea)),
            table_deltas=tuple(deltas),
            novelty_deltas=tuple(novelty_deltas)))
    return DiffReport(entries_only_a=tuple(sorted(ids_a - ids_b)),
                      entries_only_b=tuple(sorted(ids_b - ids_a)),
                      entry_diffs=tuple(entry_diffs))


# ---------------------------------------------------------------------------
# Disk layout
# ---------------------------------------------------------------------------


def save_library(library: Library, directory: str | Path) -> Path:
    """Write the canonical on-disk form: an index plus one file per entry."""
    directory = Path(directory)
    (directory / "entries").mkdir(parents=True, exist_ok=True)
    index = {
        "format": LIBRARY_FORMAT,
        "side": library.side,
        "iteration": library.iteration,
        "order": list(library.ids),
        "novelty": {eid: {tag: list(names) for tag, names in tags.items()}
                    for eid, tags in library.novelty.items()},
    }
    (directory / "index.json").write_text(model_io.dumps_canonical(index))
    for model in library.entries:
        model_io.save_model(model, directory / "entries" / f"{model.id}.json")
    if library.dummies:
        (directory / "dummies").mkdir(exist_ok=True)
        for eid, by_vertex in library.dummies.items():
            (directory / "dummies" / f"{eid}.json").write_text(
                model_io.dumps_canonical(model_io._plain(by_vertex)))
    if library.variants:
        for eid, by_cat in library.variants.items():
            for cat, overlay in by_cat.items():
                target = directory / "variants" / eid
                target.mkdir(parents=True, exist_ok=True)
                (target / f"{cat}.json").write_text(
                    model_io.dumps_canonical(model_io._plain(overlay)))
    return directory


def load_library(directory: str | Path) -> Library:
    directory = Path(directory)
    try:
        index = json.loads((directory / "index.json").read_text())
    except OSError as exc:
        raise LibraryError(f"cannot read library index: {exc}") from exc
    if index.get("format") != LIBRARY_FORMAT:
        raise LibraryError(f"unexpected library format {index.get('format')!r}")
    entries = tuple(model_io.load_model(directory / "entries" / f"{eid}.json")
                    for eid in index["order"])
    dummies = {}
    dummy_dir = directory / "dummies"
    if dummy_dir.is_dir():
        for path in sorted(dummy_dir.glob("*.json")):
            dummies[path.stem] = json.loads(path.read_text())
    variants = {}
    variants_dir = directory / "variants"
    if variants_dir.is_dir():
        for entry_dir in sorted(variants_dir.iterdir()):
            if entry_dir.is_dir():
                variants[entry_dir.name] = {p.stem: json.loads(p.read_text())
                                            for p in sorted(entry_dir.glob("*.json"))}
    return Library(side=index["side"], iteration=index["iteration"], entries=entries,
                   novelty={eid: {tag: tuple(names) for tag, names in tags.items()}
                            for eid, tags in index.get("novelty", {}).items()},
                   dummies=dummies, variants=variants)


# ---------------------------------------------------------------------------
# Category variants and learning state
# ---------------------------------------------------------------------------


def variant_model(library: Library, entry_id: str, category: str) -> PlotModel:
    """The entry's model specialised to a category via its stored overlay."""
    base = library.entry(entry_id)
    if category == base.category.key:
        return base
    overlay = library.variants.get(entry_id, {}).get(category)
    if overlay is None:
        raise LibraryError(f"entry {entry_id!r} has no CPT variant for category {category!r}")
    doc = model_io.model_to_doc(base)
    for vertex, payload in overlay.items():
        if vertex == PHASE_VERTEX:
            for part in ("abort", "stay", "jump"):
                if part in payload:
                    doc["transition"][part] = json.loads(json.dumps(payload[part]))
        elif vertex in doc["cpts"]["tasks"]:
            doc["cpts"]["tasks"][vertex]["rows"] = json.loads(json.dumps(payload["rows"]))
        elif vertex in doc["cpts"]["intensities"]:
            doc["cpts"]["intensities"][vertex]["rows"] = json.loads(json.dumps(payload["rows"]))
        else:
            raise LibraryError(f"variant for {entry_id!r} overlays unknown vertex {vertex!r}")
    doc["category"]["key"] = category
    return model_io.model_from_doc(doc)


def posterior_path(directory: str | Path, entry_id: str) -> Path:
    return Path(directory) / "posteriors" / f"{entry_id}.json"


def load_posteriors(directory: str | Path, entry_id: str, model: PlotModel) -> DirichletCpt:
    path = posterior_path(directory, entry_id)
    if path.exists():
        return DirichletCpt.from_payload(json.loads(path.read_text()))
    return DirichletCpt.flat(model)


def save_posteriors(directory: str | Path, entry_id: str, state: DirichletCpt) -> None:
    path = posterior_path(directory, entry_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model_io.dumps_canonical(state.to_payload()))
