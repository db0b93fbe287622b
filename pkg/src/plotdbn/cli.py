"""Command-line access to every engine capability.

Each subcommand is a thin deterministic wrapper over the library modules.
``--json`` switches any subcommand to machine-readable output using the same
payload shapes as the service API; report directories get matplotlib
figures rendered next to the delimited output.
"""

from __future__ import annotations

import functools
import json
import pathlib
import subprocess
import sys

import click
import numpy as np

from . import library as libmod
from . import model_io, report
from .errors import PlotDbnError
from .inference import (filter_log, init_belief, prior_from_spec, smooth)
from .interventions import rank_decisions
from .learning import DirichletCpt, read_incident, update_from_incidents
from .records import read_log, write_log
from .simulate import (SimulationConfig, simulate_batch, simulate_incident,
                       write_archive)


def emit(payload, as_json: bool, human: str | None = None) -> None:
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    elif human is not None:
        click.echo(human)


def fail(message: str, as_json: bool, code: str = "error") -> None:
    if as_json:
        click.echo(json.dumps({"error": {"code": code, "message": message}},
                              sort_keys=True), err=True)
    else:
        click.echo(f"error: {message}", err=True)
    sys.exit(1)


def engine_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        as_json = kwargs.get("as_json", False)
        try:
            return fn(*args, **kwargs)
        except PlotDbnError as exc:
            fail(str(exc), as_json, code=type(exc).__name__)
    return wrapper


def _load_prior(model, prior, start_phase):
    if prior and start_phase:
        raise click.UsageError("give either --prior or --start-phase, not both")
    if start_phase:
        return prior_from_spec(model, {"kind": "point", "phase": start_phase})
    if prior:
        text = pathlib.Path(prior).read_text() if pathlib.Path(prior).is_file() else prior
        return prior_from_spec(model, json.loads(text))
    return None


def _phase_rows(model, prior, steps):
    belief = init_belief(model, prior)
    rows = [belief.phase_marginal()]
    rows.extend(step.belief.phase_marginal() for step in steps)
    return np.asarray(rows)


def _step_payload(model, step):
    belief = step.belief
    tasks = {}
    for axis, name in enumerate(model.task_graph.order):
        alphabet = model.task_graph.alphabet(name)
        tasks[name] = dict(zip(alphabet, map(float, belief.task_marginal_at(axis))))
    return {"t": belief.t,
            "evidence": float(step.evidence),
            "log_likelihood": float(belief.log_likelihood),
            "phase_marginals": dict(zip(model.phase_space.labels,
                                        map(float, belief.phase_marginal()))),
            "task_marginals": tasks}


@click.group()
def main():
    """Plot-model toolkit: validate, simulate, filter, score, learn, manage libraries."""


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
def validate(model_path, as_json):
    """Check a model file against every structural invariant."""
    try:
        model = model_io.load_model(model_path, validate=False)
    except PlotDbnError as exc:
        fail(f"load error: {exc}", as_json, code="load-error")
    from .core import validate_model
    result = validate_model(model)
    payload = {"model": model.id, "valid": result.ok,
               "violations": [{"code": v.code, "where": v.where, "message": v.message}
                              for v in result.violations]}
    emit(payload, as_json, human=(f"{model.id}: valid" if result.ok else str(result)))
    if not result.ok:
        sys.exit(1)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--seed", required=True, type=int, help="master seed; no hidden entropy")
@click.option("--steps", type=int, default=None)
@click.option("--batch", type=int, default=None, help="simulate n incidents into an archive")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--court-report", is_flag=True, help="emit revealed latents")
@click.option("--prior", default=None, help="prior spec JSON (inline or a file path)")
@click.option("--start-phase", default=None)
@click.option("--intervene", default=None, metavar="DECISION:T",
              help="force a decision's substitutions from step T")
@click.option("--json", "as_json", is_flag=True)
@engine_errors
def simulate(model_path, seed, steps, batch, out_path, court_report, prior,
             start_phase, intervene, as_json):
    """Sample synthetic incidents from the generative semantics."""
    model = model_io.load_model(model_path)
    intervention = None
    if intervene:
        decision_id, _, start = intervene.partition(":")
        intervention = (decision_id, int(start) if start else 1)
    config = SimulationConfig(seed=seed, steps=steps, court_report=court_report,
                              intervention=intervention,
                              prior=_load_prior(model, prior, start_phase))
    if batch:
        result = simulate_batch(model, batch, config)
        target = pathlib.Path(out_path or "incidents")
        write_archive(result, model, config, target)
        emit({"archive": str(target), "incidents": batch, "master_seed": seed,
              "seeds": list(result.seeds)}, as_json,
             human=f"wrote {batch} incidents to {target}")
        return
    sim = simulate_incident(model, config)
    if out_path:
        write_log(sim.records, out_path)
    payload = {"seed": seed,
               "phases": [model.phase_space.labels[p] for p in sim.phases],
               "records": [dict(r.channels) for r in sim.records]}
    emit(payload, as_json,
         human=(f"wrote {len(sim.records)} records to {out_path}" if out_path
                else " -> ".join(payload["phases"])))


def _filter_options(fn):
    fn = click.option("--model", "model_path", required=True, type=click.Path(exists=True))(fn)
    fn = click.option("--log", "log_path", required=True, type=click.Path(exists=True))(fn)
    fn = click.option("--prior", default=None)(fn)
    fn = click.option("--start-phase", default=None)(fn)
    fn = click.option("--report", "report_dir", type=click.Path(), default=None,
                      help="write figures and CSVs here")(fn)
    fn = click.option("--json", "as_json", is_flag=True)(fn)
    return fn


@main.command(name="filter")
@_filter_options
@engine_errors
def filter_command(model_path, log_path, prior, start_phase, report_dir, as_json):
    """Run the exact forward filter over an incident log."""
    model = model_io.load_model(model_path)
    records = read_log(log_path)
    prior_array = _load_prior(model, prior, start_phase)
    steps = filter_log(model, [r for r in records if r.t >= 1], prior_array)
    payload = {"model": model.id, "steps": [_step_payload(model, s) for s in steps]}
    if report_dir:
        rows = _phase_rows(model, prior_array, steps)
        report.write_phase_timeline(report_dir, model.phase_space.labels, rows,
                                    stem="filtered", title="Filtered phase posterior")
        task_rows = []
        belief = init_belief(model, prior_array)
        for state in [belief] + [s.belief for s in steps]:
            task_rows.append([state.task_marginal_at(a)[-1]
                              for a in range(len(model.task_graph.order))])
        report.write_task_heatmap(report_dir, model.task_graph.order,
                                  np.asarray(task_rows), stem="tasks")
        payload["report"] = str(report_dir)
    lines = []
    for step in payload["steps"]:
        tops = max(step["phase_marginals"].items(), key=lambda kv: kv[1])
        lines.append(f"t={step['t']}: evidence={step['evidence']:.6g} "
                     f"top={tops[0]} ({tops[1]:.4f})")
    emit(payload, as_json, human="\n".join(lines))


@main.command(name="smooth")
@_filter_options
@engine_errors
def smooth_command(model_path, log_path, prior, start_phase, report_dir, as_json):
    """Forward-backward phase posteriors over a complete log."""
    model = model_io.load_model(model_path)
    records = [r for r in read_log(log_path) if r.t >= 1]
    prior_array = _load_prior(model, prior, start_phase)
    result = smooth(model, records, prior_array)
    posteriors = result.phase_posteriors
    payload = {"model": model.id,
               "log_likelihood": float(result.log_likelihood),
               "phase_posteriors": [
                   {"t": t, **dict(zip(model.phase_space.labels, map(float, row)))}
                   for t, row in enumerate(posteriors)]}
    if report_dir:
        report.write_phase_timeline(report_dir, model.phase_space.labels, posteriors,
                                    stem="smoothed", title="Smoothed phase posterior")
        payload["report"] = str(report_dir)
    lines = [f"t={entry['t']}: " + " ".join(f"{lab}={entry[lab]:.4f}"
                                            for lab in model.phase_space.labels)
             for entry in payload["phase_posteriors"]]
    emit(payload, as_json, human="\n".join(lines))


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--log", "log_path", type=click.Path(exists=True), default=None,
              help="filter this log first; otherwise score from the prior")
@click.option("--prior", default=None)
@click.option("--start-phase", default=None)
@click.option("--utility", "utility_id", required=True)
@click.option("--decisions", "decision_ids", default=None,
              help="comma-separated decision ids (default: the whole catalogue)")
@click.option("--horizon", type=int, default=None)
@click.option("--report", "report_dir", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@engine_errors
def score(model_path, log_path, prior, start_phase, utility_id, decision_ids,
          horizon, report_dir, as_json):
    """Rank the decision catalogue by subjective expected utility."""
    model = model_io.load_model(model_path)
    prior_array = _load_prior(model, prior, start_phase)
    belief = init_belief(model, prior_array)
    if log_path:
        steps = filter_log(model, [r for r in read_log(log_path) if r.t >= 1], prior_array)
        if steps:
            belief = steps[-1].belief
    if utility_id not in model.utilities:
        fail(f"no utility {utility_id!r} in the model", as_json, code="unknown-utility")
    wanted = (decision_ids.split(",") if decision_ids else list(model.decisions))
    missing = [d for d in wanted if d not in model.decisions]
    if missing:
        fail(f"unknown decision(s) {missing}", as_json, code="unknown-decision")
    decisions = [model.decisions[d] for d in wanted]
    horizon = horizon if horizon is not None else model.horizon
    ranking = rank_decisions(model, belief, decisions, model.utilities[utility_id], horizon)
    payload = {"model": model.id, "utility": utility_id, "horizon": horizon, "t": belief.t,
               "ranking": [{"decision": d.id, "score": float(s)} for d, s in ranking]}
    if report_dir:
        report.write_decision_scores(report_dir, [(d.id, s) for d, s in ranking])
        payload["report"] = str(report_dir)
    emit(payload, as_json,
         human="\n".join(f"{k + 1}. {d.id}: {s:.6g}" for k, (d, s) in enumerate(ranking)))


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--incidents", "incident_paths", multiple=True, type=click.Path(exists=True),
              help="incident archives (directories) or JSONL files; repeatable")
@click.option("--concentration", type=float, default=1.0,
              help="symmetric prior concentration per cell")
@click.option("--priors", "priors_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@engine_errors
def learn(model_path, incident_paths, concentration, priors_path, out_path, as_json):
    """Update Dirichlet CPT posteriors from completed ancestral incidents."""
    model = model_io.load_model(model_path)
    if priors_path:
        priors = DirichletCpt.from_payload(json.loads(pathlib.Path(priors_path).read_text()))
    else:
        priors = DirichletCpt.flat(model, concentration)
    incidents = []
    for path in incident_paths:
        path = pathlib.Path(path)
        if path.is_dir():
            from .simulate import read_archive
            incidents.extend(read_archive(path))
        else:
            incidents.append(read_incident(path))
    posterior = update_from_incidents(priors, incidents, model)
    if out_path:
        pathlib.Path(out_path).write_text(model_io.dumps_canonical(posterior.to_payload()))
    payload = {"model": model.id, "incidents": len(incidents),
               **({"out": str(out_path)} if out_path else {}),
               "posterior": posterior.to_payload() if not out_path else None}
    emit(payload, as_json,
         human=f"updated posteriors from {len(incidents)} incident(s)"
               + (f" -> {out_path}" if out_path else ""))


# ---------------------------------------------------------------------------
# library subcommands
# ---------------------------------------------------------------------------


def _open_library(library_dir, *, side="B", create=False):
    path = pathlib.Path(library_dir)
    if (path / "index.json").exists():
        return libmod.load_library(path)
    if create:
        return libmod.Library(side=side)
    raise click.UsageError(f"no library at {path}")


@main.command(name="lib-add")
@click.option("--library", "library_dir", required=True, type=click.Path())
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--side", default="B", type=click.Choice(["A", "B"]))
@click.option("--declare-novel", default=None, help="comma-separated vertex names")
@click.option("--json", "as_json", is_flag=True)
@engine_errors
def lib_add(library_dir, model_path, side, declare_novel, as_json):
    """Append a model to a library and report its novelty sets."""
    lib = _open_library(library_dir, side=side, create=True)
    model = model_io.load_model(model_path)
    declaration = declare_novel.split(",") if declare_novel else None
    lib, result = libmod.add_entry(lib, model, declaration)
    libmod.save_library(lib, library_dir)
    payload = {"entry": result.entry_id,
               "novel": {tag: list(names) for tag, names in result.novel.items()},
               "reused": list(result.reused),
               "declared_mismatch": list(result.declared_mismatch)}
    novel_count = sum(len(v) for v in payload["novel"].values())
    emit(payload, as_json,
         human=f"added {result.entry_id}: {novel_count} novel table(s), "
               f"{len(result.reused)} reused")


@main.command(name="lib-diff")
@click.argument("library_a", type=click.Path(exists=True))
@click.argument("library_b", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@engine_errors
def lib_diff(library_a, library_b, as_json):
    """Structured symmetric difference between two libraries."""
    report_ = libmod.diff(libmod.load_library(library_a), libmod.load_library(library_b))
    emit(report_.to_dict(), as_json, human=report_.summary())
    if not report_.empty:
        sys.exit(3)


@main.command(name="lib-seed")
@click.option("--library", "library_dir", required=True, type=click.Path(exists=True))
@click.argument("skeleton_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--categories", default=None,
              help="comma-separated categories the entry must cover")
@click.option("--json", "as_json", is_flag=True)
@engine_errors
def lib_seed(library_dir, skeleton_path, out_path, categories, as_json):
    """Pre-fill a draft entry with the library's shared tables."""
    lib = _open_library(library_dir)
    skeleton = json.loads(pathlib.Path(skeleton_path).read_text())
    draft = libmod.seed_entry(lib, skeleton,
                              categories.split(",") if categories else ())
    pathlib.Path(out_path).write_text(model_io.dumps_canonical(draft.document))
    payload = {"out": str(out_path), "prefilled": list(draft.prefilled),
               "pending": {tag: list(names) for tag, names in draft.pending.items()},
               "pending_categories": list(draft.pending_categories)}
    pending_count = sum(len(v) for v in payload["pending"].values())
    emit(payload, as_json,
         human=f"draft -> {out_path}: {len(draft.prefilled)} pre-filled, "
               f"{pending_count} pending")


@main.command(name="lib-sanitize")
@click.option("--library", "library_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@engine_errors
def lib_sanitize(library_dir, out_path, as_json):
    """Export the library with secure tables replaced by registered dummies."""
    lib = _open_library(library_dir)
    export = libmod.sanitize_export(lib)
    pathlib.Path(out_path).write_text(model_io.dumps_canonical(export.document))
    payload = {"out": str(out_path), "replaced": [dict(item) for item in export.manifest]}
    emit(payload, as_json,
         human=f"sanitized export -> {out_path}: {len(export.manifest)} table(s) replaced")


@main.command(name="lib-harmonise")
@click.option("--library", "library_dir", required=True, type=click.Path(exists=True))
@click.option("--rename", "renames", required=True,
              help="comma-separated old=new vertex renames")
@click.option("--json", "as_json", is_flag=True)
@engine_errors
def lib_harmonise(library_dir, renames, as_json):
    """Apply a bijective vertex rename across every entry."""
    mapping = {}
    for pair in renames.split(","):
        old, _, new = pair.partition("=")
        if not old or not new:
            raise click.UsageError(f"bad rename {pair!r}; expected old=new")
        mapping[old] = new
    lib = libmod.harmonise(_open_library(library_dir), mapping)
    libmod.save_library(lib, library_dir)
    emit({"renamed": mapping}, as_json,
         human="renamed " + ", ".join(f"{o} -> {n}" for o, n in mapping.items()))


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8321)
@click.option("--token", default=None, help="static bearer token")
@click.option("--console", "console_dir", type=click.Path(), default=None,
              help="serve a built console UI from this directory")
def serve(data_dir, host, port, token, console_dir):
    """Run the session service."""
    import uvicorn

    from .service import create_app
    app = create_app(data_dir, token=token, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--tests", "tests_path", type=click.Path(), default=None,
              help="path to the acceptance test module (defaults to ./tests)")
def selftest(tests_path):
    """Run the acceptance suite through pytest (requires the repo checkout)."""
    target = pathlib.Path(tests_path) if tests_path else pathlib.Path("tests/test_acceptance.py")
    if not target.exists():
        raise click.UsageError(f"cannot find {target}; run from the repo root or pass --tests")
    raise SystemExit(subprocess.call([sys.executable, "-m", "pytest", str(target), "-v"]))


if __name__ == "__main__":
    main()
