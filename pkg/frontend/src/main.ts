/**
 * Page wiring: attach to a session, keep panels in sync with the stream,
 * and drive the observation form and the what-if explorer.
 *
 * Open as /console/?session=<id>[&token=...]; the service URL defaults to
 * the page origin.
 */

import { ApiClient, ApiError, type BeliefPayload } from "./api.js";
import { render, renderError } from "./render.js";
import { applyBelief, applyWhatIf, viewFromTimeline, type SessionView } from "./view.js";

interface ChannelSpec {
  name: string;
  alphabet: string[];
}

function channelSpecs(entryDoc: Record<string, unknown>): ChannelSpec[] {
  const intensities = entryDoc.intensities as { channels: { name: string; alphabet?: string[] }[] };
  return intensities.channels.map((ch) => ({ name: ch.name, alphabet: ch.alphabet ?? ["0", "1"] }));
}

function decisionIds(entryDoc: Record<string, unknown>): string[] {
  const decisions = (entryDoc.decisions ?? []) as { id: string }[];
  return decisions.map((d) => d.id);
}

function utilityIds(entryDoc: Record<string, unknown>): string[] {
  const utilities = (entryDoc.utilities ?? []) as { id: string }[];
  return utilities.map((u) => u.id);
}

function observationForm(channels: ChannelSpec[], view: () => SessionView,
                         onSubmit: (t: number, values: Record<string, string | null>) => void):
    HTMLFormElement {
  const form = document.createElement("form");
  form.className = "observation-form";
  const title = document.createElement("h2");
  title.textContent = "Post observation";
  form.appendChild(title);
  const selects = new Map<string, HTMLSelectElement>();
  for (const ch of channels) {
    const label = document.createElement("label");
    label.textContent = ch.name;
    const select = document.createElement("select");
    const missing = document.createElement("option");
    missing.value = "";
    missing.textContent = "(missing)";
    select.appendChild(missing);
    for (const value of ch.alphabet) {
      const option = document.createElement("option");
      option.value = value;
      option.textContent = value;
      select.appendChild(option);
    }
    label.appendChild(select);
    form.appendChild(label);
    selects.set(ch.name, select);
  }
  const submit = document.createElement("button");
  submit.type = "submit";
  form.appendChild(submit);
  const refresh = () => { submit.textContent = `post t=${view().timeline.at(-1)!.t + 1}`; };
  refresh();
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const values: Record<string, string | null> = {};
    for (const [name, select] of selects) {
      values[name] = select.value === "" ? null : select.value;
    }
    onSubmit(view().timeline.at(-1)!.t + 1, values);
    refresh();
  });
  return form;
}

function whatIfForm(decisions: string[], utilities: string[],
                    onRun: (decisions: string[], utility: string, horizon: number) => void):
    HTMLFormElement {
  const form = document.createElement("form");
  form.className = "what-if-form";
  const title = document.createElement("h2");
  title.textContent = "What-if";
  form.appendChild(title);
  const boxes = decisions.map((id) => {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.value = id;
    box.checked = true;
    label.appendChild(box);
    label.appendChild(document.createTextNode(id));
    form.appendChild(label);
    return box;
  });
  const utilitySelect = document.createElement("select");
  for (const id of utilities) {
    const option = document.createElement("option");
    option.value = id;
    option.textContent = id;
    utilitySelect.appendChild(option);
  }
  form.appendChild(utilitySelect);
  const horizon = document.createElement("input");
  horizon.type = "number";
  horizon.value = "8";
  horizon.min = "1";
  form.appendChild(horizon);
  const run = document.createElement("button");
  run.type = "submit";
  run.textContent = "score";
  form.appendChild(run);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const chosen = boxes.filter((b) => b.checked).map((b) => b.value);
    onRun(chosen, utilitySelect.value, Number(horizon.value));
  });
  return form;
}

async function boot(): Promise<void> {
  const root = document.getElementById("app")!;
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session");
  if (!sessionId) {
    renderError("no session id - open /console/?session=<id>", root);
    return;
  }
  const api = new ApiClient(window.location.origin, params.get("token") ?? undefined);
  let view: SessionView;
  let entryDoc: Record<string, unknown>;
  try {
    view = viewFromTimeline(await api.getTimeline(sessionId));
    entryDoc = await api.getEntry(view.entryId);
  } catch (error) {
    renderError(error instanceof ApiError ? `${error.code}: ${error.message}`
      : String(error), root);
    return;
  }

  const panels = document.createElement("div");
  const controls = document.createElement("div");
  controls.className = "controls";
  root.replaceChildren(panels, controls);
  const redraw = () => render(view, panels);
  redraw();

  if (!view.closed) {
    controls.appendChild(observationForm(channelSpecs(entryDoc), () => view,
      (t, channels) => {
        api.postObservation(sessionId, t, channels).catch((error: unknown) => {
          renderError(String(error), panels);
        });
        // the belief update arrives over the stream; no optimistic paint
      }));
    controls.appendChild(whatIfForm(decisionIds(entryDoc), utilityIds(entryDoc),
      (decisions, utility, horizon) => {
        api.whatIf(sessionId, decisions, utility, horizon).then((response) => {
          view = applyWhatIf(view, response);
          redraw();
        }).catch((error: unknown) => renderError(String(error), panels));
      }));
  } else {
    const note = document.createElement("p");
    note.className = "hint";
    note.textContent = "archived session - read-only replay";
    controls.appendChild(note);
  }

  const handle = api.attach(sessionId, (payload: BeliefPayload) => {
    view = applyBelief(view, payload);
    redraw();
  });
  handle.done.catch(() => renderError("stream lost - reload to reconnect", panels));
}

boot();
