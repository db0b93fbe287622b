/**
 * The console's view model: pure data transforms from service payloads to
 * what the panels display. No inference happens here - every number shown
 * is a number the service returned, verbatim.
 */

import type { ApiClient, BeliefPayload, TimelinePayload, WhatIfResponse, WhatIfRow } from "./api.js";

export interface TimelineColumn {
  t: number;
  marginals: Record<string, number>;
}

export interface SessionView {
  sessionId: string;
  entryId: string;
  closed: boolean;
  phaseLabels: string[];
  timeline: TimelineColumn[];
  taskPanel: Record<string, Record<string, Record<string, number>>>;
  weights: Record<string, number>;
  whatIf: WhatIfRow[] | null;
  stateHash: string;
  lastEvidence: Record<string, number> | null;
}

function column(payload: BeliefPayload): TimelineColumn {
  return { t: payload.t, marginals: payload.phase_marginals };
}

function panels(payload: BeliefPayload) {
  const tasks: SessionView["taskPanel"] = {};
  for (const [category, belief] of Object.entries(payload.per_category)) {
    tasks[category] = belief.task_marginals;
  }
  return tasks;
}

export function viewFromPayload(payload: BeliefPayload): SessionView {
  return {
    sessionId: payload.session,
    entryId: payload.entry,
    closed: payload.closed,
    phaseLabels: Object.keys(payload.phase_marginals),
    timeline: [column(payload)],
    taskPanel: panels(payload),
    weights: payload.category_weights,
    whatIf: null,
    stateHash: payload.state_hash,
    lastEvidence: payload.evidence ?? null,
  };
}

/** Rebuild the whole view from service queries alone (the reload path). */
export function viewFromTimeline(timeline: TimelinePayload): SessionView {
  const last = timeline.columns[timeline.columns.length - 1];
  const view = viewFromPayload(last);
  view.timeline = timeline.columns.map(column);
  view.stateHash = timeline.state_hash;
  return view;
}

/** Fold one belief update (posted or streamed) into the view. */
export function applyBelief(view: SessionView, payload: BeliefPayload): SessionView {
  const timeline = view.timeline.filter((col) => col.t !== payload.t);
  timeline.push(column(payload));
  timeline.sort((a, b) => a.t - b.t);
  return {
    ...view,
    closed: payload.closed,
    timeline,
    taskPanel: panels(payload),
    weights: payload.category_weights,
    stateHash: payload.state_hash,
    lastEvidence: payload.evidence ?? view.lastEvidence,
  };
}

export function applyWhatIf(view: SessionView, response: WhatIfResponse): SessionView {
  return { ...view, whatIf: response.ranking, stateHash: response.state_hash };
}

/**
 * Displayed probabilities and scores are the service's doubles rendered at
 * full precision: parsing the displayed text gives back the exact value.
 */
export function formatValue(value: number): string {
  return String(value);
}

/** Submit one observation: exactly one API call, then fold the response. */
export async function submitObservation(api: ApiClient, view: SessionView, t: number,
                                        channels: Record<string, string | null>):
    Promise<SessionView> {
  const payload = await api.postObservation(view.sessionId, t, channels);
  return applyBelief(view, payload);
}

/** Run a what-if query: one API call, session state untouched by contract. */
export async function runWhatIf(api: ApiClient, view: SessionView, decisions: string[],
                                utility: string, horizon: number):
    Promise<{ view: SessionView; response: WhatIfResponse }> {
  const response = await api.whatIf(view.sessionId, decisions, utility, horizon);
  return { view: applyWhatIf(view, response), response };
}
