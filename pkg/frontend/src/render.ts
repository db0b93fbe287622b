/**
 * DOM rendering for the console panels. Browser-only; the view model stays
 * renderable headlessly for tests.
 */

import type { SessionView } from "./view.js";
import { formatValue } from "./view.js";

const PALETTE = ["#9aa5b1", "#3b6ea5", "#2f9e44", "#e8923c", "#c0392b", "#7048a8",
  "#1098ad", "#846358"];

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(tag: K, className?: string,
                                                   text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function timelineSvg(view: SessionView, width = 640, height = 220): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "timeline");
  const columns = view.timeline;
  const n = columns.length;
  const step = n > 1 ? width / (n - 1) : width;
  // stacked areas, one per phase, service values used as-is
  let base = new Array<number>(n).fill(0);
  view.phaseLabels.forEach((label, k) => {
    const tops = columns.map((col, i) => base[i] + (col.marginals[label] ?? 0));
    const path = document.createElementNS(SVG_NS, "path");
    const ys = (value: number) => height - value * height;
    let d = `M 0 ${ys(base[0])}`;
    tops.forEach((top, i) => { d += ` L ${i * step} ${ys(top)}`; });
    for (let i = n - 1; i >= 0; i--) d += ` L ${i * step} ${ys(base[i])}`;
    d += " Z";
    path.setAttribute("d", d);
    path.setAttribute("fill", PALETTE[k % PALETTE.length]);
    path.setAttribute("fill-opacity", "0.85");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = label;
    path.appendChild(title);
    svg.appendChild(path);
    base = tops;
  });
  return svg;
}

function tableFrom(headers: string[], rows: (string | number)[][]): HTMLTableElement {
  const table = el("table");
  const head = table.createTHead().insertRow();
  headers.forEach((h) => head.appendChild(el("th", undefined, h)));
  const body = table.createTBody();
  rows.forEach((cells) => {
    const row = body.insertRow();
    cells.forEach((cell) => {
      row.insertCell().textContent = typeof cell === "number" ? formatValue(cell) : cell;
    });
  });
  return table;
}

export function render(view: SessionView, root: HTMLElement): void {
  root.replaceChildren();

  const header = el("header");
  header.appendChild(el("h1", undefined, `Incident ${view.sessionId}`));
  header.appendChild(el("span", "entry", `entry: ${view.entryId}`));
  if (view.closed) header.appendChild(el("span", "closed", "CLOSED"));
  root.appendChild(header);

  const timelinePanel = el("section", "panel");
  timelinePanel.appendChild(el("h2", undefined, "Phase posterior timeline"));
  timelinePanel.appendChild(timelineSvg(view));
  const legend = el("div", "legend");
  view.phaseLabels.forEach((label, k) => {
    const item = el("span", "legend-item", label);
    item.style.borderLeft = `10px solid ${PALETTE[k % PALETTE.length]}`;
    legend.appendChild(item);
  });
  timelinePanel.appendChild(legend);
  const latest = view.timeline[view.timeline.length - 1];
  timelinePanel.appendChild(tableFrom(
    ["phase", `p at t=${latest.t}`],
    view.phaseLabels.map((label) => [label, latest.marginals[label] ?? 0])));
  root.appendChild(timelinePanel);

  const taskPanel = el("section", "panel");
  taskPanel.appendChild(el("h2", undefined, "Task marginals"));
  for (const [category, tasks] of Object.entries(view.taskPanel)) {
    taskPanel.appendChild(el("h3", undefined, category));
    const rows = Object.entries(tasks).flatMap(([task, states]) =>
      Object.entries(states).map(([state, p]) => [task, state, p] as (string | number)[]));
    taskPanel.appendChild(tableFrom(["task", "state", "p"], rows));
  }
  root.appendChild(taskPanel);

  const weightPanel = el("section", "panel");
  weightPanel.appendChild(el("h2", undefined, "Category weights"));
  weightPanel.appendChild(tableFrom(
    ["category", "weight"],
    Object.entries(view.weights).map(([category, w]) => [category, w])));
  root.appendChild(weightPanel);

  const whatIfPanel = el("section", "panel");
  whatIfPanel.appendChild(el("h2", undefined, "What-if ranking"));
  whatIfPanel.appendChild(
    view.whatIf === null
      ? el("p", "hint", "run a what-if query to score the decision catalogue")
      : tableFrom(["rank", "decision", "expected utility"],
          view.whatIf.map((row, k) => [String(k + 1), row.decision, row.score])));
  root.appendChild(whatIfPanel);

  const footer = el("footer");
  footer.appendChild(el("code", "state-hash", `state ${view.stateHash}`));
  root.appendChild(footer);
}

export function renderError(message: string, root: HTMLElement): void {
  root.replaceChildren();
  const banner = el("div", "error-banner", message);
  const retry = el("button", undefined, "reconnect");
  retry.addEventListener("click", () => window.location.reload());
  banner.appendChild(retry);
  root.appendChild(banner);
}
