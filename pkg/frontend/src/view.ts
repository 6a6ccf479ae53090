/**
 * DOM rendering for each screen. All report content is assigned through
 * textContent so it is displayed as plain text: markup or markdown inside a
 * report can never become live elements.
 */

import type { Choice, PairView, SessionSummary } from "./api";

export function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function formatProgress(progress: { done: number; total: number }): string {
  return `${progress.done} / ${progress.total}`;
}

export interface LoginHandlers {
  onSubmit: (sessionId: string, evaluator: string) => void;
}

export function renderLogin(root: HTMLElement, handlers: LoginHandlers): void {
  const doc = root.ownerDocument;
  root.replaceChildren();

  const form = el(doc, "form", "login");
  form.appendChild(el(doc, "h2", undefined, "Sign in"));

  const sessionLabel = el(doc, "label", undefined, "Session id");
  const sessionInput = el(doc, "input");
  sessionInput.name = "session";
  sessionInput.required = true;
  sessionInput.autocomplete = "off";
  sessionLabel.appendChild(sessionInput);

  const evaluatorLabel = el(doc, "label", undefined, "Evaluator id");
  const evaluatorInput = el(doc, "input");
  evaluatorInput.name = "evaluator";
  evaluatorInput.required = true;
  evaluatorInput.autocomplete = "off";
  evaluatorLabel.appendChild(evaluatorInput);

  const submit = el(doc, "button", undefined, "Start reviewing");
  submit.type = "submit";

  form.append(sessionLabel, evaluatorLabel, submit);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const sessionId = sessionInput.value.trim();
    const evaluator = evaluatorInput.value.trim();
    if (sessionId && evaluator) handlers.onSubmit(sessionId, evaluator);
  });

  root.appendChild(form);
}

const CHOICES: ReadonlyArray<{ choice: Choice; label: string; key: string }> = [
  { choice: "A", label: "Prefer A", key: "a" },
  { choice: "B", label: "Prefer B", key: "b" },
  { choice: "Tie", label: "Tie", key: "t" },
];

export interface PairHandlers {
  onChoice: (choice: Choice) => void;
}

export function renderPair(root: HTMLElement, pair: PairView, handlers: PairHandlers): void {
  const doc = root.ownerDocument;
  root.replaceChildren();

  const section = el(doc, "section", "pair");

  const header = el(doc, "div", "pair-header");
  header.appendChild(el(doc, "h2", undefined, `Clip ${pair.video_id}`));
  const progress = el(doc, "span", "progress", formatProgress(pair.progress));
  progress.setAttribute("data-role", "progress");
  header.appendChild(progress);
  section.appendChild(header);

  const panels = el(doc, "div", "panels");
  for (const side of ["A", "B"] as const) {
    const panel = el(doc, "article", "panel");
    panel.setAttribute("data-side", side);
    panel.appendChild(el(doc, "h3", undefined, `Report ${side}`));
    const text = el(doc, "pre", "report-text");
    text.textContent = side === "A" ? pair.left_text : pair.right_text;
    panel.appendChild(text);
    panels.appendChild(panel);
  }
  section.appendChild(panels);

  const controls = el(doc, "div", "controls");
  for (const { choice, label } of CHOICES) {
    const button = el(doc, "button", "choice", label);
    button.type = "button";
    button.setAttribute("data-choice", choice);
    button.addEventListener("click", () => handlers.onChoice(choice));
    controls.appendChild(button);
  }
  section.appendChild(controls);

  section.appendChild(el(doc, "p", "hint", "Shortcuts: a = prefer A, b = prefer B, t = tie"));
  root.appendChild(section);
}

export function setChoicesEnabled(root: HTMLElement, enabled: boolean): void {
  for (const button of root.querySelectorAll<HTMLButtonElement>("button.choice")) {
    button.disabled = !enabled;
  }
}

export interface DoneHandlers {
  onSignOut: () => void;
}

export function renderDone(
  root: HTMLElement,
  summary: SessionSummary,
  handlers: DoneHandlers,
): void {
  const doc = root.ownerDocument;
  root.replaceChildren();

  const section = el(doc, "section", "done");
  section.appendChild(el(doc, "h2", undefined, "Session complete"));
  section.appendChild(
    el(doc, "p", "progress", `Pairs reviewed: ${formatProgress(summary.progress)}`),
  );

  const list = el(doc, "ul", "tally");
  list.appendChild(el(doc, "li", undefined, `Preferred A: ${summary.tally.A}`));
  list.appendChild(el(doc, "li", undefined, `Preferred B: ${summary.tally.B}`));
  list.appendChild(el(doc, "li", undefined, `Ties: ${summary.tally.Tie}`));
  section.appendChild(list);

  const signOut = el(doc, "button", undefined, "Switch evaluator");
  signOut.type = "button";
  signOut.addEventListener("click", () => handlers.onSignOut());
  section.appendChild(signOut);

  root.appendChild(section);
}

export interface BannerOptions {
  kind: "error" | "notice";
  message: string;
  onRetry?: () => void;
}

export function renderBanner(container: HTMLElement, options: BannerOptions | null): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  if (!options) return;

  const banner = el(doc, "div", `banner banner-${options.kind}`);
  banner.setAttribute("role", options.kind === "error" ? "alert" : "status");
  banner.appendChild(el(doc, "span", undefined, options.message));
  if (options.onRetry) {
    const retry = el(doc, "button", "retry", "Retry");
    retry.type = "button";
    retry.addEventListener("click", options.onRetry);
    banner.appendChild(retry);
  }
  container.appendChild(banner);
}
