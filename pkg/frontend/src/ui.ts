/** HTML rendering for the participant session.  Pure string templating so
 * the exact serialized page can be asserted on (and byte-scanned) in tests;
 * a thin DOM shell wires the strings to real controls in the browser. */

import { TURING_CHOICES } from "./api.js";
import { SessionView } from "./session.js";

const LIKERT_LABELS = [
  "1 — Strongly disagree",
  "2 — Disagree",
  "3 — Neutral",
  "4 — Agree",
  "5 — Strongly agree",
] as const;

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function likertRow(
  itemId: string,
  text: string,
  selected: number | undefined,
): string {
  const radios = LIKERT_LABELS.map((label, i) => {
    const value = i + 1;
    const checked = selected === value ? " checked" : "";
    return (
      `<label><input type="radio" class="likert" name="${escapeHtml(itemId)}"` +
      ` value="${value}"${checked}> ${escapeHtml(label)}</label>`
    );
  }).join("");
  return `<tr class="likert-item" data-item="${escapeHtml(itemId)}"><td>${escapeHtml(text)}</td><td>${radios}</td></tr>`;
}

function turingRow(
  itemId: string,
  text: string,
  selected: string | null,
): string {
  // the composer choices are fixed client-side; the server only names the
  // question
  const radios = TURING_CHOICES.map((choice) => {
    const checked = selected === choice ? " checked" : "";
    return (
      `<label><input type="radio" class="turing" name="${escapeHtml(itemId)}"` +
      ` value="${choice}"${checked}> ${choice}</label>`
    );
  }).join("");
  return `<tr class="turing-item" data-item="${escapeHtml(itemId)}"><td>${escapeHtml(text)}</td><td>${radios}</td></tr>`;
}

/** Serialize the full session page.  Items appear exactly in served order;
 * submit is disabled until the view is complete. */
export function renderSession(view: SessionView, canSubmit: boolean): string {
  if (view.done) {
    return `<main class="done"><p>All assigned pieces are rated. Thank you for participating.</p></main>`;
  }
  const cap = view.cap === null ? "" : ` of ${view.cap}`;
  const rows = view.questionnaire
    .map((item) =>
      item.kind === "likert"
        ? likertRow(item.id, item.text, view.draft.answers[item.id])
        : turingRow(item.id, item.text, view.draft.turing),
    )
    .join("\n");
  return [
    `<main class="session" data-piece="${escapeHtml(view.pieceId ?? "")}">`,
    `<p class="progress">Completed ${view.completed}${cap}</p>`,
    `<audio controls src="/audio/${escapeHtml(view.pieceId ?? "")}"></audio>`,
    `<table class="questionnaire">`,
    rows,
    `</table>`,
    `<button class="submit" type="submit"${canSubmit ? "" : " disabled"}>Submit</button>`,
    `</main>`,
  ].join("\n");
}

export function countLikertItems(html: string): number {
  return (html.match(/class="likert-item"/g) ?? []).length;
}

export function countTuringItems(html: string): number {
  return (html.match(/class="turing-item"/g) ?? []).length;
}

export function submitEnabled(html: string): boolean {
  const m = html.match(/<button class="submit"[^>]*>/);
  return m !== null && !m[0].includes("disabled");
}
