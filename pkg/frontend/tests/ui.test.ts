import { describe, expect, it } from "vitest";

import {
  countLikertItems,
  countTuringItems,
  renderSession,
  submitEnabled,
} from "../src/ui.js";
import { SessionView } from "../src/session.js";

function view(overrides: Partial<SessionView> = {}): SessionView {
  return {
    done: false,
    pieceId: "p07",
    questionnaire: [
      { id: "q1", text: "The music sounds pleasant.", kind: "likert" },
      { id: "q2", text: "The music has a clear rhythm.", kind: "likert" },
      { id: "q14", text: "Who composed it", kind: "composer" },
    ],
    draft: { answers: {}, turing: null },
    completed: 1,
    cap: 5,
    ...overrides,
  };
}

describe("renderSession", () => {
  it("renders one row per item in served order, five radios each", () => {
    const html = renderSession(view(), false);
    expect(countLikertItems(html)).toBe(2);
    expect(countTuringItems(html)).toBe(1);
    const q1 = html.indexOf('data-item="q1"');
    const q2 = html.indexOf('data-item="q2"');
    const q14 = html.indexOf('data-item="q14"');
    expect(q1).toBeGreaterThan(-1);
    expect(q1).toBeLessThan(q2);
    expect(q2).toBeLessThan(q14);
    expect((html.match(/class="likert"/g) ?? []).length).toBe(2 * 5);
    expect(html).toContain("1 — Strongly disagree");
    expect(html).toContain("5 — Strongly agree");
  });

  it("hardcodes the composer choices client-side", () => {
    const html = renderSession(view(), false);
    expect(html).toContain('value="Human"');
    expect(html).toContain('value="AI"');
    expect(html).toContain('value="Uncertain"');
  });

  it("marks drafted answers as checked", () => {
    const html = renderSession(
      view({ draft: { answers: { q1: 4 }, turing: "AI" } }),
      false,
    );
    expect(html).toMatch(/name="q1" value="4" checked/);
    expect(html).toMatch(/name="q14" value="AI" checked/);
  });

  it("disables submit until told otherwise", () => {
    expect(submitEnabled(renderSession(view(), false))).toBe(false);
    expect(submitEnabled(renderSession(view(), true))).toBe(true);
  });

  it("shows progress and the audio element for the piece", () => {
    const html = renderSession(view(), false);
    expect(html).toContain("Completed 1 of 5");
    expect(html).toContain('src="/audio/p07"');
  });

  it("escapes item text", () => {
    const html = renderSession(
      view({
        questionnaire: [
          { id: "q1", text: '<script>"x"&</script>', kind: "likert" },
          { id: "q14", text: "Who composed it", kind: "composer" },
        ],
      }),
      false,
    );
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });

  it("renders the done view", () => {
    const html = renderSession(view({ done: true }), false);
    expect(html).toContain('class="done"');
    expect(countLikertItems(html)).toBe(0);
  });
});
