/** Read-only admin dashboard: per-piece quota fulfillment, per-participant
 * completion, and overall study progress, refreshed on a timer. */

import { AdminProgress, ApiError } from "./api.js";
import { escapeHtml } from "./ui.js";

/** What the dashboard needs from the API client (satisfied by StudyClient). */
export interface AdminApi {
  adminProgress(adminKey: string): Promise<AdminProgress>;
}

export function renderAccessDenied(): string {
  return `<main class="denied"><p>Access denied: invalid admin key.</p></main>`;
}

export function renderDashboard(progress: AdminProgress): string {
  const pieces = progress.pieces;
  const satisfied = pieces.filter((p) => p.satisfied).length;
  const pct =
    pieces.length === 0 ? 0 : Math.floor((100 * satisfied) / pieces.length);
  const pieceRows = pieces
    .map(
      (p) =>
        `<tr><td>${escapeHtml(p.piece_id)}</td><td>${p.total}</td>` +
        `<td>${p.normal}</td><td>${p.amateur}</td><td>${p.expert}</td>` +
        `<td>${p.satisfied ? "yes" : "no"}</td></tr>`,
    )
    .join("\n");
  const participantRows = Object.entries(progress.participants)
    .map(
      ([pid, n]) => `<tr><td>${escapeHtml(pid)}</td><td>${n}</td></tr>`,
    )
    .join("\n");
  return [
    `<main class="dashboard">`,
    `<p class="summary">Responses: ${progress.responses} · ` +
      `Pieces satisfied: ${satisfied}/${pieces.length} (${pct}%) · ` +
      `Quotas met: ${progress.quotas_met ? "yes" : "no"}</p>`,
    `<table class="pieces"><tr><th>Piece</th><th>Total</th><th>Normal</th>` +
      `<th>Amateur</th><th>Expert</th><th>Satisfied</th></tr>`,
    pieceRows,
    `</table>`,
    `<table class="participants"><tr><th>Participant</th><th>Completed</th></tr>`,
    participantRows,
    `</table>`,
    `</main>`,
  ].join("\n");
}

export class AdminDashboard {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly client: AdminApi,
    private readonly adminKey: string,
  ) {}

  /** One fetch-and-render cycle; a rejected key renders the denied view
   * instead of throwing. */
  async renderOnce(): Promise<string> {
    try {
      return renderDashboard(await this.client.adminProgress(this.adminKey));
    } catch (err) {
      if (err instanceof ApiError && err.status === 401) {
        return renderAccessDenied();
      }
      throw err;
    }
  }

  start(intervalMs: number, onRender: (html: string) => void): void {
    this.stop();
    const tick = () => void this.renderOnce().then(onRender);
    tick();
    this.timer = setInterval(tick, intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
