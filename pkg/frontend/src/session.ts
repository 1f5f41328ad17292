/** Participant session state machine: fetch assignment, collect answers,
 * submit, advance.  Answers in progress are persisted to storage so that a
 * page reload (or a crashed tab) resumes the same piece with the draft
 * restored; the server's sticky lease guarantees the same piece comes back. */

import { ApiError, NextAssignment, SubmitBody, TuringChoice } from "./api.js";

/** What the session needs from the API client (satisfied by StudyClient;
 * kept structural so tests can substitute fakes). */
export interface SessionApi {
  nextAssignment(token: string): Promise<NextAssignment>;
  audio(token: string, pieceId: string): Promise<ArrayBuffer>;
  submit(token: string, body: SubmitBody): Promise<void>;
}

/** The subset of window.localStorage the session needs; a Map-backed
 * implementation is used in tests. */
export interface KeyValueStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class MemoryStorage implements KeyValueStorage {
  private readonly map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
  removeItem(key: string): void {
    this.map.delete(key);
  }
}

export interface Draft {
  answers: Record<string, number>;
  turing: TuringChoice | null;
}

export interface SessionView {
  done: boolean;
  pieceId: string | null;
  questionnaire: NextAssignment["questionnaire"];
  draft: Draft;
  completed: number;
  cap: number | null;
}

const emptyDraft = (): Draft => ({ answers: {}, turing: null });

export class SessionController {
  private assignment: NextAssignment | null = null;
  private draft: Draft = emptyDraft();

  constructor(
    private readonly client: SessionApi,
    private readonly token: string,
    private readonly storage: KeyValueStorage = new MemoryStorage(),
  ) {}

  private draftKey(pieceId: string): string {
    return `draft:${this.token}:${pieceId}`;
  }

  /** Fetch the next assignment, restoring any persisted draft for it. */
  async loadNext(): Promise<SessionView> {
    this.assignment = await this.client.nextAssignment(this.token);
    this.draft = emptyDraft();
    if (this.assignment.piece_id) {
      const raw = this.storage.getItem(this.draftKey(this.assignment.piece_id));
      if (raw !== null) {
        this.draft = JSON.parse(raw) as Draft;
      }
    }
    return this.view();
  }

  view(): SessionView {
    const a = this.assignment;
    return {
      done: a?.done ?? false,
      pieceId: a?.piece_id ?? null,
      questionnaire: a?.questionnaire ?? [],
      draft: { answers: { ...this.draft.answers }, turing: this.draft.turing },
      completed: a?.progress?.completed ?? 0,
      cap: a?.progress?.cap ?? null,
    };
  }

  async fetchAudio(): Promise<ArrayBuffer> {
    const pieceId = this.requirePiece();
    return this.client.audio(this.token, pieceId);
  }

  setAnswer(itemId: string, value: number): void {
    if (!Number.isInteger(value) || value < 1 || value > 5) {
      throw new RangeError(`Likert value out of range: ${value}`);
    }
    this.requirePiece();
    this.draft.answers[itemId] = value;
    this.persistDraft();
  }

  setTuring(choice: TuringChoice): void {
    this.requirePiece();
    this.draft.turing = choice;
    this.persistDraft();
  }

  /** True once every Likert item has an answer and the composer question is
   * answered; the submit control stays disabled until then. */
  canSubmit(): boolean {
    const a = this.assignment;
    if (!a || a.done || !a.piece_id) return false;
    const likert = a.questionnaire.filter((q) => q.kind === "likert");
    return (
      likert.every((q) => this.draft.answers[q.id] !== undefined) &&
      this.draft.turing !== null
    );
  }

  /** Submit the completed questionnaire and advance to the next piece.
   *
   * A conflict (409: the piece was already rated) skips forward.  Any other
   * failure — network errors included — leaves the draft persisted so the
   * caller can retry with answers intact. */
  async submitAndAdvance(): Promise<SessionView> {
    const pieceId = this.requirePiece();
    if (!this.canSubmit()) {
      throw new Error("submit is disabled until every item is answered");
    }
    const body: SubmitBody = {
      piece_id: pieceId,
      answers: this.draft.answers,
      turing_answer: this.draft.turing as TuringChoice,
    };
    try {
      await this.client.submit(this.token, body);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.storage.removeItem(this.draftKey(pieceId));
        return this.loadNext();
      }
      throw err; // draft stays in storage for retry
    }
    this.storage.removeItem(this.draftKey(pieceId));
    return this.loadNext();
  }

  private requirePiece(): string {
    if (!this.assignment?.piece_id) {
      throw new Error("no active assignment");
    }
    return this.assignment.piece_id;
  }

  private persistDraft(): void {
    const pieceId = this.requirePiece();
    this.storage.setItem(this.draftKey(pieceId), JSON.stringify(this.draft));
  }
}
