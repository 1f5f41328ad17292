/** Typed client for the listening-study HTTP service.
 *
 * Every response body is validated with zod before it reaches application
 * code, so the client is also the wire-contract checker. */

import { z } from "zod";

export const QuestionnaireItemSchema = z.object({
  id: z.string(),
  text: z.string(),
  kind: z.enum(["likert", "composer"]),
});
export type QuestionnaireItem = z.infer<typeof QuestionnaireItemSchema>;

export const SessionProgressSchema = z.object({
  completed: z.number().int().nonnegative(),
  cap: z.number().int().positive().nullish(),
});

export const NextAssignmentSchema = z.object({
  done: z.boolean(),
  piece_id: z.string().nullish(),
  questionnaire: z.array(QuestionnaireItemSchema).default([]),
  progress: SessionProgressSchema.nullish(),
});
export type NextAssignment = z.infer<typeof NextAssignmentSchema>;

export const RegisterResponseSchema = z.object({ token: z.string().min(1) });

export const SubmitAcceptedSchema = z.object({ accepted: z.literal(true) });

export const TURING_CHOICES = ["Human", "AI", "Uncertain"] as const;
export type TuringChoice = (typeof TURING_CHOICES)[number];

/** Body of POST /responses; must match the server schema exactly. */
export const SubmitBodySchema = z.object({
  piece_id: z.string(),
  answers: z.record(z.string(), z.number().int().min(1).max(5)),
  turing_answer: z.enum(TURING_CHOICES),
});
export type SubmitBody = z.infer<typeof SubmitBodySchema>;

export const PieceProgressSchema = z.object({
  piece_id: z.string(),
  total: z.number().int().nonnegative(),
  normal: z.number().int().nonnegative(),
  amateur: z.number().int().nonnegative(),
  expert: z.number().int().nonnegative(),
  satisfied: z.boolean(),
});

export const AdminProgressSchema = z.object({
  pieces: z.array(PieceProgressSchema),
  participants: z.record(z.string(), z.number().int().nonnegative()),
  responses: z.number().int().nonnegative(),
  quotas_met: z.boolean(),
});
export type AdminProgress = z.infer<typeof AdminProgressSchema>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class StudyClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!res.ok) {
      throw new ApiError(res.status, await res.text());
    }
    return res;
  }

  async register(group: string): Promise<string> {
    const res = await this.request("/participants", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ group }),
    });
    return RegisterResponseSchema.parse(await res.json()).token;
  }

  async nextAssignment(token: string): Promise<NextAssignment> {
    const res = await this.request("/session/next", {
      headers: { Authorization: `Bearer ${token}` },
    });
    return NextAssignmentSchema.parse(await res.json());
  }

  async audio(token: string, pieceId: string): Promise<ArrayBuffer> {
    const res = await this.request(`/audio/${pieceId}`, {
      headers: { Authorization: `Bearer ${token}` },
    });
    return res.arrayBuffer();
  }

  async submit(token: string, body: SubmitBody): Promise<void> {
    SubmitBodySchema.parse(body);
    const res = await this.request("/responses", {
      method: "POST",
      headers: {
        Authorization: `Bearer ${token}`,
        "Content-Type": "application/json",
      },
      body: JSON.stringify(body),
    });
    SubmitAcceptedSchema.parse(await res.json());
  }

  async adminProgress(adminKey: string): Promise<AdminProgress> {
    const res = await this.request("/admin/progress", {
      headers: { "X-Admin-Key": adminKey },
    });
    return AdminProgressSchema.parse(await res.json());
  }

  async adminExport(adminKey: string): Promise<string> {
    const res = await this.request("/admin/export", {
      headers: { "X-Admin-Key": adminKey },
    });
    return res.text();
  }
}
