/** Typed client for the scoring service's evaluator-facing HTTP endpoints. */

export interface Progress {
  done: number;
  total: number;
}

export interface PairView {
  pair_id: string;
  video_id: string;
  left_text: string;
  right_text: string;
  progress: Progress;
}

export interface Tally {
  A: number;
  B: number;
  Tie: number;
}

export interface SessionSummary {
  progress: Progress;
  tally: Tally;
}

export type NextResult =
  | { kind: "pair"; pair: PairView }
  | { kind: "done"; summary: SessionSummary };

export type Choice = "A" | "B" | "Tie";

/** Non-2xx response from the scoring service. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `request failed with status ${response.status}`;
}

export class ScoringClient {
  private readonly fetchFn: typeof fetch;
  private readonly baseUrl: string;

  constructor(fetchFn: typeof fetch, baseUrl = "") {
    this.fetchFn = fetchFn;
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  /** Fetch the next unvoted pair for an evaluator, or the final tally. */
  async nextPair(sessionId: string, evaluator: string): Promise<NextResult> {
    const url =
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/next` +
      `?evaluator=${encodeURIComponent(evaluator)}`;
    const response = await this.fetchFn(url);
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    const body = (await response.json()) as Record<string, unknown>;
    if (body.done === true) {
      return {
        kind: "done",
        summary: {
          progress: body.progress as Progress,
          tally: body.tally as Tally,
        },
      };
    }
    return {
      kind: "pair",
      pair: {
        pair_id: body.pair_id as string,
        video_id: body.video_id as string,
        left_text: body.left_text as string,
        right_text: body.right_text as string,
        progress: body.progress as Progress,
      },
    };
  }

  /** Record a vote; resolves with updated progress on acceptance. */
  async castVote(
    sessionId: string,
    evaluator: string,
    pairId: string,
    choice: Choice,
  ): Promise<Progress> {
    const url = `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/votes`;
    const response = await this.fetchFn(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ evaluator, pair_id: pairId, choice }),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    const body = (await response.json()) as { progress: Progress };
    return body.progress;
  }
}
