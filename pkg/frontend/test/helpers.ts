/**
 * In-memory stand-in for the scoring service, speaking the same JSON shapes
 * and status codes as the real HTTP endpoints the app consumes.
 */

import { createApp } from "../src/app";
import type { App } from "../src/app";
import type { Choice } from "../src/api";

export interface PlannedPair {
  pair_id: string;
  video_id: string;
  left_text: string;
  right_text: string;
}

interface VoteRecord {
  evaluator: string;
  pair_id: string;
  choice: Choice;
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class FakeBackend {
  readonly sessionId: string;
  readonly evaluators: Set<string>;
  readonly pairs: PlannedPair[];
  readonly votes: VoteRecord[] = [];
  readonly requests: Array<{ method: string; path: string }> = [];
  /** Fail this many upcoming fetches with a network error. */
  failNext = 0;
  /** Simulate a vote landing from another tab just before ours. */
  conflictNextVote = false;

  constructor(sessionId: string, evaluators: string[], pairs: PlannedPair[]) {
    this.sessionId = sessionId;
    this.evaluators = new Set(evaluators);
    this.pairs = pairs;
  }

  readonly fetchFn: typeof fetch = async (input, init) => this.handle(String(input), init);

  postCount(): number {
    return this.requests.filter((r) => r.method === "POST").length;
  }

  private votedPairs(evaluator: string): Set<string> {
    return new Set(this.votes.filter((v) => v.evaluator === evaluator).map((v) => v.pair_id));
  }

  private progress(evaluator: string): { done: number; total: number } {
    return { done: this.votedPairs(evaluator).size, total: this.pairs.length };
  }

  private handle(url: string, init?: RequestInit): Response {
    if (this.failNext > 0) {
      this.failNext -= 1;
      throw new TypeError("fetch failed");
    }
    const method = init?.method ?? "GET";
    const parsed = new URL(url, "http://service.test");
    this.requests.push({ method, path: parsed.pathname + parsed.search });

    const nextMatch = parsed.pathname.match(/^\/sessions\/([^/]+)\/next$/);
    if (nextMatch && method === "GET") {
      return this.next(decodeURIComponent(nextMatch[1]), parsed.searchParams.get("evaluator"));
    }
    const voteMatch = parsed.pathname.match(/^\/sessions\/([^/]+)\/votes$/);
    if (voteMatch && method === "POST") {
      return this.vote(decodeURIComponent(voteMatch[1]), JSON.parse(String(init?.body)));
    }
    return json(404, { detail: "no such route" });
  }

  private next(sessionId: string, evaluator: string | null): Response {
    if (sessionId !== this.sessionId) return json(404, { detail: "unknown session" });
    if (!evaluator || !this.evaluators.has(evaluator)) {
      return json(401, { detail: "unknown evaluator" });
    }
    const voted = this.votedPairs(evaluator);
    const pair = this.pairs.find((p) => !voted.has(p.pair_id));
    if (!pair) {
      const tally = { A: 0, B: 0, Tie: 0 };
      for (const vote of this.votes) {
        if (vote.evaluator === evaluator) tally[vote.choice] += 1;
      }
      return json(200, { done: true, progress: this.progress(evaluator), tally });
    }
    return json(200, {
      done: false,
      pair_id: pair.pair_id,
      video_id: pair.video_id,
      left_text: pair.left_text,
      right_text: pair.right_text,
      progress: this.progress(evaluator),
    });
  }

  private vote(
    sessionId: string,
    body: { evaluator?: string; pair_id?: string; choice?: string },
  ): Response {
    if (sessionId !== this.sessionId) return json(404, { detail: "unknown session" });
    const { evaluator, pair_id: pairId, choice } = body;
    if (!evaluator || !this.evaluators.has(evaluator)) {
      return json(401, { detail: "unknown evaluator" });
    }
    if (!pairId || !this.pairs.some((p) => p.pair_id === pairId)) {
      return json(404, { detail: "unknown pair" });
    }
    if (choice !== "A" && choice !== "B" && choice !== "Tie") {
      return json(400, { detail: "choice must be A, B, or Tie" });
    }
    if (this.conflictNextVote) {
      this.conflictNextVote = false;
      this.votes.push({ evaluator, pair_id: pairId, choice: "A" });
      return json(409, { detail: "vote already recorded" });
    }
    if (this.votedPairs(evaluator).has(pairId)) {
      return json(409, { detail: "vote already recorded" });
    }
    this.votes.push({ evaluator, pair_id: pairId, choice });
    return json(201, { accepted: true, progress: this.progress(evaluator) });
  }
}

export class MemoryStorage implements Storage {
  private map = new Map<string, string>();

  get length(): number {
    return this.map.size;
  }

  clear(): void {
    this.map.clear();
  }

  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }

  key(index: number): string | null {
    return [...this.map.keys()][index] ?? null;
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }

  setItem(key: string, value: string): void {
    this.map.set(key, String(value));
  }
}

export interface Harness {
  app: App;
  root: HTMLElement;
  storage: MemoryStorage;
  backend: FakeBackend;
}

export function makeHarness(
  backend: FakeBackend,
  identity?: { sessionId: string; evaluator: string },
): Harness {
  const root = document.createElement("div");
  document.body.replaceChildren(root);
  const storage = new MemoryStorage();
  if (identity) {
    storage.setItem("ab-ui.session", identity.sessionId);
    storage.setItem("ab-ui.evaluator", identity.evaluator);
  }
  const app = createApp({ root, fetchFn: backend.fetchFn, storage });
  return { app, root, storage, backend };
}

export function pressKey(key: string, target: EventTarget = document): void {
  target.dispatchEvent(new KeyboardEvent("keydown", { key, bubbles: true }));
}

export function clickChoice(root: HTMLElement, choice: Choice): void {
  const button = root.querySelector<HTMLButtonElement>(`button[data-choice="${choice}"]`);
  if (!button) throw new Error(`no button for choice ${choice}`);
  button.click();
}
