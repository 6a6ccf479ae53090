/**
 * Controller for the pair-voting app.
 *
 * Screens: login -> pair review -> completion. The evaluator's identity is
 * kept in session storage so a reload resumes where they left off. Every
 * advance waits for the server's acknowledgment: while a vote is in flight
 * the choice buttons are disabled and further input is ignored, so one
 * displayed pair produces at most one vote request no matter how fast the
 * user clicks or types.
 */

import { ApiError, ScoringClient } from "./api";
import type { Choice, PairView } from "./api";
import {
  renderBanner,
  renderDone,
  renderLogin,
  renderPair,
  setChoicesEnabled,
} from "./view";

const STORAGE_SESSION = "ab-ui.session";
const STORAGE_EVALUATOR = "ab-ui.evaluator";

export interface AppOptions {
  root: HTMLElement;
  fetchFn: typeof fetch;
  storage: Storage;
  baseUrl?: string;
}

export interface App {
  start(): Promise<void>;
  /** Detach document-level listeners. */
  stop(): void;
  /** Resolves once in-flight work has settled; used by tests. */
  idle(): Promise<void>;
}

type Screen = "login" | "pair" | "done";

export function createApp(options: AppOptions): App {
  const { root, storage } = options;
  const doc = root.ownerDocument;
  const client = new ScoringClient(options.fetchFn, options.baseUrl ?? "");

  root.replaceChildren();
  const bannerHost = doc.createElement("div");
  bannerHost.className = "banner-host";
  const main = doc.createElement("div");
  main.className = "screen";
  root.append(bannerHost, main);

  let screen: Screen = "login";
  let current: PairView | null = null;
  let pending = false;
  let work: Promise<void> = Promise.resolve();

  function track(task: Promise<void>): Promise<void> {
    work = work.then(() => task.catch(() => undefined));
    return task;
  }

  function identity(): { sessionId: string; evaluator: string } | null {
    const sessionId = storage.getItem(STORAGE_SESSION);
    const evaluator = storage.getItem(STORAGE_EVALUATOR);
    return sessionId && evaluator ? { sessionId, evaluator } : null;
  }

  function forgetIdentity(): void {
    storage.removeItem(STORAGE_SESSION);
    storage.removeItem(STORAGE_EVALUATOR);
  }

  function showLogin(notice?: string): void {
    screen = "login";
    current = null;
    renderBanner(bannerHost, notice ? { kind: "notice", message: notice } : null);
    renderLogin(main, {
      onSubmit: (sessionId, evaluator) => {
        storage.setItem(STORAGE_SESSION, sessionId);
        storage.setItem(STORAGE_EVALUATOR, evaluator);
        void track(loadNext());
      },
    });
  }

  async function loadNext(notice?: string): Promise<void> {
    const who = identity();
    if (!who) {
      showLogin();
      return;
    }
    try {
      const result = await client.nextPair(who.sessionId, who.evaluator);
      pending = false;
      if (result.kind === "done") {
        screen = "done";
        current = null;
        renderBanner(bannerHost, null);
        renderDone(main, result.summary, {
          onSignOut: () => {
            forgetIdentity();
            showLogin();
          },
        });
      } else {
        screen = "pair";
        current = result.pair;
        renderBanner(bannerHost, notice ? { kind: "notice", message: notice } : null);
        renderPair(main, result.pair, { onChoice: (choice) => void track(choose(choice)) });
      }
    } catch (error) {
      if (error instanceof ApiError && (error.status === 401 || error.status === 404)) {
        forgetIdentity();
        showLogin(error.message);
        return;
      }
      // Network trouble: keep whatever is on screen and offer a retry.
      renderBanner(bannerHost, {
        kind: "error",
        message: "Could not reach the scoring service.",
        onRetry: () => void track(loadNext(notice)),
      });
    }
  }

  async function choose(choice: Choice): Promise<void> {
    if (screen !== "pair" || pending || !current) return;
    const who = identity();
    if (!who) {
      showLogin();
      return;
    }
    pending = true;
    setChoicesEnabled(main, false);
    const pairId = current.pair_id;
    try {
      await client.castVote(who.sessionId, who.evaluator, pairId, choice);
      await loadNext();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // Someone (another tab, an earlier visit) already voted on this pair.
        await loadNext("Vote already recorded for that pair - skipping ahead.");
        return;
      }
      pending = false;
      if (error instanceof ApiError && (error.status === 401 || error.status === 404)) {
        forgetIdentity();
        showLogin(error.message);
        return;
      }
      setChoicesEnabled(main, true);
      renderBanner(bannerHost, {
        kind: "error",
        message: "Vote not sent - check your connection and try again.",
      });
    }
  }

  function onKeyDown(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (
      target &&
      (target.tagName === "INPUT" || target.tagName === "TEXTAREA" || target.isContentEditable)
    ) {
      return;
    }
    if (screen !== "pair" || pending) return;
    const key = event.key.toLowerCase();
    const choice: Choice | null = key === "a" ? "A" : key === "b" ? "B" : key === "t" ? "Tie" : null;
    if (choice) {
      event.preventDefault();
      void track(choose(choice));
    }
  }

  return {
    async start(): Promise<void> {
      doc.addEventListener("keydown", onKeyDown);
      const who = identity();
      if (who) {
        await track(loadNext());
      } else {
        showLogin();
      }
    },
    stop(): void {
      doc.removeEventListener("keydown", onKeyDown);
    },
    idle(): Promise<void> {
      return work;
    },
  };
}
