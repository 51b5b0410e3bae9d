/**
 * Session view-model: the single source of truth the UI renders from.
 *
 * All mutations go through the server first; the store only applies
 * acknowledged responses (no optimistic confirm) and refetches the session
 * after every mutation so the view always mirrors server state. Candidate
 * order is taken verbatim from the server ranking.
 */

import { ApiError, Candidate, ServiceClient, SessionState } from "./api.js";

export interface ConsoleState {
  sessionId: string | null;
  setId: string | null;
  remaining: number;
  confirmed: { objectId: string; timestamp: number }[];
  candidates: Candidate[];
  lastMethod: string | null;
  busy: boolean;
  error: string | null;
}

export type Listener = (state: ConsoleState) => void;

export class SessionStore {
  private state: ConsoleState = {
    sessionId: null,
    setId: null,
    remaining: 0,
    confirmed: [],
    candidates: [],
    lastMethod: null,
    busy: false,
    error: null,
  };
  private listeners: Listener[] = [];

  constructor(private readonly client: ServiceClient) {}

  get current(): ConsoleState {
    return { ...this.state, confirmed: [...this.state.confirmed], candidates: [...this.state.candidates] };
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    listener(this.current);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.current);
  }

  private applySession(session: SessionState): void {
    this.emit({
      sessionId: session.session_id,
      setId: session.set_id,
      remaining: session.remaining,
      confirmed: session.history.map((h) => ({
        objectId: h.confirmed_id,
        timestamp: h.timestamp,
      })),
    });
  }

  async createSession(setId: string): Promise<void> {
    this.emit({ busy: true, error: null });
    try {
      const created = await this.client.createSession(setId);
      const session = await this.client.getSession(created.session_id);
      this.applySession(session);
      this.emit({ candidates: [], lastMethod: null });
    } catch (err) {
      this.emit({ error: describe(err) });
    } finally {
      this.emit({ busy: false });
    }
  }

  async resumeSession(sessionId: string): Promise<void> {
    this.emit({ busy: true, error: null });
    try {
      this.applySession(await this.client.getSession(sessionId));
    } catch (err) {
      this.emit({ error: describe(err) });
    } finally {
      this.emit({ busy: false });
    }
  }

  /** Submit one or more photos; candidates arrive in server order. */
  async classify(images: Blob[], aggMethod?: string): Promise<void> {
    if (!this.state.sessionId) {
      this.emit({ error: "no active session" });
      return;
    }
    this.emit({ busy: true, error: null });
    try {
      const resp = await this.client.classify(this.state.sessionId, images, {
        aggMethod,
      });
      this.emit({ candidates: resp.candidates, lastMethod: resp.method });
    } catch (err) {
      this.emit({ error: describe(err) });
    } finally {
      this.emit({ busy: false });
    }
  }

  /**
   * Confirm a candidate. State changes only after the server acknowledges;
   * a 409 (already confirmed / not in pool) surfaces as an error banner and
   * leaves the view untouched.
   */
  async confirm(objectId: string): Promise<void> {
    if (!this.state.sessionId) {
      this.emit({ error: "no active session" });
      return;
    }
    this.emit({ busy: true, error: null });
    try {
      await this.client.confirm(this.state.sessionId, objectId);
      this.applySession(await this.client.getSession(this.state.sessionId));
      this.emit({ candidates: [] });
    } catch (err) {
      this.emit({ error: describe(err) });
    } finally {
      this.emit({ busy: false });
    }
  }

  async undoLast(): Promise<void> {
    if (!this.state.sessionId) {
      this.emit({ error: "no active session" });
      return;
    }
    this.emit({ busy: true, error: null });
    try {
      await this.client.undo(this.state.sessionId);
      this.applySession(await this.client.getSession(this.state.sessionId));
    } catch (err) {
      this.emit({ error: describe(err) });
    } finally {
      this.emit({ busy: false });
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  if (err instanceof Error) return err.message;
  return String(err);
}
