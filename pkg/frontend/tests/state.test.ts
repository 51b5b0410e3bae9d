/**
 * Store/state-machine tests against a scripted fake service: candidate
 * order preservation, pessimistic confirms, 409 handling, undo, and
 * multi-shot submission.
 */

import { beforeEach, describe, expect, it } from "vitest";
import { ApiError, Candidate, ServiceClient } from "../src/api.js";
import { SessionStore } from "../src/state.js";

interface FakeService {
  remaining: string[];
  history: { confirmed_id: string; query_ref: string | null; predicted: string | null; timestamp: number }[];
  ranking: Candidate[];
  classifyCalls: { nImages: number; aggMethod: string }[];
}

function makeFake(objectIds: string[], ranking: Candidate[]): { client: ServiceClient; fake: FakeService } {
  const fake: FakeService = {
    remaining: [...objectIds].sort(),
    history: [],
    ranking,
    classifyCalls: [],
  };

  const fetchImpl = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const json = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), { status, headers: { "Content-Type": "application/json" } });

    if (path === "/sessions" && init?.method === "POST") {
      return json(200, { session_id: "s1", remaining: fake.remaining.length });
    }
    if (path === "/sessions/s1" && (!init || !init.method || init.method === "GET")) {
      return json(200, {
        session_id: "s1",
        set_id: "fake",
        remaining: fake.remaining.length,
        remaining_ids: fake.remaining,
        history: fake.history,
      });
    }
    if (path === "/sessions/s1/classify") {
      const form = init?.body as FormData;
      const images = form.getAll("images");
      fake.classifyCalls.push({
        nImages: images.length,
        aggMethod: String(form.get("agg_method")),
      });
      const candidates = fake.ranking.filter((c) => fake.remaining.includes(c.object_id));
      return json(200, {
        session_id: "s1",
        method: images.length > 1 ? String(form.get("agg_method")) : "single",
        n_views: images.length,
        remaining: fake.remaining.length,
        candidates,
      });
    }
    if (path === "/sessions/s1/confirm") {
      const body = JSON.parse(String(init?.body));
      if (!fake.remaining.includes(body.object_id)) {
        return json(409, { detail: `${body.object_id} is not in the remaining pool` });
      }
      fake.remaining = fake.remaining.filter((o) => o !== body.object_id);
      fake.history.push({
        confirmed_id: body.object_id,
        query_ref: null,
        predicted: null,
        timestamp: 1700000000,
      });
      return json(200, { session_id: "s1", remaining: fake.remaining.length });
    }
    if (path === "/sessions/s1/undo") {
      const last = fake.history.pop();
      if (!last) return json(409, { detail: "nothing to undo" });
      fake.remaining = [...fake.remaining, last.confirmed_id].sort();
      return json(200, { session_id: "s1", restored: last.confirmed_id, remaining: fake.remaining.length });
    }
    return json(404, { detail: `unexpected ${path}` });
  }) as typeof fetch;

  return { client: new ServiceClient("http://fake", fetchImpl), fake };
}

const RANKING: Candidate[] = [
  { object_id: "cone", score: 0.93, thumbnail_url: "/thumbnails/fake/cone.png" },
  { object_id: "cube", score: 0.81, thumbnail_url: "/thumbnails/fake/cube.png" },
  { object_id: "torus", score: 0.44, thumbnail_url: "/thumbnails/fake/torus.png" },
];

describe("SessionStore", () => {
  let store: SessionStore;
  let fake: FakeService;

  beforeEach(async () => {
    const made = makeFake(["cone", "cube", "torus"], RANKING);
    fake = made.fake;
    store = new SessionStore(made.client);
    await store.createSession("fake");
  });

  it("creates a session with the full pool", () => {
    expect(store.current.sessionId).toBe("s1");
    expect(store.current.remaining).toBe(3);
    expect(store.current.confirmed).toEqual([]);
  });

  it("keeps candidates in server order, no client-side sorting", async () => {
    await store.classify([new Blob(["x"])]);
    expect(store.current.candidates.map((c) => c.object_id)).toEqual(["cone", "cube", "torus"]);
  });

  it("confirm decrements the pool only after the server acknowledges", async () => {
    await store.classify([new Blob(["x"])]);
    await store.confirm("cone");
    expect(store.current.remaining).toBe(2);
    expect(store.current.confirmed.map((c) => c.objectId)).toEqual(["cone"]);
    expect(store.current.error).toBeNull();
  });

  it("a 409 on confirm surfaces a banner and leaves state unchanged", async () => {
    await store.confirm("cone");
    const before = store.current;
    await store.confirm("cone"); // second confirm conflicts
    const after = store.current;
    expect(after.error).toMatch(/not in the remaining pool/);
    expect(after.remaining).toBe(before.remaining);
    expect(after.confirmed).toEqual(before.confirmed);
  });

  it("undo restores the last confirmation", async () => {
    await store.confirm("cone");
    await store.confirm("cube");
    await store.undoLast();
    expect(store.current.remaining).toBe(2);
    expect(store.current.confirmed.map((c) => c.objectId)).toEqual(["cone"]);
  });

  it("multi-shot submission sends all files and one aggregated request", async () => {
    await store.classify([new Blob(["a"]), new Blob(["b"]), new Blob(["c"])]);
    expect(fake.classifyCalls).toHaveLength(1);
    expect(fake.classifyCalls[0].nImages).toBe(3);
    expect(fake.classifyCalls[0].aggMethod).toBe("score_average");
    expect(store.current.lastMethod).toBe("score_average");
  });

  it("classified candidates shrink along with the pool", async () => {
    await store.confirm("cone");
    await store.classify([new Blob(["x"])]);
    expect(store.current.candidates.map((c) => c.object_id)).toEqual(["cube", "torus"]);
  });

  it("resume mirrors server state", async () => {
    await store.confirm("cone");
    await store.resumeSession("s1");
    expect(store.current.remaining).toBe(2);
    expect(store.current.confirmed.map((c) => c.objectId)).toEqual(["cone"]);
  });

  it("ApiError formats status and detail", () => {
    const err = new ApiError(409, "already confirmed");
    expect(err.message).toBe("HTTP 409: already confirmed");
  });
});
