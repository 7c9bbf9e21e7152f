import { describe, expect, it } from "vitest";
import { ApiClient, HttpError } from "../src/api.js";
import type { SessionView } from "../src/types.js";

function fakeSession(status: "open" | "complete"): SessionView {
  return {
    id: "abc123",
    rater: "r1",
    status,
    case_order: ["case00"],
    aliases: "ABCD",
    n_methods: 4,
    landmarks: [],
    progress: { items_total: 4, items_complete: 0, scores_total: 48, scores_recorded: 0 },
  };
}

function fetchRecorder(status = 200, body: unknown = { ok: true }) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return new Response(JSON.stringify(body), { status });
  };
  return { calls, fetchFn };
}

describe("ApiClient", () => {
  it("never issues the reveal endpoint for an open session", async () => {
    const { calls, fetchFn } = fetchRecorder();
    const api = new ApiClient("", fetchFn);
    await expect(api.reveal(fakeSession("open"))).rejects.toThrow(/open session/);
    expect(calls).toHaveLength(0);
  });

  it("reveals a completed session", async () => {
    const { calls, fetchFn } = fetchRecorder(200, { aliases: {} });
    const api = new ApiClient("", fetchFn);
    await api.reveal(fakeSession("complete"));
    expect(calls[0].url).toBe("/sessions/abc123/reveal");
  });

  it("raises HttpError with status on 409", async () => {
    const { fetchFn } = fetchRecorder(409, { detail: "closed" });
    const api = new ApiClient("", fetchFn);
    await expect(
      api.submitScores([
        { session: "s", case: "c", alias: "A", landmark: "C", value: "1" },
      ]),
    ).rejects.toMatchObject({ status: 409 });
  });

  it("builds slice urls with the overlay toggle", () => {
    const api = new ApiClient("http://svc", async () => new Response("{}"));
    expect(api.sliceUrl("s", "c", "A", 5, true)).toBe(
      "http://svc/sessions/s/cases/c/aliases/A/slices/5.png",
    );
    expect(api.sliceUrl("s", "c", "A", 5, false)).toBe(
      "http://svc/sessions/s/cases/c/aliases/A/slices/5.png?overlay=0",
    );
  });

  it("sends scores as a batch PUT", async () => {
    const { calls, fetchFn } = fetchRecorder();
    const api = new ApiClient("", fetchFn);
    await api.submitScores([
      { session: "s", case: "c", alias: "A", landmark: "C", value: "0.5" },
    ]);
    expect(calls[0].url).toBe("/scores");
    expect(calls[0].init?.method).toBe("PUT");
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body.scores[0].value).toBe("0.5");
  });
});
