import { describe, expect, it } from "vitest";
import { SubmitQueue } from "../src/queue.js";
import type { ScorePayload } from "../src/types.js";

class MemoryStore {
  private data = new Map<string, string>();
  getItem(k: string) {
    return this.data.get(k) ?? null;
  }
  setItem(k: string, v: string) {
    this.data.set(k, v);
  }
  removeItem(k: string) {
    this.data.delete(k);
  }
}

function batch(n: number): ScorePayload[] {
  return [
    { session: "s", case: `case${n}`, alias: "A", landmark: "C", value: "1" },
  ];
}

describe("SubmitQueue", () => {
  it("delivers immediately when online", async () => {
    const sent: ScorePayload[][] = [];
    const q = new SubmitQueue(new MemoryStore(), async (s) => {
      sent.push(s);
    });
    expect(await q.push(batch(1))).toBe(true);
    expect(sent).toHaveLength(1);
    expect(q.pending()).toHaveLength(0);
  });

  it("queues on failure and flushes in order on reconnect", async () => {
    const store = new MemoryStore();
    let online = false;
    const sent: ScorePayload[][] = [];
    const q = new SubmitQueue(store, async (s) => {
      if (!online) throw new Error("offline");
      sent.push(s);
    });
    expect(await q.push(batch(1))).toBe(false);
    expect(await q.push(batch(2))).toBe(false);
    expect(q.pending()).toHaveLength(2);

    online = true;
    expect(await q.flush()).toBe(true);
    expect(sent.map((b) => b[0].case)).toEqual(["case1", "case2"]);
    expect(q.pending()).toHaveLength(0);
  });

  it("pending batches survive a new queue instance (reload)", async () => {
    const store = new MemoryStore();
    const q1 = new SubmitQueue(store, async () => {
      throw new Error("offline");
    });
    await q1.push(batch(7));

    const sent: ScorePayload[][] = [];
    const q2 = new SubmitQueue(store, async (s) => {
      sent.push(s);
    });
    expect(await q2.flush()).toBe(true);
    expect(sent[0][0].case).toBe("case7");
  });

  it("partial flush keeps the unsent tail", async () => {
    const store = new MemoryStore();
    let calls = 0;
    const q = new SubmitQueue(store, async () => {
      calls += 1;
      if (calls > 1) throw new Error("offline again");
    });
    await q.push(batch(1)); // delivered
    calls = 10; // force failure for subsequent submits
    await q.push(batch(2));
    expect(q.pending()).toHaveLength(1);
    expect(q.pending()[0][0].case).toBe("case2");
  });
});
