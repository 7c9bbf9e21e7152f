import { describe, expect, it } from "vitest";
import {
  clearDraft,
  firstUnscored,
  itemStateFrom,
  loadDraft,
  progressFraction,
  progressLabel,
  saveDraft,
  selectLandmark,
  setScore,
  submitEnabled,
} from "../src/state.js";
import type { RatingItem } from "../src/types.js";

const LANDMARKS = [
  ["C", "Caudate"],
  ["I", "Insula"],
  ["IC", "Internal Capsule"],
  ["L", "Lentiform Nucleus"],
  ["M1", "Frontal operculum"],
  ["M2", "Anterior temporal lobe"],
  ["M3", "Posterior temporal lobe"],
  ["M4", "Anterior MCA"],
  ["M5", "Lateral MCA"],
  ["M6", "Posterior MCA"],
  ["BR", "Brainstem"],
  ["CE", "Cerebellum"],
] as const;

function makeItem(): RatingItem {
  return {
    case: "case00",
    alias: "A",
    landmarks: LANDMARKS.map(([code, name]) => ({ code, name, value: null })),
    n_slices: 24,
    progress: { items_total: 12, items_complete: 3, scores_total: 144, scores_recorded: 40 },
  };
}

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

describe("submit gating", () => {
  it("is disabled with any unscored landmark", () => {
    let state = itemStateFrom(makeItem());
    expect(submitEnabled(state)).toBe(false);
    for (let i = 0; i < 11; i++) {
      state = setScore(state, i, "1");
      expect(submitEnabled(state)).toBe(false);
    }
    state = setScore(state, 11, "excluded");
    expect(submitEnabled(state)).toBe(true);
  });

  it("excluded counts as a value", () => {
    let state = itemStateFrom(makeItem());
    for (let i = 0; i < 12; i++) state = setScore(state, i, "excluded");
    expect(submitEnabled(state)).toBe(true);
  });
});

describe("scoring flow", () => {
  it("auto-advances the selection to the next unscored landmark", () => {
    let state = itemStateFrom(makeItem());
    expect(state.selected).toBe(0);
    state = setScore(state, 0, "0.5");
    expect(state.selected).toBe(1);
  });

  it("skips already-scored landmarks when advancing", () => {
    let state = itemStateFrom(makeItem());
    state = setScore(state, 1, "1");
    state = setScore(state, 0, "1"); // next unscored after 0 is 2
    expect(state.selected).toBe(2);
  });

  it("rescoring overwrites the value", () => {
    let state = itemStateFrom(makeItem());
    state = setScore(state, 0, "0");
    state = setScore(state, 0, "1");
    expect(state.landmarks[0].value).toBe("1");
  });

  it("selection is bounds-checked", () => {
    const state = itemStateFrom(makeItem());
    expect(selectLandmark(state, -1)).toBe(state);
    expect(selectLandmark(state, 99)).toBe(state);
    expect(selectLandmark(state, 4).selected).toBe(4);
  });

  it("firstUnscored finds the first gap", () => {
    let state = itemStateFrom(makeItem());
    state = setScore(state, 0, "1");
    expect(firstUnscored(state.landmarks)).toBe(1);
  });
});

describe("progress display", () => {
  it("uses the server numbers, not local state", () => {
    const item = makeItem();
    expect(progressLabel(item.progress)).toBe("3/12 items");
    expect(progressFraction(item.progress)).toBeCloseTo(0.25);
    // locally scoring everything must not affect the displayed fraction
    let state = itemStateFrom(item);
    for (let i = 0; i < 12; i++) state = setScore(state, i, "1");
    expect(progressFraction(item.progress)).toBeCloseTo(0.25);
  });

  it("handles empty sessions", () => {
    expect(
      progressFraction({ items_total: 0, items_complete: 0, scores_total: 0, scores_recorded: 0 }),
    ).toBe(0);
  });
});

describe("local drafts", () => {
  it("survive a reload and restore unscored values only", () => {
    const store = new MemoryStore();
    let state = itemStateFrom(makeItem());
    state = setScore(state, 0, "0.5");
    state = setScore(state, 3, "excluded");
    saveDraft(store, "sess1", state);

    const fresh = itemStateFrom(makeItem());
    const restored = loadDraft(store, "sess1", fresh);
    expect(restored.landmarks[0].value).toBe("0.5");
    expect(restored.landmarks[3].value).toBe("excluded");
    expect(restored.landmarks[1].value).toBeNull();
  });

  it("clearDraft removes the stored entry", () => {
    const store = new MemoryStore();
    const state = itemStateFrom(makeItem());
    saveDraft(store, "sess1", state);
    clearDraft(store, "sess1", state);
    const restored = loadDraft(store, "sess1", itemStateFrom(makeItem()));
    expect(restored.landmarks.every((l) => l.value === null)).toBe(true);
  });

  it("ignores corrupted drafts", () => {
    const store = new MemoryStore();
    const state = itemStateFrom(makeItem());
    store.setItem("rating-draft:sess1:case00:A", "{not json");
    const restored = loadDraft(store, "sess1", state);
    expect(restored).toBe(state);
  });
});
