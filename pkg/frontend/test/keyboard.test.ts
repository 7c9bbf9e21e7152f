import { describe, expect, it } from "vitest";
import { scoreForKey } from "../src/keyboard.js";
import { initialViewer, stepSlice, toggleOverlay } from "../src/viewer.js";

describe("keyboard shortcuts", () => {
  it("maps 0 / 5 / 1 / x to the four score values", () => {
    expect(scoreForKey("0")).toBe("0");
    expect(scoreForKey("5")).toBe("0.5");
    expect(scoreForKey("1")).toBe("1");
    expect(scoreForKey("x")).toBe("excluded");
    expect(scoreForKey("X")).toBe("excluded");
  });

  it("ignores other keys", () => {
    expect(scoreForKey("2")).toBeNull();
    expect(scoreForKey("Enter")).toBeNull();
  });
});

describe("viewer state", () => {
  it("starts at the middle slice with overlay on", () => {
    const v = initialViewer("s", "c", "A", 24);
    expect(v.slice).toBe(12);
    expect(v.overlay).toBe(true);
  });

  it("clamps slice stepping to the volume", () => {
    let v = initialViewer("s", "c", "A", 4);
    v = stepSlice(v, -10);
    expect(v.slice).toBe(0);
    v = stepSlice(v, 99);
    expect(v.slice).toBe(3);
  });

  it("overlay toggle keeps the slice", () => {
    let v = initialViewer("s", "c", "A", 10);
    v = stepSlice(v, 2);
    const before = v.slice;
    v = toggleOverlay(v);
    expect(v.slice).toBe(before);
    expect(v.overlay).toBe(false);
  });
});
