import type { ScoreValue } from "./types.js";

/** Keyboard shortcuts: 0 / 5 / 1 score, x excludes. */
const KEYMAP: Record<string, ScoreValue> = {
  "0": "0",
  "5": "0.5",
  "1": "1",
  x: "excluded",
  X: "excluded",
};

export function scoreForKey(key: string): ScoreValue | null {
  return KEYMAP[key] ?? null;
}
