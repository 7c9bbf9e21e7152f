import type { LandmarkEntry, Progress, RatingItem, ScoreValue } from "./types.js";

export interface ItemState {
  caseId: string;
  alias: string;
  landmarks: LandmarkEntry[];
  selected: number;
}

export function itemStateFrom(item: RatingItem): ItemState {
  return {
    caseId: item.case,
    alias: item.alias,
    landmarks: item.landmarks.map((l) => ({ ...l })),
    selected: firstUnscored(item.landmarks),
  };
}

export function firstUnscored(landmarks: LandmarkEntry[]): number {
  const idx = landmarks.findIndex((l) => l.value === null);
  return idx === -1 ? 0 : idx;
}

/** Submit is allowed only once every landmark carries a value. */
export function submitEnabled(state: ItemState): boolean {
  return state.landmarks.length > 0 && state.landmarks.every((l) => l.value !== null);
}

export function setScore(state: ItemState, index: number, value: ScoreValue): ItemState {
  const landmarks = state.landmarks.map((l, i) =>
    i === index ? { ...l, value } : l,
  );
  const next = landmarks
    .map((l, i) => ({ l, i }))
    .find(({ l, i }) => i > index && l.value === null);
  return {
    ...state,
    landmarks,
    selected: next ? next.i : index,
  };
}

export function selectLandmark(state: ItemState, index: number): ItemState {
  if (index < 0 || index >= state.landmarks.length) return state;
  return { ...state, selected: index };
}

/**
 * Displayed progress always mirrors the server's numbers; local edits
 * never feed the progress bar.
 */
export function progressLabel(progress: Progress): string {
  return `${progress.items_complete}/${progress.items_total} items`;
}

export function progressFraction(progress: Progress): number {
  if (progress.items_total === 0) return 0;
  return progress.items_complete / progress.items_total;
}

export function draftKey(sessionId: string, caseId: string, alias: string): string {
  return `rating-draft:${sessionId}:${caseId}:${alias}`;
}

export interface DraftStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export function saveDraft(store: DraftStore, sessionId: string, state: ItemState): void {
  const values: Record<string, ScoreValue | null> = {};
  for (const l of state.landmarks) values[l.code] = l.value;
  store.setItem(draftKey(sessionId, state.caseId, state.alias), JSON.stringify(values));
}

export function loadDraft(
  store: DraftStore,
  sessionId: string,
  state: ItemState,
): ItemState {
  const raw = store.getItem(draftKey(sessionId, state.caseId, state.alias));
  if (!raw) return state;
  try {
    const values = JSON.parse(raw) as Record<string, ScoreValue | null>;
    const landmarks = state.landmarks.map((l) =>
      l.value === null && values[l.code] ? { ...l, value: values[l.code] } : l,
    );
    return { ...state, landmarks, selected: firstUnscored(landmarks) };
  } catch {
    return state;
  }
}

export function clearDraft(store: DraftStore, sessionId: string, state: ItemState): void {
  store.removeItem(draftKey(sessionId, state.caseId, state.alias));
}
