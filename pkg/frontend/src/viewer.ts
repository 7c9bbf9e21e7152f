import type { ApiClient } from "./api.js";

export interface ViewerState {
  sessionId: string;
  caseId: string;
  alias: string;
  slice: number;
  nSlices: number;
  overlay: boolean;
}

export function initialViewer(
  sessionId: string,
  caseId: string,
  alias: string,
  nSlices: number,
): ViewerState {
  return {
    sessionId,
    caseId,
    alias,
    slice: Math.floor(nSlices / 2),
    nSlices,
    overlay: true,
  };
}

export function stepSlice(state: ViewerState, delta: number): ViewerState {
  const slice = Math.min(state.nSlices - 1, Math.max(0, state.slice + delta));
  return { ...state, slice };
}

/** Overlay toggle keeps the slice; only the label layer changes. */
export function toggleOverlay(state: ViewerState): ViewerState {
  return { ...state, overlay: !state.overlay };
}

export function sliceUrl(api: ApiClient, state: ViewerState): string {
  return api.sliceUrl(
    state.sessionId,
    state.caseId,
    state.alias,
    state.slice,
    state.overlay,
  );
}
