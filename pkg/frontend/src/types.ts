export type ScoreValue = "0" | "0.5" | "1" | "excluded";

export interface LandmarkEntry {
  code: string;
  name: string;
  value: ScoreValue | null;
}

export interface RatingItem {
  case: string;
  alias: string;
  landmarks: LandmarkEntry[];
  n_slices: number | null;
  progress: Progress;
}

export interface Progress {
  items_total: number;
  items_complete: number;
  scores_total: number;
  scores_recorded: number;
}

export interface SessionView {
  id: string;
  rater: string;
  status: "open" | "complete";
  case_order: string[];
  aliases: string;
  n_methods: number;
  landmarks: { code: string; name: string }[];
  progress: Progress;
}

export interface ScorePayload {
  session: string;
  case: string;
  alias: string;
  landmark: string;
  value: ScoreValue;
}
