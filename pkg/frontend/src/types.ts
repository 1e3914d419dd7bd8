// Mirrors the control service's session JSON. The UI never recomputes
// scores or state; it displays server values verbatim.

export interface CaptionRequest {
  caption: string;
  candidate_count: number;
  seed: number;
}

export interface CandidatesBlock {
  caption: string;
  candidate_count: number;
  seed: number;
  count: number;
  raw_scores: number[];
  normalized_scores: number[];
  chosen_index: number;
  method: string;
  overridden_from: number | null;
}

export interface ResultMeta {
  version: number;
  alpha: number;
  exemplar_index: number;
  frame_count: number;
}

export interface SessionView {
  id: string;
  state: "created" | "candidates_ready" | "propagated" | "failed";
  busy: boolean;
  error: string | null;
  frame_count: number;
  width: number;
  height: number;
  fps: number;
  has_truth: boolean;
  caption_history: CaptionRequest[];
  candidates: CandidatesBlock | null;
  results: ResultMeta[];
  history: unknown[];
}

export interface MetricRow {
  method: string;
  psnr: number | "inf";
  ssim: number;
  fid: number;
  fvd: number;
}

export interface MetricReport {
  dataset: string;
  rows: MetricRow[];
}
