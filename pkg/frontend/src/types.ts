/**
 * JSON shapes of the retrieval service API. Everything the UI displays
 * comes from these payloads; the client never computes scores or
 * timestamps of its own.
 */

export interface SearchHit {
  video_id: string;
  frame_index: number;
  timestamp_s: number;
  rank: number;
  score: number;
  thumbnail: string;
  s1?: number;
  s2?: number;
  s_final?: number;
  shot_id?: number;
}

export interface SearchResponse {
  hits: SearchHit[];
  metadata: { reranked: boolean; corpus_rows: number };
}

export interface MomentResult {
  video_id: string;
  f_s: number;
  f_e: number;
  t_s: number;
  t_e: number;
  confidence_start: number;
  confidence_end: number;
  window_used_s: [number, number];
  warning: string | null;
}

export interface NeighborFrame {
  frame_index: number;
  timestamp_s: number;
  thumbnail: string;
}

export interface NeighborsResponse {
  video_id: string;
  frames: NeighborFrame[];
}

export interface AnnotationRecord {
  id: string;
  created_at: number;
  session_id: string;
  query_text: string;
  video_id: string;
  f_s: number;
  f_e: number;
  answer_text: string | null;
}

export interface CorpusVideo {
  video_id: string;
  fps: number;
  frame_count: number;
  duration_s: number;
  has_sequence: boolean;
}

export interface CorpusInfo {
  dim: number;
  rows: number;
  videos: CorpusVideo[];
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}
