/**
 * Thin typed client for the retrieval service JSON API.
 *
 * The fetch implementation is injectable so tests can run against a mock
 * service without a network.
 */

import type {
  AnnotationRecord,
  ApiErrorBody,
  CorpusInfo,
  MomentResult,
  NeighborsResponse,
  SearchResponse,
} from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string
  ) {
    super(message);
  }
}

export interface SearchParams {
  queryText?: string;
  queryEmbedding?: number[];
  topK?: number;
  rerank?: boolean;
}

export interface TemporalParams {
  videoId: string;
  pivotFrame: number;
  queryStartText?: string;
  queryEndText?: string;
  queryStartEmbedding?: number[];
  queryEndEmbedding?: number[];
}

export interface AnnotationDraft {
  sessionId: string;
  queryText: string;
  videoId: string;
  fS: number;
  fE: number;
  answerText?: string;
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const body = await response.json();
    if (!response.ok) {
      const err = body as ApiErrorBody;
      throw new ApiError(
        response.status,
        err.error?.code ?? "unknown",
        err.error?.message ?? `request failed with ${response.status}`
      );
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  search(params: SearchParams): Promise<SearchResponse> {
    return this.post("/api/v1/search", {
      query_text: params.queryText ?? null,
      query_embedding: params.queryEmbedding ?? null,
      top_k: params.topK ?? 20,
      rerank: params.rerank ?? true,
    });
  }

  temporal(params: TemporalParams): Promise<MomentResult> {
    return this.post("/api/v1/temporal", {
      video_id: params.videoId,
      pivot_frame: params.pivotFrame,
      query_start_text: params.queryStartText ?? null,
      query_end_text: params.queryEndText ?? null,
      query_start_embedding: params.queryStartEmbedding ?? null,
      query_end_embedding: params.queryEndEmbedding ?? null,
    });
  }

  neighbors(videoId: string, frame: number, span: number): Promise<NeighborsResponse> {
    const q = `frame=${frame}&span=${span}`;
    return this.request(`/api/v1/videos/${encodeURIComponent(videoId)}/neighbors?${q}`);
  }

  postAnnotation(draft: AnnotationDraft): Promise<AnnotationRecord> {
    return this.post("/api/v1/annotations", {
      session_id: draft.sessionId,
      query_text: draft.queryText,
      video_id: draft.videoId,
      f_s: draft.fS,
      f_e: draft.fE,
      answer_text: draft.answerText ?? null,
    });
  }

  async annotations(sessionId?: string): Promise<AnnotationRecord[]> {
    const suffix = sessionId ? `?session_id=${encodeURIComponent(sessionId)}` : "";
    const body = await this.request<{ annotations: AnnotationRecord[] }>(
      `/api/v1/annotations${suffix}`
    );
    return body.annotations;
  }

  corpus(): Promise<CorpusInfo> {
    return this.request("/api/v1/corpus");
  }

  splitQuery(text: string, splitHint?: number): Promise<{ start_text: string; end_text: string }> {
    return this.post("/api/v1/split-query", { text, split_hint: splitHint ?? null });
  }
}
