/**
 * Session state and its event reducer.
 *
 * Every interaction is an event; the state is a pure fold over the event
 * list, so any session can be replayed deterministically from its log.
 */

import type { MomentResult, SearchHit } from "./types";

export interface PivotSelection {
  videoId: string;
  frameIndex: number;
  rank: number;
}

export interface SessionState {
  queryFirstPortion: string;
  queryRemainder: string;
  hits: SearchHit[];
  selectedPivot: PivotSelection | null;
  moment: MomentResult | null;
  /** Boundaries under review; start from the proposal, move with drags. */
  adjustedFS: number | null;
  adjustedFE: number | null;
  answerText: string;
  savedAnnotationId: string | null;
  lastError: string | null;
}

export type SessionEvent =
  | { kind: "query_first_set"; text: string }
  | { kind: "query_remainder_set"; text: string }
  | { kind: "search_results"; hits: SearchHit[] }
  | { kind: "tile_clicked"; rank: number }
  | { kind: "moment_proposed"; moment: MomentResult }
  | { kind: "boundary_dragged"; handle: "start" | "end"; frame: number }
  | { kind: "answer_entered"; text: string }
  | { kind: "annotation_saved"; id: string }
  | { kind: "error_shown"; message: string }
  | { kind: "session_reset" };

export function initialState(): SessionState {
  return {
    queryFirstPortion: "",
    queryRemainder: "",
    hits: [],
    selectedPivot: null,
    moment: null,
    adjustedFS: null,
    adjustedFE: null,
    answerText: "",
    savedAnnotationId: null,
    lastError: null,
  };
}

export function reduce(state: SessionState, event: SessionEvent): SessionState {
  switch (event.kind) {
    case "query_first_set":
      return { ...state, queryFirstPortion: event.text };
    case "query_remainder_set":
      return { ...state, queryRemainder: event.text };
    case "search_results":
      // a fresh grid invalidates pivot-dependent state
      return {
        ...initialState(),
        queryFirstPortion: state.queryFirstPortion,
        queryRemainder: state.queryRemainder,
        hits: event.hits,
      };
    case "tile_clicked": {
      const hit = state.hits.find((h) => h.rank === event.rank);
      if (!hit) {
        return { ...state, lastError: `no tile with rank ${event.rank}` };
      }
      return {
        ...state,
        selectedPivot: { videoId: hit.video_id, frameIndex: hit.frame_index, rank: hit.rank },
        moment: null,
        adjustedFS: null,
        adjustedFE: null,
        lastError: null,
      };
    }
    case "moment_proposed":
      return {
        ...state,
        moment: event.moment,
        adjustedFS: event.moment.f_s,
        adjustedFE: event.moment.f_e,
        lastError: null,
      };
    case "boundary_dragged": {
      if (state.adjustedFS === null || state.adjustedFE === null) {
        return { ...state, lastError: "no moment proposal to adjust" };
      }
      const frame = Math.max(0, Math.round(event.frame));
      if (event.handle === "start") {
        // an inverted drag is blocked: the handle snaps back
        if (frame > state.adjustedFE) return state;
        return { ...state, adjustedFS: frame };
      }
      if (frame < state.adjustedFS) return state;
      return { ...state, adjustedFE: frame };
    }
    case "answer_entered":
      return { ...state, answerText: event.text };
    case "annotation_saved":
      return { ...state, savedAnnotationId: event.id };
    case "error_shown":
      return { ...state, lastError: event.message };
    case "session_reset":
      return initialState();
  }
}

export function replay(events: SessionEvent[]): SessionState {
  return events.reduce(reduce, initialState());
}

/** Whether the temporal search can be issued (pivot + remainder present). */
export function canRunTemporal(state: SessionState): boolean {
  return state.selectedPivot !== null && state.queryRemainder.trim().length > 0;
}

/**
 * The combined query text and split offset sent to the server, so it never
 * re-guesses where the start description ends. The offset is in UTF-8
 * bytes, matching the server's split contract.
 */
export function combinedQuery(state: SessionState): { text: string; splitHint: number } {
  const first = state.queryFirstPortion.trim();
  const rest = state.queryRemainder.trim();
  return {
    text: `${first} ${rest}`,
    splitHint: new TextEncoder().encode(first).length,
  };
}
