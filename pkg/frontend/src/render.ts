/**
 * Pure string renderers for the UI views.
 *
 * Each renderer maps server payloads (plus session state) to a plain-text
 * layout, which keeps the views trivially snapshot-testable. No value in
 * the output is computed client-side: ranks, scores, and timestamps are
 * echoed from the service responses verbatim.
 */

import type { SessionState } from "./session";
import type { MomentResult, NeighborFrame, SearchHit } from "./types";

function fmtScore(value: number): string {
  return value.toFixed(4);
}

function fmtTime(seconds: number): string {
  return `${seconds.toFixed(2)}s`;
}

/** Top-K results as a grid of tiles in rank order. */
export function renderGrid(hits: SearchHit[]): string {
  if (hits.length === 0) {
    return "No results. Try a broader description.";
  }
  const tiles = hits.map((h) => {
    const score = h.s_final !== undefined ? h.s_final : h.score;
    const badges = [
      `#${h.rank}`,
      h.video_id,
      fmtTime(h.timestamp_s),
      `score ${fmtScore(score)}`,
    ];
    if (h.shot_id !== undefined) badges.push(`shot ${h.shot_id}`);
    return `[${badges.join(" | ")}] ${h.thumbnail}`;
  });
  return tiles.join("\n");
}

/** Scrollable strip of frames around the pivot. */
export function renderNeighborStrip(frames: NeighborFrame[], pivotFrame: number): string {
  return frames
    .map((f) => {
      const marker = f.frame_index === pivotFrame ? ">" : " ";
      return `${marker} ${f.frame_index} @ ${fmtTime(f.timestamp_s)} ${f.thumbnail}`;
    })
    .join("\n");
}

/** Proposed boundaries plus the handles' current (possibly dragged) position. */
export function renderBoundaryPanel(
  moment: MomentResult,
  adjustedFS: number,
  adjustedFE: number
): string {
  const lines = [
    `proposal ${moment.video_id}: frames ${moment.f_s}..${moment.f_e} ` +
      `(${fmtTime(moment.t_s)}..${fmtTime(moment.t_e)})`,
    `confidence start ${fmtScore(moment.confidence_start)} / end ${fmtScore(moment.confidence_end)}`,
    `windows used ${moment.window_used_s[0]}s / ${moment.window_used_s[1]}s`,
    `handles at ${adjustedFS}..${adjustedFE}` +
      (adjustedFS === moment.f_s && adjustedFE === moment.f_e ? " (unchanged)" : " (adjusted)"),
  ];
  if (moment.warning) {
    lines.push(`warning: ${moment.warning}`);
  }
  return lines.join("\n");
}

/** One-line summary of what will be submitted as an annotation. */
export function renderAnnotationSummary(state: SessionState): string {
  if (state.selectedPivot === null || state.adjustedFS === null || state.adjustedFE === null) {
    return "nothing to submit";
  }
  const answer = state.answerText ? ` answer="${state.answerText}"` : "";
  return (
    `annotate ${state.selectedPivot.videoId} ` +
    `frames ${state.adjustedFS}..${state.adjustedFE}${answer}`
  );
}
