export { ApiClient, ApiError } from "./api";
export type { AnnotationDraft, FetchLike, SearchParams, TemporalParams } from "./api";
export {
  canRunTemporal,
  combinedQuery,
  initialState,
  reduce,
  replay,
} from "./session";
export type { PivotSelection, SessionEvent, SessionState } from "./session";
export {
  renderAnnotationSummary,
  renderBoundaryPanel,
  renderGrid,
  renderNeighborStrip,
} from "./render";
export type * from "./types";
