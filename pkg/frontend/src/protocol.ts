/** Wire types for the session service ("usg_ws_v1" stream). */

export const WS_VERSION = "usg_ws_v1";
export const API_PREFIX = "/api/v1";

export interface HealthResponse {
  status: string;
  model_hash: string;
  ws_version: string;
  image_size: [number, number, number];
}

export interface SessionResponse {
  session_id: string;
  seed: number;
}

/** PUT .../state response and WS "update" payload. */
export interface StateUpdateResponse {
  frame: string; // base64 little-endian float32, H*W*C
  quality: number;
  oracle: { label: number; score: number };
  pose: number[];
  wrench: number[];
}

/** GET .../suggest response and WS "suggestion" payload. */
export interface SuggestionResponse {
  pose: number[];
  wrench: number[];
  q_best: number;
  n_evaluated: number;
  n_feasible: number;
  elapsed_ms: number;
  candidate_index: number;
}

export interface ErrorDetail {
  code: string;
  message: string;
}

export type ServerMessage =
  | ({ type: "hello"; version: string })
  | ({ type: "update"; seq: number } & StateUpdateResponse)
  | ({ type: "suggestion"; seq: number } & SuggestionResponse)
  | ({ type: "error"; seq?: number } & ErrorDetail);

export type ClientMessage =
  | { type: "state"; seq: number; pose: number[]; wrench: number[] }
  | { type: "suggest"; seq: number; n?: number; seed?: number };
