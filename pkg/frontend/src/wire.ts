// Wire frames for the sync protocol. One frame carries the sender's full
// outbound edit stack plus its ack of peer edits; optional fields handle
// desync recovery (reset / reset_request) and session incarnations (epoch).

import { DiffScript, decodeScript } from "./diff.js";

export interface VersionedEdit {
  version: number;
  script: DiffScript;
}

export interface SyncPayload {
  sessionId: string;
  ackVersion: number;
  edits: VersionedEdit[];
  reset?: string;
  resetId: number;
  resetRequest: boolean;
  epoch: number;
}

export function makePayload(
  sessionId: string, ackVersion: number, edits: VersionedEdit[],
): SyncPayload {
  return {
    sessionId,
    ackVersion,
    edits: [...edits].sort((a, b) => a.version - b.version),
    resetId: 0,
    resetRequest: false,
    epoch: 0,
  };
}

// JSON-ready form: {"session", "ack", "edits": [{"v", "script"}]}.
export function encodePayload(payload: SyncPayload): Record<string, unknown> {
  const out: Record<string, unknown> = {
    session: payload.sessionId,
    ack: payload.ackVersion,
    edits: payload.edits.map((e) => ({ v: e.version, script: e.script })),
  };
  if (payload.reset !== undefined) {
    out["reset"] = payload.reset;
    out["reset_id"] = payload.resetId;
  }
  if (payload.resetRequest) {
    out["reset_request"] = true;
  }
  if (payload.epoch) {
    out["epoch"] = payload.epoch;
  }
  return out;
}

function requireCount(value: unknown, label: string): number {
  if (typeof value !== "number" || !Number.isInteger(value) || value < 0) {
    throw new Error(`${label} must be a non-negative integer`);
  }
  return value;
}

// Parse and validate a wire frame; throws on malformed input.
export function decodePayload(data: unknown): SyncPayload {
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    throw new Error("payload must be an object");
  }
  const raw = data as Record<string, unknown>;
  const sessionId = raw["session"];
  if (typeof sessionId !== "string" || !sessionId) {
    throw new Error("payload needs a non-empty 'session' string");
  }
  const ack = requireCount(raw["ack"], "payload 'ack'");
  const rawEdits = raw["edits"] ?? [];
  if (!Array.isArray(rawEdits)) {
    throw new Error("payload 'edits' must be a list");
  }
  const edits: VersionedEdit[] = [];
  for (const item of rawEdits) {
    if (typeof item !== "object" || item === null || Array.isArray(item)) {
      throw new Error("each edit must be an object");
    }
    const entry = item as Record<string, unknown>;
    edits.push({
      version: requireCount(entry["v"], "edit 'v'"),
      script: decodeScript(entry["script"]),
    });
  }
  const reset = raw["reset"];
  if (reset !== undefined && reset !== null && typeof reset !== "string") {
    throw new Error("'reset' must be a string when present");
  }
  const payload = makePayload(sessionId, ack, edits);
  if (typeof reset === "string") {
    payload.reset = reset;
  }
  payload.resetId = requireCount(raw["reset_id"] ?? 0, "'reset_id'");
  payload.epoch = requireCount(raw["epoch"] ?? 0, "'epoch'");
  payload.resetRequest = Boolean(raw["reset_request"] ?? false);
  return payload;
}
