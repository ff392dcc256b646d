// Client half of the differential sync loop, with guaranteed delivery.
//
// The session keeps a shadow of the server's last-acknowledged text plus a
// stack of outbound versioned edits. Every request re-sends the entire stack,
// so lost, duplicated, or reordered frames are survivable: duplicates are
// skipped by version, losses covered by the next retransmission. A response
// that does not ack our newest request was diffed against an older shadow
// and is dropped; the server rolls back and re-diffs when the next request
// shows the response went unseen.

import { DiffScript, computeDiff, isNoop } from "./diff.js";
import { BaseMismatch, applyFuzzy, applyStrict, toPatches } from "./patch.js";
import { SyncPayload, VersionedEdit, makePayload } from "./wire.js";

export type ApplyStatus = "applied" | "duplicate_only";

export class ClientSession {
  readonly sessionId: string;
  text: string;
  shadow: string;
  localVersion = 0;
  remoteVersion = 0;
  outbound: VersionedEdit[] = [];
  wantReset = false;
  resets = 0;
  lastResetId = 0;

  // Joining an existing document must start with empty live text; the first
  // round trip then carries the content in the response diff.
  constructor(sessionId: string, text = "") {
    this.sessionId = sessionId;
    this.text = text;
    this.shadow = text;
  }

  edit(newText: string): void {
    this.text = newText;
  }

  // True when there is nothing left to deliver or confirm.
  get idle(): boolean {
    return this.outbound.length === 0 && this.text === this.shadow;
  }

  // Diff the live text against the shadow and emit the full outbound stack.
  // A changed text always appends a new versioned edit; an unchanged text
  // appends an empty keepalive edit only when the stack is empty, so idle
  // cycles still move the version pair without re-sending old content.
  buildRequest(): SyncPayload {
    const script = computeDiff(this.shadow, this.text);
    const changed = !isNoop(script);
    if (changed || this.outbound.length === 0) {
      this.outbound.push({
        version: this.localVersion,
        script: changed ? script : [],
      });
      this.shadow = this.text;
      this.localVersion += 1;
    }
    const payload = makePayload(this.sessionId, this.remoteVersion, this.outbound);
    payload.epoch = this.lastResetId;
    if (this.wantReset) {
      payload.resetRequest = true;
    }
    return payload;
  }

  // Fold one response into the session. Returns null when the frame was
  // dropped (stale reset, wrong epoch, straggler ack, or a desync that now
  // waits on a reset frame).
  applyResponse(payload: SyncPayload): ApplyStatus | null {
    if (payload.reset !== undefined) {
      // A duplicated or late reset frame would re-seed this session from
      // stale authoritative text; only ever move forward.
      if (payload.resetId <= this.lastResetId) {
        return null;
      }
      this.lastResetId = payload.resetId;
      this.salvageReset(payload.reset, payload.ackVersion);
      this.wantReset = false;
      this.resets += 1;
      return null;
    }
    if (payload.epoch !== this.lastResetId) {
      // Ordinary frame from a different session incarnation; its version
      // numbers are meaningless here.
      return null;
    }
    if (payload.ackVersion !== this.localVersion) {
      return null;
    }
    try {
      return this.applyEdits(payload);
    } catch (err) {
      if (err instanceof ShadowDesync) {
        // Keep asking for a reset until one arrives; ordinary frames can
        // apply vacuously (keepalives) without proving the shadows match.
        this.wantReset = true;
        return null;
      }
      throw err;
    }
  }

  private applyEdits(payload: SyncPayload): ApplyStatus {
    // The frame applies all-or-nothing: restore entry state on desync so the
    // version pair never counts an edit whose content was discarded.
    const entry = {
      shadow: this.shadow,
      localVersion: this.localVersion,
      remoteVersion: this.remoteVersion,
      outbound: [...this.outbound],
    };
    try {
      this.outbound = this.outbound.filter((e) => e.version >= payload.ackVersion);
      let fresh = 0;
      for (const edit of payload.edits) {
        if (edit.version < this.remoteVersion) {
          continue; // duplicate of an edit we already incorporated
        }
        if (edit.version > this.remoteVersion) {
          throw new ShadowDesync(
            `version gap: expected edit ${this.remoteVersion}, got ${edit.version}`,
          );
        }
        if (edit.script.length) {
          try {
            this.shadow = applyStrict(this.shadow, edit.script);
          } catch (err) {
            if (err instanceof BaseMismatch) {
              throw new ShadowDesync(
                `edit ${edit.version} does not fit the shadow: ${err.message}`,
              );
            }
            throw err;
          }
          const [next] = applyFuzzy(this.text, toPatches(edit.script));
          this.text = next;
        }
        this.remoteVersion += 1;
        fresh += 1;
      }
      return fresh ? "applied" : "duplicate_only";
    } catch (err) {
      this.shadow = entry.shadow;
      this.localVersion = entry.localVersion;
      this.remoteVersion = entry.remoteVersion;
      this.outbound = entry.outbound;
      throw err;
    }
  }

  // Recover from a desync: reset to authoritative text, keeping local edits.
  // Local changes the server never incorporated live in two places: outbound
  // edits with version >= acked, and any not-yet-prepared difference between
  // shadow and live text. Replaying those fuzzily preserves them without
  // discarding server content the old shadow never saw.
  private salvageReset(authoritative: string, acked: number): void {
    const scripts: DiffScript[] = this.outbound
      .filter((e) => e.version >= acked)
      .map((e) => e.script);
    scripts.push(computeDiff(this.shadow, this.text));
    this.shadow = authoritative;
    this.localVersion = 0;
    this.remoteVersion = 0;
    this.outbound = [];
    let live = authoritative;
    for (const script of scripts) {
      if (!isNoop(script)) {
        [live] = applyFuzzy(live, toPatches(script));
      }
    }
    this.text = live;
  }
}

// Strict application to the shadow failed; the server must send a reset.
export class ShadowDesync extends Error {}
