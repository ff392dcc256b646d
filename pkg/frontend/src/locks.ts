// Lock decorations and the local keystroke gate for the desktop editor.
//
// The server counts offsets in Unicode code points; JS strings index by
// UTF-16 unit. Every lock range is converted before it meets textarea
// selections, so astral characters cannot skew highlight ranges.

import { LockInfo } from "./api.js";
import { FreshnessTracker } from "./time.js";

export interface Decoration {
  lockId: string;
  owner: string;
  color: string;
  description: string;
  state: string;
  start: number; // UTF-16 offsets into the local buffer
  end: number;
  freshness: string;
}

export function codePointToUtf16(text: string, cpIndex: number): number {
  let cp = 0;
  let unit = 0;
  for (const ch of text) {
    if (cp === cpIndex) return unit;
    cp += 1;
    unit += ch.length;
  }
  if (cp === cpIndex) return text.length;
  throw new RangeError(`code point index ${cpIndex} outside text`);
}

export function utf16ToCodePoint(text: string, unitIndex: number): number {
  let cp = 0;
  let unit = 0;
  for (const ch of text) {
    if (unit >= unitIndex) return cp;
    cp += 1;
    unit += ch.length;
  }
  return cp;
}

export function activeLocks(locks: LockInfo[]): LockInfo[] {
  return locks.filter((lock) => lock.state === "active");
}

// True when a local edit must be refused: an insertion point strictly inside
// an active interior, or a removal span overlapping one. Edits exactly at a
// boundary count as outside (the server's filter agrees). Offsets are code
// points on the server's side of the conversion.
export function editBlocked(
  locks: LockInfo[], cpFrom: number, cpTo: number,
): boolean {
  for (const lock of activeLocks(locks)) {
    if (cpFrom === cpTo) {
      if (lock.start < cpFrom && cpFrom < lock.end) return true;
    } else if (Math.max(cpFrom, lock.start) < Math.min(cpTo, lock.end)) {
      return true;
    }
  }
  return false;
}

// One highlight color per mobile owner; the server assigns colors and keeps
// them stable per document.
export function ownerColors(locks: LockInfo[]): Map<string, string> {
  const colors = new Map<string, string>();
  for (const lock of activeLocks(locks)) {
    colors.set(lock.owner, lock.color);
  }
  return colors;
}

export function decorationsFor(
  text: string, locks: LockInfo[], freshness: FreshnessTracker, nowMs: number,
): Decoration[] {
  const out: Decoration[] = [];
  for (const lock of locks) {
    if (lock.state !== "active") continue;
    out.push({
      lockId: lock.id,
      owner: lock.owner,
      color: lock.color,
      description: lock.description,
      state: lock.state,
      start: codePointToUtf16(text, lock.start),
      end: codePointToUtf16(text, lock.end),
      freshness: freshness.has(lock.id)
        ? freshness.label(lock.id, nowMs)
        : "no sync yet",
    });
  }
  return out.sort((a, b) => a.start - b.start);
}
