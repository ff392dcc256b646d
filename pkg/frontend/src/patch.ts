// Strict and fuzzy application of diff scripts, plus offset mapping through
// an edit. Mirrors the server's behaviour so a script produced on either end
// lands identically on the other.

import {
  DiffScript,
  commonPrefixLen,
} from "./diff.js";

export const DEFAULT_CONTEXT_LEN = 4;
export const DEFAULT_FUZZ_WINDOW = 32;

// A script's EQUAL or DELETE text disagrees with the base text.
export class BaseMismatch extends Error {
  readonly position: number;

  constructor(position: number) {
    super(`script does not match base text at position ${position}`);
    this.position = position;
  }
}

export class PositionOutOfRange extends Error {}

// Apply a script whose EQUAL and DELETE texts must match the base exactly.
export function applyStrict(base: string, script: DiffScript): string {
  const out: string[] = [];
  let cursor = 0;
  for (const [kind, text] of script) {
    if (kind === "+") {
      out.push(text);
      continue;
    }
    const chunk = base.slice(cursor, cursor + text.length);
    if (chunk !== text) {
      throw new BaseMismatch(cursor + commonPrefixLen(chunk, text));
    }
    if (kind === "=") {
      out.push(text);
    }
    cursor += text.length;
  }
  if (cursor !== base.length) {
    throw new BaseMismatch(cursor);
  }
  return out.join("");
}

// One contiguous change with a sliver of preceding context for relocation.
export interface Patch {
  position: number; // source-side offset of the change
  contextBefore: string;
  deleted: string;
  inserted: string;
}

// Turn each non-EQUAL run of a script into one relocatable patch. Context
// comes from the EQUAL span preceding the run: that text survives on both
// sides of the edit, so it is still findable after earlier patches in the
// same list have been applied.
export function toPatches(
  script: DiffScript, contextLen: number = DEFAULT_CONTEXT_LEN,
): Patch[] {
  if (contextLen < 0) {
    throw new Error("contextLen must be >= 0");
  }
  const patches: Patch[] = [];
  let cursor = 0;
  let runStart = -1;
  const runDel: string[] = [];
  const runIns: string[] = [];
  let prevEqual = "";

  const flush = (): void => {
    if (runStart >= 0) {
      const context = contextLen
        ? prevEqual.slice(Math.max(0, prevEqual.length - contextLen))
        : "";
      patches.push({
        position: runStart,
        contextBefore: context,
        deleted: runDel.join(""),
        inserted: runIns.join(""),
      });
      runDel.length = 0;
      runIns.length = 0;
      runStart = -1;
    }
  };

  for (const [kind, text] of script) {
    if (kind === "=") {
      flush();
      prevEqual = text;
      cursor += text.length;
      continue;
    }
    if (runStart < 0) {
      runStart = cursor;
    }
    if (kind === "-") {
      runDel.push(text);
      cursor += text.length;
    } else {
      runIns.push(text);
    }
  }
  flush();
  return patches;
}

// Apply patches at the nearest position within `window` of where they are
// expected; patches whose context+deleted text cannot be found are skipped.
export function applyFuzzy(
  text: string, patches: Patch[], window: number = DEFAULT_FUZZ_WINDOW,
): [string, boolean[]] {
  if (window < 0) {
    throw new Error("window must be >= 0");
  }
  const applied = new Array<boolean>(patches.length).fill(false);
  const order = patches
    .map((_, i) => i)
    .sort((i, j) => patches[i]!.position - patches[j]!.position);
  let out = text;
  let delta = 0;
  for (const idx of order) {
    const patch = patches[idx]!;
    const expected = patch.position + delta;
    const spot = locate(out, patch, expected, window);
    if (spot === null) continue;
    out = out.slice(0, spot) + patch.inserted + out.slice(spot + patch.deleted.length);
    applied[idx] = true;
    delta = spot + patch.inserted.length - (patch.position + patch.deleted.length);
  }
  return [out, applied];
}

function locate(
  text: string, patch: Patch, expected: number, window: number,
): number | null {
  const ctx = patch.contextBefore;
  const deleted = patch.deleted;
  for (let dist = 0; dist <= window; dist++) {
    const candidates = dist ? [expected - dist, expected + dist] : [expected];
    for (const pos of candidates) {
      if (pos - ctx.length < 0 || pos + deleted.length > text.length) continue;
      if (
        text.slice(pos - ctx.length, pos) === ctx
        && text.slice(pos, pos + deleted.length) === deleted
      ) {
        return pos;
      }
    }
  }
  return null;
}

// ---------------------------------------------------------------------------
// position mapping

// Map a source offset through a script to the target side. Positions strictly
// inside a deleted span snap to the deletion's start on the target side. At op
// boundaries, bias "right" lets insertions at the position push it right;
// bias "left" keeps it before them.
export function mapPosition(
  script: DiffScript, pos: number, bias: "right" | "left" = "right",
): number {
  if (pos < 0 || pos > script.reduce(
    (n, [kind, text]) => kind === "+" ? n : n + text.length, 0,
  )) {
    throw new PositionOutOfRange(`position ${pos} outside source text`);
  }
  let src = 0;
  let tgt = 0;
  for (const [kind, text] of script) {
    const n = text.length;
    if (kind === "+") {
      if (bias === "left" && src === pos) {
        return tgt;
      }
      tgt += n;
    } else if (kind === "=") {
      if (src <= pos && pos < src + n) {
        return tgt + (pos - src);
      }
      src += n;
      tgt += n;
    } else {
      if (src <= pos && pos < src + n) {
        return tgt;
      }
      src += n;
    }
  }
  return tgt;
}
