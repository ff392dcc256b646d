// Character-level text diffing. Mirrors the server's engine so both ends of
// the wire produce and consume identical edit scripts.
//
// Offsets count UTF-16 code units (native JS indexing). Scripts are lossless
// even if a boundary lands inside a surrogate pair: the halves rejoin on
// application. The server counts Unicode code points instead; see locks.ts
// for the conversion used wherever server-side offsets meet local text.

export const DEFAULT_TEXT_LIMIT = 1_048_576; // characters; documents are capped at 1 MiB
export const CHAR_DIFF_CEILING = 10_000; // above this, fall back to line-level coarsening

export type OpKind = "=" | "+" | "-";

// Wire form and in-memory form coincide: ["=", text] | ["+", text] | ["-", text].
export type DiffOp = [OpKind, string];
export type DiffScript = DiffOp[];

export class SizeLimitExceeded extends Error {}

export function equal(text: string): DiffOp {
  return ["=", text];
}

export function insert(text: string): DiffOp {
  return ["+", text];
}

export function del(text: string): DiffOp {
  return ["-", text];
}

export function sourceLen(script: DiffScript): number {
  let n = 0;
  for (const [kind, text] of script) {
    if (kind !== "+") n += text.length;
  }
  return n;
}

export function sourceText(script: DiffScript): string {
  return script.filter(([kind]) => kind !== "+").map(([, text]) => text).join("");
}

export function targetText(script: DiffScript): string {
  return script.filter(([kind]) => kind !== "-").map(([, text]) => text).join("");
}

export function editCost(script: DiffScript): number {
  let n = 0;
  for (const [kind, text] of script) {
    if (kind !== "=") n += text.length;
  }
  return n;
}

export function isNoop(script: DiffScript): boolean {
  return script.every(([kind]) => kind === "=");
}

// Merge adjacent same-kind ops, drop empty ops, order DELETE before INSERT
// within each change run.
export function canonicalize(ops: DiffScript): DiffScript {
  const out: DiffScript = [];
  const runDel: string[] = [];
  const runIns: string[] = [];

  const flushRun = (): void => {
    if (runDel.length) {
      out.push(del(runDel.join("")));
      runDel.length = 0;
    }
    if (runIns.length) {
      out.push(insert(runIns.join("")));
      runIns.length = 0;
    }
  };

  for (const [kind, text] of ops) {
    if (!text) continue;
    if (kind === "=") {
      flushRun();
      const last = out[out.length - 1];
      if (last && last[0] === "=") {
        out[out.length - 1] = equal(last[1] + text);
      } else {
        out.push(equal(text));
      }
    } else if (kind === "-") {
      runDel.push(text);
    } else {
      runIns.push(text);
    }
  }
  flushRun();
  return out;
}

export function decodeScript(raw: unknown): DiffScript {
  if (!Array.isArray(raw)) {
    throw new Error("diff script must be a list");
  }
  const ops: DiffScript = [];
  for (const item of raw) {
    if (!Array.isArray(item) || item.length !== 2 || typeof item[1] !== "string") {
      throw new Error(`bad diff op: ${JSON.stringify(item)}`);
    }
    const kind = item[0];
    if (kind !== "=" && kind !== "+" && kind !== "-") {
      throw new Error(`bad diff op kind: ${JSON.stringify(kind)}`);
    }
    ops.push([kind, item[1]]);
  }
  return canonicalize(ops);
}

// ---------------------------------------------------------------------------
// diff

// Character-level minimal diff (Myers) with line-level coarsening above
// CHAR_DIFF_CEILING characters. applyStrict(old, result) === text always.
export function computeDiff(
  oldText: string, newText: string, limit: number = DEFAULT_TEXT_LIMIT,
): DiffScript {
  if (oldText.length > limit || newText.length > limit) {
    throw new SizeLimitExceeded(`input exceeds ${limit} characters`);
  }
  const coarse = Math.max(oldText.length, newText.length) > CHAR_DIFF_CEILING;
  return canonicalize(diffMain(oldText, newText, coarse));
}

function diffMain(a: string, b: string, coarse: boolean): DiffScript {
  if (a === b) {
    return a ? [equal(a)] : [];
  }
  const pre = commonPrefixLen(a, b);
  let aMid = a.slice(pre);
  let bMid = b.slice(pre);
  const suf = commonSuffixLen(aMid, bMid);
  if (suf) {
    aMid = aMid.slice(0, aMid.length - suf);
    bMid = bMid.slice(0, bMid.length - suf);
  }
  const ops: DiffScript = [];
  if (pre) ops.push(equal(a.slice(0, pre)));
  ops.push(...diffCore(aMid, bMid, coarse));
  if (suf) ops.push(equal(a.slice(a.length - suf)));
  return ops;
}

function diffCore(a: string, b: string, coarse: boolean): DiffScript {
  if (!a) return [insert(b)];
  if (!b) return [del(a)];
  if (coarse) return diffLineMode(a, b);
  const [longer, shorter] = a.length > b.length ? [a, b] : [b, a];
  const i = longer.indexOf(shorter);
  if (i !== -1) {
    // Shorter text sits inside the longer one: cost equals the length
    // difference, which is already minimal.
    const kind: OpKind = longer === b ? "+" : "-";
    return [
      [kind, longer.slice(0, i)],
      equal(shorter),
      [kind, longer.slice(i + shorter.length)],
    ];
  }
  if (shorter.length === 1) {
    // Single char with no containment: it cannot survive as an equality.
    return [del(a), insert(b)];
  }
  return bisect(a, b);
}

// Find the middle snake of the Myers edit graph and recurse on the halves.
function bisect(a: string, b: string): DiffScript {
  const n = a.length;
  const m = b.length;
  const maxD = Math.floor((n + m + 1) / 2);
  const vOffset = maxD;
  const vLength = 2 * maxD;
  const v1 = new Array<number>(vLength).fill(-1);
  const v2 = new Array<number>(vLength).fill(-1);
  v1[vOffset + 1] = 0;
  v2[vOffset + 1] = 0;
  const delta = n - m;
  // With an odd delta the forward path collides with the reverse path.
  const front = delta % 2 !== 0;
  let k1start = 0;
  let k1end = 0;
  let k2start = 0;
  let k2end = 0;
  for (let d = 0; d < maxD; d++) {
    for (let k1 = -d + k1start; k1 <= d - k1end; k1 += 2) {
      const k1Offset = vOffset + k1;
      let x1: number;
      if (k1 === -d || (k1 !== d && v1[k1Offset - 1]! < v1[k1Offset + 1]!)) {
        x1 = v1[k1Offset + 1]!;
      } else {
        x1 = v1[k1Offset - 1]! + 1;
      }
      let y1 = x1 - k1;
      while (x1 < n && y1 < m && a[x1] === b[y1]) {
        x1++;
        y1++;
      }
      v1[k1Offset] = x1;
      if (x1 > n) {
        k1end += 2;
      } else if (y1 > m) {
        k1start += 2;
      } else if (front) {
        const k2Offset = vOffset + delta - k1;
        if (k2Offset >= 0 && k2Offset < vLength && v2[k2Offset] !== -1) {
          const x2 = n - v2[k2Offset]!;
          if (x1 >= x2) {
            return bisectSplit(a, b, x1, y1);
          }
        }
      }
    }
    for (let k2 = -d + k2start; k2 <= d - k2end; k2 += 2) {
      const k2Offset = vOffset + k2;
      let x2: number;
      if (k2 === -d || (k2 !== d && v2[k2Offset - 1]! < v2[k2Offset + 1]!)) {
        x2 = v2[k2Offset + 1]!;
      } else {
        x2 = v2[k2Offset - 1]! + 1;
      }
      let y2 = x2 - k2;
      while (x2 < n && y2 < m && a[n - x2 - 1] === b[m - y2 - 1]) {
        x2++;
        y2++;
      }
      v2[k2Offset] = x2;
      if (x2 > n) {
        k2end += 2;
      } else if (y2 > m) {
        k2start += 2;
      } else if (!front) {
        const k1Offset = vOffset + delta - k2;
        if (k1Offset >= 0 && k1Offset < vLength && v1[k1Offset] !== -1) {
          const x1 = v1[k1Offset]!;
          const y1 = vOffset + x1 - k1Offset;
          const x2Abs = n - x2;
          if (x1 >= x2Abs) {
            return bisectSplit(a, b, x1, y1);
          }
        }
      }
    }
  }
  // No commonality at all.
  return [del(a), insert(b)];
}

function bisectSplit(a: string, b: string, x: number, y: number): DiffScript {
  return [
    ...diffMain(a.slice(0, x), b.slice(0, y), false),
    ...diffMain(a.slice(x), b.slice(y), false),
  ];
}

export function commonPrefixLen(a: string, b: string): number {
  if (!a || !b || a[0] !== b[0]) return 0;
  let lo = 0;
  let hi = Math.min(a.length, b.length);
  let mid = hi;
  let start = 0;
  while (lo < mid) {
    if (a.slice(start, mid) === b.slice(start, mid)) {
      lo = mid;
      start = lo;
    } else {
      hi = mid;
    }
    mid = Math.floor((hi - lo) / 2) + lo;
  }
  return mid;
}

export function commonSuffixLen(a: string, b: string): number {
  if (!a || !b || a[a.length - 1] !== b[b.length - 1]) return 0;
  let lo = 0;
  let hi = Math.min(a.length, b.length);
  let mid = hi;
  let end = 0;
  while (lo < mid) {
    if (a.slice(a.length - mid, a.length - end)
        === b.slice(b.length - mid, b.length - end)) {
      lo = mid;
      end = lo;
    } else {
      hi = mid;
    }
    mid = Math.floor((hi - lo) / 2) + lo;
  }
  return mid;
}

function diffLineMode(a: string, b: string): DiffScript {
  const [encA, encB, lines] = linesToChars(a, b);
  const lineOps = canonicalize(diffMain(encA, encB, false));
  const ops: DiffScript = lineOps.map(([kind, text]) => {
    let joined = "";
    for (const ch of text) {
      joined += lines[ch.codePointAt(0)!]!;
    }
    return [kind, joined];
  });
  // Re-diff small replacement blocks character-wise for tighter scripts.
  const out: DiffScript = [];
  let i = 0;
  while (i < ops.length) {
    const op = ops[i]!;
    const next = ops[i + 1];
    if (
      op[0] === "-"
      && next !== undefined
      && next[0] === "+"
      && op[1].length + next[1].length <= CHAR_DIFF_CEILING
    ) {
      out.push(...diffMain(op[1], next[1], false));
      i += 2;
    } else {
      out.push(op);
      i += 1;
    }
  }
  return out;
}

function linesToChars(a: string, b: string): [string, string, string[]] {
  const lines: string[] = [""];
  const index = new Map<string, number>();

  const munge = (text: string): string => {
    const chars: string[] = [];
    let start = 0;
    while (start < text.length) {
      let end = text.indexOf("\n", start);
      end = end === -1 ? text.length - 1 : end;
      const line = text.slice(start, end + 1);
      let code = index.get(line);
      if (code === undefined) {
        lines.push(line);
        code = lines.length - 1;
        index.set(line, code);
      }
      chars.push(String.fromCodePoint(code));
      start = end + 1;
    }
    return chars.join("");
  };

  return [munge(a), munge(b), lines];
}
