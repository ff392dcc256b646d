import { describe, expect, test } from "vitest";

import { FreshnessTracker, parseServerTime, relativeLabel } from "../src/time.js";

const T0 = Date.parse("2026-08-23T12:00:00Z");

describe("relativeLabel", () => {
  test("buckets by age", () => {
    expect(relativeLabel(T0, T0)).toBe("just now");
    expect(relativeLabel(T0 - 59_000, T0)).toBe("just now");
    expect(relativeLabel(T0 - 60_000, T0)).toBe("1 min ago");
    expect(relativeLabel(T0 - 3 * 60_000, T0)).toBe("3 mins ago");
    expect(relativeLabel(T0 - 59 * 60_000, T0)).toBe("59 mins ago");
    expect(relativeLabel(T0 - 60 * 60_000, T0)).toBe("1 hr ago");
    expect(relativeLabel(T0 - 5 * 3_600_000, T0)).toBe("5 hrs ago");
    expect(relativeLabel(T0 - 24 * 3_600_000, T0)).toBe("1 day ago");
    expect(relativeLabel(T0 - 72 * 3_600_000, T0)).toBe("3 days ago");
  });

  test("a future timestamp clamps to just now", () => {
    expect(relativeLabel(T0 + 10_000, T0)).toBe("just now");
  });
});

describe("parseServerTime", () => {
  test("parses RFC 3339", () => {
    expect(parseServerTime("2026-08-23T12:00:00Z")).toBe(T0);
    expect(parseServerTime("2026-08-23T13:00:00+01:00")).toBe(T0);
  });

  test("rejects junk", () => {
    expect(() => parseServerTime("not a time")).toThrow("bad timestamp");
  });
});

describe("FreshnessTracker", () => {
  test("labels keys from their latest observation", () => {
    const tracker = new FreshnessTracker();
    expect(tracker.label("t1", T0)).toBe("never");
    tracker.observe("t1", "2026-08-23T11:57:00Z");
    expect(tracker.label("t1", T0)).toBe("3 mins ago");
  });

  test("labels never move backwards for the same key", () => {
    const tracker = new FreshnessTracker();
    tracker.observe("t1", "2026-08-23T11:59:30Z");
    expect(tracker.label("t1", T0)).toBe("just now");

    // A stale poll result arrives out of order; the newer time must win.
    tracker.observe("t1", "2026-08-23T11:40:00Z");
    expect(tracker.label("t1", T0)).toBe("just now");
  });

  test("null and missing timestamps are ignored", () => {
    const tracker = new FreshnessTracker();
    tracker.observe("t1", null);
    tracker.observe("t1", undefined);
    expect(tracker.has("t1")).toBe(false);
  });
});
