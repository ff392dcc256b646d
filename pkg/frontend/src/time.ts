// Relative time labels for lock and task freshness. Tracked timestamps only
// ever move forward per key, so a stale poll result can never make a label
// jump backwards.

export function parseServerTime(value: string): number {
  const ms = Date.parse(value);
  if (Number.isNaN(ms)) {
    throw new Error(`bad timestamp: ${value}`);
  }
  return ms;
}

// "just now", "N min(s) ago", "N hr(s) ago", "N day(s) ago".
export function relativeLabel(thenMs: number, nowMs: number): string {
  const delta = Math.max(0, nowMs - thenMs);
  if (delta < 60_000) {
    return "just now";
  }
  const mins = Math.floor(delta / 60_000);
  if (mins < 60) {
    return mins === 1 ? "1 min ago" : `${mins} mins ago`;
  }
  const hours = Math.floor(mins / 60);
  if (hours < 24) {
    return hours === 1 ? "1 hr ago" : `${hours} hrs ago`;
  }
  const days = Math.floor(hours / 24);
  return days === 1 ? "1 day ago" : `${days} days ago`;
}

export class FreshnessTracker {
  private readonly latest = new Map<string, number>();

  // Record a sync timestamp for a key; older observations are ignored.
  observe(key: string, value: string | null | undefined): void {
    if (value === null || value === undefined) return;
    const ms = parseServerTime(value);
    const seen = this.latest.get(key);
    if (seen === undefined || ms > seen) {
      this.latest.set(key, ms);
    }
  }

  label(key: string, nowMs: number): string {
    const ms = this.latest.get(key);
    return ms === undefined ? "never" : relativeLabel(ms, nowMs);
  }

  has(key: string): boolean {
    return this.latest.has(key);
  }

  forget(key: string): void {
    this.latest.delete(key);
  }
}
