// Durable note drafts for the mobile view. Every keystroke lands in storage
// before any network send, so a crash, reload, or dropped channel never loses
// typed notes. Each draft revision gets a stable idempotency key so a retried
// push can splice the document at most once.

export interface Draft {
  taskId: string;
  notes: string;
  draftVersion: number;
  dirty: boolean;
  syncedVersion: number;
}

export function idempotencyKey(draft: Draft): string {
  return `${draft.taskId}:${draft.draftVersion}`;
}

// Minimal slice of the DOM Storage interface, injectable for tests.
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class MemoryStore implements KeyValueStore {
  private readonly map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.has(key) ? this.map.get(key)! : null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }
}

export class DraftStore {
  private readonly storage: KeyValueStore;
  private readonly storageKey: string;
  private readonly drafts = new Map<string, Draft>();

  constructor(userId: string, storage: KeyValueStore) {
    this.storage = storage;
    this.storageKey = `sitrepsync.drafts.${userId}`;
    this.load();
  }

  private load(): void {
    const raw = this.storage.getItem(this.storageKey);
    if (raw === null) return;
    let parsed: unknown;
    try {
      parsed = JSON.parse(raw);
    } catch {
      return; // corrupted entry; start clean rather than crash the view
    }
    if (typeof parsed !== "object" || parsed === null) return;
    for (const [taskId, value] of Object.entries(parsed)) {
      const entry = value as Partial<Draft>;
      this.drafts.set(taskId, {
        taskId,
        notes: typeof entry.notes === "string" ? entry.notes : "",
        draftVersion: typeof entry.draftVersion === "number" ? entry.draftVersion : 0,
        dirty: Boolean(entry.dirty),
        syncedVersion: typeof entry.syncedVersion === "number" ? entry.syncedVersion : 0,
      });
    }
  }

  private persist(): void {
    const body: Record<string, Omit<Draft, "taskId">> = {};
    for (const [taskId, draft] of this.drafts) {
      body[taskId] = {
        notes: draft.notes,
        draftVersion: draft.draftVersion,
        dirty: draft.dirty,
        syncedVersion: draft.syncedVersion,
      };
    }
    this.storage.setItem(this.storageKey, JSON.stringify(body));
  }

  get(taskId: string): Draft | undefined {
    return this.drafts.get(taskId);
  }

  // Update a draft's notes; the version advances only when the text changed.
  edit(taskId: string, notes: string): Draft {
    let draft = this.drafts.get(taskId);
    if (draft === undefined) {
      draft = { taskId, notes: "", draftVersion: 0, dirty: false, syncedVersion: 0 };
      this.drafts.set(taskId, draft);
    }
    if (notes !== draft.notes) {
      draft.notes = notes;
      draft.draftVersion += 1;
      draft.dirty = true;
    }
    this.persist();
    return draft;
  }

  // A send is about to go out with this draft version; record an ack later.
  markSynced(taskId: string, sentVersion: number): void {
    const draft = this.drafts.get(taskId);
    if (draft === undefined) return;
    draft.syncedVersion = Math.max(draft.syncedVersion, sentVersion);
    draft.dirty = draft.draftVersion > draft.syncedVersion;
    this.persist();
  }

  // The task ended; keep the notes, stop pushing them.
  markClean(taskId: string): void {
    const draft = this.drafts.get(taskId);
    if (draft === undefined) return;
    draft.dirty = false;
    this.persist();
  }

  remove(taskId: string): void {
    this.drafts.delete(taskId);
    this.persist();
  }
}
