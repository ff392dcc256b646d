import { describe, expect, test } from "vitest";

import { DocumentSnapshot, LockInfo, PresenceInfo } from "../src/api.js";
import { DesktopApi, DesktopController } from "../src/desktop.js";
import { decodePayload, encodePayload, makePayload } from "../src/wire.js";

function lockInfo(overrides: Partial<LockInfo>): LockInfo {
  return {
    id: "t1",
    owner: "u1",
    start: 10,
    end: 20,
    description: "verify shelter numbers",
    color: "#1f77b4",
    state: "active",
    created_at: "2026-08-23T10:00:00Z",
    last_sync_at: null,
    ...overrides,
  };
}

// Acks every request and never edits; optionally unreachable. Frames are
// genuine wire frames so the client session sees a well-behaved server.
class FakeDesktopApi implements DesktopApi {
  doc: DocumentSnapshot = {
    doc_id: "d1",
    text: "",
    locks: [],
    revision: 0,
    created_at: "2026-08-23T09:00:00Z",
    template_id: null,
  };
  presenceList: PresenceInfo[] = [];
  unreachable = false;
  syncCalls = 0;
  acquired: unknown[] = [];
  revoked: string[] = [];
  private serverVersion = 0;

  async syncDocument(
    _docId: string, frame: Record<string, unknown>,
  ): Promise<Record<string, unknown>> {
    if (this.unreachable) throw new TypeError("fetch failed");
    this.syncCalls += 1;
    const request = decodePayload(frame);
    const top = request.edits.length
      ? request.edits[request.edits.length - 1]!.version
      : -1;
    const reply = makePayload(request.sessionId, top + 1, [
      { version: this.serverVersion, script: [] },
    ]);
    this.serverVersion += 1;
    return encodePayload(reply);
  }

  async getDocument(): Promise<DocumentSnapshot> {
    if (this.unreachable) throw new TypeError("fetch failed");
    return this.doc;
  }

  async acquireLock(
    docId: string, start: number, end: number, description: string, owner: string,
  ): Promise<LockInfo> {
    const lock = lockInfo({ id: `t${this.acquired.length + 1}`, start, end, description, owner });
    this.acquired.push({ docId, start, end, description, owner });
    this.doc.locks = [...this.doc.locks, lock];
    return lock;
  }

  async revokeLock(lockId: string): Promise<unknown> {
    this.revoked.push(lockId);
    this.doc.locks = this.doc.locks.map(
      (lock) => lock.id === lockId ? { ...lock, state: "revoked" } : lock,
    );
    return {};
  }

  async presence(): Promise<PresenceInfo[]> {
    return this.presenceList;
  }
}

const TEXT = "0123456789ABCDEFGHIJklmnopqrst";

function controllerWithLock(): { api: FakeDesktopApi; desk: DesktopController } {
  const api = new FakeDesktopApi();
  const desk = new DesktopController(api, "d1", "coordinator");
  desk.session.edit(TEXT);
  desk.session.shadow = TEXT;
  desk.applyLockTable([lockInfo({})]); // covers "ABCDEFGHIJ"
  return { api, desk };
}

describe("keystroke gate", () => {
  test("typing inside a highlighted region is refused", () => {
    const { desk } = controllerWithLock();
    expect(desk.applyLocalEdit(12, 12, "x")).toBe(false);
    expect(desk.applyLocalEdit(12, 14, "")).toBe(false);
    expect(desk.applyLocalEdit(8, 15, "replacement")).toBe(false);
    expect(desk.text).toBe(TEXT);
  });

  test("edits outside or at the boundary pass through", () => {
    const { desk } = controllerWithLock();
    expect(desk.applyLocalEdit(0, 0, ">> ")).toBe(true);
    expect(desk.text).toBe(">> " + TEXT);
  });

  test("lock ranges track local edits between polls", () => {
    const { desk } = controllerWithLock();
    desk.applyLocalEdit(0, 5, ""); // delete five chars before the lock
    let deco = desk.decorations();
    expect(desk.text.slice(deco[0]!.start, deco[0]!.end)).toBe("ABCDEFGHIJ");

    desk.applyLocalEdit(deco[0]!.end, deco[0]!.end, " tail"); // insert at end boundary
    deco = desk.decorations();
    expect(desk.text.slice(deco[0]!.start, deco[0]!.end)).toBe("ABCDEFGHIJ");

    // Still gated at the shifted offsets.
    expect(desk.applyLocalEdit(deco[0]!.start + 1, deco[0]!.start + 1, "x")).toBe(false);
  });
});

describe("decoration colors", () => {
  test("each owner keeps the server-assigned color, one per owner", () => {
    const { desk } = controllerWithLock();
    desk.applyLockTable([
      lockInfo({ id: "t1", owner: "u1", color: "#d62728", start: 0, end: 4 }),
      lockInfo({ id: "t2", owner: "u2", color: "#2ca02c", start: 10, end: 14 }),
      lockInfo({ id: "t3", owner: "u1", color: "#d62728", start: 20, end: 24 }),
    ]);
    const decos = desk.decorations();
    const byOwner = new Map<string, Set<string>>();
    for (const deco of decos) {
      const set = byOwner.get(deco.owner) ?? new Set<string>();
      set.add(deco.color);
      byOwner.set(deco.owner, set);
    }
    expect([...byOwner.get("u1")!]).toEqual(["#d62728"]);
    expect([...byOwner.get("u2")!]).toEqual(["#2ca02c"]);
    expect(decos[0]!.color).not.toBe(decos[1]!.color);
  });
});

describe("freshness labels", () => {
  test("a mobile sync updates the label without desktop action", () => {
    const api = new FakeDesktopApi();
    let clock = Date.parse("2026-08-23T12:00:00Z");
    const desk = new DesktopController(api, "d1", "coordinator", () => clock);
    desk.session.edit(TEXT);

    desk.applyLockTable([lockInfo({ last_sync_at: "2026-08-23T11:55:00Z" })]);
    expect(desk.decorations()[0]!.freshness).toBe("5 mins ago");

    // The mobile side pushes; the next metadata poll carries a newer stamp.
    clock += 60_000;
    desk.applyLockTable([lockInfo({ last_sync_at: "2026-08-23T12:00:30Z" })]);
    expect(desk.decorations()[0]!.freshness).toBe("just now");
  });
});

describe("sync cycles", () => {
  test("a cycle drains local edits and clears the offline flag", async () => {
    const api = new FakeDesktopApi();
    const desk = new DesktopController(api, "d1", "coordinator");
    desk.session.edit("first line\n");
    await desk.syncCycle();
    expect(api.syncCalls).toBe(1);
    expect(desk.offline).toBe(false);
    expect(desk.session.idle).toBe(true);
  });

  test("network loss raises the offline banner and keeps edits buffered", async () => {
    const api = new FakeDesktopApi();
    const desk = new DesktopController(api, "d1", "coordinator");
    desk.session.edit("unsent\n");
    api.unreachable = true;
    await desk.syncCycle();
    expect(desk.offline).toBe(true);
    expect(desk.session.outbound).toHaveLength(1);

    api.unreachable = false;
    await desk.syncCycle();
    expect(desk.offline).toBe(false);
    expect(desk.session.idle).toBe(true);
  });

  test("lock and cancel round through the api and refresh the table", async () => {
    const api = new FakeDesktopApi();
    const desk = new DesktopController(api, "d1", "coordinator");
    desk.session.edit(TEXT);
    const lock = await desk.lockSelection(10, 20, "survey the span", "u9");
    expect(api.acquired).toEqual([
      { docId: "d1", start: 10, end: 20, description: "survey the span", owner: "u9" },
    ]);
    expect(desk.decorations()).toHaveLength(1);

    await desk.cancelLock(lock.id);
    expect(api.revoked).toEqual([lock.id]);
    expect(desk.decorations()).toHaveLength(0);
  });
});
