// Desktop coordinator editor: client-side sync cycles, lock decorations with
// a local keystroke gate, task sidebar, and a presence panel. The controller
// is headless; mountDesktop wires it to the DOM.

import {
  ApiError,
  DocumentSnapshot,
  LockInfo,
  PresenceInfo,
} from "./api.js";
import {
  Decoration,
  decorationsFor,
  editBlocked,
  utf16ToCodePoint,
} from "./locks.js";
import { ClientSession } from "./session.js";
import { FreshnessTracker } from "./time.js";
import { decodePayload, encodePayload } from "./wire.js";

export const SYNC_INTERVAL_MS = 500;
export const META_POLL_INTERVAL_MS = 2_000;

export interface DesktopApi {
  getDocument(docId: string): Promise<DocumentSnapshot>;
  syncDocument(
    docId: string, frame: Record<string, unknown>,
  ): Promise<Record<string, unknown>>;
  acquireLock(
    docId: string, start: number, end: number, description: string, owner: string,
  ): Promise<LockInfo>;
  revokeLock(lockId: string): Promise<unknown>;
  presence(docId: string): Promise<PresenceInfo[]>;
}

export class DesktopController {
  readonly docId: string;
  readonly session: ClientSession;
  locks: LockInfo[] = [];
  presence: PresenceInfo[] = [];
  offline = false;
  lastError = "";
  readonly freshness = new FreshnessTracker();
  private readonly api: DesktopApi;
  private readonly now: () => number;
  private syncInFlight = false;

  constructor(
    api: DesktopApi, docId: string, user: string, now: () => number = Date.now,
  ) {
    this.api = api;
    this.docId = docId;
    this.now = now;
    this.session = new ClientSession(`${docId}:${user}:${crypto.randomUUID()}`);
  }

  get text(): string {
    return this.session.text;
  }

  decorations(): Decoration[] {
    return decorationsFor(this.text, this.locks, this.freshness, this.now());
  }

  // Replace [from16, to16) with insertText, unless the span touches an active
  // lock interior. Offsets are UTF-16 (textarea selection); lock ranges are
  // code points. Returns false when the keystroke was refused.
  applyLocalEdit(from16: number, to16: number, insertText: string): boolean {
    const text = this.session.text;
    const cpFrom = utf16ToCodePoint(text, from16);
    const cpTo = utf16ToCodePoint(text, to16);
    if (editBlocked(this.locks, cpFrom, cpTo)) {
      return false;
    }
    this.session.edit(text.slice(0, from16) + insertText + text.slice(to16));
    this.shiftLocks(cpFrom, cpTo, [...insertText].length);
    return true;
  }

  // Keep cached lock ranges aligned with local edits between metadata polls.
  // Gate-approved edits never overlap an interior, so a whole edit sits
  // either at-or-before a lock's start (shift it) or at-or-after its end
  // (leave it). Insertions exactly at the start land outside and push the
  // lock right; at the end they stay outside and leave it in place.
  private shiftLocks(cpFrom: number, cpTo: number, insertedCp: number): void {
    const delta = insertedCp - (cpTo - cpFrom);
    if (delta === 0) return;
    for (const lock of this.locks) {
      if (lock.state !== "active") continue;
      if (cpTo <= lock.start) {
        lock.start += delta;
        lock.end += delta;
      }
    }
  }

  // One request/response cycle; at most one in flight. Network failure flips
  // the offline banner and leaves edits buffered for the next cycle.
  async syncCycle(): Promise<void> {
    if (this.syncInFlight) return;
    this.syncInFlight = true;
    try {
      const request = this.session.buildRequest();
      const raw = await this.api.syncDocument(this.docId, encodePayload(request));
      this.session.applyResponse(decodePayload(raw));
      this.offline = false;
      this.lastError = "";
    } catch (err) {
      if (err instanceof ApiError) {
        this.lastError = err.message;
      } else {
        this.offline = true;
      }
    } finally {
      this.syncInFlight = false;
    }
  }

  async refreshMeta(): Promise<void> {
    try {
      const doc = await this.api.getDocument(this.docId);
      this.applyLockTable(doc.locks);
      this.offline = false;
    } catch (err) {
      if (!(err instanceof ApiError)) {
        this.offline = true;
      }
    }
  }

  applyLockTable(locks: LockInfo[]): void {
    this.locks = locks;
    for (const lock of locks) {
      this.freshness.observe(lock.id, lock.last_sync_at);
    }
  }

  async refreshPresence(): Promise<void> {
    try {
      this.presence = await this.api.presence(this.docId);
    } catch {
      // panel data only; next poll retries
    }
  }

  // "Lock Mobile": assign the selected span to a mobile owner. Offsets are
  // UTF-16 from the textarea; the server expects code points into its own
  // text, so call this only when the editor is synced (idle).
  async lockSelection(
    from16: number, to16: number, description: string, owner: string,
  ): Promise<LockInfo> {
    const text = this.session.text;
    const lock = await this.api.acquireLock(
      this.docId,
      utf16ToCodePoint(text, from16),
      utf16ToCodePoint(text, to16),
      description,
      owner,
    );
    await this.refreshMeta();
    return lock;
  }

  async cancelLock(lockId: string): Promise<void> {
    await this.api.revokeLock(lockId);
    await this.refreshMeta();
  }
}

// ---------------------------------------------------------------------------
// DOM wiring (browser only)

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

function highlightedHtml(text: string, decorations: Decoration[]): string {
  let html = "";
  let cursor = 0;
  for (const deco of decorations) {
    html += escapeHtml(text.slice(cursor, deco.start));
    html += `<mark style="background:${deco.color}" title="${escapeHtml(deco.description)}">`
      + escapeHtml(text.slice(deco.start, deco.end)) + "</mark>";
    cursor = deco.end;
  }
  return html + escapeHtml(text.slice(cursor));
}

function removalSpan(
  area: HTMLTextAreaElement, inputType: string,
): [number, number] {
  const from = area.selectionStart;
  const to = area.selectionEnd;
  if (from !== to) return [from, to];
  if (inputType === "deleteContentBackward") return [Math.max(0, from - 1), to];
  if (inputType.startsWith("delete")) return [from, Math.min(area.value.length, to + 1)];
  return [from, to];
}

export function mountDesktop(
  root: HTMLElement, api: DesktopApi, docId: string, user: string,
): DesktopController {
  const controller = new DesktopController(api, docId, user);
  root.innerHTML = `
    <div class="desktop">
      <div class="banner" hidden>offline, edits buffered</div>
      <div class="editor">
        <pre class="backdrop" aria-hidden="true"></pre>
        <textarea class="doc" spellcheck="false"></textarea>
      </div>
      <aside class="sidebar">
        <button class="lock-mobile">Lock Mobile</button>
        <ul class="locks"></ul>
        <h3>Presence</h3>
        <pre class="presence-panel"></pre>
      </aside>
    </div>`;
  const banner = root.querySelector(".banner") as HTMLElement;
  const backdrop = root.querySelector(".backdrop") as HTMLElement;
  const area = root.querySelector(".doc") as HTMLTextAreaElement;
  const lockButton = root.querySelector(".lock-mobile") as HTMLButtonElement;
  const lockList = root.querySelector(".locks") as HTMLElement;
  const presencePanel = root.querySelector(".presence-panel") as HTMLElement;

  const render = (): void => {
    const decorations = controller.decorations();
    if (area.value !== controller.text) {
      const caret = area.selectionStart;
      area.value = controller.text;
      area.setSelectionRange(caret, caret);
    }
    backdrop.innerHTML = highlightedHtml(controller.text, decorations);
    banner.hidden = !controller.offline;
    lockList.innerHTML = "";
    for (const deco of decorations) {
      const item = document.createElement("li");
      item.innerHTML = `<span class="chip" style="background:${deco.color}"></span>`
        + `${escapeHtml(deco.description)} (${escapeHtml(deco.owner)}, `
        + `${escapeHtml(deco.freshness)}) `;
      const cancel = document.createElement("button");
      cancel.textContent = "cancel";
      cancel.addEventListener("click", () => {
        void controller.cancelLock(deco.lockId).then(render);
      });
      item.appendChild(cancel);
      lockList.appendChild(item);
    }
    presencePanel.textContent = controller.presence
      .map((p) => p.last_location
        ? `${p.display_name} @ ${p.last_location.lat.toFixed(4)},${p.last_location.lon.toFixed(4)}`
        : `${p.display_name} (no fix)`)
      .join("\n");
  };

  area.addEventListener("beforeinput", (event: InputEvent) => {
    event.preventDefault();
    const inserted = event.inputType.startsWith("insert")
      ? event.data ?? (event.inputType === "insertLineBreak" ? "\n" : "")
      : "";
    const [from, to] = event.inputType.startsWith("delete")
      ? removalSpan(area, event.inputType)
      : [area.selectionStart, area.selectionEnd];
    if (controller.applyLocalEdit(from, to, inserted)) {
      area.value = controller.text;
      const caret = from + inserted.length;
      area.setSelectionRange(caret, caret);
    }
    render();
  });

  lockButton.addEventListener("click", () => {
    const from = area.selectionStart;
    const to = area.selectionEnd;
    if (from === to) return;
    const description = window.prompt("Task description for this region?");
    if (!description) return;
    const owner = window.prompt("Assign to which mobile user id?");
    if (!owner) return;
    void controller.lockSelection(from, to, description, owner)
      .then(render)
      .catch((err: unknown) => window.alert(String(err)));
  });

  void controller.refreshMeta().then(render);
  setInterval(() => {
    void controller.syncCycle().then(render);
  }, SYNC_INTERVAL_MS);
  setInterval(() => {
    void controller.refreshMeta().then(render);
    void controller.refreshPresence().then(render);
  }, META_POLL_INTERVAL_MS);
  return controller;
}
