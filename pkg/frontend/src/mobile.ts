// Mobile field view: task list, offline-durable note drafts, manual and
// five-minute automatic sync, notification banners. The controller is
// headless; mountMobile wires it to the DOM.

import { ApiError, NotificationInfo, TaskInfo } from "./api.js";
import { Draft, DraftStore, idempotencyKey } from "./drafts.js";
import { FreshnessTracker } from "./time.js";

export const AUTO_SYNC_INTERVAL_MS = 300_000;

export interface MobileApi {
  listTasks(user: string): Promise<TaskInfo[]>;
  syncTask(taskId: string, body: {
    user: string;
    notes?: string;
    idempotency_key?: string;
    location?: { lat: number; lon: number };
  }): Promise<{ server_time: string; task_state: string }>;
  notifications(user: string, since?: string): Promise<NotificationInfo[]>;
  dismissLock(lockId: string, user: string): Promise<unknown>;
}

export interface LocalTask {
  taskId: string;
  description: string;
  state: string;
  assignedAt: string | null;
  lastSyncAt: string | null;
}

export interface Banner {
  kind: "info" | "pending" | "terminal";
  taskId: string | null;
  text: string;
}

export class MobileController {
  readonly userId: string;
  readonly drafts: DraftStore;
  readonly tasks = new Map<string, LocalTask>();
  taskOrder: string[] = [];
  banners: Banner[] = [];
  location: { lat: number; lon: number } | null = null;
  readonly freshness = new FreshnessTracker();
  private readonly api: MobileApi;
  private readonly now: () => number;
  private readonly autoIntervalMs: number;
  private lastAutoAttempt: number;
  private lastNotificationSeen = "";
  private readonly seenNotifications = new Set<string>();
  private readonly bannered = new Set<string>();
  private readonly inFlight = new Set<string>();

  constructor(
    userId: string,
    api: MobileApi,
    drafts: DraftStore,
    now: () => number = Date.now,
    autoIntervalMs: number = AUTO_SYNC_INTERVAL_MS,
  ) {
    this.userId = userId;
    this.api = api;
    this.drafts = drafts;
    this.now = now;
    this.autoIntervalMs = autoIntervalMs;
    this.lastAutoAttempt = now();
  }

  activeTasks(): LocalTask[] {
    return this.taskOrder
      .map((id) => this.tasks.get(id)!)
      .filter((task) => task.state === "active");
  }

  syncing(taskId: string): boolean {
    return this.inFlight.has(taskId);
  }

  draftFor(taskId: string): Draft | undefined {
    return this.drafts.get(taskId);
  }

  editNotes(taskId: string, notes: string): Draft {
    return this.drafts.edit(taskId, notes);
  }

  updateLocation(lat: number, lon: number): void {
    this.location = { lat, lon };
  }

  private pushBanner(banner: Banner, onceKey?: string): void {
    if (onceKey !== undefined) {
      if (this.bannered.has(onceKey)) return;
      this.bannered.add(onceKey);
    }
    this.banners.push(banner);
  }

  private markEnded(taskId: string, state: string): void {
    const task = this.tasks.get(taskId);
    if (task !== undefined) {
      task.state = state;
    }
    this.drafts.markClean(taskId);
    if (state === "revoked") {
      this.pushBanner({
        kind: "terminal",
        taskId,
        text: "Task withdrawn by the coordinator. Nothing more is needed from you.",
      }, `terminal:${taskId}`);
    }
  }

  async refreshTasks(): Promise<LocalTask[]> {
    const listed = await this.api.listTasks(this.userId);
    const activeIds = new Set<string>();
    const order: string[] = [];
    for (const raw of listed) {
      activeIds.add(raw.task_id);
      order.push(raw.task_id);
      let task = this.tasks.get(raw.task_id);
      if (task === undefined) {
        task = {
          taskId: raw.task_id,
          description: raw.description,
          state: raw.state,
          assignedAt: raw.assigned_at,
          lastSyncAt: raw.last_sync_at,
        };
        this.tasks.set(raw.task_id, task);
        this.pushBanner({
          kind: "info",
          taskId: raw.task_id,
          text: `New task: ${raw.description}`,
        }, `assigned:${raw.task_id}`);
      }
      task.description = raw.description;
      task.state = raw.state;
      task.assignedAt = raw.assigned_at;
      task.lastSyncAt = raw.last_sync_at;
      this.freshness.observe(raw.task_id, raw.last_sync_at);
    }
    for (const [taskId, task] of this.tasks) {
      if (!activeIds.has(taskId) && task.state === "active") {
        // Gone from the active list without a dismissal on this side: the
        // desk must have revoked or released it.
        this.markEnded(taskId, "revoked");
      }
    }
    this.taskOrder = order;
    return order.map((id) => this.tasks.get(id)!);
  }

  async pollNotifications(): Promise<NotificationInfo[]> {
    const raw = await this.api.notifications(
      this.userId, this.lastNotificationSeen || undefined,
    );
    const fresh: NotificationInfo[] = [];
    for (const item of raw) {
      if (item.issued_at > this.lastNotificationSeen) {
        this.lastNotificationSeen = item.issued_at;
      }
      const key = `${item.task_id}:${item.kind}`;
      if (this.seenNotifications.has(key)) continue;
      this.seenNotifications.add(key);
      fresh.push(item);
      if (item.kind === "revoked") {
        this.markEnded(item.task_id, "revoked");
      } else if (item.kind === "assigned") {
        this.pushBanner({
          kind: "info",
          taskId: item.task_id,
          text: `New task: ${item.description}`,
        }, `assigned:${item.task_id}`);
      }
    }
    return fresh;
  }

  // Push one task's draft, or a plain heartbeat when clean. The button-level
  // guard lives here: a task with a request in flight is skipped, so there is
  // never more than one concurrent sync per task.
  private async syncOne(taskId: string): Promise<boolean> {
    if (this.inFlight.has(taskId)) return false;
    this.inFlight.add(taskId);
    try {
      const draft = this.drafts.get(taskId);
      const dirty = draft !== undefined && draft.dirty;
      const body: Parameters<MobileApi["syncTask"]>[1] = { user: this.userId };
      let sentVersion = 0;
      if (dirty) {
        body.notes = draft.notes;
        body.idempotency_key = idempotencyKey(draft);
        sentVersion = draft.draftVersion;
      }
      if (this.location !== null) {
        body.location = this.location;
      }
      let ack;
      try {
        ack = await this.api.syncTask(taskId, body);
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          // Task ended on the server; keep the notes, stop pushing them.
          const state = typeof err.body["task_state"] === "string"
            ? err.body["task_state"] as string
            : "revoked";
          this.markEnded(taskId, state);
          return false;
        }
        if (err instanceof ApiError) {
          this.pushBanner({ kind: "info", taskId, text: err.message });
          return false;
        }
        // Network failure: the draft stays dirty in storage and the next
        // manual or automatic sync retries with the same idempotency key.
        this.pushBanner({
          kind: "pending",
          taskId,
          text: "Offline. Notes saved on this device; will sync when back in range.",
        }, `pending:${taskId}:${sentVersion}`);
        return false;
      }
      if (dirty) {
        this.drafts.markSynced(taskId, sentVersion);
      }
      const task = this.tasks.get(taskId);
      if (task !== undefined) {
        task.lastSyncAt = ack.server_time;
        task.state = ack.task_state;
      }
      this.freshness.observe(taskId, ack.server_time);
      return true;
    } finally {
      this.inFlight.delete(taskId);
    }
  }

  async syncNow(taskId?: string): Promise<Record<string, boolean>> {
    const targets = taskId !== undefined
      ? [taskId]
      : this.activeTasks().map((task) => task.taskId);
    const results: Record<string, boolean> = {};
    for (const target of targets) {
      results[target] = await this.syncOne(target);
    }
    return results;
  }

  // Run the periodic sync when the fixed interval has elapsed. Returns true
  // when an attempt was made; network failures are swallowed and the next
  // attempt stays on the fixed cadence.
  async autoTick(nowMs: number = this.now()): Promise<boolean> {
    if (nowMs - this.lastAutoAttempt < this.autoIntervalMs) {
      return false;
    }
    this.lastAutoAttempt = nowMs;
    try {
      await this.refreshTasks();
      await this.pollNotifications();
    } catch {
      // refresh is best-effort offline; drafts still get their push attempt
    }
    for (const task of [...this.tasks.values()]) {
      if (task.state !== "active") continue;
      await this.syncOne(task.taskId);
    }
    return true;
  }

  async dismiss(taskId: string): Promise<void> {
    await this.api.dismissLock(taskId, this.userId);
    const task = this.tasks.get(taskId);
    if (task !== undefined) {
      task.state = "dismissed";
    }
    this.drafts.markClean(taskId);
  }

  dropBanner(index: number): void {
    this.banners.splice(index, 1);
  }
}

// ---------------------------------------------------------------------------
// DOM wiring (browser only)

export function mountMobile(
  root: HTMLElement, api: MobileApi, userId: string, storage: Storage,
): MobileController {
  const controller = new MobileController(
    userId, api, new DraftStore(userId, storage),
  );
  root.innerHTML = `
    <div class="mobile">
      <div class="banners"></div>
      <ul class="task-list"></ul>
      <section class="note-editor" hidden>
        <h3 class="task-title"></h3>
        <p class="task-meta"></p>
        <textarea class="notes"></textarea>
        <button class="sync">Sync</button>
        <button class="dismiss">Dismiss</button>
        <p class="last-sync"></p>
      </section>
    </div>`;
  const bannerBox = root.querySelector(".banners") as HTMLElement;
  const taskList = root.querySelector(".task-list") as HTMLElement;
  const editor = root.querySelector(".note-editor") as HTMLElement;
  const title = root.querySelector(".task-title") as HTMLElement;
  const meta = root.querySelector(".task-meta") as HTMLElement;
  const notes = root.querySelector(".notes") as HTMLTextAreaElement;
  const syncButton = root.querySelector(".sync") as HTMLButtonElement;
  const dismissButton = root.querySelector(".dismiss") as HTMLButtonElement;
  const lastSync = root.querySelector(".last-sync") as HTMLElement;
  let openTask: string | null = null;

  const render = (): void => {
    bannerBox.innerHTML = "";
    controller.banners.forEach((banner, index) => {
      const div = document.createElement("div");
      div.className = `banner ${banner.kind}`;
      div.textContent = banner.text;
      if (banner.kind !== "terminal") {
        const close = document.createElement("button");
        close.textContent = "x";
        close.addEventListener("click", () => {
          controller.dropBanner(index);
          render();
        });
        div.appendChild(close);
      }
      bannerBox.appendChild(div);
    });
    taskList.innerHTML = "";
    for (const task of controller.activeTasks()) {
      const item = document.createElement("li");
      const open = document.createElement("button");
      open.textContent = `${task.description} (${task.assignedAt ?? "?"})`;
      open.addEventListener("click", () => {
        openTask = task.taskId;
        notes.value = controller.draftFor(task.taskId)?.notes ?? "";
        render();
      });
      item.appendChild(open);
      taskList.appendChild(item);
    }
    if (openTask !== null) {
      const task = controller.tasks.get(openTask);
      editor.hidden = task === undefined;
      if (task !== undefined) {
        title.textContent = task.description;
        meta.textContent = `state: ${task.state}`;
        syncButton.disabled = controller.syncing(openTask) || task.state !== "active";
        lastSync.textContent = `last sync: ${controller.freshness.label(openTask, Date.now())}`;
      }
    }
  };

  notes.addEventListener("input", () => {
    if (openTask !== null) {
      controller.editNotes(openTask, notes.value);
    }
  });
  syncButton.addEventListener("click", () => {
    if (openTask === null) return;
    render();
    void controller.syncNow(openTask).then(render);
  });
  dismissButton.addEventListener("click", () => {
    if (openTask === null) return;
    void controller.dismiss(openTask).then(render);
  });
  if (navigator.geolocation) {
    navigator.geolocation.getCurrentPosition((pos) => {
      controller.updateLocation(pos.coords.latitude, pos.coords.longitude);
    });
  }

  void controller.refreshTasks().then(render);
  setInterval(() => {
    void controller.pollNotifications().then(render).catch(() => undefined);
  }, 5_000);
  setInterval(() => {
    void controller.autoTick().then(render);
  }, 10_000);
  return controller;
}
