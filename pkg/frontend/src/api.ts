// Typed fetch client for the sync server's HTTP endpoints. Field names match
// the server's JSON exactly; callers convert to view state as needed.

export interface LockInfo {
  id: string;
  owner: string;
  start: number; // Unicode code point offsets, not UTF-16 units
  end: number;
  description: string;
  color: string;
  state: string;
  created_at: string;
  last_sync_at: string | null;
}

export interface DocumentSnapshot {
  doc_id: string;
  text: string;
  locks: LockInfo[];
  revision: number;
  created_at: string;
  template_id: string | null;
}

export interface TaskInfo {
  task_id: string;
  doc_id: string;
  owner: string;
  description: string;
  assigned_at: string;
  last_sync_at: string | null;
  state: string;
}

export interface NotificationInfo {
  kind: string;
  task_id: string;
  description: string;
  issued_at: string;
}

export interface PresenceInfo {
  user_id: string;
  display_name: string;
  last_location: { lat: number; lon: number } | null;
  last_seen: string | null;
}

export interface TaskAck {
  server_time: string;
  task_state: string;
}

export interface TaskSyncBody {
  user: string;
  notes?: string;
  idempotency_key?: string;
  location?: { lat: number; lon: number };
}

export class ApiError extends Error {
  readonly status: number;
  readonly body: Record<string, unknown>;

  constructor(status: number, message: string, body: Record<string, unknown> = {}) {
    super(message);
    this.status = status;
    this.body = body;
  }
}

type FetchLike = typeof fetch;

export class ServerApi {
  readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(base: string, fetchImpl: FetchLike = fetch) {
    this.base = base.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(
    method: string, path: string, body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.base + path, init);
    const text = await response.text();
    if (!response.ok) {
      let detail = text;
      let body: Record<string, unknown> = {};
      try {
        const parsed = JSON.parse(text) as Record<string, unknown>;
        if (typeof parsed === "object" && parsed !== null) {
          body = parsed;
        }
        const message = parsed["error"] ?? parsed["detail"];
        if (typeof message === "string") {
          detail = message;
        }
      } catch {
        // non-JSON error body; keep raw text
      }
      throw new ApiError(response.status, `${method} ${path}: ${detail}`, body);
    }
    return (text ? JSON.parse(text) : null) as T;
  }

  registerUser(displayName: string): Promise<PresenceInfo> {
    return this.request("POST", "/users", { display_name: displayName });
  }

  createDocument(template?: string): Promise<{ doc_id: string }> {
    return this.request(
      "POST", "/docs", template === undefined ? {} : { template },
    );
  }

  listDocuments(): Promise<{ docs: string[] }> {
    return this.request("GET", "/docs");
  }

  getDocument(docId: string): Promise<DocumentSnapshot> {
    return this.request("GET", `/docs/${encodeURIComponent(docId)}`);
  }

  syncDocument(
    docId: string, frame: Record<string, unknown>,
  ): Promise<Record<string, unknown>> {
    return this.request("POST", `/docs/${encodeURIComponent(docId)}/sync`, frame);
  }

  acquireLock(
    docId: string, start: number, end: number, description: string, owner: string,
  ): Promise<LockInfo> {
    return this.request("POST", `/docs/${encodeURIComponent(docId)}/locks`, {
      start, end, description, owner,
    });
  }

  revokeLock(lockId: string): Promise<TaskInfo> {
    return this.request("DELETE", `/locks/${encodeURIComponent(lockId)}`);
  }

  dismissLock(lockId: string, user: string): Promise<TaskInfo> {
    return this.request(
      "POST", `/locks/${encodeURIComponent(lockId)}/dismiss`, { user },
    );
  }

  listTasks(user: string): Promise<TaskInfo[]> {
    return this.request("GET", `/tasks?user=${encodeURIComponent(user)}`);
  }

  syncTask(taskId: string, body: TaskSyncBody): Promise<TaskAck> {
    return this.request(
      "POST", `/tasks/${encodeURIComponent(taskId)}/sync`, body,
    );
  }

  notifications(user: string, since?: string): Promise<NotificationInfo[]> {
    const query = since
      ? `user=${encodeURIComponent(user)}&since=${encodeURIComponent(since)}`
      : `user=${encodeURIComponent(user)}`;
    return this.request("GET", `/notifications?${query}`);
  }

  presence(docId: string): Promise<PresenceInfo[]> {
    return this.request("GET", `/docs/${encodeURIComponent(docId)}/presence`);
  }
}
