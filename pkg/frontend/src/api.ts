/**
 * Thin JSON client for the gateway REST API.  Credentials are held for the
 * session and sent as HTTP Basic auth on every request; HTTP failures map to
 * typed errors so the UI can distinguish "log in again" (401) from "the node
 * behind the gateway is unreachable" (502) from everything else.
 */

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
    public readonly payload: unknown = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class AuthRequiredError extends ApiError {
  constructor(payload: unknown = null) {
    super(401, "authentication required", payload);
    this.name = "AuthRequiredError";
  }
}

export class NodeUnreachableError extends ApiError {
  constructor(payload: unknown = null) {
    super(502, "node unreachable", payload);
    this.name = "NodeUnreachableError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

function errorMessage(status: number, payload: unknown): string {
  if (typeof payload === "object" && payload !== null && "Error" in payload) {
    return `HTTP ${status}: ${(payload as Record<string, unknown>).Error}`;
  }
  return `HTTP ${status}`;
}

export class ApiClient {
  private authHeader: string | null = null;

  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  setCredentials(user: string, password: string): void {
    this.authHeader = `Basic ${btoa(`${user}:${password}`)}`;
  }

  clearCredentials(): void {
    this.authHeader = null;
  }

  get hasCredentials(): boolean {
    return this.authHeader !== null;
  }

  get(path: string): Promise<unknown> {
    return this.request("GET", path);
  }

  put(path: string, body: unknown): Promise<unknown> {
    return this.request("PUT", path, body);
  }

  post(path: string, body?: unknown): Promise<unknown> {
    return this.request("POST", path, body);
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const headers: Record<string, string> = {};
    if (this.authHeader !== null) {
      headers["Authorization"] = this.authHeader;
    }
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.base + path, init);
    let payload: unknown = null;
    const text = await response.text();
    if (text !== "") {
      try {
        payload = JSON.parse(text);
      } catch {
        payload = text;
      }
    }
    if (response.status === 401) {
      throw new AuthRequiredError(payload);
    }
    if (response.status === 502) {
      throw new NodeUnreachableError(payload);
    }
    if (!response.ok) {
      throw new ApiError(response.status, errorMessage(response.status, payload), payload);
    }
    return payload;
  }
}
