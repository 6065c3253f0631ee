// Thin typed client over the service routes. All explorer traffic goes
// through here; nothing else in the app talks to the network.

import type {
  ExplainRequest,
  PredictResponse,
  RawInstance,
  ResultDocument,
  TreeInfo,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(base + path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  const text = await res.text();
  let body: unknown = null;
  try {
    body = text ? JSON.parse(text) : null;
  } catch {
    body = null;
  }
  if (!res.ok) {
    const msg =
      body && typeof body === "object" && "error" in body
        ? String((body as { error: unknown }).error)
        : `HTTP ${res.status}`;
    throw new ApiError(res.status, msg);
  }
  return body as T;
}

export class Client {
  constructor(readonly base: string = "") {}

  health(): Promise<{ status: string; trees: number }> {
    return request(this.base, "/health");
  }

  uploadTree(doc: unknown): Promise<{ id: string }> {
    return request(this.base, "/trees", { method: "POST", body: JSON.stringify(doc) });
  }

  treeInfo(id: string): Promise<TreeInfo> {
    return request(this.base, `/trees/${id}`);
  }

  predict(id: string, instance: RawInstance): Promise<PredictResponse> {
    return request(this.base, `/trees/${id}/predict`, {
      method: "POST",
      body: JSON.stringify({ instance }),
    });
  }

  explain(id: string, req: ExplainRequest): Promise<ResultDocument> {
    return request(this.base, `/trees/${id}/explain`, {
      method: "POST",
      body: JSON.stringify(req),
    });
  }

  searchBaseline(id: string, req: ExplainRequest & { dataset: unknown }): Promise<ResultDocument> {
    return request(this.base, `/trees/${id}/search-baseline`, {
      method: "POST",
      body: JSON.stringify(req),
    });
  }
}
