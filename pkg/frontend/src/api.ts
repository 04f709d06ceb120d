/**
 * Thin client for the inference service. The fetch function is injectable
 * so tests run without a server; a single in-flight generation is enforced
 * with cancel-and-replace.
 */

import type { GenerateResponse } from "./state.js";

export interface ModelInfo {
  hr_size: number;
  lr_size: number;
  downscale_factor: number;
  checkpoint_hash: string;
  step: number;
}

export interface DownscaleResponse {
  lr: number[];
  height: number;
  width: number;
}

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(message: string, readonly status: number | null) {
    super(message);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = `service returned ${response.status}`;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") {
        detail = body.detail;
      }
    } catch {
      // keep the status-based message
    }
    throw new ServiceError(detail, response.status);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  private inflight: AbortController | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchFn = (input, init) => fetch(input, init),
  ) {}

  async info(): Promise<ModelInfo> {
    const response = await this.wrap(() => this.fetchFn(`${this.baseUrl}/api/info`));
    return parseOrThrow<ModelInfo>(response);
  }

  async downscale(sourceB64: string, factor: number): Promise<DownscaleResponse> {
    const response = await this.wrap(() =>
      this.fetchFn(`${this.baseUrl}/api/downscale`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ source: sourceB64, factor }),
      }),
    );
    return parseOrThrow<DownscaleResponse>(response);
  }

  /** Starts a generation, aborting any one still pending. */
  async generate(sourceB64: string, lrGrid: number[]): Promise<GenerateResponse> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const response = await this.wrap(() =>
        this.fetchFn(`${this.baseUrl}/api/generate`, {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({ source: sourceB64, lr_target: lrGrid }),
          signal: controller.signal,
        }),
      );
      return await parseOrThrow<GenerateResponse>(response);
    } finally {
      if (this.inflight === controller) {
        this.inflight = null;
      }
    }
  }

  private async wrap(call: () => Promise<Response>): Promise<Response> {
    try {
      return await call();
    } catch (err) {
      if (err instanceof ServiceError) {
        throw err;
      }
      const message = err instanceof Error ? err.message : String(err);
      throw new ServiceError(`service unreachable: ${message}`, null);
    }
  }
}
