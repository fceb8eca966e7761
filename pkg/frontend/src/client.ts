/**
 * HTTP client for the editing service: multipart job submission, status
 * polling with exponential backoff, and output retrieval. All traffic
 * goes through the service's REST API.
 */

export interface JobView {
  job_id: string;
  status: "queued" | "running" | "done" | "failed";
  outputs: string[];
  provenance: Record<string, unknown> | null;
  error: string | null;
  timings: Record<string, number | null>;
}

export interface SubmitOptions {
  prompt: string;
  params?: Record<string, unknown>;
}

export interface PollOptions {
  /** First wait in ms; each retry doubles it up to maxDelayMs. */
  initialDelayMs?: number;
  maxDelayMs?: number;
  /** Overall budget; exceeded -> PollTimeoutError. */
  timeoutMs?: number;
  /** Injected for tests; defaults to real timers. */
  sleep?: (ms: number) => Promise<void>;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly reason: string,
    detail: string,
  ) {
    super(`${status} ${reason}: ${detail}`);
  }
}

export class PollTimeoutError extends Error {}

const realSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async raise(response: Response): Promise<never> {
    let reason = "error";
    let detail = "";
    try {
      const body = (await response.json()) as {
        detail?: { reason?: string; detail?: string } | string;
      };
      if (typeof body.detail === "string") {
        detail = body.detail;
      } else if (body.detail) {
        reason = body.detail.reason ?? reason;
        detail = body.detail.detail ?? "";
      }
    } catch {
      /* non-JSON error body */
    }
    throw new ServiceError(response.status, reason, detail);
  }

  async submitEdit(
    imagePng: Uint8Array,
    maskPng: Uint8Array,
    options: SubmitOptions,
  ): Promise<string> {
    const form = new FormData();
    form.append("image", new Blob([imagePng], { type: "image/png" }), "image.png");
    form.append("mask", new Blob([maskPng], { type: "image/png" }), "mask.png");
    form.append("prompt", options.prompt);
    form.append("params", JSON.stringify(options.params ?? {}));
    const response = await this.fetchImpl(`${this.baseUrl}/v1/edit`, {
      method: "POST",
      body: form,
    });
    if (!response.ok) await this.raise(response);
    const body = (await response.json()) as { job_id: string };
    return body.job_id;
  }

  async getJob(jobId: string): Promise<JobView> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/v1/edit/${jobId}`,
    );
    if (!response.ok) await this.raise(response);
    return (await response.json()) as JobView;
  }

  /** Poll until the job leaves the queue, backing off exponentially. */
  async waitForJob(jobId: string, options: PollOptions = {}): Promise<JobView> {
    const initial = options.initialDelayMs ?? 100;
    const max = options.maxDelayMs ?? 2000;
    const budget = options.timeoutMs ?? 120_000;
    const sleep = options.sleep ?? realSleep;
    let delay = initial;
    let waited = 0;
    for (;;) {
      const job = await this.getJob(jobId);
      if (job.status === "done" || job.status === "failed") return job;
      if (waited >= budget) {
        throw new PollTimeoutError(
          `job ${jobId} still ${job.status} after ${waited}ms`,
        );
      }
      await sleep(delay);
      waited += delay;
      delay = Math.min(delay * 2, max);
    }
  }

  async getFile(name: string): Promise<Uint8Array> {
    const response = await this.fetchImpl(`${this.baseUrl}/v1/files/${name}`);
    if (!response.ok) await this.raise(response);
    return new Uint8Array(await response.arrayBuffer());
  }
}
