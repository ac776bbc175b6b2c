/**
 * Typed client for the prediction service. The viewer never computes image
 * values itself: every number and every pixel it shows comes through here.
 */

export type Modality = "T1" | "T1CE" | "T2" | "FLAIR";
export const MODALITIES: Modality[] = ["T1", "T1CE", "T2", "FLAIR"];

export type Axis = "axial" | "coronal" | "sagittal";

export interface PerModalityEntry {
  modality: Modality;
  probability: number;
  imputed: boolean;
}

export interface SegmentationResult {
  dims: [number, number, number];
  spacing: [number, number, number];
  label_values: number[];
  region_voxels: Record<string, number>;
  region_volumes_mm3: Record<string, number>;
  mask_url: string;
}

export interface MethylationResult {
  probability: number;
  status_bit: 0 | 1;
  per_modality: PerModalityEntry[];
}

export interface JobDoc {
  job_id: string;
  kind: "segmentation" | "methylation";
  status: "pending" | "running" | "done" | "failed";
  error?: { code: string; message: string };
  result?: SegmentationResult | MethylationResult;
}

export interface DiceDoc {
  job_id: string;
  dice: { et: number; tc: number; wt: number };
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function throwHttpError(resp: Response): Promise<never> {
  let code = "HttpError";
  let message = `${resp.status}`;
  try {
    const doc = await resp.json();
    code = doc.error ?? code;
    message = doc.message ?? message;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(resp.status, code, message);
}

export interface PollOptions {
  intervalMs?: number;
  backoffFactor?: number;
  maxIntervalMs?: number;
  timeoutMs?: number;
  onUpdate?: (doc: JobDoc) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  /** Upload one study; field names are the lowercased modality tags. */
  async submitStudy(
    kind: "segment" | "methylation",
    files: Partial<Record<Modality, Blob>>,
  ): Promise<string> {
    const form = new FormData();
    for (const m of MODALITIES) {
      const blob = files[m];
      if (blob) form.append(m.toLowerCase(), blob, `${m.toLowerCase()}.nii`);
    }
    const resp = await this.fetchFn(`${this.base}/api/v1/${kind}`, {
      method: "POST",
      body: form,
    });
    if (!resp.ok) await throwHttpError(resp);
    const doc = await resp.json();
    return doc.job_id as string;
  }

  async getJob(jobId: string): Promise<JobDoc> {
    const resp = await this.fetchFn(`${this.base}/api/v1/jobs/${jobId}`);
    if (!resp.ok) await throwHttpError(resp);
    return (await resp.json()) as JobDoc;
  }

  /** 1s polling with gentle backoff until the job leaves the queue. */
  async pollUntilDone(jobId: string, opts: PollOptions = {}): Promise<JobDoc> {
    const {
      intervalMs = 1000,
      backoffFactor = 1.5,
      maxIntervalMs = 5000,
      timeoutMs = 15 * 60 * 1000,
      onUpdate,
      sleep = defaultSleep,
    } = opts;
    let wait = intervalMs;
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const doc = await this.getJob(jobId);
      onUpdate?.(doc);
      if (doc.status === "done" || doc.status === "failed") return doc;
      if (Date.now() > deadline) throw new ApiError(0, "Timeout", `job ${jobId} timed out`);
      await sleep(wait);
      wait = Math.min(wait * backoffFactor, maxIntervalMs);
    }
  }

  /** URL of one rendered slice; the <img> element fetches it directly. */
  sliceUrl(
    jobId: string,
    axis: Axis,
    index: number,
    opts: { channel?: Modality; overlay?: boolean; alpha?: number } = {},
  ): string {
    const params = new URLSearchParams();
    if (opts.channel) params.set("channel", opts.channel.toLowerCase());
    params.set("overlay", opts.overlay ? "1" : "0");
    if (opts.alpha !== undefined) params.set("alpha", String(opts.alpha));
    return `${this.base}/api/v1/jobs/${jobId}/slices/${axis}/${index}?${params.toString()}`;
  }

  maskUrl(jobId: string): string {
    return `${this.base}/api/v1/jobs/${jobId}/mask`;
  }

  async compare(jobId: string, truth: Blob): Promise<DiceDoc> {
    const form = new FormData();
    form.append("job_id", jobId);
    form.append("truth", truth, "truth.nii");
    const resp = await this.fetchFn(`${this.base}/api/v1/compare`, {
      method: "POST",
      body: form,
    });
    if (!resp.ok) await throwHttpError(resp);
    return (await resp.json()) as DiceDoc;
  }

  async health(): Promise<{ segmentation_loaded: boolean; methylation_loaded: boolean }> {
    const resp = await this.fetchFn(`${this.base}/api/v1/health`);
    if (!resp.ok) await throwHttpError(resp);
    return await resp.json();
  }
}
