/** Typed client for the registration service HTTP+JSON API.
 *
 * Every piece of geometry the UI shows comes through this module; the
 * client never derives contours locally. The fetch implementation is
 * injectable so tests can intercept or fail requests.
 */

export interface BoneInfo {
  id: string;
  parent: string | null;
  head: [number, number, number];
  tail: [number, number, number];
}

export interface SessionInfo {
  session: string;
  case: string;
  slices: number;
  dims: [number, number, number];
  spacing: [number, number, number];
  origin: [number, number, number];
  bones: BoneInfo[];
  root: string | null;
  cursor: number;
  log_length: number;
}

export interface ContourSet {
  z_index: number;
  z_mm: number;
  /** closed polygons in scanner mm, first point repeated last */
  polygons: [number, number][][];
  /** nearest bone id per polygon, parallel to `polygons` */
  bones: string[];
  cursor: number;
}

/** A contour response plus its raw body, kept for bit-exact comparisons. */
export interface ContourResponse {
  set: ContourSet;
  raw: string;
}

export interface EditAck {
  cursor: number;
  log_length: number;
  bones: BoneInfo[];
}

export interface SaveResult {
  files: Record<string, string>;
  voxelization_error: string | null;
}

export interface WindowSpec {
  low: number;
  high: number;
}

export type RotateEdit = { kind: "rotate"; bone: string; q: [number, number, number, number] };
export type RigidEdit = { kind: "rigid"; q: [number, number, number, number]; t: [number, number, number] };
export type CutEdit = { kind: "cut"; bone: string };
export type Edit = RotateEdit | RigidEdit | CutEdit;

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** A non-2xx answer from the service, carrying its `detail` message. */
export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ServiceError";
  }
}

async function errorFrom(res: Response): Promise<ServiceError> {
  let detail = `${res.status} ${res.statusText}`;
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // not JSON; keep the status line
  }
  return new ServiceError(res.status, detail);
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<{ data: T; raw: string }> {
    const res = await this.fetchFn(this.base + path);
    if (!res.ok) throw await errorFrom(res);
    const raw = await res.text();
    return { data: JSON.parse(raw) as T, raw };
  }

  private async postJson<T>(path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
    if (!res.ok) throw await errorFrom(res);
    return (await res.json()) as T;
  }

  async cases(): Promise<string[]> {
    return (await this.getJson<{ cases: string[] }>("/cases")).data.cases;
  }

  async openSession(caseId: string): Promise<SessionInfo> {
    return this.postJson<SessionInfo>("/sessions", { case: caseId });
  }

  async sessionInfo(sid: string): Promise<SessionInfo> {
    return (await this.getJson<SessionInfo>(`/sessions/${sid}`)).data;
  }

  async slicePng(sid: string, k: number, window: WindowSpec): Promise<ArrayBuffer> {
    const q = `low=${window.low}&high=${window.high}`;
    const res = await this.fetchFn(`${this.base}/sessions/${sid}/slices/${k}?${q}`);
    if (!res.ok) throw await errorFrom(res);
    return res.arrayBuffer();
  }

  async contours(sid: string, k: number): Promise<ContourResponse> {
    const { data, raw } = await this.getJson<ContourSet>(`/sessions/${sid}/contours/${k}`);
    return { set: data, raw };
  }

  async postEdit(sid: string, edit: Edit): Promise<EditAck> {
    return this.postJson<EditAck>(`/sessions/${sid}/edits`, edit);
  }

  async undo(sid: string): Promise<EditAck> {
    return this.postJson<EditAck>(`/sessions/${sid}/undo`);
  }

  async save(sid: string, outDir?: string): Promise<SaveResult> {
    return this.postJson<SaveResult>(
      `/sessions/${sid}/save`,
      outDir === undefined ? {} : { out_dir: outDir },
    );
  }
}
