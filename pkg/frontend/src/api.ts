import { parseGroupLabels, parseStateBuffer } from "./state.js";
import type { DragPair, LossRow, ResolvedPick, StateSnapshot } from "./types.js";

/** Error raised when the service returns a structured error record. */
export class ServiceError extends Error {
  readonly code: string;
  readonly status: number;
  readonly term?: string;

  constructor(status: number, code: string, message: string, term?: string) {
    super(message);
    this.name = "ServiceError";
    this.status = status;
    this.code = code;
    this.term = term;
  }
}

export interface SessionInfo {
  session: string;
  status: string;
  n_gaussians: number;
  groups: number[];
}

export interface DragsResult {
  session: string;
  resolved: ResolvedPick[];
  unresolved: number[];
}

export interface StepResult {
  session: string;
  status: string;
  steps_done: number;
  loss: LossRow | null;
  groups?: number[];
  echo?: boolean;
}

async function raiseForError(response: Response): Promise<void> {
  if (response.ok) {
    return;
  }
  let code = "engine-error";
  let message = `service returned HTTP ${response.status}`;
  let term: string | undefined;
  try {
    const body = (await response.json()) as {
      error?: { code?: string; message?: string; term?: string };
    };
    if (body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
      term = body.error.term;
    }
  } catch {
    // Non-JSON error body: keep the HTTP-status message.
  }
  throw new ServiceError(response.status, code, message, term);
}

/** Minimal interface the drag controller needs; `SessionClient` implements it. */
export interface SessionApi {
  setDrags(cameraId: number, pairs: DragPair[]): Promise<DragsResult>;
  step(n: number): Promise<StepResult>;
  getState(): Promise<StateSnapshot>;
}

/** HTTP client for one manipulation-service session. */
export class SessionClient implements SessionApi {
  readonly baseUrl: string;
  readonly sessionId: string;
  readonly info: SessionInfo;

  private constructor(baseUrl: string, info: SessionInfo) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.sessionId = info.session;
    this.info = info;
  }

  /** Open a session on the service's default scene (or an explicit one). */
  static async create(baseUrl: string, scene?: string): Promise<SessionClient> {
    const url = `${baseUrl.replace(/\/+$/, "")}/sessions`;
    const response = await fetch(url, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(scene === undefined ? {} : { scene }),
    });
    await raiseForError(response);
    const info = (await response.json()) as SessionInfo;
    return new SessionClient(baseUrl, info);
  }

  private url(suffix: string): string {
    return `${this.baseUrl}/sessions/${this.sessionId}${suffix}`;
  }

  async setDrags(cameraId: number, pairs: DragPair[]): Promise<DragsResult> {
    const response = await fetch(this.url("/drags"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        camera: cameraId,
        drags: pairs.map((p) => ({ x_p: p.xP, y_p: p.yP, x_t: p.xT, y_t: p.yT })),
      }),
    });
    await raiseForError(response);
    return (await response.json()) as DragsResult;
  }

  async step(n: number): Promise<StepResult> {
    const response = await fetch(this.url("/step"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ n }),
    });
    await raiseForError(response);
    return (await response.json()) as StepResult;
  }

  async getState(): Promise<StateSnapshot> {
    const response = await fetch(this.url("/state"));
    await raiseForError(response);
    return parseStateBuffer(await response.arrayBuffer());
  }

  /** Group labels as served in label-file text form. */
  async getGroups(): Promise<Int32Array> {
    const response = await fetch(this.url("/groups"));
    await raiseForError(response);
    return parseGroupLabels(await response.text());
  }

  async close(): Promise<void> {
    const response = await fetch(this.url(""), { method: "DELETE" });
    await raiseForError(response);
  }
}
