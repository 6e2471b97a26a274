import { ServiceError, type SessionApi } from "./api.js";
import type { DragPair, ResolvedPick, StateSnapshot } from "./types.js";

export interface DragControllerOptions {
  /** Optimizer steps per burst. */
  burstSize?: number;
  /** Upper bound on bursts for one gesture. */
  maxBursts?: number;
  /**
   * Stop once the total loss changes by less than this fraction between
   * bursts. 0 disables the plateau stop.
   */
  plateauRel?: number;
  /** Called with the fresh snapshot after every burst (render hook). */
  onSnapshot?: (snapshot: StateSnapshot) => void;
}

export interface BurstReport {
  stepsDone: number;
  total: number | null;
  snapshot: StateSnapshot;
}

export interface DragRunReport {
  /** Picks the service matched to Gaussians. */
  resolved: ResolvedPick[];
  /** Indices of drag pairs that hit no visible Gaussian. */
  unresolved: number[];
  bursts: BurstReport[];
  cancelled: boolean;
  /** Message to surface next to unresolved-pick markers, if any. */
  message: string | null;
}

function dragLength(pair: DragPair): number {
  return Math.hypot(pair.xT - pair.xP, pair.yT - pair.yP);
}

/**
 * Drives one drag gesture against the service: submits the drag pairs, then
 * runs optimizer bursts until the loss plateaus, the burst budget is spent,
 * or the user cancels.
 *
 * The controller never overlaps step requests: at most one is in flight per
 * session, and a second `run` while one is active is rejected.
 */
export class DragBurstController {
  private readonly api: SessionApi;
  private readonly burstSize: number;
  private readonly maxBursts: number;
  private readonly plateauRel: number;
  private readonly onSnapshot?: (snapshot: StateSnapshot) => void;
  private cancelRequested = false;
  private running = false;

  constructor(api: SessionApi, options: DragControllerOptions = {}) {
    this.api = api;
    this.burstSize = options.burstSize ?? 25;
    this.maxBursts = options.maxBursts ?? 40;
    this.plateauRel = options.plateauRel ?? 1e-3;
    this.onSnapshot = options.onSnapshot;
  }

  get busy(): boolean {
    return this.running;
  }

  /** Ask the active run to stop; the current burst still completes. */
  cancel(): void {
    this.cancelRequested = true;
  }

  async run(cameraId: number, pairs: DragPair[]): Promise<DragRunReport> {
    if (this.running) {
      throw new Error("a drag run is already in progress for this session");
    }
    const report: DragRunReport = {
      resolved: [],
      unresolved: [],
      bursts: [],
      cancelled: false,
      message: null,
    };
    // A click without movement is not a drag: no service traffic at all.
    const effective = pairs.filter((p) => dragLength(p) > 0);
    if (effective.length === 0) {
      return report;
    }
    this.running = true;
    this.cancelRequested = false;
    try {
      let drags;
      try {
        drags = await this.api.setDrags(cameraId, effective);
      } catch (exc) {
        if (exc instanceof ServiceError && exc.code === "no-correspondence") {
          // No pick hit a visible Gaussian: the session is untouched, so
          // just surface the message and skip stepping.
          report.unresolved = effective.map((_, i) => i);
          report.message = exc.message;
          return report;
        }
        throw exc;
      }
      report.resolved = drags.resolved;
      report.unresolved = drags.unresolved;
      if (drags.unresolved.length > 0) {
        report.message = `${drags.unresolved.length} pick(s) hit no visible Gaussian`;
      }
      if (drags.resolved.length === 0) {
        return report;
      }
      let previousTotal: number | null = null;
      for (let burst = 0; burst < this.maxBursts; burst++) {
        const step = await this.api.step(this.burstSize);
        const snapshot = await this.api.getState();
        this.onSnapshot?.(snapshot);
        const total = step.loss === null ? null : step.loss.total;
        report.bursts.push({ stepsDone: step.steps_done, total, snapshot });
        if (this.cancelRequested) {
          report.cancelled = true;
          break;
        }
        if (
          this.plateauRel > 0 &&
          previousTotal !== null &&
          total !== null &&
          Math.abs(previousTotal - total) <= this.plateauRel * Math.max(previousTotal, 1)
        ) {
          break;
        }
        previousTotal = total;
      }
      return report;
    } finally {
      this.running = false;
    }
  }
}
