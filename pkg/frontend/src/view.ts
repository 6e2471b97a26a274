import { defaultOrbit, type OrbitParams } from "./camera.js";
import { TrajectoryPlayback } from "./playback.js";
import type { DragPair, StateSnapshot } from "./types.js";

/** An in-progress drag gesture (mouse down, not yet released). */
export interface PendingDrag {
  xP: number;
  yP: number;
  /** Current cursor position; becomes the target on release. */
  xCur: number;
  yCur: number;
}

/**
 * Everything the view layer needs to draw a frame: the client-side orbit
 * camera, which fixed service camera drag pixels refer to, the drags being
 * edited, and playback over recorded snapshots.
 *
 * The orbit camera only changes what the user sees; drag pixels are always
 * expressed in the service camera's image plane.
 */
export class ViewState {
  orbit: OrbitParams;
  serviceCameraId: number;
  /** Image size of the service camera, for drawing its frame outline. */
  serviceImageSize: [number, number];
  pendingDrag: PendingDrag | null = null;
  /** Completed drag pairs awaiting (or driving) a run. */
  activeDrags: DragPair[] = [];
  readonly playback: TrajectoryPlayback;
  banner: string | null = null;

  constructor(
    serviceCameraId: number,
    serviceImageSize: [number, number],
    orbit: OrbitParams = defaultOrbit(),
  ) {
    this.serviceCameraId = serviceCameraId;
    this.serviceImageSize = serviceImageSize;
    this.orbit = orbit;
    this.playback = new TrajectoryPlayback();
  }

  /** Snapshot to draw: whatever the playback cursor points at. */
  get displayed(): StateSnapshot | null {
    return this.playback.current;
  }

  beginDrag(xP: number, yP: number): void {
    this.pendingDrag = { xP, yP, xCur: xP, yCur: yP };
  }

  moveDrag(x: number, y: number): void {
    if (this.pendingDrag !== null) {
      this.pendingDrag.xCur = x;
      this.pendingDrag.yCur = y;
    }
  }

  /**
   * Release the pending drag. Returns the completed pair, or null for a
   * zero-length gesture (which is dropped).
   */
  endDrag(): DragPair | null {
    const pending = this.pendingDrag;
    this.pendingDrag = null;
    if (pending === null) {
      return null;
    }
    if (pending.xCur === pending.xP && pending.yCur === pending.yP) {
      return null;
    }
    const pair: DragPair = {
      xP: pending.xP,
      yP: pending.yP,
      xT: pending.xCur,
      yT: pending.yCur,
    };
    this.activeDrags.push(pair);
    return pair;
  }

  clearDrags(): void {
    this.activeDrags = [];
    this.pendingDrag = null;
  }
}
