import type { StateSnapshot } from "./types.js";

/**
 * Slider model for replaying recorded snapshots (one per burst, or an
 * interpolated trajectory). Holds the frames and a clamped cursor.
 */
export class TrajectoryPlayback {
  private frames: StateSnapshot[];
  private cursor: number;

  constructor(frames: StateSnapshot[] = []) {
    this.frames = [...frames];
    this.cursor = frames.length > 0 ? frames.length - 1 : 0;
  }

  get length(): number {
    return this.frames.length;
  }

  get index(): number {
    return this.cursor;
  }

  get current(): StateSnapshot | null {
    if (this.frames.length === 0) {
      return null;
    }
    return this.frames[this.cursor];
  }

  /** Append a frame and move the cursor to it (live-follow behavior). */
  push(frame: StateSnapshot): void {
    this.frames.push(frame);
    this.cursor = this.frames.length - 1;
  }

  /** Jump to a frame; out-of-range values clamp to the valid range. */
  seek(index: number): number {
    if (this.frames.length === 0) {
      this.cursor = 0;
      return 0;
    }
    this.cursor = Math.max(0, Math.min(this.frames.length - 1, Math.trunc(index)));
    return this.cursor;
  }

  next(): number {
    return this.seek(this.cursor + 1);
  }

  prev(): number {
    return this.seek(this.cursor - 1);
  }

  clear(): void {
    this.frames = [];
    this.cursor = 0;
  }
}
