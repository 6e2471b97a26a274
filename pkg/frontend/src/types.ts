/** Shared types for the manipulation-service client. */

/** One row of the optimizer loss history, as reported by the service. */
export interface LossRow {
  step: number;
  deform: number;
  group: number;
  arap: number;
  total: number;
  grad_norm: number;
  n_behind: number;
  n_groups: number;
}

/** A decoded state snapshot: per-Gaussian positions and group labels. */
export interface StateSnapshot {
  n: number;
  stepsDone: number;
  history: LossRow[];
  /** Flat xyz triples, length 3 * n. */
  positions: Float32Array;
  /** Group label per Gaussian, -1 = ungrouped, length n. */
  labels: Int32Array;
}

/** One drag pair in service-camera pixel coordinates. */
export interface DragPair {
  xP: number;
  yP: number;
  xT: number;
  yT: number;
}

/** A pick that the service resolved to a concrete Gaussian. */
export interface ResolvedPick {
  drag: number;
  gaussian: number;
}
