export { SessionClient, ServiceError } from "./api.js";
export type { SessionApi, SessionInfo, DragsResult, StepResult } from "./api.js";
export {
  defaultOrbit,
  orbitEye,
  projectPoints,
  rotateOrbit,
  zoomOrbit,
} from "./camera.js";
export type { OrbitParams, Vec3, Viewport } from "./camera.js";
export { GROUP_PALETTE, UNGROUPED_COLOR, groupColor, labelColors } from "./colors.js";
export { DragBurstController } from "./drag.js";
export type { BurstReport, DragControllerOptions, DragRunReport } from "./drag.js";
export { TrajectoryPlayback } from "./playback.js";
export { buildPointScene, drawPointScene } from "./renderer.js";
export type { PointScene } from "./renderer.js";
export { parseGroupLabels, parseStateBuffer } from "./state.js";
export type { DragPair, LossRow, ResolvedPick, StateSnapshot } from "./types.js";
export { ViewState } from "./view.js";
export type { PendingDrag } from "./view.js";
