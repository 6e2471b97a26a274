import { projectPoints, type OrbitParams, type Viewport } from "./camera.js";
import { groupColor } from "./colors.js";

/** What one frame of the point-cloud view needs: screen positions + colors. */
export interface PointScene {
  /** Flat xy pixel pairs, length 2 * count; NaN marks points behind the eye. */
  xy: Float32Array;
  /** Display color per point, keyed by group label. */
  colors: string[];
  count: number;
  /** Human-readable problem with the inputs, or null when renderable. */
  banner: string | null;
}

/**
 * Build the drawable scene for one snapshot. Pure: no canvas access, so it
 * is directly testable. Mismatched inputs produce an error banner instead of
 * a crash, and an empty snapshot renders as an empty scene.
 */
export function buildPointScene(
  positions: Float32Array,
  labels: Int32Array,
  orbit: OrbitParams,
  viewport: Viewport,
): PointScene {
  if (positions.length !== 3 * labels.length) {
    return {
      xy: new Float32Array(0),
      colors: [],
      count: 0,
      banner: `positions and labels disagree: ${positions.length / 3} points vs ${labels.length} labels`,
    };
  }
  const count = labels.length;
  const xy = projectPoints(orbit, viewport, positions);
  const colors = new Array<string>(count);
  for (let i = 0; i < count; i++) {
    colors[i] = groupColor(labels[i]);
  }
  return { xy, colors, count, banner: null };
}

/** Draw a scene onto a 2D canvas context (browser-only glue). */
export function drawPointScene(
  ctx: CanvasRenderingContext2D,
  scene: PointScene,
  viewport: Viewport,
  pointRadius = 2,
): void {
  ctx.clearRect(0, 0, viewport.width, viewport.height);
  if (scene.banner !== null) {
    ctx.fillStyle = "#b00020";
    ctx.font = "14px sans-serif";
    ctx.fillText(scene.banner, 12, 24);
    return;
  }
  for (let i = 0; i < scene.count; i++) {
    const x = scene.xy[2 * i];
    const y = scene.xy[2 * i + 1];
    if (!Number.isFinite(x) || !Number.isFinite(y)) {
      continue;
    }
    ctx.fillStyle = scene.colors[i];
    ctx.beginPath();
    ctx.arc(x, y, pointRadius, 0, 2 * Math.PI);
    ctx.fill();
  }
}
