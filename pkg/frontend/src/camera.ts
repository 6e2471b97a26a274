/** Orbit-camera math for the point-cloud view.
 *
 * The orbit camera is a purely client-side viewing transform; it is
 * independent of the fixed service camera that drag pixels refer to.
 */

export type Vec3 = [number, number, number];

export interface OrbitParams {
  /** Rotation around the vertical axis, radians. */
  yaw: number;
  /** Elevation above the horizontal plane, radians, clamped to ±~89°. */
  pitch: number;
  /** Distance from the target point. */
  distance: number;
  /** Point the camera looks at. */
  target: Vec3;
  /** Vertical field of view, radians. */
  fov: number;
}

export interface Viewport {
  width: number;
  height: number;
}

const PITCH_LIMIT = Math.PI / 2 - 0.01;

export function defaultOrbit(target: Vec3 = [0, 0, 0], distance = 4): OrbitParams {
  return { yaw: 0, pitch: 0, distance, target, fov: Math.PI / 4 };
}

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function normalize(a: Vec3): Vec3 {
  const n = Math.hypot(a[0], a[1], a[2]);
  if (n === 0) {
    return [0, 0, 1];
  }
  return [a[0] / n, a[1] / n, a[2] / n];
}

/** Camera position implied by the orbit parameters. */
export function orbitEye(orbit: OrbitParams): Vec3 {
  const pitch = Math.max(-PITCH_LIMIT, Math.min(PITCH_LIMIT, orbit.pitch));
  const cx = Math.cos(pitch) * Math.sin(orbit.yaw);
  const cy = Math.sin(pitch);
  const cz = Math.cos(pitch) * Math.cos(orbit.yaw);
  const [tx, ty, tz] = orbit.target;
  return [
    tx - orbit.distance * cx,
    ty - orbit.distance * cy,
    tz - orbit.distance * cz,
  ];
}

/** Apply a mouse drag (pixels) to the orbit angles. */
export function rotateOrbit(orbit: OrbitParams, dxPx: number, dyPx: number): OrbitParams {
  const pitch = Math.max(
    -PITCH_LIMIT,
    Math.min(PITCH_LIMIT, orbit.pitch + dyPx * 0.005),
  );
  return { ...orbit, yaw: orbit.yaw + dxPx * 0.005, pitch };
}

/** Apply a scroll delta to the orbit distance (exponential zoom). */
export function zoomOrbit(orbit: OrbitParams, wheelDelta: number): OrbitParams {
  const distance = Math.max(1e-3, orbit.distance * Math.exp(wheelDelta * 1e-3));
  return { ...orbit, distance };
}

/**
 * Project world points into viewport pixels under the orbit camera.
 *
 * Returns flat xy pairs, length 2 * n; points at or behind the eye plane
 * get NaN coordinates so callers can skip them.
 */
export function projectPoints(
  orbit: OrbitParams,
  viewport: Viewport,
  positions: Float32Array,
): Float32Array {
  const eye = orbitEye(orbit);
  const forward = normalize(sub(orbit.target, eye));
  let right = normalize(cross(forward, [0, 1, 0]));
  if (!Number.isFinite(right[0]) || dot(right, right) < 1e-12) {
    right = [1, 0, 0];
  }
  const up = cross(right, forward);
  const f = viewport.height / 2 / Math.tan(orbit.fov / 2);
  const cx = viewport.width / 2;
  const cy = viewport.height / 2;
  const n = positions.length / 3;
  const out = new Float32Array(2 * n);
  for (let i = 0; i < n; i++) {
    const p: Vec3 = [
      positions[3 * i] - eye[0],
      positions[3 * i + 1] - eye[1],
      positions[3 * i + 2] - eye[2],
    ];
    const z = dot(p, forward);
    if (z <= 1e-9) {
      out[2 * i] = NaN;
      out[2 * i + 1] = NaN;
      continue;
    }
    out[2 * i] = cx + (f * dot(p, right)) / z;
    out[2 * i + 1] = cy - (f * dot(p, up)) / z;
  }
  return out;
}
