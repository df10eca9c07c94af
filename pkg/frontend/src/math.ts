import type { Quat, Vec3 } from "./types.js";

/** Authoring-only math: enough vector/quaternion support to place boxes and
 *  camera keyframes. All rendering math stays server-side. */

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(v: Vec3): number {
  return Math.hypot(v[0], v[1], v[2]);
}

export function normalized(v: Vec3): Vec3 {
  const n = norm(v);
  return [v[0] / n, v[1] / n, v[2] / n];
}

export function quatFromYaw(yawRadians: number): Quat {
  // rotation about world +z
  return [Math.cos(yawRadians / 2), 0, 0, Math.sin(yawRadians / 2)];
}

export function normalizeQuat(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export class LookAtError extends Error {
  readonly code = "DEGENERATE_LOOKAT";
}

/** World-from-camera quaternion with camera z toward the target and camera y
 *  opposing upHint. Same convention the service expects in poses. */
export function lookAtQuat(eye: Vec3, target: Vec3, upHint: Vec3 = [0, 0, 1]): Quat {
  const toTarget = sub(target, eye);
  if (norm(toTarget) < 1e-9) {
    throw new LookAtError("target coincides with eye");
  }
  const forward = normalized(toTarget);
  let right = cross(forward, upHint);
  if (norm(right) < 1e-9) {
    throw new LookAtError("up hint parallel to view direction");
  }
  right = normalized(right);
  const down = cross(forward, right);
  // columns of world-from-camera: x=right, y=down, z=forward
  return quatFromMatrix([
    [right[0], down[0], forward[0]],
    [right[1], down[1], forward[1]],
    [right[2], down[2], forward[2]],
  ]);
}

function quatFromMatrix(m: number[][]): Quat {
  const tr = m[0]![0]! + m[1]![1]! + m[2]![2]!;
  let w: number, x: number, y: number, z: number;
  if (tr > 0) {
    const s = Math.sqrt(tr + 1.0) * 2;
    w = 0.25 * s;
    x = (m[2]![1]! - m[1]![2]!) / s;
    y = (m[0]![2]! - m[2]![0]!) / s;
    z = (m[1]![0]! - m[0]![1]!) / s;
  } else if (m[0]![0]! > m[1]![1]! && m[0]![0]! > m[2]![2]!) {
    const s = Math.sqrt(1.0 + m[0]![0]! - m[1]![1]! - m[2]![2]!) * 2;
    w = (m[2]![1]! - m[1]![2]!) / s;
    x = 0.25 * s;
    y = (m[0]![1]! + m[1]![0]!) / s;
    z = (m[0]![2]! + m[2]![0]!) / s;
  } else if (m[1]![1]! > m[2]![2]!) {
    const s = Math.sqrt(1.0 + m[1]![1]! - m[0]![0]! - m[2]![2]!) * 2;
    w = (m[0]![2]! - m[2]![0]!) / s;
    x = (m[0]![1]! + m[1]![0]!) / s;
    y = 0.25 * s;
    z = (m[1]![2]! + m[2]![1]!) / s;
  } else {
    const s = Math.sqrt(1.0 + m[2]![2]! - m[0]![0]! - m[1]![1]!) * 2;
    w = (m[1]![0]! - m[0]![1]!) / s;
    x = (m[0]![2]! + m[2]![0]!) / s;
    y = (m[1]![2]! + m[2]![1]!) / s;
    z = 0.25 * s;
  }
  return normalizeQuat([w, x, y, z]);
}
