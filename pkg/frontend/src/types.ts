/** Shared document shapes: these mirror the JSON schemas accepted by the
 *  boxscene service and CLI, so exported files load there unchanged. */

export type Vec3 = [number, number, number];

/** Unit quaternion as [w, x, y, z], world-from-box / world-from-camera. */
export type Quat = [number, number, number, number];

export interface BoxSpec {
  center: Vec3;
  half_extents: Vec3;
  rotation_quat: Quat;
}

export interface SceneObject {
  object_id: string;
  category_id: number;
  boxes: BoxSpec[];
}

export interface Category {
  id: number;
  name: string;
  color: [number, number, number];
}

export interface SceneDocument {
  version: string;
  scene_id: string;
  categories: Category[];
  objects: SceneObject[];
  prompt?: string;
}

export interface Keyframe {
  frame_id: string;
  position: Vec3;
  rotation_quat: Quat;
}

export interface Intrinsics {
  width: number;
  height: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

export interface TrajectoryDocument {
  intrinsics: Intrinsics;
  frames: Keyframe[];
}

export interface ValidationIssue {
  code: string;
  object_id: string | null;
  message: string;
}

export interface ValidationReport {
  errors: ValidationIssue[];
  warnings: ValidationIssue[];
}

export type RenderOutput = "semantic_png" | "depth_png" | "preview_png";

/** Base64-encoded PNGs keyed by output name, as returned by POST /v1/render. */
export interface RenderImages {
  semantic_png?: string;
  depth_png?: string;
  preview_png?: string;
}

export interface RenderResponse {
  scene_id: string;
  frame_id: string;
  images: RenderImages;
}

export const DEFAULT_INTRINSICS: Intrinsics = (() => {
  const width = 768;
  const height = 512;
  const f = height / 2 / Math.tan((60 * Math.PI) / 180 / 2);
  return { width, height, fx: f, fy: f, cx: width / 2, cy: height / 2 };
})();
