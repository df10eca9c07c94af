import { EditorDocument } from "../src/document.js";
import { lookAtQuat } from "../src/math.js";
import type { Category, Keyframe } from "../src/types.js";

export const CATEGORIES: Category[] = [
  { id: 0, name: "void", color: [0, 0, 0] },
  { id: 1, name: "wall", color: [148, 68, 54] },
  { id: 2, name: "floor", color: [112, 128, 144] },
  { id: 3, name: "ceiling", color: [222, 222, 210] },
  { id: 4, name: "table", color: [170, 120, 60] },
  { id: 5, name: "chair", color: [60, 120, 170] },
  { id: 6, name: "sofa", color: [120, 170, 60] },
];

export const WALL = 1;
export const FLOOR = 2;
export const CEILING = 3;
export const TABLE = 4;
export const CHAIR = 5;
export const SOFA = 6;

/** 6x6x3 m room: four walls, floor, ceiling, and three furniture objects,
 *  one of them an L-shaped two-box union. */
export function authorRoom(doc: EditorDocument): EditorDocument {
  const t = 0.1; // shell thickness
  doc.addBox("floor_000", FLOOR, { center: [0, 0, -t], half_extents: [3, 3, t] });
  doc.addBox("ceiling_000", CEILING, { center: [0, 0, 3 + t], half_extents: [3, 3, t] });
  doc.addBox("wall_000", WALL, { center: [-3 - t, 0, 1.5], half_extents: [t, 3, 1.5] });
  doc.addBox("wall_001", WALL, { center: [3 + t, 0, 1.5], half_extents: [t, 3, 1.5] });
  doc.addBox("wall_002", WALL, { center: [0, -3 - t, 1.5], half_extents: [3, t, 1.5] });
  doc.addBox("wall_003", WALL, { center: [0, 3 + t, 1.5], half_extents: [3, t, 1.5] });

  // L-shaped desk: two perpendicular slabs sharing a corner
  doc.addBox("desk_000", TABLE, { center: [-1.5, -2.0, 0.4], half_extents: [1.0, 0.4, 0.4] });
  doc.addBoxToUnion("desk_000", { center: [-2.1, -1.0, 0.4], half_extents: [0.4, 1.4, 0.4] });

  doc.addBox("chair_000", CHAIR, {
    center: [-1.2, -1.0, 0.35],
    half_extents: [0.25, 0.25, 0.35],
    yaw: Math.PI / 4,
  });
  doc.addBox("sofa_000", SOFA, { center: [1.8, 1.8, 0.35], half_extents: [1.2, 0.5, 0.35] });
  return doc;
}

export function centerKeyframe(frameId = "frame_00000"): Keyframe {
  const eye: [number, number, number] = [2.0, 2.0, 1.4];
  return {
    frame_id: frameId,
    position: eye,
    rotation_quat: lookAtQuat(eye, [-1.5, -1.5, 0.6]),
  };
}

export function emptyDoc(sceneId = "editor_room"): EditorDocument {
  return EditorDocument.empty(sceneId, CATEGORIES);
}
