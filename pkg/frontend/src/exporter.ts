import { EditorDocument } from "./document.js";
import type { Intrinsics, SceneDocument, TrajectoryDocument, ValidationReport } from "./types.js";
import { DEFAULT_INTRINSICS } from "./types.js";
import { validateScene } from "./validate.js";

export class ExportBlockedError extends Error {
  constructor(readonly report: ValidationReport) {
    super(`export blocked: ${report.errors.length} validation error(s)`);
  }
}

export interface ExportedFiles {
  /** Scene JSON, loadable by the service and the CLI `validate`/`render`. */
  scene: string;
  /** Trajectory JSON for the CLI `render` command; absent without keyframes. */
  trajectory: string | null;
}

export function exportDocument(
  doc: EditorDocument,
  intrinsics: Intrinsics = DEFAULT_INTRINSICS,
): ExportedFiles {
  if (!doc.isValid) {
    throw new ExportBlockedError(doc.report);
  }
  const trajectory: TrajectoryDocument | null = doc.keyframes.length
    ? { intrinsics, frames: [...doc.keyframes] }
    : null;
  return {
    scene: JSON.stringify(doc.scene, null, 2),
    trajectory: trajectory ? JSON.stringify(trajectory, null, 2) : null,
  };
}

export function importDocument(sceneJson: string, trajectoryJson?: string): EditorDocument {
  const scene = JSON.parse(sceneJson) as SceneDocument;
  const report = validateScene(scene);
  if (report.errors.length) {
    throw new ExportBlockedError(report);
  }
  const doc = new EditorDocument(scene);
  if (trajectoryJson) {
    const traj = JSON.parse(trajectoryJson) as TrajectoryDocument;
    doc.keyframes = traj.frames.map((f) => ({ ...f }));
  }
  return doc;
}
