import { quatFromYaw } from "./math.js";
import type {
  BoxSpec,
  Category,
  Keyframe,
  Quat,
  SceneDocument,
  ValidationReport,
  Vec3,
} from "./types.js";
import { validateScene } from "./validate.js";

interface Command {
  label: string;
  do(doc: EditorDocument): void;
  undo(doc: EditorDocument): void;
}

export interface BoxPlacement {
  center: Vec3;
  half_extents: Vec3;
  yaw?: number;
  /** Full orientation entry; overrides yaw when present. */
  rotation_quat?: Quat;
}

export interface TransformPatch {
  center?: Vec3;
  half_extents?: Vec3;
  yaw?: number;
  rotation_quat?: Quat;
}

function toQuat(p: { yaw?: number; rotation_quat?: Quat }): Quat {
  if (p.rotation_quat) return p.rotation_quat;
  return quatFromYaw(p.yaw ?? 0);
}

function cloneBox(b: BoxSpec): BoxSpec {
  return {
    center: [...b.center],
    half_extents: [...b.half_extents],
    rotation_quat: [...b.rotation_quat],
  };
}

function cloneScene(s: SceneDocument): SceneDocument {
  return JSON.parse(JSON.stringify(s)) as SceneDocument;
}

/** Single working scene plus selection, camera keyframes, and an undo/redo
 *  history of commands. Every mutation re-validates; the latest report is
 *  always available for inline display, and `revision` increases with every
 *  applied, undone, or redone edit so preview requests can be sequenced. */
export class EditorDocument {
  scene: SceneDocument;
  selection = new Set<string>();
  keyframes: Keyframe[] = [];
  dirty = false;
  revision = 0;
  report: ValidationReport;

  private undoStack: Command[] = [];
  private redoStack: Command[] = [];

  constructor(scene: SceneDocument) {
    this.scene = cloneScene(scene);
    this.report = validateScene(this.scene);
  }

  static empty(sceneId: string, categories: Category[]): EditorDocument {
    return new EditorDocument({
      version: "1.0",
      scene_id: sceneId,
      categories,
      objects: [],
    });
  }

  get isValid(): boolean {
    return this.report.errors.length === 0;
  }

  addBox(objectId: string, categoryId: number, placement: BoxPlacement): void {
    const created = {
      object_id: objectId,
      category_id: categoryId,
      boxes: [
        {
          center: [...placement.center],
          half_extents: [...placement.half_extents],
          rotation_quat: toQuat(placement),
        } as BoxSpec,
      ],
    };
    this.apply({
      label: `add ${objectId}`,
      do: (doc) => {
        doc.scene.objects.push(created);
        doc.selection = new Set([objectId]);
      },
      undo: (doc) => {
        doc.scene.objects = doc.scene.objects.filter((o) => o.object_id !== objectId);
        doc.selection.delete(objectId);
      },
    });
  }

  /** Extend an existing object's union — how L- and S-shapes are built. */
  addBoxToUnion(objectId: string, placement: BoxPlacement): void {
    this.mustFind(objectId);
    const box: BoxSpec = {
      center: [...placement.center],
      half_extents: [...placement.half_extents],
      rotation_quat: toQuat(placement),
    };
    // resolve by id at execution time: redo must hit the live object, not a
    // reference that an interleaved delete/add replay may have replaced
    this.apply({
      label: `extend ${objectId}`,
      do: (doc) => doc.mustFind(objectId).boxes.push(box),
      undo: (doc) => doc.mustFind(objectId).boxes.pop(),
    });
  }

  transformBox(objectId: string, boxIndex: number, patch: TransformPatch): void {
    const obj = this.mustFind(objectId);
    const box = obj.boxes[boxIndex];
    if (!box) throw new Error(`no box ${boxIndex} on ${objectId}`);
    const before = cloneBox(box);
    const after: BoxSpec = {
      center: patch.center ? [...patch.center] : before.center,
      half_extents: patch.half_extents ? [...patch.half_extents] : before.half_extents,
      rotation_quat:
        patch.rotation_quat || patch.yaw !== undefined ? toQuat(patch) : before.rotation_quat,
    };
    this.apply({
      label: `transform ${objectId}`,
      do: (doc) => Object.assign(doc.mustFind(objectId).boxes[boxIndex]!, cloneBox(after)),
      undo: (doc) => Object.assign(doc.mustFind(objectId).boxes[boxIndex]!, cloneBox(before)),
    });
  }

  setCategory(objectId: string, categoryId: number): void {
    const before = this.mustFind(objectId).category_id;
    this.apply({
      label: `recategorize ${objectId}`,
      do: (doc) => {
        doc.mustFind(objectId).category_id = categoryId;
      },
      undo: (doc) => {
        doc.mustFind(objectId).category_id = before;
      },
    });
  }

  deleteObject(objectId: string): void {
    const index = this.scene.objects.findIndex((o) => o.object_id === objectId);
    if (index < 0) throw new Error(`unknown object ${objectId}`);
    const removed = this.scene.objects[index]!;
    this.apply({
      label: `delete ${objectId}`,
      do: (doc) => {
        doc.scene.objects.splice(index, 1);
        doc.selection.delete(objectId);
      },
      undo: (doc) => doc.scene.objects.splice(index, 0, removed),
    });
  }

  /** Insert or replace the keyframe carrying this frame_id. */
  setKeyframe(frame: Keyframe): void {
    const index = this.keyframes.findIndex((k) => k.frame_id === frame.frame_id);
    const before = index >= 0 ? this.keyframes[index] : undefined;
    this.apply({
      label: `keyframe ${frame.frame_id}`,
      do: (doc) => {
        if (index >= 0) doc.keyframes[index] = frame;
        else doc.keyframes.push(frame);
      },
      undo: (doc) => {
        if (before) doc.keyframes[index] = before;
        else doc.keyframes.pop();
      },
    });
  }

  select(objectIds: Iterable<string>): void {
    this.selection = new Set(objectIds);
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  get canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  undo(): void {
    const cmd = this.undoStack.pop();
    if (!cmd) return;
    cmd.undo(this);
    this.redoStack.push(cmd);
    this.afterMutation();
  }

  redo(): void {
    const cmd = this.redoStack.pop();
    if (!cmd) return;
    cmd.do(this);
    this.undoStack.push(cmd);
    this.afterMutation();
  }

  private apply(cmd: Command): void {
    cmd.do(this);
    this.undoStack.push(cmd);
    this.redoStack = []; // a fresh edit forks history
    this.afterMutation();
  }

  private afterMutation(): void {
    this.revision += 1;
    this.dirty = true;
    this.report = validateScene(this.scene);
  }

  private mustFind(objectId: string) {
    const obj = this.scene.objects.find((o) => o.object_id === objectId);
    if (!obj) throw new Error(`unknown object ${objectId}`);
    return obj;
  }
}
