import type {
  BoxSpec,
  SceneDocument,
  ValidationIssue,
  ValidationReport,
} from "./types.js";

const TINY_VOLUME = 1e-6; // m^3, matches the service-side warning threshold

/** Client-side mirror of the service's validate_scene: same codes, so inline
 *  editor messages match what a 422 response would have said. */
export function validateScene(scene: SceneDocument): ValidationReport {
  const errors: ValidationIssue[] = [];
  const warnings: ValidationIssue[] = [];

  const categoryIds = new Set<number>();
  for (const cat of scene.categories) {
    if (categoryIds.has(cat.id)) {
      errors.push(issue("DUPLICATE_CATEGORY_ID", null, `category id ${cat.id} reused`));
    }
    categoryIds.add(cat.id);
  }
  const maxId = Math.max(-1, ...scene.categories.map((c) => c.id));
  if (categoryIds.size !== maxId + 1 || (maxId >= 0 && !categoryIds.has(0))) {
    errors.push(issue("NONCONTIGUOUS_CATEGORY_IDS", null, "category ids must be dense from 0"));
  }
  const zero = scene.categories.find((c) => c.id === 0);
  if (zero && zero.name !== "void" && zero.name !== "empty") {
    warnings.push(issue("RESERVED_CATEGORY", null, `category 0 is "${zero.name}", expected void/empty`));
  }

  const seenIds = new Set<string>();
  for (const obj of scene.objects) {
    if (seenIds.has(obj.object_id)) {
      errors.push(issue("DUPLICATE_OBJECT_ID", obj.object_id, "object_id reused"));
    }
    seenIds.add(obj.object_id);
    if (!categoryIds.has(obj.category_id)) {
      errors.push(issue("UNKNOWN_CATEGORY", obj.object_id, `category_id ${obj.category_id} not in table`));
    }
    if (obj.boxes.length === 0) {
      errors.push(issue("EMPTY_BOXES", obj.object_id, "object has no boxes"));
    }
    for (const box of obj.boxes) {
      checkBox(box, obj.object_id, errors, warnings);
    }
  }
  return { errors, warnings };
}

function checkBox(
  box: BoxSpec,
  objectId: string,
  errors: ValidationIssue[],
  warnings: ValidationIssue[],
): void {
  const fields = [...box.center, ...box.half_extents];
  if (!fields.every(Number.isFinite)) {
    errors.push(issue("NONFINITE", objectId, "center/half_extents must be finite"));
    return;
  }
  if (box.half_extents.some((h) => h <= 0)) {
    errors.push(issue("DEGENERATE_BOX", objectId, "half extents must be positive"));
  }
  const [w, x, y, z] = box.rotation_quat;
  const norm = Math.hypot(w, x, y, z);
  if (!Number.isFinite(norm) || norm < 1e-9) {
    errors.push(issue("BAD_QUATERNION", objectId, "rotation quaternion has near-zero norm"));
  }
  const volume = 8 * box.half_extents[0] * box.half_extents[1] * box.half_extents[2];
  if (volume > 0 && volume < TINY_VOLUME) {
    warnings.push(issue("TINY_BOX", objectId, `box volume ${volume} below ${TINY_VOLUME}`));
  }
}

function issue(code: string, object_id: string | null, message: string): ValidationIssue {
  return { code, object_id, message };
}
