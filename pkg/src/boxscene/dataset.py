"""Training-pair pipeline: annotated source scenes in, (scene, trajectory,
proxy maps, prompt) records out, with quality filtering and a deterministic
manifest.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .bbs import (
    BoundingBoxScene,
    Category,
    Obb,
    SceneError,
    SceneObject,
    SHELL_CATEGORY_NAMES,
    scene_bounds,
    validate_scene,
)
from .camera import CameraTrajectory, Intrinsics, Pose, trajectory_from_dict
from .geometry import Quat, Ray, Vec3, ray_obb_intersect
from .render import RenderConfig, build_bvh, export_bbi, render_bbi

BASE_PROMPT = "This is one view of a room."


@dataclass(frozen=True)
class SourceBox:
    category_name: str
    box: Obb
    group_id: Optional[str] = None  # boxes sharing a group form one union object


@dataclass(frozen=True)
class SourceSceneRecord:
    scene_id: str
    boxes: tuple[SourceBox, ...]
    trajectory: CameraTrajectory
    photo_paths: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class FilterRules:
    max_extent_m: float = 15.0
    min_frames: int = 20
    require_bounded: bool = True
    category_whitelist: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.max_extent_m <= 0:
            raise ValueError("max_extent_m must be positive")

    @staticmethod
    def from_dict(d: dict) -> "FilterRules":
        return FilterRules(
            max_extent_m=float(d.get("max_extent_m", 15.0)),
            min_frames=int(d.get("min_frames", 20)),
            require_bounded=bool(d.get("require_bounded", True)),
            category_whitelist=frozenset(d.get("category_whitelist", [])),
        )


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reasons: tuple[str, ...] = ()


def record_from_dict(doc: dict) -> SourceSceneRecord:
    boxes = []
    for b in doc.get("boxes", []):
        boxes.append(
            SourceBox(
                category_name=str(b["category_name"]),
                box=Obb(
                    Vec3(*[float(v) for v in b["center"]]),
                    Vec3(*[float(v) for v in b["half_extents"]]),
                    Quat.normalize(*[float(v) for v in b.get("rotation_quat", [1, 0, 0, 0])]),
                ),
                group_id=b.get("group_id"),
            )
        )
    try:
        traj = trajectory_from_dict(doc)
    except (KeyError, ValueError, TypeError) as exc:
        raise SceneError("MALFORMED_POSE", f"scene {doc.get('scene_id')}: {exc}") from exc
    return SourceSceneRecord(
        scene_id=str(doc["scene_id"]),
        boxes=tuple(boxes),
        trajectory=traj,
        photo_paths={str(k): str(v) for k, v in doc.get("photo_paths", {}).items()},
    )


def ingest_source_scene(
    record: SourceSceneRecord,
    category_map: dict[str, int],
    categories: Sequence[Category],
) -> tuple[BoundingBoxScene, CameraTrajectory, list[str]]:
    """Map source boxes onto the target category table.

    Boxes sharing a group_id become one union object; unmapped categories are
    dropped with a warning rather than failing the scene.
    """
    warnings: list[str] = []
    groups: dict[str, list[SourceBox]] = {}
    order: list[str] = []
    for i, sb in enumerate(record.boxes):
        key = sb.group_id or f"__solo_{i}"
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(sb)

    objects: list[SceneObject] = []
    for key in order:
        members = groups[key]
        name = members[0].category_name
        if name not in category_map:
            warnings.append(f"dropped {len(members)} box(es) with unmapped category {name!r}")
            continue
        oid = key if not key.startswith("__solo_") else f"{name}_{len(objects):04d}"
        objects.append(
            SceneObject(
                object_id=oid,
                category_id=category_map[name],
                boxes=tuple(m.box for m in members),
            )
        )
    if not objects:
        raise SceneError("NO_MAPPABLE_OBJECTS", f"scene {record.scene_id}: no usable boxes")
    scene = BoundingBoxScene(
        scene_id=record.scene_id, categories=tuple(categories), objects=tuple(objects)
    )
    return scene, record.trajectory, warnings


def _probe_bounded(scene: BoundingBoxScene, traj: CameraTrajectory) -> bool:
    """Bounded-room test: from the trajectory centroid, at least 5 of the 6
    axis-aligned probe rays must first hit a shell-category object."""
    shell_ids = {c.id for c in scene.categories if c.name in SHELL_CATEGORY_NAMES}
    n = len(traj.poses)
    cx = sum(p.position.x for p in traj.poses) / n
    cy = sum(p.position.y for p in traj.poses) / n
    cz = sum(p.position.z for p in traj.poses) / n
    centroid = Vec3(cx, cy, cz)
    hits = 0
    for d in (Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0),
              Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)):
        ray = Ray(centroid, d)
        best_t = math.inf
        best_cat = None
        for obj in scene.objects:
            for box in obj.boxes:
                hit = ray_obb_intersect(ray, box)
                if hit is not None and hit.t_near < best_t:
                    best_t = hit.t_near
                    best_cat = obj.category_id
        if best_cat is not None and best_cat in shell_ids:
            hits += 1
    return hits >= 5


def filter_scene(
    scene: BoundingBoxScene, traj: CameraTrajectory, rules: FilterRules
) -> FilterDecision:
    reasons: list[str] = []
    bounds = scene_bounds(scene)
    ext = bounds.extent()
    if max(ext.x, ext.y, ext.z) > rules.max_extent_m:
        reasons.append("EXCESSIVE_EXTENT")
    if len(traj) < rules.min_frames:
        reasons.append("TOO_FEW_FRAMES")
    if rules.require_bounded and not _probe_bounded(scene, traj):
        reasons.append("UNBOUNDED")
    if rules.category_whitelist:
        names = {c.name for c in scene.categories}
        used = {
            name
            for name in names
            for o in scene.objects
            if scene.category_by_id()[o.category_id].name == name
        }
        bad = used - rules.category_whitelist - SHELL_CATEGORY_NAMES - {"void"}
        if bad:
            reasons.append("DISALLOWED_CATEGORY")
    return FilterDecision(keep=not reasons, reasons=tuple(reasons))


@dataclass
class DatasetManifest:
    dataset_id: str
    base_prompt: str
    seed: int
    entries: list[dict]
    rejected: list[dict]
    errors: list[dict]
    intrinsics_note: str = "default 60 deg vertical fov unless the source supplied intrinsics"

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "base_prompt": self.base_prompt,
            "seed": self.seed,
            "entries": self.entries,
            "rejected": self.rejected,
            "errors": self.errors,
            "intrinsics_note": self.intrinsics_note,
        }


def manifest_hash(manifest: DatasetManifest) -> str:
    blob = json.dumps(manifest.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def build_dataset(
    records: Sequence[SourceSceneRecord],
    rules: FilterRules,
    category_map: dict[str, int],
    categories: Sequence[Category],
    cfg: RenderConfig,
    out_dir: Union[str, Path],
    seed: int = 0,
    base_prompt: str = BASE_PROMPT,
) -> DatasetManifest:
    """Render and export proxy maps for every kept scene and frame.

    Deterministic: scenes processed in scene_id order, manifest written last,
    identical inputs and seed yield a byte-identical output tree. Per-scene
    failures are collected and the pipeline continues; it raises only when
    every scene fails.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries: list[dict] = []
    rejected: list[dict] = []
    errors: list[dict] = []
    seen: set[tuple[str, str]] = set()

    for record in sorted(records, key=lambda r: r.scene_id):
        try:
            scene, traj, warnings = ingest_source_scene(record, category_map, categories)
            report = validate_scene(scene)
            if not report.ok:
                errors.append(
                    {"scene_id": record.scene_id, "code": report.errors[0][0],
                     "message": report.errors[0][2]}
                )
                continue
            decision = filter_scene(scene, traj, rules)
            if not decision.keep:
                rejected.append({"scene_id": record.scene_id, "reasons": list(decision.reasons)})
                continue
            accel = build_bvh(scene)
            scene_dir = out / record.scene_id
            for fid, pose in zip(traj.frame_ids, traj.poses):
                if (record.scene_id, fid) in seen:
                    continue
                seen.add((record.scene_id, fid))
                bbi = render_bbi(scene, accel, traj.intrinsics, pose, cfg, frame_id=fid)
                paths = export_bbi(bbi, categories, traj.intrinsics, pose, cfg, scene_dir, fid)
                entry = {
                    "scene_id": record.scene_id,
                    "frame_id": fid,
                    "bbi_paths": {k: f"{record.scene_id}/{v}" for k, v in paths.items()},
                    "pose": {
                        "position": list(pose.position.as_tuple()),
                        "rotation_quat": list(pose.orientation.as_tuple()),
                    },
                }
                if fid in record.photo_paths:
                    entry["photo_path"] = record.photo_paths[fid]
                entries.append(entry)
        except SceneError as exc:
            errors.append({"scene_id": record.scene_id, "code": exc.code, "message": str(exc)})

    if records and not entries and not rejected:
        raise SceneError("ALL_SCENES_FAILED", f"{len(errors)} scene(s) failed, none kept")

    content_key = hashlib.sha256(
        json.dumps([e for e in entries], sort_keys=True).encode() + str(seed).encode()
    ).hexdigest()[:16]
    manifest = DatasetManifest(
        dataset_id=f"bbs-{content_key}",
        base_prompt=base_prompt,
        seed=seed,
        entries=entries,
        rejected=rejected,
        errors=errors,
    )
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True)
    )
    return manifest


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    d = json.loads(Path(path).read_text())
    return DatasetManifest(
        dataset_id=d["dataset_id"],
        base_prompt=d["base_prompt"],
        seed=int(d["seed"]),
        entries=d["entries"],
        rejected=d.get("rejected", []),
        errors=d.get("errors", []),
        intrinsics_note=d.get("intrinsics_note", ""),
    )
