"""Bounding-box scene model: categories, box-union objects, validation,
voxelization, and the JSON / binary interchange formats.

A scene is a flat list of objects; room shells (walls, floor, ceiling,
doors, windows) are ordinary objects with reserved category names, so the
renderer has a single code path.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .geometry import Aabb, Obb, Quat, Vec3, aabb_of_obb, obb_overlaps_aabb, point_in_obb

SCHEMA_VERSION = "1.0"
VOXEL_MAGIC = b"BBSVOX01"
DEFAULT_VOXEL_UNIT = 0.2
DEFAULT_GRID_CELL_CAP = 2**27

SHELL_CATEGORY_NAMES = frozenset({"wall", "floor", "ceiling", "door", "window"})


class SceneError(Exception):
    """Raised for operations that cannot proceed; carries a stable code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    color: tuple[int, int, int]


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    category_id: int
    boxes: tuple[Obb, ...]

    def contains_point(self, p: Vec3) -> bool:
        """Union semantics: inside any member box counts as inside."""
        return any(point_in_obb(p, b) for b in self.boxes)

    def bounds(self) -> Aabb:
        out = aabb_of_obb(self.boxes[0])
        for b in self.boxes[1:]:
            out = out.union(aabb_of_obb(b))
        return out


@dataclass(frozen=True)
class BoundingBoxScene:
    scene_id: str
    categories: tuple[Category, ...]
    objects: tuple[SceneObject, ...]
    version: str = SCHEMA_VERSION

    def category_by_id(self) -> dict[int, Category]:
        return {c.id: c for c in self.categories}

    def object_by_id(self) -> dict[str, SceneObject]:
        return {o.object_id: o for o in self.objects}


@dataclass
class ValidationReport:
    errors: list[tuple[str, str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str, str]] = field(default_factory=list)

    def error(self, code: str, object_id: str, message: str) -> None:
        self.errors.append((code, object_id, message))

    def warn(self, code: str, object_id: str, message: str) -> None:
        self.warnings.append((code, object_id, message))

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "errors": [{"code": c, "object_id": o, "message": m} for c, o, m in self.errors],
            "warnings": [{"code": c, "object_id": o, "message": m} for c, o, m in self.warnings],
        }


@dataclass(frozen=True)
class VoxelGrid:
    origin: Vec3
    unit: float
    dims: tuple[int, int, int]
    cells: np.ndarray  # uint16, shape dims, row-major (x fastest in exports)

    def __post_init__(self):
        if self.unit <= 0:
            raise ValueError("voxel unit must be positive")
        if tuple(self.cells.shape) != tuple(self.dims):
            raise ValueError("cells shape does not match dims")

    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def cell_center(self, ix: int, iy: int, iz: int) -> Vec3:
        return Vec3(
            self.origin.x + (ix + 0.5) * self.unit,
            self.origin.y + (iy + 0.5) * self.unit,
            self.origin.z + (iz + 0.5) * self.unit,
        )


# ---------------------------------------------------------------------------
# validation

def validate_scene(scene: Union[BoundingBoxScene, dict]) -> ValidationReport:
    """Validate a typed scene or a raw decoded JSON document.

    Errors are data, not exceptions: the report lists every violation with a
    stable code so tools and the HTTP service can surface all of them at once.
    """
    if isinstance(scene, dict):
        return _validate_document(scene)
    report = ValidationReport()
    _check_categories(
        [{"id": c.id, "name": c.name, "color": list(c.color)} for c in scene.categories], report
    )
    known_ids = {c.id for c in scene.categories}
    seen_objects: set[str] = set()
    for obj in scene.objects:
        if obj.object_id in seen_objects:
            report.error("DUPLICATE_OBJECT_ID", obj.object_id, "object_id not unique")
        seen_objects.add(obj.object_id)
        if obj.category_id not in known_ids:
            report.error(
                "UNKNOWN_CATEGORY", obj.object_id,
                f"category_id {obj.category_id} not in category table",
            )
        if not obj.boxes:
            report.error("EMPTY_BOXES", obj.object_id, "object has no boxes")
        for b in obj.boxes:
            _warn_tiny_box(obj.object_id, b.half_extents.as_tuple(), report)
    _warn_contained_objects(scene, report)
    return report


def _validate_document(doc: dict) -> ValidationReport:
    report = ValidationReport()
    cats = doc.get("categories", [])
    _check_categories(cats, report)
    known_ids = {c.get("id") for c in cats if isinstance(c, dict)}
    seen_objects: set[str] = set()
    for obj in doc.get("objects", []):
        oid = str(obj.get("object_id", "?"))
        if oid in seen_objects:
            report.error("DUPLICATE_OBJECT_ID", oid, "object_id not unique")
        seen_objects.add(oid)
        if obj.get("category_id") not in known_ids:
            report.error("UNKNOWN_CATEGORY", oid, f"category_id {obj.get('category_id')} unknown")
        boxes = obj.get("boxes", [])
        if not boxes:
            report.error("EMPTY_BOXES", oid, "object has no boxes")
        for b in boxes:
            he = b.get("half_extents", [0, 0, 0])
            if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in he):
                report.error("NONFINITE", oid, f"non-finite half_extents {he}")
                continue
            if min(he) <= 0:
                report.error("DEGENERATE_BOX", oid, f"half_extents must be positive, got {he}")
            else:
                _warn_tiny_box(oid, tuple(he), report)
            center = b.get("center", [0, 0, 0])
            if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in center):
                report.error("NONFINITE", oid, f"non-finite center {center}")
            q = b.get("rotation_quat", [1, 0, 0, 0])
            n = math.sqrt(sum(float(v) ** 2 for v in q)) if len(q) == 4 else 0.0
            if n < 1e-9:
                report.error("BAD_QUATERNION", oid, f"degenerate rotation_quat {q}")
    return report


def _check_categories(cats: list, report: ValidationReport) -> None:
    ids = [c.get("id") if isinstance(c, dict) else c.id for c in cats]
    if len(set(ids)) != len(ids):
        report.error("DUPLICATE_CATEGORY_ID", "", "category ids not unique")
    if ids and sorted(ids) != list(range(len(ids))):
        report.error("NONCONTIGUOUS_CATEGORY_IDS", "", f"ids must be dense from 0, got {sorted(ids)}")
    for c in cats:
        name = c.get("name") if isinstance(c, dict) else c.name
        cid = c.get("id") if isinstance(c, dict) else c.id
        if cid == 0 and name not in ("void", "empty", "void/empty"):
            report.warn("RESERVED_CATEGORY", "", f"category 0 should be void/empty, got {name!r}")


def _warn_tiny_box(oid: str, he: tuple, report: ValidationReport) -> None:
    vol = 8.0 * he[0] * he[1] * he[2]
    if 0 < vol < 1e-6:
        report.warn("TINY_BOX", oid, f"box volume {vol:.2e} m^3 below 1e-6")


def _warn_contained_objects(scene: BoundingBoxScene, report: ValidationReport) -> None:
    bounds = [(o.object_id, o.bounds()) for o in scene.objects if o.boxes]
    for oid, b in bounds:
        for other_id, ob in bounds:
            if other_id == oid:
                continue
            if (
                ob.min.x <= b.min.x and ob.min.y <= b.min.y and ob.min.z <= b.min.z
                and ob.max.x >= b.max.x and ob.max.y >= b.max.y and ob.max.z >= b.max.z
            ):
                report.warn("CONTAINED_OBJECT", oid, f"fully contained in bounds of {other_id}")
                break


def object_contains_point(obj: SceneObject, p: Vec3) -> bool:
    return obj.contains_point(p)


def scene_bounds(scene: BoundingBoxScene) -> Aabb:
    if not scene.objects or not any(o.boxes for o in scene.objects):
        raise SceneError("EMPTY_SCENE", "scene has no boxes")
    bounds: Optional[Aabb] = None
    for obj in scene.objects:
        for b in obj.boxes:
            bb = aabb_of_obb(b)
            bounds = bb if bounds is None else bounds.union(bb)
    assert bounds is not None
    return bounds


def object_priority_ranks(scene: BoundingBoxScene) -> dict[str, int]:
    """Precedence at contested voxels/pixels: smaller union-Aabb volume wins,
    ties broken by object_id. Rank 0 is the strongest claim."""
    order = sorted(scene.objects, key=lambda o: (o.bounds().volume(), o.object_id))
    return {o.object_id: rank for rank, o in enumerate(order)}


# ---------------------------------------------------------------------------
# voxelization

def _grid_frame(bounds: Aabb, unit: float, cap: int) -> tuple[Vec3, tuple[int, int, int]]:
    origin = Vec3(
        math.floor(bounds.min.x / unit) * unit,
        math.floor(bounds.min.y / unit) * unit,
        math.floor(bounds.min.z / unit) * unit,
    )
    eps = 1e-9
    dims = tuple(
        max(1, int(math.ceil((hi - lo) / unit - eps)))
        for lo, hi in zip(origin.as_tuple(), bounds.max.as_tuple())
    )
    if dims[0] * dims[1] * dims[2] > cap:
        raise SceneError(
            "GRID_TOO_LARGE",
            f"grid {dims} exceeds cell cap {cap}; raise the cap or the unit",
        )
    return origin, dims  # type: ignore[return-value]


def _cell_range(origin: Vec3, dims: tuple[int, int, int], unit: float, box_bounds: Aabb):
    lo = []
    hi = []
    for axis, (o, d) in enumerate(zip(origin.as_tuple(), dims)):
        bmin = (box_bounds.min.as_tuple()[axis] - o) / unit
        bmax = (box_bounds.max.as_tuple()[axis] - o) / unit
        lo.append(max(0, int(math.floor(bmin))))
        hi.append(min(d, int(math.ceil(bmax))))
    return lo, hi


def _mark_box(
    cells: np.ndarray,
    origin: Vec3,
    unit: float,
    box: Obb,
    policy: str,
    mark: int,
    mask_out: Optional[np.ndarray] = None,
) -> None:
    dims = cells.shape
    lo, hi = _cell_range(origin, dims, unit, aabb_of_obb(box))
    if any(l >= h for l, h in zip(lo, hi)):
        return
    ix = np.arange(lo[0], hi[0])
    iy = np.arange(lo[1], hi[1])
    iz = np.arange(lo[2], hi[2])
    gx, gy, gz = np.meshgrid(ix, iy, iz, indexing="ij")
    centers = np.stack(
        [
            origin.x + (gx + 0.5) * unit,
            origin.y + (gy + 0.5) * unit,
            origin.z + (gz + 0.5) * unit,
        ],
        axis=-1,
    ).reshape(-1, 3)

    rot = np.array(box.rotation.as_matrix())
    rel = centers - np.array(box.center.as_tuple())
    he = np.array(box.half_extents.as_tuple())

    if policy == "center":
        local = rel @ rot  # rot^T applied row-wise
        inside = np.all(np.abs(local) <= he + 1e-12, axis=1)
    elif policy == "overlap":
        inside = _sat_overlap_mask(rel, rot, he, unit)
    else:
        raise ValueError(f"unknown voxel policy {policy!r}")

    inside = inside.reshape(gx.shape)
    view = cells[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    view[inside] = mark
    if mask_out is not None:
        mview = mask_out[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
        mview[inside] = True


def _sat_overlap_mask(rel: np.ndarray, rot: np.ndarray, he: np.ndarray, unit: float) -> np.ndarray:
    """Vectorized OBB-vs-cell separating-axis test.

    All cells share the same half extent (unit/2), so per-axis radii are
    constants and only the center offsets vary.
    """
    axes_a = np.eye(3)
    axes_b = rot  # columns are the box axes; rot[:, j]
    axes = [axes_a[:, i] for i in range(3)] + [axes_b[:, j] for j in range(3)]
    for i in range(3):
        for j in range(3):
            c = np.cross(axes_a[:, i], axes_b[:, j])
            if np.linalg.norm(c) > 1e-12:
                axes.append(c)
    ha = np.full(3, unit / 2.0)
    ok = np.ones(rel.shape[0], dtype=bool)
    for axis in axes:
        ra = float(np.sum(ha * np.abs(axis @ axes_a)))
        rb = float(np.sum(he * np.abs(axis @ axes_b)))
        ok &= np.abs(rel @ axis) <= ra + rb + 1e-12
    return ok


def voxelize_object(
    obj: SceneObject,
    unit: float = DEFAULT_VOXEL_UNIT,
    policy: str = "overlap",
    cell_cap: int = DEFAULT_GRID_CELL_CAP,
) -> VoxelGrid:
    """Rasterize one box-union onto a grid aligned to multiples of `unit`."""
    if unit <= 0:
        raise ValueError("unit must be positive")
    origin, dims = _grid_frame(obj.bounds(), unit, cell_cap)
    cells = np.zeros(dims, dtype=np.uint16)
    for box in obj.boxes:
        _mark_box(cells, origin, unit, box, policy, obj.category_id)
    return VoxelGrid(origin, unit, dims, cells)


def voxelize_scene(
    scene: BoundingBoxScene,
    unit: float = DEFAULT_VOXEL_UNIT,
    policy: str = "overlap",
    cell_cap: int = DEFAULT_GRID_CELL_CAP,
) -> VoxelGrid:
    """Shared grid over the whole scene; contested cells go to the object with
    the smaller union-Aabb volume (furniture beats room shells)."""
    origin, dims = _grid_frame(scene_bounds(scene), unit, cell_cap)
    cells = np.zeros(dims, dtype=np.uint16)
    ranks = object_priority_ranks(scene)
    # weakest claims first so stronger objects overwrite them
    for obj in sorted(scene.objects, key=lambda o: -ranks[o.object_id]):
        for box in obj.boxes:
            _mark_box(cells, origin, unit, box, policy, obj.category_id)
    return VoxelGrid(origin, unit, dims, cells)


def empty_scene_grid(bounds: Aabb, unit: float = DEFAULT_VOXEL_UNIT) -> VoxelGrid:
    origin, dims = _grid_frame(bounds, unit, DEFAULT_GRID_CELL_CAP)
    return VoxelGrid(origin, unit, dims, np.zeros(dims, dtype=np.uint16))


# ---------------------------------------------------------------------------
# JSON interchange

def scene_to_dict(scene: BoundingBoxScene) -> dict:
    return {
        "version": scene.version,
        "scene_id": scene.scene_id,
        "categories": [
            {"id": c.id, "name": c.name, "color": list(c.color)} for c in scene.categories
        ],
        "objects": [
            {
                "object_id": o.object_id,
                "category_id": o.category_id,
                "boxes": [
                    {
                        "center": list(b.center.as_tuple()),
                        "half_extents": list(b.half_extents.as_tuple()),
                        "rotation_quat": list(b.rotation.as_tuple()),
                    }
                    for b in o.boxes
                ],
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(doc: dict) -> BoundingBoxScene:
    report = validate_scene(doc)
    if not report.ok:
        code, oid, msg = report.errors[0]
        raise SceneError(code, f"object {oid!r}: {msg}")
    categories = tuple(
        Category(int(c["id"]), str(c["name"]), tuple(int(v) for v in c["color"]))
        for c in doc.get("categories", [])
    )
    objects = tuple(
        SceneObject(
            object_id=str(o["object_id"]),
            category_id=int(o["category_id"]),
            boxes=tuple(
                Obb(
                    center=Vec3(*[float(v) for v in b["center"]]),
                    half_extents=Vec3(*[float(v) for v in b["half_extents"]]),
                    rotation=Quat.normalize(*[float(v) for v in b["rotation_quat"]]),
                )
                for b in o["boxes"]
            ),
        )
        for o in doc.get("objects", [])
    )
    return BoundingBoxScene(
        scene_id=str(doc.get("scene_id", "")),
        categories=categories,
        objects=objects,
        version=str(doc.get("version", SCHEMA_VERSION)),
    )


def save_scene(scene: BoundingBoxScene, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2, sort_keys=True))


def load_scene(path: Union[str, Path]) -> BoundingBoxScene:
    return scene_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# voxel grid binary interchange

def save_voxel_grid(
    grid: VoxelGrid, path: Union[str, Path], categories: Iterable[Category] = ()
) -> None:
    """Binary layout: 8-byte magic, u32-LE header length, JSON header,
    then row-major (x, y, z C-order) little-endian cell values."""
    max_id = int(grid.cells.max()) if grid.cells.size else 0
    dtype = "u1" if max_id < 256 else "<u2"
    header = {
        "origin": list(grid.origin.as_tuple()),
        "unit": grid.unit,
        "dims": list(grid.dims),
        "dtype": dtype,
        "categories": [
            {"id": c.id, "name": c.name, "color": list(c.color)} for c in categories
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(VOXEL_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(grid.cells).astype(dtype).tobytes())


def load_voxel_grid(path: Union[str, Path]) -> tuple[VoxelGrid, list[Category]]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != VOXEL_MAGIC:
            raise SceneError("BAD_MAGIC", f"expected {VOXEL_MAGIC!r}, got {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        dims = tuple(int(v) for v in header["dims"])
        cells = np.frombuffer(f.read(), dtype=header["dtype"]).reshape(dims).astype(np.uint16)
    grid = VoxelGrid(Vec3(*header["origin"]), float(header["unit"]), dims, cells)
    cats = [
        Category(int(c["id"]), str(c["name"]), tuple(int(v) for v in c["color"]))
        for c in header.get("categories", [])
    ]
    return grid, cats
