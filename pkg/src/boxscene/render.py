"""Proxy-map renderer: bounding-box scenes to per-pixel semantic + depth
images, with a BVH-accelerated kernel and an independent linear-scan path.

The BVH path (numba, row-parallel) and the linear path (vectorized numpy)
share per-box intersection arithmetic written in the same operation order,
so semantic winners agree exactly; the linear path doubles as the oracle in
tests and the bench comparison.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit, prange
from PIL import Image

from .bbs import BoundingBoxScene, Category, SceneError, VoxelGrid, object_priority_ranks
from .camera import CameraTrajectory, Intrinsics, Pose, trajectory_to_dict

NO_HIT_DEPTH = math.inf


@dataclass(frozen=True)
class RenderConfig:
    near: float = 0.01
    far: float = 40.0
    source: str = "boxes"  # boxes | voxels

    def __post_init__(self):
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")


@dataclass(frozen=True)
class BoundingBoxImage:
    width: int
    height: int
    semantic: np.ndarray  # (H, W) uint16 category ids, 0 = nothing hit
    depth: np.ndarray  # (H, W) float64 meters along the ray, inf = no hit
    object_ids: np.ndarray  # (H, W) int32 object index, -1 = no hit
    pose_ref: str = ""

    def __post_init__(self):
        assert self.semantic.shape == (self.height, self.width)
        assert self.depth.shape == (self.height, self.width)


@dataclass(frozen=True)
class SceneArrays:
    """Flattened per-box arrays shared by both render paths."""
    centers: np.ndarray  # (n, 3)
    halves: np.ndarray  # (n, 3)
    rots: np.ndarray  # (n, 3, 3) world-from-box rotation matrices
    aabb_min: np.ndarray  # (n, 3)
    aabb_max: np.ndarray  # (n, 3)
    obj_index: np.ndarray  # (n,) int32
    category: np.ndarray  # (n,) uint16
    rank: np.ndarray  # (n,) int32 precedence rank of the owning object

    @property
    def n_boxes(self) -> int:
        return len(self.centers)


@dataclass(frozen=True)
class BvhAccel:
    arrays: SceneArrays
    node_min: np.ndarray  # (m, 3)
    node_max: np.ndarray  # (m, 3)
    node_left: np.ndarray  # (m,) int32, -1 for leaves
    node_right: np.ndarray  # (m,) int32
    node_first: np.ndarray  # (m,) int32 first prim slot (leaves)
    node_count: np.ndarray  # (m,) int32 prim count (0 for internal nodes)
    prim_order: np.ndarray  # (n,) int32 leaf ordering over boxes


def flatten_scene(scene: BoundingBoxScene) -> SceneArrays:
    ranks = object_priority_ranks(scene)
    centers, halves, rots, amin, amax, obj_idx, cat, rank = [], [], [], [], [], [], [], []
    for oi, obj in enumerate(scene.objects):
        for box in obj.boxes:
            centers.append(box.center.as_tuple())
            halves.append(box.half_extents.as_tuple())
            rots.append(box.rotation.as_matrix())
            cs = np.array([c.as_tuple() for c in box.corners()])
            amin.append(cs.min(axis=0))
            amax.append(cs.max(axis=0))
            obj_idx.append(oi)
            cat.append(obj.category_id)
            rank.append(ranks[obj.object_id])
    if not centers:
        raise SceneError("EMPTY_SCENE", "scene has no boxes to render")
    return SceneArrays(
        centers=np.array(centers, dtype=np.float64),
        halves=np.array(halves, dtype=np.float64),
        rots=np.array(rots, dtype=np.float64),
        aabb_min=np.array(amin, dtype=np.float64),
        aabb_max=np.array(amax, dtype=np.float64),
        obj_index=np.array(obj_idx, dtype=np.int32),
        category=np.array(cat, dtype=np.uint16),
        rank=np.array(rank, dtype=np.int32),
    )


def build_bvh(scene: BoundingBoxScene, leaf_size: int = 8) -> BvhAccel:
    """Median-split BVH over the world-space bounds of every member box."""
    arrays = flatten_scene(scene)
    n = arrays.n_boxes
    centroids = (arrays.aabb_min + arrays.aabb_max) / 2.0

    node_min, node_max = [], []
    node_left, node_right, node_first, node_count = [], [], [], []
    prim_order: list[int] = []

    def emit(indices: np.ndarray) -> int:
        node_id = len(node_min)
        node_min.append(arrays.aabb_min[indices].min(axis=0))
        node_max.append(arrays.aabb_max[indices].max(axis=0))
        node_left.append(-1)
        node_right.append(-1)
        node_first.append(-1)
        node_count.append(0)
        if len(indices) <= leaf_size:
            node_first[node_id] = len(prim_order)
            node_count[node_id] = len(indices)
            prim_order.extend(int(i) for i in indices)
            return node_id
        extent = node_max[node_id] - node_min[node_id]
        axis = int(np.argmax(extent))
        order = indices[np.argsort(centroids[indices, axis], kind="stable")]
        mid = len(order) // 2
        node_left[node_id] = emit(order[:mid])
        node_right[node_id] = emit(order[mid:])
        return node_id

    emit(np.arange(n))
    return BvhAccel(
        arrays=arrays,
        node_min=np.array(node_min, dtype=np.float64),
        node_max=np.array(node_max, dtype=np.float64),
        node_left=np.array(node_left, dtype=np.int32),
        node_right=np.array(node_right, dtype=np.int32),
        node_first=np.array(node_first, dtype=np.int32),
        node_count=np.array(node_count, dtype=np.int32),
        prim_order=np.array(prim_order, dtype=np.int32),
    )


def bvh_ray_candidates(accel: BvhAccel, origin: np.ndarray, direction: np.ndarray) -> list[int]:
    """Box indices whose leaf nodes the ray's slab test reaches (debug aid)."""
    out: list[int] = []
    stack = [0]
    while stack:
        ni = stack.pop()
        if not _slab_hits(origin, direction, accel.node_min[ni], accel.node_max[ni]):
            continue
        if accel.node_count[ni] > 0:
            s = accel.node_first[ni]
            out.extend(int(i) for i in accel.prim_order[s : s + accel.node_count[ni]])
        else:
            stack.append(int(accel.node_left[ni]))
            stack.append(int(accel.node_right[ni]))
    return out


def _slab_hits(o: np.ndarray, d: np.ndarray, mn: np.ndarray, mx: np.ndarray) -> bool:
    tmin, tmax = -math.inf, math.inf
    for i in range(3):
        if d[i] == 0.0:
            if o[i] < mn[i] or o[i] > mx[i]:
                return False
            continue
        t0 = (mn[i] - o[i]) / d[i]
        t1 = (mx[i] - o[i]) / d[i]
        if t0 > t1:
            t0, t1 = t1, t0
        tmin = max(tmin, t0)
        tmax = min(tmax, t1)
    return tmax >= tmin and tmax >= 0.0


# ---------------------------------------------------------------------------
# numba BVH kernel

@njit(cache=True, inline="always")
def _box_hit_t(ox, oy, oz, dx, dy, dz, cx, cy, cz, r, hx, hy, hz, near, far):
    """Per-box candidate depth, or -1.0 on miss.

    Transforms the ray into the box frame (r is the world-from-box matrix;
    its transpose applied here), runs the slab test, clips to t >= 0, and
    applies the camera-inside-box rule: intervals straddling `near` compete
    at depth = near.
    """
    px = ox - cx
    py = oy - cy
    pz = oz - cz
    lox = r[0, 0] * px + r[1, 0] * py + r[2, 0] * pz
    loy = r[0, 1] * px + r[1, 1] * py + r[2, 1] * pz
    loz = r[0, 2] * px + r[1, 2] * py + r[2, 2] * pz
    ldx = r[0, 0] * dx + r[1, 0] * dy + r[2, 0] * dz
    ldy = r[0, 1] * dx + r[1, 1] * dy + r[2, 1] * dz
    ldz = r[0, 2] * dx + r[1, 2] * dy + r[2, 2] * dz

    tmin = -np.inf
    tmax = np.inf
    if ldx == 0.0:
        if lox < -hx or lox > hx:
            return -1.0
    else:
        t0 = (-hx - lox) / ldx
        t1 = (hx - lox) / ldx
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
    if ldy == 0.0:
        if loy < -hy or loy > hy:
            return -1.0
    else:
        t0 = (-hy - loy) / ldy
        t1 = (hy - loy) / ldy
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
    if ldz == 0.0:
        if loz < -hz or loz > hz:
            return -1.0
    else:
        t0 = (-hz - loz) / ldz
        t1 = (hz - loz) / ldz
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1

    if tmax < tmin or tmax < 0.0:
        return -1.0
    t_near = tmin if tmin > 0.0 else 0.0
    if t_near > far or tmax < near:
        return -1.0
    return t_near if t_near > near else near


@njit(cache=True, inline="always")
def _node_entry(ox, oy, oz, dx, dy, dz, inv_x, inv_y, inv_z,
                node_min, node_max, ni, near, far):
    """Ray entry parameter into a node's bounds, or inf when the node cannot
    contain a competitive hit."""
    tmin = -np.inf
    tmax = np.inf
    if dx == 0.0:
        if ox < node_min[ni, 0] or ox > node_max[ni, 0]:
            return np.inf
    else:
        t0 = (node_min[ni, 0] - ox) * inv_x
        t1 = (node_max[ni, 0] - ox) * inv_x
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
    if dy == 0.0:
        if oy < node_min[ni, 1] or oy > node_max[ni, 1]:
            return np.inf
    else:
        t0 = (node_min[ni, 1] - oy) * inv_y
        t1 = (node_max[ni, 1] - oy) * inv_y
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
    if dz == 0.0:
        if oz < node_min[ni, 2] or oz > node_max[ni, 2]:
            return np.inf
    else:
        t0 = (node_min[ni, 2] - oz) * inv_z
        t1 = (node_max[ni, 2] - oz) * inv_z
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
    if tmax < tmin or tmax < 0.0 or tmax < near:
        return np.inf
    entry = tmin if tmin > 0.0 else 0.0
    if entry > far:
        return np.inf
    return entry


@njit(cache=True, parallel=True)
def _render_bvh_kernel(
    origin, cam_rot, fx, fy, cx_pix, cy_pix, width, height,
    node_min, node_max, node_left, node_right, node_first, node_count, prim_order,
    centers, halves, rots, category, rank, obj_index, near, far,
    out_sem, out_depth, out_obj,
):
    ox, oy, oz = origin[0], origin[1], origin[2]
    for py in prange(height):
        stack = np.empty(128, dtype=np.int32)
        stack_t = np.empty(128, dtype=np.float64)
        for px in range(width):
            ux = (px + 0.5 - cx_pix) / fx
            uy = (py + 0.5 - cy_pix) / fy
            nrm = math.sqrt(ux * ux + uy * uy + 1.0)
            vx = ux / nrm
            vy = uy / nrm
            vz = 1.0 / nrm
            dx = cam_rot[0, 0] * vx + cam_rot[0, 1] * vy + cam_rot[0, 2] * vz
            dy = cam_rot[1, 0] * vx + cam_rot[1, 1] * vy + cam_rot[1, 2] * vz
            dz = cam_rot[2, 0] * vx + cam_rot[2, 1] * vy + cam_rot[2, 2] * vz

            inv_x = 1.0 / dx if dx != 0.0 else np.inf
            inv_y = 1.0 / dy if dy != 0.0 else np.inf
            inv_z = 1.0 / dz if dz != 0.0 else np.inf

            best_t = np.inf
            best_rank = 2147483647
            best_prim = -1

            root_t = _node_entry(ox, oy, oz, dx, dy, dz, inv_x, inv_y, inv_z,
                                 node_min, node_max, 0, near, far)
            sp = 0
            if root_t != np.inf:
                stack[sp] = 0
                stack_t[sp] = root_t
                sp += 1
            while sp > 0:
                sp -= 1
                ni = stack[sp]
                if stack_t[sp] > best_t:
                    continue
                cnt = node_count[ni]
                if cnt > 0:
                    first = node_first[ni]
                    for k in range(first, first + cnt):
                        pi = prim_order[k]
                        t = _box_hit_t(
                            ox, oy, oz, dx, dy, dz,
                            centers[pi, 0], centers[pi, 1], centers[pi, 2],
                            rots[pi],
                            halves[pi, 0], halves[pi, 1], halves[pi, 2],
                            near, far,
                        )
                        if t >= 0.0:
                            rk = rank[pi]
                            if t < best_t or (t == best_t and rk < best_rank):
                                best_t = t
                                best_rank = rk
                                best_prim = pi
                else:
                    li = node_left[ni]
                    ri = node_right[ni]
                    tl = _node_entry(ox, oy, oz, dx, dy, dz, inv_x, inv_y, inv_z,
                                     node_min, node_max, li, near, far)
                    tr = _node_entry(ox, oy, oz, dx, dy, dz, inv_x, inv_y, inv_z,
                                     node_min, node_max, ri, near, far)
                    # push farther child first so the nearer one is expanded next
                    if tl > tr:
                        li, ri = ri, li
                        tl, tr = tr, tl
                    if tr <= best_t:
                        stack[sp] = ri
                        stack_t[sp] = tr
                        sp += 1
                    if tl <= best_t:
                        stack[sp] = li
                        stack_t[sp] = tl
                        sp += 1

            if best_prim >= 0:
                out_sem[py, px] = category[best_prim]
                out_depth[py, px] = best_t
                out_obj[py, px] = obj_index[best_prim]
            else:
                out_sem[py, px] = 0
                out_depth[py, px] = np.inf
                out_obj[py, px] = -1


def _pose_rotation_matrix(pose: Pose) -> np.ndarray:
    return np.array(pose.orientation.as_matrix(), dtype=np.float64)


def render_bbi(
    scene: BoundingBoxScene,
    accel: BvhAccel,
    intr: Intrinsics,
    pose: Pose,
    cfg: RenderConfig = RenderConfig(),
    frame_id: str = "",
) -> BoundingBoxImage:
    """BVH-accelerated semantic/depth render at one camera pose."""
    a = accel.arrays
    h, w = intr.height, intr.width
    sem = np.zeros((h, w), dtype=np.uint16)
    depth = np.full((h, w), np.inf, dtype=np.float64)
    obj = np.full((h, w), -1, dtype=np.int32)
    _render_bvh_kernel(
        np.array(pose.position.as_tuple(), dtype=np.float64),
        _pose_rotation_matrix(pose),
        intr.fx, intr.fy, intr.cx, intr.cy, w, h,
        accel.node_min, accel.node_max, accel.node_left, accel.node_right,
        accel.node_first, accel.node_count, accel.prim_order,
        a.centers, a.halves, a.rots, a.category, a.rank, a.obj_index,
        cfg.near, cfg.far,
        sem, depth, obj,
    )
    return BoundingBoxImage(w, h, sem, depth, obj, frame_id)


# ---------------------------------------------------------------------------
# linear-scan path (oracle / bench reference)

def render_bbi_linear(
    scene_or_arrays: Union[BoundingBoxScene, SceneArrays],
    intr: Intrinsics,
    pose: Pose,
    cfg: RenderConfig = RenderConfig(),
    frame_id: str = "",
) -> BoundingBoxImage:
    """Per-pixel scan over every box, vectorized over the image.

    Independent of the BVH path: no shared traversal, only the box-frame
    slab arithmetic is kept in the same operation order so that exact
    semantic agreement is well-defined.
    """
    arrays = (
        scene_or_arrays
        if isinstance(scene_or_arrays, SceneArrays)
        else flatten_scene(scene_or_arrays)
    )
    h, w = intr.height, intr.width
    xs = (np.arange(w) + 0.5 - intr.cx) / intr.fx
    ys = (np.arange(h) + 0.5 - intr.cy) / intr.fy
    ux, uy = np.meshgrid(xs, ys)
    nrm = np.sqrt(ux * ux + uy * uy + 1.0)
    vx = (ux / nrm).ravel()
    vy = (uy / nrm).ravel()
    vz = (1.0 / nrm).ravel()
    rot = _pose_rotation_matrix(pose)
    # same expression order as the BVH kernel so rounding is identical
    dirs = np.empty((vx.size, 3), dtype=np.float64)
    dirs[:, 0] = rot[0, 0] * vx + rot[0, 1] * vy + rot[0, 2] * vz
    dirs[:, 1] = rot[1, 0] * vx + rot[1, 1] * vy + rot[1, 2] * vz
    dirs[:, 2] = rot[2, 0] * vx + rot[2, 1] * vy + rot[2, 2] * vz
    o = np.array(pose.position.as_tuple(), dtype=np.float64)

    n_pix = dirs.shape[0]
    best_t = np.full(n_pix, np.inf)
    best_rank = np.full(n_pix, np.iinfo(np.int32).max, dtype=np.int64)
    best_prim = np.full(n_pix, -1, dtype=np.int64)

    for pi in range(arrays.n_boxes):
        r = arrays.rots[pi]
        c = arrays.centers[pi]
        hx, hy, hz = arrays.halves[pi]
        p = o - c
        lo = np.array(
            [
                r[0, 0] * p[0] + r[1, 0] * p[1] + r[2, 0] * p[2],
                r[0, 1] * p[0] + r[1, 1] * p[1] + r[2, 1] * p[2],
                r[0, 2] * p[0] + r[1, 2] * p[1] + r[2, 2] * p[2],
            ]
        )
        ld = np.empty_like(dirs)
        ld[:, 0] = r[0, 0] * dirs[:, 0] + r[1, 0] * dirs[:, 1] + r[2, 0] * dirs[:, 2]
        ld[:, 1] = r[0, 1] * dirs[:, 0] + r[1, 1] * dirs[:, 1] + r[2, 1] * dirs[:, 2]
        ld[:, 2] = r[0, 2] * dirs[:, 0] + r[1, 2] * dirs[:, 1] + r[2, 2] * dirs[:, 2]

        tmin = np.full(n_pix, -np.inf)
        tmax = np.full(n_pix, np.inf)
        alive = np.ones(n_pix, dtype=bool)
        for axis, ha in ((0, hx), (1, hy), (2, hz)):
            d = ld[:, axis]
            zero = d == 0.0
            if lo[axis] < -ha or lo[axis] > ha:
                alive &= ~zero
            with np.errstate(divide="ignore", invalid="ignore"):
                t0 = (-ha - lo[axis]) / d
                t1 = (ha - lo[axis]) / d
            swap = t0 > t1
            t0n = np.where(swap, t1, t0)
            t1n = np.where(swap, t0, t1)
            nz = ~zero
            tmin[nz] = np.maximum(tmin[nz], t0n[nz])
            tmax[nz] = np.minimum(tmax[nz], t1n[nz])

        t_near = np.maximum(tmin, 0.0)
        hit = alive & (tmax >= tmin) & (tmax >= 0.0) & (t_near <= cfg.far) & (tmax >= cfg.near)
        t_eff = np.maximum(t_near, cfg.near)
        rk = int(arrays.rank[pi])
        better = hit & ((t_eff < best_t) | ((t_eff == best_t) & (rk < best_rank)))
        best_t[better] = t_eff[better]
        best_rank[better] = rk
        best_prim[better] = pi

    sem = np.zeros(n_pix, dtype=np.uint16)
    obj = np.full(n_pix, -1, dtype=np.int32)
    got = best_prim >= 0
    sem[got] = arrays.category[best_prim[got]]
    obj[got] = arrays.obj_index[best_prim[got]]
    depth = np.where(got, best_t, np.inf)
    return BoundingBoxImage(
        w, h, sem.reshape(h, w), depth.reshape(h, w), obj.reshape(h, w), frame_id
    )


# ---------------------------------------------------------------------------
# voxel-source render (3D DDA)

@njit(cache=True, parallel=True)
def _render_voxel_kernel(
    origin, cam_rot, fx, fy, cx_pix, cy_pix, width, height,
    cells, gox, goy, goz, unit, nx, ny, nz, near, far,
    out_sem, out_depth,
):
    ox, oy, oz = origin[0], origin[1], origin[2]
    gmaxx = gox + nx * unit
    gmaxy = goy + ny * unit
    gmaxz = goz + nz * unit
    for py in prange(height):
        for px in range(width):
            ux = (px + 0.5 - cx_pix) / fx
            uy = (py + 0.5 - cy_pix) / fy
            nrm = math.sqrt(ux * ux + uy * uy + 1.0)
            vx = ux / nrm
            vy = uy / nrm
            vz = 1.0 / nrm
            dx = cam_rot[0, 0] * vx + cam_rot[0, 1] * vy + cam_rot[0, 2] * vz
            dy = cam_rot[1, 0] * vx + cam_rot[1, 1] * vy + cam_rot[1, 2] * vz
            dz = cam_rot[2, 0] * vx + cam_rot[2, 1] * vy + cam_rot[2, 2] * vz

            out_sem[py, px] = 0
            out_depth[py, px] = np.inf

            # entry interval into the grid bounds
            tmin = -np.inf
            tmax = np.inf
            ok = True
            for axis in range(3):
                if axis == 0:
                    d, o, lo, hi = dx, ox, gox, gmaxx
                elif axis == 1:
                    d, o, lo, hi = dy, oy, goy, gmaxy
                else:
                    d, o, lo, hi = dz, oz, goz, gmaxz
                if d == 0.0:
                    if o < lo or o > hi:
                        ok = False
                        break
                else:
                    t0 = (lo - o) / d
                    t1 = (hi - o) / d
                    if t0 > t1:
                        t0, t1 = t1, t0
                    if t0 > tmin:
                        tmin = t0
                    if t1 < tmax:
                        tmax = t1
            if not ok or tmax < tmin or tmax < 0.0:
                continue
            t = tmin if tmin > 0.0 else 0.0
            t_stop = tmax if tmax < far else far

            eps = 1e-9
            sx = ox + dx * (t + eps)
            sy = oy + dy * (t + eps)
            sz = oz + dz * (t + eps)
            ix = int(math.floor((sx - gox) / unit))
            iy = int(math.floor((sy - goy) / unit))
            iz = int(math.floor((sz - goz) / unit))
            if ix < 0:
                ix = 0
            if iy < 0:
                iy = 0
            if iz < 0:
                iz = 0
            if ix >= nx:
                ix = nx - 1
            if iy >= ny:
                iy = ny - 1
            if iz >= nz:
                iz = nz - 1

            step_x = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
            step_y = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
            step_z = 1 if dz > 0.0 else (-1 if dz < 0.0 else 0)

            if step_x != 0:
                nxt = gox + (ix + (1 if step_x > 0 else 0)) * unit
                t_max_x = (nxt - ox) / dx
                t_dx = unit / abs(dx)
            else:
                t_max_x = np.inf
                t_dx = np.inf
            if step_y != 0:
                nxt = goy + (iy + (1 if step_y > 0 else 0)) * unit
                t_max_y = (nxt - oy) / dy
                t_dy = unit / abs(dy)
            else:
                t_max_y = np.inf
                t_dy = np.inf
            if step_z != 0:
                nxt = goz + (iz + (1 if step_z > 0 else 0)) * unit
                t_max_z = (nxt - oz) / dz
                t_dz = unit / abs(dz)
            else:
                t_max_z = np.inf
                t_dz = np.inf

            t_entry = t
            while t_entry <= t_stop:
                cell = cells[ix, iy, iz]
                if cell != 0 and t_entry <= far:
                    d_eff = t_entry if t_entry > near else near
                    out_sem[py, px] = cell
                    out_depth[py, px] = d_eff
                    break
                if t_max_x <= t_max_y and t_max_x <= t_max_z:
                    t_entry = t_max_x
                    t_max_x += t_dx
                    ix += step_x
                    if ix < 0 or ix >= nx:
                        break
                elif t_max_y <= t_max_z:
                    t_entry = t_max_y
                    t_max_y += t_dy
                    iy += step_y
                    if iy < 0 or iy >= ny:
                        break
                else:
                    t_entry = t_max_z
                    t_max_z += t_dz
                    iz += step_z
                    if iz < 0 or iz >= nz:
                        break


def render_bbi_from_voxels(
    grid: VoxelGrid,
    intr: Intrinsics,
    pose: Pose,
    cfg: RenderConfig = RenderConfig(),
    frame_id: str = "",
) -> BoundingBoxImage:
    """DDA traversal of the voxel grid; the first nonzero cell along each ray
    wins with depth = the ray parameter at the cell boundary it entered."""
    h, w = intr.height, intr.width
    sem = np.zeros((h, w), dtype=np.uint16)
    depth = np.full((h, w), np.inf, dtype=np.float64)
    cells = np.ascontiguousarray(grid.cells.astype(np.uint16))
    _render_voxel_kernel(
        np.array(pose.position.as_tuple(), dtype=np.float64),
        _pose_rotation_matrix(pose),
        intr.fx, intr.fy, intr.cx, intr.cy, w, h,
        cells,
        grid.origin.x, grid.origin.y, grid.origin.z, grid.unit,
        grid.dims[0], grid.dims[1], grid.dims[2],
        cfg.near, cfg.far,
        sem, depth,
    )
    obj = np.where(sem > 0, 0, -1).astype(np.int32)
    return BoundingBoxImage(w, h, sem, depth, obj, frame_id)


# ---------------------------------------------------------------------------
# derived maps

def one_hot_encode(bbi: BoundingBoxImage, n_categories: int) -> np.ndarray:
    """(H, W, n_categories) {0,1} map; channel 0 marks no-hit pixels."""
    if int(bbi.semantic.max(initial=0)) >= n_categories:
        raise SceneError(
            "CATEGORY_OUT_OF_RANGE",
            f"semantic id {int(bbi.semantic.max())} >= n_categories {n_categories}",
        )
    out = np.zeros((bbi.height, bbi.width, n_categories), dtype=np.uint8)
    rows, cols = np.indices((bbi.height, bbi.width))
    out[rows, cols, bbi.semantic.astype(np.int64)] = 1
    return out


def normalize_depth(bbi: BoundingBoxImage, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """Hit depths mapped to [0, 1] over [near, far]; no-hit pixels map to 1."""
    nd = np.clip((bbi.depth - cfg.near) / (cfg.far - cfg.near), 0.0, 1.0)
    nd[~np.isfinite(bbi.depth)] = 1.0
    return nd


def render_trajectory(
    scene: BoundingBoxScene,
    traj: CameraTrajectory,
    cfg: RenderConfig = RenderConfig(),
    accel: Optional[BvhAccel] = None,
) -> list[BoundingBoxImage]:
    accel = accel or build_bvh(scene)
    out = []
    for fid, pose in zip(traj.frame_ids, traj.poses):
        try:
            out.append(render_bbi(scene, accel, traj.intrinsics, pose, cfg, frame_id=fid))
        except Exception as exc:  # attach the offending frame
            raise SceneError("RENDER_FAILED", f"frame {fid}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# image export

def _palette_bytes(categories: Sequence[Category]) -> bytes:
    pal = bytearray(256 * 3)
    for c in categories:
        if 0 <= c.id < 256:
            pal[c.id * 3 : c.id * 3 + 3] = bytes(c.color)
    return bytes(pal)


def semantic_to_png(bbi: BoundingBoxImage, categories: Sequence[Category], path: Union[str, Path]) -> None:
    if int(bbi.semantic.max(initial=0)) > 255:
        raise SceneError("CATEGORY_OUT_OF_RANGE", "palette export supports ids < 256")
    img = Image.fromarray(bbi.semantic.astype(np.uint8), mode="P")
    img.putpalette(_palette_bytes(categories))
    img.save(path, format="PNG")


def depth_to_png(bbi: BoundingBoxImage, cfg: RenderConfig, path: Union[str, Path]) -> None:
    nd = normalize_depth(bbi, cfg)
    q = np.round(nd * 65535.0).astype(np.uint16)
    Image.fromarray(q).save(path, format="PNG")  # uint16 maps to 16-bit gray


def preview_to_png(
    bbi: BoundingBoxImage, categories: Sequence[Category], cfg: RenderConfig, path: Union[str, Path]
) -> None:
    """Category palette shaded by normalized depth (darker = farther)."""
    table = np.zeros((max((c.id for c in categories), default=0) + 1, 3), dtype=np.float64)
    for c in categories:
        table[c.id] = c.color
    rgb = table[np.clip(bbi.semantic, 0, len(table) - 1)]
    shade = 1.0 - 0.7 * normalize_depth(bbi, cfg)[..., None]
    out = np.clip(rgb * shade, 0, 255).astype(np.uint8)
    Image.fromarray(out, mode="RGB").save(path, format="PNG")


def load_semantic_png(path: Union[str, Path]) -> np.ndarray:
    return np.array(Image.open(path)).astype(np.uint16)


def load_depth_png(path: Union[str, Path]) -> np.ndarray:
    """Returns normalized depth in [0, 1]."""
    return np.array(Image.open(path)).astype(np.float64) / 65535.0


def export_bbi(
    bbi: BoundingBoxImage,
    categories: Sequence[Category],
    intr: Intrinsics,
    pose: Pose,
    cfg: RenderConfig,
    out_dir: Union[str, Path],
    frame_id: str,
) -> dict:
    """Write semantic PNG, 16-bit depth PNG, and the sidecar JSON; returns
    the manifest-ready path record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sem_path = out / f"{frame_id}.semantic.png"
    depth_path = out / f"{frame_id}.depth.png"
    side_path = out / f"{frame_id}.json"
    semantic_to_png(bbi, categories, sem_path)
    depth_to_png(bbi, cfg, depth_path)
    sidecar = {
        "frame_id": frame_id,
        "near": cfg.near,
        "far": cfg.far,
        "pose": {
            "position": list(pose.position.as_tuple()),
            "rotation_quat": list(pose.orientation.as_tuple()),
        },
        "intrinsics": intr.to_dict(),
    }
    side_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return {
        "semantic": sem_path.name,
        "depth": depth_path.name,
        "sidecar": side_path.name,
    }
