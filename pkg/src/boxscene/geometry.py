"""Geometric primitives: vectors, boxes, rays, and their intersection tests.

World frame is right-handed with z up; all lengths are meters. Everything
here is immutable and pure, so it is safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite Vec3 component: {self}")

    def __add__(self, o: "Vec3") -> "Vec3":
        return Vec3(self.x + o.x, self.y + o.y, self.z + o.z)

    def __sub__(self, o: "Vec3") -> "Vec3":
        return Vec3(self.x - o.x, self.y - o.y, self.z - o.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def dot(self, o: "Vec3") -> float:
        return self.x * o.x + self.y * o.y + self.z * o.z

    def cross(self, o: "Vec3") -> "Vec3":
        return Vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n < _UNIT_TOL:
            raise ValueError("cannot normalize near-zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Quat:
    """Unit quaternion, scalar-first (w, x, y, z)."""
    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion not unit norm: |q| = {n}")

    @staticmethod
    def identity() -> "Quat":
        return Quat(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis: Vec3, angle_rad: float) -> "Quat":
        a = axis.normalized()
        h = angle_rad / 2.0
        s = math.sin(h)
        return Quat(math.cos(h), a.x * s, a.y * s, a.z * s)

    @staticmethod
    def normalize(w: float, x: float, y: float, z: float) -> "Quat":
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n < _UNIT_TOL:
            raise ValueError("cannot normalize near-zero quaternion")
        return Quat(w / n, x / n, y / n, z / n)

    def conjugate(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, o: "Quat") -> "Quat":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = o.w, o.x, o.y, o.z
        return Quat.normalize(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def rotate(self, v: Vec3) -> Vec3:
        m = self.as_matrix()
        return Vec3(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )

    def rotate_inv(self, v: Vec3) -> Vec3:
        return self.conjugate().rotate(v)

    def as_matrix(self) -> tuple[tuple[float, float, float], ...]:
        w, x, y, z = self.w, self.x, self.y, self.z
        return (
            (1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
            (2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
            (2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


@dataclass(frozen=True)
class Aabb:
    min: Vec3
    max: Vec3

    def __post_init__(self):
        if self.min.x > self.max.x or self.min.y > self.max.y or self.min.z > self.max.z:
            raise ValueError(f"Aabb min exceeds max: {self}")

    def union(self, o: "Aabb") -> "Aabb":
        return Aabb(
            Vec3(min(self.min.x, o.min.x), min(self.min.y, o.min.y), min(self.min.z, o.min.z)),
            Vec3(max(self.max.x, o.max.x), max(self.max.y, o.max.y), max(self.max.z, o.max.z)),
        )

    def contains(self, p: Vec3) -> bool:
        return (
            self.min.x <= p.x <= self.max.x
            and self.min.y <= p.y <= self.max.y
            and self.min.z <= p.z <= self.max.z
        )

    def extent(self) -> Vec3:
        return self.max - self.min

    def center(self) -> Vec3:
        return Vec3(
            (self.min.x + self.max.x) / 2,
            (self.min.y + self.max.y) / 2,
            (self.min.z + self.max.z) / 2,
        )

    def volume(self) -> float:
        e = self.extent()
        return e.x * e.y * e.z


@dataclass(frozen=True)
class Obb:
    """Oriented box: rotation maps box-local coordinates into the world frame."""
    center: Vec3
    half_extents: Vec3
    rotation: Quat

    def __post_init__(self):
        h = self.half_extents
        if h.x <= 0 or h.y <= 0 or h.z <= 0:
            raise ValueError(f"half_extents must be strictly positive: {h}")

    def corners(self) -> list[Vec3]:
        h = self.half_extents
        out = []
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                for sz in (-1.0, 1.0):
                    local = Vec3(sx * h.x, sy * h.y, sz * h.z)
                    out.append(self.center + self.rotation.rotate(local))
        return out


@dataclass(frozen=True)
class Ray:
    origin: Vec3
    direction: Vec3

    def __post_init__(self):
        n = self.direction.norm()
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"ray direction not unit length: |d| = {n}")

    def at(self, t: float) -> Vec3:
        return self.origin + self.direction * t


@dataclass(frozen=True)
class HitInterval:
    t_near: float
    t_far: float

    def __post_init__(self):
        if not (0.0 <= self.t_near <= self.t_far):
            raise ValueError(f"invalid hit interval: {self}")


def ray_aabb_intersect(ray: Ray, box: Aabb) -> Optional[HitInterval]:
    """Slab test; entry/exit clipped to t >= 0, grazing hits included.

    Axis-parallel directions rely on IEEE infinity arithmetic; zero components
    are checked explicitly so that 0 * inf never produces NaN.
    """
    t_min = -math.inf
    t_max = math.inf
    o = ray.origin.as_tuple()
    d = ray.direction.as_tuple()
    lo = box.min.as_tuple()
    hi = box.max.as_tuple()
    for i in range(3):
        if d[i] == 0.0:
            if o[i] < lo[i] or o[i] > hi[i]:
                return None
            continue
        inv = 1.0 / d[i]
        t0 = (lo[i] - o[i]) * inv
        t1 = (hi[i] - o[i]) * inv
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > t_min:
            t_min = t0
        if t1 < t_max:
            t_max = t1
    if t_max < t_min or t_max < 0.0:
        return None
    return HitInterval(max(t_min, 0.0), t_max)


def ray_obb_intersect(ray: Ray, box: Obb) -> Optional[HitInterval]:
    """Ray-OBB test by transforming the ray into the box local frame.

    The rotation preserves length, so t parameters are world-ray units.
    """
    local_origin = box.rotation.rotate_inv(ray.origin - box.center)
    local_dir = box.rotation.rotate_inv(ray.direction)
    h = box.half_extents
    local_box = Aabb(Vec3(-h.x, -h.y, -h.z), h)
    return ray_aabb_intersect(Ray(local_origin, local_dir), local_box)


def point_in_obb(p: Vec3, box: Obb) -> bool:
    """Closed-boundary membership: points exactly on a face count as inside."""
    local = box.rotation.rotate_inv(p - box.center)
    h = box.half_extents
    return abs(local.x) <= h.x and abs(local.y) <= h.y and abs(local.z) <= h.z


def aabb_of_obb(box: Obb) -> Aabb:
    """Tightest axis-aligned bound of the 8 world-space corners."""
    cs = box.corners()
    return Aabb(
        Vec3(min(c.x for c in cs), min(c.y for c in cs), min(c.z for c in cs)),
        Vec3(max(c.x for c in cs), max(c.y for c in cs), max(c.z for c in cs)),
    )


def obb_overlaps_aabb(obb: Obb, aabb: Aabb) -> bool:
    """Separating-axis test between an oriented box and an axis-aligned box.

    15 candidate axes: 3 world axes, 3 box axes, 9 cross products. Touching
    boxes count as overlapping (closed-set convention).
    """
    m = obb.rotation.as_matrix()
    # box axes as world vectors (columns of the rotation matrix)
    axes_b = [Vec3(m[0][i], m[1][i], m[2][i]) for i in range(3)]
    axes_a = [Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)]
    ha = aabb.extent() * 0.5
    ha_t = (ha.x, ha.y, ha.z)
    hb = obb.half_extents
    hb_t = (hb.x, hb.y, hb.z)
    d = obb.center - aabb.center()

    candidates = list(axes_a) + list(axes_b)
    for i in range(3):
        for j in range(3):
            c = axes_a[i].cross(axes_b[j])
            if c.norm() > 1e-12:
                candidates.append(c)

    for axis in candidates:
        ra = sum(ha_t[i] * abs(axis.dot(axes_a[i])) for i in range(3))
        rb = sum(hb_t[j] * abs(axis.dot(axes_b[j])) for j in range(3))
        if abs(d.dot(axis)) > ra + rb + 1e-12:
            return False
    return True
