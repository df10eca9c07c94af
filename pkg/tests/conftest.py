import math

import numpy as np
import pytest

from boxscene.bbs import BoundingBoxScene, Category, SceneObject
from boxscene.camera import Intrinsics, Pose, look_at_pose
from boxscene.geometry import Obb, Quat, Vec3
from boxscene.pipeline_runner import default_category_table


@pytest.fixture(scope="session")
def category_table():
    cats, name_map = default_category_table()
    return cats, name_map


def axis_box(cx, cy, cz, hx, hy, hz, yaw=0.0):
    q = Quat.from_axis_angle(Vec3(0, 0, 1), yaw) if yaw else Quat.identity()
    return Obb(Vec3(cx, cy, cz), Vec3(hx, hy, hz), q)


def make_room_scene(categories, name_map, half_w=3.0, half_d=3.0, height=3.0, furniture=()):
    """Closed rectangular room: floor, ceiling, 4 walls, plus furniture boxes
    given as (name, Obb) pairs."""
    t = 0.1  # shell thickness
    shell = [
        ("floor", axis_box(0, 0, -t, half_w + 2 * t, half_d + 2 * t, t)),
        ("ceiling", axis_box(0, 0, height + t, half_w + 2 * t, half_d + 2 * t, t)),
        ("wall", axis_box(-half_w - t, 0, height / 2, t, half_d + 2 * t, height / 2)),
        ("wall", axis_box(half_w + t, 0, height / 2, t, half_d + 2 * t, height / 2)),
        ("wall", axis_box(0, -half_d - t, height / 2, half_w + 2 * t, t, height / 2)),
        ("wall", axis_box(0, half_d + t, height / 2, half_w + 2 * t, t, height / 2)),
    ]
    objects = []
    for i, (name, box) in enumerate(list(shell) + list(furniture)):
        objects.append(
            SceneObject(f"{name}_{i:03d}", name_map[name], (box,))
        )
    return BoundingBoxScene("room", tuple(categories), tuple(objects))


def random_scene(seed, n_boxes=20, categories=None, extent=4.0, mixed=True):
    """Seeded random clutter of OBBs/AABBs for oracle comparisons."""
    rng = np.random.default_rng(seed)
    if categories is None:
        categories = tuple(
            Category(i, "void" if i == 0 else f"cat{i}", (i * 19 % 256, i * 37 % 256, i * 53 % 256))
            for i in range(8)
        )
    objects = []
    for i in range(n_boxes):
        c = rng.uniform(-extent, extent, 3)
        h = rng.uniform(0.08, 1.2, 3)
        if mixed and rng.random() < 0.5:
            q = Quat.identity()
        else:
            q = Quat.normalize(*rng.standard_normal(4))
        objects.append(
            SceneObject(
                f"obj_{i:03d}",
                int(rng.integers(1, len(categories))),
                (Obb(Vec3(*c), Vec3(*h), q),),
            )
        )
    return BoundingBoxScene(f"rand_{seed}", categories, tuple(objects))


@pytest.fixture
def small_intrinsics():
    return Intrinsics.from_vfov(96, 64)


@pytest.fixture
def inside_room_pose():
    return look_at_pose(Vec3(2.0, 2.0, 1.5), Vec3(-1.0, -1.0, 1.0))


def random_unit_vec(rng):
    v = rng.standard_normal(3)
    n = math.sqrt(float(v @ v))
    return Vec3(*(v / n))
