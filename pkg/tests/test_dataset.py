import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from boxscene.bbs import SceneError
from boxscene.camera import Intrinsics, interpolate_trajectory, look_at_pose
from boxscene.dataset import (
    BASE_PROMPT,
    FilterRules,
    SourceBox,
    SourceSceneRecord,
    build_dataset,
    filter_scene,
    ingest_source_scene,
    load_manifest,
    manifest_hash,
    record_from_dict,
)
from boxscene.geometry import Quat, Vec3
from boxscene.pipeline_runner import default_category_table
from boxscene.render import RenderConfig

from conftest import axis_box


@pytest.fixture(scope="module")
def table():
    return default_category_table()


def room_boxes(half_w=3.0, half_d=3.0, height=3.0, extra=()):
    t = 0.1
    boxes = [
        SourceBox("floor", axis_box(0, 0, -t, half_w + 2 * t, half_d + 2 * t, t)),
        SourceBox("ceiling", axis_box(0, 0, height + t, half_w + 2 * t, half_d + 2 * t, t)),
        SourceBox("wall", axis_box(-half_w - t, 0, height / 2, t, half_d + 2 * t, height / 2)),
        SourceBox("wall", axis_box(half_w + t, 0, height / 2, t, half_d + 2 * t, height / 2)),
        SourceBox("wall", axis_box(0, -half_d - t, height / 2, half_w + 2 * t, t, height / 2)),
        SourceBox("wall", axis_box(0, half_d + t, height / 2, half_w + 2 * t, t, height / 2)),
    ]
    return tuple(boxes) + tuple(extra)


def room_trajectory(n_frames=20, intr=None):
    kf = [
        look_at_pose(Vec3(2, 2, 1.5), Vec3(0, 0, 1)),
        look_at_pose(Vec3(-2, 2, 1.5), Vec3(0, 0, 1)),
        look_at_pose(Vec3(-2, -2, 1.5), Vec3(0, 0, 1)),
    ]
    per_seg = max(1, (n_frames - 1) // (len(kf) - 1))
    traj = interpolate_trajectory(kf, per_seg, intrinsics=intr or Intrinsics.from_vfov(48, 32))
    return traj


def make_record(scene_id="scene_a", n_frames=21, extra_boxes=()):
    return SourceSceneRecord(
        scene_id=scene_id,
        boxes=room_boxes(extra=extra_boxes),
        trajectory=room_trajectory(n_frames),
    )


class TestIngest:
    def test_basic_mapping(self, table):
        cats, name_map = table
        rec = make_record(extra_boxes=(SourceBox("bed", axis_box(-1, -1, 0.3, 1, 0.8, 0.3)),))
        scene, traj, warnings = ingest_source_scene(rec, name_map, cats)
        assert warnings == []
        assert len(scene.objects) == 7
        names = {scene.category_by_id()[o.category_id].name for o in scene.objects}
        assert names == {"floor", "ceiling", "wall", "bed"}

    def test_group_id_forms_union_object(self, table):
        cats, name_map = table
        extra = (
            SourceBox("sofa", axis_box(0, 0, 0.25, 1.0, 0.4, 0.25), group_id="sofa_L"),
            SourceBox("sofa", axis_box(0.6, 0.8, 0.25, 0.4, 0.4, 0.25), group_id="sofa_L"),
        )
        rec = make_record(extra_boxes=extra)
        scene, _, _ = ingest_source_scene(rec, name_map, cats)
        sofa = scene.object_by_id()["sofa_L"]
        assert len(sofa.boxes) == 2

    def test_unmapped_category_dropped_with_warning(self, table):
        cats, name_map = table
        rec = make_record(extra_boxes=(SourceBox("zeppelin", axis_box(0, 0, 1, 0.5, 0.5, 0.5)),))
        scene, _, warnings = ingest_source_scene(rec, name_map, cats)
        assert len(warnings) == 1
        assert "zeppelin" in warnings[0]
        assert len(scene.objects) == 6

    def test_nothing_mappable_raises(self, table):
        cats, name_map = table
        rec = SourceSceneRecord(
            "bad",
            (SourceBox("zeppelin", axis_box(0, 0, 1, 0.5, 0.5, 0.5)),),
            room_trajectory(),
        )
        with pytest.raises(SceneError) as ei:
            ingest_source_scene(rec, name_map, cats)
        assert ei.value.code == "NO_MAPPABLE_OBJECTS"


class TestRecordFromDict:
    def doc(self):
        traj = room_trajectory(3)
        return {
            "scene_id": "s1",
            "intrinsics": traj.intrinsics.to_dict(),
            "frames": [
                {
                    "frame_id": fid,
                    "position": list(p.position.as_tuple()),
                    "rotation_quat": list(p.orientation.as_tuple()),
                }
                for fid, p in zip(traj.frame_ids, traj.poses)
            ],
            "boxes": [
                {
                    "category_name": "bed",
                    "center": [0, 0, 0.3],
                    "half_extents": [1, 0.8, 0.3],
                }
            ],
        }

    def test_round_trip(self):
        rec = record_from_dict(self.doc())
        assert rec.scene_id == "s1"
        assert rec.boxes[0].category_name == "bed"
        assert rec.boxes[0].box.rotation == Quat.identity()

    def test_malformed_pose(self):
        doc = self.doc()
        doc["frames"][0]["position"] = [0, 0]
        with pytest.raises(SceneError) as ei:
            record_from_dict(doc)
        assert ei.value.code == "MALFORMED_POSE"


class TestFilters:
    def test_good_room_kept(self, table):
        cats, name_map = table
        scene, traj, _ = ingest_source_scene(make_record(), name_map, cats)
        decision = filter_scene(scene, traj, FilterRules())
        assert decision.keep and decision.reasons == ()

    def test_excessive_extent(self, table):
        cats, name_map = table
        rec = SourceSceneRecord("big", room_boxes(half_w=20, half_d=20), room_trajectory(21))
        scene, traj, _ = ingest_source_scene(rec, name_map, cats)
        assert "EXCESSIVE_EXTENT" in filter_scene(scene, traj, FilterRules()).reasons

    def test_too_few_frames(self, table):
        cats, name_map = table
        scene, traj, _ = ingest_source_scene(make_record(n_frames=5), name_map, cats)
        assert "TOO_FEW_FRAMES" in filter_scene(scene, traj, FilterRules(min_frames=20)).reasons

    def test_unbounded_room(self, table):
        cats, name_map = table
        # no ceiling and one wall missing: two probe rays escape, one too many
        full = room_boxes()
        boxes = tuple(b for b in full if b.category_name != "ceiling")
        boxes = boxes[:2] + boxes[3:]  # drop one wall as well
        rec = SourceSceneRecord("open", boxes, room_trajectory(21))
        scene, traj, _ = ingest_source_scene(rec, name_map, cats)
        decision = filter_scene(scene, traj, FilterRules())
        assert "UNBOUNDED" in decision.reasons

    def test_missing_one_wall_still_bounded(self, table):
        cats, name_map = table
        # 5 of 6 probes still hit shell, which is enough
        boxes = room_boxes()[:5]  # drop the last wall
        rec = SourceSceneRecord("almost", boxes, room_trajectory(21))
        scene, traj, _ = ingest_source_scene(rec, name_map, cats)
        assert filter_scene(scene, traj, FilterRules()).keep

    def test_disallowed_category(self, table):
        cats, name_map = table
        rec = make_record(extra_boxes=(SourceBox("bed", axis_box(-1, -1, 0.3, 1, 0.8, 0.3)),))
        scene, traj, _ = ingest_source_scene(rec, name_map, cats)
        rules = FilterRules(category_whitelist=frozenset({"chair", "table"}))
        assert "DISALLOWED_CATEGORY" in filter_scene(scene, traj, rules).reasons

    def test_whitelist_ignores_shell(self, table):
        cats, name_map = table
        scene, traj, _ = ingest_source_scene(make_record(), name_map, cats)
        rules = FilterRules(category_whitelist=frozenset({"chair"}))
        assert filter_scene(scene, traj, rules).keep

    def test_reasons_accumulate(self, table):
        cats, name_map = table
        full = room_boxes(half_w=20, half_d=20)
        boxes = tuple(b for b in full if b.category_name != "ceiling")
        boxes = boxes[:2] + boxes[3:]
        rec = SourceSceneRecord("bad", boxes, room_trajectory(5))
        scene, traj, _ = ingest_source_scene(rec, name_map, cats)
        reasons = set(filter_scene(scene, traj, FilterRules()).reasons)
        assert {"EXCESSIVE_EXTENT", "TOO_FEW_FRAMES", "UNBOUNDED"} <= reasons

    def test_rules_from_dict(self):
        rules = FilterRules.from_dict(
            {"max_extent_m": 10, "min_frames": 3, "category_whitelist": ["bed"]}
        )
        assert rules.max_extent_m == 10.0
        assert rules.min_frames == 3
        assert rules.category_whitelist == frozenset({"bed"})


class TestBuildDataset:
    def records(self):
        return [
            make_record("scene_b"),
            make_record("scene_a"),
            # rejected: too few frames
            make_record("scene_tiny", n_frames=3),
        ]

    def test_builds_and_orders_by_scene_id(self, table, tmp_path):
        cats, name_map = table
        manifest = build_dataset(
            self.records(), FilterRules(min_frames=10), name_map, cats,
            RenderConfig(), tmp_path,
        )
        scene_ids = [e["scene_id"] for e in manifest.entries]
        assert scene_ids == sorted(scene_ids)
        assert {e["scene_id"] for e in manifest.entries} == {"scene_a", "scene_b"}
        assert manifest.rejected[0]["scene_id"] == "scene_tiny"
        assert manifest.base_prompt == BASE_PROMPT
        # every referenced file exists
        for e in manifest.entries:
            for p in e["bbi_paths"].values():
                assert (tmp_path / p).exists()
        assert (tmp_path / "manifest.json").exists()

    def test_deterministic_output_tree(self, table, tmp_path):
        cats, name_map = table
        rules = FilterRules(min_frames=10)
        m1 = build_dataset(self.records(), rules, name_map, cats, RenderConfig(), tmp_path / "a")
        m2 = build_dataset(self.records(), rules, name_map, cats, RenderConfig(), tmp_path / "b")
        assert manifest_hash(m1) == manifest_hash(m2)
        files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.png"))
        for rel in files_a:
            ha = hashlib.sha256((tmp_path / "a" / rel).read_bytes()).hexdigest()
            hb = hashlib.sha256((tmp_path / "b" / rel).read_bytes()).hexdigest()
            assert ha == hb, rel

    def test_failed_scene_recorded_not_fatal(self, table, tmp_path):
        cats, name_map = table
        bad = SourceSceneRecord(
            "scene_bad",
            (SourceBox("zeppelin", axis_box(0, 0, 1, 0.5, 0.5, 0.5)),),
            room_trajectory(21),
        )
        manifest = build_dataset(
            [make_record("scene_a"), bad], FilterRules(min_frames=10),
            name_map, cats, RenderConfig(), tmp_path,
        )
        assert manifest.errors == [
            {"scene_id": "scene_bad", "code": "NO_MAPPABLE_OBJECTS",
             "message": manifest.errors[0]["message"]}
        ]
        assert {e["scene_id"] for e in manifest.entries} == {"scene_a"}

    def test_all_failed_raises(self, table, tmp_path):
        cats, name_map = table
        bad = SourceSceneRecord(
            "scene_bad",
            (SourceBox("zeppelin", axis_box(0, 0, 1, 0.5, 0.5, 0.5)),),
            room_trajectory(21),
        )
        with pytest.raises(SceneError) as ei:
            build_dataset([bad], FilterRules(), name_map, cats, RenderConfig(), tmp_path)
        assert ei.value.code == "ALL_SCENES_FAILED"

    def test_duplicate_frames_deduped(self, table, tmp_path):
        cats, name_map = table
        rec = make_record("scene_a")
        manifest = build_dataset(
            [rec, rec], FilterRules(min_frames=10), name_map, cats, RenderConfig(), tmp_path
        )
        keys = [(e["scene_id"], e["frame_id"]) for e in manifest.entries]
        assert len(keys) == len(set(keys))

    def test_manifest_round_trip(self, table, tmp_path):
        cats, name_map = table
        manifest = build_dataset(
            [make_record("scene_a")], FilterRules(min_frames=10),
            name_map, cats, RenderConfig(), tmp_path,
        )
        back = load_manifest(tmp_path / "manifest.json")
        assert manifest_hash(back) == manifest_hash(manifest)
        assert back.dataset_id == manifest.dataset_id
