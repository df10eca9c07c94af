"""Glue that runs the dataset pipeline and the distillation simulator from
plain JSON payloads; shared by the CLI and the service's async jobs."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from .bbs import Category, SceneError
from .camera import Intrinsics
from .dataset import (
    BASE_PROMPT,
    FilterRules,
    build_dataset,
    load_manifest,
    manifest_hash,
    record_from_dict,
)
from .distill import (
    AnnealingSchedule,
    BlendGenerator,
    DepthConstraintConfig,
    DistillationConfig,
    LossWeights,
    ViewEntry,
    make_initial_state,
    mean_view_error,
    run_sequential,
    run_two_worker,
)
from .render import BoundingBoxImage, RenderConfig


def load_category_table(path: Union[str, Path]) -> tuple[list[Category], dict[str, int]]:
    doc = json.loads(Path(path).read_text())
    cats = [Category(int(c["id"]), str(c["name"]), tuple(int(v) for v in c["color"]))
            for c in doc["categories"]]
    return cats, {c.name: c.id for c in cats}


def default_category_table() -> tuple[list[Category], dict[str, int]]:
    path = Path(__file__).parent / "data" / "default_categories.json"
    return load_category_table(path)


def run_convert_payload(payload: dict, out_dir: Union[str, Path]) -> dict:
    input_dir = Path(payload["input_dir"])
    if not input_dir.is_dir():
        raise SceneError("INPUT_NOT_FOUND", f"no such input directory {input_dir}")
    rules = FilterRules.from_dict(payload.get("rules", {}))
    seed = int(payload.get("seed", 0))
    cfg = RenderConfig(
        near=float(payload.get("near", 0.01)), far=float(payload.get("far", 40.0))
    )
    if payload.get("categories_file"):
        categories, category_map = load_category_table(payload["categories_file"])
    else:
        categories, category_map = default_category_table()
    records = [
        record_from_dict(json.loads(p.read_text()))
        for p in sorted(input_dir.glob("*.json"))
    ]
    manifest = build_dataset(
        records, rules, category_map, categories, cfg, out_dir,
        seed=seed, base_prompt=payload.get("base_prompt", BASE_PROMPT),
    )
    return {
        "manifest": str(Path(out_dir) / "manifest.json"),
        "manifest_hash": manifest_hash(manifest),
        "entries": len(manifest.entries),
        "rejected": len(manifest.rejected),
        "errors": len(manifest.errors),
    }


def views_from_dataset(dataset_dir: Union[str, Path], max_views: Optional[int] = None
                       ) -> tuple[list[ViewEntry], np.ndarray, RenderConfig]:
    """Rebuild proxy maps from an exported dataset tree.

    Normalized depth of exactly 1 is read back as the no-hit sentinel; that
    conflates true far-plane hits with misses, which is acceptable for the
    simulator's pseudo-supervision.
    """
    root = Path(dataset_dir)
    manifest = load_manifest(root / "manifest.json")
    views: list[ViewEntry] = []
    palette = np.zeros((256, 3), dtype=np.uint8)
    cfg = RenderConfig()
    for entry in manifest.entries[: max_views or len(manifest.entries)]:
        sem_img = Image.open(root / entry["bbi_paths"]["semantic"])
        pal = sem_img.getpalette()
        if pal:
            palette = np.array(pal, dtype=np.uint8).reshape(-1, 3)
        semantic = np.array(sem_img).astype(np.uint16)
        nd = np.array(Image.open(root / entry["bbi_paths"]["depth"])).astype(np.float64) / 65535.0
        sidecar = json.loads((root / entry["bbi_paths"]["sidecar"]).read_text())
        near, far = float(sidecar["near"]), float(sidecar["far"])
        cfg = RenderConfig(near=near, far=far)
        depth = near + nd * (far - near)
        depth[nd >= 1.0] = np.inf
        h, w = semantic.shape
        bbi = BoundingBoxImage(
            width=w, height=h, semantic=semantic, depth=depth,
            object_ids=np.where(semantic > 0, 0, -1).astype(np.int32),
            pose_ref=entry["frame_id"],
        )
        views.append(
            ViewEntry(
                frame_id=f'{entry["scene_id"]}/{entry["frame_id"]}',
                pose=None,
                bbi=bbi,
                supervision_image=np.full((h, w, 3), 0.5),
            )
        )
    return views, palette, cfg


def run_simulate_payload(payload: dict, out_dir: Union[str, Path]) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    iters = int(payload.get("iters", 100))
    seed = int(payload.get("seed", 0))
    c = payload.get("config", {})
    schedule = AnnealingSchedule(
        total_iters=int(c.get("total_iters", iters)),
        s_start=float(c.get("s_start", 0.98)),
        s_end=float(c.get("s_end", 0.35)),
        shape=c.get("shape", "linear"),
    )
    config = DistillationConfig(
        schedule=schedule,
        early_stage_iters=int(c.get("early_stage_iters", 0)),
        migration_interval=int(c.get("migration_interval", 2000)),
        sync_interval=int(c.get("sync_interval", 250)),
        weights=LossWeights(
            w_img=float(c.get("w_img", 1.0)),
            w_depth=float(c.get("w_depth", 1.0)),
            w_perc=float(c.get("w_perc", 0.1)),
        ),
        depth=DepthConstraintConfig(
            delta=float(c.get("delta", 0.25)),
            disable_after_iter=int(c.get("disable_after_iter", 0)),
        ),
        seed=seed,
        prompt=c.get("prompt", BASE_PROMPT),
    )
    views, palette, cfg = views_from_dataset(
        payload["dataset_dir"], max_views=payload.get("max_views")
    )
    state = make_initial_state(views, config)
    generator = BlendGenerator(palette.astype(np.float64), seed=seed, cfg=cfg)
    targets = {v.frame_id: generator.target(v.bbi) for v in views}

    if payload.get("two_worker"):
        state, log = run_two_worker(state, generator, iters)
    else:
        state, log = run_sequential(state, generator, iters)

    series = _series_from_log(log.events)
    report = {
        "iters": iters,
        "seed": seed,
        "views": len(views),
        "final_mean_error": mean_view_error(state, targets),
        "epochs": [v.generation_epoch for v in state.dataset],
        "series": series,
        "events": log.events,
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2))
    return {"report": str(report_path), "final_mean_error": report["final_mean_error"]}


def _series_from_log(events: list[dict]) -> dict:
    losses = [(e["iter"], e["loss"]) for e in events if e["event"] == "train_step"]
    strengths = [(e["iter"], e["strength"]) for e in events if e["event"] == "generate"]
    migrations = [e for e in events if e["event"] in ("migrate_create_sf", "swap", "freeze")]
    return {
        "train_loss": losses,
        "strength": strengths,
        "migration_events": migrations,
    }
