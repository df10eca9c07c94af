"""HTTP service over the toolkit: scene store, validation, voxelization,
synchronous rendering, and asynchronous convert/simulate jobs.

Stateless by construction: responses depend only on the request body and
stored scene content; scenes are stored under their content hash.
"""
from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .bbs import (
    DEFAULT_GRID_CELL_CAP,
    SceneError,
    save_voxel_grid,
    scene_from_dict,
    scene_to_dict,
    validate_scene,
    voxelize_scene,
)
from .camera import Intrinsics, Pose, trajectory_from_dict
from .geometry import Quat, Vec3
from .render import (
    BvhAccel,
    RenderConfig,
    build_bvh,
    depth_to_png,
    preview_to_png,
    render_bbi,
    semantic_to_png,
)

ENV_STORE_DIR = "BBS_STORE_DIR"
ENV_BIND_ADDR = "BBS_BIND_ADDR"
ENV_MAX_GRID_CELLS = "BBS_MAX_GRID_CELLS"


class JobStore:
    """File-backed job records; terminal states are immutable."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def create(self, kind: str) -> dict:
        record = {
            "job_id": uuid.uuid4().hex,
            "kind": kind,
            "status": "queued",
            "artifacts": {},
            "error": None,
        }
        self._write(record)
        return record

    def update(self, job_id: str, **fields) -> dict:
        with self._lock:
            record = self.get(job_id)
            if record["status"] in ("done", "failed"):
                return record
            record.update(fields)
            self._write(record)
            return record

    def get(self, job_id: str) -> dict:
        path = self.root / f"{job_id}.json"
        if not path.exists():
            raise KeyError(job_id)
        return json.loads(path.read_text())

    def _write(self, record: dict) -> None:
        (self.root / f"{record['job_id']}.json").write_text(json.dumps(record, indent=2))


def create_app(store_dir: Optional[str] = None) -> FastAPI:
    store = Path(store_dir or os.environ.get(ENV_STORE_DIR, "./bbs_store"))
    scenes_dir = store / "scenes"
    scenes_dir.mkdir(parents=True, exist_ok=True)
    artifacts_dir = store / "artifacts"
    artifacts_dir.mkdir(parents=True, exist_ok=True)
    jobs = JobStore(store / "jobs")
    grid_cap = int(os.environ.get(ENV_MAX_GRID_CELLS, DEFAULT_GRID_CELL_CAP))

    app = FastAPI(title="boxscene service")
    accel_cache: dict[str, BvhAccel] = {}
    cache_lock = threading.Lock()

    def _scene_hash(doc: dict) -> str:
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:24]

    def _load_scene_doc(payload: dict) -> tuple[dict, str]:
        inline = payload.get("scene")
        scene_id = payload.get("scene_id")
        if (inline is None) == (scene_id is None):
            raise HTTPException(400, "exactly one of 'scene' or 'scene_id' required")
        if inline is not None:
            return inline, _scene_hash(inline)
        path = scenes_dir / f"{scene_id}.json"
        if not path.exists():
            raise HTTPException(404, f"unknown scene_id {scene_id}")
        return json.loads(path.read_text()), str(scene_id)

    def _decode_scene(payload: dict):
        doc, sid = _load_scene_doc(payload)
        report = validate_scene(doc)
        if not report.ok:
            raise HTTPException(422, detail=report.to_dict())
        scene = scene_from_dict(doc)
        with cache_lock:
            accel = accel_cache.get(sid)
            if accel is None:
                accel = build_bvh(scene)
                accel_cache[sid] = accel
        return scene, accel, sid

    @app.post("/v1/scenes")
    def store_scene(doc: dict = Body(...)):
        report = validate_scene(doc)
        if not report.ok:
            raise HTTPException(422, detail=report.to_dict())
        sid = _scene_hash(doc)
        (scenes_dir / f"{sid}.json").write_text(json.dumps(doc, sort_keys=True))
        return {"scene_id": sid}

    @app.get("/v1/scenes/{scene_id}")
    def get_scene(scene_id: str):
        path = scenes_dir / f"{scene_id}.json"
        if not path.exists():
            raise HTTPException(404, f"unknown scene_id {scene_id}")
        return json.loads(path.read_text())

    @app.post("/v1/validate")
    def validate(doc: dict = Body(...)):
        return validate_scene(doc).to_dict()

    @app.post("/v1/voxelize")
    def voxelize(payload: dict = Body(...)):
        scene, _, sid = _decode_scene(payload)
        unit = float(payload.get("unit", 0.2))
        policy = payload.get("policy", "overlap")
        try:
            grid = voxelize_scene(scene, unit=unit, policy=policy, cell_cap=grid_cap)
        except SceneError as exc:
            raise HTTPException(422, detail={"code": exc.code, "message": str(exc)})
        name = f"{sid}_{unit}_{policy}.bbsvox"
        save_voxel_grid(grid, artifacts_dir / name, scene.categories)
        return {
            "scene_id": sid,
            "origin": list(grid.origin.as_tuple()),
            "unit": grid.unit,
            "dims": list(grid.dims),
            "occupied": grid.occupied_count(),
            "artifact": name,
        }

    @app.post("/v1/render")
    def render(payload: dict = Body(...)):
        scene, accel, sid = _decode_scene(payload)
        intr = Intrinsics.from_dict(payload["intrinsics"]) if "intrinsics" in payload \
            else Intrinsics.from_vfov()
        p = payload["pose"]
        pose = Pose(
            Vec3(*[float(v) for v in p["position"]]),
            Quat.normalize(*[float(v) for v in p["rotation_quat"]]),
        )
        cfg_d = payload.get("cfg", {})
        cfg = RenderConfig(
            near=float(cfg_d.get("near", 0.01)), far=float(cfg_d.get("far", 40.0))
        )
        outputs = payload.get("outputs", ["semantic_png", "depth_png", "preview_png"])
        bbi = render_bbi(scene, accel, intr, pose, cfg, frame_id=payload.get("frame_id", ""))
        images: dict[str, str] = {}
        if "semantic_png" in outputs:
            images["semantic_png"] = _png_b64(semantic_to_png, bbi, scene.categories)
        if "depth_png" in outputs:
            images["depth_png"] = _png_b64(depth_to_png, bbi, cfg)
        if "preview_png" in outputs:
            images["preview_png"] = _png_b64(preview_to_png, bbi, scene.categories, cfg)
        return {"scene_id": sid, "frame_id": bbi.pose_ref, "images": images}

    @app.post("/v1/jobs/convert")
    def job_convert(payload: dict = Body(...)):
        record = jobs.create("convert")
        thread = threading.Thread(
            target=_run_convert, args=(jobs, record["job_id"], payload, artifacts_dir)
        )
        thread.start()
        return record

    @app.post("/v1/jobs/simulate")
    def job_simulate(payload: dict = Body(...)):
        record = jobs.create("simulate")
        thread = threading.Thread(
            target=_run_simulate, args=(jobs, record["job_id"], payload, artifacts_dir)
        )
        thread.start()
        return record

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            return jobs.get(job_id)
        except KeyError:
            raise HTTPException(404, f"unknown job {job_id}")

    @app.exception_handler(SceneError)
    def scene_error_handler(_, exc: SceneError):
        return JSONResponse(status_code=422, content={"code": exc.code, "message": str(exc)})

    return app


def _png_b64(writer, bbi, *args) -> str:
    buf = io.BytesIO()
    writer(bbi, *args, buf)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _run_convert(jobs: JobStore, job_id: str, payload: dict, artifacts_dir: Path) -> None:
    from .pipeline_runner import run_convert_payload

    jobs.update(job_id, status="running")
    try:
        result = run_convert_payload(payload, artifacts_dir / job_id)
        jobs.update(job_id, status="done", artifacts=result)
    except Exception as exc:
        jobs.update(job_id, status="failed", error=str(exc))


def _run_simulate(jobs: JobStore, job_id: str, payload: dict, artifacts_dir: Path) -> None:
    from .pipeline_runner import run_simulate_payload

    jobs.update(job_id, status="running")
    try:
        result = run_simulate_payload(payload, artifacts_dir / job_id)
        jobs.update(job_id, status="done", artifacts=result)
    except Exception as exc:
        jobs.update(job_id, status="failed", error=str(exc))
