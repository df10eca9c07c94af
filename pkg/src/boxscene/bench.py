"""Render benchmarking: BVH vs linear scan, timing percentiles, rays/sec."""
from __future__ import annotations

import statistics
import time
from typing import Optional

import numba

from .bbs import BoundingBoxScene
from .camera import CameraTrajectory
from .render import RenderConfig, build_bvh, render_bbi, render_bbi_linear


def bench(
    scene: BoundingBoxScene,
    traj: CameraTrajectory,
    cfg: RenderConfig = RenderConfig(),
    repetitions: int = 3,
    compare_linear: bool = True,
    threads: Optional[int] = None,
) -> dict:
    """Time the BVH render per frame; optionally race the linear scan and
    verify the outputs agree. Structure of the report is deterministic even
    though the timings are not."""
    if threads:
        numba.set_num_threads(threads)
    accel = build_bvh(scene)
    intr = traj.intrinsics
    # warm-up pass compiles the kernels outside the timed region
    render_bbi(scene, accel, intr, traj.poses[0], cfg)

    frames = []
    rays_per_frame = intr.width * intr.height
    total_elapsed = 0.0
    for fid, pose in zip(traj.frame_ids, traj.poses):
        samples = []
        for _ in range(max(1, repetitions)):
            t0 = time.perf_counter()
            bbi = render_bbi(scene, accel, intr, pose, cfg, frame_id=fid)
            samples.append(time.perf_counter() - t0)
        samples.sort()
        p50 = statistics.median(samples)
        p95 = samples[min(len(samples) - 1, int(0.95 * len(samples)))]
        total_elapsed += sum(samples)
        frame = {
            "frame_id": fid,
            "p50_ms": p50 * 1000.0,
            "p95_ms": p95 * 1000.0,
            "rays_per_sec": rays_per_frame / p50,
        }
        if compare_linear:
            t0 = time.perf_counter()
            linear = render_bbi_linear(accel.arrays, intr, pose, cfg, frame_id=fid)
            frame["linear_ms"] = (time.perf_counter() - t0) * 1000.0
            frame["outputs_match"] = bool(
                (bbi.semantic == linear.semantic).all()
                and _depth_close(bbi.depth, linear.depth)
            )
        frames.append(frame)
    outputs_match = all(f.get("outputs_match", True) for f in frames)
    return {
        "outputs_match": outputs_match,
        "width": intr.width,
        "height": intr.height,
        "boxes": accel.arrays.n_boxes,
        "repetitions": repetitions,
        "threads": numba.get_num_threads(),
        "frames": frames,
        "total_rays": rays_per_frame * len(frames) * max(1, repetitions),
        "total_elapsed_s": total_elapsed,
        "rays_per_sec": rays_per_frame * len(frames) * max(1, repetitions) / total_elapsed,
    }


def _depth_close(a, b, rel: float = 1e-6) -> bool:
    import numpy as np

    fa, fb = np.isfinite(a), np.isfinite(b)
    if not (fa == fb).all():
        return False
    return bool(np.allclose(a[fa], b[fb], rtol=rel, atol=1e-9))
