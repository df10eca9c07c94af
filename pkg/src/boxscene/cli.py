"""Command-line entry points: validate, voxelize, render, convert, simulate,
bench, serve. Every subcommand exits nonzero on error and prints
machine-readable JSON under --json."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bbs import (
    SceneError,
    load_scene,
    save_voxel_grid,
    validate_scene,
    voxelize_scene,
)
from .camera import Intrinsics, load_trajectory
from .render import RenderConfig, build_bvh, export_bbi, render_bbi


@click.group()
def main() -> None:
    """Bounding-box scene toolkit."""


def _emit(payload: dict, as_json: bool, human: str) -> None:
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        click.echo(human)


@main.command()
@click.argument("scene_file", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def validate(scene_file: str, as_json: bool) -> None:
    """Validate a scene JSON document."""
    doc = json.loads(Path(scene_file).read_text())
    report = validate_scene(doc)
    _emit(
        report.to_dict(), as_json,
        f"{len(report.errors)} error(s), {len(report.warnings)} warning(s)",
    )
    if not report.ok:
        sys.exit(1)


@main.command()
@click.argument("scene_file", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--unit", default=0.2, show_default=True)
@click.option("--policy", default="overlap", type=click.Choice(["overlap", "center"]))
@click.option("--json", "as_json", is_flag=True)
def voxelize(scene_file: str, out: str, unit: float, policy: str, as_json: bool) -> None:
    """Voxelize a scene into the binary grid format."""
    try:
        scene = load_scene(scene_file)
        grid = voxelize_scene(scene, unit=unit, policy=policy)
        save_voxel_grid(grid, out, scene.categories)
    except SceneError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    _emit(
        {"dims": list(grid.dims), "occupied": grid.occupied_count(), "out": out},
        as_json, f"wrote {out}: dims {grid.dims}, {grid.occupied_count()} occupied cells",
    )


@main.command()
@click.argument("scene_file", type=click.Path(exists=True))
@click.option("--trajectory", "traj_file", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--near", default=0.01, show_default=True)
@click.option("--far", default=40.0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def render(scene_file: str, traj_file: str, out: str, near: float, far: float,
           as_json: bool) -> None:
    """Render every trajectory frame to semantic/depth PNG pairs."""
    try:
        scene = load_scene(scene_file)
        traj = load_trajectory(traj_file)
        cfg = RenderConfig(near=near, far=far)
        accel = build_bvh(scene)
        for fid, pose in zip(traj.frame_ids, traj.poses):
            bbi = render_bbi(scene, accel, traj.intrinsics, pose, cfg, frame_id=fid)
            export_bbi(bbi, scene.categories, traj.intrinsics, pose, cfg, out, fid)
    except SceneError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    _emit({"frames": len(traj), "out": out}, as_json, f"rendered {len(traj)} frame(s) to {out}")


@main.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--rules", "rules_file", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--unit", default=0.2, show_default=True)
@click.option("--source", default="boxes", type=click.Choice(["boxes", "voxels"]))
@click.option("--json", "as_json", is_flag=True)
def convert(input_dir: str, rules_file: str, out: str, seed: int, unit: float,
            source: str, as_json: bool) -> None:
    """Build a training-pair dataset from source scene records."""
    from .pipeline_runner import run_convert_payload

    payload = {
        "input_dir": input_dir,
        "seed": seed,
        "unit": unit,
        "source": source,
        "rules": json.loads(Path(rules_file).read_text()) if rules_file else {},
    }
    try:
        result = run_convert_payload(payload, out)
    except SceneError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    _emit(result, as_json, f"built {result['entries']} entries -> {result['manifest']}")


@main.command()
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True))
@click.option("--iters", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--report", "report_dir", required=True, type=click.Path())
@click.option("--two-worker", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
def simulate(dataset_dir: str, iters: int, seed: int, config_file: str,
             report_dir: str, two_worker: bool, as_json: bool) -> None:
    """Run the distillation-loop simulator over an exported dataset."""
    from .pipeline_runner import run_simulate_payload

    payload = {
        "dataset_dir": dataset_dir,
        "iters": iters,
        "seed": seed,
        "two_worker": two_worker,
        "config": json.loads(Path(config_file).read_text()) if config_file else {},
    }
    result = run_simulate_payload(payload, report_dir)
    _emit(result, as_json,
          f"report -> {result['report']} (final mean error {result['final_mean_error']:.5f})")


@main.command()
@click.argument("scene_file", type=click.Path(exists=True))
@click.option("--trajectory", "traj_file", required=True, type=click.Path(exists=True))
@click.option("--reps", default=3, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def bench(scene_file: str, traj_file: str, reps: int, as_json: bool) -> None:
    """Benchmark the renderer (BVH vs linear) over a trajectory."""
    from .bench import bench as run_bench

    scene = load_scene(scene_file)
    traj = load_trajectory(traj_file)
    report = run_bench(scene, traj, repetitions=reps)
    human = (
        f"{report['boxes']} boxes @ {report['width']}x{report['height']}: "
        f"{report['rays_per_sec']:.3e} rays/s over {len(report['frames'])} frame(s)"
    )
    _emit(report, as_json, human)


@main.command()
@click.option("--bind", default=None, help="host:port (default env BBS_BIND_ADDR or 127.0.0.1:8000)")
@click.option("--store", default=None, help="scene store dir (default env BBS_STORE_DIR)")
def serve(bind: str, store: str) -> None:
    """Run the HTTP service."""
    import os

    import uvicorn

    from .service import ENV_BIND_ADDR, create_app

    addr = bind or os.environ.get(ENV_BIND_ADDR, "127.0.0.1:8000")
    host, _, port = addr.partition(":")
    app = create_app(store)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))
    except OSError as exc:
        click.echo(f"BIND_FAILURE: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
