"""boxscene: bounding-box scene layouts, proxy-map rendering, dataset
building, and a testable simulator of the annealed distillation loop."""

from .geometry import (
    Aabb,
    HitInterval,
    Obb,
    Quat,
    Ray,
    Vec3,
    aabb_of_obb,
    point_in_obb,
    ray_aabb_intersect,
    ray_obb_intersect,
)
from .bbs import (
    BoundingBoxScene,
    Category,
    SceneError,
    SceneObject,
    ValidationReport,
    VoxelGrid,
    load_scene,
    save_scene,
    scene_bounds,
    validate_scene,
    voxelize_object,
    voxelize_scene,
)
from .camera import (
    CameraTrajectory,
    Intrinsics,
    Pose,
    interpolate_trajectory,
    look_at_pose,
    pixel_ray,
)
from .render import (
    BoundingBoxImage,
    BvhAccel,
    RenderConfig,
    build_bvh,
    normalize_depth,
    one_hot_encode,
    render_bbi,
    render_bbi_from_voxels,
    render_bbi_linear,
    render_trajectory,
)
from .distill import (
    AnnealingSchedule,
    BlendGenerator,
    DepthConstraintConfig,
    DistillationConfig,
    DistillationState,
    EmaImageStore,
    LossWeights,
    ViewEntry,
    annealing_strength,
    composite_loss,
    depth_constraint_loss,
    migrate,
    run_sequential,
    run_two_worker,
    step_distillation,
)

__version__ = "0.1.0"
