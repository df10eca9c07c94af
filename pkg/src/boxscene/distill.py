"""Simulator of the dataset-replacement distillation loop.

Everything neural is behind two small interfaces: a generator (given a
proxy map, a prompt, an init image, and a strength in [0, 1], produce an
image) and a trainable scene representation (render a view, take a train
step, clone). Reference mocks make the whole protocol executable and
checkable: the annealed replacement loop, the hinge-squared depth
constraint, the coarse/fine migration cycle, and the two-worker scheduling
contract with its sequential-equivalence guarantee.
"""
from __future__ import annotations

import hashlib
import math
import queue
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .render import BoundingBoxImage, RenderConfig, normalize_depth
from .camera import Pose


class DistillError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# ---------------------------------------------------------------------------
# losses

@dataclass(frozen=True)
class DepthConstraintConfig:
    delta: float = 0.25  # soft threshold, meters
    active: bool = True
    disable_after_iter: int = 0  # 0 = never disabled

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")

    def weight_active(self, iteration: int) -> bool:
        if not self.active:
            return False
        if self.disable_after_iter and iteration >= self.disable_after_iter:
            return False
        return True


def depth_constraint_loss(
    d_render: np.ndarray,
    d_layout: np.ndarray,
    delta: float,
    norm_mode: str = "per_pixel",
) -> tuple[float, np.ndarray]:
    """Hinge-squared depth penalty with a dead zone of width delta.

    per_pixel (default): r_p = max(|diff_p| - delta, 0); loss = mean(r_p^2)
    over valid pixels, gradient (2/N) r_p sign(diff_p). per_image applies the
    hinge to the l2 norm of the whole valid difference instead. Pixels where
    the layout depth is the no-hit sentinel (non-finite) are masked out.
    """
    if d_render.shape != d_layout.shape:
        raise DistillError("SHAPE_MISMATCH", f"{d_render.shape} vs {d_layout.shape}")
    mask = np.isfinite(d_layout)
    n = int(mask.sum())
    grad = np.zeros_like(d_render, dtype=np.float64)
    if n == 0:
        return 0.0, grad
    diff = np.where(mask, d_render - d_layout, 0.0)
    if norm_mode == "per_pixel":
        r = np.maximum(np.abs(diff) - delta, 0.0)
        loss = float(np.mean(r[mask] ** 2))
        grad[mask] = (2.0 / n) * (r * np.sign(diff))[mask]
        return loss, grad
    if norm_mode == "per_image":
        norm = float(np.sqrt(np.sum(diff**2)))
        r = max(norm - delta, 0.0)
        if r > 0.0 and norm > 0.0:
            grad[mask] = 2.0 * r * (diff / norm)[mask]
        return r * r, grad
    raise ValueError(f"unknown norm_mode {norm_mode!r}")


class FeatureExtractor(Protocol):
    def features(self, image: np.ndarray) -> list[np.ndarray]: ...


class PatchStatisticsExtractor:
    """Reference perceptual features: local mean and variance pyramids.

    Scale 0 is the raw image, so the induced distance is zero iff the images
    are equal; coarser scales add the low-frequency statistics a texture loss
    cares about. A stand-in for a pretrained feature network, pluggable via
    the FeatureExtractor protocol.
    """

    def __init__(self, scales: Sequence[int] = (1, 2, 4), window: int = 4):
        self.scales = tuple(scales)
        self.window = window

    def features(self, image: np.ndarray) -> list[np.ndarray]:
        img = image.astype(np.float64)
        feats = [img]
        for s in self.scales:
            down = _block_reduce(img, s)
            feats.append(_local_stats(down, self.window))
        return feats


def _block_reduce(img: np.ndarray, s: int) -> np.ndarray:
    if s == 1:
        return img
    h, w = img.shape[:2]
    hh, ww = h // s * s, w // s * s
    img = img[:hh, :ww]
    if img.ndim == 3:
        return img.reshape(hh // s, s, ww // s, s, -1).mean(axis=(1, 3))
    return img.reshape(hh // s, s, ww // s, s).mean(axis=(1, 3))


def _local_stats(img: np.ndarray, window: int) -> np.ndarray:
    h, w = img.shape[:2]
    win = max(1, min(window, h, w))
    hh, ww = h // win * win, w // win * win
    img = img[:hh, :ww]
    if img.ndim == 2:
        img = img[..., None]
    blocks = img.reshape(hh // win, win, ww // win, win, -1)
    mu = blocks.mean(axis=(1, 3))
    var = blocks.var(axis=(1, 3))
    return np.concatenate([mu, var], axis=-1)


def perceptual_distance(a: np.ndarray, b: np.ndarray, extractor: FeatureExtractor) -> float:
    fa = extractor.features(a)
    fb = extractor.features(b)
    return float(sum(np.mean((x - y) ** 2) for x, y in zip(fa, fb)))


@dataclass(frozen=True)
class LossWeights:
    w_img: float = 1.0
    w_depth: float = 1.0
    w_perc: float = 0.1


def composite_loss(
    rendered: np.ndarray,
    generated: np.ndarray,
    d_render: np.ndarray,
    d_layout: np.ndarray,
    weights: LossWeights,
    depth_cfg: DepthConstraintConfig,
    iteration: int = 0,
    perceptual: Optional[FeatureExtractor] = None,
) -> tuple[float, dict[str, float]]:
    """w_img * MSE + w_depth * hinge depth loss (while active) + w_perc * perceptual."""
    if rendered.shape != generated.shape:
        raise DistillError("SHAPE_MISMATCH", f"{rendered.shape} vs {generated.shape}")
    img_term = float(np.mean((rendered - generated) ** 2))
    depth_term = 0.0
    if depth_cfg.weight_active(iteration) and weights.w_depth != 0.0:
        depth_term, _ = depth_constraint_loss(d_render, d_layout, depth_cfg.delta)
    perc_term = 0.0
    if perceptual is not None and weights.w_perc != 0.0:
        perc_term = perceptual_distance(rendered, generated, perceptual)
    breakdown = {
        "image": weights.w_img * img_term,
        "depth": weights.w_depth * depth_term,
        "perceptual": weights.w_perc * perc_term,
    }
    return sum(breakdown.values()), breakdown


# ---------------------------------------------------------------------------
# annealing

@dataclass(frozen=True)
class AnnealingSchedule:
    total_iters: int
    s_start: float = 0.98
    s_end: float = 0.35
    shape: str = "linear"

    def __post_init__(self):
        if not (0.0 < self.s_end <= self.s_start <= 1.0):
            raise ValueError("require 0 < s_end <= s_start <= 1")
        if self.shape not in ("linear", "cosine"):
            raise ValueError(f"unknown schedule shape {self.shape!r}")

    def strength(self, iteration: int) -> float:
        if iteration < 0:
            raise ValueError("iteration must be >= 0")
        if self.total_iters <= 0 or iteration >= self.total_iters:
            return self.s_end
        u = iteration / self.total_iters
        if self.shape == "linear":
            f = 1.0 - u
        else:
            f = 0.5 * (1.0 + math.cos(math.pi * u))
        return self.s_end + (self.s_start - self.s_end) * f


def annealing_strength(iteration: int, schedule: AnnealingSchedule) -> float:
    return schedule.strength(iteration)


# ---------------------------------------------------------------------------
# view dataset

@dataclass
class ViewEntry:
    frame_id: str
    pose: Optional[Pose]
    bbi: BoundingBoxImage
    supervision_image: np.ndarray  # (H, W, 3) float in [0, 1]
    generation_epoch: int = 0
    last_strength: float = 0.0


def select_next_view(dataset: Sequence[ViewEntry]) -> int:
    """Least-recently-replaced: minimal (generation_epoch, dataset order)."""
    return min(range(len(dataset)), key=lambda i: (dataset[i].generation_epoch, i))


# ---------------------------------------------------------------------------
# mock generator and representation

def target_oracle_image(
    bbi: BoundingBoxImage,
    palette: np.ndarray,
    cfg: RenderConfig = RenderConfig(),
) -> np.ndarray:
    """Deterministic colorization of a proxy map: palette color per category,
    shaded by normalized depth. The fixed ground truth the mock loop chases."""
    rgb = palette[np.clip(bbi.semantic, 0, len(palette) - 1)].astype(np.float64) / 255.0
    shade = 1.0 - 0.6 * normalize_depth(bbi, cfg)[..., None]
    return np.clip(rgb * shade, 0.0, 1.0)


class BlendGenerator:
    """Mock generator: blend of the oracle target and the init image.

    strength 0 returns the init image exactly; noise is keyed on
    (seed, frame_id, epoch) so output is independent of call order, which the
    two-worker equivalence contract relies on.
    """

    def __init__(
        self,
        palette: np.ndarray,
        seed: int = 0,
        noise_scale: float = 0.005,
        cfg: RenderConfig = RenderConfig(),
    ):
        self.palette = palette
        self.seed = seed
        self.noise_scale = noise_scale
        self.cfg = cfg

    def target(self, bbi: BoundingBoxImage) -> np.ndarray:
        return target_oracle_image(bbi, self.palette, self.cfg)

    def generate(
        self,
        bbi: BoundingBoxImage,
        prompt: str,
        init_image: np.ndarray,
        strength: float,
        frame_id: str = "",
        epoch: int = 0,
    ) -> np.ndarray:
        if not (0.0 <= strength <= 1.0):
            raise ValueError("strength must be in [0, 1]")
        if strength == 0.0:
            return init_image.copy()
        key = hashlib.sha256(f"{self.seed}|{frame_id}|{epoch}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(key[:8], "little"))
        noise = rng.standard_normal(init_image.shape) * self.noise_scale * strength
        out = (1.0 - strength) * init_image + strength * self.target(bbi) + noise
        return np.clip(out, 0.0, 1.0)


class EmaImageStore:
    """Mock scene representation: one exponential-moving-average image per
    view, with the layout depth as its depth channel. A train step moves each
    batched view's stored image toward its supervision image."""

    def __init__(
        self,
        dataset: Sequence[ViewEntry],
        lr: float = 0.8,
        init_value: float = 0.5,
        cfg: RenderConfig = RenderConfig(),
        name: str = "S",
    ):
        self.lr = lr
        self.init_value = init_value
        self.cfg = cfg
        self.name = name
        self.frozen = False
        self.images: dict[str, np.ndarray] = {
            v.frame_id: np.full_like(v.supervision_image, init_value) for v in dataset
        }
        self._depths: dict[str, np.ndarray] = {v.frame_id: v.bbi.depth for v in dataset}

    def render(self, view: ViewEntry) -> tuple[np.ndarray, np.ndarray]:
        return self.images[view.frame_id].copy(), self._depths[view.frame_id].copy()

    def train_step(self, batch: Sequence[ViewEntry], weights: LossWeights,
                   depth_cfg: DepthConstraintConfig, iteration: int = 0) -> float:
        if self.frozen:
            raise DistillError("FROZEN_REPRESENTATION", f"train_step on frozen {self.name}")
        total = 0.0
        for view in batch:
            rendered, d_render = self.render(view)
            loss, _ = composite_loss(
                rendered, view.supervision_image, d_render, view.bbi.depth,
                weights, depth_cfg, iteration,
            )
            total += loss
            img = self.images[view.frame_id]
            img += self.lr * (view.supervision_image - img)
        return total / max(1, len(batch))

    def clone(self, fresh: bool = False, name: Optional[str] = None) -> "EmaImageStore":
        out = EmaImageStore.__new__(EmaImageStore)
        out.lr = self.lr
        out.init_value = self.init_value
        out.cfg = self.cfg
        out.name = name or self.name
        out.frozen = False
        out._depths = dict(self._depths)
        if fresh:
            out.images = {k: np.full_like(v, self.init_value) for k, v in self.images.items()}
        else:
            out.images = {k: v.copy() for k, v in self.images.items()}
        return out

    def mean_error_to(self, targets: dict[str, np.ndarray]) -> float:
        errs = [np.mean(np.abs(self.images[k] - t)) for k, t in targets.items()]
        return float(np.mean(errs))


# ---------------------------------------------------------------------------
# distillation state and loop

@dataclass
class DistillationConfig:
    schedule: AnnealingSchedule
    early_stage_iters: int = 0  # E; 0 = derived as 20% of total
    migration_interval: int = 2000  # M
    sync_interval: int = 250  # m, must be < M
    weights: LossWeights = field(default_factory=LossWeights)
    depth: DepthConstraintConfig = field(default_factory=DepthConstraintConfig)
    seed: int = 0
    prompt: str = "This is one view of a room."

    def __post_init__(self):
        if self.sync_interval >= self.migration_interval:
            raise ValueError("sync_interval m must be < migration_interval M")
        if self.early_stage_iters <= 0:
            self.early_stage_iters = max(1, self.schedule.total_iters // 5)
        if self.depth.disable_after_iter == 0:
            # default: depth constraint for the first 30% of the run
            self.depth = replace(
                self.depth, disable_after_iter=max(1, int(0.3 * self.schedule.total_iters))
            )


class EventLog:
    """Append-only, thread-safe event list with a global sequence number."""

    def __init__(self):
        self._events: list[dict] = []
        self._lock = threading.Lock()

    def emit(self, worker: str, kind: str, iteration: int, **extra) -> None:
        with self._lock:
            self._events.append(
                {"seq": len(self._events), "worker": worker, "event": kind,
                 "iter": iteration, **extra}
            )

    @property
    def events(self) -> list[dict]:
        return list(self._events)


@dataclass
class DistillationState:
    config: DistillationConfig
    dataset: list[ViewEntry]
    s_c: EmaImageStore
    s_f: Optional[EmaImageStore] = None
    iteration: int = 0

    @property
    def trainee(self) -> EmaImageStore:
        return self.s_f if self.s_f is not None else self.s_c

    @property
    def render_source(self) -> EmaImageStore:
        # before migration the single representation serves both roles;
        # afterwards the frozen coarse copy supplies generator init images
        return self.s_c


def migrate(state: DistillationState, log: Optional[EventLog] = None) -> DistillationState:
    """Apply the migration-protocol boundary at the current iteration.

    At E the fine representation is created from scratch and the coarse one
    is frozen; every M iterations after E the coarse copy is replaced by a
    frozen snapshot of the fine one and a new fine representation starts
    fresh (role swap, restarting the cycle).
    """
    cfg = state.config
    i = state.iteration
    if i < cfg.early_stage_iters:
        raise DistillError(
            "MIGRATION_BEFORE_EARLY_STAGE",
            f"iteration {i} < early stage end {cfg.early_stage_iters}",
        )
    log = log or EventLog()
    if state.s_f is None:
        state.s_f = state.s_c.clone(fresh=True, name="S_f")
        state.s_c.frozen = True
        log.emit("scheduler", "migrate_create_sf", i)
        log.emit("scheduler", "freeze", i, target="S_c")
    else:
        snapshot = state.s_f.clone(name="S_c")
        snapshot.frozen = True
        state.s_c = snapshot
        state.s_f = state.s_f.clone(fresh=True, name="S_f")
        log.emit("scheduler", "swap", i)
    return state


def _maybe_migrate(state: DistillationState, log: EventLog) -> None:
    cfg = state.config
    i = state.iteration
    if i == cfg.early_stage_iters and state.s_f is None:
        migrate(state, log)
    elif state.s_f is not None and i > cfg.early_stage_iters:
        if (i - cfg.early_stage_iters) % cfg.migration_interval == 0:
            migrate(state, log)


def step_distillation(
    state: DistillationState,
    generator: BlendGenerator,
    log: Optional[EventLog] = None,
    worker: str = "sequential",
) -> DistillationState:
    """One loop iteration: pick the least-recently-replaced view, regenerate
    its supervision image at the annealed strength, and train on it."""
    log = log if log is not None else EventLog()
    cfg = state.config
    i = state.iteration
    _maybe_migrate(state, log)

    idx = select_next_view(state.dataset)
    view = state.dataset[idx]
    strength = cfg.schedule.strength(i)

    init_image, _ = state.render_source.render(view)
    log.emit(worker, "render", i, frame_id=view.frame_id, source=state.render_source.name)
    generated = generator.generate(
        view.bbi, cfg.prompt, init_image, strength,
        frame_id=view.frame_id, epoch=view.generation_epoch + 1,
    )
    log.emit(worker, "generate", i, frame_id=view.frame_id, strength=strength)

    view.supervision_image = generated
    view.generation_epoch += 1
    view.last_strength = strength
    log.emit(worker, "dataset_update", i, frame_id=view.frame_id, epoch=view.generation_epoch)

    weights = cfg.weights
    if not cfg.depth.weight_active(i):
        weights = replace(weights, w_depth=0.0)
    loss = state.trainee.train_step([view], weights, cfg.depth, i)
    log.emit(worker, "train_step", i, frame_id=view.frame_id,
             target=state.trainee.name, loss=loss)

    if state.s_f is not None and cfg.sync_interval > 0 and (i + 1) % cfg.sync_interval == 0:
        # dataset re-sync: fold the full current dataset into the fine model
        sync_loss = state.s_f.train_step(state.dataset, weights, cfg.depth, i)
        log.emit(worker, "sync", i, target="S_f", loss=sync_loss)

    state.iteration += 1
    return state


def run_sequential(
    state: DistillationState, generator: BlendGenerator, iters: int
) -> tuple[DistillationState, EventLog]:
    log = EventLog()
    for _ in range(iters):
        step_distillation(state, generator, log)
    return state, log


# ---------------------------------------------------------------------------
# two-worker scheduler

def run_two_worker(
    state: DistillationState,
    generator: BlendGenerator,
    iters: int,
    queue_timeout: float = 30.0,
) -> tuple[DistillationState, EventLog]:
    """Generation worker and training worker on separate threads.

    All communication goes through two ordered queues: render requests
    (G -> T, serviced at T's step boundaries) and dataset updates (G -> T,
    applied in queue order before the train step that consumes them). The
    final state is observationally equal to a sequential run with the same
    seed and schedule.
    """
    log = EventLog()
    cfg = state.config
    render_requests: "queue.Queue[tuple[int, int]]" = queue.Queue()
    render_replies: "queue.Queue[np.ndarray]" = queue.Queue()
    dataset_updates: "queue.Queue[tuple[int, int, np.ndarray, float]]" = queue.Queue()
    failure: list[BaseException] = []

    # G's private ledger of epochs: it is the only producer of replacements,
    # so it can run view selection without touching shared state.
    epochs = [v.generation_epoch for v in state.dataset]
    start_iter = state.iteration

    def worker_g() -> None:
        try:
            for i in range(start_iter, start_iter + iters):
                idx = min(range(len(epochs)), key=lambda k: (epochs[k], k))
                view = state.dataset[idx]
                log.emit("worker-g", "render_request", i, frame_id=view.frame_id)
                render_requests.put((i, idx))
                init_image = _get(render_replies, queue_timeout, "render reply")
                strength = cfg.schedule.strength(i)
                generated = generator.generate(
                    view.bbi, cfg.prompt, init_image, strength,
                    frame_id=view.frame_id, epoch=epochs[idx] + 1,
                )
                log.emit("worker-g", "generate", i, frame_id=view.frame_id, strength=strength)
                epochs[idx] += 1
                dataset_updates.put((i, idx, generated, strength))
        except BaseException as exc:  # propagate to the caller thread
            failure.append(exc)

    def worker_t() -> None:
        try:
            for _ in range(iters):
                i = state.iteration
                _maybe_migrate(state, log)

                # step boundary: switch to offline rendering for the pending request
                req_iter, idx = _get(render_requests, queue_timeout, "render request")
                assert req_iter == i
                view = state.dataset[idx]
                init_image, _ = state.render_source.render(view)
                log.emit("worker-t", "render", i, frame_id=view.frame_id,
                         source=state.render_source.name)
                render_replies.put(init_image)

                upd_iter, upd_idx, generated, strength = _get(
                    dataset_updates, queue_timeout, "dataset update"
                )
                assert upd_iter == i and upd_idx == idx
                view.supervision_image = generated
                view.generation_epoch += 1
                view.last_strength = strength
                log.emit("worker-t", "dataset_update", i, frame_id=view.frame_id,
                         epoch=view.generation_epoch)

                weights = cfg.weights
                if not cfg.depth.weight_active(i):
                    weights = replace(weights, w_depth=0.0)
                loss = state.trainee.train_step([view], weights, cfg.depth, i)
                log.emit("worker-t", "train_step", i, frame_id=view.frame_id,
                         target=state.trainee.name, loss=loss)

                if state.s_f is not None and cfg.sync_interval > 0 and (i + 1) % cfg.sync_interval == 0:
                    sync_loss = state.s_f.train_step(state.dataset, weights, cfg.depth, i)
                    log.emit("worker-t", "sync", i, target="S_f", loss=sync_loss)

                state.iteration += 1
        except BaseException as exc:
            failure.append(exc)

    tg = threading.Thread(target=worker_g, name="worker-g")
    tt = threading.Thread(target=worker_t, name="worker-t")
    tg.start()
    tt.start()
    tg.join(timeout=queue_timeout * max(1, iters))
    tt.join(timeout=queue_timeout * max(1, iters))
    if failure:
        raise failure[0]
    if tg.is_alive() or tt.is_alive():
        raise DistillError("DEADLOCK_TIMEOUT", "workers failed to finish")
    return state, log


def _get(q: "queue.Queue", timeout: float, what: str):
    try:
        return q.get(timeout=timeout)
    except queue.Empty as exc:
        raise DistillError("DEADLOCK_TIMEOUT", f"starved waiting for {what}") from exc


# ---------------------------------------------------------------------------
# assembly helpers

def make_initial_state(
    views: Sequence[ViewEntry],
    config: DistillationConfig,
    lr: float = 0.8,
    init_value: float = 0.5,
) -> DistillationState:
    dataset = list(views)
    s_c = EmaImageStore(dataset, lr=lr, init_value=init_value, name="S_c")
    return DistillationState(config=config, dataset=dataset, s_c=s_c)


def mean_view_error(state: DistillationState, targets: dict[str, np.ndarray]) -> float:
    """Mean absolute error of the trainee's renderings against oracle targets."""
    return state.trainee.mean_error_to(targets)
