"""Training procedures for the predictor, the synthesizer and the updater."""
import logging
from dataclasses import dataclass, field, fields

import numpy as np

from ..autodiff import Tape, Tensor, mean, mse, relu, row_norm, sum_squares
from ..optim import LrSchedule, RmsProp
from .builders import build_predictor, build_synthesizer, build_updater, synth_stages

log = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    batch_size: int = 64
    # full-scale runs use 100 epochs everywhere; these are desk-scale defaults
    epochs_predictor: int = 30
    epochs_synthesizer: int = 30      # per stage
    epochs_updater: int = 20
    lr_predictor: float = 0.01
    lr_synthesizer: float = 0.01
    lr_updater: float = 0.001
    lr_decay: float = 0.95
    gamma: float = 0.001
    lam: float = 0.6
    rms_decay: float = 0.9
    clip: float = 0.01
    clip_mode: str = "element"
    epsilon: float = 1e-6
    sigma_noise: float = 0.1
    copies: int = 2
    augment_period: int = 2
    error_samples: int = 1            # error-distribution poses added per image per round
    max_pairs_per_epoch: int = 0      # 0: every (image, seed pose) pair each epoch
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        for name in ("lr_predictor", "lr_synthesizer", "lr_updater", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def _rng(seed, tag):
    return np.random.default_rng([int(seed), tag])


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _optimizer(model, lr, cfg, weight_decay=0.0):
    return RmsProp(model, LrSchedule(lr, cfg.lr_decay), decay=cfg.rms_decay, epsilon=cfg.epsilon,
                   clip=cfg.clip, clip_mode=cfg.clip_mode, weight_decay=weight_decay)


def frames_4d(frames):
    frames = np.asarray(frames, dtype=np.float64)
    return frames[:, None] if frames.ndim == 3 else frames


def run_batched(fn, n, batch_size=256):
    """Concatenate ``fn(index)`` over consecutive index blocks."""
    outs = [fn(np.arange(s, min(n, s + batch_size))) for s in range(0, n, batch_size)]
    return np.concatenate(outs, axis=0)


# ---------------------------------------------------------------- predictor

def predictor_loss(model, frames, poses):
    """Mean over the batch of the squared joint error (weight decay excluded)."""
    pred = model(Tensor(frames_4d(frames)))
    return sum_squares(pred - Tensor(poses)) * (1.0 / len(poses))


def predict(model, frames, batch_size=256):
    x = frames_4d(frames)
    return run_batched(lambda idx: model(Tensor(x[idx])).data, len(x), batch_size)


def train_predictor(dataset, cfg, model=None):
    """Fit the predictor by RMSprop; returns ``(model, per-epoch mean loss)``.

    The reported loss is the data term; the ``gamma * ||params||^2`` weight
    decay enters through the gradients.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    model = model or build_predictor(dataset.resolution, dataset.joints, seed=cfg.seed)
    model.set_trainable(True)
    opt = _optimizer(model, cfg.lr_predictor, cfg, weight_decay=cfg.gamma)
    rng = _rng(cfg.seed, 1)
    history = []
    for epoch in range(cfg.epochs_predictor):
        total, count = 0.0, 0
        for idx in _batches(len(dataset), cfg.batch_size, rng):
            with Tape():
                loss = predictor_loss(model, dataset.frames[idx], dataset.poses[idx])
                loss.backward()
            opt.step(epoch)
            total += loss.item() * len(idx)
            count += len(idx)
        history.append(total / count)
        log.info("predictor epoch %d loss %.6f", epoch + 1, history[-1])
    model.set_trainable(False)
    return model, history


# -------------------------------------------------------------- synthesizer

def box_downsample(frames, factor):
    """Average non-overlapping ``factor x factor`` blocks of ``(N, R, R)`` frames."""
    if factor == 1:
        return np.asarray(frames, dtype=np.float64)
    n, r, _ = frames.shape
    return frames.reshape(n, r // factor, factor, r // factor, factor).mean(axis=(2, 4))


def upsample_bilinear(frames, factor):
    """Bilinear upsampling of ``(N, r, r)`` frames with pixel-centre alignment."""
    if factor == 1:
        return np.asarray(frames, dtype=np.float64)
    n, r, _ = frames.shape
    coords = (np.arange(r * factor) + 0.5) / factor - 0.5
    coords = np.clip(coords, 0, r - 1)
    lo = np.floor(coords).astype(int)
    hi = np.minimum(lo + 1, r - 1)
    w = coords - lo
    rows = frames[:, lo, :] * (1 - w)[None, :, None] + frames[:, hi, :] * w[None, :, None]
    return rows[:, :, lo] * (1 - w)[None, None, :] + rows[:, :, hi] * w[None, None, :]


def synthesize(model, poses, batch_size=256):
    poses = np.asarray(poses, dtype=np.float64)
    single = poses.ndim == 1
    poses = poses[None] if single else poses
    out = run_batched(lambda idx: model(Tensor(poses[idx])).data[:, 0], len(poses), batch_size)
    return out[0] if single else out


def synthesizer_loss(model, poses, targets):
    out = model(Tensor(poses))
    return mse(out, Tensor(np.asarray(targets)[:, None]))


def grow_synthesizer(model, joints, seed):
    """Append one unpool+conv stage and a fresh combining conv."""
    stages = model.meta["stages"] + 1
    grown = build_synthesizer(model.meta["resolution"] * 2, joints, seed=seed, stages=stages)
    keep = {k: v for k, v in model.arrays().items() if not k.startswith("combine.")}
    for name, t in grown.params.items():
        if name in keep:
            t.data = keep[name].copy()
    return grown


@dataclass
class SynthesizerResult:
    model: object
    history: list = field(default_factory=list)        # per stage: per-epoch losses
    stage_models: list = field(default_factory=list)   # snapshot after each stage

    @property
    def resolutions(self):
        return [m.meta["resolution"] for m in self.stage_models]


def train_synthesizer_layerwise(dataset, cfg, keep_stages=True):
    """Grow the decoder one stage at a time, retraining everything after each growth.

    Stage ``s`` produces ``8 * 2**s`` images and is fit against box-averaged
    targets at that size; the final stage sees full-resolution frames.
    """
    r = dataset.resolution
    full = synth_stages(r)
    if full < 1:
        raise ValueError("layer-wise training needs resolution >= 16")
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    joints = dataset.joints
    result = SynthesizerResult(None)
    model = None
    for stage in range(full + 1):
        seed = [cfg.seed, 100 + stage]
        if model is None:
            model = build_synthesizer(r, joints, seed=seed, stages=0)
        else:
            model = grow_synthesizer(model, joints, seed)
        res = model.meta["resolution"]
        targets = box_downsample(dataset.frames, r // res)
        model.set_trainable(True)
        opt = _optimizer(model, cfg.lr_synthesizer, cfg)
        rng = _rng(cfg.seed, 200 + stage)
        losses = []
        for epoch in range(cfg.epochs_synthesizer):
            total = 0.0
            for idx in _batches(len(dataset), cfg.batch_size, rng):
                with Tape():
                    loss = synthesizer_loss(model, dataset.poses[idx], targets[idx])
                    loss.backward()
                opt.step(epoch)
                total += loss.item() * len(idx)
            losses.append(total / len(dataset))
            log.info("synthesizer stage %d (%dx%d) epoch %d loss %.6f", stage, res, res,
                     epoch + 1, losses[-1])
        model.set_trainable(False)
        result.history.append(losses)
        if keep_stages:
            result.stage_models.append(model.copy())
    result.model = model
    return result


def synth_heldout_mse(model, dataset):
    """Per-pixel MSE at full resolution; coarse outputs are upsampled bilinearly."""
    out = synthesize(model, dataset.poses)
    out = upsample_bilinear(out, dataset.resolution // out.shape[-1])
    return float(np.mean((out - dataset.frames) ** 2))


# ------------------------------------------------------------------ updater

class UpdaterTrainingSet:
    """Seed poses per training image: ``poses[i]`` is an ``(M, 3J)`` array whose
    first row is the ground truth of image ``i``."""

    def __init__(self, gt, poses):
        self.gt = np.asarray(gt, dtype=np.float64)
        self.poses = np.asarray(poses, dtype=np.float64)
        if self.poses.shape[0] != len(self.gt) or self.poses.shape[2] != self.gt.shape[1]:
            raise ValueError("training set shape mismatch")

    @property
    def per_image(self):
        return self.poses.shape[1]

    def __len__(self):
        return self.poses.shape[0] * self.poses.shape[1]

    def extend(self, extra):
        self.poses = np.concatenate([self.poses, extra], axis=1)

    def residuals(self):
        return (self.poses - self.gt[:, None, :]).reshape(-1, self.gt.shape[1])


def build_updater_training_set(dataset, predictor, cfg, rng, predicted=None):
    """Ground truth and predictor output per image, plus ``copies`` Gaussian copies of each."""
    gt = dataset.poses
    pred = predict(predictor, dataset.frames) if predicted is None else predicted
    seeds = np.stack([gt, pred], axis=1)
    parts = [seeds]
    for k in range(cfg.copies):
        parts.append(seeds + cfg.sigma_noise * rng.standard_normal(seeds.shape))
    poses = np.concatenate(parts, axis=1)
    # rows: gt, pred, then the copies of gt/pred
    order = [0, 1] + [2 + 2 * k for k in range(cfg.copies)] + [3 + 2 * k for k in range(cfg.copies)]
    return UpdaterTrainingSet(gt, poses[:, order])


def apply_updater(updater, synthesizer, frames, poses, frame_index=None, batch_size=256):
    """``poses + upd(frames, synth(poses))``.

    Row ``k`` of ``poses`` is paired with frame ``frame_index[k]`` (default: ``k``).
    """
    x = frames_4d(frames)
    poses = np.asarray(poses, dtype=np.float64)
    frame_index = np.arange(len(poses)) if frame_index is None else np.asarray(frame_index)

    def step(idx):
        synth = synthesize(synthesizer, poses[idx], batch_size=len(idx))[:, None]
        return poses[idx] + updater(Tensor(x[frame_index[idx]]), Tensor(synth)).data

    return run_batched(step, len(poses), batch_size)


def self_augment(ts, updater, synthesizer, frames):
    """Append one updater step applied to every pose in the set (doubles it)."""
    n, m, d = ts.poses.shape
    flat = ts.poses.reshape(n * m, d)
    updated = apply_updater(updater, synthesizer, frames, flat,
                            frame_index=np.repeat(np.arange(n), m)).reshape(n, m, d)
    ts.extend(updated)
    return ts


def sample_error_distribution(pool, rng):
    """One residual drawn uniformly from ``pool`` (rows are residual vectors)."""
    pool = np.asarray(pool)
    if len(pool) == 0:
        raise ValueError("error pool is empty")
    return pool[rng.integers(len(pool))]


def inject_error_samples(ts, rng, count):
    """Add ``count`` poses per image: ground truth plus residuals drawn from the
    current errors of all entries (across all images)."""
    if count <= 0:
        return ts
    pool = ts.residuals()
    extra = np.empty((len(ts.gt), count, ts.gt.shape[1]))
    for i in range(len(ts.gt)):
        for k in range(count):
            extra[i, k] = ts.gt[i] + sample_error_distribution(pool, rng)
    ts.extend(extra)
    return ts


def hinge_loss(updater, frames, synth_images, current, target, lam):
    """Mean of ``max(0, ||p'' - p|| - lam * ||p' - p||)`` with ``p'' = p' + upd``."""
    update = updater(Tensor(frames_4d(frames)), Tensor(frames_4d(synth_images)))
    after = row_norm(update + Tensor(current - target))
    before = np.sqrt(np.sum((current - target) ** 2, axis=1))
    return mean(relu(after - Tensor(lam * before)))


def train_updater(ts, dataset, synthesizer, cfg, updater=None, on_epoch=None):
    """Minimise the contraction hinge loss over every (image, seed pose) pair.

    Every ``augment_period`` epochs the set grows by self-application of the
    current updater and by error-distribution samples. Returns
    ``(updater, history)`` where ``history`` has ``loss`` and ``augment_epochs``.
    """
    if not 0.0 <= cfg.lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {cfg.lam}")
    updater = updater or build_updater(dataset.resolution, dataset.joints, seed=cfg.seed)
    synthesizer.set_trainable(False)
    opt = _optimizer(updater, cfg.lr_updater, cfg)
    rng = _rng(cfg.seed, 3)
    aug_rng = _rng(cfg.seed, 4)
    frames = frames_4d(dataset.frames)
    history = {"loss": [], "augment_epochs": [], "set_size": []}
    for epoch in range(cfg.epochs_updater):
        n, m, d = ts.poses.shape
        total_pairs = n * m
        order = rng.permutation(total_pairs)
        if cfg.max_pairs_per_epoch and total_pairs > cfg.max_pairs_per_epoch:
            order = order[:cfg.max_pairs_per_epoch]
        updater.set_trainable(True)
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            pick = order[start:start + cfg.batch_size]
            img, slot = pick // m, pick % m
            current = ts.poses[img, slot]
            synth = synthesize(synthesizer, current, batch_size=len(pick))
            with Tape():
                loss = hinge_loss(updater, frames[img], synth, current, ts.gt[img], cfg.lam)
                loss.backward()
            opt.step(epoch)
            total += loss.item() * len(pick)
        updater.set_trainable(False)
        history["loss"].append(total / len(order))
        history["set_size"].append(len(ts))
        log.info("updater epoch %d loss %.6f (|T_D| per image %d)", epoch + 1,
                 history["loss"][-1], m)
        if (epoch + 1) % cfg.augment_period == 0:
            self_augment(ts, updater, synthesizer, dataset.frames)
            inject_error_samples(ts, aug_rng, cfg.error_samples)
            history["augment_epochs"].append(epoch + 1)
        if on_epoch is not None:
            on_epoch(epoch, updater, ts)
    return updater, history
