"""Mini-batch training with modality dropout and gaze augmentation.

Every random draw is keyed by (seed, epoch, clip index) rather than by the
order in which batches are consumed, so the run is reproducible however the
batches are produced.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import AdamState, adam_step, no_grad, softmax_cross_entropy
from .checkpoint import checkpoint_bytes
from .data import MODALITIES, TASK_CLASSES, LabeledClip, class_index
from .errors import ConfigError, DataError, NumericError
from .features import gaze_features, imu_features, rgb_features
from .geometry import add_gaze_noise, flip_gaze, rotate_gaze
from .model import Model, ModelConfig, forward, modality_dropout
from .rng import child_seed, stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    rotate: bool = True
    flip: bool = False
    gaze_noise: float = 0.0  # std of isotropic point noise in metres; 0 disables
    dropout: bool = True
    task: str = "binary"
    eval_batch: int = 64

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size < 1 or self.eval_batch < 1:
            raise ConfigError("batch size must be at least 1")
        if self.gaze_noise < 0:
            raise ConfigError("gaze noise must be non-negative")
        if self.task not in TASK_CLASSES:
            raise ConfigError(f"unknown task {self.task!r}")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float | None
    val_loss: float | None


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int | None = None
    checkpoint: str | None = None  # file names inside the output directory
    best_checkpoint: str | None = None
    model_config: dict = field(default_factory=dict)
    train_config: dict = field(default_factory=dict)
    n_train: int = 0
    n_val: int = 0
    wall_time_s: float = 0.0

    def to_dict(self, include_wall_time: bool = False) -> dict:
        d = asdict(self)
        if not include_wall_time:
            del d["wall_time_s"]
        return d

    def write(self, path) -> None:
        """Writes everything but wall time, so equal seeds give equal files."""
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def target(clip: LabeledClip, task: str) -> int:
    if task == "binary":
        return int(clip.label)
    return class_index(clip.meta, task)


def check_labels(clips, task: str) -> np.ndarray:
    k = len(TASK_CLASSES[task])
    labels = np.array([target(c, task) for c in clips], dtype=np.int64)
    bad = np.flatnonzero((labels < 0) | (labels >= k))
    if bad.size:
        raise DataError(f"clip {clips[bad[0]].id}: label {labels[bad[0]]} outside 0..{k - 1}")
    return labels


# -- batching -------------------------------------------------------------------------------
@dataclass
class Group:
    """Batch members sharing one kept-modality subset, stacked for a single forward pass."""

    modalities: tuple
    positions: np.ndarray  # indices into the dataset
    inputs: dict
    labels: np.ndarray


@dataclass
class Batch:
    indices: np.ndarray
    groups: list


class FeatureCache:
    """Per-clip features that do not depend on augmentation."""

    def __init__(self, clips, cfg: ModelConfig):
        self.clips = clips
        self.cfg = cfg
        self._rgb = {}
        self._imu = {}
        self._gaze = {}

    def rgb(self, i):
        if i not in self._rgb:
            self._rgb[i] = rgb_features(self.clips[i].rgb.data)
        return self._rgb[i]

    def imu(self, i):
        if i not in self._imu:
            w = self.clips[i].imu
            self._imu[i] = imu_features(w.samples, w.hz, self.cfg.imu_hz, self.cfg.imu_scale)
        return self._imu[i]

    def gaze(self, i, window=None):
        """Featurize ``window`` (an augmented copy) or the clip's own gaze, cached."""
        cfg = self.cfg
        if window is not None:
            return gaze_features(window, cfg.gaze_repr, cfg.gaze_hz, cfg.gaze_scale)
        if i not in self._gaze:
            self._gaze[i] = gaze_features(self.clips[i].gaze, cfg.gaze_repr, cfg.gaze_hz, cfg.gaze_scale)
        return self._gaze[i]


def augment_gaze(w, rng, tc: TrainConfig):
    """Quarter-turn rotation, optional mirror, optional point noise; ``None`` when nothing applies."""
    changed = False
    if tc.rotate:
        k = int(rng.integers(0, 4))
        if k:
            w, changed = rotate_gaze(w, k), True
    if tc.flip and rng.random() < 0.5:
        w, changed = flip_gaze(w), True
    if tc.gaze_noise > 0:
        w, changed = add_gaze_noise(w, tc.gaze_noise, int(rng.integers(2**63))), True
    return w if changed else None


def make_batches(clips, labels, cfg: ModelConfig, tc: TrainConfig, epoch: int, cache: FeatureCache | None = None, augment: bool = True):
    """Yield the epoch's batches; each clip appears exactly once."""
    cache = cache or FeatureCache(clips, cfg)
    order = stream(tc.seed, "shuffle", epoch).permutation(len(clips))
    dtype = np.float32
    for start in range(0, len(order), tc.batch_size):
        idx = order[start : start + tc.batch_size]
        subsets = {}
        for i in idx:
            i = int(i)
            present = tuple(m for m in cfg.modalities if getattr(clips[i], m) is not None)
            if not present:
                raise DataError(f"clip {clips[i].id} has none of the model's modalities")
            kept = modality_dropout(stream(tc.seed, "dropout", epoch, i), present) if tc.dropout else present
            subsets.setdefault(kept, []).append(i)
        groups = []
        for kept in sorted(subsets, key=lambda s: [MODALITIES.index(m) for m in s]):
            members = subsets[kept]
            inputs = {}
            for m in kept:
                if m == "gaze":
                    feats = []
                    for i in members:
                        w = augment_gaze(clips[i].gaze, stream(tc.seed, "augment", epoch, i), tc) if augment else None
                        feats.append(cache.gaze(i, w))
                elif m == "rgb":
                    feats = [cache.rgb(i) for i in members]
                else:
                    feats = [cache.imu(i) for i in members]
                inputs[m] = np.stack(feats).astype(dtype)
            groups.append(Group(kept, np.array(members), inputs, labels[members]))
        yield Batch(idx, groups)


# -- evaluation ------------------------------------------------------------------------
def batched_logits(model: Model, clips, modalities=None, batch: int = 64, cache: FeatureCache | None = None) -> np.ndarray:
    """Logits for every clip, batching clips that share the same usable modalities."""
    cfg = model.cfg
    wanted = cfg.modalities if modalities is None else tuple(m for m in cfg.modalities if m in modalities)
    cache = cache or FeatureCache(clips, cfg)
    P = model.tensors()
    out = np.zeros((len(clips), cfg.n_classes), dtype=np.float64)
    by_subset = {}
    for i, c in enumerate(clips):
        present = tuple(m for m in wanted if getattr(c, m) is not None)
        if not present:
            raise DataError(f"clip {c.id} has none of the requested modalities {wanted}")
        by_subset.setdefault(present, []).append(i)
    with no_grad():
        for present, members in by_subset.items():
            for s in range(0, len(members), batch):
                chunk = members[s : s + batch]
                inputs = {}
                for m in present:
                    get = {"gaze": cache.gaze, "rgb": cache.rgb, "imu": cache.imu}[m]
                    inputs[m] = np.stack([get(i) for i in chunk]).astype(model.dtype)
                out[chunk] = forward(P, inputs, cfg).data
    return out


def _mean_ce(logits: np.ndarray, labels: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


# -- training loop ----------------------------------------------------------------------
def train(
    train_clips,
    val_clips,
    model_cfg: ModelConfig,
    tc: TrainConfig = TrainConfig(),
    out_dir=None,
    init_seed: int | None = None,
) -> tuple[Model, TrainReport]:
    """Train from scratch; returns the best-validation model (last epoch if no validation set)."""
    t_start = time.perf_counter()
    if not train_clips:
        raise DataError("training set is empty")
    if model_cfg.task != tc.task:
        raise ConfigError(f"model head is for {model_cfg.task}, training task is {tc.task}")
    labels = check_labels(train_clips, tc.task)
    val_labels = check_labels(val_clips, tc.task) if val_clips else None
    seed = child_seed(tc.seed, "init") if init_seed is None else init_seed
    model = Model(model_cfg, seed=seed)
    P = model.tensors(requires_grad=True)
    state = AdamState(lr=tc.lr)
    cache = FeatureCache(train_clips, model_cfg)
    val_cache = FeatureCache(val_clips, model_cfg) if val_clips else None
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    report = TrainReport(
        model_config=model_cfg.to_dict(),
        train_config=asdict(tc),
        n_train=len(train_clips),
        n_val=len(val_clips) if val_clips else 0,
    )
    best_score, best_params, best_bytes = -np.inf, None, None
    step = 0
    for epoch in range(tc.epochs):
        total, seen = 0.0, 0
        for batch in make_batches(train_clips, labels, model_cfg, tc, epoch, cache):
            B = len(batch.indices)
            loss = None
            for g in batch.groups:
                part = softmax_cross_entropy(forward(P, g.inputs, model_cfg), g.labels, reduction="sum")
                loss = part if loss is None else loss + part
            loss = loss * (1.0 / B)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite loss {value} at epoch {epoch + 1}, step {step}; "
                    f"batch clips {[train_clips[i].id for i in batch.indices[:5]]}..."
                )
            for t in P.values():
                t.grad = None
            loss.backward()
            adam_step({k: t.data for k, t in P.items()}, {k: t.grad for k, t in P.items()}, state)
            total += value * B
            seen += B
            step += 1

        train_acc = float((batched_logits(model, train_clips, batch=tc.eval_batch, cache=cache).argmax(1) == labels).mean())
        val_acc = val_loss = None
        if val_clips:
            vl = batched_logits(model, val_clips, batch=tc.eval_batch, cache=val_cache)
            val_acc = float((vl.argmax(1) == val_labels).mean())
            val_loss = _mean_ce(vl, val_labels)
        stats = EpochStats(epoch + 1, total / seen, train_acc, val_acc, val_loss)
        report.epochs.append(stats)
        log.info("epoch %d loss %.4f train %.3f val %s", epoch + 1, stats.loss, train_acc, val_acc)

        score = val_acc if val_acc is not None else -stats.loss
        blob = checkpoint_bytes(model, {"epoch": epoch + 1}) if out is not None else None
        if out is not None:
            path = out / f"epoch-{epoch + 1:02d}.ckpt"
            path.write_bytes(blob)
            report.checkpoint = path.name
        if score > best_score:
            best_score = score
            report.best_epoch = epoch + 1
            best_params = {k: v.copy() for k, v in model.params.items()}
            best_bytes = blob
    if out is not None:
        best_path = out / "best.ckpt"
        best_path.write_bytes(best_bytes)
        report.best_checkpoint = best_path.name
    best = Model(model_cfg, best_params, seed=seed)
    report.wall_time_s = time.perf_counter() - t_start
    return best, report
