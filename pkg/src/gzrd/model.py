"""Multimodal reading classifier.

Each modality is tokenized by a small strided convolution stack (1D for
gaze and head motion, 2D for the RGB crop).  The tokens of whichever
modalities are present, plus a learned class token, go through a pre-norm
transformer encoder; a linear head on the class token gives the logits.
Absent modalities contribute no tokens at all.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import Tensor, concat, conv1d, conv2d, conv_out_len, gelu, layer_norm, linear, multi_head_attention
from .autodiff.tensor import DEFAULT_DTYPE, broadcast_to
from .data import MODALITIES, TASK_CLASSES, LabeledClip
from .errors import ConfigError, DimensionError, ModalityError
from .features import GAZE_SCALES, IMU_SCALE, gaze_features, imu_features, rgb_features
from .geometry import REPR_DIMS, SUPPORTED_HZ, VELOCITY3D
from .rng import stream

SIZES = {"xs": 8, "s": 16, "m": 32, "l": 64}
EMBED_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 32
    n_layers: int = 3
    n_heads: int = 2
    conv_layers: int = 3
    seq_kernel: int = 9
    rgb_kernel: int = 5
    stride: int = 2
    mlp_ratio: int = 4
    n_classes: int = 2
    task: str = "binary"
    modalities: tuple = MODALITIES
    gaze_repr: str = VELOCITY3D
    gaze_hz: float = 60
    imu_hz: float = 60
    duration: float = 2.0
    patch: int = 64
    channels: int = 3
    gaze_scale: float = GAZE_SCALES[VELOCITY3D]
    imu_scale: float = IMU_SCALE
    activation: str = "gelu_tanh"

    def __post_init__(self):
        if self.dim < 1 or self.dim % self.n_heads:
            raise ConfigError(f"latent dim {self.dim} must be a positive multiple of {self.n_heads} heads")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        if self.task in TASK_CLASSES and len(TASK_CLASSES[self.task]) != self.n_classes:
            raise ConfigError(f"task {self.task} has {len(TASK_CLASSES[self.task])} classes, not {self.n_classes}")
        if not self.modalities or set(self.modalities) - set(MODALITIES):
            raise ConfigError(f"bad modality list {self.modalities}")
        if self.gaze_repr not in REPR_DIMS:
            raise ConfigError(f"unknown gaze representation {self.gaze_repr!r}")
        for hz in (self.gaze_hz, self.imu_hz):
            if hz <= 0 or 60 % hz:
                raise ConfigError(f"sample rate must divide 60 Hz, one of {SUPPORTED_HZ}")
        if self.duration <= 0 or self.patch < 1 or self.conv_layers < 1 or self.n_layers < 1:
            raise ConfigError("duration, patch size and layer counts must be positive")
        for n in (self.gaze_len, self.imu_len):
            if n < 1:
                raise ConfigError("window holds no samples")

    # -- derived shapes ---------------------------------------------------------
    @property
    def gaze_dim(self) -> int:
        return REPR_DIMS[self.gaze_repr]

    @property
    def gaze_len(self) -> int:
        return int(round(self.gaze_hz * self.duration))

    @property
    def imu_len(self) -> int:
        return int(round(self.imu_hz * self.duration))

    def _chain(self, n, kernel):
        for _ in range(self.conv_layers):
            n = conv_out_len(n, kernel, self.stride, kernel // 2)
            if n < 1:
                raise ConfigError("input too short for the convolution stack")
        return n

    def token_counts(self) -> dict:
        side = self._chain(self.patch, self.rgb_kernel)
        return {
            "gaze": self._chain(self.gaze_len, self.seq_kernel),
            "rgb": side * side,
            "imu": self._chain(self.imu_len, self.seq_kernel),
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modalities"] = list(self.modalities)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "modalities" in d:
            d["modalities"] = tuple(d["modalities"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad model config: {exc}") from exc

    def replace(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


def preset(size: str = "m", task: str = "binary", **kw) -> ModelConfig:
    """Named model sizes; ``task`` picks the head width."""
    key = size.lower()
    if key not in SIZES:
        raise ConfigError(f"unknown model size {size!r}; choose from {', '.join(SIZES).upper()}")
    if task not in TASK_CLASSES:
        raise ConfigError(f"unknown task {task!r}")
    return ModelConfig(dim=SIZES[key], task=task, n_classes=len(TASK_CLASSES[task]), **kw)


# -- parameters -------------------------------------------------------------------
def param_shapes(cfg: ModelConfig) -> dict:
    """Name -> shape for every learnable tensor, in a fixed order."""
    D, H = cfg.dim, cfg.dim * cfg.mlp_ratio
    tokens = cfg.token_counts()
    in_ch = {"gaze": cfg.gaze_dim, "rgb": cfg.channels, "imu": 6}
    shapes = {}
    for m in cfg.modalities:
        k = cfg.rgb_kernel if m == "rgb" else cfg.seq_kernel
        for i in range(cfg.conv_layers):
            c = in_ch[m] if i == 0 else D
            shapes[f"{m}.conv{i}.w"] = (D, c, k, k) if m == "rgb" else (D, c, k)
            shapes[f"{m}.conv{i}.b"] = (D,)
        shapes[f"{m}.pos"] = (tokens[m], D)
        shapes[f"{m}.type"] = (D,)
    shapes["cls"] = (D,)
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        shapes.update({
            p + "ln1.g": (D,), p + "ln1.b": (D,),
            p + "q.w": (D, D), p + "q.b": (D,),
            p + "k.w": (D, D), p + "k.b": (D,),
            p + "v.w": (D, D), p + "v.b": (D,),
            p + "o.w": (D, D), p + "o.b": (D,),
            p + "ln2.g": (D,), p + "ln2.b": (D,),
            p + "mlp1.w": (D, H), p + "mlp1.b": (H,),
            p + "mlp2.w": (H, D), p + "mlp2.b": (D,),
        })
    shapes["final_ln.g"] = (D,)
    shapes["final_ln.b"] = (D,)
    shapes["head.w"] = (D, cfg.n_classes)
    shapes["head.b"] = (cfg.n_classes,)
    return shapes


def param_count(cfg: ModelConfig) -> int:
    return sum(math.prod(s) for s in param_shapes(cfg).values())


def init_params(cfg: ModelConfig, seed: int = 0, dtype=DEFAULT_DTYPE) -> dict:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, unit norms, small normal embeddings."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        rng = stream(seed, "init", name)
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "w":
            fan_in = math.prod(shape[1:]) if len(shape) > 2 else shape[0]
            bound = 1.0 / math.sqrt(fan_in)
            arr = rng.uniform(-bound, bound, shape)
        elif leaf == "g":
            arr = np.ones(shape)
        elif leaf == "b":
            arr = np.zeros(shape)
        else:  # pos, type, cls
            arr = rng.normal(0.0, EMBED_STD, shape)
        params[name] = arr.astype(dtype)
    return params


# -- forward pass -------------------------------------------------------------------
@dataclass
class TokenSet:
    """Encoded blocks in fusion order; ``blocks`` maps modality -> ``[B, N_m, D]``."""

    blocks: dict
    order: tuple = ()

    def __post_init__(self):
        if not self.order:
            self.order = tuple(m for m in MODALITIES if m in self.blocks)

    @property
    def present(self) -> tuple:
        return self.order

    @property
    def n_tokens(self) -> int:
        return 1 + sum(self.blocks[m].shape[-2] for m in self.order)


@dataclass
class Prediction:
    logits: np.ndarray
    probs: np.ndarray = field(init=False)

    def __post_init__(self):
        z = self.logits - self.logits.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self.probs = e / e.sum(axis=-1, keepdims=True)

    @property
    def score(self) -> np.ndarray:
        """P(reading) for binary heads."""
        return self.probs[..., 1]

    @property
    def label(self) -> np.ndarray:
        return self.probs.argmax(axis=-1)


def _conv_stack(P, prefix, x, cfg, conv, kernel):
    for i in range(cfg.conv_layers):
        x = conv(x, P[f"{prefix}.conv{i}.w"], P[f"{prefix}.conv{i}.b"], cfg.stride, kernel // 2)
        if i < cfg.conv_layers - 1:
            x = gelu(x)
    return x


def encode_sequence(P: dict, modality: str, x: Tensor, cfg: ModelConfig) -> Tensor:
    """``[B, C, L]`` gaze or IMU features to ``[B, N, D]`` tokens."""
    expected = {"gaze": (cfg.gaze_dim, cfg.gaze_len), "imu": (6, cfg.imu_len)}[modality]
    if tuple(x.shape[-2:]) != expected:
        raise DimensionError(f"{modality} input must be [..., {expected[0]}, {expected[1]}], got {x.shape}")
    y = _conv_stack(P, modality, x, cfg, conv1d, cfg.seq_kernel)
    return y.transpose(0, 2, 1)


def encode_image(P: dict, x: Tensor, cfg: ModelConfig) -> Tensor:
    """``[B, C, H, W]`` patches to ``[B, H'W', D]`` tokens in row-major grid order."""
    if tuple(x.shape[-3:]) != (cfg.channels, cfg.patch, cfg.patch):
        raise DimensionError(f"rgb input must be [..., {cfg.channels}, {cfg.patch}, {cfg.patch}], got {x.shape}")
    y = _conv_stack(P, "rgb", x, cfg, conv2d, cfg.rgb_kernel)
    B, D, h, w = y.shape
    return y.reshape(B, D, h * w).transpose(0, 2, 1)


def encode(P: dict, inputs: dict, cfg: ModelConfig) -> TokenSet:
    """Encode a batch; ``inputs`` maps each present modality to a batched array or tensor."""
    blocks = {}
    for m in MODALITIES:
        if m not in inputs:
            continue
        if m not in cfg.modalities:
            raise ModalityError(f"model was not built for {m}")
        x = inputs[m]
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=P["cls"].dtype))
        blocks[m] = encode_image(P, x, cfg) if m == "rgb" else encode_sequence(P, m, x, cfg)
    return TokenSet(blocks)


def transformer_layer(P: dict, i: int, x: Tensor, cfg: ModelConfig) -> Tensor:
    p = f"layer{i}."
    h = layer_norm(x, P[p + "ln1.g"], P[p + "ln1.b"])
    x = x + multi_head_attention(
        h, cfg.n_heads,
        P[p + "q.w"], P[p + "q.b"], P[p + "k.w"], P[p + "k.b"],
        P[p + "v.w"], P[p + "v.b"], P[p + "o.w"], P[p + "o.b"],
    )
    h = layer_norm(x, P[p + "ln2.g"], P[p + "ln2.b"])
    h = linear(gelu(linear(h, P[p + "mlp1.w"], P[p + "mlp1.b"])), P[p + "mlp2.w"], P[p + "mlp2.b"])
    return x + h


def fuse(P: dict, ts: TokenSet, cfg: ModelConfig) -> Tensor:
    """Transformer over [CLS, present tokens...]; returns ``[B, k]`` logits."""
    if not ts.order:
        raise ModalityError("no modality present: at least one of gaze, rgb, imu is required")
    B = ts.blocks[ts.order[0]].shape[0]
    D = cfg.dim
    parts = [broadcast_to(P["cls"].reshape(1, 1, D), (B, 1, D))]
    for m in ts.order:
        parts.append(ts.blocks[m] + P[f"{m}.pos"] + P[f"{m}.type"])
    x = concat(parts, axis=1)
    for i in range(cfg.n_layers):
        x = transformer_layer(P, i, x, cfg)
    cls = layer_norm(x[:, 0, :], P["final_ln.g"], P["final_ln.b"])
    return linear(cls, P["head.w"], P["head.b"])


def forward(P: dict, inputs: dict, cfg: ModelConfig) -> Tensor:
    return fuse(P, encode(P, inputs, cfg), cfg)


# -- modality dropout ----------------------------------------------------------------
def modality_dropout(rng: np.random.Generator, present) -> tuple:
    """Keep 1, 2 or 3 modalities with equal odds (clamped to what is present), chosen uniformly."""
    present = tuple(m for m in MODALITIES if m in present)
    if not present:
        raise ModalityError("cannot drop modalities from an empty set")
    size = min(int(rng.integers(1, 4)), len(present))
    keep = set(rng.choice(len(present), size=size, replace=False).tolist())
    return tuple(m for i, m in enumerate(present) if i in keep)


# -- inputs from clips ----------------------------------------------------------------
def clip_inputs(clip: LabeledClip, cfg: ModelConfig, modalities=None) -> dict:
    """Unbatched feature arrays for the modalities both present in ``clip`` and requested."""
    wanted = cfg.modalities if modalities is None else modalities
    out = {}
    if "gaze" in wanted and clip.gaze is not None:
        out["gaze"] = gaze_features(clip.gaze, cfg.gaze_repr, cfg.gaze_hz, cfg.gaze_scale)
    if "rgb" in wanted and clip.rgb is not None:
        out["rgb"] = rgb_features(clip.rgb.data)
    if "imu" in wanted and clip.imu is not None:
        out["imu"] = imu_features(clip.imu.samples, clip.imu.hz, cfg.imu_hz, cfg.imu_scale)
    return out


class Model:
    """Config plus parameter arrays, with batched inference helpers."""

    def __init__(self, cfg: ModelConfig, params: dict | None = None, seed: int = 0, dtype=DEFAULT_DTYPE):
        self.cfg = cfg
        self.seed = seed
        self.params = init_params(cfg, seed, dtype) if params is None else params
        shapes = param_shapes(cfg)
        if set(shapes) != set(self.params):
            raise ConfigError("parameter names do not match the model config")
        for k, s in shapes.items():
            if tuple(self.params[k].shape) != s:
                raise DimensionError(f"{k}: expected shape {s}, got {self.params[k].shape}")

    @property
    def dtype(self):
        return self.params["cls"].dtype

    def astype(self, dtype) -> "Model":
        return Model(self.cfg, {k: v.astype(dtype) for k, v in self.params.items()}, self.seed)

    def tensors(self, requires_grad: bool = False) -> dict:
        return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in self.params.items()}

    def logits(self, inputs: dict) -> np.ndarray:
        P = self.tensors()
        return forward(P, inputs, self.cfg).data

    def predict(self, inputs: dict) -> Prediction:
        return Prediction(self.logits(inputs))

    def encode_gaze(self, x) -> np.ndarray:
        return self._encode_one("gaze", x)

    def encode_imu(self, x) -> np.ndarray:
        return self._encode_one("imu", x)

    def encode_rgb(self, x) -> np.ndarray:
        return self._encode_one("rgb", x)

    def _encode_one(self, m, x) -> np.ndarray:
        """Tokens for one unbatched feature array."""
        x = np.asarray(x, dtype=self.dtype)[None]
        return encode(self.tensors(), {m: x}, self.cfg).blocks[m].data[0]

    def predict_clips(self, clips, modalities=None) -> Prediction:
        """One clip at a time, so each score is independent of what else is in the list."""
        logits = [self.logits({m: a[None] for m, a in clip_inputs(c, self.cfg, modalities).items()})[0] for c in clips]
        return Prediction(np.stack(logits))
