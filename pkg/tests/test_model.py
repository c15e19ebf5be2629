import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gzrd.autodiff import no_grad, softmax_cross_entropy
from gzrd.autodiff.gradcheck import check_gradients, directional_check
from gzrd.checkpoint import MAGIC, checkpoint_bytes, load_checkpoint, parse_checkpoint, read_header, save_checkpoint
from gzrd.data import MODALITIES, ScenarioSpec
from gzrd.errors import CheckpointError, ConfigError, DimensionError, ModalityError
from gzrd.geometry import CameraModel, crop_geometry
from gzrd.model import (
    Model,
    ModelConfig,
    TokenSet,
    clip_inputs,
    encode,
    forward,
    fuse,
    modality_dropout,
    param_count,
    param_shapes,
    preset,
)
from gzrd.sim import gen_clip

TINY = ModelConfig(dim=8, gaze_hz=60, imu_hz=60, duration=8 / 60, patch=8)


def random_inputs(cfg, B, rng, dtype=np.float32, modalities=MODALITIES):
    shapes = {
        "gaze": (B, cfg.gaze_dim, cfg.gaze_len),
        "rgb": (B, cfg.channels, cfg.patch, cfg.patch),
        "imu": (B, 6, cfg.imu_len),
    }
    return {m: rng.normal(size=shapes[m]).astype(dtype) for m in modalities}


# -- encoders -----------------------------------------------------------------------
def test_default_token_counts():
    assert preset("m").token_counts() == {"gaze": 15, "rgb": 64, "imu": 15}


def test_gaze_encoder_output_shape():
    m = Model(preset("m"))
    assert m.encode_gaze(np.zeros((3, 120))).shape == (15, 32)
    assert m.encode_imu(np.zeros((6, 120))).shape == (15, 32)
    assert m.encode_rgb(np.zeros((3, 64, 64))).shape == (64, 32)


def test_doubling_duration_doubles_gaze_tokens():
    assert preset("m", duration=4.0).token_counts()["gaze"] == 2 * preset("m").token_counts()["gaze"]


def test_zero_input_gives_zero_tokens():
    m = Model(preset("m"), seed=3)
    assert not m.encode_gaze(np.zeros((3, 120))).any()
    assert not m.encode_imu(np.zeros((6, 120))).any()
    assert not m.encode_rgb(np.zeros((3, 64, 64))).any()


def test_uniform_patch_gives_identical_interior_tokens():
    m = Model(preset("m"), seed=1)
    tokens = m.encode_rgb(np.full((3, 64, 64), 0.3)).reshape(8, 8, 32)
    # grid cells 2..6 never see the zero padding through the three strided layers
    interior = tokens[2:7, 2:7].reshape(-1, 32)
    np.testing.assert_allclose(interior, interior[:1].repeat(len(interior), 0), rtol=0, atol=1e-6)
    assert not np.allclose(tokens[0, 0], tokens[4, 4])


def test_default_crop_feeds_rgb_encoder_without_resize():
    clip = gen_clip(ScenarioSpec(seed=0), "c")
    assert clip.rgb.data.shape[:2] == (crop_geometry(5.0, CameraModel()),) * 2 == (preset("m").patch,) * 2
    inputs = clip_inputs(clip, preset("m"))
    assert inputs["rgb"].shape == (3, 64, 64)


def test_wrong_sample_count_is_shape_error():
    m = Model(preset("m"))
    with pytest.raises(DimensionError):
        m.encode_gaze(np.zeros((3, 119)))
    with pytest.raises(DimensionError):
        m.encode_rgb(np.zeros((3, 60, 60)))


@pytest.mark.parametrize("hz", [6, 10, 20, 30, 60])
@pytest.mark.parametrize("duration", [1, 2, 3, 4, 5])
def test_ablation_grid_token_counts(hz, duration):
    cfg = preset("m", gaze_hz=hz, imu_hz=hz, duration=float(duration))
    n = cfg.gaze_len
    for _ in range(3):
        n = (n + 2 * 4 - 9) // 2 + 1
    assert cfg.token_counts()["gaze"] == n > 0
    m = Model(cfg)
    assert m.encode_gaze(np.zeros((3, cfg.gaze_len))).shape == (n, 32)


@pytest.mark.parametrize("fov", [3.5, 5, 7, 10, 14])
def test_crop_grid_token_counts(fov):
    size = crop_geometry(fov, CameraModel())
    cfg = preset("m", patch=size)
    side = size
    for _ in range(3):
        side = (side + 4 - 5) // 2 + 1
    assert cfg.token_counts()["rgb"] == side * side > 0


# -- fusion -------------------------------------------------------------------------
@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3), st.integers(0, 2**31 - 1))
def test_probabilities_sum_to_one(scale, seed):
    rng = np.random.default_rng(seed)
    m = Model(preset("xs"), seed=seed % 7)
    inputs = random_inputs(m.cfg, 2, rng)
    inputs = {k: v * np.float32(scale) for k, v in inputs.items()}
    p = m.predict(inputs).probs
    assert np.all(np.isfinite(p)) and np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)


@pytest.mark.parametrize("task,k", [("binary", 2), ("mode7", 7), ("medium4", 4)])
def test_heads_output_distributions(task, k):
    m = Model(preset("xs", task=task))
    p = m.predict(random_inputs(m.cfg, 3, np.random.default_rng(0))).probs
    assert p.shape == (3, k)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_block_order_does_not_change_cls_output(seed):
    m = Model(preset("m"), seed=seed, dtype=np.float64)
    P = m.tensors()
    ts = encode(P, random_inputs(m.cfg, 2, np.random.default_rng(seed), np.float64), m.cfg)
    base = fuse(P, ts, m.cfg).data
    for order in [("rgb", "gaze", "imu"), ("imu", "rgb", "gaze"), ("gaze", "imu", "rgb")]:
        swapped = fuse(P, TokenSet(ts.blocks, order), m.cfg).data
        np.testing.assert_allclose(swapped, base, rtol=1e-10, atol=1e-12)


def test_gaze_only_differs_from_gaze_plus_rgb():
    m = Model(preset("m"), seed=2)
    inputs = random_inputs(m.cfg, 1, np.random.default_rng(2))
    a = m.logits({"gaze": inputs["gaze"]})
    b = m.logits({"gaze": inputs["gaze"], "rgb": inputs["rgb"]})
    assert not np.allclose(a, b)


def test_empty_token_set_is_modality_error():
    m = Model(preset("xs"))
    with pytest.raises(ModalityError):
        fuse(m.tensors(), TokenSet({}), m.cfg)


def test_model_without_modality_rejects_its_input():
    m = Model(preset("xs", modalities=("gaze",)))
    with pytest.raises(ModalityError):
        m.logits(random_inputs(m.cfg, 1, np.random.default_rng(0), modalities=("gaze", "rgb")))


# -- dropped-modality independence ---------------------------------------------------------
@pytest.mark.parametrize("dropped", MODALITIES)
def test_dropped_modality_is_ignored_exactly(dropped):
    cfg = preset("m")
    m = Model(cfg, seed=4)
    rng = np.random.default_rng(4)
    kept = tuple(x for x in MODALITIES if x != dropped)
    base = random_inputs(cfg, 2, rng)
    ref = m.logits({k: base[k] for k in kept})
    for _ in range(10):
        sub = random_inputs(cfg, 2, rng)
        inputs = {k: base[k] for k in kept}
        # the dropped modality's payload is available but excluded from the token set
        clip_like = {**inputs, dropped: sub[dropped]}
        out = m.logits({k: clip_like[k] for k in kept})
        np.testing.assert_array_equal(out, ref)
    P = m.tensors(requires_grad=True)
    softmax_cross_entropy(forward(P, {k: base[k] for k in kept}, cfg), [0, 1]).backward()
    for name, t in P.items():
        if name.startswith(dropped + "."):
            assert t.grad is None or not np.any(t.grad)
        elif name.startswith(kept[0] + "."):
            assert t.grad is not None


# -- modality dropout ----------------------------------------------------------------
def test_dropout_size_distribution():
    rng = np.random.default_rng(0)
    sizes = np.array([len(modality_dropout(rng, MODALITIES)) for _ in range(100_000)])
    freq = np.bincount(sizes, minlength=4)[1:] / len(sizes)
    np.testing.assert_allclose(freq, 1 / 3, atol=0.01)


def test_dropout_subsets_uniform_within_size():
    rng = np.random.default_rng(1)
    from collections import Counter

    c = Counter(modality_dropout(rng, MODALITIES) for _ in range(30_000))
    singles = [c[(m,)] for m in MODALITIES]
    assert max(singles) / min(singles) < 1.1
    assert len(c) == 7


def test_dropout_single_modality_always_kept():
    rng = np.random.default_rng(2)
    assert all(modality_dropout(rng, ("rgb",)) == ("rgb",) for _ in range(100))


def test_dropout_never_empty_and_deterministic():
    a = [modality_dropout(np.random.default_rng(9), MODALITIES) for _ in range(3)]
    assert a[0] == a[1] == a[2]
    rng = np.random.default_rng(3)
    assert all(modality_dropout(rng, ("gaze", "imu")) for _ in range(1000))
    with pytest.raises(ModalityError):
        modality_dropout(rng, ())


# -- parameter budget ----------------------------------------------------------------
def test_m_param_count_in_budget():
    assert 116_000 <= param_count(preset("m")) <= 158_000


def test_sizes_strictly_increase():
    counts = [param_count(preset(s)) for s in ("xs", "s", "m", "l")]
    assert counts == sorted(counts) and len(set(counts)) == 4


@pytest.mark.parametrize("size", ["xs", "m"])
def test_param_count_matches_checkpoint(size):
    m = Model(preset(size))
    header, _ = read_header_bytes(checkpoint_bytes(m))
    total = sum(int(np.prod(e["shape"])) for e in header["tensors"].values())
    assert total == param_count(m.cfg)
    assert total * 4 == header["payload_bytes"]


def read_header_bytes(data):
    from gzrd.checkpoint import _split

    return _split(data)


def test_param_count_is_function_of_config():
    assert param_count(preset("s")) == param_count(preset("s"))
    shapes = param_shapes(preset("m"))
    assert shapes["gaze.conv0.w"] == (32, 3, 9)
    assert shapes["rgb.conv0.w"] == (32, 3, 5, 5)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(dim=9, n_heads=2)
    with pytest.raises(ConfigError):
        ModelConfig(n_classes=1, task="custom")
    with pytest.raises(ConfigError):
        preset("xxl")
    with pytest.raises(ConfigError):
        preset("m", gaze_hz=7)


# -- checkpoints ------------------------------------------------------------------------
def test_checkpoint_round_trip_bytes(tmp_path):
    m = Model(preset("m"), seed=5)
    save_checkpoint(m, tmp_path / "a.ckpt")
    back = load_checkpoint(tmp_path / "a.ckpt")
    save_checkpoint(back, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    for k in m.params:
        np.testing.assert_array_equal(m.params[k], back.params[k])
    hdr = read_header(tmp_path / "a.ckpt")
    assert hdr["precision"] == "float32" and hdr["init_seed"] == 5 and hdr["config"]["dim"] == 32


def test_checkpoint_inference_bit_identical(tmp_path):
    m = Model(preset("s"), seed=6)
    inputs = random_inputs(m.cfg, 4, np.random.default_rng(6))
    save_checkpoint(m, tmp_path / "m.ckpt")
    np.testing.assert_array_equal(load_checkpoint(tmp_path / "m.ckpt").logits(inputs), m.logits(inputs))


def test_checkpoint_float64_round_trip():
    m = Model(TINY, seed=1, dtype=np.float64)
    back, _ = parse_checkpoint(checkpoint_bytes(m))
    assert back.dtype == np.float64
    assert checkpoint_bytes(back) == checkpoint_bytes(m)


def test_flipped_magic_rejected():
    data = bytearray(checkpoint_bytes(Model(TINY)))
    data[0] ^= 0xFF
    with pytest.raises(CheckpointError):
        parse_checkpoint(bytes(data))


@pytest.mark.parametrize("cut", [3, 8, 40, -1])
def test_truncated_checkpoint_rejected(cut):
    data = checkpoint_bytes(Model(TINY))
    with pytest.raises(CheckpointError):
        parse_checkpoint(data[:cut])


def test_payload_corruption_rejected():
    data = bytearray(checkpoint_bytes(Model(TINY)))
    data[-5] ^= 0x01
    with pytest.raises(CheckpointError):
        parse_checkpoint(bytes(data))


def test_config_shape_mismatch_rejected():
    import json
    import struct

    data = checkpoint_bytes(Model(TINY))
    header, payload = read_header_bytes(data)
    header["config"]["dim"] = 16
    blob = json.dumps(header).encode()
    with pytest.raises(CheckpointError):
        parse_checkpoint(MAGIC + struct.pack("<I", len(blob)) + blob + payload)


def test_missing_checkpoint_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nope.ckpt")


# -- end-to-end gradients -------------------------------------------------------------------
def _loss_fn(m, inputs, labels):
    def fn(P):
        return softmax_cross_entropy(forward(P, inputs, m.cfg), labels, reduction="sum")
    return fn


def test_tiny_model_gradient_check_on_representative_tensors():
    m = Model(TINY, seed=0, dtype=np.float64)
    inputs = random_inputs(TINY, 2, np.random.default_rng(0), np.float64)
    P = m.tensors(requires_grad=True)
    fn = _loss_fn(m, inputs, [0, 1])
    names = ["gaze.conv0.w", "rgb.conv1.b", "imu.conv2.b", "rgb.pos", "imu.type", "cls",
             "layer0.ln1.g", "layer1.q.w", "layer2.mlp2.b", "final_ln.b", "head.w"]
    err = check_gradients(lambda: fn(P), [P[k] for k in names])
    assert err < 1e-3


@pytest.mark.parametrize("seed", range(3))
def test_m_model_directional_gradient(seed):
    m = Model(preset("m"), seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    inputs = random_inputs(m.cfg, 1, rng, np.float64)
    P = m.tensors(requires_grad=True)
    fn = _loss_fn(m, inputs, [seed % 2])
    err = directional_check(lambda: fn(P), list(P.values()), rng)
    assert err < 1e-3


def test_no_grad_inference_builds_no_graph():
    m = Model(TINY)
    with no_grad():
        out = forward(m.tensors(requires_grad=True), random_inputs(TINY, 1, np.random.default_rng(0)), TINY)
    assert not out.requires_grad
