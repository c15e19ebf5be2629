import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gzrd.errors import BehindCameraError, ConfigError, DataError
from gzrd.geometry import (
    IPD_M,
    POINT3D,
    PROJECTION2D,
    CameraModel,
    EyeRayPair,
    GazeWindow,
    add_gaze_noise,
    angles_to_point,
    crop_geometry,
    differentiate,
    flip_gaze,
    gaze_span,
    intersect_rays,
    project_to_image,
    resample,
    rotate_gaze,
)

CAM = CameraModel()


def pair_through(point, baseline=IPD_M, t=0.0):
    lo, ro = np.array([-baseline / 2, 0, 0]), np.array([baseline / 2, 0, 0])
    ly, lp = angles_to_point(point, lo)
    ry, rp = angles_to_point(point, ro)
    return EyeRayPair.from_angles(t, ly, lp, ry, rp, baseline)


def window(samples, hz=60, repr_=POINT3D, center=(0.0, 0.0)):
    samples = np.asarray(samples, dtype=float)
    return GazeWindow(samples, hz, len(samples) / hz, repr_, center)


# -- rays ----------------------------------------------------------------------
def test_exact_intersection():
    p, degenerate = intersect_rays(pair_through([0.0, 0.0, 1.0]))
    assert not degenerate
    np.testing.assert_allclose(p, [0, 0, 1], atol=1e-9)


@pytest.mark.parametrize("theta_deg", [0.5, 2.0, 5.0, 15.0])
def test_symmetric_yaws_closed_form(theta_deg):
    th = math.radians(theta_deg)
    pair = EyeRayPair.from_angles(0.0, th, 0.0, -th, 0.0)
    p, _ = intersect_rays(pair)
    assert abs(p[0]) < 1e-12 and abs(p[1]) < 1e-12
    assert abs(p[2] - (IPD_M / 2) / math.tan(th)) < 1e-9


@pytest.mark.parametrize("seed", range(100))
def test_skew_rays_match_least_squares(seed):
    rng = np.random.default_rng(seed)
    o1, o2 = rng.standard_normal(3), rng.standard_normal(3)
    d1, d2 = rng.standard_normal(3), rng.standard_normal(3)
    d1 /= np.linalg.norm(d1)
    d2 /= np.linalg.norm(d2)
    pair = EyeRayPair(0.0, o1, d1, o2, d2)
    p, degenerate = intersect_rays(pair)
    # oracle: minimise |o1 + s d1 - (o2 + t d2)| with a generic lstsq solve
    (s, t), *_ = np.linalg.lstsq(np.stack([d1, -d2], axis=1), o2 - o1, rcond=None)
    np.testing.assert_allclose(p, (o1 + s * d1 + o2 + t * d2) / 2, atol=1e-9)
    q, _ = intersect_rays(pair.swapped())
    assert p.tobytes() == q.tobytes()
    assert not degenerate


def test_parallel_rays_fall_back():
    d = np.array([0.0, 0.0, 1.0])
    pair = EyeRayPair(0.0, np.array([-0.03, 0, 0]), d, np.array([0.03, 0, 0]), d)
    p, degenerate = intersect_rays(pair)
    assert degenerate
    np.testing.assert_allclose(p, [0, 0, 1.0])


def test_direction_norms():
    rng = np.random.default_rng(0)
    pair = EyeRayPair.from_angles(0.0, *rng.uniform(-0.5, 0.5, 4))
    assert abs(np.linalg.norm(pair.left_dir) - 1) < 1e-9
    assert abs(np.linalg.norm(pair.right_dir) - 1) < 1e-9


# -- camera ----------------------------------------------------------------------
def test_optical_axis_projects_to_center():
    np.testing.assert_allclose(project_to_image([0, 0, 2.0], CAM), CAM.center)


def test_half_fov_projects_to_edge():
    x = math.tan(math.radians(55.0))
    np.testing.assert_allclose(project_to_image([x, 0, 1.0], CAM), [1408.0, 704.0], atol=1e-9)


@pytest.mark.parametrize("seed", range(100))
def test_projection_inverse(seed):
    rng = np.random.default_rng(seed)
    p = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 3)])
    u, v = project_to_image(p, CAM)
    # oracle: back-project through the pixel's ray to the same depth
    cx, cy = CAM.width / 2, CAM.height / 2
    f = (CAM.width / 2) / math.tan(math.radians(CAM.fov_deg / 2))
    q = np.array([(u - cx) / f * p[2], (v - cy) / f * p[2], p[2]])
    np.testing.assert_allclose(q, p, atol=1e-6)


def test_behind_camera():
    with pytest.raises(BehindCameraError):
        project_to_image([0, 0, -1.0], CAM)
    with pytest.raises(BehindCameraError):
        project_to_image([0, 0, 0.0], CAM)


@pytest.mark.parametrize("fov", [0.0, 180.0, -5.0])
def test_camera_fov_range(fov):
    with pytest.raises(ConfigError):
        CameraModel(fov_deg=fov)


def test_focal_from_fov():
    assert CAM.focal == pytest.approx(704 / math.tan(math.radians(55)))


# -- differentiation ---------------------------------------------------------------
def test_ramp_gives_constant_velocity():
    t = np.arange(120) / 60
    w = window(np.stack([0.1 * t, -0.2 * t, 0.5 + 0 * t], axis=1))
    v = differentiate(w)
    np.testing.assert_allclose(v.samples, np.tile([0.1, -0.2, 0.0], (120, 1)), atol=1e-12)
    assert len(v) == len(w) and v.representation == "velocity3d"


def test_constant_gives_zero_velocity():
    v = differentiate(window(np.tile([0.01, 0.02, 0.5], (120, 1))))
    np.testing.assert_array_equal(v.samples, 0.0)


def test_sinusoid_peak_velocity():
    f, amp, freq = 60, 0.02, 0.5
    t = np.arange(120) / f
    w = window(np.stack([amp * np.sin(2 * np.pi * freq * t), 0 * t, 0.5 + 0 * t], axis=1))
    v = differentiate(w)
    analytic = amp * 2 * np.pi * freq
    assert abs(np.abs(v.samples[:, 0]).max() - analytic) / analytic < 0.01


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (30, 3), elements=st.floats(-1, 1)),
    arrays(np.float64, (30, 3), elements=st.floats(-1, 1)),
    st.floats(-3, 3),
)
def test_differentiate_is_linear(a, b, k):
    lhs = differentiate(window(k * a + b)).samples
    rhs = k * differentiate(window(a)).samples + differentiate(window(b)).samples
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_differentiate_needs_two_samples():
    with pytest.raises(DataError):
        differentiate(GazeWindow(np.zeros((1, 3)), 60, 1 / 60))


# -- resampling -----------------------------------------------------------------
def indexed_window():
    return window(np.stack([np.arange(120.0)] * 3, axis=1))


def test_resample_identity():
    w = indexed_window()
    assert resample(w, 60).samples.tobytes() == w.samples.tobytes()


def test_resample_half_rate_keeps_last():
    r = resample(indexed_window(), 30)
    np.testing.assert_array_equal(r.samples[:, 0], np.arange(1, 120, 2))
    assert len(r) == 60


def test_resample_to_6hz():
    r = resample(indexed_window(), 6)
    # enumerate keep-last decimation by hand: every 10th sample ending at 119
    expected = [i for i in range(120) if (119 - i) % 10 == 0]
    assert expected == list(range(9, 120, 10))
    np.testing.assert_array_equal(r.samples[:, 0], expected)


@pytest.mark.parametrize("hz", [6, 10, 15, 20, 30, 60])
def test_resample_counts(hz):
    assert len(resample(indexed_window(), hz)) == round(hz * 2.0)


def test_resample_non_divisor():
    with pytest.raises(ConfigError):
        resample(indexed_window(), 25)


@pytest.mark.parametrize("hz", [6, 10, 15, 20, 30])
def test_resample_commutes_with_differentiate_on_ramps(hz):
    t = np.arange(120) / 60
    w = window(np.stack([0.3 * t + 0.1, -0.05 * t, 0.4 + 0.01 * t], axis=1))
    a = differentiate(resample(w, hz)).samples
    b = resample(differentiate(w), hz).samples
    np.testing.assert_allclose(a[1:], b[1:], atol=1e-9)


# -- rotation / flip ---------------------------------------------------------------
def random_window(rng, repr_=POINT3D):
    d = 3 if repr_ == POINT3D else 2
    center = (0.0, 0.0) if repr_ == POINT3D else CAM.center
    return window(rng.standard_normal((20, d)) + (0 if d == 3 else 700), repr_=repr_, center=center)


def test_rotate_zero_and_four_turns():
    w = random_window(np.random.default_rng(0))
    assert rotate_gaze(w, 0).samples.tobytes() == w.samples.tobytes()
    assert rotate_gaze(w, 4).samples.tobytes() == w.samples.tobytes()


def test_rotate_one_turn():
    w = window([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    np.testing.assert_array_equal(rotate_gaze(w, 1).samples, [[-2, 1, 3], [-5, 4, 6]])


@pytest.mark.parametrize("seed", range(20))
def test_rotation_and_flip_preserve_speed(seed):
    w = random_window(np.random.default_rng(seed))
    speed = np.linalg.norm(np.diff(w.samples, axis=0), axis=1)
    for out in (rotate_gaze(w, seed), flip_gaze(w)):
        np.testing.assert_allclose(np.linalg.norm(np.diff(out.samples, axis=0), axis=1), speed, rtol=1e-12)


def test_flip_involution_and_vertical_invariance():
    w = random_window(np.random.default_rng(1))
    assert flip_gaze(flip_gaze(w)).samples.tobytes() == w.samples.tobytes()
    vertical = window(np.stack([np.zeros(10), np.linspace(0, 1, 10), np.ones(10)], axis=1))
    np.testing.assert_array_equal(flip_gaze(vertical).samples, vertical.samples)


@pytest.mark.parametrize("repr_", [POINT3D, PROJECTION2D])
def test_flip_commutes_with_half_turn(repr_):
    w = random_window(np.random.default_rng(2), repr_)
    a = flip_gaze(rotate_gaze(w, 2)).samples
    b = rotate_gaze(flip_gaze(w), 2).samples
    assert a.tobytes() == b.tobytes()


def test_pixel_rotation_pivots_on_principal_point():
    w = window([[CAM.center[0] + 10, CAM.center[1]]], repr_=PROJECTION2D, center=CAM.center)
    np.testing.assert_array_equal(rotate_gaze(w, 1).samples, [[704.0, 714.0]])


# -- noise ------------------------------------------------------------------------
def test_noise_zero_sigma_identity():
    w = random_window(np.random.default_rng(3))
    assert add_gaze_noise(w, 0.0, seed=1).samples.tobytes() == w.samples.tobytes()


def test_noise_deterministic_given_seed():
    w = random_window(np.random.default_rng(3))
    a, b = add_gaze_noise(w, 0.1, 7), add_gaze_noise(w, 0.1, 7)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert add_gaze_noise(w, 0.1, 8).samples.tobytes() != a.samples.tobytes()


def test_noise_is_zero_mean():
    n, sigma = 100_000, 0.5
    w = GazeWindow(np.zeros((n, 3)), 1.0, float(n))
    diff = add_gaze_noise(w, sigma, 11).samples - w.samples
    assert np.all(np.abs(diff.mean(axis=0)) < 3 * sigma / math.sqrt(n))
    assert abs(diff.std() - sigma) < 0.01


# -- crop & span -------------------------------------------------------------------
def test_crop_five_degrees_is_64():
    assert crop_geometry(5.0, CAM) == 64
    assert Fraction(64, 1408) ** 2 == Fraction(1, 484)


def test_crop_full_frame():
    assert crop_geometry(110.0, CAM) == 1408


def test_crop_three_and_a_half():
    assert 3.5 / 110 * 1408 == pytest.approx(44.8)
    assert crop_geometry(3.5, CAM) == 44


def test_crop_grid_even_and_monotone():
    sizes = [crop_geometry(f, CAM) for f in (3.5, 5, 7, 10, 14, 110)]
    assert all(s % 2 == 0 for s in sizes)
    assert sizes == sorted(sizes) and len(set(sizes)) == len(sizes)


def test_span_single_point():
    w = window(np.tile([800.0, 700.0], (30, 1)), repr_=PROJECTION2D, center=CAM.center)
    assert gaze_span(w, CAM) == 0.0


def test_span_edges_equal_fov():
    w = window([[0.0, 704.0], [1408.0, 704.0]], repr_=PROJECTION2D, center=CAM.center)
    assert gaze_span(w, CAM) == pytest.approx(110.0)


def test_span_of_five_degrees():
    pts = np.array([[-0.0, 0, 1], [0, 0, 1], [0, 0, 1]], dtype=float)
    pts[0, 0] = math.tan(math.radians(-2.5))
    pts[2, 0] = math.tan(math.radians(2.5))
    w = window(project_to_image(pts, CAM), repr_=PROJECTION2D, center=CAM.center)
    assert abs(gaze_span(w, CAM) - 5.0) < 0.05


def test_window_sample_count_checked():
    with pytest.raises(DataError):
        GazeWindow(np.zeros((100, 3)), 60, 2.0)
    with pytest.raises(DataError):
        GazeWindow(np.zeros((120, 2)), 60, 2.0, POINT3D)
