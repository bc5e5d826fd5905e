import math

import numpy as np
import pytest
from hypothesis import given
from scipy.spatial.transform import Rotation

from conftest import point_sets, rigid_params
from oracles import MC_GCP10_TRANSLATION_MEDIAN, matmul3, rz_trig, scipy_fit
from rtsbench.core import RigidTransform, TimedPoint, rot_z, rotation_distance
from rtsbench.rigid import (
    Correspondences,
    DegenerateGeometryError,
    calibrate_station_pair,
    estimate_rigid_transform,
    kabsch_batch,
)


def fit(src, dst):
    return estimate_rigid_transform(Correspondences(src, dst))


def gcp_circle(n=10, radius=20.0):
    th = 2 * math.pi * np.arange(n) / n
    return np.column_stack([radius * np.cos(th), radius * np.sin(th), 0.5 + 0.3 * np.sin(3 * th)])


def timed(points, frame):
    return [TimedPoint(0.0, p, frame) for p in points]


def test_identity_fit():
    src = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [0, 0, 3.0]])
    res = fit(src, src)
    assert np.allclose(res.transform.rotation, np.eye(3), atol=1e-15)
    assert np.allclose(res.transform.translation, 0, atol=1e-15)
    assert res.rmse <= 1e-12


def test_pure_translation():
    src = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [0, 0, 3.0]])
    res = fit(src, src + [1, 2, 3])
    assert np.allclose(res.transform.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(res.transform.translation, [1, 2, 3], atol=1e-12)
    assert res.rmse <= 1e-12


def test_rz90_plus_shift():
    src = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0.0]])
    R = rz_trig(90)
    dst = np.array([[sum(R[i][k] * p[k] for k in range(3)) + (5, 0, 0)[i] for i in range(3)] for p in src])
    res = fit(src, dst)
    assert np.allclose(res.transform.rotation, R, atol=1e-12, rtol=0)
    assert np.allclose(res.transform.translation, [5, 0, 0], atol=1e-12, rtol=0)
    assert res.rmse <= 1e-12
    assert res.per_point_residuals.shape == (4,)


def test_collinear_is_degenerate():
    with pytest.raises(DegenerateGeometryError):
        fit(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), np.zeros((3, 3)))


def test_too_few_points():
    with pytest.raises(ValueError):
        Correspondences(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        Correspondences(np.eye(3), np.zeros((4, 3)))


def test_three_points_and_planar_sets_are_accepted():
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
    assert fit(tri, tri + 1).rmse < 1e-15


def test_rmse_definition():
    src = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
    dst = src + np.array([[0.01, 0, 0], [0, -0.02, 0], [0, 0, 0.005], [0.003, 0.003, 0]])
    res = fit(src, dst)
    r = dst - res.transform.apply(src)
    assert res.rmse == pytest.approx(math.sqrt(np.mean(np.sum(r * r, axis=1))), abs=1e-12)


def test_calibrate_identical_gcps():
    g = gcp_circle()
    res = calibrate_station_pair(timed(g, "a"), timed(g, "b"))
    assert res.transform.from_frame == "b" and res.transform.to_frame == "a"
    assert np.allclose(res.transform.rotation, np.eye(3), atol=1e-12)
    assert res.rmse < 1e-12


def test_calibrate_rotated_offset_frames():
    g = gcp_circle()
    T = RigidTransform(rz_trig(17), [3.0, -2.0, 0.1], "b", "a")
    in_b = T.inverse().apply(g)
    res = calibrate_station_pair(timed(g, "a"), timed(in_b, "b"))
    assert rotation_distance(res.transform.rotation, T.rotation) < 1e-10
    assert np.linalg.norm(res.transform.translation - T.translation) < 1e-10
    assert res.rmse <= 1e-10


def test_calibrate_warns_outside_recommended_count():
    g = gcp_circle(n=5)
    with pytest.warns(UserWarning):
        calibrate_station_pair(timed(g, "a"), timed(g, "b"))


def test_calibrate_noisy_monte_carlo():
    rng = np.random.default_rng(7)
    g = gcp_circle()
    t_true = np.array([3.0, -2.0, 0.1])
    in_b = (g - t_true) @ np.array(rz_trig(17))
    errs = []
    for _ in range(1000):
        a = g + rng.normal(0, 0.002, g.shape)
        b = in_b + rng.normal(0, 0.002, g.shape)
        res = calibrate_station_pair(timed(a, "a"), timed(b, "b"))
        errs.append(np.linalg.norm(res.transform.translation - t_true))
    med = float(np.median(errs))
    assert med <= 0.002
    assert med == pytest.approx(MC_GCP10_TRANSLATION_MEDIAN, rel=0.1)


def test_agrees_with_scipy(rng):
    for _ in range(50):
        src = rng.normal(0, 3, (8, 3))
        dst = src @ Rotation.random(random_state=rng).as_matrix().T + rng.normal(0, 1, 3)
        dst += rng.normal(0, 0.01, dst.shape)
        R_ref, t_ref = scipy_fit(src, dst)
        res = fit(src, dst)
        assert np.allclose(res.transform.rotation, R_ref, atol=1e-10)
        assert np.allclose(res.transform.translation, t_ref, atol=1e-9)


def test_batch_matches_single(rng):
    src = rng.normal(0, 1, (20, 3, 3))
    dst = rng.normal(0, 1, (20, 3, 3))
    R, t = kabsch_batch(src, dst)
    for k in range(20):
        res = fit(src[k], dst[k])
        assert np.allclose(R[k], res.transform.rotation, atol=1e-12)
        assert np.allclose(t[k], res.transform.translation, atol=1e-12)


@given(rigid_params(), point_sets())
def test_exact_recovery(params, src):
    R, t = params
    res = fit(src, src @ R.T + t)
    assert rotation_distance(res.transform.rotation, R) < 1e-9
    assert np.linalg.norm(res.transform.translation - t) < 1e-9


@given(rigid_params(), point_sets(n_min=4), rigid_params())
def test_left_invariance(params, src, q):
    R, t = params
    rng = np.random.default_rng(int(abs(src[0, 0]) * 1e6) % 2**32)
    dst = src @ R.T + t + rng.normal(0, 0.05, src.shape)
    Q = RigidTransform(*q)
    base = fit(src, dst).rmse
    moved = fit(Q.apply(src), Q.apply(dst)).rmse
    assert abs(base - moved) < 1e-9


@given(point_sets(n_min=4, n_max=12))
def test_never_reflects_near_planar(src):
    rng = np.random.default_rng(int(abs(src[0, 1]) * 1e6) % 2**32)
    flat = src.copy()
    flat[:, 2] = rng.normal(0, 1e-3, len(src))
    mirrored = flat * [1, 1, -1] + rng.normal(0, 2e-3, flat.shape)
    res = fit(flat, mirrored)
    assert np.linalg.det(res.transform.rotation) == pytest.approx(1.0, abs=1e-9)


def test_optimality_spot_check(rng):
    src = rng.normal(0, 2, (8, 3))
    dst = src @ rot_z(0.4).T + [1, 2, 3] + rng.normal(0, 0.05, src.shape)
    best = fit(src, dst).rmse
    for _ in range(1000):
        R = Rotation.random(random_state=rng).as_matrix()
        t = rng.normal(0, 2, 3)
        r = dst - (src @ R.T + t)
        assert best <= math.sqrt(np.mean(np.sum(r * r, axis=1)))


def test_matrix_oracle_sanity():
    assert np.allclose(matmul3(rz_trig(17), rz_trig(-17)), np.eye(3), atol=1e-15)
