"""Rigid motion recovery from 3D-2D correspondences, with and without outliers."""

import numpy as np
import pytest

from rigidsplat.errors import (
    DegenerateConfigurationError,
    InsufficientDataError,
    NoConsensusError,
)
from rigidsplat.geom import Camera, RigidTransform, quat_to_rot
from rigidsplat.pnp import pnp, ransac_pnp, reprojection_errors

from conftest import project_loop, rotation_error_deg, rotvec_rot


def cam_640():
    return Camera(fx=600.0, fy=600.0, cx=320.0, cy=240.0,
                  R=np.eye(3), t=np.zeros(3), width=640, height=480)


def random_instance(rng, n=12, max_angle=0.45, max_shift=0.15):
    """Random points in front of the camera plus a modest rigid motion."""
    pts = rng.uniform(-0.4, 0.4, size=(n, 3))
    pts[:, 2] = rng.uniform(2.0, 3.0, size=n)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.05, max_angle)
    r = rotvec_rot(axis, angle)
    center = pts.mean(axis=0)
    t = center - r @ center + rng.uniform(-max_shift, max_shift, size=3)
    moved = pts @ r.T + t
    return pts, moved, r, t


def test_identity_on_exact_projections(rng):
    cam = cam_640()
    pts = rng.uniform(-0.3, 0.3, size=(10, 3))
    pts[:, 2] = rng.uniform(1.5, 2.5, size=10)
    pix = project_loop(cam, pts)
    est = pnp(pts, pix, cam)
    assert rotation_error_deg(quat_to_rot(est.q), np.eye(3)) < 1e-4
    assert np.linalg.norm(est.t) < 1e-6
    assert reprojection_errors(est, pts, pix, cam).max() < 1e-6


def test_cube_corner_recovery():
    cam = cam_640()
    corners = np.array(
        [[sx, sy, sz] for sx in (-0.2, 0.2) for sy in (-0.2, 0.2) for sz in (-0.2, 0.2)]
    ) + np.array([0.0, 0.0, 2.0])
    r_true = rotvec_rot(np.array([0.0, 1.0, 0.0]), np.deg2rad(30.0))
    t_true = np.array([0.1, 0.0, 0.2])
    pix = project_loop(cam, corners @ r_true.T + t_true)
    est = pnp(corners, pix, cam)
    assert rotation_error_deg(quat_to_rot(est.q), r_true) < 0.01
    assert np.linalg.norm(est.t - t_true) < 1e-4


def test_exact_recovery_random_instances(rng):
    for trial in range(50):
        n = int(rng.integers(6, 24))
        pts, moved, r_true, t_true = random_instance(rng, n=n)
        pix = project_loop(cam_640(), moved)
        est = pnp(pts, pix, cam_640())
        assert rotation_error_deg(quat_to_rot(est.q), r_true) < 0.01, trial
        assert np.linalg.norm(est.t - t_true) < 1e-4, trial
        assert reprojection_errors(est, pts, pix, cam_640()).max() < 1e-4, trial


def test_reprojection_consistency(rng):
    # the fitted motion is never worse than the ground truth on clean data
    for _ in range(10):
        pts, moved, r_true, t_true = random_instance(rng)
        cam = cam_640()
        pix = project_loop(cam, moved)
        truth = RigidTransform.from_matrix(r_true, t_true)
        est = pnp(pts, pix, cam)
        res_est = (reprojection_errors(est, pts, pix, cam) ** 2).mean()
        res_true = (reprojection_errors(truth, pts, pix, cam) ** 2).mean()
        assert res_est <= res_true + 1e-6


def test_result_is_proper_rigid_motion(rng):
    for _ in range(5):
        pts, moved, _, _ = random_instance(rng)
        est = pnp(pts, pix := project_loop(cam_640(), moved), cam_640())
        r = quat_to_rot(est.q)
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(est.q) == pytest.approx(1.0, abs=1e-12)
        del pix


def test_too_few_points_message():
    cam = cam_640()
    pts = np.array([[0.0, 0.0, 2.0], [0.1, 0.0, 2.0], [0.0, 0.1, 2.0]])
    pix = project_loop(cam, pts)
    with pytest.raises(InsufficientDataError) as exc:
        pnp(pts, pix, cam)
    assert "at least 4 correspondences, got 3" in str(exc.value)


def test_collinear_points_rejected():
    cam = cam_640()
    ts = np.linspace(0.0, 1.0, 6)
    pts = np.outer(ts, [0.1, 0.05, 0.2]) + np.array([0.0, 0.0, 2.0])
    pix = project_loop(cam, pts)
    with pytest.raises(DegenerateConfigurationError):
        pnp(pts, pix, cam)


def test_reprojection_errors_infinite_behind_camera():
    cam = cam_640()
    pts = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 0.3]])
    pix = project_loop(cam, pts)
    push_back = RigidTransform.from_matrix(np.eye(3), np.array([0.0, 0.0, -1.0]))
    err = reprojection_errors(push_back, pts, pix, cam)
    assert np.isfinite(err[0]) and np.isinf(err[1])


# ---------------------------------------------------------------------------
# consensus loop

def test_ransac_all_inliers(rng):
    pts, moved, r_true, t_true = random_instance(rng, n=25)
    cam = cam_640()
    pix = project_loop(cam, moved)
    res = ransac_pnp(pts, pix, cam, threshold_px=2.0, seed=0)
    assert res.inlier_mask.all()
    assert rotation_error_deg(quat_to_rot(res.transform.q), r_true) < 0.01
    assert res.mean_error_px < 1e-4
    assert 1 <= res.n_iterations <= 512


def test_ransac_two_population(rng):
    cam = cam_640()
    pts, moved, r_true, t_true = random_instance(rng, n=100)
    pix = project_loop(cam, moved)
    is_outlier = np.zeros(100, dtype=bool)
    is_outlier[rng.permutation(100)[:30]] = True
    pix[is_outlier] = np.column_stack(
        [rng.uniform(0, 640, 30), rng.uniform(0, 480, 30)]
    )
    res = ransac_pnp(pts, pix, cam, threshold_px=2.0, seed=0)
    true_in = ~is_outlier
    recall = np.count_nonzero(res.inlier_mask & true_in) / np.count_nonzero(true_in)
    false_in = int(np.count_nonzero(res.inlier_mask & is_outlier))
    assert recall >= 0.95
    assert false_in <= 2
    assert rotation_error_deg(quat_to_rot(res.transform.q), r_true) < 0.1


def test_ransac_order_invariance(rng):
    cam = cam_640()
    pts, moved, _, _ = random_instance(rng, n=40)
    pix = project_loop(cam, moved)
    out = np.zeros(40, dtype=bool)
    out[rng.permutation(40)[:10]] = True
    pix[out] = np.column_stack([rng.uniform(0, 640, 10), rng.uniform(0, 480, 10)])

    first = ransac_pnp(pts, pix, cam, seed=7)
    perm = rng.permutation(40)
    second = ransac_pnp(pts[perm], pix[perm], cam, seed=7)
    assert np.allclose(first.transform.q, second.transform.q, atol=1e-12)
    assert np.allclose(first.transform.t, second.transform.t, atol=1e-12)
    assert np.array_equal(second.inlier_mask, first.inlier_mask[perm])
    assert first.mean_error_px == pytest.approx(second.mean_error_px, abs=1e-12)


def test_ransac_too_few_points():
    cam = cam_640()
    pts = np.array([[0.0, 0.0, 2.0], [0.1, 0.0, 2.0], [0.0, 0.1, 2.0]])
    with pytest.raises(InsufficientDataError) as exc:
        ransac_pnp(pts, project_loop(cam, pts), cam)
    assert "at least 4 correspondences, got 3" in str(exc.value)


def test_ransac_pure_outliers_rarely_reach_consensus():
    # pixels drawn independently of the points: no motion explains them
    cam = cam_640()
    data_rng = np.random.default_rng(12345)
    pts = data_rng.uniform(-0.3, 0.3, size=(30, 3))
    pts[:, 2] = data_rng.uniform(1.5, 3.0, size=30)
    pix = np.column_stack(
        [data_rng.uniform(0, 640, 30), data_rng.uniform(0, 480, 30)]
    )
    raised = 0
    for seed in range(20):
        try:
            res = ransac_pnp(pts, pix, cam, threshold_px=2.0, iterations=64, seed=seed)
        except NoConsensusError as exc:
            raised += 1
            assert "30 correspondences" in str(exc)
        else:
            # the rare success is a minimal sample fitting only itself
            assert int(res.inlier_mask.sum()) == 4
    assert raised >= 18
