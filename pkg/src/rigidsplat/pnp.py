"""Rigid motion estimation from 3D points and 2D pixel observations.

Estimates the world-space rigid motion M such that the camera sees each
moved point R p + T at its observed pixel.  A control-point linear
initialization (with a planar variant and, when enough points exist, a
direct linear transform alternative) is polished by damped Gauss-Newton on
the pixel residuals; the candidate with the lowest error wins.  A seeded
consensus loop makes the estimate robust to outliers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InsufficientDataError,
    NoConsensusError,
)
from .geom import Camera, RigidTransform, quat_to_rot, rot_to_quat

_MIN_POINTS = 4
_DEPTH_EPS = 1e-9


@dataclass(frozen=True)
class PnPResult:
    """Robust estimation output: motion, inliers and fit quality."""

    transform: RigidTransform
    inlier_mask: np.ndarray
    mean_error_px: float
    n_iterations: int


def reprojection_errors(
    transform: RigidTransform,
    points: np.ndarray,
    pixels: np.ndarray,
    camera: Camera,
) -> np.ndarray:
    """Pixel distance of each moved point to its observation (inf behind)."""
    moved = transform.apply(points)
    px, depth = camera.project_batch(moved)
    err = np.full(points.shape[0], np.inf)
    ok = depth > 0.0
    err[ok] = np.linalg.norm(px[ok] - pixels[ok], axis=1)
    return err


def _kabsch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rotation and translation with dst ~ R src + t."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, cd - r @ cs


def _rot_dq_cols(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(3, 4) Jacobian columns of the quadratic rotation form applied to v."""
    w, x, y, z = u
    v0, v1, v2 = v
    return 2.0 * np.array(
        [
            [y * v2 - z * v1, y * v1 + z * v2, -2 * y * v0 + x * v1 + w * v2, -2 * z * v0 - w * v1 + x * v2],
            [z * v0 - x * v2, y * v0 - 2 * x * v1 - w * v2, x * v0 + z * v2, w * v0 - 2 * z * v1 + y * v2],
            [x * v1 - y * v0, z * v0 + w * v1 - 2 * x * v2, -w * v0 + z * v1 - 2 * y * v2, x * v0 + y * v1],
        ]
    )


def _pose_to_motion(rt: np.ndarray, tt: np.ndarray, camera: Camera) -> RigidTransform:
    """Convert a world-to-camera pose into the world-space motion it implies."""
    r = camera.R.T @ rt
    t = camera.R.T @ (tt - camera.t)
    return RigidTransform(q=rot_to_quat(r), t=t)


def _camera_pose_candidates(
    points: np.ndarray, pixels: np.ndarray, camera: Camera
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Linear (R, t) world-to-camera pose candidates via control points."""
    n = points.shape[0]
    c0 = points.mean(axis=0)
    centered = points - c0
    cov = centered.T @ centered / n
    vals, vecs = np.linalg.eigh(cov)  # ascending
    vals = np.maximum(vals, 0.0)
    planar = vals[0] <= 1e-10 * max(vals[2], 1e-300)

    if planar:
        axes = [vecs[:, 2] * np.sqrt(vals[2]), vecs[:, 1] * np.sqrt(vals[1])]
    else:
        axes = [
            vecs[:, 2] * np.sqrt(vals[2]),
            vecs[:, 1] * np.sqrt(vals[1]),
            vecs[:, 0] * np.sqrt(vals[0]),
        ]
    cps = np.vstack([c0] + [c0 + a for a in axes])
    m = cps.shape[0]

    # barycentric coordinates of every point in the control points
    basis = (cps[1:] - c0).T  # (3, m-1)
    coef, *_ = np.linalg.lstsq(basis, centered.T, rcond=None)
    alphas = np.empty((n, m))
    alphas[:, 1:] = coef.T
    alphas[:, 0] = 1.0 - coef.T.sum(axis=1)

    mat = np.zeros((2 * n, 3 * m))
    u_off = camera.cx - pixels[:, 0]
    v_off = camera.cy - pixels[:, 1]
    for j in range(m):
        a = alphas[:, j]
        mat[0::2, 3 * j] = a * camera.fx
        mat[0::2, 3 * j + 2] = a * u_off
        mat[1::2, 3 * j + 1] = a * camera.fy
        mat[1::2, 3 * j + 2] = a * v_off

    _, _, vt = np.linalg.svd(mat, full_matrices=False)
    nullv = [vt[-(k + 1)].reshape(m, 3) for k in range(min(3, vt.shape[0]))]

    pair_a, pair_b = np.triu_indices(m, k=1)
    rho = np.linalg.norm(cps[pair_a] - cps[pair_b], axis=1) ** 2

    def betas_case(case: int) -> np.ndarray | None:
        dv = [nullv[k][pair_a] - nullv[k][pair_b] for k in range(case)]
        if case == 1:
            den = np.sum(np.sum(dv[0] ** 2, axis=1))
            if den <= 0.0:
                return None
            return np.array([np.sqrt(np.sum(rho) / den)])
        if case == 2:
            cols = np.stack(
                [
                    np.sum(dv[0] * dv[0], axis=1),
                    2.0 * np.sum(dv[0] * dv[1], axis=1),
                    np.sum(dv[1] * dv[1], axis=1),
                ],
                axis=1,
            )
            sol, *_ = np.linalg.lstsq(cols, rho, rcond=None)
            b1 = np.sqrt(abs(sol[0]))
            b2 = np.sqrt(abs(sol[2])) * (1.0 if sol[1] >= 0.0 else -1.0)
            return np.array([b1, b2])
        cols = np.stack(
            [
                np.sum(dv[0] * dv[0], axis=1),
                2.0 * np.sum(dv[0] * dv[1], axis=1),
                2.0 * np.sum(dv[0] * dv[2], axis=1),
                np.sum(dv[1] * dv[1], axis=1),
                2.0 * np.sum(dv[1] * dv[2], axis=1),
                np.sum(dv[2] * dv[2], axis=1),
            ],
            axis=1,
        )
        sol, *_ = np.linalg.lstsq(cols, rho, rcond=None)
        b1 = np.sqrt(abs(sol[0]))
        b2 = np.sqrt(abs(sol[3])) * (1.0 if sol[1] >= 0.0 else -1.0)
        b3 = np.sqrt(abs(sol[5])) * (1.0 if sol[2] >= 0.0 else -1.0)
        return np.array([b1, b2, b3])

    out: list[tuple[np.ndarray, np.ndarray]] = []
    max_case = 3 if (not planar and len(nullv) >= 3 and rho.size >= 6) else min(2, len(nullv))
    for case in range(1, max_case + 1):
        betas = betas_case(case)
        if betas is None or not np.all(np.isfinite(betas)):
            continue
        cps_cam = sum(betas[k] * nullv[k] for k in range(case))
        pts_cam = alphas @ cps_cam
        if np.mean(pts_cam[:, 2]) < 0.0:
            pts_cam = -pts_cam
        r, t = _kabsch(points, pts_cam)
        out.append((r, t))
    return out


def _dlt_pose(
    points: np.ndarray, pixels: np.ndarray, camera: Camera
) -> tuple[np.ndarray, np.ndarray] | None:
    """Direct linear pose from normalized rays; needs >= 6 points."""
    n = points.shape[0]
    xh = (pixels[:, 0] - camera.cx) / camera.fx
    yh = (pixels[:, 1] - camera.cy) / camera.fy
    a = np.zeros((2 * n, 12))
    ph = np.hstack([points, np.ones((n, 1))])
    a[0::2, 0:4] = ph
    a[0::2, 8:12] = -xh[:, None] * ph
    a[1::2, 4:8] = ph
    a[1::2, 8:12] = -yh[:, None] * ph
    _, _, vt = np.linalg.svd(a, full_matrices=False)
    p = vt[-1].reshape(3, 4)
    r_raw, t_raw = p[:, :3], p[:, 3]
    u, s, vtt = np.linalg.svd(r_raw)
    if np.any(s <= 0.0) or s[0] / max(s[2], 1e-300) > 1e6:
        return None
    scale = s.mean()
    d = np.sign(np.linalg.det(u @ vtt))
    r = u @ np.diag([1.0, 1.0, d]) @ vtt
    t = t_raw * d / scale
    depths = points @ r.T + t
    if np.mean(depths[:, 2]) < 0.0:
        r = u @ np.diag([-1.0, -1.0, -d]) @ vtt
        t = -t
    return r, t


def _refine(
    points: np.ndarray,
    pixels: np.ndarray,
    camera: Camera,
    transform: RigidTransform,
    iters: int = 20,
) -> tuple[RigidTransform, float]:
    """Damped Gauss-Newton on pixel residuals over (quaternion, translation)."""
    n = points.shape[0]
    q = transform.q.copy()
    t = transform.t.copy()

    def residuals(qv: np.ndarray, tv: np.ndarray) -> np.ndarray:
        r = quat_to_rot(qv)
        pc = (points @ r.T + tv) @ camera.R.T + camera.t
        z = np.maximum(pc[:, 2], _DEPTH_EPS)
        res = np.empty(2 * n)
        res[0::2] = camera.fx * pc[:, 0] / z + camera.cx - pixels[:, 0]
        res[1::2] = camera.fy * pc[:, 1] / z + camera.cy - pixels[:, 1]
        return res

    res = residuals(q, t)
    cost = float(res @ res)
    lam = 1e-3
    for _ in range(iters):
        qn = np.linalg.norm(q)
        u = q / qn
        nq = (np.eye(4) - np.outer(u, u)) / qn
        r = quat_to_rot(q)
        moved = points @ r.T + t
        pc = moved @ camera.R.T + camera.t
        z = np.maximum(pc[:, 2], _DEPTH_EPS)
        jac = np.empty((2 * n, 7))
        for i in range(n):
            dpix = np.array(
                [
                    [camera.fx / z[i], 0.0, -camera.fx * pc[i, 0] / z[i] ** 2],
                    [0.0, camera.fy / z[i], -camera.fy * pc[i, 1] / z[i] ** 2],
                ]
            )
            dcam = dpix @ camera.R
            jac[2 * i : 2 * i + 2, 0:4] = dcam @ (_rot_dq_cols(u, points[i]) @ nq)
            jac[2 * i : 2 * i + 2, 4:7] = dcam
        jtj = jac.T @ jac
        jtr = jac.T @ res
        improved = False
        for _ in range(6):
            try:
                delta = np.linalg.solve(
                    jtj + lam * np.diag(np.diag(jtj)) + 1e-12 * np.eye(7), -jtr
                )
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            q_new = q + delta[0:4]
            t_new = t + delta[4:7]
            if np.linalg.norm(q_new) < 1e-12:
                lam *= 10.0
                continue
            res_new = residuals(q_new, t_new)
            cost_new = float(res_new @ res_new)
            if cost_new < cost:
                q, t, res, cost = q_new, t_new, res_new, cost_new
                lam = max(lam / 3.0, 1e-12)
                improved = True
                break
            lam *= 10.0
        if not improved or cost < 1e-24:
            break
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return RigidTransform(q=q, t=t), cost


def pnp(points: np.ndarray, pixels: np.ndarray, camera: Camera) -> RigidTransform:
    """Estimate the rigid motion that reprojects points onto pixels.

    Needs at least 4 correspondences; raises DegenerateConfigurationError
    when the points are (near-)collinear.  On clean input the reprojection
    residual is far below a hundredth of a pixel.
    """
    points = np.asarray(points, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.float64)
    n = points.shape[0]
    if n < _MIN_POINTS:
        raise InsufficientDataError(
            f"pose estimation needs at least {_MIN_POINTS} correspondences, got {n}"
        )
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] <= 1e-10 * max(sv[0], 1e-300):
        raise DegenerateConfigurationError(
            "correspondence points are collinear; the motion is not determined"
        )

    poses = _camera_pose_candidates(points, pixels, camera)
    if n >= 6:
        dlt = _dlt_pose(points, pixels, camera)
        if dlt is not None:
            poses.append(dlt)

    candidates = [_pose_to_motion(r, t, camera) for r, t in poses]
    candidates.append(RigidTransform.identity())

    best: tuple[float, RigidTransform] | None = None
    for cand in candidates:
        refined, cost = _refine(points, pixels, camera, cand)
        if not np.isfinite(cost):
            continue
        if best is None or cost < best[0]:
            best = (cost, refined)
    if best is None:
        raise DegenerateConfigurationError("every pose candidate diverged")
    return best[1]


def ransac_pnp(
    points: np.ndarray,
    pixels: np.ndarray,
    camera: Camera,
    threshold_px: float = 2.0,
    iterations: int = 512,
    seed: int = 0,
    confidence: float = 0.999,
) -> PnPResult:
    """Outlier-robust motion estimation with a seeded consensus loop.

    Correspondences are put into a canonical order before sampling, so the
    result depends only on the set and the seed, not on input order.  The
    final transform is re-estimated on the winning inliers and the mask is
    recomputed from it.  Raises NoConsensusError when no hypothesis reaches
    4 inliers.
    """
    points = np.asarray(points, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.float64)
    n = points.shape[0]
    if n < _MIN_POINTS:
        raise InsufficientDataError(
            f"consensus estimation needs at least {_MIN_POINTS} correspondences, got {n}"
        )
    order = np.lexsort(
        (pixels[:, 1], pixels[:, 0], points[:, 2], points[:, 1], points[:, 0])
    )
    pts, pix = points[order], pixels[order]

    rng = np.random.default_rng(seed)
    best_count = 0
    best_err = np.inf
    best_mask: np.ndarray | None = None
    max_iter = iterations
    it = 0
    while it < max_iter:
        it += 1
        sample = rng.choice(n, _MIN_POINTS, replace=False)
        try:
            hyp = pnp(pts[sample], pix[sample], camera)
        except DegenerateConfigurationError:
            continue
        err = reprojection_errors(hyp, pts, pix, camera)
        mask = err < threshold_px
        count = int(np.count_nonzero(mask))
        if count > best_count or (
            count == best_count and count and float(err[mask].mean()) < best_err
        ):
            best_count = count
            best_mask = mask
            best_err = float(err[mask].mean()) if count else np.inf
            if count >= _MIN_POINTS:
                w = count / n
                denom = np.log(max(1.0 - w**_MIN_POINTS, 1e-12))
                if denom < 0.0:
                    needed = int(np.ceil(np.log(1.0 - confidence) / denom))
                    max_iter = min(iterations, max(needed, it))
    if best_mask is None or best_count < _MIN_POINTS:
        raise NoConsensusError(
            f"no motion hypothesis reached {_MIN_POINTS} inliers "
            f"({n} correspondences, threshold {threshold_px}px)"
        )

    refined = pnp(pts[best_mask], pix[best_mask], camera)
    err = reprojection_errors(refined, pts, pix, camera)
    final_mask = err < threshold_px
    if int(np.count_nonzero(final_mask)) < _MIN_POINTS:
        final_mask = best_mask
        refined = pnp(pts[best_mask], pix[best_mask], camera)
        err = reprojection_errors(refined, pts, pix, camera)
    mean_err = float(err[final_mask].mean())

    mask_orig = np.zeros(n, dtype=bool)
    mask_orig[order] = final_mask
    return PnPResult(
        transform=refined,
        inlier_mask=mask_orig,
        mean_error_px=mean_err,
        n_iterations=it,
    )
