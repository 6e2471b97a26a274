"""Pure-numpy implementations of the hot kernels.

This is the fallback backend (and the reference the compiled extension is
tested against).  All functions are pure: inputs are never mutated, and the
compiled backend in ``_fast.pyx`` implements the exact same contracts.

Conventions: quaternions (w, x, y, z); rotations act as R(q/|q|) so gradients
chain through the normalization; index arrays are int64, floats are float64.
"""

from __future__ import annotations

import numpy as np


def _rot_from_unit(u: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions, (..., 4) -> (..., 3, 3)."""
    w, x, y, z = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    R = np.empty(u.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def _rot_dq_vjp(u: np.ndarray, v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of the quadratic rotation form.

    Returns (..., 4) with component m equal to g . (dR/du_m @ v), where R is
    the quadratic quaternion-to-matrix form evaluated at u (assumed unit; the
    normalization Jacobian is applied by callers).
    """
    w, x, y, z = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    v0, v1, v2 = v[..., 0], v[..., 1], v[..., 2]
    g0, g1, g2 = g[..., 0], g[..., 1], g[..., 2]
    cw = (y * v2 - z * v1) * g0 + (z * v0 - x * v2) * g1 + (x * v1 - y * v0) * g2
    cx = (
        (y * v1 + z * v2) * g0
        + (y * v0 - 2.0 * x * v1 - w * v2) * g1
        + (z * v0 + w * v1 - 2.0 * x * v2) * g2
    )
    cy = (
        (-2.0 * y * v0 + x * v1 + w * v2) * g0
        + (x * v0 + z * v2) * g1
        + (-w * v0 + z * v1 - 2.0 * y * v2) * g2
    )
    cz = (
        (-2.0 * z * v0 - w * v1 + x * v2) * g0
        + (w * v0 - 2.0 * z * v1 + y * v2) * g1
        + (x * v0 + y * v1) * g2
    )
    return 2.0 * np.stack([cw, cx, cy, cz], axis=-1)


def _norm_chain(u: np.ndarray, norm: np.ndarray, gu: np.ndarray) -> np.ndarray:
    """Chain a unit-quaternion gradient back through q -> q/|q|."""
    return (gu - u * np.sum(u * gu, axis=-1, keepdims=True)) / norm[..., None]


def _hamilton(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1[..., 0], q1[..., 1], q1[..., 2], q1[..., 3]
    w2, x2, y2, z2 = q2[..., 0], q2[..., 1], q2[..., 2], q2[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def blend_forward(mu, q, apos, aquat, atrans, nbr, w):
    """Anchor-blended deformation of every Gaussian.

    mu (N,3), q (N,4) unit, apos (K,3), aquat (K,4) raw, atrans (K,3),
    nbr (N,J) anchor ids, w (N,J) convex weights.

    Returns (mu_p (N,3), q_p (N,4), bnorm (N,)): deformed centers, composed
    rotations, and the pre-normalization blend norms so the caller can
    detect antipodal cancellation.  The sign-aligned normalized weighted
    quaternion sum premultiplies each Gaussian rotation (world-frame
    update), so a shared rigid anchor motion rotates every local frame
    consistently.
    """
    an = np.linalg.norm(aquat, axis=1)
    u = aquat / an[:, None]
    R = _rot_from_unit(u)
    n, j = nbr.shape
    # displacement form mu + sum w*(R v - v + t): an identity graph maps every
    # center to itself exactly, not merely to rounding error
    mu_p = mu.copy()
    b = np.zeros((n, 4))
    first = nbr[:, 0]
    for s in range(j):
        k = nbr[:, s]
        v = mu - apos[k]
        rv = np.einsum("nab,nb->na", R[k], v)
        mu_p += w[:, s, None] * (rv - v + atrans[k])
        sign = np.where(np.sum(aquat[k] * aquat[first], axis=1) < 0.0, -1.0, 1.0)
        b += (w[:, s] * sign)[:, None] * aquat[k]
    bnorm = np.linalg.norm(b, axis=1)
    bhat = b / np.maximum(bnorm, 1e-300)[:, None]
    # world-frame composition: the blended rotation premultiplies, so a
    # shared anchor motion cancels exactly in the rigidity terms
    q_p = _hamilton(bhat, q)
    return mu_p, q_p, bnorm


def blend_backward(mu, q, apos, aquat, atrans, nbr, w, gmu_p, gq_p):
    """Backpropagate (dL/dmu_p, dL/dq_p) to (dL/daquat, dL/datrans)."""
    an = np.linalg.norm(aquat, axis=1)
    u = aquat / an[:, None]
    n, j = nbr.shape
    kk = apos.shape[0]
    gaq = np.zeros((kk, 4))
    gat = np.zeros((kk, 3))
    first = nbr[:, 0]

    # rotation path: q_p = bhat (x) q, bhat = b/|b|, b = sum w*s*aquat
    b = np.zeros((n, 4))
    signs = np.empty((n, j))
    for s in range(j):
        k = nbr[:, s]
        signs[:, s] = np.where(np.sum(aquat[k] * aquat[first], axis=1) < 0.0, -1.0, 1.0)
        b += (w[:, s] * signs[:, s])[:, None] * aquat[k]
    bnorm = np.maximum(np.linalg.norm(b, axis=1), 1e-300)
    bhat = b / bnorm[:, None]
    qc = q * np.array([1.0, -1.0, -1.0, -1.0])
    gbhat = _hamilton(gq_p, qc)  # R(q)^T gq_p = gq_p (x) conj(q)
    gb = _norm_chain(bhat, bnorm, gbhat)

    for s in range(j):
        k = nbr[:, s]
        # translation and rotated-offset position path
        np.add.at(gat, k, w[:, s, None] * gmu_p)
        v = mu - apos[k]
        gu = _rot_dq_vjp(u[k], v, gmu_p) * w[:, s, None]
        np.add.at(gaq, k, _norm_chain(u[k], an[k], gu))
        # quaternion blend path
        np.add.at(gaq, k, (w[:, s] * signs[:, s])[:, None] * gb)
    return gaq, gat


def deform_loss_grad(mu_p, ids, target, conf, fx, fy, cx, cy, camR, camt):
    """Confidence-weighted squared reprojection loss toward target pixels.

    Returns (loss, dL/dmu_p (N,3), n_skipped) where matches whose deformed
    center falls behind the camera are skipped and counted.
    """
    gmu = np.zeros_like(mu_p)
    if len(ids) == 0:
        return 0.0, gmu, 0
    pc = mu_p[ids] @ camR.T + camt
    z = pc[:, 2]
    ok = z > 1e-12
    n_skipped = int(np.count_nonzero(~ok))
    if not np.any(ok):
        return 0.0, gmu, n_skipped
    pc, zz = pc[ok], z[ok]
    rid, tgt, cf = ids[ok], target[ok], conf[ok]
    px = np.stack([fx * pc[:, 0] / zz + cx, fy * pc[:, 1] / zz + cy], axis=1)
    r = px - tgt
    loss = float(np.sum(cf * np.sum(r * r, axis=1)))
    gpc = np.stack(
        [
            fx * r[:, 0] / zz,
            fy * r[:, 1] / zz,
            -(fx * r[:, 0] * pc[:, 0] + fy * r[:, 1] * pc[:, 1]) / (zz * zz),
        ],
        axis=1,
    )
    np.add.at(gmu, rid, (2.0 * cf)[:, None] * (gpc @ camR))
    return loss, gmu, n_skipped


def group_loss_grad(mu0, rot0, mu_p, q_p, pair_i, pair_j, pair_w):
    """Pairwise local-frame rigidity loss over ordered group pairs.

    Each pair contributes pair_w * ||rot0_i^T (mu0_i - mu0_j) -
    R(q_p_i)^T (mu_p_i - mu_p_j)||^2.  Returns (loss, dL/dmu_p, dL/dq_p).
    """
    gmu = np.zeros_like(mu_p)
    gq = np.zeros_like(q_p)
    if len(pair_i) == 0:
        return 0.0, gmu, gq
    i, j = pair_i, pair_j
    d = mu0[i] - mu0[j]
    dp = mu_p[i] - mu_p[j]
    qi = q_p[i]
    qn = np.maximum(np.linalg.norm(qi, axis=1), 1e-300)
    u = qi / qn[:, None]
    Rp = _rot_from_unit(u)
    e = np.einsum("pba,pb->pa", rot0[i], d) - np.einsum("pba,pb->pa", Rp, dp)
    loss = float(np.sum(pair_w * np.sum(e * e, axis=1)))
    gm = (-2.0 * pair_w)[:, None] * np.einsum("pab,pb->pa", Rp, e)
    np.add.at(gmu, i, gm)
    np.add.at(gmu, j, -gm)
    gu = (-2.0 * pair_w)[:, None] * _rot_dq_vjp(u, e, dp)
    np.add.at(gq, i, _norm_chain(u, qn, gu))
    return loss, gmu, gq


def arap_loss_grad(apos, aquat, atrans, edge_i, edge_k):
    """Anchor-graph as-rigid-as-possible loss over directed edges.

    Each edge contributes ||R(aquat_i)(a_i - a_k) - (a_i' - a_k')||^2 with
    a' = a + t.  Returns (loss, dL/daquat, dL/datrans).
    """
    gaq = np.zeros_like(aquat)
    gat = np.zeros_like(atrans)
    if len(edge_i) == 0:
        return 0.0, gaq, gat
    i, k = edge_i, edge_k
    an = np.maximum(np.linalg.norm(aquat[i], axis=1), 1e-300)
    u = aquat[i] / an[:, None]
    R = _rot_from_unit(u)
    d = apos[i] - apos[k]
    e = np.einsum("eab,eb->ea", R, d) - (d + atrans[i] - atrans[k])
    loss = float(np.sum(e * e))
    np.add.at(gat, i, -2.0 * e)
    np.add.at(gat, k, 2.0 * e)
    gu = 2.0 * _rot_dq_vjp(u, d, e)
    np.add.at(gaq, i, _norm_chain(u, an, gu))
    return loss, gaq, gat


def rigidity_scores(mu0, rot0, mu_p, rot_p, cand, members):
    """Mean local-frame displacement mismatch of candidates against a group.

    score(c) = mean over members m of ||rot0_c^T (mu0_c - mu0_m) -
    rot_p_c^T (mu_p_c - mu_p_m)||^2.  Returns (C,) scores, chunked to bound
    memory.
    """
    cand = np.asarray(cand, dtype=np.int64)
    members = np.asarray(members, dtype=np.int64)
    out = np.empty(len(cand))
    if len(members) == 0:
        out.fill(0.0)
        return out
    mu0_m, mup_m = mu0[members], mu_p[members]
    for a in range(0, len(cand), 256):
        c = cand[a : a + 256]
        d = mu0[c][:, None, :] - mu0_m[None, :, :]
        dp = mu_p[c][:, None, :] - mup_m[None, :, :]
        t = np.einsum("cba,cmb->cma", rot0[c], d) - np.einsum("cba,cmb->cma", rot_p[c], dp)
        out[a : a + 256] = np.mean(np.sum(t * t, axis=2), axis=1)
    return out
